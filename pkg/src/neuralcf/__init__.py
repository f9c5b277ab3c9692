"""Learned compress-and-forward relaying for the scalar Gaussian relay setup.

A source broadcasts modulation symbols past two independent AWGN legs to
a relay and a destination; the relay quantizes its observation into one
of K indices and ships it over a rate-limited noiseless link; the
destination demodulates from its own observation plus the index. The
package trains the quantizer, an entropy model for the index stream, and
the demodulator jointly against a rate/detection Lagrangian, and
compares the result to classic no-relay / perfect-relay / Gaussian-input
compress-and-forward baselines.
"""

from .channel import Batch, ChannelParams, Constellation, make_constellation, sample_batch, sigma_from_snr
from .errors import ArtifactError, ConfigError, DivergenceError
from .evaluation import (
    BinningReport,
    LookUpTable,
    TradeoffPoint,
    c_cf,
    detect_binning,
    evaluate,
    extract_lut,
    mi_monte_carlo,
    mi_quadrature,
    ser_closed_form,
)
from .models import ModelBundle, build_bundle, encode_hard, encode_soft, entropy_logprob
from .relaxation import TemperatureSchedule, concrete_log_density, concrete_sample, gumbel_max
from .training import TrainConfig, TrainReport, derive_seed, loss_batch, sweep_lambda, train

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "Batch",
    "BinningReport",
    "ChannelParams",
    "ConfigError",
    "Constellation",
    "DivergenceError",
    "LookUpTable",
    "ModelBundle",
    "TemperatureSchedule",
    "TradeoffPoint",
    "TrainConfig",
    "TrainReport",
    "__version__",
    "build_bundle",
    "c_cf",
    "concrete_log_density",
    "concrete_sample",
    "detect_binning",
    "derive_seed",
    "encode_hard",
    "encode_soft",
    "entropy_logprob",
    "evaluate",
    "extract_lut",
    "gumbel_max",
    "loss_batch",
    "make_constellation",
    "mi_monte_carlo",
    "mi_quadrature",
    "sample_batch",
    "ser_closed_form",
    "sigma_from_snr",
    "sweep_lambda",
    "train",
]

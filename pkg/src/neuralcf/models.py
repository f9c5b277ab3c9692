"""The three learned relay schemes: encoder, entropy models, demodulators.

A bundle wires together:

  * an encoder network mapping the relay observation y_r to K logits,
    whose argmax is the forwarded index (deterministic quantizer);
  * an entropy model for those indices -- either K free logits (marginal
    scheme, backed by a classic entropy coder) or a network conditioned on
    the destination observation y_d (conditional scheme, standing in for a
    Slepian-Wolf coder);
  * a demodulator network mapping (y_d, one-hot index) to a posterior over
    the transmitted symbols. The point-to-point scheme additionally keeps
    the side-information-free demodulator used during its pre-training
    stage.

Training evaluates the soft paths (Concrete-relaxed indices, expected
code length under the discrete entropy model at the relaxed point);
deployment uses hard argmax indices and discrete log-probabilities. The
encoder only ever sees y_r, and the entropy/demodulator networks only see
(y_d, U); there is no structural path from y_d into the encoder.

Network inputs are scaled by the corresponding leg's noise std, which
keeps optimization well-conditioned across SNRs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffnet as dn
from . import relaxation as rx
from .channel import ChannelParams, Constellation
from .errors import ConfigError

__all__ = [
    "SCHEMES",
    "EncoderModel",
    "EntropyModel",
    "DemodulatorModel",
    "ModelBundle",
    "build_bundle",
    "one_hot",
    "encode_logits",
    "encode_hard",
    "encode_soft",
    "entropy_logprob",
    "demod_posterior",
    "demod_hard",
]

SCHEMES = ("marginal", "conditional", "p2p")

LN2 = float(np.log(2.0))


@dataclass
class EncoderModel:
    """Deterministic quantizer of the relay observation: y_r -> K logits."""

    net: dn.Network
    input_scale: float

    @property
    def codebook_size(self):
        return self.net.out_width


@dataclass
class EntropyModel:
    """Index distribution model: free logits, or a network over y_d."""

    kind: str  # "marginal" | "conditional"
    logits: np.ndarray | None = None
    net: dn.Network | None = None
    input_scale: float = 1.0

    def __post_init__(self):
        if self.kind == "marginal":
            if self.logits is None or self.net is not None:
                raise ConfigError("marginal entropy model carries free logits only")
        elif self.kind == "conditional":
            if self.net is None or self.logits is not None:
                raise ConfigError("conditional entropy model carries a network only")
        else:
            raise ConfigError(f"unknown entropy model kind {self.kind!r}")


@dataclass
class DemodulatorModel:
    """Posterior over symbols given (y_d, one-hot index), or index alone."""

    net: dn.Network
    input_scale: float
    takes_y_d: bool = True


@dataclass
class ModelBundle:
    """One trained (or initialized) scheme plus its channel context."""

    scheme: str
    constellation: Constellation
    channel: ChannelParams
    encoder: EncoderModel
    entropy: EntropyModel
    demod: DemodulatorModel
    pre_demod: DemodulatorModel | None = None
    hidden_units: int = field(default=100)

    @property
    def codebook_size(self):
        return self.encoder.codebook_size


def build_bundle(scheme, constellation, channel, rng, codebook_size=32, hidden=100, slope=0.01):
    """Fresh randomly initialized bundle for one scheme."""
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    k = int(codebook_size)
    m = constellation.order
    enc = EncoderModel(
        net=dn.mlp(1, k, hidden=hidden, rng=rng, slope=slope),
        input_scale=1.0 / channel.sigma_r,
    )
    if scheme == "conditional":
        entropy = EntropyModel(
            kind="conditional",
            net=dn.mlp(1, k, hidden=hidden, rng=rng, slope=slope),
            input_scale=1.0 / channel.sigma_d,
        )
    else:
        entropy = EntropyModel(kind="marginal", logits=np.zeros(k))
    demod = DemodulatorModel(
        net=dn.mlp(1 + k, m, hidden=hidden, rng=rng, slope=slope),
        input_scale=1.0 / channel.sigma_d,
    )
    pre = None
    if scheme == "p2p":
        pre = DemodulatorModel(
            net=dn.mlp(k, m, hidden=hidden, rng=rng, slope=slope),
            input_scale=1.0,
            takes_y_d=False,
        )
    return ModelBundle(
        scheme=scheme,
        constellation=constellation,
        channel=channel,
        encoder=enc,
        entropy=entropy,
        demod=demod,
        pre_demod=pre,
        hidden_units=hidden,
    )


def one_hot(indices, k):
    indices = np.atleast_1d(np.asarray(indices, dtype=np.intp))
    out = np.zeros((len(indices), k))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def _column(values, scale=1.0):
    """Shape scalars or 1-D arrays into the (n, 1) network input column."""
    if isinstance(values, dn.Tensor):
        return dn.mul(values, scale)
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    return arr.reshape(-1, 1) * scale


def encode_logits(enc, y_r, leaves=None):
    """Encoder logits for observations y_r (scalar, 1-D, or Tensor column)."""
    return enc.net(_column(y_r, enc.input_scale), leaves=leaves, prefix="enc.")


def encode_hard(enc, y_r):
    """Deployment-path index: argmax over the K logits, ties to lowest."""
    scalar = np.ndim(y_r) == 0
    idx = np.argmax(encode_logits(enc, y_r), axis=-1)
    return int(idx[0]) if scalar else idx


def encode_soft(enc, y_r, temperature, rng=None, noise=None, leaves=None):
    """Training-path draw: Concrete relaxation of the encoder output.

    With `leaves` (gradient-tracking parameter tensors) the returned
    sample's probs are a Tensor, differentiable in the encoder parameters
    for the fixed noise draw.
    """
    logits = encode_logits(enc, y_r, leaves=leaves)
    if noise is None:
        noise = rx.gumbel_noise(rng, np.shape(dn._data(logits)))
    return rx.ConcreteSample(rx.relax(logits, noise, temperature), float(temperature))


def _entropy_logits(em, y_d, leaves=None):
    if em.kind == "marginal":
        if leaves is not None and "ent.logits" in leaves:
            return leaves["ent.logits"]
        return em.logits
    if y_d is None:
        raise ValueError("conditional entropy model requires y_d")
    return em.net(_column(y_d, em.input_scale), leaves=leaves, prefix="ent.")


def entropy_logprob(em, u, y_d=None, temperature=None, leaves=None):
    """Log2-probability the entropy model assigns to the relayed index.

    Index input evaluates the discrete pmf softmax(logits)[u] -- the
    deployment path, whose mean negation is the operational compression
    rate. A relaxed input (ConcreteSample or Tensor on the simplex)
    evaluates the same pmf log-linearly at the soft point, sum_k u_k
    log2 P_k -- the expected code length under the model, recovering the
    deployment value exactly as the relaxation hardens. This keeps the
    training rate term anchored to the discrete code lengths the index
    stream actually costs; fitting the model as a Concrete density on the
    simplex instead goes blind once the encoder sharpens, because near a
    vertex the density depends on the winning index only through a
    bounded term and the induced pmf never concentrates. `temperature`
    is accepted for signature stability but the pmf evaluation does not
    need it. Marginal models ignore y_d; conditional models require it.
    """
    logits = _entropy_logits(em, y_d, leaves=leaves)
    if isinstance(u, rx.ConcreteSample) or isinstance(u, dn.Tensor):
        point = u.probs if isinstance(u, rx.ConcreteSample) else u
        log_p = dn.mul(dn.log_softmax(logits), 1.0 / LN2)
        return dn.sum_(dn.mul(point, log_p), axis=-1)
    u = np.asarray(u, dtype=np.intp)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    log_p = dn.log_softmax(dn._data(logits)) / LN2
    if log_p.ndim == 1:
        picked = log_p[u]
    else:
        picked = np.take_along_axis(log_p, u[:, None], axis=1)[:, 0]
    return float(picked[0]) if scalar else picked


def _demod_logits(dm, y_d, u, leaves=None):
    if dm.takes_y_d:
        inp = dn.concat([_column(y_d, dm.input_scale), u], axis=1)
        return dm.net(inp, leaves=leaves, prefix="dem.")
    return dm.net(u, leaves=leaves, prefix="pre.")


def demod_posterior(dm, y_d, u_onehot, leaves=None):
    """Posterior over symbol indices; rows sum to one."""
    return dn.softmax(_demod_logits(dm, y_d, u_onehot, leaves=leaves))


def demod_hard(dm, y_d, u_onehot):
    """Hard symbol decision: argmax of the posterior, ties to lowest."""
    scalar = np.ndim(y_d) == 0
    post = dn._data(demod_posterior(dm, np.atleast_1d(y_d), np.atleast_2d(u_onehot)))
    idx = np.argmax(post, axis=-1)
    return int(idx[0]) if scalar else idx


def bundle_param_arrays(bundle, parts=("enc", "ent", "dem", "pre")):
    """Named trainable arrays of the requested bundle parts (shared refs)."""
    out = {}
    if "enc" in parts:
        out.update(bundle.encoder.net.param_arrays("enc."))
    if "ent" in parts:
        if bundle.entropy.kind == "marginal":
            out["ent.logits"] = bundle.entropy.logits
        else:
            out.update(bundle.entropy.net.param_arrays("ent."))
    if "dem" in parts:
        out.update(bundle.demod.net.param_arrays("dem."))
    if "pre" in parts and bundle.pre_demod is not None:
        out.update(bundle.pre_demod.net.param_arrays("pre."))
    return out

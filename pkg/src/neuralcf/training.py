"""End-to-end training of the relay schemes.

The per-batch objective is the rate/detection Lagrangian

    L = R + lam * D

where R is the mean code length (in bits) the entropy model assigns to
the relaxed relay index, and D is the mean cross-entropy
(in bits) of the demodulator posterior at the true symbol. Both terms are
differentiable through the pathwise Concrete relaxation, so one adaptive
optimizer updates all parameters jointly from fresh channel samples each
step; the channel itself is the data source.

The point-to-point scheme trains in two stages: first jointly with a
side-information-free demodulator (so the encoder cannot exploit y_d),
then -- with the encoder and entropy model frozen -- the deployment
demodulator is fit against hard relayed indices.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import diffnet as dn
from . import models as md
from . import relaxation as rx
from .channel import ChannelParams, make_constellation, sample_batch
from .errors import ConfigError, DivergenceError

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainReport",
    "LossTerms",
    "loss_batch",
    "train",
    "sweep_lambda",
    "derive_seed",
    "eval_seed",
]

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class TrainConfig:
    scheme: str = "marginal"
    modulation: str = "PAM4"
    snr_db: float = 13.0
    lam: float = 1.0
    epochs: int = 500
    steps_per_epoch: int = 64
    batch_size: int = 1024
    seed: int = 0
    codebook_size: int = 32
    hidden_units: int = 100
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    leaky_slope: float = 0.01
    temperature: rx.TemperatureSchedule | None = None

    def validate(self):
        if self.scheme not in md.SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {md.SCHEMES}")
        if self.lam <= 0:
            raise ConfigError("lambda must be > 0")
        for name in ("epochs", "steps_per_epoch", "batch_size", "codebook_size", "hidden_units"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be a positive count")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        return self

    def schedule(self):
        """Temperature schedule; by default anneals to the floor at 80% of the run."""
        if self.temperature is not None:
            return self.temperature
        return rx.schedule_for(self.epochs)


@dataclass(frozen=True)
class EpochStats:
    loss: float
    rate_bits: float
    distortion_bits: float


@dataclass
class TrainReport:
    config: TrainConfig
    history: list[EpochStats]
    bundle: md.ModelBundle
    pretrain_history: list[EpochStats] | None = None


@dataclass
class LossTerms:
    """Graph nodes of one loss evaluation; floats via .values()."""

    loss: dn.Tensor
    rate: dn.Tensor
    distortion: dn.Tensor

    def values(self):
        return (
            float(dn._data(self.loss)),
            float(dn._data(self.rate)),
            float(dn._data(self.distortion)),
        )


def loss_batch(bundle, batch, lam, temperature, rng, leaves=None, use_pre=False, noise=None):
    """Rate + lam * distortion on one batch, in bits.

    With `leaves` the returned terms are graph nodes differentiable in the
    wrapped parameters; `use_pre` routes the distortion term through the
    side-information-free demodulator (p2p stage 1). A fixed `noise`
    array pins the relaxation draw, which makes the loss a deterministic
    function of the parameters (finite-difference checks rely on this).
    """
    if batch.n == 0:
        raise ValueError("loss_batch requires a nonempty batch")
    if noise is None:
        noise = rx.gumbel_noise(rng, (batch.n, bundle.codebook_size))
    u = md.encode_soft(bundle.encoder, batch.y_r, temperature, noise=noise, leaves=leaves)
    log2_q = md.entropy_logprob(bundle.entropy, u, y_d=batch.y_d, leaves=leaves)
    rate = dn.neg(dn.mean_(log2_q))
    dm = bundle.pre_demod if use_pre else bundle.demod
    logits = md._demod_logits(dm, batch.y_d, u.probs, leaves=leaves)
    picked = dn.take_rows(dn.log_softmax(logits), batch.w)
    dist = dn.mul(dn.neg(dn.mean_(picked)), 1.0 / LN2)
    loss = dn.add(rate, dn.mul(dist, lam))
    return LossTerms(loss=loss, rate=rate, distortion=dist)


def _demod_only_loss(bundle, batch, leaves):
    """Deployment-matched stage-2 loss: hard one-hot index into the demodulator."""
    u_hard = md.encode_hard(bundle.encoder, batch.y_r)
    onehot = md.one_hot(u_hard, bundle.codebook_size)
    logits = md._demod_logits(bundle.demod, batch.y_d, onehot, leaves=leaves)
    picked = dn.take_rows(dn.log_softmax(logits), batch.w)
    dist = dn.mul(dn.neg(dn.mean_(picked)), 1.0 / LN2)
    rate = -float(np.mean(md.entropy_logprob(bundle.entropy, u_hard, y_d=batch.y_d)))
    return dist, rate


def _run_stage(bundle, config, parts, data_rng, stage):
    """One optimization stage; returns per-epoch stats."""
    arrays = md.bundle_param_arrays(bundle, parts)
    opt = dn.Adam(
        arrays,
        step_size=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )
    schedule = config.schedule()
    history = []
    for epoch in range(config.epochs):
        tau = rx.temperature_at(epoch, schedule)
        acc = np.zeros(3)
        for _ in range(config.steps_per_epoch):
            batch = sample_batch(bundle.constellation, bundle.channel, config.batch_size, data_rng)
            leaves = dn.leaf_map(arrays)
            if stage == "demod":
                dist, rate = _demod_only_loss(bundle, batch, leaves)
                terms = LossTerms(
                    loss=dn.add(rate, dn.mul(dist, config.lam)), rate=dn.Tensor(rate), distortion=dist
                )
            else:
                terms = loss_batch(
                    bundle, batch, config.lam, tau, data_rng, leaves=leaves, use_pre=(stage == "pre")
                )
            values = terms.values()
            if not all(math.isfinite(v) for v in values):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch} (loss={values[0]!r}); "
                    "lower the learning rate or lambda"
                )
            grads = dn.gradient(terms.loss, leaves)
            opt.step(grads)
            acc += values
        acc /= config.steps_per_epoch
        history.append(EpochStats(loss=acc[0], rate_bits=acc[1], distortion_bits=acc[2]))
    return history


def train(config):
    """Train one scheme per its config; deterministic in (config, seed)."""
    config.validate()
    constellation = make_constellation(config.modulation)
    channel = ChannelParams.from_snr(constellation, config.snr_db)
    init_ss, data_ss, stage2_ss = np.random.SeedSequence(config.seed).spawn(3)
    bundle = md.build_bundle(
        config.scheme,
        constellation,
        channel,
        np.random.default_rng(init_ss),
        codebook_size=config.codebook_size,
        hidden=config.hidden_units,
        slope=config.leaky_slope,
    )
    if config.scheme == "p2p":
        pretrain = _run_stage(bundle, config, ("enc", "ent", "pre"), np.random.default_rng(data_ss), "pre")
        history = _run_stage(bundle, config, ("dem",), np.random.default_rng(stage2_ss), "demod")
        return TrainReport(config=config, history=history, bundle=bundle, pretrain_history=pretrain)
    history = _run_stage(bundle, config, ("enc", "ent", "dem"), np.random.default_rng(data_ss), "joint")
    return TrainReport(config=config, history=history, bundle=bundle)


def derive_seed(master_seed, lam):
    """Per-run seed from the master seed and the lambda value itself.

    Hashing the value (not the grid position) keeps duplicate lambdas
    bit-identical while decorrelating distinct ones.
    """
    lam_bits = int(np.float64(lam).view(np.uint64))
    return int(np.random.SeedSequence([int(master_seed), lam_bits]).generate_state(1)[0])


def eval_seed(run_seed):
    """Held-out test stream for a run, disjoint from its training stream."""
    return int(np.random.SeedSequence([int(run_seed), 0x7E57]).generate_state(1)[0])


def _sweep_one(args):
    config, lam, n_test = args
    from . import evaluation  # deferred: evaluation imports this module

    cfg = replace(config, lam=float(lam), seed=derive_seed(config.seed, lam))
    report = train(cfg)
    point = evaluation.evaluate(report.bundle, n_test, eval_seed(cfg.seed), lam=float(lam))
    return report, point


def sweep_lambda(base_config, lambdas, n_test=100_000, jobs=1):
    """One independent training per lambda; evaluation on held-out samples.

    Entries are returned in input order regardless of `jobs`, so results
    are reproducible under parallel execution.
    """
    if len(lambdas) == 0:
        raise ConfigError("lambda sweep requires a nonempty list")
    tasks = [(base_config, lam, n_test) for lam in lambdas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]

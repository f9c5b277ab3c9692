"""Discrete sampling and its continuous relaxation.

Categorical draws use the Gumbel-max trick; training-time draws use the
Concrete (relaxed one-hot) distribution, whose samples are differentiable
in the logits for a fixed noise realization. The Concrete log-density
scores points on the simplex under a Concrete model with given logits and
temperature.

Both samplers accept an explicit `noise` array so hard and relaxed draws
can be coupled: the argmax of a Concrete sample equals the Gumbel-max
index under the same noise, for every temperature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diffnet as dn

__all__ = [
    "ConcreteSample",
    "TemperatureSchedule",
    "DEFAULT_SCHEDULE",
    "schedule_for",
    "temperature_at",
    "gumbel_noise",
    "gumbel_max",
    "concrete_sample",
    "relax",
    "concrete_log_density",
]

# relaxed coordinates are clamped to [PROB_FLOOR, 1] before any log
PROB_FLOOR = 1e-12

SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class ConcreteSample:
    """A relaxed one-hot draw: point on the simplex plus its temperature."""

    probs: np.ndarray
    temperature: float


@dataclass(frozen=True)
class TemperatureSchedule:
    """Geometric annealing with a floor: tau(e) = max(floor, initial * decay**e)."""

    initial: float = 1.0
    floor: float = 0.1
    decay: float = 0.1 ** (1.0 / 400.0)


def schedule_for(epochs, initial=1.0, floor=0.1, anneal_fraction=0.8):
    """Schedule whose floor is reached at `anneal_fraction` of the run.

    With the defaults and 500 epochs this reproduces the stock schedule
    (floor hit at epoch 400).
    """
    knee = max(1, round(anneal_fraction * epochs))
    return TemperatureSchedule(initial, floor, (floor / initial) ** (1.0 / knee))


DEFAULT_SCHEDULE = TemperatureSchedule()


def temperature_at(epoch, schedule=DEFAULT_SCHEDULE):
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return max(schedule.floor, schedule.initial * schedule.decay**epoch)


def gumbel_noise(rng, shape):
    """I.i.d. standard Gumbel draws, safe against log(0)."""
    u = rng.random(shape)
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    return -np.log(-np.log(u))


def gumbel_max(logits, rng=None, noise=None):
    """Categorical sample as argmax(logits + Gumbel noise).

    Ties break toward the lowest index. 1-D logits give a scalar index;
    2-D (batch, K) logits give one index per row. Pass `noise` to reuse a
    draw across calls (shared-noise coupling with `concrete_sample`).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if noise is None:
        noise = gumbel_noise(rng, logits.shape)
    return np.argmax(logits + noise, axis=-1)


def relax(logits, noise, temperature):
    """softmax((logits + noise) / temperature); dual-mode (see diffnet)."""
    if temperature <= 0.0:
        raise ValueError("temperature must be > 0")
    return dn.softmax(dn.mul(dn.add(logits, noise), 1.0 / temperature))


def concrete_sample(logits, temperature, rng=None, noise=None):
    """Draw a Concrete (relaxed one-hot) sample from the given logits."""
    logits = np.asarray(logits, dtype=np.float64)
    if noise is None:
        noise = gumbel_noise(rng, logits.shape)
    return ConcreteSample(relax(logits, noise, temperature), float(temperature))


def _check_simplex(points):
    pts = np.atleast_2d(points)
    sums = pts.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL) or np.any(pts < -SIMPLEX_TOL):
        raise ValueError("point is off the probability simplex beyond tolerance")


def concrete_log_density(model_logits, temperature, point):
    """Log of the Concrete density at `point` (natural log).

    For probabilities pi = softmax(model_logits) and a simplex point x:

        log (K-1)! + (K-1) log tau
        + sum_k (log pi_k - (tau+1) log x_k)
        - K * log sum_k (pi_k / x_k**tau)

    Accepts a ConcreteSample or a raw simplex point; batched rows work
    elementwise. Dual-mode: Tensor inputs yield a differentiable result in
    both the logits and the point. Coordinates are clamped to
    [PROB_FLOOR, 1] before logs.
    """
    if temperature <= 0.0:
        raise ValueError("temperature must be > 0")
    if isinstance(point, ConcreteSample):
        point = point.probs
    _check_simplex(dn._data(point))
    k = dn._data(point).shape[-1]
    log_pi = dn.log_softmax(model_logits)
    log_x = dn.log(dn.clip(point, PROB_FLOOR, 1.0))
    axis = -1
    s_all = dn.sum_(dn.sub(log_pi, dn.mul(log_x, temperature + 1.0)), axis=axis)
    lse = dn.logsumexp(dn.sub(log_pi, dn.mul(log_x, temperature)), axis=axis)
    const = math.lgamma(k) + (k - 1) * math.log(temperature)
    return dn.add(const, dn.sub(s_all, dn.mul(lse, float(k))))

"""Gaussian primitive relay channel and fixed finite-order modulations.

The source picks a symbol index W uniformly, maps it onto a real PAM
amplitude X, and both the relay and the destination observe X through
independent AWGN legs:

    y_r = x + N(0, sigma_r^2),    y_d = x + N(0, sigma_d^2)

SNR is defined as gamma = P / sigma^2 with P the mean symbol power.
Sampling is driven by numpy's seeded PCG64 generator (ziggurat normals),
so a fixed seed reproduces batches bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "Constellation",
    "ChannelParams",
    "Batch",
    "MODULATIONS",
    "make_constellation",
    "sigma_from_snr",
    "sample_batch",
]

MODULATIONS = {
    "BPSK": (-1.0, 1.0),
    "PAM4": (-3.0, -1.0, 1.0, 3.0),
}


@dataclass(frozen=True)
class Constellation:
    """Symbol alphabet in increasing amplitude order with uniform prior."""

    scheme: str
    symbols: np.ndarray
    prior: np.ndarray
    power: float

    @property
    def order(self):
        return len(self.symbols)

    @property
    def bits(self):
        """log2 of the alphabet size."""
        return float(np.log2(self.order))


@dataclass(frozen=True)
class ChannelParams:
    """Noise standard deviations of the two legs, plus the SNR they encode."""

    sigma_r: float
    sigma_d: float
    snr_db: float

    def __post_init__(self):
        if self.sigma_r <= 0 or self.sigma_d <= 0:
            raise ConfigError("noise standard deviations must be > 0")

    @classmethod
    def from_snr(cls, constellation, snr_db):
        """Equal-variance legs at the given SNR (the stock configuration)."""
        sigma = sigma_from_snr(constellation, snr_db)
        return cls(sigma_r=sigma, sigma_d=sigma, snr_db=float(snr_db))


@dataclass(frozen=True)
class Batch:
    """Aligned i.i.d. samples; arrays are read-only after creation."""

    w: np.ndarray
    x: np.ndarray
    y_r: np.ndarray
    y_d: np.ndarray

    @property
    def n(self):
        return len(self.w)


def make_constellation(scheme):
    """Canonical constellation for a modulation id ("BPSK" or "PAM4")."""
    if scheme not in MODULATIONS:
        raise ConfigError(
            f"unsupported modulation {scheme!r}; expected one of {sorted(MODULATIONS)}"
        )
    symbols = np.array(MODULATIONS[scheme], dtype=np.float64)
    prior = np.full(len(symbols), 1.0 / len(symbols))
    power = float(prior @ symbols**2)
    symbols.setflags(write=False)
    prior.setflags(write=False)
    return Constellation(scheme=scheme, symbols=symbols, prior=prior, power=power)


def sigma_from_snr(constellation, snr_db):
    """Noise std giving the requested SNR: sigma = sqrt(P / 10^(dB/10))."""
    gamma = 10.0 ** (float(snr_db) / 10.0)
    return float(np.sqrt(constellation.power / gamma))


def sample_batch(constellation, params, n, rng):
    """Draw n i.i.d. uses of the relay channel.

    Symbol indices are uniform; the two noise draws are independent of
    each other and of the symbols.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    w = rng.integers(0, constellation.order, size=n)
    x = constellation.symbols[w]
    y_r = x + params.sigma_r * rng.standard_normal(n)
    y_d = x + params.sigma_d * rng.standard_normal(n)
    for arr in (w, x, y_r, y_d):
        arr.setflags(write=False)
    return Batch(w=w, x=x, y_r=y_r, y_d=y_d)

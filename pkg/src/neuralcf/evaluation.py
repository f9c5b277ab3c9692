"""Test-time metrics, analytic baselines, and deployment artifacts.

Metrics follow the deployment semantics: hard relay indices, discrete
code lengths, hard symbol decisions. Baselines cover the no-relay and
perfect-relay regimes (closed-form SER, quadrature mutual information)
and the Gaussian-input compress-and-forward bound as a function of the
relay link rate. A trained bundle can also be flattened into a scalar
look-up table (interval thresholds on y_R and y_D), which is the form a
deployed relay would actually run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, logsumexp
from numpy.polynomial.hermite import hermgauss

from . import models as md
from .channel import sample_batch
from .errors import ConfigError

__all__ = [
    "TradeoffPoint",
    "LookUpTable",
    "BinningReport",
    "evaluate",
    "c_cf",
    "mi_quadrature",
    "mi_monte_carlo",
    "ser_closed_form",
    "qfunc",
    "extract_lut",
    "detect_binning",
    "lut_encode",
    "lut_demod",
    "lut_to_json",
    "lut_from_json",
    "tradeoff_csv_header",
    "tradeoff_csv_row",
    "baseline_csv_header",
    "baseline_csv_row",
]

QUAD_NODES = 160
POSTERIOR_FLOOR = 1e-300


@dataclass(frozen=True)
class TradeoffPoint:
    lam: float
    rate_bits: float
    mi_lb_bits: float
    ser: float


@dataclass(frozen=True)
class BinningReport:
    interval_counts: dict
    binning: bool


@dataclass(frozen=True)
class LookUpTable:
    """Deployed form of a trained bundle: pure threshold logic.

    relay_intervals: ordered (lo, hi, index) partition of the probed y_R
    range. demod_intervals: per relayed index, ordered (lo, hi, symbol)
    partition of the probed y_D range. Boundaries are refined by
    bisection between grid points, so interval edges sit on the model's
    actual decision thresholds rather than on the probe grid.
    """

    relay_intervals: tuple
    demod_intervals: dict
    y_r_range: tuple
    y_d_range: tuple
    grid_points: int


def evaluate(bundle, n_test=100_000, seed=0, lam=float("nan")):
    """Deployment metrics on a fresh test batch (hard encoder path)."""
    rng = np.random.default_rng(seed)
    batch = sample_batch(bundle.constellation, bundle.channel, n_test, rng)
    u = md.encode_hard(bundle.encoder, batch.y_r)
    # + 0.0 normalizes the -0.0 a zero-rate (single-index) model produces
    rate_bits = -float(np.mean(md.entropy_logprob(bundle.entropy, u, y_d=batch.y_d))) + 0.0
    onehot = md.one_hot(u, bundle.codebook_size)
    post = md.demod_posterior(bundle.demod, batch.y_d, onehot)
    picked = np.maximum(post[np.arange(batch.n), batch.w], POSTERIOR_FLOOR)
    distortion = -float(np.mean(np.log2(picked)))
    mi_lb = max(0.0, bundle.constellation.bits - distortion)
    ser = float(np.mean(np.argmax(post, axis=1) != batch.w))
    return TradeoffPoint(lam=float(lam), rate_bits=rate_bits, mi_lb_bits=mi_lb, ser=ser)


def c_cf(gamma_linear, rate):
    """Gaussian-input compress-and-forward bound, in bits per channel use.

    rate = 0 is the no-relay limit 1/2 log2(1+g); rate -> inf approaches
    the coherent two-observation limit 1/2 log2(1+2g).
    """
    g = float(gamma_linear)
    r = float(rate)
    if g <= 0:
        raise ValueError("gamma must be positive")
    if r < 0:
        raise ValueError("relay rate must be nonnegative")
    if r == 0:
        return 0.5 * math.log2(1.0 + g)
    denom = 1.0 + (1.0 + 2.0 * g) / ((4.0 ** r - 1.0) * (g + 1.0))
    return 0.5 * math.log2(1.0 + g + g / denom)


def _effective_gamma(gamma_linear, mode):
    if mode == "without_relay":
        return float(gamma_linear)
    if mode == "perfect_relay":
        # two equal-variance looks combine into one observation at twice
        # the linear SNR (sufficient statistic is the sum)
        return 2.0 * float(gamma_linear)
    raise ConfigError(f"unknown baseline mode {mode!r}")


def mi_quadrature(constellation, gamma_linear, mode="without_relay", nodes=QUAD_NODES):
    """I(X;Y) in bits for Y = X + N over the constellation, Gauss-Hermite."""
    g_eff = _effective_gamma(gamma_linear, mode)
    if g_eff <= 0:
        raise ValueError("gamma must be positive")
    sigma = math.sqrt(constellation.power / g_eff)
    t, w = hermgauss(nodes)
    x = constellation.symbols
    prior = constellation.prior
    # pairwise exponents: for y = x + sqrt(2) s t, the log-likelihood ratio
    # against symbol x' has exponent (2 s^2 t^2 - (sqrt(2) s t + x - x')^2) / (2 s^2)
    shift = math.sqrt(2.0) * sigma * t[None, :, None] + (x[:, None, None] - x[None, None, :])
    expo = (2.0 * sigma**2 * t[None, :, None] ** 2 - shift**2) / (2.0 * sigma**2)
    inner = logsumexp(expo, axis=2, b=prior[None, None, :])
    per_symbol = -(w[None, :] / math.sqrt(math.pi) * inner).sum(axis=1)
    return float((prior * per_symbol).sum() / math.log(2.0))


def mi_monte_carlo(constellation, gamma_linear, mode="without_relay", n=1_000_000, seed=0):
    """Sampled estimate of the same integral; slow cross-check for the quadrature."""
    g_eff = _effective_gamma(gamma_linear, mode)
    sigma = math.sqrt(constellation.power / g_eff)
    rng = np.random.default_rng(seed)
    x = constellation.symbols
    prior = constellation.prior
    w = rng.integers(0, constellation.order, size=n)
    y = x[w] + sigma * rng.standard_normal(n)
    diff = y[:, None] - x[None, :]
    logq = -(diff**2) / (2.0 * sigma**2)
    mix = logsumexp(logq, axis=1, b=prior[None, :])
    own = logq[np.arange(n), w]
    return float(np.mean(own - mix) / math.log(2.0))


def qfunc(z):
    """Gaussian tail probability Q(z)."""
    return 0.5 * erfc(np.asarray(z, dtype=float) / math.sqrt(2.0))


def ser_closed_form(constellation, gamma_linear):
    """Symbol error rate of the midpoint detector on one AWGN observation."""
    g = float(gamma_linear)
    if g <= 0:
        raise ValueError("gamma must be positive")
    if constellation.scheme == "BPSK":
        return float(qfunc(math.sqrt(g)))
    if constellation.scheme == "PAM4":
        # uniform 4-PAM on {-3,-1,1,3}: mean power 5, adjacent half-distance 1
        return float(1.5 * qfunc(math.sqrt(g / 5.0)))
    raise ConfigError(f"no closed form for scheme {constellation.scheme!r}")


def _bisect_boundary(decide, lo, hi, iters=60):
    """Threshold between two grid points with distinct labels."""
    flo = decide(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if decide(mid) == flo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _intervals_1d(decide, lo, hi, n):
    """Maximal constant-label intervals of a scalar decision function."""
    grid = np.linspace(lo, hi, n)
    labels = decide(grid)
    edges = np.flatnonzero(labels[1:] != labels[:-1])
    cuts = [
        _bisect_boundary(lambda v: int(decide(np.array([v]))[0]), grid[i], grid[i + 1])
        for i in edges
    ]
    bounds = [lo, *cuts, hi]
    seg_starts = [0, *(edges + 1)]
    return tuple(
        (float(bounds[i]), float(bounds[i + 1]), int(labels[seg_starts[i]]))
        for i in range(len(bounds) - 1)
    )


def extract_lut(bundle, span_sigmas=5.0, grid_points=4096):
    """Threshold tables from the trained networks by scanning and bisection."""
    cst = bundle.constellation
    lo_r = float(cst.symbols.min() - span_sigmas * bundle.channel.sigma_r)
    hi_r = float(cst.symbols.max() + span_sigmas * bundle.channel.sigma_r)
    lo_d = float(cst.symbols.min() - span_sigmas * bundle.channel.sigma_d)
    hi_d = float(cst.symbols.max() + span_sigmas * bundle.channel.sigma_d)

    relay = _intervals_1d(lambda y: md.encode_hard(bundle.encoder, y), lo_r, hi_r, grid_points)
    demod = {}
    for index in sorted({idx for _, _, idx in relay}):
        onehot = md.one_hot(index, bundle.codebook_size)

        def decide(y_d, _onehot=onehot):
            tiled = np.broadcast_to(_onehot, (len(y_d), bundle.codebook_size))
            return md.demod_hard(bundle.demod, y_d, tiled)

        demod[index] = _intervals_1d(decide, lo_d, hi_d, grid_points)
    return LookUpTable(
        relay_intervals=relay,
        demod_intervals=demod,
        y_r_range=(lo_r, hi_r),
        y_d_range=(lo_d, hi_d),
        grid_points=grid_points,
    )


def detect_binning(lut):
    """Flags indices owning two or more disjoint relay intervals."""
    counts = {}
    for _, _, index in lut.relay_intervals:
        counts[index] = counts.get(index, 0) + 1
    return BinningReport(interval_counts=counts, binning=any(c >= 2 for c in counts.values()))


def _apply_intervals(intervals, values):
    values = np.asarray(values, dtype=float)
    uppers = np.array([hi for _, hi, _ in intervals[:-1]])
    labels = np.array([lab for _, _, lab in intervals])
    return labels[np.searchsorted(uppers, values, side="right")]


def lut_encode(lut, y_r):
    """Relay index by table lookup (clamps to the probed range)."""
    return _apply_intervals(lut.relay_intervals, y_r)


def lut_demod(lut, index, y_d):
    """Symbol decision by table lookup for one relayed index."""
    if index not in lut.demod_intervals:
        raise KeyError(f"index {index} has no demodulator table")
    return _apply_intervals(lut.demod_intervals[index], y_d)


def _fmt(x):
    return float(f"{x:.9g}")


def lut_to_json(lut):
    doc = {
        "y_r_range": [_fmt(v) for v in lut.y_r_range],
        "y_d_range": [_fmt(v) for v in lut.y_d_range],
        "grid_points": lut.grid_points,
        "relay_intervals": [[_fmt(lo), _fmt(hi), idx] for lo, hi, idx in lut.relay_intervals],
        "demod_intervals": {
            str(idx): [[_fmt(lo), _fmt(hi), sym] for lo, hi, sym in rows]
            for idx, rows in lut.demod_intervals.items()
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def lut_from_json(text):
    doc = json.loads(text)
    return LookUpTable(
        relay_intervals=tuple((lo, hi, int(i)) for lo, hi, i in doc["relay_intervals"]),
        demod_intervals={
            int(k): tuple((lo, hi, int(s)) for lo, hi, s in rows)
            for k, rows in doc["demod_intervals"].items()
        },
        y_r_range=tuple(doc["y_r_range"]),
        y_d_range=tuple(doc["y_d_range"]),
        grid_points=int(doc["grid_points"]),
    )


def tradeoff_csv_header():
    return "scheme,lambda,seed,snr_db,modulation,rate_bits,mi_lb_bits,ser"


def tradeoff_csv_row(scheme, seed, snr_db, modulation, point):
    return (
        f"{scheme},{point.lam:.12g},{seed},{snr_db:.12g},{modulation},"
        f"{point.rate_bits:.12g},{point.mi_lb_bits:.12g},{point.ser:.12g}"
    )


def baseline_csv_header(rates):
    cf_cols = ",".join(f"cf_bound_R{r:g}" for r in rates)
    return (
        "snr_db,modulation,gamma_linear,mi_without_bits,mi_perfect_bits,"
        "ser_without,ser_perfect" + ("," + cf_cols if cf_cols else "")
    )


def baseline_csv_row(constellation, snr_db, rates):
    gamma = 10.0 ** (snr_db / 10.0)
    vals = [
        f"{snr_db:.12g}",
        constellation.scheme,
        f"{gamma:.12g}",
        f"{mi_quadrature(constellation, gamma, 'without_relay'):.12g}",
        f"{mi_quadrature(constellation, gamma, 'perfect_relay'):.12g}",
        f"{ser_closed_form(constellation, gamma):.12g}",
        f"{ser_closed_form(constellation, 2.0 * gamma):.12g}",
    ]
    vals += [f"{c_cf(gamma, r):.12g}" for r in rates]
    return ",".join(vals)

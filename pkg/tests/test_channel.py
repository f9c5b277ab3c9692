import numpy as np
import pytest
from scipy.stats import chi2

from neuralcf.channel import (
    Batch,
    ChannelParams,
    make_constellation,
    sample_batch,
    sigma_from_snr,
)
from neuralcf.errors import ConfigError


def test_bpsk_constellation():
    cst = make_constellation("BPSK")
    assert cst.symbols.tolist() == [-1.0, 1.0]
    assert cst.power == 1.0
    assert cst.order == 2
    assert cst.bits == 1.0


def test_pam4_power_is_mean_square():
    # hand oracle: (9 + 1 + 1 + 9) / 4
    cst = make_constellation("PAM4")
    assert cst.symbols.tolist() == [-3.0, -1.0, 1.0, 3.0]
    assert cst.power == pytest.approx((9 + 1 + 1 + 9) / 4, abs=0)


def test_pam4_prior_uniform():
    cst = make_constellation("PAM4")
    assert np.all(cst.prior == 0.25)
    assert cst.prior.sum() == pytest.approx(1.0, abs=0)


def test_symbols_strictly_increasing():
    for scheme in ("BPSK", "PAM4"):
        s = make_constellation(scheme).symbols
        assert np.all(np.diff(s) > 0)


def test_unknown_scheme_rejected():
    with pytest.raises(ConfigError):
        make_constellation("QAM256")


@pytest.mark.parametrize(
    "scheme,snr_db,var",
    [
        ("BPSK", 0.0, 1.0),
        ("PAM4", 13.0, 0.2505936),  # 5 / 10^1.3, independent calculator
        ("BPSK", 3.0, 0.5011872),  # 1 / 10^0.3
    ],
)
def test_sigma_from_snr(scheme, snr_db, var):
    sigma = sigma_from_snr(make_constellation(scheme), snr_db)
    assert sigma**2 == pytest.approx(var, abs=2e-7)


def test_channel_params_require_positive_sigmas():
    with pytest.raises(ConfigError):
        ChannelParams(sigma_r=0.0, sigma_d=1.0, snr_db=0.0)
    with pytest.raises(ConfigError):
        ChannelParams(sigma_r=1.0, sigma_d=-2.0, snr_db=0.0)


def test_from_snr_equal_variances():
    cst = make_constellation("PAM4")
    params = ChannelParams.from_snr(cst, 13.0)
    gamma = 10**1.3
    assert params.sigma_r == params.sigma_d
    assert params.sigma_r**2 == pytest.approx(cst.power / gamma, rel=1e-12)


def test_empty_batch():
    cst = make_constellation("BPSK")
    params = ChannelParams.from_snr(cst, 0.0)
    batch = sample_batch(cst, params, 0, np.random.default_rng(0))
    assert batch.n == 0
    assert batch.w.size == batch.x.size == batch.y_r.size == batch.y_d.size == 0


def test_negative_batch_size_rejected():
    cst = make_constellation("BPSK")
    params = ChannelParams.from_snr(cst, 0.0)
    with pytest.raises(ValueError):
        sample_batch(cst, params, -1, np.random.default_rng(0))


@pytest.fixture(scope="module")
def big_bpsk_batch():
    cst = make_constellation("BPSK")
    params = ChannelParams.from_snr(cst, 0.0)
    return cst, sample_batch(cst, params, 1_000_000, np.random.default_rng(42))


def test_symbol_map_consistency(big_bpsk_batch):
    cst, batch = big_bpsk_batch
    assert np.array_equal(batch.x, cst.symbols[batch.w])


def test_noise_variance_matches_snr(big_bpsk_batch):
    # 0 dB BPSK: unit noise variance; 5-sigma band of the variance estimator
    _, batch = big_bpsk_batch
    assert np.var(batch.y_d - batch.x) == pytest.approx(1.0, abs=0.01)
    assert np.var(batch.y_r - batch.x) == pytest.approx(1.0, abs=0.01)


def test_symbol_uniformity_chi_square(big_bpsk_batch):
    _, batch = big_bpsk_batch
    counts = np.bincount(batch.w, minlength=2)
    expected = batch.n / 2
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert chi2.sf(stat, df=1) > 1e-4


def test_noise_legs_uncorrelated(big_bpsk_batch):
    _, batch = big_bpsk_batch
    nr = batch.y_r - batch.x
    nd = batch.y_d - batch.x
    assert abs(np.mean(nr * nd) - np.mean(nr) * np.mean(nd)) < 5e-3


def test_reproducible_batches():
    cst = make_constellation("PAM4")
    params = ChannelParams.from_snr(cst, 13.0)
    a = sample_batch(cst, params, 4096, np.random.default_rng(7))
    b = sample_batch(cst, params, 4096, np.random.default_rng(7))
    assert np.array_equal(a.w, b.w)
    assert np.array_equal(a.y_r, b.y_r)
    assert np.array_equal(a.y_d, b.y_d)


def test_batch_arrays_read_only(big_bpsk_batch):
    _, batch = big_bpsk_batch
    with pytest.raises(ValueError):
        batch.y_r[0] = 0.0

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from catfuse.datagen import (
    BetaStarSetting,
    SynthConfig,
    gen_categorical,
    gen_latent,
    gen_response,
    generate,
    make_beta_star,
)


def test_uniform_binary_levels():
    codes = gen_categorical(100_000, 1, 2, 0.0, 0)
    assert abs(np.mean(codes == 0) - 0.5) < 0.01


def test_chi_square_uniformity():
    p = 7
    codes = gen_categorical(100_000, 3, p, 0.0, 1)
    for j in range(3):
        obs = np.bincount(codes[:, j], minlength=p)
        stat = stats.chisquare(obs).statistic
        assert stat < stats.chi2.ppf(0.999, p - 1)


def test_near_comonotone():
    # two binary codes split at the median disagree with probability arccos(rho) / pi
    codes = gen_categorical(100_000, 2, 2, 0.999, 2)
    agree = np.mean(codes[:, 0] == codes[:, 1])
    assert agree == pytest.approx(1 - np.arccos(0.999) / np.pi, abs=0.002)
    codes = gen_categorical(20_000, 4, 5, 0.999, 2)
    assert np.all(codes == codes[:, :1], axis=1).mean() > 0.9


def test_latent_correlation():
    z = gen_latent(100_000, 3, 0.2, 3)
    c = np.corrcoef(z, rowvar=False)
    assert np.all(np.abs(c[np.triu_indices(3, 1)] - 0.2) < 0.02)


def test_determinism():
    a = gen_categorical(50, 3, 4, 0.2, 11)
    assert np.array_equal(a, gen_categorical(50, 3, 4, 0.2, 11))
    assert not np.array_equal(a, gen_categorical(50, 3, 4, 0.2, 12))
    cfg = SynthConfig(20, 10, 10, BetaStarSetting(q=3, q_s=1, r1=1, r2=1))
    d1, d2 = generate(cfg, 4), generate(cfg, 4)
    assert np.array_equal(d1.train.codes, d2.train.codes) and np.array_equal(d1.test.y, d2.test.y)


@given(st.integers(1, 9), st.floats(0, 0.95), st.integers(0, 2**32))
def test_codes_in_range(p, rho, seed):
    codes = gen_categorical(200, 2, p, rho, seed)
    assert codes.min() >= 0 and codes.max() <= p - 1


def test_invalid_rho():
    with pytest.raises(ValueError):
        gen_categorical(5, 2, 3, 1.0, 0)
    with pytest.raises(ValueError):
        SynthConfig(5, 5, 5, rho=-0.1)


def test_response_sentinels():
    sig = np.array([1.0, -1.0])
    y, snr = gen_response(sig, 0.0, 0)
    assert np.array_equal(y, sig) and snr == np.inf
    _, snr = gen_response(np.zeros(3), 1.0, 0)
    assert snr == 0


def test_beta_star_patterns():
    b = make_beta_star(BetaStarSetting("eq10", q=2, q_s=1, r1=1, r2=1))
    assert b.theta_cat[0].tolist() == [-2, 0, 2] and b.theta_cat[1].tolist() == [0, 0, 0]
    assert b.alpha == 0
    assert make_beta_star(BetaStarSetting("f1", q=2, q_s=2)).theta_cat[1].tolist() == [-2, -2, 0, 0, 0]
    assert make_beta_star(BetaStarSetting("f2", q=1, q_s=1)).theta_cat[0].tolist() == [1, 2, 3, 0, 0]
    with pytest.raises(ValueError):
        BetaStarSetting(q=2, q_s=3)


def test_noise_stream_is_separate_from_covariates():
    s = BetaStarSetting(q=3, q_s=1, r1=1, r2=1)
    a = generate(SynthConfig(30, 0, 0, s, sigma=1.0), 0)
    b = generate(SynthConfig(30, 0, 0, s, sigma=3.0), 0)
    assert np.array_equal(a.train.codes, b.train.codes)
    assert np.allclose((a.train.y - a.signal_train) * 3, b.train.y - b.signal_train)

"""Synthetic categorical data: Gaussian copula latents binned into levels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .model import CategoricalSchema, Coefficients, Dataset, linear_predictor

SNR_INF = float("inf")


@dataclass(frozen=True)
class BetaStarSetting:
    """True coefficient layout.

    ``kind="eq10"``: the first ``q_s`` predictors are ``(-2)*r1, 0*r2, 2*r1``,
    the rest are zero. ``"f1"`` and ``"f2"`` use the fixed 5-level patterns
    ``(-2,-2,0,0,0)`` and ``(1,2,3,0,0)`` on the first ``q_s`` predictors.
    """

    kind: str = "eq10"
    q: int = 20
    q_s: int = 3
    r1: int = 4
    r2: int = 12

    FIXED = {"f1": (-2.0, -2.0, 0.0, 0.0, 0.0), "f2": (1.0, 2.0, 3.0, 0.0, 0.0)}

    def __post_init__(self):
        if self.kind not in ("eq10", "f1", "f2"):
            raise ValueError(f"unknown setting {self.kind!r}")
        if not 0 <= self.q_s <= self.q or self.q < 1:
            raise ValueError("need 0 <= q_s <= q and q >= 1")
        if self.kind == "eq10" and (self.r1 < 0 or self.r2 < 0 or 2 * self.r1 + self.r2 < 1):
            raise ValueError("r1, r2 must give at least one level")

    @property
    def levels(self) -> int:
        return 2 * self.r1 + self.r2 if self.kind == "eq10" else 5

    def schema(self) -> CategoricalSchema:
        return CategoricalSchema.from_levels([self.levels] * self.q)


def make_beta_star(setting: BetaStarSetting) -> Coefficients:
    if setting.kind == "eq10":
        active = np.concatenate([np.full(setting.r1, -2.0), np.zeros(setting.r2), np.full(setting.r1, 2.0)])
    else:
        active = np.array(BetaStarSetting.FIXED[setting.kind])
    zero = np.zeros(setting.levels)
    return Coefficients(0.0, tuple(active if j < setting.q_s else zero for j in range(setting.q)))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_latent(n: int, q: int, rho: float, seed) -> np.ndarray:
    """Equicorrelated standard normals via one shared factor: ``sqrt(rho) g0 + sqrt(1-rho) g_j``."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    rng = _rng(seed)
    g0 = rng.standard_normal((n, 1))
    g = rng.standard_normal((n, q))
    return np.sqrt(rho) * g0 + np.sqrt(1.0 - rho) * g


def gen_categorical(n: int, q: int, p_levels, rho: float, seed) -> np.ndarray:
    """``n x q`` matrix of 0-based level codes from equicorrelated Gaussian latents."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    p = np.broadcast_to(np.asarray(p_levels, dtype=np.int64), (q,))
    if (p < 1).any():
        raise ValueError("every predictor needs at least one level")
    u = ndtr(gen_latent(n, q, rho, seed))
    return np.minimum(np.floor(u * p).astype(np.int64), p - 1)


def gen_response(signal: np.ndarray, sigma: float, seed) -> tuple[np.ndarray, float]:
    """``y = signal + eps`` with ``eps ~ N(0, sigma^2)``; returns ``(y, realized SNR)``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    signal = np.asarray(signal, dtype=float)
    eps = sigma * _rng(seed).standard_normal(signal.shape[0])
    s2, e2 = float(signal @ signal), float(eps @ eps)
    if e2 == 0:
        snr = 0.0 if s2 == 0 else SNR_INF
    else:
        snr = s2 / e2
    return signal + eps, snr


@dataclass
class SynthConfig:
    n_train: int
    n_val: int
    n_test: int
    setting: BetaStarSetting = field(default_factory=BetaStarSetting)
    rho: float = 0.2
    sigma: float = 1.0
    seed: int = 0
    beta_star: Coefficients | None = None

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if min(self.n_train, self.n_val, self.n_test) < 0 or self.n_train < 1:
            raise ValueError("split sizes must be non-negative with n_train >= 1")
        if self.beta_star is None:
            self.beta_star = make_beta_star(self.setting)
        sizes = [t.size for t in self.beta_star.theta_cat]
        if sizes != [self.setting.levels] * self.setting.q:
            raise ValueError("beta_star dimensions do not match the setting")


@dataclass
class SynthData:
    train: Dataset
    val: Dataset | None
    test: Dataset | None
    beta_star: Coefficients
    snr: float
    signal_train: np.ndarray


def generate(cfg: SynthConfig, replication: int = 0) -> SynthData:
    """Independent train/validation/test blocks for one replication.

    Covariates and noise use separate streams derived from ``(seed, replication)``,
    so different noise levels share the same design.
    """
    ss = np.random.SeedSequence([cfg.seed, replication])
    cov_ss, noise_ss = ss.spawn(2)
    cov_rng, noise_rng = np.random.default_rng(cov_ss), np.random.default_rng(noise_ss)
    schema = cfg.setting.schema()
    out = []
    snr = None
    signal_train = None
    for size in (cfg.n_train, cfg.n_val, cfg.n_test):
        if size == 0:
            out.append(None)
            continue
        codes = gen_categorical(size, cfg.setting.q, cfg.setting.levels, cfg.rho, cov_rng)
        shell = Dataset(schema, codes, np.zeros((size, 0)), np.zeros(size))
        signal = linear_predictor(shell, cfg.beta_star)
        y, s = gen_response(signal, cfg.sigma, noise_rng)
        if snr is None:
            snr, signal_train = s, signal
        out.append(shell.with_response(y))
    return SynthData(out[0], out[1], out[2], cfg.beta_star, snr, signal_train)

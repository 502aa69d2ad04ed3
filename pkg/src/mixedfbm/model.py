"""Mixed fractional Brownian motion: parameters, kernels and exact simulation.

The observation model is X_t = sigma * B^H_t + sqrt(eps) * B_t, where B^H is a
fractional Brownian motion with Hurst exponent H in (3/4, 1), B an independent
standard Brownian motion and eps >= 0 the noise intensity.  Everything here is
a pure function of its inputs; simulation is exact in distribution (circulant
embedding of the fractional Gaussian noise, Cholesky fallback).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Theta",
    "SamplePath",
    "a_constant",
    "da_constant",
    "kernel_K",
    "spectral_density",
    "fbm_covariance",
    "fgn_autocovariance",
    "mixed_covariance_matrix",
    "simulate_mixed_fbm",
    "simulate_mixed_family",
    "replicate_seed",
]

H_LO = 0.75
H_HI = 1.0


@dataclass(frozen=True)
class Theta:
    """Parameter pair (H, sigma^2) restricted to (3/4, 1) x (0, inf)."""

    hurst: float
    sigma2: float

    def __post_init__(self):
        if not H_LO < self.hurst < H_HI:
            raise ValueError(f"hurst must lie in ({H_LO}, {H_HI}), got {self.hurst}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def gamma(self) -> float:
        """Scaling exponent 1/(2H - 1) of the small-noise regime."""
        return 1.0 / (2.0 * self.hurst - 1.0)


def _check_eps(eps, allow_zero=False):
    eps = float(eps)
    if eps < 0 or (eps == 0 and not allow_zero):
        raise ValueError(f"noise intensity must be {'>= 0' if allow_zero else '> 0'}, got {eps}")
    return eps


@dataclass(frozen=True)
class SamplePath:
    """Uniformly sampled realization of the mixed fBm with its metadata.

    values[k] is X at time k*dt, values[0] == 0.
    """

    dt: float
    values: np.ndarray
    theta: Theta
    eps: float
    seed: int
    embedding_fallback: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 3:
            raise ValueError("values must be a 1-d array covering n >= 2 steps")
        if values[0] != 0.0:
            raise ValueError("paths start at zero")
        object.__setattr__(self, "values", values)
        _check_eps(self.eps, allow_zero=True)

    @property
    def n_increments(self) -> int:
        return self.values.size - 1

    @property
    def horizon(self) -> float:
        return self.n_increments * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def a_constant(H):
    """Spectral constant Gamma(2H + 1) * sin(pi * H) for H in (0, 1)."""
    if not 0.0 < H < 1.0:
        raise ValueError(f"H must lie in (0, 1), got {H}")
    return math.gamma(2.0 * H + 1.0) * math.sin(math.pi * H)


def da_constant(H):
    """Derivative of a_constant with respect to H.

    d/dH [Gamma(2H+1) sin(pi H)]
        = Gamma(2H+1) * (2 psi0(2H+1) sin(pi H) + pi cos(pi H)).
    """
    from scipy.special import digamma

    if not 0.0 < H < 1.0:
        raise ValueError(f"H must lie in (0, 1), got {H}")
    return math.gamma(2.0 * H + 1.0) * (
        2.0 * digamma(2.0 * H + 1.0) * math.sin(math.pi * H)
        + math.pi * math.cos(math.pi * H)
    )


def kernel_K(theta: Theta, tau):
    """Covariance kernel sigma^2 * H * (2H - 1) * |tau|^(2H - 2), tau != 0."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau == 0.0):
        raise ValueError("kernel_K is singular at tau = 0")
    H = theta.hurst
    out = theta.sigma2 * H * (2.0 * H - 1.0) * np.abs(tau) ** (2.0 * H - 2.0)
    return out if out.ndim else float(out)


def spectral_density(theta: Theta, eps, lam):
    """Noisy spectrum eps + sigma^2 * a_H * |lambda|^(1 - 2H), lambda != 0."""
    eps = _check_eps(eps, allow_zero=True)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam == 0.0):
        raise ValueError("spectral_density is singular at lambda = 0")
    out = eps + theta.sigma2 * a_constant(theta.hurst) * np.abs(lam) ** (1.0 - 2.0 * theta.hurst)
    return out if out.ndim else float(out)


def fbm_covariance(H, s, t):
    """fBm covariance (t^2H + s^2H - |t - s|^2H) / 2 for s, t >= 0."""
    if not 0.0 < H < 1.0:
        raise ValueError(f"H must lie in (0, 1), got {H}")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("fbm_covariance requires nonnegative times")
    out = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return out if out.ndim else float(out)


def fgn_autocovariance(H, n_lags, dt=1.0):
    """Autocovariance of unit-scale fGn increments over step dt at lags 0..n_lags-1."""
    k = np.arange(n_lags, dtype=float)
    gamma = 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * np.abs(k) ** (2 * H) + np.abs(k - 1) ** (2 * H))
    return gamma * dt ** (2 * H)


def mixed_covariance_matrix(theta: Theta, eps, times):
    """Covariance matrix of the mixed fBm at the given times.

    Cov(X_s, X_t) = sigma^2 * fbm_covariance(H, s, t) + eps * min(s, t).
    """
    eps = _check_eps(eps, allow_zero=True)
    times = np.asarray(times, dtype=float)
    s, t = np.meshgrid(times, times, indexing="ij")
    return theta.sigma2 * fbm_covariance(theta.hurst, s, t) + eps * np.minimum(s, t)


def replicate_seed(master_seed, replicate):
    """Derive the integer seed of one replicate from a master seed.

    Pure function of (master_seed, replicate): workers can draw their
    replicates in any order without affecting the streams.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replicate),))
    return int(ss.generate_state(1, np.uint64)[0])


def _fgn_circulant(H, n, dt, rng):
    """Exact fGn sample of length n by circulant embedding (Davies-Harte).

    Returns None when the circulant spectrum has a genuinely negative
    eigenvalue (caller falls back to Cholesky).
    """
    gamma = fgn_autocovariance(H, n + 1, dt)
    first_row = np.concatenate([gamma, gamma[-2:0:-1]])  # length 2n
    m = first_row.size
    lam = np.fft.fft(first_row).real
    tol = -1e-12 * lam.max()
    if lam.min() < tol:
        return None
    lam = np.clip(lam, 0.0, None)

    # Hermitian-symmetric complex white noise; draw order is fixed so the
    # stream is reproducible across numpy versions of helper utilities.
    zeta = np.zeros(m, dtype=complex)
    zeta[0] = rng.standard_normal()
    zeta[n] = rng.standard_normal()
    interior = rng.standard_normal((n - 1, 2))
    zeta[1:n] = (interior[:, 0] + 1j * interior[:, 1]) / math.sqrt(2.0)
    zeta[n + 1:] = np.conj(zeta[1:n][::-1])

    sample = math.sqrt(m) * np.fft.ifft(np.sqrt(lam) * zeta)
    return sample.real[:n]


def _fgn_cholesky(H, n, dt, rng):
    gamma = fgn_autocovariance(H, n, dt)
    idx = np.arange(n)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    chol = np.linalg.cholesky(cov)
    return chol @ rng.standard_normal(n)


def simulate_mixed_fbm(theta: Theta, eps, n, dt, seed) -> SamplePath:
    """Simulate X = sigma * B^H + sqrt(eps) * B on the grid k*dt, k = 0..n.

    The fGn increments are exact in distribution (circulant embedding, with a
    Cholesky fallback that is reported through a warning and the
    ``embedding_fallback`` flag).  Deterministic given the seed.
    """
    eps = _check_eps(eps, allow_zero=True)
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2 increments")
    if dt <= 0:
        raise ValueError("dt must be positive")

    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    fallback = False
    fgn = _fgn_circulant(theta.hurst, n, dt, rng)
    if fgn is None:
        warnings.warn(
            "circulant embedding spectrum is negative; falling back to Cholesky",
            RuntimeWarning,
        )
        fallback = True
        fgn = _fgn_cholesky(theta.hurst, n, dt, rng)

    increments = math.sqrt(theta.sigma2) * fgn
    if eps > 0:
        increments = increments + math.sqrt(eps * dt) * rng.standard_normal(n)
    values = np.concatenate([[0.0], np.cumsum(increments)])
    return SamplePath(dt=float(dt), values=values, theta=theta, eps=eps, seed=int(seed),
                      embedding_fallback=fallback)


def simulate_mixed_family(theta: Theta, eps_list, n, dt, seed):
    """Paths at several noise levels sharing one (B^H, B) draw per seed.

    Used by the small-noise rate experiments: the fBm and Brownian components
    are simulated once and combined as sigma*B^H + sqrt(eps)*B for every eps,
    so per-eps estimates are comparable replicate by replicate.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2 increments")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    fallback = False
    fgn = _fgn_circulant(theta.hurst, n, dt, rng)
    if fgn is None:
        warnings.warn(
            "circulant embedding spectrum is negative; falling back to Cholesky",
            RuntimeWarning,
        )
        fallback = True
        fgn = _fgn_cholesky(theta.hurst, n, dt, rng)
    bm = rng.standard_normal(n)
    base = math.sqrt(theta.sigma2) * fgn
    out = {}
    for eps in eps_list:
        eps = _check_eps(eps, allow_zero=True)
        increments = base + math.sqrt(eps * dt) * bm if eps > 0 else base
        values = np.concatenate([[0.0], np.cumsum(increments)])
        out[eps] = SamplePath(dt=float(dt), values=values, theta=theta, eps=eps,
                              seed=int(seed), embedding_fallback=fallback)
    return out

"""Likelihoods of the mixed fBm: innovation functional and exact discrete form.

Two backends encode the same measure.  The innovation backend discretizes the
continuous-time Girsanov functional

    log dP_theta / dP = (1/eps) int rho_t dX_t - (1/2eps) int rho_t^2 dt,
    rho_t = int_0^t g(t, t - s) dX_s,

with g from the Fredholm solver.  The discrete-exact backend is the Gaussian
likelihood of the increment vector, with covariance sigma^2 * fGn + eps dt I;
on the uniform grid this covariance is Toeplitz, so a Levinson-Durbin
recursion evaluates it in O(n^2) (the dense Cholesky route is kept as the
cross-checked reference).  The module also hosts the maximum-likelihood
search, the empirical information estimate and the likelihood-ratio sampler
used by the LAN experiments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, stats

from .model import (Theta, SamplePath, fgn_autocovariance, kernel_K,
                    simulate_mixed_fbm, replicate_seed, _check_eps, H_LO, H_HI)
from .fredholm import solve_g, _product_weights

__all__ = [
    "LogLikResult",
    "MleResult",
    "EmpiricalInformation",
    "LanResult",
    "innovation_rho",
    "innovation_weight_rows",
    "loglik_innovation",
    "loglik_discrete_exact",
    "mle",
    "empirical_information",
    "lan_experiment",
]


@dataclass(frozen=True)
class LogLikResult:
    value: float
    backend: str
    diagnostics: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("log-likelihood is not finite")


@dataclass(frozen=True)
class MleResult:
    theta_hat: Theta
    loglik: float
    n_evals: int
    converged: bool
    boundary_hit: bool = False


def _g_row(theta, eps, t, path_times, n_nodes):
    """Innovation weights on the path cells: g(t, t - s) at cell midpoints.

    Cell [s_k, s_k + dt] carries the weight g(t, t - s_k - dt/2); midpoint
    evaluation keeps the quadrature honest against the s -> 0 singularity of
    g at the most recent increments.  Cells not fully inside [0, t] get zero.
    """
    sol = solve_g(theta, eps, t, n_nodes)
    row = np.zeros(path_times.size - 1)
    dt = path_times[1] - path_times[0]
    mask = path_times[1:] <= t + 1e-12 * t
    queries = t - 0.5 * dt - path_times[:-1][mask]
    row[mask] = np.interp(queries, sol.nodes, sol.values)
    return row


def _auto_nodes(t, dt):
    return int(min(4096, max(64, math.ceil(t / dt))))


def innovation_weight_rows(theta: Theta, eps, grid_t, path_times, n_nodes=None):
    """Path-independent weights: row r of the output dotted with the increment
    vector gives rho at grid_t[r].  Shared across replicates on a fixed grid."""
    path_times = np.asarray(path_times, dtype=float)
    dt = path_times[1] - path_times[0]
    rows = []
    for t in np.atleast_1d(grid_t):
        nn = n_nodes or _auto_nodes(t, dt)
        rows.append(_g_row(theta, eps, float(t), path_times, nn))
    return np.array(rows)


def innovation_rho(path: SamplePath, theta: Theta, grid_t, n_nodes=None):
    """Innovation drift rho_t = int_0^t g(t, t-s) dX_s at the requested times.

    Riemann-Stieltjes sum with forward (non-anticipating) increments on the
    path grid; g is interpolated linearly between collocation nodes.
    """
    grid_t = np.atleast_1d(np.asarray(grid_t, dtype=float))
    if np.any(grid_t <= 0) or np.any(grid_t > path.horizon * (1 + 1e-12)):
        raise ValueError("grid_t must lie inside the path horizon")
    rows = innovation_weight_rows(theta, path.eps, grid_t, path.times, n_nodes)
    return rows @ path.increments


def loglik_innovation(path: SamplePath, theta: Theta) -> LogLikResult:
    """Discretized Girsanov log-likelihood (innovation backend).

    The dX integral uses Ito forward sums, the dt integral the trapezoid
    rule; g is re-solved at every grid time with nested collocation blocks at
    the path resolution.
    """
    eps = _check_eps(path.eps)
    m = path.n_increments
    dt = path.dt
    nodes, W = _product_weights(theta, path.horizon, m)
    rhs_full = kernel_K(theta, nodes)
    eye = np.eye(m)

    rho = np.zeros(m + 1)
    max_res = 0.0
    for k in range(1, m + 1):
        A = W[:k, :k] + eps * eye[:k, :k]
        g = linalg.solve(A, rhs_full[:k])
        max_res = max(max_res, float(np.max(np.abs(A @ g - rhs_full[:k]))
                                     / np.max(np.abs(rhs_full[:k]))))
        # collocation nodes sit at the s-midpoints of the path cells, so the
        # weight of increment j at horizon k*dt is g at node k-1-j directly
        rho[k] = float(g[::-1] @ path.increments[:k])

    ito_sum = float(rho[:-1] @ path.increments)
    quad_time = float(np.trapezoid(rho ** 2, dx=dt))
    value = ito_sum / eps - 0.5 * quad_time / eps
    return LogLikResult(value=value, backend="innovation", diagnostics=max_res)


def _levinson_loglik(r, x):
    """Gaussian log-likelihood of x ~ N(0, Toeplitz(r)) by Levinson-Durbin.

    Returns (loglik, max_v / min_v) where v are the innovation variances.
    """
    m = x.size
    v = r[0]
    if v <= 0:
        raise np.linalg.LinAlgError("covariance is not positive definite")
    ll = -0.5 * (math.log(2.0 * math.pi * v) + x[0] * x[0] / v)
    a = np.empty(m)  # AR coefficients a[0..k-1] of order k
    v_min = v_max = v
    for k in range(1, m):
        if k == 1:
            phi = r[1] / v
        else:
            phi = (r[k] - a[:k - 1] @ r[k - 1:0:-1]) / v
            a[:k - 1] -= phi * a[k - 2::-1].copy()
        a[k - 1] = phi
        v *= 1.0 - phi * phi
        if v <= 0:
            raise np.linalg.LinAlgError("covariance is not positive definite")
        v_min, v_max = min(v_min, v), max(v_max, v)
        e = x[k] - a[:k] @ x[k - 1::-1]
        ll -= 0.5 * (math.log(2.0 * math.pi * v) + e * e / v)
    return ll, v_max / v_min


def _increment_covariance_row(theta, eps, dt, m):
    r = theta.sigma2 * fgn_autocovariance(theta.hurst, m, dt)
    r[0] += eps * dt
    return r


def loglik_discrete_exact(path: SamplePath, theta: Theta, method="levinson") -> LogLikResult:
    """Exact finite-dimensional Gaussian log-likelihood of the increments.

    The increment covariance sigma^2 Cov(dB^H) + eps dt I is Toeplitz on the
    uniform grid; method "levinson" evaluates the likelihood in O(n^2) and
    "cholesky" is the dense reference (n <= 4096), both returning
    -log det / 2 - quadratic form / 2 - (n/2) log 2pi.
    """
    eps = _check_eps(path.eps, allow_zero=True)
    m = path.n_increments
    x = path.increments
    r = _increment_covariance_row(theta, eps, path.dt, m)

    if method == "levinson":
        value, cond = _levinson_loglik(r, x)
        return LogLikResult(value=value, backend="discrete-exact", diagnostics=cond)
    if method == "cholesky":
        if m > 4096:
            raise ValueError("dense Cholesky limited to n <= 4096")
        idx = np.arange(m)
        cov = r[np.abs(idx[:, None] - idx[None, :])]
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("increment covariance is not PD") from exc
        w = linalg.solve_triangular(chol, x, lower=True)
        value = -np.sum(np.log(np.diag(chol))) - 0.5 * float(w @ w) \
            - 0.5 * m * math.log(2.0 * math.pi)
        d = np.diag(chol)
        return LogLikResult(value=value, backend="discrete-exact",
                            diagnostics=float((d.max() / d.min()) ** 2))
    raise ValueError("method must be 'levinson' or 'cholesky'")


_LOGLIK_BACKENDS = {
    "discrete-exact": loglik_discrete_exact,
    "innovation": lambda path, theta: loglik_innovation(path, theta),
}


def _to_unconstrained(theta: Theta):
    span = H_HI - H_LO
    p = (theta.hurst - H_LO) / span
    return np.array([math.log(p / (1.0 - p)), math.log(theta.sigma2)])


def _from_unconstrained(x):
    span = H_HI - H_LO
    h = H_LO + span / (1.0 + math.exp(-x[0]))
    h = min(max(h, H_LO + 1e-12), H_HI - 1e-12)
    return Theta(h, math.exp(x[1]))


def mle(path: SamplePath, init: Theta, backend="discrete-exact",
        max_evals=600, xatol=1e-6, known_sigma2=None) -> MleResult:
    """Nelder-Mead maximum likelihood over (logit-rescaled H, log sigma^2).

    Deterministic given (path, init); convergence requires the simplex to
    shrink below xatol in the transformed coordinates.  With known_sigma2 the
    variance scale is held fixed and only H is searched (the one-parameter
    family of the H-only regime).
    """
    loglik = _LOGLIK_BACKENDS[backend]

    if known_sigma2 is not None:
        s2 = float(known_sigma2)

        def objective1(x):
            return -loglik(path, _from_unconstrained([x[0], math.log(s2)])).value

        res = optimize.minimize(objective1, _to_unconstrained(init)[:1],
                                method="Nelder-Mead",
                                options={"xatol": xatol, "fatol": 1e-8,
                                         "maxfev": max_evals, "maxiter": max_evals})
        res.x = np.array([res.x[0], math.log(s2)])
    else:
        def objective(x):
            return -loglik(path, _from_unconstrained(x)).value

        res = optimize.minimize(objective, _to_unconstrained(init), method="Nelder-Mead",
                                options={"xatol": xatol, "fatol": 1e-8,
                                         "maxfev": max_evals, "maxiter": max_evals})
    theta_hat = _from_unconstrained(res.x)
    boundary = bool(abs(res.x[0]) > 12.0)
    if boundary:
        warnings.warn("MLE landed near the boundary of the H box", RuntimeWarning)
    if not res.success and not boundary:
        warnings.warn(f"MLE search did not converge in {res.nfev} evaluations",
                      RuntimeWarning)
    return MleResult(theta_hat=theta_hat, loglik=float(-res.fun), n_evals=int(res.nfev),
                     converged=bool(res.success), boundary_hit=boundary)


def discrete_fisher_information(theta: Theta, eps, dt, n, fd_step=1e-5):
    """Exact Fisher matrix (per unit time) of the n-increment sample.

    I[i, j] = tr(S^-1 dS_i S^-1 dS_j) / (2 T) with S the increment covariance;
    derivatives of S by central differences of the Toeplitz row.  Quantifies
    how much of the continuous-record information survives dt-sampling.
    """
    eps = _check_eps(eps)

    def cov(th):
        return linalg.toeplitz(_increment_covariance_row(th, eps, dt, n))

    S = cov(theta)
    dS = [
        (cov(Theta(theta.hurst + fd_step, theta.sigma2))
         - cov(Theta(theta.hurst - fd_step, theta.sigma2))) / (2.0 * fd_step),
        (cov(Theta(theta.hurst, theta.sigma2 + fd_step))
         - cov(Theta(theta.hurst, theta.sigma2 - fd_step))) / (2.0 * fd_step),
    ]
    factor = linalg.cho_factor(S)
    X = [linalg.cho_solve(factor, d) for d in dS]
    T = n * dt
    out = np.empty((2, 2))
    for i in range(2):
        for j in range(i, 2):
            out[i, j] = out[j, i] = 0.5 * np.einsum("ij,ji->", X[i], X[j]) / T
    return out


@dataclass(frozen=True)
class EmpiricalInformation:
    """Monte-Carlo estimate of the information matrix with entrywise errors."""

    entries: np.ndarray
    stderr: np.ndarray
    replicates: int
    samples: np.ndarray = field(repr=False, default=None)


def empirical_information(theta0: Theta, eps, T, replicates, master_seed,
                          dt=0.125, n_t=32, fd_step=1e-4, n_nodes=None,
                          keep_samples=False) -> EmpiricalInformation:
    """Time-averaged empirical information (1/eps)(1/T) int grad rho grad rho dt.

    grad rho is computed by central finite differences of the innovation
    functional in theta (step fd_step); the g-weights are path independent
    and computed once, so the per-replicate cost is a handful of dot
    products.  Entries are averaged over replicates, with standard errors.
    """
    eps = _check_eps(eps)
    n_incr = int(round(T / dt))
    path_times = np.arange(n_incr + 1) * dt
    t_grid = (np.arange(n_t) + 0.5) * (T / n_t)

    perturbed = [
        Theta(theta0.hurst + fd_step, theta0.sigma2),
        Theta(theta0.hurst - fd_step, theta0.sigma2),
        Theta(theta0.hurst, theta0.sigma2 + fd_step),
        Theta(theta0.hurst, theta0.sigma2 - fd_step),
    ]
    rows = np.array([innovation_weight_rows(th, eps, t_grid, path_times, n_nodes)
                     for th in perturbed])  # (4, n_t, n_incr)

    samples = np.empty((replicates, 2, 2))
    for r in range(int(replicates)):
        path = simulate_mixed_fbm(theta0, eps, n_incr, dt, replicate_seed(master_seed, r))
        rho = rows @ path.increments          # (4, n_t)
        grad = np.stack([(rho[0] - rho[1]) / (2.0 * fd_step),
                         (rho[2] - rho[3]) / (2.0 * fd_step)])  # (2, n_t)
        samples[r] = (grad @ grad.T) / (eps * n_t)

    entries = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(replicates)
    return EmpiricalInformation(entries=entries, stderr=stderr,
                                replicates=int(replicates),
                                samples=samples if keep_samples else None)


@dataclass(frozen=True)
class LanResult:
    """Sample of local log-likelihood ratios with its summary statistics."""

    samples: np.ndarray
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    normality_pvalue: float


def lan_experiment(theta0: Theta, eps, T, dt, u, scaling, replicates,
                   master_seed, backend="discrete-exact") -> LanResult:
    """Sample log L(theta0 + phi u) - log L(theta0) over simulated replicates.

    Under LAN the sample is asymptotically N(-||u||^2 / 2, ||u||^2).  scaling
    is the rate normalization phi: a RateSchedule (its 2x2 matrix is used) or
    the matrix itself; theta0 + phi u must stay inside the parameter box.
    """
    eps = _check_eps(eps)
    u = np.asarray(u, dtype=float)
    scaling = getattr(scaling, "scaling", scaling)
    shift = np.asarray(scaling, dtype=float) @ u
    theta_local = Theta(theta0.hurst + shift[0], theta0.sigma2 + shift[1])
    n_incr = int(round(T / dt))
    loglik = _LOGLIK_BACKENDS[backend]

    samples = np.empty(int(replicates))
    for r in range(int(replicates)):
        path = simulate_mixed_fbm(theta0, eps, n_incr, dt, replicate_seed(master_seed, r))
        if np.all(shift == 0.0):
            samples[r] = 0.0
            continue
        samples[r] = loglik(path, theta_local).value - loglik(path, theta0).value

    mean = float(samples.mean())
    var = float(samples.var(ddof=1)) if replicates > 1 else 0.0
    se_mean = math.sqrt(var / replicates) if replicates > 1 else 0.0
    se_var = var * math.sqrt(2.0 / (replicates - 1)) if replicates > 2 else 0.0
    if replicates >= 20 and var > 0:
        pval = float(stats.normaltest(samples).pvalue)
    else:
        pval = float("nan")
    return LanResult(samples=samples, mean=mean, variance=var,
                     se_mean=se_mean, se_variance=se_var, normality_pvalue=pval)

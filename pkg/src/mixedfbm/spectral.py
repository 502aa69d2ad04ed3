"""Frequency-domain toolbox: Fisher information and boundary-value functions.

This module evaluates the Whittle-type information matrix

    I(theta, eps) = (1/4pi) integral of grad log(eps + sigma^2 a_H |lam|^(1-2H))
                    outer grad log(...) d lam,

the sectionally holomorphic function Lambda(z), its boundary argument
alpha(tau), the canonical solution X_c(z) of the associated homogeneous
Hilbert boundary problem, the real kernel h(tau) driving the auxiliary
integral operator, and the normalizing rate matrices of the large-time and
small-noise regimes.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import Theta, a_constant, da_constant, _check_eps

__all__ = [
    "QuadConfig",
    "FisherMatrix",
    "RateSchedule",
    "QuadratureError",
    "PoleProximityError",
    "SingularInformationError",
    "grad_log_spectrum",
    "fisher_information",
    "lambda_plus",
    "lambda_z",
    "alpha",
    "alpha_prime",
    "x_canonical",
    "h_function",
    "log_shear",
    "small_noise_m",
    "nu_matrix",
    "rate_schedule",
    "inverse_sqrt",
]


class QuadratureError(RuntimeError):
    """Quadrature refinements failed to settle within tolerance."""


class PoleProximityError(ValueError):
    """Evaluation point too close to the positive real axis."""


class SingularInformationError(RuntimeError):
    """Information matrix is numerically singular."""


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances of the frequency-domain quadratures."""

    rel_tol: float = 1e-9
    max_panels: int = 8192
    tail_cut: float = 1e-16


@dataclass(frozen=True)
class FisherMatrix:
    """2x2 information matrix indexed (H, sigma^2) with its quadrature error."""

    entries: np.ndarray
    quad_error: float

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.shape != (2, 2):
            raise ValueError("information matrix must be 2x2")
        if not np.all(np.isfinite(entries)):
            raise SingularInformationError("non-finite information entries")
        if abs(entries[0, 1] - entries[1, 0]) > 1e-10 * np.abs(entries).max():
            raise ValueError("information matrix must be symmetric")
        w = np.linalg.eigvalsh(entries)
        if w.min() <= 1e-12 * w.max():
            raise SingularInformationError("information matrix is not positive definite")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class RateSchedule:
    """Normalization of a LAN regime: a 2x2 matrix or a scalar rate."""

    regime: str
    scaling: object
    log_factor: float = 1.0


def _grad_components(theta: Theta, eps, lam):
    """(d/dH, d/dsigma2) of log(eps + K_hat) at |lam| > 0, vectorized."""
    lam = np.abs(np.asarray(lam, dtype=float))
    H, s2 = theta.hurst, theta.sigma2
    a = a_constant(H)
    da = da_constant(H)
    power = lam ** (1.0 - 2.0 * H)
    f = eps + s2 * a * power
    d_h = s2 * power * (da - 2.0 * a * np.log(lam)) / f
    d_s = a * power / f
    return d_h, d_s


def grad_log_spectrum(theta: Theta, eps, lam):
    """Gradient of log(eps + sigma^2 a_H |lam|^(1-2H)) in (H, sigma^2).

    Uses the analytic derivative of a_H,
    a_H' = Gamma(2H+1) (2 psi0(2H+1) sin(pi H) + pi cos(pi H)).
    """
    eps = _check_eps(eps, allow_zero=True)
    arr = np.asarray(lam, dtype=float)
    if np.any(arr == 0.0):
        raise ValueError("grad_log_spectrum is singular at lambda = 0")
    d_h, d_s = _grad_components(theta, eps, arr)
    return np.stack([d_h, d_s])


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _panel_integrate(func, edges):
    """Composite 16-point Gauss-Legendre over the panels defined by edges.

    func maps an array of abscissas to an array of integrand rows
    (n_components, n_points).
    """
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    vals = func(x)
    return vals @ w


def _fisher_integrand(theta, eps):
    def func(u):
        lam = np.exp(u)
        d_h, d_s = _grad_components(theta, eps, lam)
        return np.stack([d_h * d_h, d_h * d_s, d_s * d_s]) * lam

    return func


def _fisher_bounds(theta, eps, tail_cut):
    """Log-frequency window outside of which the integrand is negligible."""
    func = _fisher_integrand(theta, eps)
    probe = np.linspace(-30.0, 30.0, 121)
    scale = np.abs(func(probe)).max()
    lo = -30.0
    while np.abs(func(np.array([lo]))).max() > tail_cut * scale and lo > -700.0:
        lo -= 10.0
    hi = 30.0
    while np.abs(func(np.array([hi]))).max() > tail_cut * scale and hi < 40000.0:
        hi += 10.0
    return lo, hi


def fisher_information(theta: Theta, eps, quad: QuadConfig | None = None,
                       lam_bounds=None) -> FisherMatrix:
    """Whittle information matrix of the mixed fBm at noise level eps > 0.

    The integral over (0, inf) (doubled by evenness) is mapped to the log
    axis, where the integrand decays exponentially on both sides, and
    evaluated with composite Gauss-Legendre panels that are doubled until
    every entry settles to quad.rel_tol.  lam_bounds optionally restricts the
    integration to a finite frequency window (used by truncation oracles).
    """
    eps = _check_eps(eps)
    quad = quad or QuadConfig()
    func = _fisher_integrand(theta, eps)
    if lam_bounds is None:
        lo, hi = _fisher_bounds(theta, eps, quad.tail_cut)
    else:
        lo, hi = math.log(lam_bounds[0]), math.log(lam_bounds[1])

    n_panels = 64
    prev = None
    err = math.inf
    while n_panels <= quad.max_panels:
        edges = np.linspace(lo, hi, n_panels + 1)
        raw = _panel_integrate(func, edges)
        if prev is not None:
            err = np.max(np.abs(raw - prev) / np.maximum(np.abs(raw), 1e-300))
            if err < quad.rel_tol:
                prev = raw
                break
        prev = raw
        n_panels *= 2
    else:
        raise QuadratureError(
            f"information quadrature did not converge (last change {err:.2e})"
        )

    i11, i12, i22 = prev / (2.0 * math.pi)
    return FisherMatrix(entries=np.array([[i11, i12], [i12, i22]]), quad_error=float(err))


def lambda_plus(theta: Theta, eps, tau):
    """Boundary value Lambda^+(tau) = eps + sigma^2 a_H |tau|^(1-2H) e^(i sgn(tau)(H-1/2)pi)."""
    eps = _check_eps(eps, allow_zero=True)
    tau = float(tau)
    if tau == 0.0:
        raise ValueError("lambda_plus is singular at tau = 0")
    H = theta.hurst
    phase = cmath.exp(1j * math.copysign((H - 0.5) * math.pi, tau))
    return eps + theta.sigma2 * a_constant(H) * abs(tau) ** (1.0 - 2.0 * H) * phase


def lambda_z(theta: Theta, eps, z):
    """Lambda(z) = eps + (sigma^2/2) Gamma(2H+1) (z^(1-2H) + (-z)^(1-2H)), z off the real axis."""
    eps = _check_eps(eps, allow_zero=True)
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("lambda_z is defined off the real axis; use lambda_plus for boundary values")
    H = theta.hurst
    p = 1.0 - 2.0 * H
    return eps + 0.5 * theta.sigma2 * math.gamma(2.0 * H + 1.0) * (z ** p + (-z) ** p)


def _alpha_parts(theta: Theta, eps):
    H = theta.hurst
    num = theta.sigma2 * a_constant(H) * math.sin((H - 0.5) * math.pi)
    cos_part = theta.sigma2 * a_constant(H) * math.cos((H - 0.5) * math.pi)
    return num, cos_part


def alpha(theta: Theta, eps, tau):
    """Principal argument of Lambda^+: odd, decreasing on each half line.

    alpha(tau) = arctan( N / (eps |tau|^(2H-1) + C) ) * sign(tau) with
    N = sigma^2 a_H sin((H-1/2)pi) and C = sigma^2 a_H cos((H-1/2)pi).
    """
    eps = _check_eps(eps, allow_zero=True)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau == 0.0):
        raise ValueError("alpha is singular at tau = 0")
    num, cos_part = _alpha_parts(theta, eps)
    H = theta.hurst
    out = np.arctan(num / (eps * np.abs(tau) ** (2.0 * H - 1.0) + cos_part)) * np.sign(tau)
    return out if out.ndim else float(out)


def alpha_prime(theta: Theta, eps, tau):
    """d alpha / d tau on the positive half line (analytic)."""
    eps = _check_eps(eps, allow_zero=True)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0.0):
        raise ValueError("alpha_prime is evaluated on tau > 0")
    num, cos_part = _alpha_parts(theta, eps)
    H = theta.hurst
    d = eps * tau ** (2.0 * H - 1.0) + cos_part
    dd = eps * (2.0 * H - 1.0) * tau ** (2.0 * H - 2.0)
    out = -num * dd / (num * num + d * d)
    return out if out.ndim else float(out)


def _xc_log_integral(theta, eps, z, rel_tol):
    """(1/pi) * integral of alpha(tau)/(tau - z) over (0, inf), z off R+."""
    num, cos_part = _alpha_parts(theta, eps)
    H = theta.hurst
    alpha0 = (H - 0.5) * math.pi

    abs_z = abs(z)
    tau0 = 1e-9 * min(1.0, abs_z) if abs_z > 0 else 1e-9
    big = max(1e7, 1e3 * abs_z)

    # head: alpha is alpha(0+) + O(tau^(2H-1)) near the origin
    head = alpha0 * cmath.log((tau0 - z) / (-z))

    def integrand(u):
        tau = np.exp(u)
        a_vals = np.arctan(num / (eps * tau ** (2.0 * H - 1.0) + cos_part))
        return (a_vals * tau / (tau - z))[None, :]

    u_lo, u_hi = math.log(tau0), math.log(big)
    u_z = math.log(abs_z) if abs_z > 0 else u_lo

    def edges_for(n_base):
        edges = list(np.linspace(u_lo, u_hi, n_base + 1))
        if u_lo < u_z < u_hi:
            edges += list(np.linspace(max(u_lo, u_z - 3.0), min(u_hi, u_z + 3.0), n_base + 1))
        return np.unique(np.array(edges))

    n = 64
    prev = None
    while n <= 16384:
        main = complex(_panel_integrate(integrand, edges_for(n))[0])
        if prev is not None and abs(main - prev) <= rel_tol * max(1.0, abs(main)):
            break
        prev = main
        n *= 2
    else:
        raise QuadratureError("canonical-function quadrature did not converge")

    # tail: alpha(tau) ~ (N/eps) tau^(1-2H) (1 - (C/eps) tau^(1-2H) + ...) minus
    # the cubic arctan correction, integrated against the 1/(tau - z) expansion.
    ratio = num / eps
    p = 1.0 - 2.0 * H
    tail = ratio * big ** p / (2.0 * H - 1.0)
    tail += z * ratio * big ** (p - 1.0) / (2.0 * H)
    tail += z * z * ratio * big ** (p - 2.0) / (2.0 * H + 1.0)
    tail -= ratio * (cos_part / eps) * big ** (2.0 * p) / (4.0 * H - 2.0)
    tail -= (ratio ** 3 / 3.0) * big ** (3.0 * p) / (6.0 * H - 3.0)

    return (head + main + tail) / math.pi


def x_canonical(theta: Theta, eps, z, rel_tol=1e-9, axis_tol=1e-8):
    """Canonical sectionally holomorphic solution X_c(z), z off the positive real axis.

    Sokhotski-Plemelj representation X_c(z) = exp((1/pi) int_0^inf alpha(tau)/(tau-z) dtau),
    evaluated with log-spaced Gauss-Legendre panels, an analytic head at the
    origin and an analytic tail from the large-tau expansion of alpha.
    """
    eps = _check_eps(eps)
    z = complex(z)
    if z == 0:
        raise PoleProximityError("X_c is singular at z = 0")
    if z.real > 0 and abs(z.imag) <= axis_tol * abs(z):
        raise PoleProximityError(f"z = {z} lies too close to the positive real axis")
    return cmath.exp(_xc_log_integral(theta, eps, z, rel_tol))


def h_function(theta: Theta, eps, tau, quad_tol=1e-10):
    """Real kernel h(tau) = exp(-(1/pi) int alpha'(s) log|(tau+s)/(tau-s)| ds) sin(alpha(tau)).

    The integral is split at the logarithmic singularity s = tau; alpha' is
    analytic, so each piece is a well-behaved improper integral.
    """
    eps = _check_eps(eps)
    tau = float(tau)
    if tau <= 0:
        raise ValueError("h_function is evaluated on tau > 0")

    def f(s):
        return alpha_prime(theta, eps, s) * math.log(abs((tau + s) / (tau - s)))

    outer = max(100.0 * tau, 1.0)
    decades = [2.0 * tau * 10.0 ** k for k in range(1, 40) if 2.0 * tau * 10.0 ** k < outer]
    cuts = sorted({0.5 * tau, tau, 2.0 * tau, *decades, outer})
    pieces = []
    lo = 0.0
    for hi in cuts:
        val, _ = integrate.quad(f, lo, hi, epsabs=quad_tol, epsrel=quad_tol, limit=300)
        pieces.append(val)
        lo = hi
    val, _ = integrate.quad(f, lo, np.inf, epsabs=quad_tol, epsrel=quad_tol, limit=300)
    pieces.append(val)
    total = sum(pieces)
    return math.exp(-total / math.pi) * math.sin(alpha(theta, eps, tau))


def inverse_sqrt(matrix):
    """Symmetric inverse square root of an SPD 2x2 matrix."""
    w, v = np.linalg.eigh(np.asarray(matrix, dtype=float))
    if w.min() <= 0:
        raise SingularInformationError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def log_shear(theta: Theta, eps):
    """Unit upper-triangular shear [[1, -2 sigma^2 log eps^(-gamma)], [0, 1]].

    This is the parameter mixing induced by the small-noise scaling of the
    integral-equation solution; the full normalization of the joint regime is
    eps^(-1/(4H-2)) times this matrix (see small_noise_m).
    """
    eps = _check_eps(eps)
    m = 2.0 * theta.sigma2 * theta.gamma * math.log(1.0 / eps)
    return np.array([[1.0, -m], [0.0, 1.0]])


def small_noise_m(theta: Theta, eps):
    """Small-noise rate matrix M(eps, theta) = eps^(-1/(4H-2)) * log_shear."""
    return eps ** (-1.0 / (4.0 * theta.hurst - 2.0)) * log_shear(theta, eps)


def nu_matrix(theta: Theta, eps):
    """Second-order scaling matrix of the Hessian identity.

    nu = [[4 sigma^2 L^2, -2 L], [-2 L, 0]] with L = log eps^(-gamma).
    """
    eps = _check_eps(eps)
    L = theta.gamma * math.log(1.0 / eps)
    return np.array([[4.0 * theta.sigma2 * L * L, -2.0 * L], [-2.0 * L, 0.0]])


def rate_schedule(regime, theta0: Theta, eps_or_T, *, eps=1.0, T=1.0,
                  fisher: FisherMatrix | None = None,
                  quad: QuadConfig | None = None) -> RateSchedule:
    """Normalizing rates of the four LAN regimes.

    regime "large-time": eps_or_T is the horizon T; returns the matrix
        phi(T) = T^(-1/2) I(theta0, eps)^(-1/2).
    regime "small-noise-joint": eps_or_T is eps; returns the matrix
        phi = L^(-T) from the lower Cholesky factor L of
        M(eps) T I(theta0, 1) M(eps)^T, so that phi^T M T I M^T phi = Id.
    regime "small-noise-H-only" / "small-noise-sigma-only": eps_or_T is eps;
        returns the scalar one-parameter rates.
    """
    if regime == "large-time":
        T_val = float(eps_or_T)
        if T_val <= 0:
            raise ValueError("horizon must be positive")
        info = fisher or fisher_information(theta0, eps, quad)
        scaling = inverse_sqrt(info.entries) / math.sqrt(T_val)
        return RateSchedule(regime=regime, scaling=scaling, log_factor=1.0)

    eps_val = _check_eps(eps_or_T)
    if eps_val >= 1.0 and regime != "small-noise-joint":
        # log eps^(-1) <= 0 breaks the one-parameter normalizations
        raise ValueError("small-noise regimes require eps < 1")
    info = fisher or fisher_information(theta0, 1.0, quad)
    I = info.entries
    T = float(T)

    if regime == "small-noise-joint":
        M = small_noise_m(theta0, eps_val)
        core = M @ (T * I) @ M.T
        try:
            L = np.linalg.cholesky(core)
        except np.linalg.LinAlgError as exc:
            raise SingularInformationError("rate core is not positive definite") from exc
        phi = np.linalg.inv(L).T
        return RateSchedule(regime=regime, scaling=phi, log_factor=math.log(1.0 / eps_val))

    H0, s20 = theta0.hurst, theta0.sigma2
    pref = eps_val ** (1.0 / (4.0 * H0 - 2.0))
    if regime == "small-noise-H-only":
        scal = pref / math.log(1.0 / eps_val) * (H0 - 0.5) / s20 / math.sqrt(T * I[1, 1])
        return RateSchedule(regime=regime, scaling=scal, log_factor=math.log(1.0 / eps_val))
    if regime == "small-noise-sigma-only":
        scal = pref / math.sqrt(T * I[1, 1])
        return RateSchedule(regime=regime, scaling=scal, log_factor=1.0)
    raise ValueError(f"unknown regime {regime!r}")

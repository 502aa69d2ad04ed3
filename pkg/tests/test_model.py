import math

import numpy as np
import pytest
from scipy import integrate

from mixedfbm.model import (Theta, SamplePath, a_constant, da_constant, kernel_K,
                            spectral_density, fbm_covariance, fgn_autocovariance,
                            mixed_covariance_matrix, simulate_mixed_fbm,
                            simulate_mixed_family, replicate_seed)
import mixedfbm.model as model_mod


def test_theta_box():
    Theta(0.8, 1.0)
    with pytest.raises(ValueError):
        Theta(0.75, 1.0)
    with pytest.raises(ValueError):
        Theta(1.0, 1.0)
    with pytest.raises(ValueError):
        Theta(0.8, 0.0)
    assert Theta(0.8, 1.0).gamma == pytest.approx(1.0 / 0.6, rel=1e-15)


def test_a_constant_values():
    # Gamma(2) sin(pi/2) = 1
    assert a_constant(0.5) == pytest.approx(1.0, abs=1e-15)
    # frozen high-precision oracle values (mpmath, 30 digits)
    assert a_constant(0.75) == pytest.approx(0.939985602986625188, rel=1e-13)
    assert a_constant(0.9) == pytest.approx(0.518064144332254160, rel=1e-13)
    assert 0 < a_constant(0.9) < 2 * a_constant(0.75)
    with pytest.raises(ValueError):
        a_constant(0.0)
    with pytest.raises(ValueError):
        a_constant(1.0)


def test_da_constant_matches_finite_differences():
    for H in (0.6, 0.76, 0.85, 0.93):
        d = 1e-6
        fd = (a_constant(H + d) - a_constant(H - d)) / (2 * d)
        assert da_constant(H) == pytest.approx(fd, rel=1e-8)


def test_kernel_values_and_evenness():
    # Theta's box is open at 3/4, so probe the stated boundary value from inside
    th = Theta(0.75 + 1e-12, 1.0)
    assert kernel_K(th, 1.0) == pytest.approx(0.375, abs=1e-11)
    assert kernel_K(th, -2.0) == kernel_K(th, 2.0)
    # direct formula oracle 2 * 0.8 * 0.6 * 0.5^-0.4
    assert kernel_K(Theta(0.8, 2.0), 0.5) == pytest.approx(1.266727594341978, rel=1e-13)
    # strictly decreasing in |tau|
    taus = np.linspace(0.1, 5.0, 50)
    vals = kernel_K(th, taus)
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(ValueError):
        kernel_K(th, 0.0)


def test_spectral_density_floor_and_evenness():
    th = Theta(0.75 + 1e-12, 1.0)
    assert spectral_density(th, 0.0, 1.0) == pytest.approx(a_constant(0.75), rel=1e-11)
    assert spectral_density(th, 0.3, -3.0) == spectral_density(th, 0.3, 3.0)
    lam = np.logspace(-3, 6, 40)
    assert np.all(spectral_density(Theta(0.9, 2.0), 0.7, lam) >= 0.7)
    with pytest.raises(ValueError):
        spectral_density(th, 1.0, 0.0)


def test_fbm_covariance():
    assert fbm_covariance(0.8, 1.0, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert fbm_covariance(0.5, 1.0, 3.0) == pytest.approx(1.0, rel=1e-15)
    # oracle (2^1.5 + 1 - 1)/2 = sqrt(2)
    assert fbm_covariance(0.75, 1.0, 2.0) == pytest.approx(math.sqrt(2.0), rel=1e-14)
    assert fbm_covariance(0.8, 0.3, 2.0) == fbm_covariance(0.8, 2.0, 0.3)
    with pytest.raises(ValueError):
        fbm_covariance(0.8, -1.0, 1.0)


def test_fourier_pair_on_truncated_windows():
    # cosine transform of the kernel approaches sigma^2 a_H |lam|^(1-2H) as
    # the truncation window grows; the integral converges conditionally, so
    # windows half an oscillation apart are averaged to cancel the
    # O(w^(2H-2)) boundary term
    th = Theta(0.85, 1.0)
    lam = 2.0

    def truncated_ft(window):
        val = 0.0
        for w in (window, window + math.pi / lam):
            piece, _ = integrate.quad(lambda t: kernel_K(th, t), 1e-12, w,
                                      weight="cos", wvar=lam, limit=400)
            val += piece
        return val  # = 2 * mean of the two one-sided integrals

    target = spectral_density(th, 0.0, lam)
    errors = [abs(truncated_ft(w) - target) / target for w in (5.0, 50.0, 500.0)]
    assert errors[2] < errors[1] < errors[0]
    assert errors[2] < 1e-2


def test_fgn_autocovariance_consistency():
    # increments covariance equals second difference of the fBm covariance
    H, dt = 0.85, 0.25
    gamma = fgn_autocovariance(H, 5, dt)
    for k in range(5):
        direct = (fbm_covariance(H, dt, (k + 1) * dt) - fbm_covariance(H, dt, k * dt)
                  - (fbm_covariance(H, 0.0, (k + 1) * dt) - fbm_covariance(H, 0.0, k * dt)))
        assert gamma[k] == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_simulate_determinism_and_seed_derivation():
    th = Theta(0.85, 1.2)
    p1 = simulate_mixed_fbm(th, 0.5, 64, 0.125, 12345)
    p2 = simulate_mixed_fbm(th, 0.5, 64, 0.125, 12345)
    assert np.array_equal(p1.values, p2.values)
    assert p1.values[0] == 0.0
    assert replicate_seed(7, 3) == replicate_seed(7, 3)
    assert replicate_seed(7, 3) != replicate_seed(7, 4)
    p3 = simulate_mixed_fbm(th, 0.5, 64, 0.125, replicate_seed(7, 3))
    p4 = simulate_mixed_fbm(th, 0.5, 64, 0.125, replicate_seed(7, 3))
    assert np.array_equal(p3.values, p4.values)


def test_simulate_marginal_variance():
    # eps ~ 0, sigma2 = 1: Var X_1 should be 1 within 3 MC standard errors
    th = Theta(0.8, 1.0)
    reps = 10_000
    x1 = np.empty(reps)
    for r in range(reps):
        p = simulate_mixed_fbm(th, 1e-12, 8, 0.125, replicate_seed(2024, r))
        x1[r] = p.values[8]
    var = x1.var(ddof=1)
    se = var * math.sqrt(2.0 / (reps - 1))
    assert abs(var - 1.0) < 3 * se


def test_simulate_brownian_limit():
    # sigma2 -> 0: increment variance approaches eps * dt
    th = Theta(0.85, 1e-12)
    eps, dt = 0.7, 0.25
    incr = np.concatenate([
        simulate_mixed_fbm(th, eps, 256, dt, replicate_seed(55, r)).increments
        for r in range(40)
    ])
    var = incr.var(ddof=1)
    se = var * math.sqrt(2.0 / (incr.size - 1))
    assert abs(var - eps * dt) < 4 * se


def test_empirical_covariance_matrix():
    # 8-point grid, 10^4 replicates: entrywise within 4 standard errors of
    # sigma^2 fbm_covariance + eps min(s, t)
    th = Theta(0.85, 1.0)
    eps, dt, n = 0.5, 0.5, 8
    reps = 10_000
    samples = np.empty((reps, n))
    for r in range(reps):
        samples[r] = simulate_mixed_fbm(th, eps, n, dt, replicate_seed(314, r)).values[1:]
    emp = samples.T @ samples / reps
    times = np.arange(1, n + 1) * dt
    true = mixed_covariance_matrix(th, eps, times)
    se = np.sqrt((np.outer(np.diag(true), np.diag(true)) + true ** 2) / reps)
    assert np.all(np.abs(emp - true) < 4 * se)


def test_cholesky_fallback_path(monkeypatch):
    th = Theta(0.85, 1.0)
    monkeypatch.setattr(model_mod, "_fgn_circulant", lambda *a: None)
    with pytest.warns(RuntimeWarning):
        p = simulate_mixed_fbm(th, 0.1, 32, 0.25, 5)
    assert p.embedding_fallback
    # fallback covariance is the exact one: check one replicate batch roughly
    reps = 4000
    with pytest.warns(RuntimeWarning):
        xs = np.array([simulate_mixed_fbm(th, 0.0, 4, 1.0, replicate_seed(9, r)).values[4]
                       for r in range(reps)])
    var = xs.var(ddof=1)
    se = var * math.sqrt(2.0 / (reps - 1))
    assert abs(var - 4.0 ** (2 * th.hurst)) < 4 * se


def test_family_shares_draws():
    th = Theta(0.85, 1.0)
    fam = simulate_mixed_family(th, (0.0, 0.25, 1.0), 64, 1 / 64, 42)
    d0 = fam[0.0].increments
    d1 = fam[0.25].increments
    d2 = fam[1.0].increments
    bm1 = (d1 - d0) / math.sqrt(0.25 / 64)
    bm2 = (d2 - d0) / math.sqrt(1.0 / 64)
    assert np.allclose(bm1, bm2, rtol=1e-9, atol=1e-12)


def test_sample_path_invariants():
    th = Theta(0.8, 1.0)
    with pytest.raises(ValueError):
        SamplePath(dt=0.0, values=np.zeros(4), theta=th, eps=0.1, seed=0)
    with pytest.raises(ValueError):
        SamplePath(dt=0.1, values=np.array([1.0, 2.0, 3.0]), theta=th, eps=0.1, seed=0)
    with pytest.raises(ValueError):
        simulate_mixed_fbm(th, -0.1, 8, 0.1, 0)
    p = simulate_mixed_fbm(th, 0.2, 8, 0.25, 1)
    assert p.horizon == pytest.approx(2.0)
    assert p.n_increments == 8

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from stochairy import sae, sai
from stochairy.airy import ai, ai_prime, ai_zeros
from stochairy.rng import Seed, sample_brownian_path, zero_path


def path(seed, T=14.0, dt=1e-4, beta=2.0, lo=0.0):
    return sample_brownian_path(Seed(seed), lo, dt, int(round((T - lo) / dt)), beta,
                                "two-sided" if lo < 0 else "forward")


def I_oracle(t):
    """``int_0^t int_0^u exp(4/3 (2 r^1.5 - t^1.5 - u^1.5)) dr du`` by nested quadrature."""
    t = mp.mpf(t)
    inner = lambda u: mp.quad(lambda r: mp.exp(mp.mpf(4) / 3 * (2 * r ** 1.5 - t ** 1.5 - u ** 1.5)), [0, u])
    return mp.quad(inner, [0, t])


def test_X_starts_at_zero():
    p = path(1, T=1.0)
    assert sai.compute_X(p, np.linspace(0, 1, 11))[0] == 0.0


def test_X_variance_at_small_time():
    s = Seed(2)
    grid = np.linspace(0, 0.01, 101)
    x = np.array([sai.compute_X(sample_brownian_path(s.child(i), 0.0, 1e-4, 100, 2.0), grid)[-1]
                  for i in range(10**5)])
    assert x.var() == pytest.approx(2.0 * 0.01, rel=0.05)


@pytest.mark.slow
def test_X_variance_at_large_time():
    s = Seed(3)
    dt, T = 2e-3, 25.0
    n = int(round(T / dt))
    grid = dt * np.arange(n + 1)
    x = np.array([sai.compute_X(sample_brownian_path(s.child(i), 0.0, dt, n, 2.0), grid)[-1]
                  for i in range(10**4)])
    assert x.var() == pytest.approx(1 / (2 * math.sqrt(T)), rel=0.05)


@pytest.mark.parametrize("t", [0.5, 2.0, 5.0])
def test_mean_correction_against_nested_quadrature(t):
    mp.mp.dps = 20
    ref = 4 / 2.0 * float(I_oracle(t))
    assert sai.mean_correction(t, 2.0) == pytest.approx(ref, rel=1e-8)


def test_noise_free_theta():
    t = np.linspace(0.1, 10, 50)
    assert np.all(sai.theta(0.0, t, 0.0, np.inf) == np.sqrt(t) - 1 / (4 * (t + 1)))


def test_mean_correction_asymptotics():
    assert sai.mean_correction(50.0, 2.0) == pytest.approx(0.005, rel=0.1)


def test_theta_process_matches_pointwise_theta():
    p = path(4, T=5.0, dt=1e-3)
    th = sai.theta_process(p, 0.7, 5.0, 1e-3)
    t = th.grid[1:]
    ref = sai.theta(0.7, t, th.X[1:], 2.0)
    assert np.max(np.abs(th.theta[1:] - ref)) < 1e-10


def test_compensator_makes_the_exponential_mean_one():
    T, dt, M = 4.0, 1e-3, 10**4
    s = Seed(5)
    n = int(round(T / dt))
    vals = []
    for i in range(M):
        th = sai.theta_process(sample_brownian_path(s.child(i), 0.0, dt, n, 2.0), 0.0, T, dt)
        vals.append(math.exp(th.int_X[-1] - th.int_mean_correction[-1]))
    vals = np.array(vals)
    assert abs(vals.mean() - 1) < 3 * vals.std(ddof=1) / math.sqrt(M)


def test_c_star_integrand_at_origin():
    assert math.exp(4 / 3 * (2 * 0.0 ** 1.5 - 0.0 - 0.0)) == 1.0


def test_c_star_converges_in_cutoff():
    a, _ = sai.c_star(T_cut=20)
    b, _ = sai.c_star(T_cut=40)
    assert abs(a - b) < 1e-3


def test_c_star_golden_value():
    v, err = sai.c_star(T_cut=40)
    assert err < 1e-6
    assert abs(v - sai.c_star_golden()) < 1e-6
    assert sai.c_star_golden() == pytest.approx(0.2423913839, abs=1e-10)


@pytest.mark.parametrize("lam", [-1.0, 0.0, 1.0])
def test_noise_free_sai_is_airy(lam):
    p = zero_path(-5.0, 1e-4, 170000)
    s = sai.sai_backward(p, lam, T=12.0, t_min=-5.0)
    k = s.times <= 8.0 + 1e-9
    assert np.max(np.abs(s.sai[k] - ai(s.times[k] + lam))) < 1e-3


@pytest.mark.parametrize("seed", ["airy", "asymptotic"])
def test_other_seeds_run(seed):
    p = zero_path(0.0, 1e-3, 12000)
    s = sai.sai_backward(p, 0.0, T=12.0, t_min=0.0, dt=1e-3, seed=seed)
    assert abs(s.sai[0] - ai(0.0)) < (1e-4 if seed == "airy" else 0.02)


@pytest.mark.xfail(strict=True, reason="SAi depends on the noise beyond T (about 1% at T=12); see decisions ledger")
def test_seed_time_robustness():
    p = path(6, T=14.0, lo=-5.0)
    a = sai.sai_backward(p, 0.0, T=12.0, t_min=-5.0)
    b = sai.sai_backward(p, 0.0, T=14.0, t_min=-5.0)
    k = a.times <= 6.0
    assert np.max(np.abs(a.sai[k] / b.sai[: k.sum()] - 1)) < 1e-4


def test_seed_time_changes_only_the_amplitude():
    p = path(6, T=14.0, lo=-5.0)
    a = sai.sai_zero_scan(p, (-8.0, 4.0), dt=1e-3, T=12.0)
    b = sai.sai_zero_scan(p, (-8.0, 4.0), dt=1e-3, T=14.0)
    assert np.max(np.abs(a.eigenvalues - b.eigenvalues)) < 1e-3


def test_sai_volterra_residual():
    dt, T = 1e-4, 12.0
    p = path(7, T=T, lo=-5.0)
    c1, c2 = sai.seed_values(p, 0.0, T, dt)
    sol = sae.solve_ivp(p, 0.0, T, float(c1), float(c2), -5.0, T, dt)
    r = sae.volterra_residual(sol)
    assert np.max(np.abs(r[sol.times <= T - 1])) < 10 * dt


@pytest.mark.xfail(strict=True, reason="measured 67.5% at 200 seeds; see decisions ledger")
def test_forward_limit_differences_shrink():
    ok = 0
    for i in range(200):
        v = sai.sai_forward_limit(path(1000 + i), 0.0, 0.0, (8.0, 10.0, 12.0), dt=1e-3).values
        ok += abs(v[2] - v[1]) < abs(v[1] - v[0])
    assert ok >= 180


def test_forward_limit_matches_backward_construction():
    bad = 0
    for i in range(100):
        p = path(2000 + i, dt=1e-3)
        fl = sai.sai_forward_limit(p, 0.0, 0.0, (14.0,), dt=1e-3)
        b = sai.sai_backward(p, 0.0, T=14.0, t_min=0.0, dt=1e-3)
        ref = -math.sqrt(math.pi) * b.sai_prime[0]
        bad += abs(fl.extrapolated / ref - 1) > 0.02
    assert bad == 0


def test_noise_free_forward_limit():
    p = zero_path(0.0, 1e-4, 140000)
    fl = sai.sai_forward_limit(p, 0.0, 0.0)
    assert abs(fl.extrapolated + math.sqrt(math.pi) * ai_prime(0.0)) < 1e-3


def test_envelope_constant():
    assert sai.ENVELOPE_CONST == pytest.approx(0.28209479177, abs=1e-11)


def _envelope(seed, dt=1e-4, T=14.0, convention="consistent"):
    p = path(seed, T=T, dt=dt)
    s = sai.sai_backward(p, 0.0, T=T, t_min=0.0, dt=dt)
    th = sai.theta_process(p, 0.0, T, dt)
    return [sai.envelope_check(s, th, tf, convention=convention) for tf in (6.0, 8.0, 10.0)]


def test_envelope_band_and_decrease():
    d = np.array([_envelope(3000 + i) for i in range(200)])
    assert np.mean(d[:, 1] < 8 ** -0.5) >= 0.99
    med = np.median(d, axis=0)
    assert med[0] > med[1] > med[2]


def test_envelope_derivative_band():
    p = path(3500)
    s = sai.sai_backward(p, 0.0, T=14.0, t_min=0.0)
    th = sai.theta_process(p, 0.0, 14.0, 1e-4)
    assert sai.envelope_check(s, th, 8.0, ell=1) < 8 ** -0.5


def test_printed_exponent_misses_the_band():
    d = np.array([_envelope(3600 + i, convention="printed") for i in range(20)])
    assert np.median(d[:, 1]) > 8 ** -0.5


def test_square_integral_dominated_by_envelope():
    # compared on the envelope's own range [4, T - 2]; near t = 0 the
    # asymptotic profile says nothing about SAi
    ok = 0
    M = 100
    cs = sai.c_star_golden()
    for i in range(M):
        p = path(4000 + i, dt=1e-3)
        s = sai.sai_backward(p, 0.0, T=14.0, t_min=0.0, dt=1e-3)
        th = sai.theta_process(p, 0.0, 14.0, 1e-3)
        t = s.times
        k = (t >= 4.0) & (t <= 12.0)
        pred = sai.ENVELOPE_CONST * np.exp(-2 / 3 * t[k] ** 1.5 - th.int_X[k] + cs)
        r = trapezoid(s.sai[k] ** 2, t[k]) / trapezoid(pred ** 2, t[k])
        assert np.isfinite(trapezoid(s.sai ** 2, t))
        ok += 0.5 <= r <= 2.0
    assert ok >= 0.95 * M


def test_noise_free_zero_scan():
    p = zero_path(0.0, 1e-3, 12000)
    z = sai.sai_zero_scan(p, dt=1e-3)
    assert abs(z.eigenvalues[0] + 2.33811) < 1e-3
    assert np.max(np.abs(z.eigenvalues - ai_zeros(3))) < 1e-3


def test_zero_scan_points_decrease():
    for i in range(10):
        z = sai.sai_zero_scan(path(5000 + i, dt=1e-3), dt=1e-3)
        assert np.all(np.diff(z.eigenvalues) < 0)


def test_shift_by_zero_gives_identical_samples():
    r = sai.shift_invariance_test(Seed(6), 0.0, M=1000)
    assert r.ks == 0.0


@pytest.mark.xfail(strict=True, reason="the normalization is not shift covariant in law; see decisions ledger")
def test_shift_invariance_in_law():
    r = sai.shift_invariance_test(Seed(7), 1.0, M=3000)
    assert r.ks < r.critical


def test_shift_preserves_sign_frequencies():
    M = 3000
    r = sai.shift_invariance_test(Seed(7), 1.0, M=M)
    p1, p2 = np.mean(r.base < 0), np.mean(r.shifted < 0)
    se = math.sqrt(p1 * (1 - p1) / M + p2 * (1 - p2) / M)
    assert abs(p1 - p2) < 3 * se


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10**6))
def test_int_theta_is_affine_in_lambda(l1, l2, seed):
    p = path(seed, T=3.0, dt=1e-3)
    a = sai.theta_process(p, l1, 3.0, 1e-3).int_theta
    b = sai.theta_process(p, l2, 3.0, 1e-3).int_theta
    t = np.linspace(0, 3.0, a.size)
    assert np.max(np.abs(a - b - (l1 - l2) * np.sqrt(t))) < 1e-12


def test_envelope_rejects_early_start():
    p = path(8, T=14.0, dt=1e-3)
    s = sai.sai_backward(p, 0.0, T=14.0, t_min=0.0, dt=1e-3)
    with pytest.raises(ValueError):
        sai.envelope_check(s, sai.theta_process(p, 0.0, 14.0, 1e-3), 2.0)

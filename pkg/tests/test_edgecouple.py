import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochairy import edgecouple as ec, gbe
from stochairy.airy import ai
from stochairy.rng import Seed


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_conformal_map_identity(x, y):
    z = complex(x, y)
    if abs(y) < 1e-6 and abs(x) <= 1:
        return
    J = ec.conformal_J(z)
    assert abs(J * (z + np.sqrt(z - 1) * np.sqrt(z + 1)) - 1) < 1e-12
    assert abs(J) < 1


def test_conformal_map_on_the_real_axis():
    z = 1.5
    assert ec.conformal_J(z) == pytest.approx(z - math.sqrt(z * z - 1), abs=1e-15)


def test_gaf_vanishes_at_time_zero():
    ens = gbe.sample_jacobi(Seed(1), 500, 2.0)
    s = ec.gaf_g(ens, 0.0, 1.5)
    assert s.value == 0 and s.variance == 0


def test_gaf_rejects_the_cut():
    ens = gbe.sample_jacobi(Seed(1), 500, 2.0)
    with pytest.raises(ValueError):
        ec.gaf_g(ens, 0.5, 0.3)


def test_gaf_is_linear_in_the_increments():
    ens = gbe.sample_jacobi(Seed(2), 400, 2.0)
    z = 1.3 + 0.2j
    v = ec._gaf_sum(ens.X, ens.Y, 400, 400, z)
    w = ec._gaf_sum(2 * ens.X, 2 * ens.Y, 400, 400, z)
    assert abs(w - 2 * v) < 1e-14 * abs(v)


def test_gaf_variance_matches_quadrature():
    s = Seed(3)
    v = np.array([ec._gaf_full(gbe.sample_jacobi(s.child(i), 1000, 2.0), 1.5)[0]
                  for i in range(10**4)])
    q, m2 = ec.gaf_moments(1.0, 1.5)
    assert np.max(np.abs(v.imag)) == 0.0
    assert v.var() == pytest.approx(q, rel=0.05)
    assert m2 == pytest.approx(q)


def test_complex_moments_are_consistent():
    v, m2 = ec.gaf_moments(0.6, 1.2 + 0.5j)
    assert v > abs(m2) > 0


def test_planar_ratio_noise_free_is_one():
    r = ec.planar_ratio_check(gbe.noise_free_jacobi(2000), [1.5, 2.0, 1.2 + 0.3j], noise_free=True)
    assert np.max(r.deviation) < 1e-12


def test_planar_ratio_median_and_trend():
    M = 200
    d = {}
    for N in (10**4, 2 * 10**4):
        s = Seed(4).child(N)
        d[N] = np.median([ec.planar_ratio_check(gbe.sample_jacobi(s.child(i), N, 2.0), [1.5]).deviation[0]
                          for i in range(M)])
    assert d[10**4] < 0.1
    assert d[2 * 10**4] < d[10**4]


def test_window_parameters():
    run = ec.coupled_run(Seed(5), 10**5, 2.0, t_path=2.0)
    T = math.log(10**5) ** 0.9
    assert run.T == T
    assert run.N_H == run.N_p - math.ceil(run.N_p ** (1 / 3) * T)


def test_path_equals_scaled_walk_at_mesh_points():
    # B(j N_p^(-1/3)) = -sqrt(2/beta) N_p^(-1/6) sum over rows (N_p - j, N_p] of (X_k + g_k)
    run = ec.coupled_run(Seed(6), 10**5, 2.0, t_path=2.0)
    hw = run.N_p ** (-1 / 3)
    G = run.ens.Y.copy()
    G[run.window_lo - 1:run.N_p] = run.g
    S = np.concatenate([[0.0], np.cumsum(run.ens.X + G)])
    j = np.arange(int(2.0 / hw))
    ref = -math.sqrt(2 / 2.0) * run.N_p ** (-1 / 6) * (S[run.N_p] - S[run.N_p - j])
    idx = np.rint(j * hw / run.edge_path.dt).astype(int)
    assert np.max(np.abs(run.edge_path.values[idx] - ref)) < 1e-12


def test_shared_noise_determinism():
    a = ec.coupled_run(Seed(7), 10**5, 2.0)
    b = ec.coupled_run(Seed(7), 10**5, 2.0)
    assert np.array_equal(a.ens.b, b.ens.b) and np.array_equal(a.ens.a, b.ens.a)
    assert np.array_equal(a.edge_path.values, b.edge_path.values)
    ta = ec.psi_vs_sai(a, [0.0, 1.0], [0.0, 1.0])
    tb = ec.psi_vs_sai(b, [0.0, 1.0], [0.0, 1.0])
    assert np.array_equal(ta.deviation, tb.deviation)
    ua, ub = ec.upsilon_diagnostic(a, [0.0]), ec.upsilon_diagnostic(b, [0.0])
    assert np.array_equal(ua.upsilon1, ub.upsilon1)


def test_upsilon_noise_free_is_at_the_deterministic_error():
    run = ec.noise_free_run(10**6, t_path=2.0)
    u = ec.upsilon_diagnostic(run, [-1.0, 0.0, 1.0])
    bound = run.T / run.N_p ** (1 / 3)
    assert np.max(np.abs(u.upsilon1)) < bound
    assert np.max(np.abs(u.upsilon2)) < bound


def test_upsilon_is_real_for_real_lambda():
    for i in range(10):
        u = ec.upsilon_diagnostic(ec.coupled_run(Seed(8).child(i), 10**5, 2.0, t_path=2.0), [0.0])
        assert abs(u.upsilon1[0].imag) < 1e-8


@pytest.mark.slow
def test_upsilon_median_at_a_million():
    vals = [ec.upsilon_diagnostic(ec.coupled_run(Seed(9).child(i), 10**6, 2.0, t_path=2.0), [0.0]).upsilon1[0]
            for i in range(200)]
    assert np.median(np.abs(np.exp(vals) - 1)) < 0.3


T_GRID = np.linspace(0.0, 4.0, 9)
L_GRID = np.linspace(-2.0, 2.0, 9)


def test_noise_free_pipeline_within_two_percent():
    p = ec.psi_vs_sai(ec.noise_free_run(10**5), T_GRID, L_GRID)
    assert np.max(np.abs(p.sai - ai(L_GRID[:, None] + T_GRID[None, :]))) < 1e-3
    assert p.relative_sup < 0.02


@pytest.mark.slow
def test_deviation_shrinks_from_1e5_to_8e5():
    med = {}
    for N in (10**5, 8 * 10**5):
        med[N] = np.median([ec.psi_vs_sai(ec.coupled_run(Seed(10).child(N, i), N, 2.0), T_GRID, L_GRID).sup
                            for i in range(60)])
    assert med[8 * 10**5] < 0.95 * med[10**5]


def test_top_zeros_match():
    ok = 0
    for i in range(100):
        p, s = ec.top_zero_match(ec.coupled_run(Seed(11).child(i), 10**5, 2.0))
        ok += abs(p - s) < 0.3
    assert ok >= 80


def test_prefactor_is_nearly_lambda_independent():
    lp = np.array([ec.log_prefactor(ec.coupled_run(Seed(12).child(i), 10**5, 2.0), [-1.0, 0.0, 1.0]).real
                   for i in range(100)])
    T = ec.window_T(10**5)
    assert np.std(lp[:, 0] - lp[:, 1], ddof=1) < 3 / T
    assert np.std(lp[:, 2] - lp[:, 1], ddof=1) < 3 / T


def test_noise_free_prefactor_is_one():
    assert np.all(ec.log_prefactor(ec.noise_free_run(10**5, t_path=2.0), [0.0, 1.0]) == 0)


def test_clt_rejects_small_samples():
    with pytest.raises(ValueError):
        ec.clt_statistic(1000, 2.0, 999)


@pytest.mark.slow
def test_clt_variance_and_beta_scaling():
    a = ec.clt_statistic(10**5, 2.0, 1000, Seed(13))
    b = ec.clt_statistic(10**5, 1.0, 1000, Seed(14))
    assert a.variance == pytest.approx(a.predicted_variance, rel=0.15)
    assert 1.7 <= b.variance / a.variance <= 2.3


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="O(1) mean offset of log|Psi_N(0)| at N=1e5; see decisions ledger")
def test_clt_ks_to_normal():
    assert ec.clt_statistic(10**5, 2.0, 2000, Seed(15)).ks < 0.05

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigvalsh_tridiagonal

from stochairy import gbe
from stochairy.airy import ai
from stochairy.rng import Seed
from stochairy.stats import ks_one_sample


def semicircle_cdf(x):
    x = np.clip(x, -1, 1)
    return 0.5 + (x * np.sqrt(1 - x * x) + np.arcsin(x)) / np.pi


def test_two_by_two_forced_draw():
    beta = 2.0
    ens = gbe.sample_jacobi(None, 2, beta, b=[0.0, 0.0], a=[math.sqrt(beta)])
    A = ens.matrix()
    assert np.allclose(A, np.array([[0, 1], [1, 0]]) * math.sqrt(beta) / math.sqrt(8 * beta))
    assert np.allclose(np.linalg.eigvalsh(A), [-1 / (2 * math.sqrt(2)), 1 / (2 * math.sqrt(2))])


def test_spectrum_follows_the_semicircle():
    ens = gbe.sample_jacobi(Seed(1), 2000, 2.0)
    ev = np.linalg.eigvalsh(ens.matrix())
    assert ks_one_sample(ev, semicircle_cdf) < 0.02


def test_off_diagonal_mean():
    s = Seed(2)
    a2 = np.array([gbe.sample_jacobi(s.child(i), 11, 1.0).a[9] ** 2 for i in range(10**5)])
    assert abs(a2.mean() - 10.0) < 0.15


def test_first_two_polynomials():
    ens = gbe.sample_jacobi(Seed(3), 50, 2.0)
    z = 0.3 + 0.2j
    seq = gbe.transfer_recurrence(ens, z, 1)
    v = seq.true_values()
    assert v[0] == 1.0
    assert abs(v[1] - (z - ens.b[0] / (2 * math.sqrt(50 * 2.0)))) < 1e-15


def test_recurrence_matches_dense_determinant_at_six():
    g = np.random.default_rng(4)
    ens = gbe.sample_jacobi(Seed(4), 6, 2.0)
    for _ in range(5):
        z = complex(g.uniform(-1.5, 1.5), g.uniform(-0.5, 0.5))
        d = np.linalg.det(z * np.eye(6) - ens.matrix())
        assert abs(gbe.transfer_recurrence(ens, z).true_values()[-1] - d) < 1e-12 * abs(d)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32), st.floats(-2, 2), st.floats(-1, 1),
       st.sampled_from([0.5, 1.0, 2.0, 4.0]))
def test_recurrence_equals_determinant_for_small_sizes(N, seed, x, y, beta):
    if N == 1:
        N = 2
    ens = gbe.sample_jacobi(Seed(seed), N, beta)
    z = complex(x, y)
    d = np.linalg.det(z * np.eye(N) - ens.matrix())
    if abs(d) < 1e-8:
        return
    assert abs(gbe.transfer_recurrence(ens, z).true_values()[-1] - d) < 1e-10 * abs(d)


def test_zeros_coincide_with_tridiagonal_eigenvalues():
    N = 2000
    ens = gbe.sample_jacobi(Seed(5), N, 2.0)
    z = gbe.polynomial_zeros(ens, (-10.0, 3.0))
    diag, off2 = ens.coefficients()
    ev = eigvalsh_tridiagonal(diag, np.sqrt(off2))[::-1]
    lam = gbe.edge_rescale(ev, N)
    lam = lam[(lam > -10) & (lam < 3)]
    assert z.size == lam.size > 3
    assert np.max(np.abs(z - lam)) < 1e-8
    x = 1 + z / (2 * N ** (2 / 3))
    assert np.max(np.abs(x - ev[: z.size])) < 1e-10


def test_largest_eigenvalues_match_lapack():
    ens = gbe.sample_jacobi(Seed(6), 500, 1.0)
    diag, off2 = ens.coefficients()
    ev = eigvalsh_tridiagonal(diag, np.sqrt(off2))[::-1]
    assert np.max(np.abs(gbe.largest_eigenvalues(ens, 3) - ev[:3])) < 1e-13


def test_first_hermite_polynomials():
    N, z = 7, 0.8 - 0.1j
    v = gbe.hermite_recurrence(N, z, 2).true_values()
    assert v[1] == z
    assert abs(v[2] - (z * z - 1 / (4 * N))) < 1e-15


def test_hermite_orthogonality():
    N = 10
    y, w = np.polynomial.hermite.hermgauss(20)
    x = y / math.sqrt(2 * N)  # weight exp(-2 N x^2)
    p2 = np.array([gbe.hermite_recurrence(N, xi, 2).true_values()[2] for xi in x])
    p1 = x
    assert abs(np.sum(w * p2)) / math.sqrt(2 * N) < 1e-12
    assert abs(np.sum(w * p2 * p1)) / math.sqrt(2 * N) < 1e-12


def test_mean_characteristic_polynomial_is_hermite():
    N, z, M = 200, 1.2, 10**5
    x = np.concatenate([gbe.characteristic_samples(Seed(7).child(i), N, 2.0, z, M // 5)
                        for i in range(5)])
    target = gbe.hermite_recurrence(N, z, N).true_values()[-1]
    se = x.std(ddof=1) / math.sqrt(M)
    assert abs(x.mean() - target) < 3 * se


def test_characteristic_samples_match_single_draws():
    # the vectorized sampler and the recurrence agree on forced coefficients
    N, z = 12, 0.9
    x = gbe.characteristic_samples(Seed(8), N, 2.0, z, 3)
    g = Seed(8).generator()
    s = 4.0 * N * 2.0
    d = g.normal(0.0, math.sqrt(2.0), (3, N))
    c = g.gamma(2.0 * np.arange(1, N) / 2.0, 2.0, (3, N - 1))
    for i in range(3):
        ens = gbe.sample_jacobi(None, N, 2.0, b=d[i], a=np.sqrt(c[i]))
        assert abs(gbe.transfer_recurrence(ens, z).true_values()[-1] - x[i]) < 1e-12 * max(1, abs(x[i]))


def test_normalizer_ratio():
    N = 1000
    for n in (1, 17, 500, 1000):
        lw = gbe.edge_normalizer(np.array([n - 1, n]), N, 1.01)
        assert math.exp(lw[1] - lw[0]) == pytest.approx(math.sqrt(4 * N / n), rel=1e-12)


def test_normalizer_is_finite_for_large_n():
    lw = gbe.edge_normalizer(10**6, 10**6, 1.0)
    assert np.isfinite(lw)


def test_psi_at_n_zero_is_the_normalizer():
    ens = gbe.sample_jacobi(Seed(9), 100, 2.0)
    v = gbe.rescaled_psi(ens, 0.5, 0)
    z = gbe.edge_z(0.5, 100)
    assert v.value == pytest.approx(math.exp(gbe.edge_normalizer(0, 100, z)), rel=1e-14)


@pytest.mark.xfail(strict=True, reason="finite-N turning-point shift gives 2.3% at N=4000; see decisions ledger")
def test_plancherel_rotach_at_zero_within_one_percent():
    m, l = gbe.psi_table(None, [0.0], [4000], N=4000)
    assert abs(m[0, 0] * math.exp(l[0, 0]) / 0.3550280539 - 1) < 0.01


@pytest.mark.xfail(strict=True, reason="relative error 8.5% at lambda=-2, N=4000; see decisions ledger")
def test_noise_free_psi_within_two_percent():
    lams = np.linspace(-2, 2, 41)
    m, l = gbe.psi_table(None, lams, [4000], N=4000)
    assert np.max(np.abs(m[:, 0] * np.exp(l[:, 0]) / ai(lams) - 1)) < 0.02


def test_noise_free_psi_error_shrinks_like_cube_root():
    lams = np.linspace(-2, 2, 41)
    errs = []
    for N in (4000, 32000):
        m, l = gbe.psi_table(None, lams, [N], N=N)
        errs.append(np.max(np.abs(m[:, 0] * np.exp(l[:, 0]) - ai(lams))))
    assert errs[0] < 0.02
    assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)


def test_sign_changes_locate_edge_eigenvalues():
    N = 2000
    ens = gbe.sample_jacobi(Seed(10), N, 2.0)
    lams = np.arange(-8.0, 3.0, 0.01)
    m, _ = gbe.psi_table(ens, lams, [N])
    v = np.real(m[:, 0])
    i = np.nonzero(np.sign(v[1:]) != np.sign(v[:-1]))[0]
    diag, off2 = ens.coefficients()
    ev = gbe.edge_rescale(eigvalsh_tridiagonal(diag, np.sqrt(off2))[::-1], N)
    ev = ev[(ev > -8) & (ev < 3)]
    assert i.size == ev.size
    from scipy.optimize import brentq
    f = lambda x: float(np.real(gbe.psi_table(ens, [x], [N])[0][0, 0]))
    roots = np.array([brentq(f, lams[k], lams[k + 1], xtol=1e-12) for k in i])[::-1]
    assert np.max(np.abs(roots - ev)) < 1e-8


def test_no_overflow_at_a_million():
    ens = gbe.noise_free_jacobi(10**6)
    seq = gbe.transfer_recurrence(ens, 1.0 + 1e-4)
    mags = np.abs(seq.values[1:])
    assert np.all(np.isfinite(seq.log_scale)) and np.all(mags > 1e-300) and np.all(mags < 1e300)
    assert seq.log_scale[-1] != 0.0


def test_finite_difference_noise_free_reduction():
    N = 10**5
    ens = gbe.noise_free_jacobi(N)
    n = np.arange(N - 200, N + 1)
    fd = gbe.finite_difference_view(ens, 0.7, n)
    c = N ** (1 / 3)
    det = c * (2 * ((1 + 0.7 / (2 * N ** (2 / 3))) * np.sqrt(N / fd_rows(fd, N)) - 1))
    assert np.max(np.abs(fd.R - det)) == 0.0
    assert np.max(np.abs(fd.S)) < 2 * N ** (-2 / 3)


def fd_rows(fd, N_p):
    return (N_p - fd.k + 1).astype(float)


def test_finite_difference_kernel_approaches_continuum_kernel():
    from stochairy.edgecouple import coupled_run
    from stochairy.sae import kernel_U
    sups = {}
    for N in (10**5, 8 * 10**5):
        vals = []
        for i in range(10):
            run = coupled_run(Seed(11).child(N, i), N, 2.0, t_path=4.0)
            c = run.N_p ** (1 / 3)
            rows = np.arange(run.N_p - int(4 * c) - 1, run.N_p + 1)
            fd = gbe.finite_difference_view(run.ens, 0.0, rows)
            t = np.linspace(0.0, 3.0, 31)
            d = fd.U(0.0, t) - kernel_U(run.edge_path, 0.0, t, 0.0)
            vals.append(np.max(np.abs(d)))
        sups[N] = np.median(vals)
    assert sups[8 * 10**5] < sups[10**5]

"""Shared-noise comparison of the characteristic polynomial with stochastic Airy objects.

One :class:`CoupledRun` holds a tridiagonal ensemble together with the edge
Brownian path built from the same noise. Rows inside the edge window draw
their chi-square entries by quantile coupling, so each row has a Gaussian
partner ``g_k`` sharing its uniform; the path uses ``X_k`` exactly and
``g_k`` in place of ``Y_k``. Rows below the window feed the Gaussian
field ``g_t(z)`` that carries the hyperbolic part of the recurrence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import integrate, special

from . import sai as _sai
from .airy import ai, ai_prime
from .gbe import (JacobiEnsemble, edge_normalizer, edge_z, hermite_recurrence,
                  noise_free_jacobi, psi_table, sample_jacobi, transfer_recurrence)
from .rng import (BrownianPath, as_seed, edge_brownian_from_walk, quantile_couple_gamma,
                  zero_path)
from .stats import ks_one_sample

# ---------------------------------------------------------------------------
# the Gaussian field g_t(z)


def conformal_J(z):
    """``J(z) = z - sqrt(z^2 - 1)``, the conformal map of C minus [-1, 1] onto the unit disk."""
    z = np.asarray(z, dtype=complex)
    r = np.sqrt(z - 1) * np.sqrt(z + 1)
    return 1.0 / (z + r)


@njit(cache=True)
def _gaf_sum(X, Y, K, N, z):
    acc = 0.0 + 0.0j
    sN = math.sqrt(N)
    for k in range(1, K + 1):
        u = (k - 0.5) / N
        su = math.sqrt(u)
        w = z / su
        J = 1.0 / (w + np.sqrt(w - 1.0) * np.sqrt(w + 1.0))
        r = np.sqrt(z - su) * np.sqrt(z + su)
        acc += (X[k - 1] + J * Y[k - 1]) / r
    return -0.5 * acc / sN


def _check_off_cut(t, z):
    z = complex(z)
    if abs(z.imag) < 1e-300 and abs(z.real) <= math.sqrt(t):
        raise ValueError("z lies on the cut [-sqrt(t), sqrt(t)]")
    return z


def gaf_moments(t: float, z):
    """``(E|g_t(z)|^2, E[g_t(z)^2])`` by quadrature of the integrand squared."""
    z = _check_off_cut(t, z)
    if t <= 0:
        return 0.0, 0.0 + 0.0j

    def parts(u):
        su = math.sqrt(u)
        J = conformal_J(z / su) if u > 0 else 0.0
        d = z * z - u
        return (1 + abs(J) ** 2) / abs(d), (1 + J * J) / d

    if z.imag == 0:
        # substitution s = -log(z^2 - u) removes the endpoint growth near the cut
        a = -math.log(z.real ** 2)
        b = -math.log(z.real ** 2 - t)

        def f(s):
            u = z.real ** 2 - math.exp(-s)
            J = float(np.real(conformal_J(z.real / math.sqrt(u)))) if u > 0 else 0.0
            return 1 + J * J

        v = integrate.quad(f, a, b, limit=200, epsabs=1e-13, epsrel=1e-11)[0] / 4
        return v, complex(v)
    v = integrate.quad(lambda u: parts(u)[0], 0, t, limit=200)[0] / 4
    re = integrate.quad(lambda u: parts(u)[1].real, 0, t, limit=200)[0] / 4
    im = integrate.quad(lambda u: parts(u)[1].imag, 0, t, limit=200)[0] / 4
    return v, complex(re, im)


@dataclass(frozen=True)
class GafSample:
    t: float
    z: complex
    value: complex
    variance: float
    second_moment: complex

    def log_mean_exp(self, c: float) -> complex:
        """``log E exp(c g)`` (Gaussian, holomorphic in z)."""
        return 0.5 * c * c * self.second_moment


def gaf_g(ens: JacobiEnsemble, t: float, z) -> GafSample:
    """``g_t(z) = -1/2 int_0^t (dX_u + J(z/sqrt u) dY_u) / sqrt(z^2 - u)``.

    Riemann-Stieltjes sum over rows ``k <= t N`` against the scaled walks
    (midpoint rule in ``u``); the moments come from :func:`gaf_moments`.
    """
    if not (0 <= t < 1):
        raise ValueError("t must lie in [0, 1)")
    z = _check_off_cut(t, z)
    K = int(math.floor(t * ens.N))
    val = _gaf_sum(ens.X, ens.Y, K, ens.N, z) if K > 0 else 0.0j
    v, m2 = gaf_moments(K / ens.N, z)
    return GafSample(t, z, complex(val), v, m2)


# ---------------------------------------------------------------------------
# planar ratio


@dataclass(frozen=True)
class PlanarTable:
    z: np.ndarray
    ratio: np.ndarray

    @property
    def deviation(self):
        return np.abs(self.ratio - 1.0)


def _gaf_full(ens, z):
    # g_1(z): the sum runs over all N rows (u up to 1)
    K = ens.N
    val = _gaf_sum(ens.X, ens.Y, K, ens.N, complex(z))
    return val, gaf_moments(1.0, z)[1]


def planar_ratio_check(ens: JacobiEnsemble, z_list, noise_free: bool = False) -> PlanarTable:
    """``Phi_N(z) E[exp(c g_1(z))] / (pi_N(z) exp(c g_1(z)))`` with ``c = sqrt(2/beta)``.

    ``noise_free=True`` treats the ensemble as the Hermite surrogate (no field).
    """
    z_list = np.atleast_1d(np.asarray(z_list))
    c = 0.0 if noise_free else math.sqrt(2.0 / ens.beta)
    out = []
    for z in z_list:
        z = complex(z)
        if abs(z.imag) == 0 and abs(z.real) <= 1:
            raise ValueError("z must lie off [-1, 1]")
        zz = z.real if z.imag == 0 else z
        phi = transfer_recurrence(ens, zz, ens.N)
        pi = hermite_recurrence(ens.N, zz, ens.N)
        log_r = (phi.log_scale[-1] - pi.log_scale[-1]) + np.log(complex(phi.values[-1]) / complex(pi.values[-1]))
        if c:
            g, m2 = _gaf_full(ens, z)
            log_r += 0.5 * c * c * m2 - c * g
        out.append(np.exp(log_r))
    r = np.array(out)
    if np.all(np.isreal(z_list)):
        r = r.real
    return PlanarTable(z_list, r)


# ---------------------------------------------------------------------------
# coupled runs


def window_T(N: int, eps: float = 0.1) -> float:
    """``T = (log N)^(1 - eps)``."""
    return math.log(N) ** (1.0 - eps)


@dataclass(frozen=True, eq=False)
class CoupledRun:
    """Ensemble and edge Brownian path sharing one noise source.

    ``edge_path`` is ``B^(z0)`` on ``[0, t_path]``; rows ``window_lo..N_p``
    carry the quantile coupling (``g`` holds their Gaussian partners).
    """

    ens: JacobiEnsemble
    edge_path: BrownianPath
    z0: float
    N_p: int
    N_H: int
    T: float
    window_lo: int
    g: np.ndarray
    seed: object

    @property
    def t_H(self) -> float:
        return self.N_H / self.ens.N

    @property
    def beta(self) -> float:
        return self.ens.beta


def coupled_run(seed, N: int, beta: float, eps: float = 0.1, t_path: float = 14.0,
                dt: float = 1e-3, z0: float = 1.0, bridge: bool = False) -> CoupledRun:
    """Sample a :class:`CoupledRun`.

    ``t_path`` is the length of the edge path (it must reach the SAi seed
    time). Between walk points the path is linear unless ``bridge`` is set.
    """
    if not (0 < abs(z0) <= 1):
        raise ValueError("z0 must lie in [-1, 1] minus {0}")
    seed = as_seed(seed)
    N_p = int(math.floor(N * z0 * z0))
    T = window_T(N, eps)
    N_H = N_p - int(math.ceil(N_p ** (1.0 / 3.0) * T))
    width = int(math.ceil(N_p ** (1.0 / 3.0) * max(t_path, T))) + 2
    lo = N_p - width
    if lo < 2 or N_H < 2:
        raise ValueError("N too small for the requested edge window")
    b = seed.child(0).generator().normal(0.0, math.sqrt(2.0), N)
    a = np.sqrt(seed.child(1).generator().gamma(beta * np.arange(1, N) / 2.0, 2.0))
    # rows k in [lo, N_p] (1-based) use quantile coupling; row k holds a_{k-1}
    k = np.arange(lo, N_p + 1)
    Yk, gk = quantile_couple_gamma(seed.child(2), k, beta)
    a2 = beta * (k - 1.0) + Yk * np.sqrt(2.0 * beta * (k - 1.0))
    a[k - 2] = np.sqrt(np.maximum(a2, 1e-300))
    ens = JacobiEnsemble(int(N), float(beta), b, a, seed)
    X = ens.X
    G = ens.Y.copy()
    G[k - 1] = gk
    sgn = 1.0 if z0 > 0 else -1.0
    Xc = np.concatenate([[0.0], np.cumsum(sgn * X)])
    Gc = np.concatenate([[0.0], np.cumsum(G)])
    path = edge_brownian_from_walk(Xc, Gc, N_p, beta, dt, 0.0, t_path,
                                   seed.child(3) if bridge else None)
    return CoupledRun(ens, path, float(z0), N_p, N_H, T, lo, gk, seed)


def noise_free_run(N: int, eps: float = 0.1, t_path: float = 14.0, dt: float = 1e-3) -> CoupledRun:
    """The Hermite surrogate with the zero path (beta = inf for every Gaussian part)."""
    ens = noise_free_jacobi(N, 2.0)
    T = window_T(N, eps)
    N_H = N - int(math.ceil(N ** (1.0 / 3.0) * T))
    n = int(math.ceil(t_path / dt))
    return CoupledRun(ens, zero_path(0.0, dt, n), 1.0, N, N_H, T, N, np.zeros(0), None)


def _noise_free(run: CoupledRun) -> bool:
    return not np.isfinite(run.edge_path.beta)


def _q(run: CoupledRun, lams):
    """``(q_N(lam), log E exp q_N(lam))`` at ``z = z0 (1 + lam/(2 N_p^(2/3)))``."""
    lams = np.atleast_1d(np.asarray(lams))
    if _noise_free(run):
        z = np.zeros(lams.shape, dtype=complex)
        return z, z
    c = math.sqrt(2.0 / run.beta)
    zs = edge_z(lams, run.ens.N, run.z0)
    q = np.empty(lams.shape, dtype=complex)
    lm = np.empty(lams.shape, dtype=complex)
    for i, z in enumerate(zs):
        s = gaf_g(run.ens, run.t_H, z)
        q[i] = c * s.value
        lm[i] = s.log_mean_exp(c)
    return q, lm


def _psi(run: CoupledRun, lams, ns):
    if _noise_free(run):
        return psi_table(None, lams, ns, N=run.ens.N)
    return psi_table(run.ens, lams, ns, z0=run.z0)


# ---------------------------------------------------------------------------
# Upsilon


@dataclass(frozen=True)
class UpsilonTable:
    lam: np.ndarray
    upsilon1: np.ndarray
    upsilon2: np.ndarray


def upsilon_diagnostic(run: CoupledRun, lambda_grid) -> UpsilonTable:
    """The hyperbolic error ``(Upsilon_1, Upsilon_2)`` defined implicitly by

    ``Psi_{N_H-1} = Ai(lam+T) e^{q + Upsilon_1} / E e^q`` and
    ``Psi_{N_H-1} - Psi_{N_H} = Ai'(lam+T) e^{q + Upsilon_2} / (N_p^(1/3) E e^q)``.

    Values are complex logarithms (imaginary part ``pi`` marks a sign flip).
    """
    lams = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    ns = np.array([run.N_H - 1, run.N_H])
    m, l = _psi(run, lams, ns)
    q, lm = _q(run, lams)
    x = lams + run.T
    log_a = np.log(ai(x).astype(complex))
    log_ap = np.log(ai_prime(x).astype(complex))
    base = lm - q
    u1 = np.log(m[:, 0].astype(complex)) + l[:, 0] + base - log_a
    # difference of two scaled values, taken relative to the larger scale
    L = np.maximum(l[:, 0], l[:, 1])
    d = m[:, 0] * np.exp(l[:, 0] - L) - m[:, 1] * np.exp(l[:, 1] - L)
    u2 = (np.log(d.astype(complex)) + L + math.log(run.N_p ** (1.0 / 3.0)) + base - log_ap)
    return UpsilonTable(lams, u1, u2)


# ---------------------------------------------------------------------------
# Psi versus SAi


@dataclass(frozen=True)
class PsiSaiProfile:
    """Both sides of the coupled comparison on a (lambda, t) grid.

    ``psi`` is ``Psi_{N_p - N_p^(1/3) t}(lam)``; ``prefactor`` is
    ``exp(int_0^T X + q(lam)) / E exp(int_0^T X + q(lam))``; ``deviation`` is
    ``psi / prefactor - SAi`` (absolute).
    """

    lam: np.ndarray
    t: np.ndarray
    psi: np.ndarray
    sai: np.ndarray
    prefactor: np.ndarray
    deviation: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.deviation)))

    @property
    def mean(self) -> float:
        return float(np.mean(np.abs(self.deviation)))

    @property
    def relative_sup(self) -> float:
        return float(np.max(np.abs(self.deviation)) / np.max(np.abs(self.sai)))


def log_prefactor(run: CoupledRun, lams, dt: float = 1e-3):
    """``log`` of the Gaussian prefactor, computed from its definition (never fitted)."""
    q, lm = _q(run, lams)
    if _noise_free(run):
        return q
    th = _sai.theta_process(run.edge_path, 0.0, run.T, dt)
    return (th.int_X[-1] - th.int_mean_correction[-1]) + q - lm


def psi_vs_sai(run: CoupledRun, t_grid, lambda_grid, T_seed: float = 12.0,
               dt: float = 1e-3) -> PsiSaiProfile:
    """Error profile of ``Psi / prefactor - SAi`` on shared noise."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    lams = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if np.any(t_grid < 0) or np.any(t_grid > run.T):
        raise ValueError("t must lie in [0, T]")
    if run.edge_path.t_end < T_seed - 1e-9:
        raise ValueError("edge path shorter than the SAi seed time")
    ns = np.floor(run.N_p - run.N_p ** (1.0 / 3.0) * t_grid).astype(np.int64)
    m, l = _psi(run, lams, ns)
    psi = m * np.exp(l)
    lp = log_prefactor(run, lams, dt)
    pref = np.exp(lp)
    if np.all(np.abs(np.imag(pref)) < 1e-12 * np.abs(pref)):
        pref = pref.real
    s = np.empty((lams.size, t_grid.size))
    for i, lam in enumerate(lams):
        sp = _sai.sai_backward(run.edge_path, lam, T=T_seed, t_min=0.0, dt=dt)
        k = np.rint(t_grid / dt).astype(int)
        s[i] = sp.sai[k]
    dev = psi / pref[:, None] - s
    return PsiSaiProfile(lams, t_grid, psi, s, pref, dev)


def top_zero_match(run: CoupledRun, lambda_window=(-8.0, 4.0), step: float = 0.05,
                   T_seed: float = 12.0, dt: float = 1e-3):
    """Largest lambda-zeros of ``Psi_{N_p}`` and of ``SAi_.(0)`` on the shared path."""
    from .gbe import polynomial_zeros
    pz = polynomial_zeros(run.ens, lambda_window, step)
    sz = _sai.sai_zero_scan(run.edge_path, lambda_window, dt, 1, T_seed, step)
    top_p = float(pz[0]) if len(pz) else math.nan
    top_s = float(sz.eigenvalues[0]) if sz.eigenvalues.size else math.nan
    return top_p, top_s


# ---------------------------------------------------------------------------
# edge CLT


@dataclass(frozen=True)
class CLTResult:
    N: int
    beta: float
    log_abs_psi: np.ndarray
    standardized: np.ndarray
    ks: float

    @property
    def variance(self) -> float:
        return float(np.var(self.log_abs_psi, ddof=1))

    @property
    def predicted_variance(self) -> float:
        return 2.0 / (3.0 * self.beta) * math.log(self.N)


def log_abs_psi_at_edge(ens: JacobiEnsemble, lam: float = 0.0) -> float:
    m, l = psi_table(ens, [lam], [ens.N])
    return float(np.log(abs(m[0, 0])) + l[0, 0])


def clt_statistic(N: int, beta: float, M: int, seed=0, lam: float = 0.0) -> CLTResult:
    """M independent values of ``(log|Psi_N(lam)| + log(N)/(3 beta)) / sqrt(2 log(N)/(3 beta))``."""
    if M < 1000:
        raise ValueError("M must be at least 1000")
    seed = as_seed(seed)
    vals = np.array([log_abs_psi_at_edge(sample_jacobi(seed.child(i), N, beta), lam)
                     for i in range(M)])
    z = (vals + math.log(N) / (3 * beta)) / math.sqrt(2 * math.log(N) / (3 * beta))
    return CLTResult(N, beta, vals, z, ks_one_sample(z, special.ndtr))

"""Tridiagonal beta-ensemble and its characteristic-polynomial recurrence.

The matrix is the Dumitriu-Edelman model with diagonal ``b_k ~ N(0, 2)`` and
off-diagonal ``a_k ~ chi_{beta k}``, scaled by ``1/sqrt(4 N beta)`` so that the
spectrum fills ``[-1, 1]``. Polynomials are carried as ``mantissa * exp(log)``
with power-of-two renormalization, so sizes up to ``10**6`` never overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln

from .rng import as_seed

LOG2 = math.log(2.0)
_BIG = 2.0 ** 512
_SMALL = 2.0 ** -512


@dataclass(frozen=True, eq=False)
class JacobiEnsemble:
    """One draw of the tridiagonal model.

    Attributes
    ----------
    N, beta : matrix size and inverse temperature.
    b : (N,) diagonal entries, ``b[k-1] = b_k``.
    a : (N-1,) off-diagonal entries, ``a[k-1] = a_k``.
    """

    N: int
    beta: float
    b: np.ndarray
    a: np.ndarray
    seed: object = None

    def __post_init__(self):
        if self.b.shape != (self.N,) or self.a.shape != (self.N - 1,):
            raise ValueError("b must have length N and a length N-1")

    @property
    def X(self) -> np.ndarray:
        """``X_k = b_k / sqrt(2)``, k = 1..N."""
        return self.b / math.sqrt(2.0)

    @property
    def Y(self) -> np.ndarray:
        """``Y_k = (a_{k-1}^2 - beta (k-1)) / sqrt(2 beta (k-1))``, with ``Y_1 = 0``."""
        k1 = np.arange(1, self.N, dtype=float) * self.beta
        return np.concatenate([[0.0], (self.a ** 2 - k1) / np.sqrt(2.0 * k1)])

    def walks(self):
        """Cumulative sums ``(Xhat, Yhat)`` with a leading zero."""
        return (np.concatenate([[0.0], np.cumsum(self.X)]),
                np.concatenate([[0.0], np.cumsum(self.Y)]))

    def coefficients(self):
        """Scaled recurrence coefficients ``(diag, off2)``."""
        s = 4.0 * self.N * self.beta
        return self.b / math.sqrt(s), self.a ** 2 / s

    def matrix(self, n: int | None = None) -> np.ndarray:
        """Dense scaled principal minor (for small-size checks)."""
        n = self.N if n is None else n
        d, _ = self.coefficients()
        e = self.a[: n - 1] / math.sqrt(4.0 * self.N * self.beta)
        return np.diag(d[:n]) + np.diag(e, 1) + np.diag(e, -1)


def sample_jacobi(seed, N: int, beta: float, b=None, a=None) -> JacobiEnsemble:
    """Draw the tridiagonal model; ``b`` and ``a`` force the entries."""
    if N < 2 or not (beta > 0):
        raise ValueError("need N >= 2 and beta > 0")
    gen = None
    if b is None or a is None:
        gen = as_seed(seed).generator()
    if b is None:
        b = gen.normal(0.0, math.sqrt(2.0), N)
    if a is None:
        a = np.sqrt(gen.gamma(beta * np.arange(1, N) / 2.0, 2.0))
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("off-diagonal entries must be positive")
    return JacobiEnsemble(int(N), float(beta), b, a, seed)


def characteristic_samples(seed, N: int, beta: float, z: float, M: int) -> np.ndarray:
    """``M`` independent draws of ``Phi_N(z)`` (small N; plain floating point).

    All ensembles advance together through the recurrence, one row per step.
    """
    if N > 400:
        raise ValueError("characteristic_samples is meant for N <= 400")
    gen = as_seed(seed).generator()
    s = 4.0 * N * beta
    d = gen.normal(0.0, math.sqrt(2.0), (M, N)) / math.sqrt(s)
    c = gen.gamma(beta * np.arange(1, N) / 2.0, 2.0, (M, N - 1)) / s
    p_prev = np.ones(M)
    p = z - d[:, 0]
    for n in range(1, N):
        p, p_prev = (z - d[:, n]) * p - c[:, n - 1] * p_prev, p
    return p


def noise_free_jacobi(N: int, beta: float = 2.0) -> JacobiEnsemble:
    """Surrogate with ``b = 0`` and ``a_i^2 = beta i`` (the Hermite case)."""
    return JacobiEnsemble(int(N), float(beta), np.zeros(N),
                          np.sqrt(beta * np.arange(1, N, dtype=float)), None)


# ---------------------------------------------------------------------------
# recurrences

@dataclass(frozen=True, eq=False)
class PolySequence:
    """Values ``Phi_n = values[n] * exp(log_scale[n])`` for n = 0..n_max."""

    z: complex
    values: np.ndarray
    log_scale: np.ndarray

    def __len__(self):
        return self.values.size

    def log_abs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.values)) + self.log_scale

    def true_values(self) -> np.ndarray:
        return self.values * np.exp(self.log_scale)


@njit(cache=True)
def _recur_full(diag, off2, z, n_max, vals, logs):
    p_prev = 0.0 * z
    p = 1.0 + 0.0 * z
    ls = 0.0
    vals[0] = p
    logs[0] = 0.0
    for n in range(1, n_max + 1):
        c = off2[n - 2] if n >= 2 else 0.0
        q = (z - diag[n - 1]) * p - c * p_prev
        p_prev = p
        p = q
        nrm = abs(p) + abs(p_prev)
        if (nrm > _BIG or nrm < _SMALL) and nrm > 0.0:
            m, e = math.frexp(nrm)
            f = math.ldexp(1.0, -e)
            p *= f
            p_prev *= f
            ls += e * LOG2
        vals[n] = p
        logs[n] = ls


@njit(cache=True)
def _recur_record(diag, off2, zs, rec, vals, logs):
    """Run the recurrence for every z in ``zs``; record at sorted indices ``rec``."""
    n_max = rec[-1]
    for iz in range(zs.size):
        z = zs[iz]
        p_prev = 0.0 * z
        p = 1.0 + 0.0 * z
        ls = 0.0
        j = 0
        while j < rec.size and rec[j] == 0:
            vals[iz, j] = p
            logs[iz, j] = 0.0
            j += 1
        for n in range(1, n_max + 1):
            c = off2[n - 2] if n >= 2 else 0.0
            q = (z - diag[n - 1]) * p - c * p_prev
            p_prev = p
            p = q
            nrm = abs(p) + abs(p_prev)
            if (nrm > _BIG or nrm < _SMALL) and nrm > 0.0:
                m, e = math.frexp(nrm)
                f = math.ldexp(1.0, -e)
                p *= f
                p_prev *= f
                ls += e * LOG2
            while j < rec.size and rec[j] == n:
                vals[iz, j] = p
                logs[iz, j] = ls
                j += 1


def _dtype_for(z):
    return np.complex128 if np.iscomplexobj(z) else np.float64


def _run(diag, off2, z, n_max) -> PolySequence:
    dt = _dtype_for(z)
    z = dt(z) if dt is np.float64 else complex(z)
    vals = np.empty(n_max + 1, dtype=dt)
    logs = np.empty(n_max + 1)
    _recur_full(diag, off2, z, n_max, vals, logs)
    return PolySequence(z, vals, logs)


def transfer_recurrence(ens: JacobiEnsemble, z, n_max: int | None = None) -> PolySequence:
    """``Phi_n(z) = det(z - A_n / sqrt(4 N beta))`` for n = 0..n_max."""
    n_max = ens.N if n_max is None else n_max
    if not 0 <= n_max <= ens.N:
        raise ValueError("n_max must lie in [0, N]")
    diag, off2 = ens.coefficients()
    return _run(diag, off2, z, n_max)


def _hermite_coefficients(N, n_max):
    return np.zeros(max(n_max, 1)), np.arange(1, max(n_max, 2), dtype=float) / (4.0 * N)


def hermite_recurrence(N: int, z, n_max: int) -> PolySequence:
    """Monic Hermite polynomials orthogonal for ``exp(-2 N x^2)``."""
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    diag, off2 = _hermite_coefficients(N, n_max)
    return _run(diag, off2, z, n_max)


def recurrence_table(diag, off2, zs, ns):
    """Mantissas and logs of the recurrence at every ``z in zs`` and ``n in ns``."""
    zs = np.atleast_1d(zs)
    dt = _dtype_for(zs)
    zs = zs.astype(dt)
    ns = np.atleast_1d(np.asarray(ns, dtype=np.int64))
    order = np.argsort(ns, kind="stable")
    rec = ns[order]
    vals = np.empty((zs.size, rec.size), dtype=dt)
    logs = np.empty((zs.size, rec.size))
    _recur_record(np.asarray(diag, float), np.asarray(off2, float), zs, rec, vals, logs)
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return vals[:, inv], logs[:, inv]


def edge_normalizer(n, N: int, z):
    """``log w_n(z)``, with ``w_n = [(2 pi)^(1/4) e^(N z^2) 2^(-n) (N z^2)^(-1/12) sqrt(n!/N^n)]^(-1)``."""
    z = np.asarray(z)
    if np.any(z == 0):
        raise ValueError("edge normalizer undefined at z = 0")
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("n must be non-negative")
    Nz2 = N * z * z
    lw = -(0.25 * np.log(2 * np.pi) + Nz2 - n * LOG2 - np.log(Nz2) / 12.0
           + 0.5 * (gammaln(n + 1.0) - n * np.log(N)))
    return lw if np.ndim(lw) else lw[()]


def edge_z(lam, N: int, z0: float = 1.0):
    """Spectral point ``z0 (1 + lam / (2 N_p^(2/3)))`` with ``N_p = floor(N z0^2)``."""
    N_p = int(math.floor(N * z0 * z0))
    return z0 * (1.0 + np.asarray(lam) / (2.0 * N_p ** (2.0 / 3.0)))


@dataclass(frozen=True)
class ScaledValue:
    """``mantissa * exp(log_scale)``; the phase of complex normalizers sits in the mantissa."""

    mantissa: complex
    log_scale: float

    @property
    def value(self):
        return self.mantissa * np.exp(self.log_scale)


def _scale(vals, logs, lw):
    lw = np.asarray(lw)
    if np.iscomplexobj(lw):
        return vals * np.exp(1j * lw.imag), logs + lw.real
    return vals, logs + lw


def rescaled_psi(ens: JacobiEnsemble, lam, n) -> ScaledValue:
    """``Psi_n(lam) = w_floor(n) Phi_floor(n)(1 + lam / (2 N^(2/3)))``."""
    k = int(math.floor(n))
    if k > ens.N or k < 0:
        raise ValueError("floor(n) must lie in [0, N]")
    z = edge_z(lam, ens.N)
    seq = transfer_recurrence(ens, z, k)
    m, l = _scale(seq.values[k], seq.log_scale[k], edge_normalizer(k, ens.N, z))
    return ScaledValue(m[()] if np.ndim(m) else m, float(l))


def psi_table(ens: JacobiEnsemble | None, lams, ns, N: int | None = None, z0: float = 1.0):
    """``Psi_n(lam)`` on a grid, as ``(mantissa, log_scale)`` arrays of shape (len(lams), len(ns)).

    ``ens=None`` evaluates the Hermite (noise-free) recurrence of size ``N``.
    The spectral points are ``z0 (1 + lam / (2 N_p^(2/3)))``.
    """
    ns = np.atleast_1d(np.asarray(ns, dtype=np.int64))
    if ens is None:
        diag, off2 = _hermite_coefficients(N, int(ns.max()))
    else:
        N = ens.N
        if ns.max() > N:
            raise ValueError("n must not exceed N")
        diag, off2 = ens.coefficients()
    z = edge_z(lams, N, z0)
    vals, logs = recurrence_table(diag, off2, z, ns)
    lw = edge_normalizer(ns[None, :], N, np.atleast_1d(z)[:, None])
    return _scale(vals, logs, lw)


# ---------------------------------------------------------------------------
# eigenvalues through Sturm counts

@njit(cache=True)
def _count_above(diag, off2, x):
    """Number of eigenvalues of the scaled matrix strictly greater than ``x``."""
    cnt = 0
    r = x - diag[0]
    if r < 0.0:
        cnt += 1
    for i in range(1, diag.size):
        if r == 0.0:
            r = 1e-300
        r = (x - diag[i]) - off2[i - 1] / r
        if r < 0.0:
            cnt += 1
    return cnt


@njit(cache=True)
def _kth_largest(diag, off2, k, lo, hi, tol):
    """k-th largest eigenvalue (k = 1 is the top) by bisection on Sturm counts."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _count_above(diag, off2, mid) >= k:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def count_above(ens: JacobiEnsemble, x: float) -> int:
    diag, off2 = ens.coefficients()
    return int(_count_above(diag, off2, float(x)))


def _gersh(diag, off2):
    e = np.sqrt(off2)
    r = np.zeros_like(diag)
    r[:-1] += e
    r[1:] += e
    return float(np.min(diag - r)), float(np.max(diag + r))


def largest_eigenvalues(ens: JacobiEnsemble, k: int = 1, tol: float = 1e-14) -> np.ndarray:
    """Top ``k`` eigenvalues of the scaled matrix, in decreasing order."""
    diag, off2 = ens.coefficients()
    lo, hi = _gersh(diag, off2)
    return np.array([_kth_largest(diag, off2, j, lo, hi, tol) for j in range(1, k + 1)])


def edge_rescale(x, N: int):
    """Edge coordinate ``2 N^(2/3) (x - 1)``."""
    return 2.0 * N ** (2.0 / 3.0) * (np.asarray(x) - 1.0)


def polynomial_zeros(ens: JacobiEnsemble, lambda_window=(-10.0, 3.0), step: float = 0.05,
                     tol: float = 1e-10) -> np.ndarray:
    """Zeros of ``lam -> Psi_N(lam)`` inside ``lambda_window``, in decreasing order.

    The window is scanned on a grid of the given step; each cell whose Sturm
    count drops is bisected (in edge units) to ``tol``. Cells holding several
    zeros are resolved because counts, unlike signs, see every zero.
    """
    diag, off2 = ens.coefficients()
    N = ens.N
    to_x = lambda l: 1.0 + l / (2.0 * N ** (2.0 / 3.0))
    lo_w, hi_w = lambda_window
    grid = np.arange(lo_w, hi_w + step / 2, step)
    counts = np.array([_count_above(diag, off2, to_x(l)) for l in grid])
    zeros = []
    for i in range(grid.size - 1):
        for k in range(counts[i + 1] + 1, counts[i] + 1):
            a, b = grid[i], grid[i + 1]
            while b - a > tol:
                m = 0.5 * (a + b)
                if _count_above(diag, off2, to_x(m)) >= k:
                    a = m
                else:
                    b = m
            zeros.append(0.5 * (a + b))
    return np.sort(np.array(zeros))[::-1]


# ---------------------------------------------------------------------------
# finite-difference coefficients near the edge

@dataclass(frozen=True, eq=False)
class FiniteDifferenceView:
    """Coefficients ``R_{lam,k}``, ``S_k`` for ``k = N_p - n + 1`` and the discrete kernel."""

    N_p: int
    k: np.ndarray
    R: np.ndarray
    S: np.ndarray
    _cum: np.ndarray = field(repr=False)

    def U(self, u, t):
        """``sum over u N_p^(1/3) < k <= t N_p^(1/3)`` of ``R_k - S_k`` (zero outside the window)."""
        c = self.N_p ** (1.0 / 3.0)
        k0 = self.k[0]

        def cum(x):
            j = np.clip(np.floor(np.asarray(x) * c).astype(np.int64) - k0 + 1, 0, self.k.size)
            return self._cum[j]

        return cum(t) - cum(u)


def finite_difference_view(ens: JacobiEnsemble, lam, window, z0: float = 1.0) -> FiniteDifferenceView:
    """Discrete coefficients for rows ``n`` in ``window`` (a range inside [2, N])."""
    n = np.asarray(list(window) if not isinstance(window, np.ndarray) else window, dtype=np.int64)
    if n.min() < 2 or n.max() > ens.N:
        raise ValueError("window must lie inside [2, N]")
    n = np.sort(n)[::-1]
    N = ens.N
    N_p = int(math.floor(N * z0 * z0))
    c = N_p ** (1.0 / 3.0)
    X = ens.X[n - 1]
    Y = ens.Y[n - 1]
    sb = math.sqrt(2.0 / ens.beta)
    R = c * (2.0 * ((1.0 + lam / (2.0 * N_p ** (2.0 / 3.0))) * z0 * np.sqrt(N / n) - 1.0) - sb * X / np.sqrt(n))
    S = c * (sb * Y / np.sqrt(n) + np.sqrt((n - 1.0) / n) - 1.0)
    k = N_p - n + 1
    cum = np.concatenate([[0.0], np.cumsum(R - S)])
    return FiniteDifferenceView(N_p, k, R, S, cum)

"""Solvers for the stochastic Airy equation.

A solution pair ``(phi, Phi = phi')`` satisfies the Volterra system

    Phi(t) = c2 + c1 U(t, s) + int_s^t U(t, u) Phi(u) du,
    phi(t) = c1 + int_s^t Phi(u) du,

with ``U(t, u) = V(t) - V(u)`` and ``V(u) = u^2/2 + lam u + B(u)``; formally
``d phi' = phi dV``. The time stepper is a kick-drift-kick splitting whose
kicks are exact increments of ``V`` over half steps of the piecewise-linear
path. Each step is an exactly invertible shear with unit determinant, so the
Wronskian of any two solutions is conserved to rounding error and solves
from different base points compose exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .rng import BrownianPath

# ---------------------------------------------------------------------------
# grid helpers


def _steps(span: float, dt: float) -> int:
    x = span / dt
    k = int(round(x))
    if abs(x - k) > 1e-6 * max(1.0, abs(x)):
        raise ValueError("dt must divide the span between base point and endpoints")
    return k


def lattice(s: float, t_min: float, t_max: float, dt: float):
    """Nodes ``s + k dt`` covering [t_min, t_max]; returns (t0, n_steps, base index)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t_min <= s <= t_max:
        raise ValueError("base point must lie in [t_min, t_max]")
    if not t_max > t_min:
        raise ValueError("degenerate time range")
    kb = _steps(s - t_min, dt)
    kf = _steps(t_max - s, dt)
    return s - kb * dt, kb + kf, kb


def half_increments(path: BrownianPath, t0: float, n: int, dt: float):
    """Lambda-free half-step increments of V on the lattice ``t0 + k dt``.

    Returns ``(ua, ub)`` with ``ua[k] = V0(t_k + dt/2) - V0(t_k)`` and
    ``ub[k] = V0(t_{k+1}) - V0(t_k + dt/2)`` where ``V0(u) = u^2/2 + B(u)``.
    The lambda part adds ``lam dt/2`` to each.
    """
    tn = t0 + dt * np.arange(n + 1)
    tm = tn[:-1] + 0.5 * dt
    Bn = path(tn)
    Bm = path(tm)
    ua = 0.5 * (tm * tm - tn[:-1] ** 2) + (Bm - Bn[:-1])
    ub = 0.5 * (tn[1:] ** 2 - tm * tm) + (Bn[1:] - Bm)
    return ua, ub


def potential(path: BrownianPath, lam, t):
    """``V(t) = t^2/2 + lam t + B(t)``."""
    t = np.asarray(t, dtype=float)
    return 0.5 * t * t + lam * t + path(t)


def kernel_U(path: BrownianPath, lam, t, u):
    """``U_lam(t, u) = (t^2 - u^2)/2 + B(t) - B(u) + lam (t - u)``."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    out = 0.5 * (t * t - u * u) + (path(t) - path(u)) + lam * (t - u)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# compiled steppers


@njit(cache=True)
def _kdk(ua, ub, lam, h, kb, c1, c2, phi, dphi):
    n = ua.size
    half = 0.5 * h * lam
    phi[kb] = c1
    dphi[kb] = c2
    f = c1
    p = c2
    for k in range(kb, n):
        p = p + (ua[k] + half) * f
        f = f + h * p
        p = p + (ub[k] + half) * f
        phi[k + 1] = f
        dphi[k + 1] = p
    f = c1
    p = c2
    for k in range(kb, 0, -1):
        p = p - (ub[k - 1] + half) * f
        f = f - h * p
        p = p - (ua[k - 1] + half) * f
        phi[k - 1] = f
        dphi[k - 1] = p


@njit(cache=True)
def _kdk_end(ua, ub, lams, h, k_from, k_to, c1, c2, out_f, out_p):
    """Propagate data from node k_from to node k_to for every lambda; endpoint only."""
    for j in range(lams.size):
        half = 0.5 * h * lams[j]
        f = c1[j]
        p = c2[j]
        if k_to >= k_from:
            for k in range(k_from, k_to):
                p = p + (ua[k] + half) * f
                f = f + h * p
                p = p + (ub[k] + half) * f
        else:
            for k in range(k_from, k_to, -1):
                p = p - (ub[k - 1] + half) * f
                f = f - h * p
                p = p - (ua[k - 1] + half) * f
        out_f[j] = f
        out_p[j] = p


@njit(cache=True)
def _kdk_forced(ua, ub, lam, h, kb, zn, zm, eta, phi):
    """Forced system d eta = phi dV, d phi = (eta + zeta) dt from zero data at node kb."""
    n = ua.size
    half = 0.5 * h * lam
    eta[kb] = 0.0
    phi[kb] = 0.0
    e = eta[kb]
    f = phi[kb]
    for k in range(kb, n):
        e = e + (ua[k] + half) * f
        f = f + h * (e + zm[k])
        e = e + (ub[k] + half) * f
        eta[k + 1] = e
        phi[k + 1] = f
    e = eta[kb]
    f = phi[kb]
    for k in range(kb, 0, -1):
        e = e - (ub[k - 1] + half) * f
        f = f - h * (e + zm[k - 1])
        e = e - (ua[k - 1] + half) * f
        eta[k - 1] = e
        phi[k - 1] = f


# ---------------------------------------------------------------------------
# solution objects


@dataclass(frozen=True, eq=False)
class SolutionPath:
    """Grid values of a solution with data ``(c1, c2)`` at the base point ``s``."""

    lam: complex
    s: float
    c1: complex
    c2: complex
    t0: float
    dt: float
    phi: np.ndarray
    phi_prime: np.ndarray
    path: BrownianPath
    s_index: int

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.phi.size)

    @property
    def t_max(self) -> float:
        return self.t0 + self.dt * (self.phi.size - 1)

    def index(self, t) -> np.ndarray:
        """Grid index of nodes ``t`` (error if ``t`` is not a node)."""
        x = (np.asarray(t, dtype=float) - self.t0) / self.dt
        k = np.rint(x).astype(np.int64)
        if np.any(np.abs(x - k) > 1e-6) or np.any(k < 0) or np.any(k >= self.phi.size):
            raise ValueError("time is not a node of the solution grid")
        return k

    def _interp(self, arr, t):
        t = np.asarray(t, dtype=float)
        x = (t - self.t0) / self.dt
        if np.any(x < -1e-9) or np.any(x > arr.size - 1 + 1e-9):
            raise ValueError("time outside solution grid")
        i = np.clip(np.floor(x).astype(np.int64), 0, arr.size - 2)
        w = x - i
        out = (1 - w) * arr[i] + w * arr[i + 1]
        return out[()] if out.ndim == 0 else out

    def value(self, t):
        return self._interp(self.phi, t)

    def derivative(self, t):
        return self._interp(self.phi_prime, t)


def _dtype(*xs):
    return np.complex128 if any(np.iscomplexobj(np.asarray(x)) for x in xs) else np.float64


def solve_ivp(path: BrownianPath, lam, s: float, c1, c2, t_min: float, t_max: float,
              dt: float = 1e-4) -> SolutionPath:
    """Solve both directions from ``s`` with ``phi(s) = c1``, ``phi'(s) = c2``."""
    t0, n, kb = lattice(s, t_min, t_max, dt)
    if not path.covers(t0, t0 + n * dt):
        raise ValueError("solution range exceeds the path domain")
    ua, ub = half_increments(path, t0, n, dt)
    dtp = _dtype(lam, c1, c2)
    phi = np.empty(n + 1, dtype=dtp)
    dphi = np.empty(n + 1, dtype=dtp)
    _kdk(ua, ub, dtp(lam), float(dt), kb, dtp(c1), dtp(c2), phi, dphi)
    return SolutionPath(lam, float(s), c1, c2, t0, float(dt), phi, dphi, path, kb)


def dirichlet_neumann(path: BrownianPath, lam, s: float, t_min: float, t_max: float,
                      dt: float = 1e-4):
    """Fundamental pair at ``s``: ``f`` with data (1, 0) and ``g`` with data (0, 1)."""
    f = solve_ivp(path, lam, s, 1.0, 0.0, t_min, t_max, dt)
    g = solve_ivp(path, lam, s, 0.0, 1.0, t_min, t_max, dt)
    return f, g


def wronskian(f: SolutionPath, g: SolutionPath, t=None):
    """``f g' - f' g`` on the shared grid (at node ``t`` when given)."""
    if f.path is not g.path or f.t0 != g.t0 or f.dt != g.dt or f.phi.size != g.phi.size:
        raise ValueError("solutions must share path and grid")
    w = f.phi * g.phi_prime - f.phi_prime * g.phi
    if t is None:
        return w
    return w[f.index(t)]


def propagate(path: BrownianPath, lams, s: float, t: float, c1, c2, dt: float):
    """Endpoint values ``(phi(t), phi'(t))`` for a vector of lambdas (no grid storage)."""
    lams = np.atleast_1d(np.asarray(lams))
    lo, hi = min(s, t), max(s, t)
    t0, n, kb = lattice(s, lo, hi, dt)
    kt = n if t >= s else 0
    ua, ub = half_increments(path, t0, n, dt)
    dtp = _dtype(lams, c1, c2)
    c1 = np.broadcast_to(np.asarray(c1, dtype=dtp), lams.shape).copy()
    c2 = np.broadcast_to(np.asarray(c2, dtype=dtp), lams.shape).copy()
    of = np.empty(lams.size, dtype=dtp)
    op = np.empty(lams.size, dtype=dtp)
    _kdk_end(ua, ub, lams.astype(dtp), float(dt), kb, kt, c1, c2, of, op)
    return of, op


# ---------------------------------------------------------------------------
# stochastic Airy kernel

_VARIANTS = ("value", "du", "dt", "dtdu")


def _bilinear(f, g, t, u, variant):
    it, iu = f.index(t), f.index(u)
    F, G, Fp, Gp = f.phi, g.phi, f.phi_prime, g.phi_prime
    if variant == "value":
        return F[it] * G[iu] - F[iu] * G[it]
    if variant == "du":
        return F[it] * Gp[iu] - Fp[iu] * G[it]
    if variant == "dt":
        return Fp[it] * G[iu] - F[iu] * Gp[it]
    return Fp[it] * Gp[iu] - Fp[iu] * Gp[it]


def sa_kernel(path: BrownianPath, lam, t: float, u: float, variant: str = "value",
              base: float | None = 0.0, dt: float = 1e-4):
    """The stochastic Airy kernel ``A(t, u) = f(t) g(u) - f(u) g(t)`` and its derivatives.

    With a numeric ``base`` the bilinear form of the fundamental pair at that
    point is used. ``base=None`` instead uses the one-solve identities
    ``A(t,u) = -g_u(t)``, ``d_u A = f_u(t)``, ``d_t A = -g_u'(t)`` and
    ``d_t d_u A = f_u'(t)``.
    """
    if variant not in _VARIANTS:
        raise ValueError(f"variant must be one of {_VARIANTS}")
    if t == u and variant in ("value",):
        return 0.0
    if base is None:
        lo, hi = min(t, u), max(t, u)
        if variant in ("value", "dt"):
            g = solve_ivp(path, lam, u, 0.0, 1.0, lo, hi, dt)
            k = g.index(t)
            return -g.phi[k] if variant == "value" else -g.phi_prime[k]
        f = solve_ivp(path, lam, u, 1.0, 0.0, lo, hi, dt)
        k = f.index(t)
        return f.phi[k] if variant == "du" else f.phi_prime[k]
    lo, hi = min(t, u, base), max(t, u, base)
    f, g = dirichlet_neumann(path, lam, base, lo, hi, dt)
    return _bilinear(f, g, t, u, variant)


# ---------------------------------------------------------------------------
# quadrature helpers


def _cumtrapz(y, dt):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]))
    return out


def _cum_from(y, dt, kb):
    """Cumulative trapezoid integral ``int_{t_kb}^{t_k} y`` (signed) on the grid."""
    c = _cumtrapz(y, dt)
    return c - c[kb]


def volterra_residual(sol: SolutionPath) -> np.ndarray:
    """``Phi - c2 - c1 U(t,s) - int_s^t U(t,u) Phi(u) du`` on the solution grid."""
    t = sol.times
    V = potential(sol.path, sol.lam, t)
    Phi = sol.phi_prime
    kb = sol.s_index
    I0 = _cum_from(Phi, sol.dt, kb)
    I1 = _cum_from(V * Phi, sol.dt, kb)
    return Phi - sol.c2 - sol.c1 * (V - V[kb]) - (V * I0 - I1)


# ---------------------------------------------------------------------------
# forced equation


@dataclass(frozen=True, eq=False)
class ForcedSolution:
    """Solution ``h`` of ``h = zeta + int_s^t U(t,u) h(u) du`` on a grid."""

    lam: complex
    s: float
    t0: float
    dt: float
    h: np.ndarray
    zeta: np.ndarray
    residual: float
    s_index: int

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.h.size)


def _forced_residual(path, lam, t, h, zeta, dt, kb):
    V = potential(path, lam, t)
    I0 = _cum_from(h, dt, kb)
    I1 = _cum_from(V * h, dt, kb)
    return float(np.max(np.abs(h - zeta - (V * I0 - I1))))


def solve_forced(path: BrownianPath, lam, s: float, zeta, t_min: float, t_max: float,
                 dt: float = 1e-4, method: str = "stepper") -> ForcedSolution:
    """Solve ``h(t) = zeta(t) + int_s^t U(t,u) h(u) du`` with ``zeta(s) = 0``.

    ``zeta`` is a callable of time (evaluated at nodes and half nodes). The
    ``"stepper"`` method integrates ``(int h, h - zeta)`` with the same
    splitting as :func:`solve_ivp`; the ``"kernel"`` method evaluates the
    resolvent formula ``h(t) = zeta(t) + int_s^t f_u'(t) zeta(u) du`` through
    the fundamental pair at ``s``. The returned record carries the Volterra
    residual of the computed ``h``.
    """
    t0, n, kb = lattice(s, t_min, t_max, dt)
    t = t0 + dt * np.arange(n + 1)
    zn = np.asarray(zeta(t))
    if abs(zn[kb]) > 1e-12:
        raise ValueError("forcing must vanish at the base point")
    dtp = _dtype(lam, zn)
    if method == "stepper":
        zm = np.asarray(zeta(t[:-1] + 0.5 * dt), dtype=dtp)
        ua, ub = half_increments(path, t0, n, dt)
        eta = np.empty(n + 1, dtype=dtp)
        phi = np.empty(n + 1, dtype=dtp)
        _kdk_forced(ua, ub, dtp(lam), float(dt), kb, zn.astype(dtp), zm, eta, phi)
        h = eta + zn
    elif method == "kernel":
        f, g = dirichlet_neumann(path, lam, s, t_min, t_max, dt)
        Fp, Gp = f.phi_prime, g.phi_prime
        # f_u'(t) = f'(t) g'(u) - f'(u) g'(t) for the pair based at s
        h = zn + Fp * _cum_from(Gp * zn, dt, kb) - Gp * _cum_from(Fp * zn, dt, kb)
    else:
        raise ValueError("method must be 'stepper' or 'kernel'")
    res = _forced_residual(path, lam, t, h, zn, dt, kb)
    return ForcedSolution(lam, float(s), t0, float(dt), h, zn, res, kb)


# ---------------------------------------------------------------------------
# Picard series


@dataclass(frozen=True)
class PicardResult:
    value: complex
    terms: np.ndarray
    converged: bool


def _cum_linear_product(a, b, h):
    """Cumulative exact integral of the product of two piecewise-linear functions."""
    cell = h * (2 * a[:-1] * b[:-1] + a[:-1] * b[1:] + a[1:] * b[:-1] + 2 * a[1:] * b[1:]) / 6.0
    out = np.zeros(a.size, dtype=np.result_type(a, b))
    out[1:] = np.cumsum(cell)
    return out


def picard_kernel(path: BrownianPath, lam, s: float, t: float, m_max: int = 40,
                  dt: float = 1e-4, tol: float = 1e-14) -> PicardResult:
    """Partial sums of the Neumann series for ``f_s'(t)``.

    ``K^1(t,s) = U(t,s)`` and ``K^{m+1}(t,s) = int_s^t U(t,u) K^m(u,s) du``;
    each integral uses exact products of piecewise-linear interpolants.
    """
    if abs(t - s) > 3 + 1e-12:
        raise ValueError("|t - s| must not exceed 3")
    if not 1 <= m_max <= 40:
        raise ValueError("m_max must lie in [1, 40]")
    n = max(1, _steps(abs(t - s), dt)) if t != s else 0
    if n == 0:
        return PicardResult(0.0, np.zeros(m_max), True)
    h = (t - s) / n
    x = s + h * np.arange(n + 1)
    V = potential(path, lam, x)
    K = V - V[0]
    terms = [K[-1]]
    for _ in range(1, m_max):
        # K^{m+1}(x) = V(x) int_s^x K - int_s^x V K
        K = V * _cum_linear_product(np.ones_like(V), K, h) - _cum_linear_product(V, K, h)
        terms.append(K[-1])
        if abs(K[-1]) < tol * max(1.0, abs(sum(terms))) and len(terms) > 3:
            break
    terms = np.array(terms)
    return PicardResult(terms.sum(), terms, abs(terms[-1]) < 1e-10 * max(1.0, abs(terms.sum())))


# ---------------------------------------------------------------------------
# stability under perturbation


def growth_weight(lam, t, s):
    """``E_lam(t,s) = exp(2/3 ((Re lam + max)_+^{3/2} - (Re lam + min)_+^{3/2}))``."""
    r = np.real(lam)
    hi = np.maximum(t, s)
    lo = np.minimum(t, s)
    return np.exp(2.0 / 3.0 * (np.maximum(r + hi, 0) ** 1.5 - np.maximum(r + lo, 0) ** 1.5))


@njit(cache=True)
def _volterra_trap(K, F, h):
    """Solve ``y_i = F_i + h sum_j w_j K_ij y_j`` (trapezoid weights, j <= i)."""
    n = F.size
    y = np.empty_like(F)
    y[0] = F[0]
    for i in range(1, n):
        acc = F[i] + 0.5 * h * K[i, 0] * y[0]
        for j in range(1, i):
            acc += h * K[i, j] * y[j]
        y[i] = acc / (1.0 - 0.5 * h * K[i, i])
    return y


@dataclass(frozen=True, eq=False)
class StabilityRecord:
    t: np.ndarray
    deviation: np.ndarray
    weighted: np.ndarray
    sup_weighted: float
    delta1_sup: float
    delta2_weighted_sup: float


def stability_probe(path: BrownianPath, lam, s: float, delta1=None, delta2=None,
                    c1=1.0, c2=0.0, t_end: float | None = None, dt: float = 1e-2) -> StabilityRecord:
    """Weighted response of ``Phi`` to a kernel and a source perturbation.

    Solves ``h = c2 + int_s^t (U + delta1)(t,u) h(u) du + c1 U(t,s) + delta2(t)``
    and the unperturbed equation with the same trapezoid Volterra scheme, then
    reports ``|h - Phi| / E_lam(t, s)``. ``delta1(t, u)`` and ``delta2(t)`` are
    vectorized callables (``None`` for zero).
    """
    t_end = s + 4.0 if t_end is None else t_end
    n = _steps(abs(t_end - s), dt)
    h = (t_end - s) / n
    t = s + h * np.arange(n + 1)
    V = potential(path, lam, t)
    U = V[:, None] - V[None, :]
    F0 = c2 + c1 * (V - V[0])
    dtp = _dtype(lam, U)
    Phi = _volterra_trap(U.astype(dtp), F0.astype(dtp), h)
    K = U.astype(dtp)
    F = F0.astype(dtp)
    d1s = 0.0
    d2s = 0.0
    E = growth_weight(lam, t, s)
    if delta1 is not None:
        D1 = np.asarray(delta1(t[:, None], t[None, :]), dtype=dtp)
        D1 = np.tril(np.broadcast_to(D1, K.shape))
        K = K + D1
        d1s = float(np.max(np.abs(D1)))
    if delta2 is not None:
        D2 = np.asarray(delta2(t), dtype=dtp)
        F = F + D2
        d2s = float(np.max(np.abs(D2) / E))
    hsol = _volterra_trap(K, F, h)
    dev = np.abs(hsol - Phi)
    w = dev / E
    return StabilityRecord(t, dev, w, float(w.max()), d1s, d2s)

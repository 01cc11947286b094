"""The stochastic Airy function.

The Gaussian process ``X(u) = int_0^u exp(4/3 (t^1.5 - u^1.5)) dB(t)`` and the
normalizer

    theta_lam(t) = sqrt(t) + lam/(2 sqrt t) - 1/(4(t+1)) + X(t) - mc(t)

fix the scale of SAi, where ``mc(t) = int_0^t E[X(t) X(u)] du`` is the
log-Laplace compensator of ``int X``. Writing ``v(u) = (beta/4) Var X(u)`` and
``mc = (4/beta) I``, the two functions solve the linear system

    v' = 1 - 4 sqrt(t) v,    I' = v - 2 sqrt(t) I,    v(0) = I(0) = 0,

which is how they are evaluated here. SAi itself is obtained by integrating
the equation backward from a seed time ``T``, which is the stable direction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from numba import njit
from scipy import integrate, optimize, special

from .airy import ai, ai_prime
from .rng import BrownianPath, as_seed, sample_brownian_path
from .riccati import PointProcessSample
from .sae import lattice, propagate, solve_ivp
from .stats import ks_two_sample

ENVELOPE_CONST = 1.0 / math.sqrt(4.0 * math.pi)

# ---------------------------------------------------------------------------
# the Gaussian process X


@njit(cache=True)
def _x_recursion(t, dB):
    out = np.empty(t.size)
    out[0] = 0.0
    x = 0.0
    for k in range(t.size - 1):
        a = (4.0 / 3.0) * (t[k + 1] ** 1.5 - t[k] ** 1.5)
        ea = math.exp(-a)
        w = (1.0 - ea) / a if a > 1e-12 else 1.0 - 0.5 * a
        x = ea * x + w * dB[k]
        out[k + 1] = x
    return out


def compute_X(path: BrownianPath, grid) -> np.ndarray:
    """``X`` on an increasing grid starting at 0 (exponential integrator)."""
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and increase")
    dB = np.diff(path(grid))
    return _x_recursion(grid, dB)


# ---------------------------------------------------------------------------
# mean correction and c*


def _rhs(t, y):
    r = math.sqrt(max(t, 0.0))
    v, I, _ = y
    return [1.0 - 4.0 * r * v, v - 2.0 * r * I, I]


_T_DENSE = 200.0


@lru_cache(maxsize=1)
def _dense_solution():
    # the right side has a sqrt(t) cusp at 0; start from the Taylor data at a tiny t
    t0 = 1e-8
    y0 = [t0, 0.5 * t0 * t0, t0 ** 3 / 6.0]
    return integrate.solve_ivp(_rhs, (t0, _T_DENSE), y0, method="DOP853", rtol=1e-12,
                               atol=1e-15, dense_output=True)


def _vIJ(t):
    """``(v, I, J = int_0^t I)`` at times ``t`` (asymptotic series beyond the dense range)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    sol = _dense_solution()
    out = np.empty((3,) + t.shape)
    inner = t <= _T_DENSE
    if np.any(inner):
        tc = np.maximum(t[inner], 1e-8)
        vals = sol.sol(tc)
        small = t[inner] < 1e-8
        vals[:, small] = np.array([t[inner][small], 0.5 * t[inner][small] ** 2,
                                   t[inner][small] ** 3 / 6.0])
        out[:, inner] = vals
    if np.any(~inner):
        to = t[~inner]
        out[0, ~inner] = 1 / (4 * np.sqrt(to)) + 1 / (32 * to ** 2)
        out[1, ~inner] = 1 / (8 * to) + 5 / 64 * to ** -2.5
        JT = sol.sol(_T_DENSE)[2]
        out[2, ~inner] = JT + np.log(to / _T_DENSE) / 8 - 5 / 96 * (to ** -1.5 - _T_DENSE ** -1.5)
    return out


@lru_cache(maxsize=16)
def _vIJ_lattice(n: int, dt: float):
    out = _vIJ(dt * np.arange(n + 1))
    out.setflags(write=False)
    return out


def mean_correction(t, beta: float):
    """``int_0^t E[X(t) X(u)] du``; zero in the noise-free limit beta = inf."""
    if not np.isfinite(beta):
        return np.zeros_like(np.asarray(t, dtype=float))
    return (4.0 / beta) * _vIJ(t)[1]


def int_mean_correction(t, beta: float):
    """``int_0^t mc(u) du``."""
    if not np.isfinite(beta):
        return np.zeros_like(np.asarray(t, dtype=float))
    return (4.0 / beta) * _vIJ(t)[2]


def _cstar_estimate(T):
    J = integrate.solve_ivp(_rhs, (1e-8, T), [1e-8, 5e-17, 1e-24 / 6], method="DOP853",
                            rtol=1e-13, atol=1e-16).y[2, -1]
    # tail int_T^inf 2 (I - 1/(8t)) dt with I - 1/(8t) ~ (5/64) t^{-5/2}
    return 2.0 * J - math.log(T) / 4.0 + (5.0 / 48.0) * T ** -1.5


def c_star(beta: float | None = None, T_cut: float = 20.0, tol: float = 1e-6):
    """The constant ``c* = lim_T (2 int_0^T I - log(T)/4)``.

    Computed at ``T_cut``, ``2 T_cut`` and ``4 T_cut`` with the known tail
    term, then Richardson-extrapolated in ``T^{-3}`` (the next tail order).
    Returns ``(value, error_estimate)``; ``beta`` is accepted for interface
    symmetry (the constant does not depend on it).
    """
    if T_cut < 20:
        raise ValueError("T_cut must be at least 20")
    e = [_cstar_estimate(T_cut * 2 ** k) for k in range(3)]
    r1 = (8 * e[1] - e[0]) / 7
    r2 = (8 * e[2] - e[1]) / 7
    err = abs(r2 - r1)
    return r2, err


@lru_cache(maxsize=1)
def c_star_golden() -> float:
    """Frozen value of c* shipped with the package."""
    data = json.loads(resources.files("stochairy").joinpath("data/cstar.json").read_text())
    return float(data["c_star"])


# ---------------------------------------------------------------------------
# theta


def theta(lam, t, X_value, beta: float):
    """``theta_lam(t)`` for ``t > 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("theta is defined for t > 0")
    return (np.sqrt(t) + lam / (2 * np.sqrt(t)) - 1 / (4 * (t + 1)) + X_value
            - mean_correction(t, beta))


@dataclass(frozen=True, eq=False)
class ThetaProcess:
    """``theta`` on a grid over [0, T] with the integral ``int_0^t theta``.

    ``theta[0]`` is left as ``nan`` (the ``lam/(2 sqrt t)`` term is singular);
    ``int_theta`` integrates that term exactly.
    """

    lam: complex
    grid: np.ndarray
    X: np.ndarray
    int_X: np.ndarray
    mean_correction: np.ndarray
    int_mean_correction: np.ndarray
    beta: float

    @property
    def theta(self):
        t = self.grid
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.sqrt(t) + self.lam / (2 * np.sqrt(t)) - 1 / (4 * (t + 1)) + self.X - self.mean_correction
        out = np.asarray(out, dtype=np.result_type(out, float))
        out[t == 0] = np.nan
        return out

    @property
    def int_theta(self):
        t = self.grid
        return (2.0 / 3.0 * t ** 1.5 + self.lam * np.sqrt(t) - 0.25 * np.log1p(t)
                + self.int_X - self.int_mean_correction)


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))
    return out


def theta_process(path: BrownianPath, lam, T: float, dt: float) -> ThetaProcess:
    n = int(round(T / dt))
    grid = dt * np.arange(n + 1)
    if np.isfinite(path.beta):
        X = compute_X(path, grid)
    else:
        X = np.zeros(n + 1)
    if np.isfinite(path.beta):
        vij = _vIJ_lattice(n, float(dt))
        mc, imc = (4.0 / path.beta) * vij[1], (4.0 / path.beta) * vij[2]
    else:
        mc = imc = np.zeros(n + 1)
    return ThetaProcess(lam, grid, X, _cumtrapz(X, grid), mc, imc, path.beta)


# ---------------------------------------------------------------------------
# SAi paths


@dataclass(frozen=True, eq=False)
class SAiPath:
    """SAi and SAi' on a grid ``[t_min, T]``."""

    lam: complex
    t0: float
    dt: float
    sai: np.ndarray
    sai_prime: np.ndarray
    construction: str
    T: float
    beta: float
    log_scale: float = 0.0

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.sai.size)

    def at(self, t):
        k = int(round((t - self.t0) / self.dt))
        if abs(self.t0 + k * self.dt - t) > 1e-6 * self.dt or not 0 <= k < self.sai.size:
            raise ValueError("t is not a node of the SAi grid")
        return self.sai[k], self.sai_prime[k]


def _random_factor(path: BrownianPath, T: float, dt: float) -> float:
    """``exp(-int_0^T (X - mc))``, the noise part of the seed at time T."""
    if not np.isfinite(path.beta):
        return 1.0
    th = theta_process(path, 0.0, T, dt)
    return math.exp(-(th.int_X[-1] - th.int_mean_correction[-1]))


def seed_values(path: BrownianPath, lam, T: float, dt: float, seed: str = "dirichlet"):
    """Seed ``(SAi(T), SAi'(T))`` for backward integration.

    ``"dirichlet"`` (default): ``(0, -exp(-int_0^T (X - mc)) / (pi Bi(T + lam)))``.
    This is the Dirichlet solution based at ``T`` under the normalization
    that defines SAi', with the deterministic part of ``exp(int theta)``
    replaced by its exact value ``sqrt(pi) Bi(T + lam)``. Only the decaying
    component survives the backward run, so the result is SAi up to the
    random tail beyond ``T``.

    ``"airy"``: ``(Ai, Ai')(T + lam) exp(-int_0^T (X - mc))``.

    ``"asymptotic"``: ``exp(-int_0^T theta) (1/(2 sqrt(pi T)), -1/(2 sqrt(pi)))``,
    the leading-order almost sure asymptotics.
    """
    lam = np.asarray(lam)
    if seed in ("dirichlet", "airy"):
        f = _random_factor(path, T, dt)
        if seed == "airy":
            return ai(T + lam) * f, ai_prime(T + lam) * f
        bi = special.airy(T + lam)[2]
        return np.zeros_like(bi), -f / (math.pi * bi)
    if seed == "asymptotic":
        th = theta_process(path, 0.0, T, dt)
        it = th.int_theta[-1] + lam * math.sqrt(T)
        e = np.exp(-it)
        return e / (2 * math.sqrt(math.pi * T)), -e / (2 * math.sqrt(math.pi))
    raise ValueError("seed must be 'dirichlet', 'airy' or 'asymptotic'")


def sai_backward(path: BrownianPath, lam, T: float = 12.0, t_min: float = -5.0,
                 dt: float = 1e-4, seed: str = "dirichlet") -> SAiPath:
    """SAi on ``[t_min, T]`` by backward integration from the seed at ``T``."""
    if not path.covers(min(t_min, 0.0), T):
        raise ValueError("path must cover [min(t_min, 0), T]")
    c1, c2 = seed_values(path, lam, T, dt, seed)
    sol = solve_ivp(path, lam, T, c1[()] if np.ndim(c1) == 0 else c1,
                    c2[()] if np.ndim(c2) == 0 else c2, t_min, T, dt)
    return SAiPath(lam, sol.t0, dt, sol.phi, sol.phi_prime, "backward-seeded", T, path.beta)


def sai_at(path: BrownianPath, lams, t: float = 0.0, T: float = 12.0, dt: float = 1e-4,
           seed: str = "dirichlet"):
    """``(SAi_lam(t), SAi_lam'(t))`` for a vector of lambdas."""
    lams = np.atleast_1d(np.asarray(lams))
    c1, c2 = seed_values(path, lams, T, dt, seed)
    return propagate(path, lams, T, t, c1, c2, dt)


@dataclass(frozen=True)
class ForwardLimit:
    """Normalized Dirichlet values ``f_{lam,s}(T) exp(-int_0^T theta)`` for each T.

    ``values`` is the sequence as defined; its limit is ``-sqrt(pi) SAi'(s)``.
    ``corrected`` divides out the deterministic factor
    ``sqrt(pi) Bi(T + lam) exp(-int_0^T theta_hat)``, which tends to 1 but
    only like ``1 + 1/(4T) + lam^2/(4 sqrt T)``. ``extrapolated`` is the
    corrected value at the largest T.
    """

    T: np.ndarray
    values: np.ndarray
    corrected: np.ndarray

    @property
    def extrapolated(self):
        return self.corrected[-1]


def _log_bi_defect(lam, T):
    # log(sqrt(pi) Bi(T+lam)) - int_0^T theta_hat
    x = T + lam
    ai_, _, bi, _ = special.airye(x)
    zeta = 2.0 / 3.0 * x ** 1.5
    log_bi = np.log(bi) + np.real(zeta)
    return 0.5 * math.log(math.pi) + log_bi - (2 / 3 * T ** 1.5 + lam * math.sqrt(T)
                                               - 0.25 * math.log1p(T))


def sai_forward_limit(path: BrownianPath, lam, s: float, T_list=(8.0, 10.0, 12.0, 14.0),
                      dt: float = 1e-4) -> ForwardLimit:
    """Approximations of ``-sqrt(pi) SAi'(s)`` from the Dirichlet solutions ``f_{lam,s}``.

    ``f_{lam,s}(T)`` as a function of ``s`` is the derivative of the
    Dirichlet solution based at ``T``, so one backward solve per ``T`` gives
    it, with the exponential normalization folded into the data.
    """
    T_list = np.asarray(sorted(T_list), dtype=float)
    if T_list[-1] > 14 + 1e-12:
        raise ValueError("T_list entries must not exceed 14")
    vals = []
    for T in T_list:
        th = theta_process(path, lam, T, dt)
        e = np.exp(-th.int_theta[-1])
        _, p = propagate(path, [lam], T, s, 0.0, e, dt)
        vals.append(p[0])
    vals = np.array(vals)
    corr = vals * np.exp(-np.array([_log_bi_defect(lam, T) for T in T_list]))
    return ForwardLimit(T_list, vals, corr)


# ---------------------------------------------------------------------------
# envelope


def envelope_profile(sai: SAiPath, theta: ThetaProcess, ell: int = 0, c_star_value=None,
                     convention: str = "consistent"):
    """``t^p exp(2/3 (t+lam)^1.5 + int_0^t X - 2 c*/beta) d^ell SAi`` on the SAi grid (t > 0).

    ``convention="consistent"`` uses ``p = ((-1)^ell - 2/beta)/4``, which is
    what the normalizer theta (with its ``-mc`` compensator) implies, since
    ``int_0^t mc = 2 c*/beta + log(t)/(2 beta) + o(1)``. ``"printed"`` uses
    ``p = ((-1)^ell + 2/beta)/4``; it differs by the factor ``t^(1/beta)``
    and is kept for comparison.
    """
    if convention not in ("consistent", "printed"):
        raise ValueError("convention must be 'consistent' or 'printed'")
    if ell not in (0, 1):
        raise ValueError("ell must be 0 or 1")
    cs = c_star_golden() if c_star_value is None else c_star_value
    t = sai.times
    mask = t > 0
    t = t[mask]
    k = np.rint((t - theta.grid[0]) / (theta.grid[1] - theta.grid[0])).astype(int)
    if k.max() >= theta.grid.size:
        raise ValueError("theta grid must cover the SAi grid")
    iX = theta.int_X[k]
    b = sai.beta
    inv_b = 0.0 if not np.isfinite(b) else 1.0 / b
    p = 0.25 * ((-1) ** ell + (2 if convention == "printed" else -2) * inv_b)
    d = (sai.sai if ell == 0 else sai.sai_prime)[mask]
    prof = t ** p * np.exp(2 / 3 * (t + sai.lam) ** 1.5 + iX - 2 * cs * inv_b) * d
    return t, prof


def envelope_check(sai: SAiPath, theta: ThetaProcess, T_from: float, ell: int = 0,
                   t_max: float | None = None, c_star_value=None,
                   convention: str = "consistent") -> float:
    """Sup over ``[T_from, t_max]`` of the deviation of the envelope from ``(-1)^ell / sqrt(4 pi)``.

    ``t_max`` defaults to ``T - 2``: closer to the seed time the backward
    solution still carries the seed's growing component (relative size
    ``exp(-4/3 (T^1.5 - t^1.5))``).
    """
    if T_from < 4:
        raise ValueError("T_from must be at least 4")
    t, prof = envelope_profile(sai, theta, ell, c_star_value, convention)
    hi = sai.T - 2.0 if t_max is None else t_max
    if hi < T_from:
        raise ValueError("empty envelope range; raise the seed time T")
    sel = (t >= T_from - 1e-12) & (t <= hi + 1e-12)
    return float(np.max(np.abs(prof[sel] - (-1) ** ell * ENVELOPE_CONST)))


# ---------------------------------------------------------------------------
# zeros in lambda


def sai_zero_scan(path: BrownianPath, lambda_window=(-12.0, 6.0), dt: float = 1e-4,
                  k_max: int = 3, T: float = 12.0, step: float = 0.05,
                  xtol: float = 1e-8) -> PointProcessSample:
    """Top ``k_max`` zeros of ``lam -> SAi_lam(0)`` by grid sign changes and root polishing."""
    lo, hi = map(float, lambda_window)
    grid = np.arange(hi, lo - 1e-12, -step)
    f = lambda l: float(np.real(sai_at(path, [l], 0.0, T, dt)[0][0]))
    pts = []
    # scan in chunks from the top so that few solves are wasted
    chunk = 40
    prev_l, prev_v = None, None
    for i0 in range(0, grid.size, chunk):
        g = grid[i0:i0 + chunk]
        v = np.real(sai_at(path, g, 0.0, T, dt)[0])
        for l, val in zip(g, v):
            if prev_v is not None and np.sign(val) != np.sign(prev_v):
                pts.append(optimize.brentq(f, l, prev_l, xtol=xtol))
                if len(pts) == k_max:
                    break
            prev_l, prev_v = l, val
        if len(pts) == k_max:
            break
    return PointProcessSample(np.array(pts), (lo, hi), "sai-zeros", path.beta, T, len(pts) == k_max)


# ---------------------------------------------------------------------------
# shift invariance


@dataclass(frozen=True)
class ShiftInvarianceResult:
    ks: float
    critical: float
    base: np.ndarray
    shifted: np.ndarray


def _sai_sample(seed, lam, t, beta, T, dt):
    lo = min(t, 0.0)
    n = int(round((T - lo) / dt))
    path = sample_brownian_path(seed, lo, dt, n, beta, "two-sided" if lo < 0 else "forward")
    return float(np.real(sai_at(path, [lam], t, T, dt)[0][0]))


def shift_invariance_test(seed, sigma: float, t: float = 0.0, lam: float = 0.0,
                          M: int = 10_000, beta: float = 2.0, T: float = 12.0,
                          dt: float = 1e-3) -> ShiftInvarianceResult:
    """Two-sample KS between ``SAi_lam(t)`` and ``SAi_{lam-sigma}(t+sigma)`` on independent noises."""
    if M < 1000:
        raise ValueError("M must be at least 1000")
    seed = as_seed(seed)
    a = np.array([_sai_sample(seed.child(0, i), lam, t, beta, T, dt) for i in range(M)])
    if sigma == 0:
        b = a.copy()
    else:
        b = np.array([_sai_sample(seed.child(1, i), lam - sigma, t + sigma, beta, T, dt)
                      for i in range(M)])
    return ShiftInvarianceResult(ks_two_sample(a, b), 1.63 * math.sqrt(2.0 / M), a, b)

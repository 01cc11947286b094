"""Riccati diffusion of the stochastic Airy equation and the Airy_beta sampler.

``rho = phi'/phi`` solves ``d rho = (t + lam - rho^2) dt + dB``. Near a zero of
``phi`` the trajectory runs to ``-inf`` and re-enters at ``+inf``; there the
state is switched to ``x = 1/rho``, which crosses zero transversally:

    dx = (1 - (t + lam) x^2 + (4/beta) x^3) dt - x^2 dB      (Ito form).

Each upward crossing of ``x = 0`` is a blow-down, i.e. a zero of ``phi``.
Along the way ``log|phi|`` is accumulated exactly through both charts, which
yields the principal-value representation of ``phi`` with no excision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .rng import BrownianPath, hash_normal

M_SWITCH = 10.0
X_RETURN = 1.0 / 8.0
MAX_DEPTH = 8
DRHO_MAX = 1.0
DX_MAX = 0.05


@njit(cache=True)
def _try_step(mode, y, t, h, dB, lam, s2, ito):
    """One step in the current chart. Returns (y_new, dlogphi)."""
    if mode == 0:
        f0 = t + lam - y * y
        yp = y + f0 * h + dB
        f1 = t + h + lam - yp * yp
        yn = y + 0.5 * (f0 + f1) * h + dB
        return yn, 0.5 * (y + yn) * h
    a = 1.0 - (t + lam) * y * y + ito * s2 * y * y * y
    yn = y + a * h - y * y * dB + y * y * y * (dB * dB - s2 * h)
    dV = 0.5 * ((t + h) * (t + h) - t * t) + lam * h + dB
    lr = 0.0
    if y != 0.0 and yn != 0.0:
        lr = math.log(abs(yn / y))
    elif yn != 0.0:
        lr = 0.0  # leaving phi = 0 exactly; log|phi| is -inf there and is tracked by the caller
    return yn, lr + 0.5 * (y + yn) * dV


@njit(cache=True)
def _advance(mode, y, t, h, Ba, Bb, lam, s2, ito, key, node, bd_times, nbd, bd_cap, max_count):
    """Advance over [t, t+h] with path values Ba, Bb, sub-stepping on large moves.

    Returns (mode, y, dlogphi, nbd).
    """
    yn, dl = _try_step(mode, y, t, h, Bb - Ba, lam, s2, ito)
    if abs(yn - y) <= (DRHO_MAX if mode == 0 else DX_MAX) and np.isfinite(yn):
        if mode == 1 and y < 0.0 and yn >= 0.0:
            if nbd < bd_cap:
                bd_times[nbd] = t + h * (-y) / (yn - y)
            nbd += 1
        if mode == 0 and abs(yn) > M_SWITCH:
            return 1, 1.0 / yn, dl, nbd
        if mode == 1 and abs(yn) > X_RETURN:
            return 0, 1.0 / yn, dl, nbd
        return mode, yn, dl, nbd
    st_t = np.empty(MAX_DEPTH + 2)
    st_h = np.empty(MAX_DEPTH + 2)
    st_a = np.empty(MAX_DEPTH + 2)
    st_b = np.empty(MAX_DEPTH + 2)
    st_id = np.empty(MAX_DEPTH + 2, dtype=np.int64)
    st_d = np.empty(MAX_DEPTH + 2, dtype=np.int64)
    sp = 0
    st_t[0] = t
    st_h[0] = h
    st_a[0] = Ba
    st_b[0] = Bb
    st_id[0] = 1
    st_d[0] = 0
    sp = 1
    dlog = 0.0
    while sp > 0:
        sp -= 1
        tt = st_t[sp]
        hh = st_h[sp]
        ba = st_a[sp]
        bb = st_b[sp]
        nid = st_id[sp]
        d = st_d[sp]
        yn, dl = _try_step(mode, y, tt, hh, bb - ba, lam, s2, ito)
        big = abs(yn - y) > (DRHO_MAX if mode == 0 else DX_MAX)
        if (big or not np.isfinite(yn)) and d < MAX_DEPTH:
            # Brownian-bridge midpoint, deterministic in (key, node, subinterval id)
            bm = 0.5 * (ba + bb) + math.sqrt(s2 * hh / 4.0) * hash_normal(key, node, nid)
            # push right half first so the left half runs next
            st_t[sp] = tt + 0.5 * hh
            st_h[sp] = 0.5 * hh
            st_a[sp] = bm
            st_b[sp] = bb
            st_id[sp] = 2 * nid + 1
            st_d[sp] = d + 1
            sp += 1
            st_t[sp] = tt
            st_h[sp] = 0.5 * hh
            st_a[sp] = ba
            st_b[sp] = bm
            st_id[sp] = 2 * nid
            st_d[sp] = d + 1
            sp += 1
            continue
        if mode == 1 and y < 0.0 and yn >= 0.0:
            if nbd < bd_cap:
                bd_times[nbd] = tt + hh * (-y) / (yn - y)
            nbd += 1
        dlog += dl
        y = yn
        # chart switches leave phi unchanged, so log|phi| needs no correction
        if mode == 0 and abs(y) > M_SWITCH:
            mode = 1
            y = 1.0 / y
        elif mode == 1 and abs(y) > X_RETURN:
            mode = 0
            y = 1.0 / y
        if nbd >= max_count:
            break
    return mode, y, dlog, nbd


@njit(cache=True)
def _run(B, stride, k0, k1, t0, dtp, lam, s2, ito, key, mode, y, max_count,
         record, rho_out, mode_out, logphi_out, bd_times):
    """Integrate from path node k0 to k1 (k1 > k0) in steps of ``stride`` nodes."""
    nbd = 0
    bd_cap = bd_times.size
    h = stride * dtp
    n = (k1 - k0) // stride
    lp = 0.0
    if record:
        rho_out[0] = y if mode == 0 else (1.0 / y if y != 0.0 else np.inf)
        mode_out[0] = mode
        logphi_out[0] = 0.0
    for j in range(n):
        ka = k0 + j * stride
        t = t0 + ka * dtp
        mode, y, dl, nbd = _advance(mode, y, t, h, B[ka], B[ka + stride], lam, s2, ito, key,
                                    ka, bd_times, nbd, bd_cap, max_count)
        lp += dl
        if record:
            rho_out[j + 1] = y if mode == 0 else (1.0 / y if y != 0.0 else np.inf)
            mode_out[j + 1] = mode
            logphi_out[j + 1] = lp
        if nbd >= max_count:
            return nbd, j + 1
    return nbd, n


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RiccatiTrajectory:
    """Grid record of ``rho`` with its blow-down times.

    ``values`` holds ``rho`` (``+inf`` where ``phi = 0`` exactly), ``regime``
    is 0 in the ``rho`` chart and 1 in the ``x = 1/rho`` chart, and
    ``log_phi`` is ``log|phi(t)/phi(s)|`` accumulated through both charts
    (undefined when the start is ``+inf``).
    """

    lam: float
    s: float
    omega: float
    dt: float
    values: np.ndarray
    regime: np.ndarray
    log_phi: np.ndarray
    blowdowns: np.ndarray
    beta: float

    @property
    def times(self):
        return self.s + self.dt * np.arange(self.values.size)

    @property
    def t_end(self):
        return self.s + self.dt * (self.values.size - 1)


def _layout(path: BrownianPath, s: float, t_end: float, dt: float):
    stride = int(round(dt / path.dt))
    if stride < 1 or abs(stride * path.dt - dt) > 1e-9 * dt:
        raise ValueError("dt must be a positive integer multiple of the path step")
    xs = (s - path.t0) / path.dt
    k0 = int(round(xs))
    if abs(xs - k0) > 1e-6:
        raise ValueError("start time must be a node of the path")
    n = int(round((t_end - s) / dt))
    if n < 1 or abs(n * dt - (t_end - s)) > 1e-6 * dt:
        raise ValueError("dt must divide t_end - s")
    k1 = k0 + n * stride
    if k0 < 0 or k1 > path.n_steps:
        raise ValueError("time range exceeds the path domain")
    return stride, k0, k1, n


def _initial(omega):
    if np.isinf(omega) and omega > 0:
        return 1, 0.0
    if not np.isfinite(omega):
        raise ValueError("omega must be finite or +inf")
    if abs(omega) > M_SWITCH:
        return 1, 1.0 / omega
    return 0, float(omega)


def _s2(beta):
    return 4.0 / beta if np.isfinite(beta) else 0.0


def evolve_riccati(path: BrownianPath, lam: float, s: float, omega: float, t_end: float,
                   dt: float | None = None, ito_correction: bool = True) -> RiccatiTrajectory:
    """Integrate the Riccati diffusion from ``rho(s) = omega`` to ``t_end``.

    Heun steps in the ``rho`` chart, Milstein steps in the ``x`` chart, and
    recursive halving (Brownian-bridge midpoints, depth <= 8) whenever a step
    moves ``rho`` by more than 1 or ``x`` by more than 0.05.
    """
    if np.iscomplexobj(lam):
        raise ValueError("the Riccati flow is implemented for real lambda")
    dt = path.dt if dt is None else dt
    stride, k0, k1, n = _layout(path, s, t_end, dt)
    mode, y = _initial(omega)
    rho = np.empty(n + 1)
    reg = np.empty(n + 1, dtype=np.int8)
    lp = np.empty(n + 1)
    cap = 64
    while True:
        bd = np.empty(cap)
        nbd, _ = _run(path.values, stride, k0, k1, path.t0, path.dt, float(lam), _s2(path.beta),
                      1.0 if ito_correction else 0.0, np.uint64(path.key), mode, y,
                      np.iinfo(np.int64).max, True, rho, reg, lp, bd)
        if nbd <= cap:
            break
        cap = 2 * nbd
    return RiccatiTrajectory(float(lam), float(s), float(omega), float(dt), rho, reg, lp,
                             np.sort(bd[:nbd]), path.beta)


def count_zeros(traj: RiccatiTrajectory, s: float, t: float) -> int:
    """Number of blow-downs in ``[s, t)``."""
    if s < traj.s - 1e-12 or t > traj.t_end + 1e-12:
        raise ValueError("interval outside the trajectory")
    b = traj.blowdowns
    return int(np.count_nonzero((b >= s) & (b < t)))


def pv_reconstruct(traj: RiccatiTrajectory, c1: float, s: float, t: float):
    """``(log|phi(t)|, sign flips)`` with ``phi(s) = c1`` through the Riccati path.

    ``log|phi|`` is the principal-value integral of ``rho``: trapezoid sums in
    the ``rho`` chart and ``log|x_b/x_a| + int x dV`` in the ``x`` chart, the
    latter being the exact increment of ``log|phi|`` across each zero.
    """
    if c1 == 0:
        raise ValueError("c1 must be non-zero")
    if np.isinf(traj.omega):
        raise ValueError("start at +inf has phi(s) = 0; use a finite omega")
    k = np.rint((np.array([s, t]) - traj.s) / traj.dt).astype(int)
    if np.any(k < 0) or np.any(k >= traj.values.size):
        raise ValueError("time outside trajectory")
    return math.log(abs(c1)) + traj.log_phi[k[1]] - traj.log_phi[k[0]], count_zeros(traj, s, t)


def _count(path, lam, s, t_end, dt, omega, max_count):
    stride, k0, k1, _ = _layout(path, s, t_end, dt)
    mode, y = _initial(omega)
    bd = np.empty(1)
    e = np.empty(1)
    e8 = np.empty(1, dtype=np.int8)
    nbd, _ = _run(path.values, stride, k0, k1, path.t0, path.dt, float(lam), _s2(path.beta), 1.0,
                  np.uint64(path.key), mode, y, max_count, False, e, e8, e, bd)
    return int(nbd)


def airy_beta_counting(path: BrownianPath, lam: float, t_max: float = 15.0,
                       dt: float | None = None, max_count: int | None = None) -> int:
    """Blow-downs on (0, t_max] of the flow started at ``+inf`` at time 0.

    ``max_count`` stops early once that many blow-downs are seen.
    """
    dt = path.dt if dt is None else dt
    mc = np.iinfo(np.int64).max if max_count is None else int(max_count)
    return _count(path, lam, 0.0, t_max, dt, np.inf, mc)


@dataclass(frozen=True, eq=False)
class PointProcessSample:
    """Top points of the Airy_beta process on one noise realization, decreasing."""

    eigenvalues: np.ndarray
    lambda_window: tuple
    method: str
    beta: float
    t_horizon: float
    complete: bool = True


def sample_airy_beta(path: BrownianPath, lambda_window=(-12.0, 6.0), k_max: int = 3,
                     dt: float | None = None, t_max: float = 15.0, tol: float = 1e-4,
                     scan_step: float = 0.5) -> PointProcessSample:
    """Top ``k_max`` points by bisection in ``lam`` of the blow-down count.

    The count ``N(lam)`` is the number of points above ``lam`` and is
    non-increasing in ``lam``; the i-th point is where it drops below i.
    """
    dt = path.dt if dt is None else dt
    lo, hi = map(float, lambda_window)
    cnt = lambda l, m=None: airy_beta_counting(path, l, t_max, dt, m)
    grid = np.arange(hi, lo - 1e-12, -scan_step)
    counts = []
    for g in grid:
        c = cnt(g, k_max)
        counts.append(c)
        if c >= k_max:
            break
    grid = grid[: len(counts)]
    counts = np.array(counts)
    pts = []
    for i in range(1, k_max + 1):
        idx = np.nonzero(counts >= i)[0]
        if idx.size == 0:
            break
        j = idx[0]
        if j == 0:
            break  # point above the window top
        a, b = grid[j], grid[j - 1]  # N(a) >= i > N(b)
        while b - a > tol:
            m = 0.5 * (a + b)
            if cnt(m, i) >= i:
                a = m
            else:
                b = m
        pts.append(0.5 * (a + b))
    complete = len(pts) == k_max
    return PointProcessSample(np.array(pts), (lo, hi), "riccati-counting", path.beta, t_max, complete)

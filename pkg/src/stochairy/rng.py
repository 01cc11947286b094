"""Deterministic random sources.

Every sampler is a pure function of a :class:`Seed` and its parameters. A seed
addresses one Philox counter-based stream through the 128-bit key
``(value, stream_id)``, so Monte Carlo replicates can be drawn in any order or
on any worker and still reproduce bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class Seed:
    value: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("value", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) <= MASK64):
                raise ValueError(f"Seed.{name} must fit in 64 unsigned bits")
            object.__setattr__(self, name, int(v))

    def generator(self) -> np.random.Generator:
        key = np.array([self.value, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *path: int) -> "Seed":
        """Seed of a sub-stream; distinct paths give unrelated keys."""
        s = self.stream_id
        for p in path:
            s = splitmix64(s ^ splitmix64((int(p) + 0x632BE59BD9B4E019) & MASK64))
        return Seed(self.value, s)

    def key64(self) -> int:
        """A single 64-bit key, used for in-kernel hash noise."""
        return splitmix64(self.value ^ splitmix64(self.stream_id))

    def as_dict(self) -> dict:
        return {"value": self.value, "stream_id": self.stream_id}


def as_seed(seed) -> Seed:
    if isinstance(seed, Seed):
        return seed
    if isinstance(seed, tuple):
        return Seed(*seed)
    return Seed(int(seed))


# ---------------------------------------------------------------------------
# in-kernel hash noise (Brownian-bridge refinement inside compiled loops)

@njit(cache=True, inline="always")
def _mix(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    z = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def hash_normal(key, a, b):
    """Standard normal that depends only on (key, a, b)."""
    h = _mix(np.uint64(key) ^ _mix(np.uint64(a) * np.uint64(0x100000001B3) + np.uint64(b)))
    h2 = _mix(h)
    u1 = ((h >> np.uint64(11)) + np.uint64(1)) * (1.0 / 9007199254740992.0)
    u2 = (h2 >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


# ---------------------------------------------------------------------------
# scalar and vector draws

def sample_gaussian(seed, mean: float = 0.0, sd: float = 1.0, size=None):
    if not np.isfinite(sd) or sd < 0:
        raise ValueError("sd must be finite and non-negative")
    if sd == 0:
        return mean if size is None else np.full(size, float(mean))
    return as_seed(seed).generator().normal(mean, sd, size=size)


def sample_chi(seed, alpha, size=None):
    """chi_alpha draws, as the square root of Gamma(alpha/2, scale 2)."""
    a = np.asarray(alpha, dtype=float)
    if np.any(~(a > 0)):
        raise ValueError("chi degrees of freedom must be positive")
    return np.sqrt(as_seed(seed).generator().gamma(a / 2.0, 2.0, size=size))


# ---------------------------------------------------------------------------
# Brownian paths

@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Piecewise-linear path on ``t0 + k dt`` with variance 4/beta per unit time.

    ``origin`` is the grid index where the path is pinned to zero (index 0
    for forward paths, the index of t = 0 for two-sided ones). ``key`` seeds
    any bridge refinement done by compiled solvers.
    """

    t0: float
    dt: float
    values: np.ndarray
    beta: float
    orientation: str = "forward"
    origin: int = 0
    key: int = 0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def sigma2(self) -> float:
        return 4.0 / self.beta

    def covers(self, lo: float, hi: float) -> bool:
        eps = 1e-9 * max(1.0, abs(self.t0), abs(self.t_end))
        return lo >= self.t0 - eps and hi <= self.t_end + eps

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if t.size and not self.covers(float(np.min(t)), float(np.max(t))):
            raise ValueError(f"time outside path domain [{self.t0}, {self.t_end}]")
        x = (t - self.t0) / self.dt
        i = np.clip(np.floor(x).astype(np.int64), 0, self.n_steps - 1)
        w = x - i
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def sample_brownian_path(seed, t0: float, dt: float, n_steps: int, beta: float,
                         orientation: str = "forward", normals=None) -> BrownianPath:
    """Brownian path from ``t0`` with ``n_steps`` increments of variance (4/beta) dt.

    ``orientation="two-sided"`` pins the path at t = 0 instead of ``t0``, which
    must then lie on the grid. ``normals`` overrides the standard normal draws.
    """
    if not (dt > 0) or not (beta > 0):
        raise ValueError("dt and beta must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    seed = as_seed(seed)
    if normals is None:
        normals = seed.generator().standard_normal(n_steps)
    normals = np.asarray(normals, dtype=float)
    if normals.shape != (n_steps,):
        raise ValueError("normals must have shape (n_steps,)")
    sd = np.sqrt(4.0 / beta * dt) if np.isfinite(beta) else 0.0
    values = np.empty(n_steps + 1)
    values[0] = 0.0
    np.cumsum(sd * normals, out=values[1:])
    origin = 0
    if orientation == "two-sided":
        x = -t0 / dt
        origin = int(round(x))
        if abs(x - origin) > 1e-9 or not (0 <= origin <= n_steps):
            raise ValueError("two-sided path needs t = 0 on the grid")
        values = values - values[origin]
    elif orientation != "forward":
        raise ValueError("orientation must be 'forward' or 'two-sided'")
    return BrownianPath(float(t0), float(dt), values, float(beta), orientation, origin, seed.key64())


def zero_path(t0: float, dt: float, n_steps: int, beta: float = np.inf) -> BrownianPath:
    """The identically zero path (noise-free reduction)."""
    origin = int(round(-t0 / dt)) if t0 <= 0 <= t0 + n_steps * dt else 0
    return BrownianPath(float(t0), float(dt), np.zeros(n_steps + 1), float(beta),
                        "two-sided", origin, 0)


def edge_brownian_from_walk(X, Y, N_p: int, beta: float, dt_out: float,
                            t_min: float = 0.0, t_max: float = 1.0,
                            seed=None) -> BrownianPath:
    """Edge Brownian motion driven by the walk of the matrix noise.

    ``X`` and ``Y`` are cumulative sums with ``X[0] = 0``. Time t corresponds
    to row ``n = N_p - t N_p^(1/3)``; for t > 0 the path is minus the scaled
    sum of ``X_k + Y_k`` over ``(n, N_p]``. Walk points sit on the output grid
    (the step is ``N_p^(-1/3) / m`` for the least ``m`` with step <= dt_out).
    When ``seed`` is given, Brownian bridges fill the gaps; otherwise the path
    is linear between walk points.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError("X and Y must have equal length")
    if not (0 < N_p < X.size):
        raise ValueError("N_p must index into the walk")
    hw = N_p ** (-1.0 / 3.0)
    m = max(1, int(np.ceil(hw / dt_out - 1e-9)))
    dt = hw / m
    j_lo = int(np.floor(t_min / hw + 1e-9))
    j_hi = int(np.ceil(t_max / hw - 1e-9))
    if N_p - j_hi < 0 or N_p - j_lo > X.size - 1:
        raise ValueError("requested time range exceeds the available walk")
    scale = np.sqrt(2.0 / beta) * N_p ** (-1.0 / 6.0) if np.isfinite(beta) else 0.0
    j = np.arange(j_lo, j_hi + 1)
    S = X + Y
    walk = scale * (S[N_p - j] - S[N_p])
    n_int = j.size - 1
    frac = np.arange(m) / m
    vals = np.empty(n_int * m + 1)
    vals[:-1] = (walk[:-1, None] * (1.0 - frac) + walk[1:, None] * frac).ravel()
    vals[-1] = walk[-1]
    key = 0
    if seed is not None and m > 1 and scale > 0:
        seed = as_seed(seed)
        key = seed.key64()
        z = seed.generator().standard_normal((n_int, m)) * np.sqrt(4.0 / beta * dt)
        w = np.cumsum(z, axis=1)
        bridge = w - w[:, -1:] * ((np.arange(1, m + 1)) / m)
        # bridge[:, k] is the offset at sub-point k+1; sub-point m is the next walk point
        vals[:-1].reshape(n_int, m)[:, 1:] += bridge[:, :-1]
    origin = -j_lo if j_lo <= 0 <= j_hi else 0
    return BrownianPath(j_lo * hw, dt, vals, float(beta), "two-sided", origin * m, key)


def quantile_couple_gamma(seed, k, beta: float, u=None):
    """Comonotone pair (Y_k, g_k) sharing one uniform quantile.

    Y_k is the normalized chi-square noise of row k; g_k is standard normal.
    ``k`` may be an array; ``u`` overrides the uniforms.
    """
    k = np.asarray(k)
    if np.any(k < 2):
        raise ValueError("quantile coupling needs k >= 2")
    if u is None:
        u = as_seed(seed).generator().random(k.shape)
    u = np.asarray(u, dtype=float)
    nu = beta * (k - 1.0)
    a2 = 2.0 * special.gammaincinv(nu / 2.0, u)
    Y = (a2 - nu) / np.sqrt(2.0 * nu)
    g = special.ndtri(u)
    if k.ndim == 0:
        return float(Y), float(g)
    return Y, g

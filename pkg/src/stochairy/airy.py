"""Classical Airy functions on the real line.

Values come from the AMOS/Cephes routines in :mod:`scipy.special`. Where
``Bi`` would overflow the exponentially scaled variants are used and the
growth is returned separately as a log factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

X_LIMIT = 1.0e4


@dataclass(frozen=True)
class AiryValue:
    """Ai, Ai', Bi, Bi' at ``x``.

    For x > 100 the fields are mantissas: the true values are
    ``ai * exp(-zeta)`` and ``bi * exp(zeta)`` with ``zeta = log_scale``.
    Elsewhere ``log_scale`` is zero.
    """

    x: np.ndarray | float
    ai: np.ndarray | float
    ai_prime: np.ndarray | float
    bi: np.ndarray | float
    bi_prime: np.ndarray | float
    log_scale: np.ndarray | float = 0.0

    def wronskian(self):
        """Ai Bi' - Ai' Bi, which equals 1/pi."""
        return self.ai * self.bi_prime - self.ai_prime * self.bi


def _check(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(np.abs(x) > X_LIMIT):
        raise ValueError(f"airy: argument outside |x| <= {X_LIMIT:g}")
    return x


def airy(x) -> AiryValue:
    """Ai, Ai', Bi, Bi' for real ``x`` (scalar or array)."""
    x0 = _check(x)
    xa = np.atleast_1d(x0)
    ai, aip, bi, bip = special.airy(xa)
    scale = np.zeros_like(xa)
    big = xa > 100.0  # Bi overflows near x = 104
    if np.any(big):
        aie, aipe, bie, bipe = special.airye(xa[big])
        ai[big], aip[big], bi[big], bip[big] = aie, aipe, bie, bipe
        scale[big] = 2.0 / 3.0 * xa[big] ** 1.5
    if x0.ndim == 0:
        return AiryValue(float(x0), ai[0], aip[0], bi[0], bip[0], scale[0])
    return AiryValue(x0, ai, aip, bi, bip, scale)


def ai(x):
    """Ai at real or complex arguments."""
    return special.airy(x)[0]


def ai_prime(x):
    """Ai' at real or complex arguments."""
    return special.airy(x)[1]


def log_ai(x):
    """log Ai(x) for x > 0 without underflow."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("log_ai needs x > 0")
    return np.log(special.airye(x)[0]) - 2.0 / 3.0 * x**1.5


def ai_zeros(k: int) -> np.ndarray:
    """The first ``k`` zeros of Ai, all negative and decreasing."""
    z = special.ai_zeros(k)[0]
    # one Newton step takes the tabulated zeros from ~1e-11 to roundoff
    a, ap, _, _ = special.airy(z)
    return z - a / ap

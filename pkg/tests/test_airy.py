import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochairy.airy import airy, ai, ai_prime, ai_zeros, log_ai

mp.mp.dps = 30


def test_values_at_zero():
    v = airy(0.0)
    assert abs(v.ai - 0.35502805388781723926) < 1e-15
    assert abs(v.ai_prime + 0.25881940379280679840) < 1e-15
    assert abs(v.ai - float(3 ** mp.mpf(-2 / 3) / mp.gamma(mp.mpf(2) / 3))) < 1e-15


@pytest.mark.parametrize("x", [-12.0, -5.3, -1.0, 0.4, 2.0, 7.5, 20.0])
def test_against_multiprecision_oracle(x):
    v = airy(x)
    for got, ref in ((v.ai, mp.airyai(x)), (v.ai_prime, mp.airyai(x, 1)),
                     (v.bi, mp.airybi(x)), (v.bi_prime, mp.airybi(x, 1))):
        assert abs(got - float(ref)) <= 1e-12 * max(1.0, abs(float(ref)))


def test_large_argument_asymptotics():
    x = 30.0
    r = math.sqrt(4 * math.pi) * x ** 0.25 * math.exp(2 / 3 * x ** 1.5 + log_ai(x))
    assert abs(r - 1) < 1e-3


def test_log_scaled_values_beyond_overflow():
    v = airy(300.0)
    assert v.log_scale == pytest.approx(2 / 3 * 300 ** 1.5)
    ref = mp.airyai(300) * mp.exp(mp.mpf(2) / 3 * mp.mpf(300) ** 1.5)
    assert abs(v.ai - float(ref)) < 1e-12 * float(ref)
    assert np.isfinite(v.bi) and np.isfinite(v.bi_prime)


@settings(max_examples=60, deadline=None)
@given(st.floats(-60.0, 400.0))
def test_wronskian_is_one_over_pi(x):
    assert abs(airy(x).wronskian() - 1 / math.pi) < 1e-12


def test_ode_residual():
    # five-point central difference of Ai' on an h = 1e-4 grid
    h = 1e-4
    x = np.linspace(-10, 10, 201)
    d2 = (-ai_prime(x + 2 * h) + 8 * ai_prime(x + h) - 8 * ai_prime(x - h) + ai_prime(x - 2 * h)) / (12 * h)
    assert np.max(np.abs(d2 - x * ai(x))) < 1e-10


def test_zeros():
    z = ai_zeros(5)
    for k in range(5):
        assert abs(z[k] - float(mp.airyaizero(k + 1))) < 1e-12
    assert abs(z[0] + 2.33810741) < 1e-8


def test_rejects_huge_and_nonfinite_arguments():
    with pytest.raises(ValueError):
        airy(1e5)
    with pytest.raises(ValueError):
        airy(float("nan"))

"""Log-space adaptive Gauss-Kronrod integration."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hetbf.errors import QuadratureError
from hetbf.quadrature import gauss_legendre, integrate_log


class TestIntegrateLog:
    def test_gaussian_whole_line(self):
        res = integrate_log(lambda x: -0.5 * x * x)
        assert res.log_value == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)
        assert res.rel_error <= 1e-8

    def test_huge_values_do_not_overflow(self):
        # exp(2000) * sqrt(2 pi) overflows a double
        res = integrate_log(lambda x: 2000.0 - 0.5 * x * x)
        assert res.log_value == pytest.approx(2000.0 + 0.5 * math.log(2 * math.pi), rel=1e-14)

    def test_narrow_offset_peak_with_breakpoint(self):
        mu, s = 350.0, 1e-3
        f = lambda x: -0.5 * ((x - mu) / s) ** 2  # noqa: E731
        res = integrate_log(f, breakpoints=[mu], scale=s)
        assert res.log_value == pytest.approx(math.log(s * math.sqrt(2 * math.pi)), abs=1e-9)

    def test_finite_interval(self):
        res = integrate_log(lambda x: np.log(np.maximum(x, 1e-300)) * 0 + 0.0, 0.0, 3.0)
        assert res.log_value == pytest.approx(math.log(3.0), abs=1e-14)

    def test_laplace_density_kink(self):
        res = integrate_log(lambda x: -np.abs(x), breakpoints=[0.0])
        assert res.log_value == pytest.approx(math.log(2.0), abs=1e-12)

    def test_half_line(self):
        res = integrate_log(lambda x: -x, 0.0, math.inf)
        assert res.log_value == pytest.approx(0.0, abs=1e-12)

    def test_budget_exhaustion_reports_estimate(self):
        f = lambda x: np.log(np.abs(np.sin(50 * x)) + 1e-300)  # noqa: E731
        with pytest.raises(QuadratureError) as info:
            integrate_log(f, 0.0, 50.0, rel_tol=1e-14, max_intervals=8, initial_splits=1)
        assert math.isfinite(info.value.estimate)
        assert info.value.rel_error > 1e-14


def test_gauss_legendre_integrates_polynomials():
    x, w = gauss_legendre(5)
    # exact for degree 2n - 1 = 9 on [-1, 1]
    assert np.sum(w * x ** 8) == pytest.approx(2.0 / 9.0, rel=1e-14)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.special import eval_genlaguerre, eval_hermite, factorial

from qhtomo._quad import gl_panels
from qhtomo.errors import CapacityError
from qhtomo.specfun import (
    FOURIER_SCALE,
    BasisIndex,
    envelope_bound,
    hermite_fn,
    hermite_functions,
    laguerre,
    laguerre_functions,
    wigner_basis,
    wigner_basis_ft,
    wigner_envelope,
)


def hermite_direct(m, x):
    return eval_hermite(m, x) * np.exp(-x * x / 2) / math.sqrt(2.0**m * factorial(m) * math.sqrt(math.pi))


class TestHermite:
    def test_values_at_origin(self):
        assert hermite_fn(0, 0.0) == pytest.approx(math.pi**-0.25, rel=1e-14)
        assert hermite_fn(0, 0.0) == pytest.approx(0.751126, abs=1e-6)
        assert hermite_fn(1, 0.0) == 0.0
        assert hermite_fn(2, 0.0) == pytest.approx(-1 / (math.sqrt(2) * math.pi**0.25), rel=1e-14)
        assert hermite_fn(2, 0.0) == pytest.approx(-0.531126, abs=1e-6)

    def test_matches_direct_formula(self):
        x = np.linspace(-6, 6, 41)
        vals = hermite_functions(20, x)
        for m in range(21):
            np.testing.assert_allclose(vals[m], hermite_direct(m, x), rtol=1e-10, atol=1e-13)

    def test_orthonormal(self):
        x, w = gl_panels(-20, 20, 40, 16)
        h = hermite_functions(20, x)
        gram = (h * w) @ h.T
        np.testing.assert_allclose(gram, np.eye(21), atol=1e-8)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            hermite_fn(513, 0.0)
        assert np.isfinite(hermite_fn(1024, 3.0, max_order=1024))
        with pytest.raises(CapacityError):
            hermite_fn(1025, 0.0, max_order=2048)

    def test_high_order_stays_finite_and_normalized(self):
        x, w = gl_panels(-50, 50, 1000, 16)
        h = hermite_fn(1000, x, max_order=1024)
        assert np.all(np.isfinite(h))
        assert np.sum(w * h * h) == pytest.approx(1.0, rel=1e-8)


class TestLaguerre:
    def test_examples(self):
        assert laguerre(0, 3, 1.7) == 1.0
        assert laguerre(1, 0, 2.0) == pytest.approx(-1.0, abs=1e-15)
        assert laguerre(2, 0, 2.0) == pytest.approx(-1.0, abs=1e-15)

    @given(st.integers(0, 30), st.integers(0, 10), st.floats(0, 40))
    def test_matches_scipy(self, n, alpha, x):
        ref = eval_genlaguerre(n, alpha, x)
        assert laguerre(n, alpha, x) == pytest.approx(ref, rel=1e-9, abs=1e-9 * max(1.0, abs(ref)))

    def test_normalized_functions(self):
        x = np.linspace(0, 30, 31)
        ell = laguerre_functions(12, 3, x)
        for k in range(13):
            ref = math.sqrt(factorial(k) / factorial(k + 3)) * np.exp(-x / 2) * x**1.5 * eval_genlaguerre(k, 3, x)
            np.testing.assert_allclose(ell[k], ref, rtol=1e-10, atol=1e-14)
        t, w = gl_panels(0, 120, 60, 16)
        ell = laguerre_functions(12, 3, t)
        np.testing.assert_allclose(np.sum(w * ell * ell, axis=1), 1.0, rtol=1e-10)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            laguerre(600, 0, 1.0)


class TestWignerBasis:
    def test_examples(self):
        assert wigner_basis(0, 0, 0.0, 0.0) == pytest.approx(1 / math.pi)
        assert wigner_basis(1, 1, 0.0, 0.0) == pytest.approx(-1 / math.pi)

    def test_index_symmetry(self):
        assert wigner_basis(1, 0, 0.3, 0.7) == pytest.approx(wigner_basis(0, 1, 0.3, -0.7), abs=1e-15)

    @pytest.mark.parametrize("m,n", [(0, 0), (1, 0), (0, 2), (3, 1), (5, 5), (2, 7), (8, 8), (8, 3)])
    def test_matches_integral_definition(self, m, n):
        # (1/pi) int exp(2 i p x) h_m(q - x) h_n(q + x) dx
        x, w = gl_panels(-14, 14, 56, 16)
        for q, p in [(0.3, -0.4), (1.1, 0.8), (-0.7, 1.9), (0.0, 0.0)]:
            integrand = np.exp(2j * p * x) * hermite_fn(m, q - x) * hermite_fn(n, q + x)
            ref = np.sum(w * integrand) / math.pi
            assert abs(wigner_basis(m, n, q, p) - ref) < 1e-8

    def test_envelope_examples(self):
        assert wigner_envelope(0, 0, 2.0) == pytest.approx(math.exp(-4) / math.pi, rel=1e-12)
        # e^{-4}/pi = 0.0058300; the rounded figure 0.005829 is one unit low in the last digit
        assert wigner_envelope(0, 0, 2.0) == pytest.approx(0.005830, abs=1e-6)
        assert wigner_envelope(5, 3, 1.5) <= 1 / math.pi
        assert wigner_envelope(5, 3, 5.0) <= math.exp(-4) / math.pi

    @given(st.integers(0, 25), st.integers(0, 25), st.floats(0, 15))
    def test_envelope_bound(self, m, n, z):
        assert wigner_envelope(m, n, z) <= envelope_bound(m, n, z) + 1e-12

    @given(st.integers(0, 12), st.integers(0, 12), st.floats(-4, 4), st.floats(-4, 4))
    def test_envelope_is_modulus(self, m, n, q, p):
        z = math.hypot(q, p)
        assert abs(wigner_basis(m, n, q, p)) == pytest.approx(wigner_envelope(m, n, z), abs=1e-14)

    def test_basis_index(self):
        assert BasisIndex(3, 5).s == 3.0
        with pytest.raises(ValueError):
            BasisIndex(-1, 0)


class TestFourier:
    def test_examples(self):
        assert wigner_basis_ft(0, 0, 0.0, 0.0) == pytest.approx(1.0)
        assert wigner_basis_ft(0, 0, 2.0, 0.0) == pytest.approx(math.exp(-1))
        u = np.linspace(-3, 3, 7)
        assert np.all(np.abs(np.imag(wigner_basis_ft(1, 1, u, 0.4 * u))) < 1e-15)

    @pytest.mark.parametrize("m,n", [(0, 0), (1, 0), (2, 1), (3, 3), (0, 4), (6, 2), (5, 6)])
    def test_matches_quadrature(self, m, n):
        x, w = gl_panels(-9, 9, 18, 16)
        q, p = np.meshgrid(x, x, indexing="ij")
        W = wigner_basis(m, n, q, p)
        ww = np.outer(w, w)
        for u, v in [(0.5, -0.3), (1.2, 0.9), (-2.0, 0.4)]:
            ref = np.sum(ww * W * np.exp(-1j * (u * q + v * p)))
            assert abs(wigner_basis_ft(m, n, u, v) - ref) < 1e-6

    def test_scale_constant(self):
        # the half-normalized form differs from the true transform by FOURIER_SCALE
        half = (-1j) ** 3 / 2 * wigner_basis(2, 1, 0.4, 0.1)
        assert wigner_basis_ft(2, 1, 0.8, 0.2) == pytest.approx(FOURIER_SCALE * half)
        assert FOURIER_SCALE == pytest.approx(2 * math.pi)

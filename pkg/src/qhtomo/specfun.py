"""Hermite functions, Laguerre polynomials and the Wigner basis of Fock states.

Every evaluation goes through a normalized three-term recurrence carried with a
per-point logarithmic scale, so orders up to ``m + n = 1024`` stay finite
without ever forming factorials or raw Hermite polynomials.

Fourier convention used throughout the package::

    F[g](u, v) = iint exp(-i (u q + v p)) g(q, p) dq dp

Under this convention ``F[W_mn](u, v) = pi (-i)^(m+n) W_mn(u/2, v/2)``.  The
often quoted form ``(-i)^(m+n)/2 W_mn(u/2, v/2)`` is smaller by the factor
:data:`FOURIER_SCALE` (= 2 pi); the value was fixed against direct 2-D
quadrature (see ``tests/test_specfun.py``).
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import CapacityError

#: default largest order accepted by the evaluators
MAX_ORDER = 512
#: hard ceiling for any single order or for ``m + n``
HARD_MAX_ORDER = 1024
#: ratio between the transform of W_mn under the package convention and the
#: ``(-i)^(m+n)/2 W_mn(u/2, v/2)`` normalization
FOURIER_SCALE = 2.0 * math.pi

_RESCALE = 1e100
_LOG_PI_QUARTER = 0.25 * math.log(math.pi)


@dataclass(frozen=True)
class BasisIndex:
    """Pair of Fock indices ``(m, n)`` labelling ``W_{m,n}``."""

    m: int
    n: int

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise ValueError(f"basis indices must be nonnegative, got ({self.m}, {self.n})")

    @property
    def s(self) -> float:
        return math.sqrt(self.m + self.n + 1)


def _check_order(order, max_order):
    limit = min(max_order, HARD_MAX_ORDER)
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    if order > limit:
        raise CapacityError(f"order {order} exceeds capacity {limit}", required=order)


def _unscale(a, logscale):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sign(a) * np.exp(logscale + np.log(np.abs(a)))
    return np.where(a == 0, 0.0, out)


def _rescale(a, a_prev, logscale):
    big = np.abs(a) > _RESCALE
    if np.any(big):
        factor = np.where(big, np.abs(a), 1.0)
        a = a / factor
        a_prev = a_prev / factor
        logscale = logscale + np.log(factor)
    return a, a_prev, logscale


def hermite_functions(m_max: int, x, max_order: int = MAX_ORDER) -> np.ndarray:
    """All normalized Hermite functions ``h_0 .. h_{m_max}`` at ``x``.

    Returns an array of shape ``(m_max + 1,) + x.shape``.
    """
    _check_order(m_max, max_order)
    x = np.asarray(x, dtype=float)
    out = np.empty((m_max + 1,) + x.shape)
    logscale = -0.5 * x * x - _LOG_PI_QUARTER
    a_prev = np.zeros_like(x)
    a = np.ones_like(x)
    out[0] = np.exp(logscale)
    for k in range(1, m_max + 1):
        a_next = math.sqrt(2.0 / k) * x * a - math.sqrt((k - 1) / k) * a_prev
        a_prev, a = a, a_next
        a, a_prev, logscale = _rescale(a, a_prev, logscale)
        out[k] = _unscale(a, logscale)
    return out


def hermite_fn(m: int, x, max_order: int = MAX_ORDER):
    """Normalized Hermite function ``h_m(x)``."""
    vals = hermite_functions(m, x, max_order)[m]
    return vals if vals.ndim else float(vals)


def laguerre(n: int, alpha: int, x, max_order: int = MAX_ORDER):
    """Generalized Laguerre polynomial ``L_n^alpha(x)`` (unnormalized)."""
    _check_order(n, max_order)
    _check_order(alpha, max_order)
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if x.ndim else float(prev)
    cur = 1.0 + alpha - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur if x.ndim else float(cur)


def laguerre_functions(n_max: int, alpha: int, x, max_order: int = MAX_ORDER) -> np.ndarray:
    """Normalized Laguerre functions for ``k = 0 .. n_max``.

    ``ell_k(x) = sqrt(k!/(k+alpha)!) exp(-x/2) x^(alpha/2) L_k^alpha(x)``; these
    satisfy ``int ell_k^2 dx = 1`` and ``|ell_k| <= 1``.  Shape of the result is
    ``(n_max + 1,) + x.shape``.
    """
    _check_order(n_max, max_order)
    _check_order(alpha, max_order)
    _check_order(n_max + alpha, HARD_MAX_ORDER)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("Laguerre functions are evaluated on x >= 0")
    out = np.empty((n_max + 1,) + x.shape)
    logscale = -0.5 * x + xlogy(0.5 * alpha, x) - 0.5 * gammaln(alpha + 1.0)
    a_prev = np.zeros_like(x)
    a = np.ones_like(x)
    out[0] = np.exp(logscale)
    for k in range(n_max):
        a_next = ((2 * k + 1 + alpha - x) * a - math.sqrt(k * (k + alpha)) * a_prev) / math.sqrt(
            (k + 1) * (k + 1 + alpha)
        )
        a_prev, a = a, a_next
        a, a_prev, logscale = _rescale(a, a_prev, logscale)
        out[k + 1] = _unscale(a, logscale)
    return out


def wigner_basis(m: int, n: int, q, p, max_order: int = MAX_ORDER):
    """Wigner function ``W_{m,n}(q, p)`` of the operator ``|m><n|``."""
    if m < n:
        return wigner_basis(n, m, q, -np.asarray(p, dtype=float), max_order)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    alpha = m - n
    ell = laguerre_functions(n, alpha, 2.0 * (q * q + p * p), max_order)[n]
    phase = np.exp(1j * alpha * np.angle(-q + 1j * p)) if alpha else 1.0
    out = (-1.0) ** m / math.pi * ell * phase
    out = np.asarray(out, dtype=complex)
    return out if out.ndim else complex(out)


def wigner_envelope(m: int, n: int, z, max_order: int = MAX_ORDER):
    """Phase-independent modulus ``l_{m,n}(z) = |W_{m,n}|`` at radius ``z``."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("radius must be nonnegative")
    lo, alpha = min(m, n), abs(m - n)
    out = np.abs(laguerre_functions(lo, alpha, 2.0 * z * z, max_order)[lo]) / math.pi
    return out if out.ndim else float(out)


def envelope_bound(m: int, n: int, z):
    """Upper bound ``(1/pi) min(1, exp(-(z - s)^2))`` with ``s = sqrt(m+n+1)``."""
    z = np.asarray(z, dtype=float)
    s = math.sqrt(m + n + 1)
    out = np.where(z <= s, 1.0, np.exp(-((z - s) ** 2))) / math.pi
    return out if out.ndim else float(out)


def wigner_basis_ft(m: int, n: int, u, v, max_order: int = MAX_ORDER):
    """Fourier transform of ``W_{m,n}`` at frequency ``(u, v)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    half_form = (-1j) ** (m + n) / 2.0 * np.asarray(wigner_basis(m, n, u / 2.0, v / 2.0, max_order))
    out = FOURIER_SCALE * half_form
    return out if out.ndim else complex(out)

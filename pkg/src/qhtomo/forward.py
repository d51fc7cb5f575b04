"""Forward maps: state -> Wigner function, quadrature densities, noisy densities."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from ._quad import gl_panels, integrate_doubling
from .errors import NumericalError
from .specfun import hermite_functions, laguerre_functions
from .state import DensityMatrix

#: quadrature density is ``sum rho_mn h_m h_n exp(i PHASE_SIGN phi (n - m))``;
#: the sign is the one that reproduces the Radon transform of ``wigner_eval``
PHASE_SIGN = +1
CLIP_TOL = 1e-10
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian detection noise with efficiency ``eta``."""

    eta: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")

    @property
    def gamma(self) -> float:
        return (1.0 - self.eta) / (4.0 * self.eta)

    @property
    def noise_sd(self) -> float:
        """Standard deviation of the additive term in ``Y = sqrt(eta) X + sd * xi``."""
        return math.sqrt((1.0 - self.eta) / 2.0)

    @property
    def rescaled_sd(self) -> float:
        """Noise standard deviation of ``Y / sqrt(eta)`` around ``X``."""
        return math.sqrt((1.0 - self.eta) / (2.0 * self.eta))

    @property
    def regime(self) -> str:
        if self.eta == 1.0:
            return "noiseless"
        return "amplified" if self.eta > 0.5 else "cutoff"


def _entries(rho):
    return rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def wigner_eval(rho, q, p) -> np.ndarray:
    """Wigner function ``sum rho_mn W_mn(q, p)`` of a state."""
    a = _entries(rho)
    d = a.shape[0]
    q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    x = 2.0 * (q * q + p * p)
    theta = np.angle(-q + 1j * p)
    total = np.zeros(q.shape, dtype=complex)
    for alpha in range(d):
        ell = laguerre_functions(d - 1 - alpha, alpha, x)
        n = np.arange(d - alpha)
        sign = (-1.0) ** (n + alpha)
        lower = a[n + alpha, n]
        coef = np.tensordot(sign * lower, ell, axes=(0, 0))
        if alpha == 0:
            total += coef
            continue
        upper = a[n, n + alpha]
        coef_up = np.tensordot(sign * upper, ell, axes=(0, 0))
        rot = np.exp(1j * alpha * theta)
        total += coef * rot + coef_up * rot.conj()
    total /= math.pi
    resid = np.max(np.abs(total.imag)) if total.size else 0.0
    if resid > IMAG_TOL:
        raise NumericalError(f"Wigner function has imaginary residual {resid:.3g}")
    out = total.real
    return out if out.ndim else float(out)


def wigner_ft(rho, u, v) -> np.ndarray:
    """Fourier transform of the Wigner function at frequency ``(u, v)``.

    Uses ``F[W_mn](u, v) = pi (-i)^(m+n) W_mn(u/2, v/2)``; the result is
    complex in general.
    """
    a = _entries(rho)
    d = a.shape[0]
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float) / 2.0, np.asarray(v, dtype=float) / 2.0)
    x = 2.0 * (u * u + v * v)
    theta = np.angle(-u + 1j * v)
    total = np.zeros(u.shape, dtype=complex)
    for alpha in range(d):
        ell = laguerre_functions(d - 1 - alpha, alpha, x)
        n = np.arange(d - alpha)
        # (-1)^m (-i)^(m+n) with m = n + alpha
        fac = (-1.0) ** (n + alpha) * (-1j) ** (2 * n + alpha)
        coef = np.tensordot(fac * a[n + alpha, n], ell, axes=(0, 0))
        if alpha == 0:
            total += coef
            continue
        coef_up = np.tensordot(fac * a[n, n + alpha], ell, axes=(0, 0))
        rot = np.exp(1j * alpha * theta)
        total += coef * rot + coef_up * rot.conj()
    return total if total.ndim else complex(total)


def _check_phi(phi):
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < -1e-12) or np.any(phi > math.pi + 1e-12):
        raise ValueError("phase must lie in [0, pi]")
    return phi


def quadrature_density(rho, x, phi) -> np.ndarray:
    """Density ``p_rho(x, phi)`` of the rotated quadrature ``Q cos phi + P sin phi``."""
    a = _entries(rho)
    d = a.shape[0]
    phi = _check_phi(phi)
    x, phi = np.broadcast_arrays(np.asarray(x, dtype=float), phi)
    h = hermite_functions(d - 1, x)
    m = np.arange(d).reshape((d,) + (1,) * x.ndim)
    amp = h * np.exp(1j * PHASE_SIGN * m * phi)
    val = np.einsum("m...,mn,n...->...", amp.conj(), a, amp).real
    if isinstance(rho, DensityMatrix) and not rho.raw and val.size and val.min() < -CLIP_TOL:
        raise NumericalError(f"quadrature density of a physical state went negative ({val.min():.3g})")
    val = np.where(val < 0, 0.0, val)
    return val if val.ndim else float(val)


def noisy_density(rho, noise: NoiseModel, y, phi, rtol: float = 1e-9) -> np.ndarray:
    """Density of ``Y = sqrt(eta) X + sqrt((1-eta)/2) xi`` given ``Phi = phi``."""
    phi = _check_phi(phi)
    if noise.eta == 1.0:
        return quadrature_density(rho, y, phi)
    y, phi = np.broadcast_arrays(np.asarray(y, dtype=float), phi)
    se, sd = math.sqrt(noise.eta), noise.noise_sd
    flat_y, flat_phi = y.ravel(), phi.ravel()

    def integrand(xi):
        x = (flat_y[:, None] - sd * xi[None, :]) / se
        dens = quadrature_density(rho, x, flat_phi[:, None])
        return dens * np.exp(-0.5 * xi * xi) / math.sqrt(2.0 * math.pi) / se

    out = integrate_doubling(integrand, -10.0, 10.0, panels=4, order=16, rtol=rtol).reshape(y.shape)
    return out if out.ndim else float(out)


@dataclass
class AngleBoundReport:
    x: np.ndarray
    clean: np.ndarray
    noisy: np.ndarray
    sup_clean: float
    sup_noisy: float
    nonnegative: bool
    finite: bool


def angle_integrated_bound_check(rho, noise: NoiseModel, x=None, n_phi: int = 64) -> AngleBoundReport:
    """Angle integrals of the clean and noise-convolved quadrature densities.

    The noisy integrand is ``p_rho(., phi) * NN`` with ``NN`` the centered Gaussian
    of variance ``(1 - eta) / (2 eta)``, i.e. the density of ``Y / sqrt(eta)``.
    """
    if x is None:
        x = np.linspace(-8.0, 8.0, 321)
    x = np.asarray(x, dtype=float)
    phis, wphi = gl_panels(0.0, math.pi, 1, order=max(n_phi, _entries(rho).shape[0] + 2))
    clean = quadrature_density(rho, x[:, None], phis[None, :]) @ wphi
    tau = noise.rescaled_sd
    if tau == 0.0:
        noisy = clean.copy()
    else:
        xi, wxi = gl_panels(-10.0, 10.0, 16, order=16)
        gauss = np.exp(-0.5 * xi * xi) / math.sqrt(2.0 * math.pi) * wxi
        pts = x[:, None, None] - tau * xi[None, None, :]
        dens = quadrature_density(rho, pts, phis[None, :, None])
        noisy = (dens @ gauss) @ wphi
    return AngleBoundReport(
        x=x,
        clean=clean,
        noisy=noisy,
        sup_clean=float(np.max(clean)),
        sup_noisy=float(np.max(noisy)),
        nonnegative=bool(np.all(clean >= 0) and np.all(noisy >= 0)),
        finite=bool(np.all(np.isfinite(clean)) and np.all(np.isfinite(noisy))),
    )

"""Truncated density matrices in the Fock basis and the decay classes R(B, r)."""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError

TRACE_TOL = 1e-6
EIG_TOL = 1e-10


@dataclass(frozen=True)
class StateClass:
    """Decay class ``|rho_mn| <= exp(-B (m+n)^(r/2))``.

    ``beta`` is the Gaussian-type decay rate used by the Wigner-side bounds:
    ``B / (1 + sqrt(B))^2`` when ``r == 2``, otherwise ``beta_factor * B``.
    """

    B: float
    r: float
    beta_factor: float = 0.9

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError(f"B must be positive, got {self.B}")
        if not 0 < self.r <= 2:
            raise ValueError(f"r must lie in (0, 2], got {self.r}")
        if not 0 < self.beta_factor < 1:
            raise ValueError("beta_factor must lie in (0, 1)")

    @property
    def beta(self) -> float:
        if self.r == 2:
            return self.B / (1.0 + math.sqrt(self.B)) ** 2
        return self.beta_factor * self.B

    @property
    def theta(self) -> float:
        return 1.0 / (1.0 + math.sqrt(self.B)) ** 2

    def bound(self, m, n):
        return np.exp(-self.B * np.power(np.add(m, n), self.r / 2.0))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian matrix ``rho[m, n]`` truncated at dimension ``dim``.

    Physical states (``raw=False``) must have trace in ``[1 - 1e-6, 1]`` and
    eigenvalues above ``-1e-10``.  Raw estimates skip those checks.
    """

    entries: np.ndarray
    class_B: Optional[float] = None
    class_r: Optional[float] = None
    raw: bool = False
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"density matrix must be square and nonempty, got shape {a.shape}")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        if not self.raw:
            tr = float(np.trace(a).real)
            if not (1.0 - TRACE_TOL <= tr <= 1.0 + 1e-12):
                raise ValueError(f"trace {tr!r} outside [1 - {TRACE_TOL}, 1]")
            lam = np.linalg.eigvalsh(a)
            if lam[0] < -EIG_TOL:
                raise ValueError(f"negative eigenvalue {lam[0]!r}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace_deficit(self) -> float:
        return 1.0 - float(np.trace(self.entries).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def __getitem__(self, key):
        return self.entries[key]

    def padded(self, dim: int) -> np.ndarray:
        """Entries embedded in a ``dim x dim`` zero matrix (or cropped)."""
        out = np.zeros((dim, dim), dtype=complex)
        d = min(dim, self.dim)
        out[:d, :d] = self.entries[:d, :d]
        return out

    def to_dict(self) -> dict:
        e = self.entries.ravel()
        out = {
            "dim": self.dim,
            "entries": [[float(c.real), float(c.imag)] for c in e],
        }
        if self.class_B is not None:
            out["class"] = {"B": self.class_B, "r": self.class_r}
        return out

    @classmethod
    def from_dict(cls, d: dict, raw: bool = False) -> "DensityMatrix":
        dim = int(d["dim"])
        pairs = np.asarray(d["entries"], dtype=float)
        if pairs.shape != (dim * dim, 2):
            raise ValueError(f"expected {dim * dim} [re, im] pairs, got shape {pairs.shape}")
        entries = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(dim, dim)
        klass = d.get("class") or {}
        return cls(
            entries,
            class_B=klass.get("B"),
            class_r=klass.get("r"),
            raw=bool(d.get("raw", raw)),
            label=d.get("label", ""),
        )


def save_state(rho: DensityMatrix, path, extra: Optional[dict] = None) -> None:
    d = rho.to_dict()
    if rho.label:
        d["label"] = rho.label
    if rho.raw:
        d["raw"] = True
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=1))


def load_state(path) -> DensityMatrix:
    return DensityMatrix.from_dict(json.loads(Path(path).read_text()))


# -- factories ---------------------------------------------------------------

def _check_deficit(deficit: float, dim: int, required: int, what: str):
    if deficit >= TRACE_TOL:
        raise CapacityError(
            f"{what}: dimension {dim} loses {deficit:.3g} of the trace; need dim >= {required}",
            required=required,
        )


def fock(k: int, dim: int) -> DensityMatrix:
    if dim <= k:
        raise CapacityError(f"fock({k}) needs dim >= {k + 1}, got {dim}", required=k + 1)
    a = np.zeros((dim, dim), dtype=complex)
    a[k, k] = 1.0
    return DensityMatrix(a, label=f"fock({k})")


def _coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    m = np.arange(dim)
    mod = abs(alpha)
    if mod == 0:
        c = np.zeros(dim, dtype=complex)
        c[0] = 1.0
        return c
    logmod = -0.5 * mod * mod + m * math.log(mod) - 0.5 * gammaln(m + 1.0)
    return np.exp(logmod) * np.exp(1j * m * np.angle(alpha))


def _poisson_required(mean: float, tol: float = TRACE_TOL) -> int:
    dim, tail = 1, 1.0
    c = math.exp(-mean)
    tail -= c
    while tail >= tol:
        c *= mean / dim
        tail -= c
        dim += 1
    return dim


def coherent(alpha: complex, dim: int) -> DensityMatrix:
    """Pure coherent state ``rho_mn = e^{-|a|^2} a^m conj(a)^n / sqrt(m! n!)``."""
    c = _coherent_amplitudes(complex(alpha), dim)
    deficit = 1.0 - float(np.sum(np.abs(c) ** 2))
    _check_deficit(deficit, dim, _poisson_required(abs(alpha) ** 2), f"coherent({alpha})")
    return DensityMatrix(np.outer(c, c.conj()), label=f"coherent({alpha})")


def thermal(mean_photons: float, dim: int) -> DensityMatrix:
    """Diagonal geometric state with the given mean photon number."""
    if mean_photons < 0:
        raise ValueError("mean photon number must be nonnegative")
    ratio = mean_photons / (1.0 + mean_photons)
    diag = (1.0 - ratio) * ratio ** np.arange(dim)
    deficit = ratio**dim
    required = dim if ratio == 0 else math.ceil(math.log(TRACE_TOL) / math.log(ratio)) + 1
    _check_deficit(deficit, dim, required, f"thermal({mean_photons})")
    return DensityMatrix(np.diag(diag).astype(complex), label=f"thermal({mean_photons})")


def mixture(components: Sequence[Tuple[float, DensityMatrix]]) -> DensityMatrix:
    """Convex combination of states with equal dimension."""
    if not components:
        raise ValueError("mixture needs at least one component")
    weights = np.array([w for w, _ in components], dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    dims = {rho.dim for _, rho in components}
    if len(dims) != 1:
        raise ValueError(f"mixture components have different dimensions {sorted(dims)}")
    a = sum(w * rho.entries for w, rho in components)
    label = "mixture(" + ", ".join(f"{w:g}*{rho.label}" for w, rho in components) + ")"
    return DensityMatrix(a, label=label)


def make_state(kind: str, dim: int, **params) -> DensityMatrix:
    """Build a canonical test state.

    ``kind`` is one of ``fock`` (``k``), ``coherent`` (``alpha``), ``thermal``
    (``mean_photons``) or ``mixture`` (``components``: list of
    ``(weight, DensityMatrix)``).
    """
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    if kind == "fock":
        return fock(int(params.get("k", 0)), dim)
    if kind == "coherent":
        return coherent(params.get("alpha", 0.0), dim)
    if kind == "thermal":
        return thermal(float(params.get("mean_photons", 0.0)), dim)
    if kind == "mixture":
        return mixture(params["components"])
    raise ValueError(f"unknown state kind {kind!r}")


# -- class membership and norms ---------------------------------------------

@dataclass
class ClassReport:
    member: bool
    worst_cell: Tuple[int, int]
    margin: float


def class_check(rho: DensityMatrix, cls: StateClass) -> ClassReport:
    m, n = np.indices(rho.entries.shape)
    slack = cls.bound(m, n) - np.abs(rho.entries)
    idx = np.unravel_index(int(np.argmin(slack)), slack.shape)
    margin = float(slack[idx])
    return ClassReport(member=margin >= 0.0, worst_cell=(int(idx[0]), int(idx[1])), margin=margin)


def _as_array(x) -> np.ndarray:
    return x.entries if isinstance(x, DensityMatrix) else np.asarray(x, dtype=complex)


def hs_norm_sq(rho) -> float:
    """Squared Hilbert-Schmidt norm ``sum |rho_jk|^2``."""
    return float(np.sum(np.abs(_as_array(rho)) ** 2))


def dm_distance_sq(a, b) -> float:
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(a - b) ** 2))

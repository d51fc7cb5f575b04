"""Synthetic homodyne data ``(Y, Phi)`` drawn from a state and a noise model.

Random streams come from NumPy's counter-based Philox4x64 generator.  Records
are split in blocks of :data:`BLOCK` consecutive indices and block ``b`` uses the
128-bit key ``(seed << 64) | b``, so a dataset does not depend on how many
workers produced it.  Inside a block the draw order is: all phases, then
rejection rounds for ``X | Phi``, then the detector noise.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import EnvelopeError
from .forward import NoiseModel, quadrature_density
from .state import TRACE_TOL, DensityMatrix

BLOCK = 4096
ENVELOPE_MARGIN = 1.1
MIN_ACCEPTANCE = 1e-3
SEED_MASK = (1 << 64) - 1


@dataclass
class Dataset:
    y: np.ndarray
    phi: np.ndarray
    eta: float
    seed: int = 0
    source_state_id: str = ""
    x: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.phi = np.asarray(self.phi, dtype=float).ravel()
        if self.y.shape != self.phi.shape:
            raise ValueError("y and phi must have the same length")
        if np.any(self.phi < 0) or np.any(self.phi > math.pi):
            raise ValueError("phases must lie in [0, pi]")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.eta)

    def sidecar(self) -> dict:
        return {"eta": self.eta, "seed": self.seed, "n": self.n, "source_state_id": self.source_state_id}

    def to_csv(self, path) -> Path:
        """Write ``y,phi`` rows with 17 significant digits plus a JSON sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write("y,phi\n")
            for y, phi in zip(self.y.tolist(), self.phi.tolist()):
                fh.write(f"{y:.17g},{phi:.17g}\n")
        sidecar_path(path).write_text(json.dumps(self.sidecar(), indent=1))
        return path

    @classmethod
    def from_csv(cls, path, eta: Optional[float] = None) -> "Dataset":
        path = Path(path)
        meta = {}
        side = sidecar_path(path)
        if side.exists():
            meta = json.loads(side.read_text())
        if eta is None:
            if "eta" not in meta:
                raise ValueError(f"no eta given and no sidecar at {side}")
            eta = meta["eta"]
        with path.open() as fh:
            header = fh.readline().strip()
            if header != "y,phi":
                raise ValueError(f"unexpected header {header!r} in {path}")
            rows = np.loadtxt(fh, delimiter=",", ndmin=2)
        if rows.size == 0:
            rows = np.empty((0, 2))
        return cls(
            rows[:, 0],
            rows[:, 1],
            eta=float(eta),
            seed=int(meta.get("seed", 0)),
            source_state_id=meta.get("source_state_id", ""),
        )


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


@dataclass(frozen=True)
class Envelope:
    """Scaled Gaussian ``c * N(0, width^2)`` dominating every ``p_rho(., phi)``."""

    width: float
    c: float

    @property
    def acceptance(self) -> float:
        return 1.0 / self.c

    def density(self, x):
        return np.exp(-0.5 * (x / self.width) ** 2) / (self.width * math.sqrt(2.0 * math.pi))


def _second_moment(rho: DensityMatrix, phis) -> np.ndarray:
    # <X_phi^2> = <(a e^{-i phi} + a^dag e^{i phi})^2> / 2
    d = rho.dim
    a = np.diag(np.sqrt(np.arange(1, d)), 1)
    ad = a.T
    r = rho.entries
    t_aa = np.trace(r @ a @ a)
    t_num = np.trace(r @ (a @ ad + ad @ a)).real
    return 0.5 * (2.0 * (t_aa * np.exp(-2j * phis)).real + t_num)


def build_envelope(rho: DensityMatrix, n_phi: Optional[int] = None, n_x: int = 2401) -> Envelope:
    """Gaussian envelope with width from the largest quadrature second moment.

    The scale ``c`` is the maximum density ratio over an ``(x, phi)`` grid times
    a 10% safety margin.
    """
    n_phi = n_phi or max(64, 8 * rho.dim)
    phis = np.linspace(0.0, math.pi, n_phi)
    m2 = float(np.max(_second_moment(rho, phis)))
    width = math.sqrt(max(1.0, 2.0 * m2))
    half = max(12.0, 8.0 * width)
    xs = np.linspace(-half, half, n_x)
    env = Envelope(width, 1.0)
    ratio = np.max(quadrature_density(rho, xs[:, None], phis[None, :]), axis=1) / env.density(xs)
    return Envelope(width, ENVELOPE_MARGIN * float(np.max(ratio)))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=((seed & SEED_MASK) << 64) | block))


def _sample_block(rho, env: Envelope, noise: NoiseModel, seed: int, block: int, size: int):
    rng = _block_rng(seed, block)
    phi = rng.uniform(0.0, math.pi, size)
    x = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        cand = env.width * rng.standard_normal(pending.size)
        u = rng.uniform(size=pending.size)
        target = quadrature_density(rho, cand, phi[pending])
        cap = env.c * env.density(cand)
        if np.any(target > cap):
            raise EnvelopeError(f"envelope violated for state {rho.label or '<unnamed>'}")
        ok = u * cap <= target
        x[pending[ok]] = cand[ok]
        pending = pending[~ok]
    xi = rng.standard_normal(size)
    y = math.sqrt(noise.eta) * x + noise.noise_sd * xi
    return x, y, phi


def sample(
    rho: DensityMatrix,
    noise: NoiseModel,
    n: int,
    seed: int = 0,
    keep_x: bool = False,
    threads: int = 1,
    envelope: Optional[Envelope] = None,
) -> Dataset:
    """Draw ``n`` i.i.d. records ``(Y, Phi)`` for state ``rho``.

    ``Phi`` is uniform on ``[0, pi]``, ``X | Phi`` follows ``p_rho(., Phi)`` by
    rejection from a Gaussian envelope, and ``Y = sqrt(eta) X + sqrt((1-eta)/2) xi``.
    With ``keep_x`` the pre-noise values are attached as ``Dataset.x``.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if rho.trace_deficit >= TRACE_TOL:
        raise ValueError(f"state trace deficit {rho.trace_deficit:.3g} too large to sample from")
    env = envelope or build_envelope(rho)
    if env.acceptance < MIN_ACCEPTANCE:
        raise EnvelopeError(
            f"acceptance rate {env.acceptance:.3g} below {MIN_ACCEPTANCE} for state {rho.label or '<unnamed>'}"
        )
    sizes = [min(BLOCK, n - start) for start in range(0, n, BLOCK)]

    def work(b):
        return _sample_block(rho, env, noise, seed, b, sizes[b])

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(b) for b in range(len(sizes))]
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    phi = np.concatenate([p[2] for p in parts])
    return Dataset(y, phi, noise.eta, seed=seed, source_state_id=rho.label, x=x if keep_x else None)

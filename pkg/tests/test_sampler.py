import math

import numpy as np
import pytest
from scipy import stats

from qhtomo._quad import gl_panels
from qhtomo.errors import EnvelopeError
from qhtomo.forward import NoiseModel, quadrature_density
from qhtomo.sampler import Dataset, Envelope, build_envelope, sample, sidecar_path
from qhtomo.state import coherent, fock, mixture, thermal


def second_moment_oracle(rho):
    x, wx = gl_panels(-14, 14, 14, 16)
    phi, wphi = gl_panels(0, math.pi, 2, 32)
    dens = quadrature_density(rho, x[:, None], phi[None, :])
    return float(np.sum(wx[:, None] * wphi[None, :] * x[:, None] ** 2 * dens) / math.pi)


class TestSample:
    def test_vacuum_variance(self):
        n = 100_000
        for eta in [1.0, 0.6, 0.3]:
            data = sample(fock(0, 3), NoiseModel(eta), n, seed=11)
            se = math.sqrt(2 / n) * 0.5
            assert abs(np.var(data.y) - 0.5) < 3 * se

    def test_deterministic(self):
        rho, nm = coherent(0.5, 12), NoiseModel(0.8)
        a = sample(rho, nm, 9000, seed=42)
        b = sample(rho, nm, 9000, seed=42)
        c = sample(rho, nm, 9000, seed=43)
        assert a.y.tobytes() == b.y.tobytes() and a.phi.tobytes() == b.phi.tobytes()
        assert not np.array_equal(a.y, c.y)

    def test_thread_count_invariant(self):
        rho, nm = thermal(0.3, 20), NoiseModel(0.7)
        a = sample(rho, nm, 10_000, seed=5, threads=1)
        b = sample(rho, nm, 10_000, seed=5, threads=3)
        assert a.y.tobytes() == b.y.tobytes()

    def test_prefix_stable(self):
        # records are split into seeded blocks, so a shorter run is a prefix of a longer one
        rho, nm = fock(1, 3), NoiseModel(0.9)
        a = sample(rho, nm, 5000, seed=3)
        b = sample(rho, nm, 9000, seed=3)
        np.testing.assert_array_equal(a.y[:4096], b.y[:4096])

    def test_phase_uniform_ks(self):
        n = 100_000
        data = sample(fock(1, 3), NoiseModel(0.9), n, seed=0)
        assert data.phi.min() >= 0 and data.phi.max() <= math.pi
        ks = stats.kstest(data.phi, stats.uniform(0, math.pi).cdf).statistic
        assert ks < 1.63 / math.sqrt(n)

    @pytest.mark.parametrize(
        "rho",
        [fock(2, 4), coherent(0.8 + 0.3j, 20), mixture([(0.4, fock(1, 8)), (0.6, coherent(0.5j, 8))])],
        ids=lambda r: r.label,
    )
    def test_second_moment_of_x(self, rho):
        n = 40_000
        data = sample(rho, NoiseModel(0.8), n, seed=0, keep_x=True)
        x2 = data.x**2
        target = second_moment_oracle(rho)
        assert abs(x2.mean() - target) < 4 * x2.std() / math.sqrt(n)
        # Y / sqrt(eta) = X + N(0, (1 - eta)/(2 eta))
        y2 = data.y**2
        assert abs(y2.mean() - (0.8 * target + 0.1)) < 4 * y2.std() / math.sqrt(n)

    @pytest.mark.parametrize(
        "rho", [fock(0, 2), fock(5, 12), coherent(1.5, 30), thermal(1.0, 40), coherent(0.5, 12)], ids=lambda r: r.label
    )
    def test_acceptance_rate(self, rho):
        env = build_envelope(rho)
        assert env.acceptance >= 0.1
        x = np.linspace(-15, 15, 3001)
        for phi in np.linspace(0, math.pi, 9):
            assert np.all(quadrature_density(rho, x, phi) <= env.c * env.density(x))

    def test_envelope_failure(self):
        with pytest.raises(EnvelopeError):
            sample(fock(0, 2), NoiseModel(1.0), 10, envelope=Envelope(1.0, 2000.0))
        with pytest.raises(EnvelopeError, match="fock"):
            sample(fock(2, 4), NoiseModel(1.0), 100, envelope=Envelope(0.5, 1.0))

    def test_invalid(self):
        with pytest.raises(ValueError):
            sample(fock(0, 2), NoiseModel(1.0), 0)


class TestDataset:
    def test_csv_round_trip(self, tmp_path):
        data = sample(coherent(0.5, 12), NoiseModel(0.7), 500, seed=9)
        path = data.to_csv(tmp_path / "d.csv")
        text = path.read_text().splitlines()
        assert text[0] == "y,phi" and len(text) == 501
        back = Dataset.from_csv(path)
        assert back.y.tobytes() == data.y.tobytes()
        assert back.phi.tobytes() == data.phi.tobytes()
        assert (back.eta, back.seed, back.source_state_id) == (0.7, 9, data.source_state_id)

    def test_csv_deterministic_bytes(self, tmp_path):
        rho, nm = fock(1, 3), NoiseModel(0.9)
        a = sample(rho, nm, 300, seed=1).to_csv(tmp_path / "a.csv")
        b = sample(rho, nm, 300, seed=1).to_csv(tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()
        assert sidecar_path(a).read_text() == sidecar_path(b).read_text()

    def test_missing_eta(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("y,phi\n0.1,0.2\n")
        with pytest.raises(ValueError):
            Dataset.from_csv(path)
        assert Dataset.from_csv(path, eta=0.5).n == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            Dataset([0.0], [4.0], eta=1.0)
        with pytest.raises(ValueError):
            Dataset([0.0, 1.0], [0.0], eta=1.0)
        with pytest.raises(ValueError):
            Dataset([0.0], [0.0], eta=0.0)

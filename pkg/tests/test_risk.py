import csv
import json
import math

import numpy as np
import pytest

from qhtomo.dm_estimator import DmTuning
from qhtomo.errors import NumericalError
from qhtomo.forward import NoiseModel, wigner_eval
from qhtomo.risk import (
    RateFit,
    RiskCell,
    RiskReport,
    class_series_sum,
    decay_amplitude,
    decay_check,
    dm_mise,
    fit_rate,
    isometry_check,
    laguerre_bound_check,
    rate_curve,
    replication_seeds,
    tail_lemma_check,
    tail_sum,
    truncation_bias_sq,
    wigner_mise,
    wigner_tail_l2_sq,
)
from qhtomo.sampler import sample
from qhtomo.state import StateClass, coherent, fock, mixture, thermal
from qhtomo.wigner_estimator import WignerGrid, WignerTuning, estimate_wigner, select_wigner_tuning


def cell(n, mise, tuning=None):
    return RiskCell(n, 5, mise, 0.1 * mise, 0.0, 0.0, mise, tuning or {})


class TestSeeds:
    def test_deterministic_distinct(self):
        a = replication_seeds(7, 20)
        assert a == replication_seeds(7, 20)
        assert len(set(a)) == 20
        assert a[:5] == replication_seeds(7, 5)
        assert a != replication_seeds(8, 20)


class TestDmRisk:
    def test_truncation_bias_examples(self):
        assert truncation_bias_sq(fock(0, 3), 1) == 0.0
        assert truncation_bias_sq(fock(1, 3), 1) == 1.0

    def test_cell_fields(self):
        c = dm_mise(fock(1, 3), 500, 4, NoiseModel(1.0), DmTuning(1), seed=3)
        assert c.b1_sq == 1.0
        assert c.replications == 4
        for v in (c.mise_mean, c.mise_sd, c.b1_sq, c.b2_sq, c.sigma_sq):
            assert np.isfinite(v) and v >= 0
        assert abs(c.decomposition_gap) <= 3 * c.mise_se + 1e-12

    def test_requires_two_replications(self):
        with pytest.raises(ValueError):
            dm_mise(fock(0, 3), 100, 1, NoiseModel(1.0), DmTuning(2))

    def test_mise_decreases_with_n(self):
        cls = StateClass(1.0, 2.0)
        rep = rate_curve(fock(0, 3), [1000, 10_000, 100_000], 20, NoiseModel(1.0), cls, seed=5)
        m = [c.mise_mean for c in rep.cells]
        assert m[0] > m[1] > m[2]
        for c in rep.cells:
            assert abs(c.decomposition_gap) <= 3 * c.mise_se + 1e-12

    def test_minimal_strong_noise_curve(self):
        rep = rate_curve(fock(0, 3), [1000, 3000, 10_000], 2, NoiseModel(0.4), StateClass(1.0, 1.0), seed=1)
        assert np.isfinite(rep.rate_fit.slope)
        assert all(c.tuning["delta"] is not None for c in rep.cells)


class TestWignerRisk:
    def test_zero_estimate_vs_vacuum(self):
        tuning = WignerTuning(0.25, 4.0)
        grid = WignerGrid(4.0, 0.02, np.zeros((401, 401)), tuning)
        q, p = grid.mesh()
        mise = grid.l2_sq(wigner_eval(fock(0, 3), q, p)) + wigner_tail_l2_sq(fock(0, 3), 4.0)
        assert mise == pytest.approx(1 / (2 * math.pi), abs=1e-3)

    def test_tail_closed_form(self):
        for s in (0.0, 1.0, 2.5):
            assert wigner_tail_l2_sq(fock(0, 3), s) == pytest.approx(math.exp(-2 * s * s) / (2 * math.pi), rel=1e-10)

    def test_grid_refinement_stable(self):
        data = sample(fock(0, 3), NoiseModel(0.9), 10_000, seed=12)
        tuning = WignerTuning.from_h(0.3)
        errs = []
        for step in (0.15, 0.075):
            grid = estimate_wigner(data, tuning, step=step)
            q, p = grid.mesh()
            errs.append(grid.l2_sq(wigner_eval(fock(0, 3), q, p)))
        assert abs(errs[0] - errs[1]) < 1e-3

    @pytest.mark.slow
    def test_mise_decreases_with_n(self):
        noise, cls = NoiseModel(0.9), StateClass(1.0, 2.0)
        rep = rate_curve(fock(0, 3), [1000, 10_000, 100_000], 20, noise, cls, kind="wigner", seed=9, wigner_step=0.25)
        m = [c.mise_mean for c in rep.cells]
        assert m[0] > m[1] > m[2]
        for c in rep.cells:
            assert c.b1_sq == pytest.approx(wigner_tail_l2_sq(fock(0, 3), c.tuning["h"] ** -1))
            assert abs(c.decomposition_gap) <= 3 * c.mise_se + 1e-12

    def test_cell_with_selected_tuning(self):
        t = select_wigner_tuning(1000, NoiseModel(0.9), StateClass(1.0, 2.0))
        c = wigner_mise(coherent(0.5, 12), 1000, 3, NoiseModel(0.9), t, seed=2, step=0.2)
        assert np.isfinite(c.mise_mean) and c.mise_mean > 0


class TestRateFit:
    def test_recovers_slope(self):
        ns = [1e3, 1e4, 1e5]
        cells = [cell(n, 3.0 * n**-0.8) for n in ns]
        fit = fit_rate(cells)
        assert fit.slope == pytest.approx(-0.8, rel=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), rel=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_power_predictor(self):
        cells = [cell(10**k, math.exp(-2 * x), {"N_real": x * x}) for k, x in zip(range(3, 6), (1.0, 1.5, 2.5))]
        fit = fit_rate(cells, predictor="N_power", r=1.0)
        assert fit.slope == pytest.approx(-2.0 * 2 ** 0 * 1.0, rel=1e-12)

    def test_degenerate(self):
        with pytest.raises(NumericalError):
            fit_rate([cell(100, 0.1), cell(100, 0.2)])
        with pytest.raises(NumericalError):
            fit_rate([cell(100, 0.1), cell(1000, 0.0)])
        with pytest.raises(ValueError):
            fit_rate([cell(100, 0.1), cell(1000, 0.05)], predictor="bogus")
        with pytest.raises(ValueError):
            rate_curve(fock(0, 3), [100, 1000], 2, NoiseModel(1.0), StateClass(1.0, 2.0))

    def test_report_files(self, tmp_path):
        rep = RiskReport("dm", [cell(1000, 0.1), cell(10000, 0.02)], RateFit(-0.7, 1.0, 0.99, "log_n"))
        rep.to_json(tmp_path / "r.json")
        rep.to_csv(tmp_path / "r.csv")
        d = json.loads((tmp_path / "r.json").read_text())
        assert d["estimator_kind"] == "dm" and d["rate_fit"]["slope"] == -0.7
        rows = list(csv.reader(open(tmp_path / "r.csv")))
        assert rows[0][:3] == ["n", "replications", "mise_mean"]
        assert float(rows[2][2]) == 0.02
        with pytest.raises(ValueError):
            RiskReport("other", [])


class TestLemmas:
    def test_laguerre_envelope(self):
        rep = laguerre_bound_check()
        assert rep.passed and rep.violations == 0
        assert rep.checked > 100_000

    def test_laguerre_envelope_perturbed(self):
        rep = laguerre_bound_check(m_max=6, perturb=1.5)
        assert not rep.passed and rep.violations > 0

    def test_tail_lemma(self):
        rep = tail_lemma_check()
        assert rep.passed
        for row in rep.details["rows"]:
            assert row["sum"] <= row["bound"]

    def test_tail_sum_oracle(self):
        z = 25
        direct = sum((t + 1) * math.exp(-math.sqrt(t)) for t in range(z, 200_000))
        assert tail_sum(1.0, 0.5, z) == pytest.approx(direct, rel=1e-9)

    def test_class_series(self):
        assert class_series_sum(StateClass(1.0, 2.0)) == pytest.approx(
            sum(math.exp(-(m + n)) for m in range(80) for n in range(80)), rel=1e-12
        )
        assert class_series_sum(StateClass(1.0, 1.0)) == pytest.approx(
            sum(math.exp(-math.sqrt(m + n)) for m in range(3000) for n in range(3000 - m)), rel=1e-6
        )

    def test_decay_amplitude_r_below_2(self):
        cls = StateClass(1.0, 1.0)
        ref = (class_series_sum(cls) + 4.0 * 2.0**3) / math.pi
        assert decay_amplitude(2.0, cls) == pytest.approx(ref)

    def test_isometry(self):
        states = [fock(0, 4), fock(3, 6), coherent(0.5, 12), thermal(0.2, 10)]
        assert isometry_check(states).passed


class TestDecay:
    def test_vacuum(self):
        rep = decay_check(fock(0, 3), StateClass(1.0, 2.0))
        assert rep.passed
        assert rep.beta == 0.25
        assert rep.z0_wigner is not None and not rep.violations_wigner
        assert rep.z0_fourier is not None and not rep.violations_fourier

    def test_coherent(self):
        rep = decay_check(coherent(0.5, 12), StateClass(0.8, 2.0))
        assert rep.passed
        assert rep.beta == pytest.approx(0.8 / (1 + math.sqrt(0.8)) ** 2)

    def test_r_below_2(self):
        rep = decay_check(mixture([(0.5, fock(0, 4)), (0.5, fock(1, 4))]), StateClass(0.3, 1.0))
        assert rep.passed
        s = rep.summary()
        assert s["max_ratio_beyond_z0_wigner"] <= 1.0 + 1e-12

    def test_requires_membership(self):
        with pytest.raises(ValueError):
            decay_check(fock(1, 3), StateClass(1.0, 2.0))

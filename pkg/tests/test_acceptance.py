"""The ten acceptance criteria at their stated tolerances.

Each test records one PASS/FAIL line; the lines are repeated in the terminal
summary under "acceptance criteria".
"""
import math
import time

import numpy as np
import pytest

from conftest import record_acceptance
from qhtomo.dm_estimator import DmTuning, estimate_dm, select_tuning, strong_noise_equations
from qhtomo.forward import NoiseModel
from qhtomo.pattern import Regime, build_table, norm_growth_report
from qhtomo.risk import (
    biorthogonality_check,
    decay_check,
    dm_mise,
    isometry_check,
    laguerre_bound_check,
    rate_curve,
    replication_seeds,
)
from qhtomo.sampler import build_envelope, sample
from qhtomo.state import StateClass, coherent, fock, thermal
from qhtomo.wigner_estimator import estimator_ft, kernel_at_zero, kernel_eval, select_wigner_tuning


def test_01_biorthogonality():
    start = time.perf_counter()
    rep = biorthogonality_check([fock(0, 4), fock(1, 4), coherent(0.5, 12)], max_level=6, tol=1e-6)
    elapsed = time.perf_counter() - start
    ok = rep.passed and elapsed < 120
    record_acceptance(1, ok, f"max |error| = {rep.details['max_error']:.2e} over {rep.checked} entries, {elapsed:.1f} s")
    assert ok


def test_02_laguerre_envelope():
    start = time.perf_counter()
    rep = laguerre_bound_check(m_max=25, dz=0.01)
    elapsed = time.perf_counter() - start
    ok = rep.violations == 0 and elapsed < 60
    record_acceptance(2, ok, f"{rep.violations} violations in {rep.checked} points, worst slack {rep.worst_margin:.2e}, {elapsed:.1f} s")
    assert ok


def test_03_isometry():
    states = [fock(0, 10), fock(3, 10), coherent(0.5, 10), thermal(0.3, 10)]
    rep = isometry_check(states, tol=1e-4)
    worst = max(r["rel_error"] for r in rep.details["rows"])
    record_acceptance(3, rep.passed, f"worst relative error {worst:.2e} over {len(states)} states")
    assert rep.passed


def test_04_unbiasedness():
    start = time.perf_counter()
    rho, noise, n, R, N = fock(1, 3), NoiseModel(0.8), 10_000, 50, 4
    table = build_table(N, Regime("amplified", 0.8))
    env = build_envelope(rho)
    tuning = DmTuning(N)
    est = np.stack(
        [estimate_dm(sample(rho, noise, n, seed=s, envelope=env), tuning, table).entries for s in replication_seeds(404, R)]
    )
    mean = est.mean(axis=0)
    se = {"re": est.real.std(axis=0, ddof=1) / math.sqrt(R), "im": est.imag.std(axis=0, ddof=1) / math.sqrt(R)}
    truth = rho.padded(N)
    worst = 0.0
    for j in range(N):
        for k in range(N - j):
            for part, f in (("re", np.real), ("im", np.imag)):
                s = se[part][j, k]
                dev = abs(f(mean[j, k]) - f(truth[j, k]))
                worst = max(worst, dev / s if s > 0 else (0.0 if dev == 0 else math.inf))
    elapsed = time.perf_counter() - start
    ok = worst <= 4.0 and elapsed < 600
    record_acceptance(4, ok, f"worst deviation {worst:.2f} MC-se (limit 4), {elapsed:.1f} s")
    assert ok


def test_05_strong_noise():
    noise, cls, truth, R = NoiseModel(0.4), StateClass(1.0, 1.0), fock(0, 3), 20
    tunings = {n: select_tuning(n, noise, cls) for n in (1000, 100_000)}
    resid = max(max(abs(v) for v in strong_noise_equations(t.inv_delta_real, t.N_real, n, noise, cls)) for n, t in tunings.items())
    feasible = all(t.inv_delta_real > 2 * math.sqrt(t.N_real) and 1 / t.delta > 2 * math.sqrt(t.N) for t in tunings.values())
    mise = {n: dm_mise(truth, n, R, noise, t, seed=7 + i).mise_mean for i, (n, t) in enumerate(tunings.items())}
    ok = resid < 1e-10 and feasible and mise[100_000] < 0.5 and mise[100_000] < mise[1000]
    t5 = tunings[100_000]
    record_acceptance(
        5,
        ok,
        f"N={t5.N}, 1/delta={1 / t5.delta:.4f}, residual {resid:.1e}; MISE(1e3)={mise[1000]:.3g}, MISE(1e5)={mise[100_000]:.3g}",
    )
    assert ok


def test_06_kernel_closed_forms():
    g = NoiseModel(0.8).gamma
    h = 0.3
    ref_noisy = math.expm1(g / h**2) / (4 * math.pi * g)
    ref_clean = 1 / (4 * math.pi * h * h)
    err_noisy = abs(kernel_eval(0.0, h, NoiseModel(0.8)) / ref_noisy - 1)
    err_clean = abs(kernel_eval(0.0, h, NoiseModel(1.0)) / ref_clean - 1)
    err_closed = abs(kernel_at_zero(h, NoiseModel(0.8)) / ref_noisy - 1)
    worst = max(err_noisy, err_clean, err_closed)
    ok = worst < 1e-8
    record_acceptance(6, ok, f"relative errors {err_noisy:.1e} (eta=0.8), {err_clean:.1e} (eta=1)")
    assert ok


def test_07_fourier_bias_identity():
    noise, n, R = NoiseModel(0.9), 100_000, 20
    tuning = select_wigner_tuning(n, noise, StateClass(1.0, 2.0))
    rho = fock(0, 3)
    env = build_envelope(rho)
    direction = np.array([math.cos(0.3), math.sin(0.3)])
    radii = (0.5 / tuning.h, 1.5 / tuning.h)
    vals = {r: [] for r in radii}
    for s in replication_seeds(77, R):
        data = sample(rho, noise, n, seed=s, envelope=env)
        for r in radii:
            vals[r].append(estimator_ft(data, tuning, r * direction))
    texts = []
    ok = True
    for r in radii:
        v = np.array(vals[r])
        target = math.exp(-r * r / 4) if r * tuning.h <= 1 else 0.0
        for part, f in (("re", np.real), ("im", np.imag)):
            tgt = f(complex(target))
            se = f(v).std(ddof=1) / math.sqrt(R)
            z = abs(f(v).mean() - tgt) / se
            ok &= z <= 4
            texts.append(f"|w|h={r * tuning.h:.1f} {part}: {z:.2f} se")
    record_acceptance(7, ok, f"h={tuning.h:.5f}; " + ", ".join(texts))
    assert ok


def test_08_norm_growth():
    rows = norm_growth_report(60, Regime(), N_min=10)
    N = np.array([r.N for r in rows], dtype=float)
    S = np.array([r.sum_l2_sq for r in rows])
    slope = float(np.polyfit(np.log(N), np.log(S), 1)[0])
    reg = Regime("amplified", 0.8)
    rows = norm_growth_report(40, reg, N_min=20)
    N = np.array([r.N for r in rows], dtype=float)
    S = np.array([r.sum_l2_sq for r in rows])
    coef = float(np.polyfit(N, np.log(S), 1)[0])
    limit = 8 * reg.gamma + 0.05
    ok = 2.0 <= slope <= 17 / 6 + 0.3 and coef <= limit
    record_acceptance(8, ok, f"noiseless log-log slope {slope:.3f} in [2, {17 / 6 + 0.3:.3f}]; amplified coefficient {coef:.4f} <= {limit:.3f}")
    assert ok


def test_09_decay():
    reports = {
        "fock(0), B=1": decay_check(fock(0, 4), StateClass(1.0, 2.0)),
        "coherent(0.5), B=0.8": decay_check(coherent(0.5, 12), StateClass(0.8, 2.0)),
    }
    ok = all(r.passed for r in reports.values())
    text = "; ".join(
        f"{k}: z0={r.z0_wigner:.2f}/{r.z0_fourier:.2f}, violations {len(r.violations_wigner)}/{len(r.violations_fourier)}"
        for k, r in reports.items()
    )
    record_acceptance(9, ok, text)
    assert ok


def test_10_rate_trend():
    rep = rate_curve(fock(0, 3), [1000, 10_000, 100_000], 20, NoiseModel(1.0), StateClass(1.0, 2.0), seed=2024)
    slope = rep.rate_fit.slope
    ok = -1.3 <= slope <= -0.7
    mises = ", ".join(f"{c.mise_mean:.3g}" for c in rep.cells)
    record_acceptance(10, ok, f"slope {slope:.4f} in [-1.3, -0.7]; MISE {mises}")
    assert ok

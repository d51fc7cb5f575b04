"""Command-line interface: ``qhtomo <command> ...``.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.  Every
run writes ``<command>.manifest.json`` into ``--out-dir``.
"""
from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import CapacityError, NumericalError, QhtomoError
from .forward import NoiseModel
from .state import DensityMatrix, StateClass, load_state, make_state, save_state

log = logging.getLogger("qhtomo")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(QhtomoError):
    """Bad command-line input (maps to exit code 2)."""


# -- helpers ------------------------------------------------------------------------

def _versions() -> dict:
    import numba
    import scipy

    return {"qhtomo": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _write_manifest(args, outputs: dict, extra: Optional[dict] = None) -> Path:
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "command": args.command if not getattr(args, "kind_cmd", None) else f"{args.command} {args.kind_cmd}",
        "params": params,
        "versions": _versions(),
        "outputs": {k: str(v) for k, v in outputs.items()},
    }
    if extra:
        manifest.update(extra)
    name = args.command if not getattr(args, "kind_cmd", None) else f"{args.command}-{args.kind_cmd}"
    path = Path(args.out_dir) / f"{name}.manifest.json"
    path.write_text(json.dumps(manifest, indent=1, default=_json_default))
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _out(args, name: str) -> Path:
    return Path(args.out_dir) / name


def _require_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: file not found: {path}")
    return p


def _class_from_args(args) -> StateClass:
    if args.B is None or args.r is None:
        raise UsageError("--auto needs both --B and --r")
    try:
        return StateClass(args.B, args.r)
    except ValueError as exc:
        raise UsageError(f"--B/--r: {exc}") from exc


# -- commands ---------------------------------------------------------------------

def cmd_make_state(args) -> int:
    if args.dim < 1:
        raise UsageError(f"--dim must be a positive integer, got {args.dim}")
    params = {}
    if args.kind == "fock":
        params["k"] = args.k
    elif args.kind == "coherent":
        try:
            params["alpha"] = complex(args.alpha.replace(" ", ""))
        except ValueError as exc:
            raise UsageError(f"--alpha: cannot parse {args.alpha!r} as a complex number") from exc
    elif args.kind == "thermal":
        params["mean_photons"] = args.mean_photons
    rho = make_state(args.kind, args.dim, **params)
    label = args.label or rho.label
    cls = {}
    if args.B is not None and args.r is not None:
        cls = {"class": {"B": args.B, "r": args.r}}
    out = _out(args, args.out)
    save_state(DensityMatrix(rho.entries, label=label), out, extra=cls)
    _write_manifest(
        args,
        {"state": out},
        {"trace_deficit": rho.trace_deficit, "dim": rho.dim, "label": label},
    )
    print(f"wrote {out} (dim {rho.dim}, trace deficit {rho.trace_deficit:.3g})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .sampler import sample

    rho = load_state(_require_file(args.state, "--state"))
    if args.n < 1:
        raise UsageError(f"--n must be positive, got {args.n}")
    if not 0 < args.eta <= 1:
        raise UsageError(f"--eta must lie in (0, 1], got {args.eta}")
    data = sample(rho, NoiseModel(args.eta), args.n, seed=args.seed, threads=args.threads)
    data.source_state_id = rho.label or Path(args.state).stem
    out = data.to_csv(_out(args, args.out))
    _write_manifest(args, {"data": out, "sidecar": out.with_suffix(".json")}, {"var_y": float(np.var(data.y))})
    print(f"wrote {out} ({data.n} records, eta {data.eta})")
    return EXIT_OK


def _load_data(args):
    from .sampler import Dataset

    path = _require_file(args.data, "--data")
    try:
        return Dataset.from_csv(path, eta=args.eta)
    except ValueError as exc:
        raise UsageError(f"--data: {exc}") from exc


def cmd_estimate_dm(args) -> int:
    from .dm_estimator import DmTuning, estimate_dm, project_physical, save_estimate, select_tuning
    from .pattern import build_table, cached_table

    data = _load_data(args)
    noise = data.noise
    if args.auto:
        tuning = select_tuning(max(data.n, 3), noise, _class_from_args(args))
    else:
        if args.N is None:
            raise UsageError("give --N (and --delta when eta <= 1/2) or use --auto")
        try:
            tuning = DmTuning(args.N, args.delta)
            tuning.regime(data.eta)
        except ValueError as exc:
            raise UsageError(f"--N/--delta: {exc}") from exc
    regime = tuning.regime(data.eta)
    if args.table_cache:
        table = cached_table(args.table_cache, tuning.N, regime)
    else:
        table = build_table(tuning.N, regime)
    rho = estimate_dm(data, tuning, table)
    diagnostics = {"n": data.n, "eta": data.eta}
    if args.project:
        rho, moved = project_physical(rho)
        diagnostics["projection_distance"] = moved
    out = _out(args, args.out)
    save_estimate(rho, tuning, out, diagnostics)
    _write_manifest(args, {"estimate": out}, {"tuning": tuning.to_dict()})
    print(f"wrote {out} (N = {tuning.N}, delta = {tuning.delta})")
    return EXIT_OK


def cmd_estimate_wigner(args) -> int:
    from .wigner_estimator import WignerTuning, estimate_wigner, select_wigner_tuning

    data = _load_data(args)
    if args.auto:
        tuning = select_wigner_tuning(max(data.n, 3), data.noise, _class_from_args(args))
    else:
        if args.h is None:
            raise UsageError("give --h (and optionally --sn) or use --auto")
        try:
            tuning = WignerTuning(args.h, args.sn if args.sn is not None else 1.0 / args.h)
        except ValueError as exc:
            raise UsageError(f"--h/--sn: {exc}") from exc
    grid = estimate_wigner(data, tuning, step=args.step, half_width=args.half_width, threads=args.threads)
    out = grid.to_csv(_out(args, args.out))
    _write_manifest(args, {"grid": out, "sidecar": out.with_suffix(".json")}, {"tuning": tuning.to_dict()})
    print(f"wrote {out} ({grid.values.shape[0]}^2 nodes, h = {tuning.h:.6g}, s_n = {tuning.s_n:.6g})")
    return EXIT_OK


def run_verify_suite(perturb: float = 1.0, quick: bool = False) -> List[dict]:
    """Numeric checks of the special-function, pattern and decay statements."""
    from .pattern import Regime, norm_growth_report
    from .risk import (
        biorthogonality_check,
        decay_check,
        isometry_check,
        laguerre_bound_check,
        tail_lemma_check,
    )
    from .state import coherent, fock, thermal

    checks = []

    def add(name, passed, **measured):
        checks.append({"check": name, "passed": bool(passed), **measured})

    lag = laguerre_bound_check(m_max=10 if quick else 25, perturb=perturb)
    add("laguerre_envelope", lag.passed, violations=lag.violations, worst_margin=lag.worst_margin, points=lag.checked)
    tail = tail_lemma_check()
    add("series_tail", tail.passed, worst_margin=tail.worst_margin)
    states = [fock(0, 12), fock(1, 12), coherent(0.5, 12)]
    bio = biorthogonality_check(states, max_level=4 if quick else 6)
    add("biorthogonality", bio.passed, max_error=bio.details["max_error"], margin=bio.worst_margin)
    iso = isometry_check([fock(0, 10), fock(3, 10), coherent(0.5, 10), thermal(0.3, 10)])
    add("isometry", iso.passed, margin=iso.worst_margin)
    for rho, cls in ((fock(0, 4), StateClass(1.0, 2)), (coherent(0.5, 12), StateClass(0.8, 2))):
        rep = decay_check(rho, cls, perturb=perturb)
        measured = {k: v for k, v in rep.summary().items() if k != "passed"}
        add(f"decay[{rho.label}]", rep.passed, **measured)
    n_max = 30 if quick else 60
    rows = norm_growth_report(n_max)
    N = np.array([r.N for r in rows], dtype=float)
    S = np.array([r.sum_l2_sq for r in rows])
    sel = N >= 10
    slope = float(np.polyfit(np.log(N[sel]), np.log(S[sel]), 1)[0])
    add("norm_growth_noiseless", 2.0 <= slope <= 17.0 / 6.0 + 0.3, loglog_slope=slope, window=[10, n_max])
    rows = norm_growth_report(40, Regime("amplified", 0.8))
    N = np.array([r.N for r in rows], dtype=float)
    S = np.array([r.sum_l2_sq for r in rows])
    sel = N >= 20
    coef = float(np.polyfit(N[sel], np.log(S[sel]), 1)[0])
    limit = 8.0 * NoiseModel(0.8).gamma + 0.05
    add("norm_growth_amplified", coef <= limit, exp_coefficient=coef, limit=limit)
    return checks


def cmd_verify(args) -> int:
    checks = run_verify_suite(perturb=args.perturb, quick=args.quick)
    out = _out(args, args.out)
    ok = all(c["passed"] for c in checks)
    out.write_text(json.dumps({"passed": ok, "checks": checks}, indent=1, default=_json_default))
    _write_manifest(args, {"report": out}, {"passed": ok})
    for c in checks:
        measured = {k: v for k, v in c.items() if k not in ("check", "passed") and not isinstance(v, list)}
        text = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in measured.items())
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}: {text}")
    return EXIT_OK if ok else EXIT_NUMERIC


PLOT_TEMPLATE = '''"""Plot MISE against n from {csv_name} (generated)."""
import csv

import matplotlib.pyplot as plt

with open("{csv_name}") as fh:
    rows = list(csv.DictReader(fh))
n = [float(r["n"]) for r in rows]
mise = [float(r["mise_mean"]) for r in rows]
sd = [float(r["mise_sd"]) / float(r["replications"]) ** 0.5 for r in rows]
fig, ax = plt.subplots()
ax.errorbar(n, mise, yerr=sd, marker="o")
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("n")
ax.set_ylabel("MISE")
ax.set_title("{title}")
fig.savefig("{png_name}", dpi=150)
'''


def cmd_bench(args) -> int:
    from .risk import rate_curve

    rho = load_state(_require_file(args.state, "--state"))
    try:
        ns = [int(float(v)) for v in args.ns.split(",")]
    except ValueError as exc:
        raise UsageError(f"--ns: expected comma-separated sample sizes, got {args.ns!r}") from exc
    if args.R < 2:
        raise UsageError(f"--R must be at least 2, got {args.R}")
    if len(ns) < 3:
        raise UsageError("--ns needs at least 3 sample sizes")
    cls = _class_from_args(args)
    report = rate_curve(
        rho, ns, args.R, NoiseModel(args.eta), cls, kind=args.estimator, predictor=args.predictor,
        seed=args.seed, threads=args.threads,
    )
    stem = args.out
    json_path = _out(args, f"{stem}.json")
    csv_path = _out(args, f"{stem}.csv")
    plot_path = _out(args, f"plot_{stem}.py")
    report.to_json(json_path)
    report.to_csv(csv_path)
    plot_path.write_text(
        PLOT_TEMPLATE.format(csv_name=csv_path.name, png_name=f"{stem}.png", title=f"{args.estimator} MISE, eta={args.eta}")
    )
    _write_manifest(args, {"report": json_path, "csv": csv_path, "plot_script": plot_path})
    fit = report.rate_fit
    for c in report.cells:
        print(f"n={c.n}: mise={c.mise_mean:.4g} (se {c.mise_se:.2g})")
    print(f"slope={fit.slope:.4g} vs {fit.predictor}, r^2={fit.r_squared:.4f}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------

def _add_class_flags(p):
    p.add_argument("--auto", action="store_true", help="theory-driven tuning for class R(B, r)")
    p.add_argument("--B", type=float, help="class decay constant B")
    p.add_argument("--r", type=float, help="class exponent r in (0, 2]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhtomo", description="Noisy homodyne tomography: simulate, estimate, verify.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    parser.add_argument("--threads", type=int, default=1, help="worker cap (default 1)")
    parser.add_argument("--out-dir", default=".", help="directory for outputs and manifests")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-state", help="write a canonical state as JSON")
    p.add_argument("--kind", required=True, choices=["fock", "coherent", "thermal"])
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--k", type=int, default=0, help="photon number for fock")
    p.add_argument("--alpha", default="0", help="complex amplitude for coherent, e.g. 1.2+0.5j")
    p.add_argument("--mean-photons", type=float, default=0.0, help="mean photon number for thermal")
    p.add_argument("--label", default="")
    p.add_argument("--B", type=float, help="record class parameter B")
    p.add_argument("--r", type=float, help="record class parameter r")
    p.add_argument("--out", default="state.json")
    p.set_defaults(func=cmd_make_state)

    p = sub.add_parser("simulate", help="draw a noisy homodyne dataset")
    p.add_argument("--state", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--out", default="data.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate a density matrix or a Wigner function")
    est = p.add_subparsers(dest="kind_cmd", required=True)
    q = est.add_parser("dm", help="pattern-function density matrix estimate")
    q.add_argument("--data", required=True)
    q.add_argument("--eta", type=float, help="override the sidecar efficiency")
    _add_class_flags(q)
    q.add_argument("--N", type=int, help="estimate all j + k < N")
    q.add_argument("--delta", type=float, help="spectral cut-off (eta <= 1/2)")
    q.add_argument("--project", action="store_true", help="project onto physical states")
    q.add_argument("--table-cache", help="binary pattern table cache file")
    q.add_argument("--out", default="estimate.json")
    q.set_defaults(func=cmd_estimate_dm)
    q = est.add_parser("wigner", help="kernel Wigner function estimate on a grid")
    q.add_argument("--data", required=True)
    q.add_argument("--eta", type=float, help="override the sidecar efficiency")
    _add_class_flags(q)
    q.add_argument("--h", type=float, help="bandwidth")
    q.add_argument("--sn", type=float, help="truncation radius (default 1/h)")
    q.add_argument("--step", type=float, help="grid step (default h/2)")
    q.add_argument("--half-width", type=float, help="grid half-width (default s_n)")
    q.add_argument("--out", default="wigner.csv")
    q.set_defaults(func=cmd_estimate_wigner)

    p = sub.add_parser("verify", help="run the numeric lemma and proposition checks")
    p.add_argument("--perturb", type=float, default=1.0, help="scale evaluated envelopes (sensitivity test)")
    p.add_argument("--quick", action="store_true", help="smaller index ranges")
    p.add_argument("--out", default="verify.json")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="Monte-Carlo MISE over several n with a rate fit")
    p.add_argument("--state", required=True)
    p.add_argument("--estimator", choices=["dm", "wigner"], default="dm")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--ns", default="1000,10000,100000")
    p.add_argument("--R", type=int, default=20)
    p.add_argument("--B", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--predictor", choices=["log_n", "N_power"], default="log_n")
    p.add_argument("--out", default="bench")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        parser.error(f"--threads must be positive, got {args.threads}")
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (UsageError, CapacityError, FileNotFoundError) as exc:
        print(f"qhtomo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"qhtomo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, QhtomoError) as exc:
        print(f"qhtomo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

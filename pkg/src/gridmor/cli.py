"""Command-line pipeline: generate grids, reduce, compare, sweep.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Per-run simulation failures inside `compare` and `sweep` are recorded in
the CSV output (``failed`` column) instead of aborting.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import GridmorError, SimulationFailure, ValidationError
from .lift import build_quadratic, lift_state, shift_system
from .lyap import MACHINE_TAU
from .netparams import load_parameters, save_parameters, synth_grid
from .reduction import (
    BalancedTruncationReducer,
    PODReducer,
    ReducedQuadraticModel,
    load_reduced_model,
    save_reduced_model,
    simulate_reduced,
)
from .sim import compare, simulate_quadratic, write_trajectory_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

SWEEP_COLUMNS = (
    "method",
    "alpha",
    "N",
    "nr",
    "l2_output_error",
    "pti_l2",
    "max_abs_output_error",
    "failed",
)


def _perturb_spec(text):
    try:
        idx, _, val = text.partition(":")
        return int(idx), float(val)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected i:value, got {text!r}") from exc


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridmor",
        description="Reduce oscillator grid models by quadratic lifting and balanced truncation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random synthetic grid parameter file")
    p.add_argument("--n", type=int, required=True, help="number of oscillators")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--connectivity", type=float, default=1.0)
    p.add_argument("--out", required=True, help="parameter file to write")

    p = sub.add_parser("reduce", help="build a reduced model from a parameter file")
    p.add_argument("--params", required=True)
    p.add_argument("--method", choices=("bt", "pod"), default="bt")
    p.add_argument("--nr", type=int, required=True, help="reduced dimension")
    p.add_argument("--alpha", type=float, default=5e-3)
    p.add_argument("--N", type=int, default=3, help="gramian series terms (odd)")
    p.add_argument("--tau", type=float, default=MACHINE_TAU)
    p.add_argument("--tend", type=float, default=2.0, help="POD training horizon (s)")
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--out", required=True, help="reduced-model file to write")
    p.add_argument("--diag", default=None, help="diagnostics CSV (default: <out>.diag.csv)")

    p = sub.add_parser("compare", help="simulate full and reduced models, report errors")
    p.add_argument("--params", required=True)
    p.add_argument("--model", required=True, help="reduced-model file from `reduce`")
    p.add_argument("--tend", type=float, default=2.0)
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--perturb-x0", type=_perturb_spec, default=None, metavar="I:VAL",
                   help="set oscillator I's initial angle to VAL rad")
    p.add_argument("--perturb-u", type=_perturb_spec, default=None, metavar="I:FACTOR",
                   help="multiply input I by FACTOR")
    p.add_argument("--out", required=True,
                   help="output prefix; writes <out>_metrics.csv, <out>_full.csv, <out>_reduced.csv")

    p = sub.add_parser("sweep", help="run the pipeline over a config grid, one CSV row per run")
    p.add_argument("--params", required=True)
    p.add_argument("--method", type=str, default="bt", help="comma list from {bt,pod}")
    p.add_argument("--alpha", type=_float_list, default=[5e-3], help="comma list")
    p.add_argument("--N", type=_int_list, default=[3], help="comma list of odd term counts")
    p.add_argument("--nr", type=_int_list, required=True, help="comma list of reduced dimensions")
    p.add_argument("--tau", type=float, default=MACHINE_TAU)
    p.add_argument("--tend", type=float, default=2.0)
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--perturb-x0", type=_perturb_spec, default=None, metavar="I:VAL")
    p.add_argument("--perturb-u", type=_perturb_spec, default=None, metavar="I:FACTOR")
    p.add_argument("--seed", type=int, default=None,
                   help="unused for fixed parameter files; accepted for script symmetry")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="sweep CSV to write")
    return parser


# -- shared pipeline pieces --------------------------------------------


def _build_reduced(params, method, nr, alpha, N, tau, tend, rtol, atol):
    """Lift, shift, and reduce; returns (model, metadata, diagnostics rows)."""
    shifted = shift_system(build_quadratic(params))
    if method == "bt":
        est = BalancedTruncationReducer(n_reduced=nr, alpha=alpha, n_terms=N, tau=tau)
        est.fit(shifted)
        diag = [("hankel_sigma", i + 1, s) for i, s in enumerate(est.singular_values_)]
        gram = est.gramians_
        for rec in gram.term_stats:
            i = rec["term"]
            diag.append(("P_rank", i, rec["P_rank"]))
            diag.append(("Q_rank", i, rec["Q_rank"]))
            diag.append(("P_residual", i, rec["P_residual"]))
            diag.append(("Q_residual", i, rec["Q_residual"]))
        diag.append(("P_rank_total", "", gram.P_factor.rank))
        diag.append(("Q_rank_total", "", gram.Q_factor.rank))
        metadata = {"method": "bt", "alpha": alpha, "N": N, "tau": tau, "nr": nr}
    else:
        est = PODReducer(n_reduced=nr, train_t_end=tend, train_samples=201, rtol=rtol, atol=atol)
        est.fit(shifted)
        diag = [("snapshot_sigma", i + 1, s) for i, s in enumerate(est.singular_values_)]
        metadata = {"method": "pod", "alpha": None, "N": None, "tau": tau, "nr": nr,
                    "train_t_end": tend}
    return est.model_, metadata, diag


def _scenario(params, model_m, perturb_x0, perturb_u):
    """Initial state and inputs for a (possibly perturbed) comparison run."""
    n_o = params.n_o
    delta0 = np.zeros(n_o)
    if perturb_x0 is not None:
        idx, val = perturb_x0
        if not 1 <= idx <= n_o:
            raise ValidationError(f"--perturb-x0 index {idx} out of range 1..{n_o}")
        delta0[idx - 1] = val
    u_full = np.ones(1)
    u_red = np.ones(model_m)
    if perturb_u is not None:
        idx, factor = perturb_u
        if idx != 1:
            raise ValidationError(
                f"--perturb-u index {idx} invalid: the model has one physical input"
            )
        u_full[0] *= factor
        u_red[0] *= factor
    return lift_state(delta0, np.zeros(n_o)).x, u_full, u_red


def _compare_run(params, model: ReducedQuadraticModel, tend, rtol, atol,
                 perturb_x0, perturb_u, output_grid: int = 201):
    """Simulate the full lifted and the reduced model on one scenario."""
    x0, u_full, u_red = _scenario(params, model.m, perturb_x0, perturb_u)
    sysq = build_quadratic(params)
    full = simulate_quadratic(sysq, x0=x0, u=u_full, t_span=(0.0, tend),
                              rtol=rtol, atol=atol, output_grid=output_grid)
    red = simulate_reduced(model, u=u_red, x0_full=x0, t_span=(0.0, tend),
                           rtol=rtol, atol=atol, output_grid=output_grid)
    return compare(full, red), full, red


def _fmt(value):
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _metrics_row(metadata, report, failed):
    return {
        "method": metadata.get("method", ""),
        "alpha": _fmt(metadata.get("alpha")),
        "N": _fmt(metadata.get("N")),
        "nr": _fmt(metadata.get("nr")),
        "l2_output_error": "" if report is None else _fmt(report.l2_output_error),
        "pti_l2": "" if report is None else _fmt(report.pti_l2),
        "max_abs_output_error": "" if report is None else _fmt(report.max_abs_output_error),
        "failed": "1" if failed else "0",
    }


def _write_rows(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


# -- subcommands --------------------------------------------------------


def cmd_gen(args) -> int:
    params = synth_grid(args.n, seed=args.seed, connectivity=args.connectivity)
    save_parameters(params, args.out)
    print(f"wrote {args.out} ({params.n_o} oscillators)")
    return EXIT_OK


def cmd_reduce(args) -> int:
    if args.method == "bt" and args.nr % 4 != 0:
        raise ValidationError(f"--nr {args.nr} must be divisible by 4 for method bt")
    if args.N < 1 or args.N % 2 == 0:
        raise ValidationError(f"--N must be odd and >= 1, got {args.N}")
    params = load_parameters(args.params)
    model, metadata, diag = _build_reduced(
        params, args.method, args.nr, args.alpha, args.N, args.tau,
        args.tend, args.rtol, args.atol,
    )
    save_reduced_model(model, args.out, metadata=metadata)
    diag_path = args.diag if args.diag else f"{args.out}.diag.csv"
    with open(diag_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record", "index", "value"])
        for record, index, value in diag:
            writer.writerow([record, index, _fmt(value) if isinstance(value, float) else value])
    print(f"wrote {args.out} (method={args.method}, n_r={model.n_r}) and {diag_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    params = load_parameters(args.params)
    model, metadata = load_reduced_model(args.model)
    report = None
    failed = False
    try:
        report, full, red = _compare_run(
            params, model, args.tend, args.rtol, args.atol,
            args.perturb_x0, args.perturb_u,
        )
        write_trajectory_csv(full, f"{args.out}_full.csv")
        write_trajectory_csv(red, f"{args.out}_reduced.csv")
    except SimulationFailure as exc:
        failed = True
        print(f"simulation failed: {exc}", file=sys.stderr)
    _write_rows(f"{args.out}_metrics.csv", [_metrics_row(metadata, report, failed)])
    if report is not None:
        print(
            f"l2_output_error={report.l2_output_error:.6e} "
            f"pti_l2={report.pti_l2:.6e} "
            f"max_abs_output_error={report.max_abs_output_error:.6e}"
        )
    return EXIT_OK


def _sweep_task(task):
    (params_path, method, alpha, N, nr, tau, tend, rtol, atol, perturb_x0, perturb_u) = task
    metadata = {"method": method, "alpha": alpha, "N": N, "nr": nr}
    try:
        params = load_parameters(params_path)
        # the row echoes the swept grid values, not the per-method metadata
        model, _, _ = _build_reduced(params, method, nr, alpha, N, tau, tend, rtol, atol)
        report, _, _ = _compare_run(params, model, tend, rtol, atol, perturb_x0, perturb_u)
        return _metrics_row(metadata, report, failed=False)
    except (GridmorError, np.linalg.LinAlgError) as exc:
        logging.getLogger(__name__).warning(
            "sweep run failed (method=%s alpha=%g N=%d nr=%d): %s", method, alpha, N, nr, exc
        )
        return _metrics_row(metadata, None, failed=True)


def cmd_sweep(args) -> int:
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    for m in methods:
        if m not in ("bt", "pod"):
            raise ValidationError(f"--method entries must be bt or pod, got {m!r}")
    for N in args.N:
        if N < 1 or N % 2 == 0:
            raise ValidationError(f"--N entries must be odd and >= 1, got {N}")
    if "bt" in methods:
        for nr in args.nr:
            if nr % 4 != 0:
                raise ValidationError(f"--nr {nr} must be divisible by 4 for method bt")
    load_parameters(args.params)  # fail fast on a bad file before spawning workers
    tasks = [
        (args.params, method, alpha, N, nr, args.tau, args.tend, args.rtol, args.atol,
         args.perturb_x0, args.perturb_u)
        for method in methods
        for alpha in args.alpha
        for N in args.N
        for nr in args.nr
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    _write_rows(args.out, rows)
    n_failed = sum(1 for r in rows if r["failed"] == "1")
    print(f"wrote {args.out}: {len(rows)} runs, {n_failed} failed")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "reduce": cmd_reduce, "compare": cmd_compare, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GridmorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

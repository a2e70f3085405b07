"""Command-line interface.

Subcommands:
  theory-sweep   closed-form bound curve over subset sizes -> CSV (+PNG)
  mc-sweep       bound curve plus Monte Carlo estimates -> CSV (+PNG)
  score          fit ID statistics on a train table, score an eval table
  auc            separability of two score files -> JSON
  nc1            within/between-class collapse ratio of a table -> JSON
  spectrum       explained-variance spectrum of a table -> JSON (+PNG)

Exit codes: 0 success, 2 usage error, 3 unreadable or invalid data.
Every file-producing run writes a JSON manifest next to its primary
output recording the full parameter set, seed, and tool version, so a
run can be reproduced bit for bit.  DDLAB_THREADS caps worker threads
for Monte Carlo trials (0 = auto); results do not depend on it.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .gauss_model import Activation, OodInputConfig, prefix_teacher
from .ingest import FormatError, IngestError, read_any
from .metrics import auc as compute_auc
from .metrics import explained_variance_spectrum, nc1 as compute_nc1
from .ood_scores import METHODS, applicable_methods, compute_score, fit_id_stats
from .report import risk_curve_figure, save_figure, spectrum_figure, theory_curve_figure
from .risk_mc import (
    McConfig,
    RiskCurve,
    dd_sweep,
    peak_subset_size,
    prefix_schedule,
    resolve_sweep_spectra,
)
from .risk_theory import BoundConvention, TheoryCurve, theory_sweep

_CONVENTIONS = {c.value: c for c in BoundConvention}
_ACTIVATIONS = {a.value: a for a in Activation}


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _prepare_out(out: str) -> Path:
    path = Path(out)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(
    out: Path,
    command: str,
    params: dict,
    outputs: list[str],
    started: float,
    summary: dict | None = None,
) -> None:
    manifest = {
        "tool": "ddlab",
        "version": __version__,
        "command": command,
        "params": params,
        "outputs": outputs,
        "duration_seconds": round(time.perf_counter() - started, 3),
    }
    if summary is not None:
        manifest["summary"] = summary
    out.with_suffix(".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _write_theory_csv(curve: TheoryCurve, path: Path, convention: BoundConvention) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# schema ddlab.theory-sweep v1\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "c", "risk_lo", "risk_hi", "ood_lo", "ood_hi", "convention"])
        for r in curve.records:
            ood_lo, ood_hi = r.ood_ends(convention)
            writer.writerow(
                [r.p, _fmt(r.c), _fmt(r.risk.lo), _fmt(r.risk.hi),
                 _fmt(ood_lo), _fmt(ood_hi), convention.value]
            )


def _write_mc_csv(curve: RiskCurve, path: Path, convention: BoundConvention) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# schema ddlab.mc-sweep v1\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["p", "c", "risk_lo", "risk_hi", "ood_lo", "ood_hi", "convention",
             "mc_risk", "mc_risk_se", "mc_ood", "mc_ood_se",
             "mc_weight_err", "mc_weight_err_se"]
        )
        for r in curve.records:
            t = r.theory
            ood_lo, ood_hi = t.ood_ends(convention)
            writer.writerow(
                [r.p, _fmt(t.c), _fmt(t.risk.lo), _fmt(t.risk.hi),
                 _fmt(ood_lo), _fmt(ood_hi), convention.value,
                 _fmt(r.mc_risk.mean), _fmt(r.mc_risk.std_error),
                 _fmt(r.mc_ood.mean), _fmt(r.mc_ood.std_error),
                 _fmt(r.mc_weight_err.mean), _fmt(r.mc_weight_err.std_error)]
            )


def _add_sweep_args(sub: argparse.ArgumentParser, with_mc: bool) -> None:
    sub.add_argument("--d", type=int, default=60, help="input dimension (default 60)")
    sub.add_argument("--n", type=int, default=30, help="training samples (default 30)")
    sub.add_argument("--sigma", type=float, default=0.5, help="train noise level (default 0.5)")
    sub.add_argument("--sigma-prime", type=float, default=0.1,
                     help="shifted-task noise level (default 0.1)")
    sub.add_argument("--ood-scale", type=float, default=2.0,
                     help="shifted input scale (default 2)")
    sub.add_argument("--signal-dims", type=int, default=20,
                     help="leading coordinates carrying the signal (default 20)")
    sub.add_argument("--signal-norm", type=float, default=1.0,
                     help="teacher norm ||w*|| (default 1)")
    sub.add_argument("--phi", choices=sorted(_ACTIVATIONS), default="identity",
                     help="activation (default identity)")
    sub.add_argument("--p-min", type=int, default=2, help="smallest subset size (default 2)")
    sub.add_argument("--p-max", type=int, default=None,
                     help="largest subset size (default d)")
    sub.add_argument("--convention", choices=sorted(_CONVENTIONS), default="proof",
                     help="shifted-task bound convention (default proof)")
    sub.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    sub.add_argument("--out", required=True, help="output CSV path")
    sub.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    if with_mc:
        sub.add_argument("--trials", type=int, default=500,
                         help="Monte Carlo trials per subset size (default 500)")
        sub.add_argument("--test-points", type=int, default=2000,
                         help="test draws per trial and input law (default 2000)")


def _sweep_setup(args, parser):
    p_max = args.p_max if args.p_max is not None else args.d
    if not 1 <= args.p_min <= p_max <= args.d:
        parser.error(f"invalid p range [{args.p_min}, {p_max}] for d={args.d}")
    try:
        teacher = prefix_teacher(
            args.d, args.signal_dims, args.signal_norm, args.sigma, args.sigma_prime,
            _ACTIVATIONS[args.phi],
        )
        subsets = prefix_schedule(args.d, args.p_min, p_max)
        ood_cfg = OodInputConfig(scale=args.ood_scale)
    except ValueError as exc:
        parser.error(str(exc))
    return teacher, subsets, ood_cfg, p_max


def _sweep_params(args, p_max: int) -> dict:
    return {
        "d": args.d, "n": args.n, "sigma": args.sigma, "sigma_prime": args.sigma_prime,
        "ood_scale": args.ood_scale, "signal_dims": args.signal_dims,
        "signal_norm": args.signal_norm, "phi": args.phi,
        "p_min": args.p_min, "p_max": p_max,
        "convention": args.convention, "base_seed": args.seed,
    }


def cmd_theory_sweep(args, parser) -> int:
    started = time.perf_counter()
    teacher, subsets, ood_cfg, p_max = _sweep_setup(args, parser)
    if args.n < 1:
        parser.error(f"n must be >= 1, got {args.n}")
    convention = _CONVENTIONS[args.convention]
    spectra = resolve_sweep_spectra(teacher, ood_cfg, args.seed)
    curve = theory_sweep(teacher, subsets, args.n, spectra)
    out = _prepare_out(args.out)
    _write_theory_csv(curve, out, convention)
    outputs = [str(out)]
    if not args.no_plot:
        png = out.with_suffix(".png")
        save_figure(theory_curve_figure(curve, convention), png)
        outputs.append(str(png))
    _write_manifest(out, "theory-sweep", _sweep_params(args, p_max), outputs, started)
    return 0


def cmd_mc_sweep(args, parser) -> int:
    started = time.perf_counter()
    teacher, subsets, ood_cfg, p_max = _sweep_setup(args, parser)
    if args.n < 1:
        parser.error(f"n must be >= 1, got {args.n}")
    try:
        cfg = McConfig(trials=args.trials, test_points=args.test_points, base_seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))
    convention = _CONVENTIONS[args.convention]
    curve = dd_sweep(teacher, args.n, subsets, ood_cfg, cfg)
    out = _prepare_out(args.out)
    _write_mc_csv(curve, out, convention)
    outputs = [str(out)]
    if not args.no_plot:
        png = out.with_suffix(".png")
        save_figure(risk_curve_figure(curve, convention), png)
        outputs.append(str(png))
    params = _sweep_params(args, p_max)
    params.update({"trials": args.trials, "test_points": args.test_points})
    summary = {
        "peak_p_risk": peak_subset_size(curve, "risk"),
        "peak_p_ood": peak_subset_size(curve, "ood"),
    }
    _write_manifest(out, "mc-sweep", params, outputs, started, summary)
    return 0


def cmd_score(args, parser) -> int:
    started = time.perf_counter()
    requested = [m.strip() for m in args.method.split(",") if m.strip()]
    if not requested:
        parser.error("--method must name at least one method")
    for m in requested:
        if m != "all" and m not in METHODS:
            parser.error(f"unknown method {m!r}; choose from {', '.join(METHODS)} or all")
    if args.temperature <= 0:
        parser.error(f"--temperature must be > 0, got {args.temperature}")
    train_outputs, head = read_any(args.train)
    eval_outputs, eval_head = read_any(args.eval)
    head = head or eval_head
    stats = fit_id_stats(train_outputs, head)
    if requested == ["all"]:
        methods = applicable_methods(eval_outputs, stats, head)
    else:
        methods = list(dict.fromkeys(requested))
    columns = {}
    for method in methods:
        vec = compute_score(
            method, eval_outputs, stats, head,
            temperature=args.temperature, ash_percentile=args.ash_percentile,
        )
        columns[method] = vec.scores
    out = _prepare_out(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        fh.write("# schema ddlab.scores v1\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(columns))
        for i in range(eval_outputs.n):
            writer.writerow([_fmt(columns[m][i]) for m in columns])
    params = {
        "train": str(args.train), "eval": str(args.eval), "methods": methods,
        "temperature": args.temperature, "ash_percentile": args.ash_percentile,
    }
    _write_manifest(out, "score", params, [str(out)], started)
    return 0


def _read_scores(path: str, method: str | None) -> np.ndarray:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        if method is None:
            if len(header) != 1:
                raise FormatError(
                    f"{path}: has columns {header}; pick one with --method"
                )
            col = 0
        else:
            if method not in header:
                raise FormatError(f"{path}: no column {method!r} in {header}")
            col = header.index(method)
        try:
            values = [float(row[col]) for row in reader]
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: {exc}") from None
    if not values:
        raise FormatError(f"{path}: no score rows")
    return np.asarray(values)


def _emit_json(payload: dict, out: str | None, command: str, params: dict, started: float) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        path = _prepare_out(out)
        path.write_text(text + "\n")
        _write_manifest(path, command, params, [str(path)], started)
    print(text)


def cmd_auc(args, parser) -> int:
    started = time.perf_counter()
    id_scores = _read_scores(args.id, args.method)
    ood_scores = _read_scores(args.ood, args.method)
    result = compute_auc(id_scores, ood_scores)
    payload = {"auc": result.auc, "n_id": result.n_id, "n_ood": result.n_ood}
    params = {"id": args.id, "ood": args.ood, "method": args.method}
    _emit_json(payload, args.out, "auc", params, started)
    return 0


def cmd_nc1(args, parser) -> int:
    started = time.perf_counter()
    outputs, _ = read_any(args.table)
    if outputs.labels is None:
        raise FormatError(f"{args.table}: table has no labels block")
    result = compute_nc1(outputs.features, outputs.labels)
    payload = {"nc1": result.nc1, "per_class_counts": list(result.per_class_counts)}
    _emit_json(payload, args.out, "nc1", {"table": str(args.table)}, started)
    return 0


def cmd_spectrum(args, parser) -> int:
    started = time.perf_counter()
    if args.classes < 1:
        parser.error(f"--classes must be >= 1, got {args.classes}")
    outputs, _ = read_any(args.table)
    report = explained_variance_spectrum(outputs.features, args.classes)
    payload = {
        "eigenvalues": list(report.eigenvalues),
        "explained_fraction": list(report.explained_fraction),
        "marker_index": report.marker_index,
    }
    params = {"table": str(args.table), "classes": args.classes}
    if args.out and not args.no_plot:
        png = _prepare_out(args.out).with_suffix(".png")
        save_figure(spectrum_figure(report), png)
    _emit_json(payload, args.out, "spectrum", params, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddlab",
        description="Double-descent risk curves and post-hoc OOD scoring.",
    )
    parser.add_argument("--version", action="version", version=f"ddlab {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("theory-sweep", help="closed-form bound curve to CSV")
    _add_sweep_args(sub, with_mc=False)
    sub.set_defaults(func=cmd_theory_sweep)

    sub = subs.add_parser("mc-sweep", help="bound curve plus Monte Carlo estimates")
    _add_sweep_args(sub, with_mc=True)
    sub.set_defaults(func=cmd_mc_sweep)

    sub = subs.add_parser("score", help="score an eval table against a train table")
    sub.add_argument("--train", required=True, help="training table (.ddft or .csv)")
    sub.add_argument("--eval", required=True, help="evaluation table (.ddft or .csv)")
    sub.add_argument("--method", default="all",
                     help="comma-separated methods or 'all' (default all)")
    sub.add_argument("--temperature", type=float, default=1.0,
                     help="energy temperature (default 1)")
    sub.add_argument("--ash-percentile", type=float, default=90.0,
                     help="per-sample pruning percentile (default 90)")
    sub.add_argument("--out", required=True, help="output scores CSV")
    sub.set_defaults(func=cmd_score)

    sub = subs.add_parser("auc", help="separability of ID vs OOD score files")
    sub.add_argument("--id", required=True, help="scores CSV for in-distribution data")
    sub.add_argument("--ood", required=True, help="scores CSV for shifted data")
    sub.add_argument("--method", default=None, help="score column to compare")
    sub.add_argument("--out", default=None, help="optional JSON output path")
    sub.set_defaults(func=cmd_auc)

    sub = subs.add_parser("nc1", help="collapse ratio of a labeled table")
    sub.add_argument("--table", required=True, help="table with labels (.ddft or .csv)")
    sub.add_argument("--out", default=None, help="optional JSON output path")
    sub.set_defaults(func=cmd_nc1)

    sub = subs.add_parser("spectrum", help="explained-variance spectrum of a table")
    sub.add_argument("--table", required=True, help="feature table (.ddft or .csv)")
    sub.add_argument("--classes", type=int, required=True, help="class count marker")
    sub.add_argument("--out", default=None, help="optional JSON output path")
    sub.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    sub.set_defaults(func=cmd_spectrum)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

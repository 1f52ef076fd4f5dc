"""Command-line entry points: run experiments, fit codebooks, inspect bounds.

Subcommands:
  run <config.json>          run every arm; write JSONL logs + summary CSV
  fit-quantizer <samples>    fit a codebook to a text file of values
  zeta <edge-list>           spectral mixing value of a custom topology
  bounds <config.json>       print every calculator output for the config
  compare <dir>              rebuild the summary from existing JSONL logs
"""

import argparse
import csv
import glob
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import analysis
from .config import materialize, parse_config
from .engine import MetricsLog, run_simulation
from .errors import ConfigError, DivergenceError
from .quantizers import fit_lloyd_max
from .topology import build_mixing, load_edge_list, validate_doubly_stochastic

__all__ = ["main"]


def _atomic_write(path, text):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _log_to_text(log):
    lines = [json.dumps(record) for record in log.records]
    if log.final:
        lines.append(json.dumps({"final": log.final}))
    return "\n".join(lines) + "\n"


def _csv_rows(arm, log):
    rows = []
    for record in log.records:
        rows.append({
            "arm": arm,
            "round": record["round"],
            "eta": record["eta"],
            "global_loss": record["global_loss"],
            "mean_distortion": record["mean_distortion"],
            "s_mean": float(np.mean(record["s"])),
            "bits_total": record["bits_total"],
            "bits_per_edge_max": max(record["bits_per_edge"].values()) if record["bits_per_edge"] else 0,
        })
    return rows


def bits_to_target(log, target):
    """Cumulative bits spent before the loss first reached the target.

    The loss logged at round k was bought with k-1 rounds of
    communication; the final loss uses all of them.
    """
    prev_bits = 0
    for record in log.records:
        if record["global_loss"] <= target:
            return prev_bits, record["round"] - 1
        prev_bits = record["bits_total"]
    if log.final and log.final.get("global_loss", float("inf")) <= target:
        return log.final["bits_total"], len(log.records)
    return None, None


def _summary(results, target_loss=None):
    finals = {arm: log.final.get("global_loss") for arm, log in results.items() if log is not None}
    if target_loss is None and finals:
        target_loss = 1.1 * min(finals.values())
    lines = [f"target loss: {target_loss:.6g}" if target_loss is not None else "target loss: n/a"]
    header = f"{'arm':<16}{'final_loss':>12}{'rounds':>8}{'bits_total':>14}{'bits_to_target':>16}"
    lines.append(header)
    for arm, log in results.items():
        if log is None:
            lines.append(f"{arm:<16}{'diverged':>12}")
            continue
        bits, rounds = bits_to_target(log, target_loss)
        lines.append(
            f"{arm:<16}{finals[arm]:>12.6f}{len(log.records):>8}"
            f"{log.final['bits_total']:>14}{bits if bits is not None else '-':>16}"
        )
    return "\n".join(lines), target_loss


def cmd_run(args):
    try:
        spec = parse_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    out_dir = args.output_dir or spec.output_dir
    plans = materialize(spec)
    results = {}
    failed = False
    for arm, plan in plans:
        try:
            log = run_simulation(plan)
        except DivergenceError as err:
            print(f"arm {arm} diverged: {err}", file=sys.stderr)
            results[arm] = None
            failed = True
            continue
        results[arm] = log
        _atomic_write(os.path.join(out_dir, f"{arm}.jsonl"), _log_to_text(log))
    _write_csv_and_summary(results, out_dir, args.target_loss)
    return 1 if failed else 0


def _write_csv_and_summary(results, out_dir, target_loss):
    rows = []
    for arm, log in results.items():
        if log is not None:
            rows.extend(_csv_rows(arm, log))
    if rows:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        _atomic_write(os.path.join(out_dir, "summary.csv"), buf.getvalue())
    text, _ = _summary(results, target_loss)
    print(text)


def cmd_fit_quantizer(args):
    samples = np.loadtxt(args.samples, ndmin=1)
    table = fit_lloyd_max(samples, args.levels, tol=args.tol, max_iter=args.max_iter)
    print(json.dumps({
        "levels": table.levels.tolist(),
        "boundaries": table.boundaries.tolist(),
        "distortion": float(table.fit_distortion_history[-1]),
        "iterations": int(len(table.fit_distortion_history)),
        "converged": bool(table.fit_converged),
    }, indent=2))
    return 0


def cmd_zeta(args):
    adjacency = load_edge_list(args.edge_list)
    mixing = build_mixing("custom", adjacency.shape[0], adjacency=adjacency)
    report = validate_doubly_stochastic(mixing.entries)
    print(json.dumps({
        "n": mixing.n,
        "zeta": mixing.zeta,
        "connected": mixing.connected,
        "doubly_stochastic": report.ok,
    }, indent=2))
    return 0


def cmd_bounds(args):
    try:
        spec = parse_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if spec.analysis is None:
        print("config error: bounds needs an 'analysis' section with L, sigma2, delta2, f_gap",
              file=sys.stderr)
        return 2
    a = spec.analysis
    for key in ("L", "sigma2", "delta2", "f_gap"):
        if key not in a:
            print(f"config error: analysis.{key} is required", file=sys.stderr)
            return 2
    plans = materialize(spec)
    _, plan = plans[0]
    zeta = plan.mixing.zeta
    d = plan.model.d
    s = plan.quantizer.s
    omega = d / (12.0 * s * s)
    eta = plan.eta
    out = {
        "d": d, "s": s, "zeta": zeta, "omega": omega,
        "consensus_penalty": analysis.consensus_penalty(zeta) if zeta < 1 else None,
    }
    if zeta < 1:
        out["lr_stability_cap"] = analysis.lr_stability_cap(
            L=a["L"], tau=spec.tau, n_nodes=spec.nodes, omega=omega, zeta=zeta)
        out["gradient_norm_bound"] = analysis.gradient_norm_bound(
            f_gap=a["f_gap"], eta=eta, rounds=spec.rounds, tau=spec.tau, L=a["L"],
            sigma2=a["sigma2"], delta2=a["delta2"], n_nodes=spec.nodes, omega=omega,
            zeta=zeta, warn=False)
        out["tuned_gradient_norm_bound"] = analysis.tuned_gradient_norm_bound(
            f_gap=a["f_gap"], L=a["L"], tau=spec.tau, sigma2=a["sigma2"], d=d, s=s,
            n_nodes=spec.nodes, zeta=zeta, rounds=spec.rounds)
        if "budget_bits" in a:
            bound = analysis.bit_budget_bound(
                f_gap=a["f_gap"], d=d, eta=eta, tau=spec.tau, budget_bits=a["budget_bits"],
                L=a["L"], sigma2=a["sigma2"], delta2=a["delta2"], n_nodes=spec.nodes, zeta=zeta)
            out["bit_budget_bound"] = {
                "log_coeff": bound.log_coeff,
                "quantization_coeff": bound.quantization_coeff,
                "constant": bound.constant,
                "at_s": bound(s),
            }
            out["optimal_level_count"] = analysis.optimal_level_count(
                L=a["L"], eta=eta, tau=spec.tau, sigma2=a["sigma2"],
                budget_bits=a["budget_bits"], n_nodes=spec.nodes, f_gap=a["f_gap"])
        if "interval_bits" in a:
            out["optimal_level_schedule_at_f_gap"] = analysis.optimal_level_schedule(
                L=a["L"], eta=eta, tau=spec.tau, sigma2=a["sigma2"],
                interval_bits=a["interval_bits"], n_nodes=spec.nodes, f_current=a["f_gap"])
    print(json.dumps(out, indent=2))
    return 0


def cmd_compare(args):
    paths = sorted(glob.glob(os.path.join(args.directory, "*.jsonl")))
    if not paths:
        print(f"no .jsonl logs found in {args.directory}", file=sys.stderr)
        return 2
    results = {}
    for path in paths:
        arm = os.path.splitext(os.path.basename(path))[0]
        results[arm] = MetricsLog.from_jsonl(path)
    _write_csv_and_summary(results, args.directory, args.target_loss)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="gossipquant",
                                     description="quantized decentralized SGD simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every arm of an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--target-loss", type=float, default=None)
    p_run.set_defaults(fn=cmd_run)

    p_fit = sub.add_parser("fit-quantizer", help="fit a codebook to samples in a text file")
    p_fit.add_argument("samples")
    p_fit.add_argument("--levels", "-s", "--s", type=int, required=True)
    p_fit.add_argument("--tol", type=float, default=1e-6)
    p_fit.add_argument("--max-iter", type=int, default=100)
    p_fit.set_defaults(fn=cmd_fit_quantizer)

    p_zeta = sub.add_parser("zeta", help="spectral mixing value of an edge-list topology")
    p_zeta.add_argument("edge_list")
    p_zeta.set_defaults(fn=cmd_zeta)

    p_bounds = sub.add_parser("bounds", help="print convergence calculator outputs")
    p_bounds.add_argument("config")
    p_bounds.set_defaults(fn=cmd_bounds)

    p_cmp = sub.add_parser("compare", help="summarize existing JSONL logs")
    p_cmp.add_argument("directory")
    p_cmp.add_argument("--target-loss", type=float, default=None)
    p_cmp.set_defaults(fn=cmd_compare)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner for the experiment families.

Subcommands mirror the study designs: head-to-head fixed budgets, saturation
over many rounds, the stopping-threshold sweep, the regime map over dataset
grids, the heterogeneity variance sweep, critical cost-ratio curves, and
fixed-budget runs on a kernel loaded from disk. Results land in CSV (RFC 4180,
written by the csv module) or JSON lines; floats are serialized with 17
significant digits so reruns are byte-comparable. Exit codes: 0 on success,
1 on a runtime failure (partial rows are already flushed), 2 on bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Iterable

import numpy as np

from . import experiments
from .datasets import load_kernel_file
from .experiments import (
    COST_COLUMNS,
    REGIME_COLUMNS,
    STAGE_COLUMNS,
    SWEEP_COLUMNS,
    VARIANCE_COLUMNS,
    TrialTask,
    map_trials,
)

_EPSILON_DEFAULT = "0.01,0.0215,0.0464,0.1,0.215,0.464,1.0"
_T_GRID_DEFAULT = "0,0.125,0.25,0.375,0.5,0.625,0.75,0.875,1.0"


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join("%.17g" % float(v) for v in value) + "]"
    return str(value)


def _jsonl_value(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join("%.17g" % float(v) for v in value) + "]"
    return json.dumps(value)


class ResultWriter:
    """Serializes result rows with a fixed column order and flushes eagerly."""

    def __init__(self, path: str, fmt: str, columns: list[str]):
        self.columns = columns
        self.fmt = fmt
        self._file = open(path, "w", newline="")
        if fmt == "csv":
            import csv

            self._csv = csv.writer(self._file)
            self._csv.writerow(columns)
        self._file.flush()

    def write_rows(self, rows: Iterable[dict]) -> None:
        for row in rows:
            if self.fmt == "csv":
                self._csv.writerow([_format_value(row.get(c)) for c in self.columns])
            else:
                body = ",".join(
                    f"{json.dumps(c)}:{_jsonl_value(row.get(c))}" for c in self.columns)
                self._file.write("{" + body + "}\n")
        self._file.flush()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self._file.close()
        return False


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return value


def _even_points(text: str) -> int:
    value = int(text)
    if value < 4 or value % 2:
        raise argparse.ArgumentTypeError(f"expected an even count >= 4, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive value, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative value, got {value}")
    return value


def _unit_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {value}")
    return value


def _label_noise_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 0.5:
        raise argparse.ArgumentTypeError(f"expected a flip probability in [0, 0.5], got {value}")
    return value


def _float_list(text: str) -> list[float]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    return [float(part) for part in items]


def _config_list(text: str) -> list[tuple[float, int]]:
    configs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            r_text, rounds_text = part.split(":")
            r, rounds = float(r_text), int(rounds_text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad configuration {part!r}, expected r:R") from exc
        if not 0.0 <= r <= 1.0:
            raise argparse.ArgumentTypeError(f"shot fraction {r} outside [0, 1]")
        if rounds < 1:
            raise argparse.ArgumentTypeError("rounds must be at least 1 in every configuration")
        configs.append((r, rounds))
    if not configs:
        raise argparse.ArgumentTypeError("expected at least one r:R configuration")
    return configs


def _int_range(text: str) -> range:
    try:
        lo_text, hi_text = text.split(":")
        lo, hi = int(lo_text), int(hi_text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad range {text!r}, expected lo:hi") from exc
    if lo < 2 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad range {text!r}: need 2 <= lo <= hi")
    return range(lo, hi + 1)


def _add_run_flags(sub: argparse.ArgumentParser, trials_default: int = 200) -> None:
    sub.add_argument("--trials", type=_positive_int, default=trials_default,
                     help=f"number of trials (default {trials_default})")
    sub.add_argument("--nbar", type=_positive_int, default=50,
                     help="shots per entry; the total budget is nbar*n*(n-1)/2 (default 50)")
    sub.add_argument("--rounds", type=_nonneg_int, default=5,
                     help="adaptive rounds after the pilot (default 5)")
    sub.add_argument("--m0", type=_positive_int, default=2,
                     help="pilot shots per entry (default 2)")
    sub.add_argument("--lambda", dest="lam", type=_unit_float, default=0.5,
                     help="exploration weight in the allocation scores (default 0.5)")
    sub.add_argument("--c", type=_positive_float, default=1.0,
                     help="SVM box bound (default 1.0)")
    sub.add_argument("--sigma-phys", type=_nonneg_float, default=0.0,
                     help="persistent per-entry offset scale (default 0)")


def _add_blob_flags(sub: argparse.ArgumentParser, cell_grid: bool = False) -> None:
    if cell_grid:
        sub.add_argument("--separations", type=_float_list, default=[1.0, 2.33, 3.67, 5.0],
                         help="comma list of cluster separations (grid axis)")
        sub.add_argument("--noise-scales", type=_float_list, default=[0.35, 0.6, 0.85, 1.1],
                         help="comma list of cluster spreads (grid axis)")
    else:
        sub.add_argument("--separation", type=_nonneg_float, default=3.0,
                         help="distance between cluster centers (default 3.0)")
        sub.add_argument("--noise-scale", type=_positive_float, default=0.5,
                         help="cluster standard deviation (default 0.5)")
    sub.add_argument("--anisotropy", type=_positive_float, default=1.0,
                     help="stretch factor along the separating axis (default 1.0)")
    sub.add_argument("--label-noise", type=_label_noise_float, default=0.0,
                     help="label flip probability (default 0)")
    sub.add_argument("--dims", type=_positive_int, default=2,
                     help="point dimension (default 2)")


def _add_io_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    sub.add_argument("--threads", type=_positive_int, default=1,
                     help="worker processes; never changes the numbers (default 1)")
    sub.add_argument("--out", required=True, help="output file path")
    sub.add_argument("--format", choices=["csv", "jsonl"], default="csv",
                     help="output format (default csv)")


def _blob_task(args, experiment: str, trial: int, epsilon: float = 0.0,
               **overrides) -> TrialTask:
    fields = dict(
        experiment=experiment, trial=trial, seed=args.seed, n=args.n, nbar=args.nbar,
        rounds=args.rounds, m0=args.m0, lam=args.lam, epsilon=epsilon, c=args.c,
        sigma_phys=args.sigma_phys, separation=getattr(args, "separation", 3.0),
        noise_scale=getattr(args, "noise_scale", 0.5), anisotropy=args.anisotropy,
        label_noise=args.label_noise, dims=args.dims)
    fields.update(overrides)
    return TrialTask(**fields)


def _check_budget(parser: argparse.ArgumentParser, args) -> None:
    if args.nbar < args.m0:
        parser.error(f"--nbar {args.nbar} cannot cover the pilot of --m0 {args.m0} shots per entry")


def _median(values) -> float:
    return float(np.median(values))


def cmd_fixed_budget(args) -> int:
    tasks = [_blob_task(args, "fixed-budget", trial) for trial in range(args.trials)]
    finals: dict[str, list[dict]] = {"uniform": [], "adaptive": []}
    with ResultWriter(args.out, args.format, STAGE_COLUMNS) as writer:
        for _, rows in map_trials(experiments.run_stage_trial, tasks, args.threads):
            writer.write_rows(rows)
            for row in rows:
                if row["round"] == row["rounds_executed"]:
                    finals[row["strategy"]].append(row)
    print(f"fixed-budget: {args.trials} trials, n={args.n}, nbar={args.nbar}, "
          f"rounds={args.rounds}, lambda={args.lam}")
    for name in ("rmse_k", "rmse_k_sv", "jaccard", "weighted_jaccard",
                 "rel_margin_err", "decision_rmse"):
        uniform = _median([row[name] for row in finals["uniform"]])
        adaptive = _median([row[name] for row in finals["adaptive"]])
        print(f"  median {name:17s} uniform={uniform:.6g}  adaptive={adaptive:.6g}")
    gains = [1.0 - a["decision_rmse"] / u["decision_rmse"]
             for u, a in zip(finals["uniform"], finals["adaptive"])]
    print(f"  uniform baseline median decision_rmse: "
          f"{_median([row['decision_rmse'] for row in finals['uniform']]):.6g}")
    print(f"  success rate (delta_rmse > 0): {float(np.mean([g > 0 for g in gains])):.3f}")
    return 0


def cmd_saturation(args) -> int:
    tasks = [_blob_task(args, "saturation", trial, include_uniform=False)
             for trial in range(args.trials)]
    by_round: dict[int, list[float]] = {}
    with ResultWriter(args.out, args.format, STAGE_COLUMNS) as writer:
        for _, rows in map_trials(experiments.run_stage_trial, tasks, args.threads):
            writer.write_rows(rows)
            for row in rows:
                by_round.setdefault(row["round"], []).append(row["decision_rmse"])
    pilot = _median(by_round[0])
    final = _median(by_round[max(by_round)])
    print(f"saturation: {args.trials} trials, rounds={args.rounds}, n={args.n}, nbar={args.nbar}")
    print(f"  median decision_rmse pilot={pilot:.6g} final={final:.6g} "
          f"final<=pilot: {'true' if final <= pilot else 'false'}")
    return 0


def cmd_stopping_sweep(args) -> int:
    tasks = [_blob_task(args, "stopping-sweep", trial) for trial in range(args.trials)]
    results = list(map_trials(experiments.run_sweep_trial, tasks, args.threads))
    rows = experiments.sweep_summary_rows(args.epsilons, tasks[0], results)
    with ResultWriter(args.out, args.format, SWEEP_COLUMNS) as writer:
        writer.write_rows(rows)
    print(f"stopping-sweep: {args.trials} trials, rounds={args.rounds}, n={args.n}, "
          f"nbar={args.nbar}, {len(rows)} thresholds")
    for row in rows:
        print(f"  epsilon={row['epsilon']:<8.4g} median_shot_fraction={row['median_shot_fraction']:.3f} "
              f"median_delta_rmse={row['median_delta_rmse']:+.4f} "
              f"success_rate={row['success_rate']:.2f} median_rounds={row['median_rounds']:.1f}")
    return 0


def cmd_regime_map(args) -> int:
    cells = [(sep, noise) for sep in args.separations for noise in args.noise_scales]
    print(f"regime-map: {len(cells)} cells x {args.trials} trials, n={args.n}, nbar={args.nbar}")
    with ResultWriter(args.out, args.format, REGIME_COLUMNS) as writer:
        for sep, noise in cells:
            tasks = [_blob_task(args, "regime-map", trial, epsilon=args.epsilon,
                                separation=sep, noise_scale=noise)
                     for trial in range(args.trials)]
            results = list(map_trials(experiments.run_regime_trial, tasks, args.threads))
            row = experiments.regime_cell_row(tasks[0], results)
            writer.write_rows([row])
            print(f"  separation={sep:<5g} noise_scale={noise:<5g} "
                  f"margin_strength={row['margin_strength']:.2f} mean_gini={row['mean_gini']:.3f} "
                  f"mean_delta_rmse={row['mean_delta_rmse']:+.3f}")
    return 0


def cmd_theory_variance(args) -> int:
    base_task = _blob_task(args, "theory-variance", 0)
    base = experiments.data_driven_weights(base_task)
    written = 0
    with ResultWriter(args.out, args.format, VARIANCE_COLUMNS) as writer:
        for row in experiments.variance_sweep_rows(base, args.t_grid, args.n, args.nbar,
                                                   args.mc, args.seed):
            writer.write_rows([row])
            written += 1
            if not row["oracle"] and row["scheme"] == "optimal":
                print(f"  t={row['t']:.3f} cv={row['cv']:.3f} "
                      f"finite_optimal={row['variance']:.6g} (se {row['mc_se']:.2g})")
    print(f"theory-variance: {written} rows over {len(args.t_grid)} interpolation points")
    return 0


def cmd_cost_model(args) -> int:
    rows = list(experiments.cost_model_rows(args.configs, args.n_range, args.nbar))
    with ResultWriter(args.out, args.format, COST_COLUMNS) as writer:
        writer.write_rows(rows)
    print(f"cost-model: {len(rows)} rows "
          f"({len(args.configs)} configurations x {len(args.n_range)} sizes)")
    for r, rounds in args.configs:
        sample = [row for row in rows if row["r"] == r and row["rounds"] == rounds]
        print(f"  r={r} rounds={rounds}: tau* from {sample[0]['tau_star']:.6g} "
              f"(n={sample[0]['n']}) to {sample[-1]['tau_star']:.6g} (n={sample[-1]['n']})")
    return 0


def cmd_load_kernel(args) -> int:
    kernel, labels = load_kernel_file(args.kernel)
    if labels is None:
        raise ValueError(f"{args.kernel} carries no labels row; fixed-budget runs need labels")
    nbar_values = args.nbar_list if args.nbar_list else [args.nbar]
    finals: dict[tuple[int, str], list[float]] = {}
    with ResultWriter(args.out, args.format, STAGE_COLUMNS) as writer:
        for block, nbar in enumerate(nbar_values):
            if nbar < args.m0:
                raise ValueError(f"nbar {nbar} cannot cover the pilot of m0={args.m0}")
            tasks = [TrialTask(experiment="load-kernel", trial=block * args.trials + trial,
                               seed=args.seed, n=kernel.n, nbar=nbar, rounds=args.rounds,
                               m0=args.m0, lam=args.lam, epsilon=0.0, c=args.c,
                               sigma_phys=args.sigma_phys, kernel_entries=kernel.entries,
                               kernel_labels=labels)
                     for trial in range(args.trials)]
            for _, rows in map_trials(experiments.run_stage_trial, tasks, args.threads):
                writer.write_rows(rows)
                for row in rows:
                    if row["round"] == row["rounds_executed"]:
                        finals.setdefault((nbar, row["strategy"]), []).append(row["decision_rmse"])
    print(f"load-kernel: {args.kernel} (n={kernel.n}), {args.trials} trials per budget")
    for nbar in nbar_values:
        print(f"  nbar={nbar}: median decision_rmse "
              f"uniform={_median(finals[(nbar, 'uniform')]):.6g} "
              f"adaptive={_median(finals[(nbar, 'adaptive')]):.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shotsvm",
        description="Adaptive vs uniform shot allocation for SVMs on estimated kernels.")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser(
        "fixed-budget", help="uniform vs adaptive at a matched total budget")
    sub.add_argument("--n", type=_even_points, default=50, help="training points (default 50)")
    _add_run_flags(sub)
    _add_blob_flags(sub)
    _add_io_flags(sub)
    sub.set_defaults(func=cmd_fixed_budget)

    sub = commands.add_parser(
        "saturation", help="adaptive stage metrics over many rounds")
    sub.add_argument("--n", type=_even_points, default=50, help="training points (default 50)")
    _add_run_flags(sub)
    _add_blob_flags(sub)
    _add_io_flags(sub)
    sub.set_defaults(func=cmd_saturation)

    sub = commands.add_parser(
        "stopping-sweep", help="early-stopping thresholds replayed against full traces")
    sub.add_argument("--n", type=_even_points, default=50, help="training points (default 50)")
    _add_run_flags(sub)
    sub.add_argument("--epsilons", type=_float_list, default=_float_list(_EPSILON_DEFAULT),
                     help=f"comma list of stopping thresholds (default {_EPSILON_DEFAULT})")
    _add_blob_flags(sub)
    _add_io_flags(sub)
    sub.set_defaults(func=cmd_stopping_sweep)

    sub = commands.add_parser(
        "regime-map", help="mean budget-matched gain over a dataset grid")
    sub.add_argument("--n", type=_even_points, default=50, help="training points (default 50)")
    _add_run_flags(sub, trials_default=20)
    sub.add_argument("--epsilon", type=_nonneg_float, default=0.0,
                     help="early-stopping threshold (default 0 = disabled)")
    _add_blob_flags(sub, cell_grid=True)
    _add_io_flags(sub)
    sub.set_defaults(func=cmd_regime_map)

    sub = commands.add_parser(
        "theory-variance", help="oracle and finite-shot variances along the heterogeneity sweep")
    sub.add_argument("--n", type=_even_points, default=50, help="training points (default 50)")
    sub.add_argument("--nbar", type=_positive_int, default=50,
                     help="shots per entry defining the budget (default 50)")
    sub.add_argument("--c", type=_positive_float, default=1.0,
                     help="SVM box bound for the base instance (default 1.0)")
    sub.add_argument("--t-grid", dest="t_grid", type=_float_list,
                     default=_float_list(_T_GRID_DEFAULT),
                     help="comma list of interpolation points in [0, 1]")
    sub.add_argument("--mc", type=_positive_int, default=300,
                     help="Monte Carlo draws per finite-shot point (default 300)")
    _add_blob_flags(sub)
    _add_io_flags(sub)
    sub.set_defaults(func=cmd_theory_variance, rounds=0, m0=1, lam=0.5, sigma_phys=0.0, trials=1)

    sub = commands.add_parser(
        "cost-model", help="critical cost-ratio curves tau*(n)")
    sub.add_argument("--configs", type=_config_list, default=[(0.16, 6)],
                     help="comma list of r:R configurations (default 0.16:6)")
    sub.add_argument("--n-range", dest="n_range", type=_int_range, default=range(10, 101),
                     help="inclusive lo:hi range of training-set sizes (default 10:100)")
    sub.add_argument("--nbar", type=_positive_float, default=50,
                     help="shots per entry entering the cost totals (default 50)")
    _add_io_flags(sub)
    sub.set_defaults(func=cmd_cost_model)

    sub = commands.add_parser(
        "load-kernel", help="fixed-budget runs on a kernel matrix loaded from disk")
    sub.add_argument("--kernel", required=True, help="path to a saved kernel file with labels")
    _add_run_flags(sub, trials_default=50)
    sub.add_argument("--nbar-list", dest="nbar_list", type=_float_list, default=None,
                     help="comma list of per-entry budgets to sweep (overrides --nbar)")
    _add_io_flags(sub)
    sub.set_defaults(func=cmd_load_kernel)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "nbar") and hasattr(args, "m0") and isinstance(args.nbar, int):
        _check_budget(parser, args)
    if hasattr(args, "nbar_list") and args.nbar_list is not None:
        args.nbar_list = [int(v) for v in args.nbar_list]
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures keep partial results on disk
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

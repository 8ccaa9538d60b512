"""ecogear command line: fit-motor, gen-cycle, train, compare, bench.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .cycle import DrivingCycle, derive_accel, gen_nedc, load_cycle, windows
from .errors import CycleError, EcogearError
from .mpc import (
    ExactStrategy,
    NNStrategy,
    RuleBasedStrategy,
    bench_solve_time,
    compare,
    comparison_csv,
    window_gaps,
)
from .nn import MlpParams, NetConfig, binarity_gap, featurize, forward_batch, train
from .plots import gear_trace_svg, working_points_svg
from .vehicle import fit_residual

KMH = 3.6


def _write(out_dir: str, name: str, text: str) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _get_cycle(arg: str, cfg: RunConfig) -> DrivingCycle:
    if arg == "nedc":
        return gen_nedc(cfg.dt)
    if not os.path.isfile(arg):
        raise ConfigError(f"cycle file not found: {arg}")
    return load_cycle(arg)


def _get_params(path: str) -> MlpParams:
    if not os.path.isfile(path):
        raise ConfigError(f"params file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    try:
        return MlpParams.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a usable parameter file ({exc})") from None


def _train(cfg: RunConfig, cycle: DrivingCycle, verbose: bool = True):
    data = windows(cycle, cfg.N)
    net = NetConfig(n_heads=cfg.N, head_width=cfg.vehicle.n_b)

    def progress(row):
        epoch, total, *_ = row
        if verbose and (epoch == 1 or epoch % 50 == 0):
            print(f"epoch {epoch:4d}  loss {total:.6f}", file=sys.stderr)

    result = train(data, cfg.vehicle, cfg.motor, cfg.train, net, progress)
    return result, data


def _params_for(args, cfg: RunConfig, cycle: DrivingCycle) -> MlpParams:
    if args.params:
        return _get_params(args.params)
    print("no --params given; training in-process", file=sys.stderr)
    return _train(cfg, cycle)[0].params


def cmd_fit_motor(args, cfg: RunConfig) -> int:
    stats = fit_residual(cfg.motor, cfg.fit_grid)
    doc = cfg.motor.to_dict()
    doc["fit_grid"] = cfg.fit_grid
    doc["residual"] = stats
    path = _write(args.out, "motor.json", json.dumps(doc, indent=1) + "\n")
    print(f"fit residual RMS {stats['rms_w']:.1f} W = {100 * stats['relative_rms']:.2f}% "
          f"of mean |power| {stats['mean_abs_power_w']:.1f} W")
    print(f"wrote {path}")
    return 0


def cmd_gen_cycle(args, cfg: RunConfig) -> int:
    cycle = _get_cycle(args.cycle, cfg)
    path = _write(args.out, "cycle.csv", cycle.to_csv())
    dist = float(np.sum((cycle.v[1:] + cycle.v[:-1]) * np.diff(cycle.t)) / 2)
    print(f"{len(cycle)} samples, {cycle.t[-1] - cycle.t[0]:g} s, {dist / 1000:.3f} km")
    print(f"wrote {path}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    cycle = _get_cycle(args.cycle, cfg)
    result, data = _train(cfg, cycle)
    params = result.params
    _write(args.out, "params.json", params.to_json())
    _write(args.out, "loss.csv", result.history_csv())
    B = forward_batch(np.stack([featurize(s, params) for s in data]), params)
    gap = binarity_gap(B)
    confident = float(np.mean(B.max(axis=-1) > 0.9))
    print(f"final mean loss {result.history[-1][1]:.6f}")
    print(f"binarity gap {gap:.5f}, rows with max > 0.9: {100 * confident:.2f}%")
    print(f"wrote {os.path.join(args.out, 'params.json')} and loss.csv")
    return 0


def cmd_compare(args, cfg: RunConfig) -> int:
    cycle = _get_cycle(args.cycle, cfg)
    params = _params_for(args, cfg, cycle)
    strategies = [
        RuleBasedStrategy(cfg.v_up_kmh, cfg.v_down_kmh, cfg.initial_gear),
        ExactStrategy(),
        NNStrategy(params),
    ]
    p, mm = cfg.vehicle, cfg.motor
    rows, reports = compare(cycle, strategies, p, mm, cfg.N)
    gaps = window_gaps(windows(cycle, cfg.N, accel=derive_accel(cycle)), params, p, mm)

    _write(args.out, "comparison.csv", comparison_csv(rows))
    for r in reports:
        _write(args.out, f"report_{r.method}.json", r.to_json(include_timing=False))
        _write(args.out, f"steps_{r.method}.csv", r.steps_csv())
    summary = {
        "cycle": args.cycle,
        "methods": {
            r.method: {
                "energy_kwh": r.total_kwh,
                "savings_pct": r.savings_pct,
                "model_energy_kwh": r.model_energy_J / 3.6e6,
                "shift_count": r.shift_count,
            }
            for r in reports
        },
        "window_gap": {k: v for k, v in gaps.items() if not isinstance(v, np.ndarray)},
    }
    _write(args.out, "summary.json", json.dumps(summary, indent=1) + "\n")

    methods = [r.method for r in reports]
    gear_rows = zip(cycle.t, cycle.v, *[r.steps["gear"] for r in reports])
    _write(args.out, "gear_trace.csv",
           _csv(["t", "v", *methods], ([repr(float(t)), repr(float(v)), *map(int, g)] for t, v, *g in gear_rows)))
    wp_rows, points = [], {}
    for r in reports:
        n, T = r.steps["nm"], r.steps["Tm"]
        eta = np.where(T == 0.0, 0.0, mm.efficiency(n, T))
        points[r.method] = (n, T, eta)
        wp_rows += [[r.method, repr(float(t)), repr(float(a)), repr(float(b)), repr(float(e))]
                    for t, a, b, e in zip(r.steps["t"], n, T, eta)]
    _write(args.out, "working_points.csv", _csv(["method", "t", "nm", "Tm", "eta"], wp_rows))
    _write(args.out, "gear_trace.svg",
           gear_trace_svg(cycle.t, cycle.v * KMH, {r.method: r.steps["gear"] for r in reports}))
    _write(args.out, "working_points.svg", working_points_svg(points, mm.T_max, mm.n_max))

    print(f"{'method':<12}{'energy_kwh':>12}{'savings_%':>11}{'mean_ms':>10}{'worst_ms':>10}")
    for row in rows:
        print(f"{row['method']:<12}{row['energy_kwh']:>12.4f}{row['savings_pct']:>11.2f}"
              f"{row['mean_ms']:>10.4f}{row['worst_ms']:>10.4f}")
    print(f"open-loop window gap nn vs exact: {100 * gaps['relative_gap']:.3f}% "
          f"({100 * gaps['optimal_fraction']:.1f}% of windows optimal)")
    print(f"wrote outputs to {args.out}")
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    cycle = _get_cycle(args.cycle, cfg)
    params = _params_for(args, cfg, cycle)
    scen = windows(cycle, cfg.N)
    p, mm = cfg.vehicle, cfg.motor
    cols = ("method", "n", "mean_ms", "worst_ms", "p99_ms")
    stats = [bench_solve_time(s, scen, p, mm, args.repetitions, args.warmup)
             for s in (NNStrategy(params), ExactStrategy())]
    _write(args.out, "timing.csv", _csv(cols, ([st[c] for c in cols] for st in stats)))
    for st in stats:
        print(f"{st['method']:<6} n={st['n']}  mean {st['mean_ms']:.4f} ms  worst {st['worst_ms']:.4f} ms  "
              f"p99 {st['p99_ms']:.4f} ms")
    print(f"exact / nn mean time: {stats[1]['mean_ns'] / stats[0]['mean_ns']:.1f}x")
    return 0


def _positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def _seed(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON (defaults built in)")
    common.add_argument("--seed", type=_seed, help="root seed; overrides the config")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--cycle", default="nedc", help="cycle CSV path or 'nedc' (default)")

    parser = argparse.ArgumentParser(prog="ecogear", description="Eco gearshift optimization for two-speed EVs")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit-motor", parents=[common], help="fit the motor power polynomial")
    sub.add_parser("gen-cycle", parents=[common], help="write the driving cycle as CSV")
    sub.add_parser("train", parents=[common], help="train the NN gear optimizer")
    cp = sub.add_parser("compare", parents=[common], help="closed-loop comparison of all strategies")
    cp.add_argument("--params", help="trained params JSON; trains in-process if omitted")
    bp = sub.add_parser("bench", parents=[common], help="per-step solve timing of nn and exact")
    bp.add_argument("--params", help="trained params JSON; trains in-process if omitted")
    bp.add_argument("--repetitions", type=_positive_int, default=3)
    bp.add_argument("--warmup", type=int, default=20)
    return parser


COMMANDS = {
    "fit-motor": cmd_fit_motor,
    "gen-cycle": cmd_gen_cycle,
    "train": cmd_train,
    "compare": cmd_compare,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, CycleError) as exc:
        print(f"ecogear: error: {exc}", file=sys.stderr)
        return 2
    except EcogearError as exc:
        print(f"ecogear: {exc}", file=sys.stderr)
        return 1
    except (FloatingPointError, np.linalg.LinAlgError, OSError) as exc:
        print(f"ecogear: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

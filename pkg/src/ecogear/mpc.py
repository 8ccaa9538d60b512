"""Receding-horizon closed-loop simulation and strategy benchmarking.

Every strategy sees the same N-step horizon built from the cycle at the
current index. Only the first gear of its plan is applied; the plant then
charges energy using the efficiency map, not the polynomial the optimizers
plan with.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .cycle import DrivingCycle, Scenario, derive_accel, horizon_at
from .errors import EcogearError, SimulationError
from .nn import InferenceNet, MlpParams
from .ocp import exhaustive_solve, first_gear, power_table, round_sos1, rule_based_gear
from .vehicle import (
    MotorModel,
    VehicleParams,
    demand_force,
    motor_power_map,
    motor_power_poly,
    motor_speed,
    torque_split,
)

J_PER_KWH = 3.6e6


class RuleBasedStrategy:
    tag = "rule_based"

    def __init__(self, v_up_kmh: float = 24.0, v_down_kmh: float = 18.0, initial_gear: int = 1):
        self.v_up_kmh = v_up_kmh
        self.v_down_kmh = v_down_kmh
        self.initial_gear = initial_gear
        self.gear = initial_gear

    def reset(self):
        self.gear = self.initial_gear

    def decide(self, s: Scenario, p: VehicleParams, mm: MotorModel) -> int:
        self.gear = rule_based_gear(float(s.v_ref[0]), self.gear, self.v_up_kmh, self.v_down_kmh)
        return self.gear


class ExactStrategy:
    tag = "exact"

    def reset(self):
        pass

    def decide(self, s: Scenario, p: VehicleParams, mm: MotorModel) -> int:
        return exhaustive_solve(s, p, mm)[0].gear[0]


class NNStrategy:
    tag = "nn"

    def __init__(self, params: MlpParams):
        self.params = params
        self.net = InferenceNet(params)

    def reset(self):
        pass

    def decide(self, s: Scenario, p: VehicleParams, mm: MotorModel) -> int:
        # only the first step is applied, so only its row needs rounding
        return first_gear(self.net.plan_matrix(s))


STEP_COLUMNS = ("t", "v", "a", "gear", "Tm", "Tb", "nm", "Pm", "W")
# surrogate power/energy the optimizers plan with, kept alongside the plant values
MODEL_COLUMNS = ("Pm_model", "W_model")


def timing_stats(samples_ns) -> dict:
    ns = np.asarray(samples_ns, dtype=float)
    if ns.size == 0:
        return {"n": 0, "mean_ns": 0.0, "worst_ns": 0.0, "p99_ns": 0.0, "mean_ms": 0.0, "worst_ms": 0.0, "p99_ms": 0.0}
    mean, worst, p99 = float(ns.mean()), float(ns.max()), float(np.percentile(ns, 99))
    return {
        "n": int(ns.size),
        "mean_ns": mean,
        "worst_ns": worst,
        "p99_ns": p99,
        "mean_ms": mean / 1e6,
        "worst_ms": worst / 1e6,
        "p99_ms": p99 / 1e6,
    }


@dataclass
class SimReport:
    method: str
    steps: dict
    dt: float
    solve_ns: np.ndarray = field(repr=False)
    savings_pct: float | None = None

    @property
    def total_energy_J(self) -> float:
        W = self.steps["W"]
        return float(W[-1]) if len(W) else 0.0

    @property
    def total_kwh(self) -> float:
        return self.total_energy_J / J_PER_KWH

    @property
    def model_energy_J(self) -> float:
        """Cycle energy as predicted by the polynomial surrogate for the applied gears."""
        W = self.steps["W_model"]
        return float(W[-1]) if len(W) else 0.0

    @property
    def shift_count(self) -> int:
        g = self.steps["gear"]
        return int(np.count_nonzero(np.diff(g))) if len(g) > 1 else 0

    @property
    def solve_time(self) -> dict:
        return timing_stats(self.solve_ns)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "method": self.method,
            "dt": self.dt,
            "total_energy_J": self.total_energy_J,
            "total_kwh": self.total_kwh,
            "savings_pct": self.savings_pct,
            "shift_count": self.shift_count,
            "model_energy_J": self.model_energy_J,
            "steps": {k: np.asarray(v).tolist() for k, v in self.steps.items()},
        }
        if include_timing:
            d["solve_time"] = self.solve_time
            d["solve_ns"] = np.asarray(self.solve_ns).tolist()
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=1) + "\n"

    def steps_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        cols = [self.steps[c] for c in STEP_COLUMNS]
        for row in zip(*cols):
            w.writerow([int(x) if name == "gear" else repr(float(x)) for name, x in zip(STEP_COLUMNS, row)])
        return buf.getvalue()


def mpc_step(k: int, cycle: DrivingCycle, strategy, p: VehicleParams, mm: MotorModel, N: int = 8,
             accel: np.ndarray | None = None) -> tuple[int, int]:
    """Query ``strategy`` at cycle index ``k``; returns (gear, solve time in ns)."""
    accel = derive_accel(cycle) if accel is None else accel
    s = horizon_at(cycle, k, N, accel)
    t0 = time.perf_counter_ns()
    try:
        gear = strategy.decide(s, p, mm)
    except EcogearError as exc:
        raise SimulationError(str(exc), k) from exc
    return gear, time.perf_counter_ns() - t0


def simulate_cycle(cycle: DrivingCycle, strategy, p: VehicleParams, mm: MotorModel, N: int = 8) -> SimReport:
    strategy.reset()
    accel = derive_accel(cycle)
    dt = cycle.dt
    L = len(cycle)
    steps = {c: np.zeros(L, dtype=int if c == "gear" else float) for c in STEP_COLUMNS + MODEL_COLUMNS}
    solve_ns = np.zeros(L, dtype=np.int64)
    W = W_model = 0.0
    for k in range(L):
        gear, ns = mpc_step(k, cycle, strategy, p, mm, N, accel)
        v, a = float(cycle.v[k]), float(accel[k])
        F = demand_force(v, a, float(cycle.alpha[k]), p)
        try:
            ts = torque_split(F, gear, v, p, mm)
        except EcogearError as exc:
            raise SimulationError(f"{strategy.tag} chose gear {gear}: {exc}", k) from exc
        n_m = motor_speed(v, gear, p)
        P_m = motor_power_map(n_m, ts.T_m, mm)
        W += P_m * dt
        P_model = motor_power_poly(v, gear, ts.T_m, mm, p)
        W_model += P_model * dt
        row = (cycle.t[k], v, a, gear, ts.T_m, ts.T_b, n_m, P_m, W, P_model, W_model)
        for name, val in zip(STEP_COLUMNS + MODEL_COLUMNS, row):
            steps[name][k] = val
        solve_ns[k] = ns
    return SimReport(method=strategy.tag, steps=steps, dt=dt, solve_ns=solve_ns)


def compare(cycle: DrivingCycle, strategies, p: VehicleParams, mm: MotorModel, N: int = 8,
            baseline: str = "rule_based") -> tuple[list[dict], list[SimReport]]:
    """Simulate every strategy and tabulate energy, savings and solve time."""
    strategies = list(strategies)
    if len(strategies) < 2:
        raise ValueError("compare needs at least two strategies")
    reports = [simulate_cycle(cycle, s, p, mm, N) for s in strategies]
    base = [r for r in reports if r.method == baseline]
    if not base:
        raise ValueError(f"baseline {baseline!r} is not among the strategies")
    E_base = base[0].total_energy_J
    rows = []
    for r in reports:
        r.savings_pct = 100.0 * (E_base - r.total_energy_J) / E_base
        st = r.solve_time
        rows.append({
            "method": r.method,
            "energy_kwh": r.total_kwh,
            "savings_pct": r.savings_pct,
            "mean_ms": st["mean_ms"],
            "worst_ms": st["worst_ms"],
        })
    return rows, reports


TABLE_COLUMNS = ("method", "energy_kwh", "savings_pct", "mean_ms", "worst_ms")


def comparison_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in TABLE_COLUMNS})
    return buf.getvalue()


def bench_solve_time(strategy, scenarios, p: VehicleParams, mm: MotorModel, repetitions: int = 1,
                     warmup: int = 20) -> dict:
    """Wall-clock solve statistics over ``scenarios`` x ``repetitions``, warm-up excluded."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("no scenarios to benchmark")
    strategy.reset()
    for i in range(warmup):
        strategy.decide(scenarios[i % len(scenarios)], p, mm)
    samples = []
    clock = time.perf_counter_ns
    for _ in range(repetitions):
        for s in scenarios:
            t0 = clock()
            strategy.decide(s, p, mm)
            samples.append(clock() - t0)
    stats = timing_stats(samples)
    stats["method"] = strategy.tag
    return stats


def window_gaps(scenarios, params: MlpParams, p: VehicleParams, mm: MotorModel) -> dict:
    """Open-loop suboptimality of the rounded NN plan against enumeration, per window.

    ``gap_J`` is x_N(NN) - x_N(exact) in joules (never negative when the NN
    plan is feasible). ``relative_gap`` aggregates as sum(gap) / sum(|x_N exact|)
    because single windows near standstill have x_N close to zero.
    """
    from .nn import forward

    gaps, exact, infeasible = [], [], 0
    for s in scenarios:
        table = power_table(s, p, mm)
        _, x_best = exhaustive_solve(s, p, mm, table=table)
        gear = np.array(round_sos1(forward(s, params)).gear) - 1
        steps = np.arange(s.N)
        if not table.feasible[steps, gear].all():
            infeasible += 1
        x_nn = float(s.x0)
        for k in steps:
            x_nn = x_nn + table.power[k, gear[k]] * s.dt
        gaps.append(x_nn - x_best)
        exact.append(x_best)
    gaps, exact = np.array(gaps), np.array(exact)
    return {
        "gap_J": gaps,
        "exact_J": exact,
        "mean_gap_J": float(gaps.mean()),
        "relative_gap": float(gaps.sum() / np.abs(exact).sum()),
        "optimal_fraction": float(np.mean(gaps <= 0)),
        "infeasible_windows": infeasible,
    }

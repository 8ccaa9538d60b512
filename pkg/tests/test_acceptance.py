"""Acceptance criteria, one test per criterion.

Each test records its verdict in ``conftest.ACCEPTANCE`` and prints a
``criterion N: PASS/FAIL`` line; the terminal summary repeats them all.
Run alone with ``python3 tests/test_acceptance.py`` or
``pytest tests/test_acceptance.py -s``.
"""

import filecmp
import os
import time

import numpy as np
import pytest

import conftest
from ecogear.cli import main
from ecogear.mpc import ExactStrategy, NNStrategy, RuleBasedStrategy, bench_solve_time, compare
from ecogear.nn import (
    InferenceNet,
    NetConfig,
    TrainConfig,
    binarity_gap,
    feature_stats,
    featurize,
    forward,
    forward_batch,
    init_params,
    loss_and_grad,
    soft_argmax,
)
from ecogear.ocp import IntegerPlan, exhaustive_solve, power_table, rollout, rollout_grad
from ecogear.vehicle import (
    MotorModel,
    motor_power_poly,
    motor_speed,
    poly_power_nT,
    torque_split,
    wheel_force,
)
from oracles import enumerate_plans, fd_param_grad, fd_rollout_grad, rel_err, softmax_oracle


def record(key, ok, detail):
    conftest.ACCEPTANCE[key] = (bool(ok), detail)
    print(f"\ncriterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_exhaustive_is_optimal(p, mm, nedc_windows):
    rng = np.random.default_rng(2024)
    idx = rng.choice(len(nedc_windows), size=100, replace=False)
    t0 = time.perf_counter()
    worse, mismatched, checked = 0, 0, 0
    for i in idx:
        s = nedc_windows[i]
        table = power_table(s, p, mm)
        plan, x_best = exhaustive_solve(s, p, mm, table)
        oracle = enumerate_plans(s, p, mm)
        assert len(oracle) == 256
        for gears, x in oracle.items():
            if x is None:
                continue
            r = rollout(s, IntegerPlan(gears).to_relaxed(2), p, mm, table)
            checked += 1
            if not (x_best <= r.x_N and x_best <= x):
                worse += 1
        if oracle[plan.gear] is None or oracle[plan.gear] != min(x for x in oracle.values() if x is not None):
            mismatched += 1
    elapsed = time.perf_counter() - t0
    ok = worse == 0 and mismatched == 0 and elapsed < 5.0
    record(1, ok, f"100 windows, {checked} feasible plans, {worse} beat the solver, "
                  f"{mismatched} argmin mismatches, {elapsed:.2f} s (< 5 s)")


def random_small_net(rng, data, seed):
    net = NetConfig(n_hidden_layers=int(rng.integers(1, 3)), hidden_width=int(rng.choice([4, 6, 8, 12])))
    params = init_params(net, *feature_stats(data), seed)
    for b in params.biases:
        b[:] = rng.normal(0, 0.3, b.shape)
    params.weights[-1] *= rng.uniform(1, 10)
    return params


def test_criterion_2_gradients(p, mm, nedc_windows):
    rng = np.random.default_rng(7)
    cfg = TrainConfig(omega2=0.1)
    t0 = time.perf_counter()
    worst_net = 0.0
    for seed in range(20):
        params = random_small_net(rng, nedc_windows, seed)
        data = [nedc_windows[i] for i in rng.choice(len(nedc_windows), 10, replace=False)]
        X = np.stack([featurize(s, params) for s in data])
        P = np.stack([power_table(s, p, mm).power for s in data])
        x0 = rng.uniform(0, 2e6, 10)
        E_ref = float(rng.uniform(5e4, 5e5))
        analytic = loss_and_grad(params, X, P, x0, 1.0, cfg, E_ref)[3]
        numeric = fd_param_grad(params, X, P, x0, 1.0, cfg, E_ref, h=1e-5)
        worst_net = max(worst_net, rel_err(np.concatenate([g.ravel() for g in analytic]),
                                           np.concatenate([g.ravel() for g in numeric])))
    worst_roll = 0.0
    for i in rng.choice(len(nedc_windows), 20, replace=False):
        s = nedc_windows[i]
        B = rng.dirichlet([1, 1], size=8)
        worst_roll = max(worst_roll, rel_err(rollout_grad(s, B, p, mm), fd_rollout_grad(s, B, p, mm)))
    elapsed = time.perf_counter() - t0
    ok = worst_net <= 1e-5 and worst_roll <= 1e-6 and elapsed < 30.0
    record(2, ok, f"network grad rel err {worst_net:.2e} (<= 1e-5), rollout grad rel err {worst_roll:.2e} "
                  f"(<= 1e-6), {elapsed:.1f} s (< 30 s)")


def test_criterion_3_soft_argmax():
    z = [1.7, 2.0, 1.5]
    err = float(np.max(np.abs(soft_argmax(z, 1.0) - np.array(softmax_oracle(z, 1.0)))))
    sharp = float(soft_argmax(z, 50.0).max())
    rng = np.random.default_rng(3)
    violations = 0
    for _ in range(1000):
        v = rng.normal(0, 2, int(rng.integers(2, 6)))
        Ks = np.sort(rng.uniform(0.01, 100, 5))
        peaks = [soft_argmax(v, K).max() for K in Ks]
        violations += sum(b < a - 1e-15 for a, b in zip(peaks, peaks[1:]))
    ok = err <= 1e-9 and sharp > 0.999 and violations == 0
    record(3, ok, f"K=1 max abs err {err:.1e} (<= 1e-9), K=50 max {sharp:.6f} (> 0.999), "
                  f"{violations} monotonicity violations over 1000 vectors")


def test_criterion_4_binarity(trained, nedc_windows):
    result, seconds = trained
    params = result.params
    B = forward_batch(np.stack([featurize(s, params) for s in nedc_windows]), params)
    gap = binarity_gap(B)
    confident = float(np.mean(B.max(axis=-1) > 0.9))
    ok = gap < 0.05 and confident >= 0.95 and seconds < 600
    record(4, ok, f"binarity gap {gap:.4f} (< 0.05), rows > 0.9: {100 * confident:.2f}% (>= 95%), "
                  f"training {seconds:.1f} s (< 600 s)")


def test_criterion_5_closed_loop_energy(trained, nedc, p, mm):
    _, reports = compare(nedc, [RuleBasedStrategy(), ExactStrategy(), NNStrategy(trained[0].params)], p, mm)
    E = {r.method: r.total_energy_J for r in reports}
    gap = abs(E["nn"] - E["exact"]) / E["exact"]
    ok = gap <= 0.02 and E["exact"] < E["rule_based"] and E["nn"] < E["rule_based"]
    kwh = {k: v / 3.6e6 for k, v in E.items()}
    record(5, ok, f"rule {kwh['rule_based']:.4f} / exact {kwh['exact']:.4f} / nn {kwh['nn']:.4f} kWh, "
                  f"nn vs exact {100 * gap:.3f}% (<= 2%)")


def test_criterion_6_solve_time(trained, nedc_windows, p, mm):
    nn = bench_solve_time(NNStrategy(trained[0].params), nedc_windows, p, mm, repetitions=3)
    ex = bench_solve_time(ExactStrategy(), nedc_windows, p, mm, repetitions=1)
    ratio = ex["mean_ns"] / nn["mean_ns"]
    ok = nn["mean_ms"] < 1.0 and ex["mean_ms"] < 10.0 and ratio >= 10.0
    record(6, ok, f"nn mean {nn['mean_ms']:.4f} ms (< 1 ms), exact mean {ex['mean_ms']:.4f} ms (< 10 ms), "
                  f"ratio {ratio:.1f}x (>= 10x)")


def test_criterion_7_model_identities(p, mm, nedc_windows, trained):
    rng = np.random.default_rng(11)
    poly_err = 0.0
    for _ in range(100):
        gear = int(rng.integers(1, 3))
        v = rng.uniform(0, 33)
        T = rng.uniform(-mm.T_max, mm.T_max)
        lhs = motor_power_poly(v, gear, T, mm, p)
        rhs = poly_power_nT(motor_speed(v, gear, p), T, mm)
        poly_err = max(poly_err, abs(lhs - rhs) / max(abs(rhs), 1.0))

    raw = MotorModel()
    force_err = 0.0
    for _ in range(100):
        gear = int(rng.integers(1, 3))
        v = rng.uniform(0, 20)
        F = rng.uniform(-20000, 2500)
        ts = torque_split(F, gear, v, p, raw)
        force_err = max(force_err, abs(wheel_force(ts, p) - F) / max(abs(F), 1.0))

    outputs = [forward_batch(np.stack([featurize(s, trained[0].params) for s in nedc_windows]), trained[0].params)]
    net = InferenceNet(trained[0].params)
    outputs.append(np.stack([net.plan_matrix(s) for s in nedc_windows]))
    outputs.append(np.stack([forward(s, trained[0].params).B for s in nedc_windows[::10]]))
    for seed in range(20):
        params = random_small_net(rng, nedc_windows, seed)
        outputs.append(forward_batch(np.stack([featurize(s, params) for s in nedc_windows[::5]]), params))
    sos_err = max(float(np.max(np.abs(B.sum(axis=-1) - 1.0))) for B in outputs)
    rows = sum(B.shape[0] * B.shape[1] for B in outputs)

    ok = poly_err <= 1e-9 and force_err <= 1e-9 and sos_err <= 1e-12
    record(7, ok, f"polynomial forms {poly_err:.1e} (<= 1e-9), force round trip {force_err:.1e} (<= 1e-9), "
                  f"SOS1 row sums {sos_err:.1e} over {rows} rows (<= 1e-12)")


def run_pipeline(out):
    assert main(["train", "--out", out]) == 0
    assert main(["compare", "--out", out]) == 0


def test_criterion_8_determinism(tmp_path, capsys):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    run_pipeline(a)
    run_pipeline(b)
    capsys.readouterr()
    timing = {"comparison.csv", "timing.csv"}
    names = sorted(set(os.listdir(a)) | set(os.listdir(b)))
    compared = [n for n in names if n not in timing]
    same = all(os.path.exists(os.path.join(d, n)) for d in (a, b) for n in compared)
    _, mismatch, errors = filecmp.cmpfiles(a, b, compared, shallow=False)
    # the timing-bearing table must still agree on everything but the timings
    rows = [[line.split(",")[:3] for line in open(os.path.join(d, "comparison.csv"))] for d in (a, b)]
    ok = same and not mismatch and not errors and rows[0] == rows[1]
    record(8, ok, f"{len(compared)} artifacts byte-identical across two train+compare runs"
                  if ok else f"differing: {mismatch + errors}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))

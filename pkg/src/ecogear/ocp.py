"""Convexified gearshift problem over one prediction horizon.

Gear selection at step k is encoded as a row of selector weights
``b[k, i]`` (one column per gear). The energy state is shot forward with

    x[k+1] = sum_i b[k, i] * (x[k] + P[k, i] * dt)

where ``P[k, i]`` is the polynomial motor power needed to follow the
reference at step k in gear i. Because the references fix the wheel force,
``P`` does not depend on the plan, which keeps both the rollout and its
gradient cheap.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .cycle import Scenario
from .errors import (
    ContractError,
    EcogearError,
    InfeasibleScenarioError,
)
from .vehicle import MotorModel, VehicleParams, demand_force, motor_power_poly, torque_split

SOS1_TOL = 1e-9

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class RelaxedPlan:
    """N x n_b matrix of relaxed gear selectors; rows sum to one."""

    B: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2:
            raise ContractError("plan must be an N x n_b matrix")
        check_sos1(B)
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @classmethod
    def trusted(cls, B: np.ndarray) -> "RelaxedPlan":
        """Wrap a matrix already known to satisfy SOS1 without copying or checking it."""
        plan = object.__new__(cls)
        object.__setattr__(plan, "B", B)
        return plan

    @property
    def N(self) -> int:
        return self.B.shape[0]

    @property
    def n_b(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class IntegerPlan:
    gear: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "gear", tuple(int(g) for g in self.gear))

    def __len__(self):
        return len(self.gear)

    def to_relaxed(self, n_b: int) -> RelaxedPlan:
        B = np.zeros((len(self.gear), n_b))
        B[np.arange(len(self.gear)), np.array(self.gear) - 1] = 1.0
        return RelaxedPlan(B)


@dataclass(frozen=True)
class PowerTable:
    """Per-step, per-gear polynomial power with infeasible entries replaced by the penalty."""

    power: np.ndarray
    feasible: np.ndarray
    reasons: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RolloutResult:
    x_traj: np.ndarray
    per_step_power: np.ndarray
    feasible: bool
    infeasible_steps: list

    @property
    def x_N(self) -> float:
        return float(self.x_traj[-1])


def check_sos1(B, tol: float = SOS1_TOL) -> None:
    B = np.asarray(B)
    if np.any(B < -tol) or np.any(B > 1 + tol):
        raise ContractError("selector weights must lie in [0, 1]")
    if np.any(np.abs(B.sum(axis=-1) - 1.0) > tol):
        raise ContractError("every selector row must sum to 1")


def _mode_power(s: Scenario, k: int, gear_index: int, p: VehicleParams, mm: MotorModel):
    v = float(s.v_ref[k])
    F = demand_force(v, float(s.a_ref[k]), float(s.alpha_ref[k]), p)
    try:
        ts = torque_split(F, gear_index, v, p, mm)
    except EcogearError as exc:
        return None, str(exc)
    return motor_power_poly(v, gear_index, ts.T_m, mm, p), None


def mode_power(s: Scenario, k: int, gear_index: int, p: VehicleParams, mm: MotorModel) -> float | None:
    """Polynomial motor power at step k in the given gear; None if the gear is infeasible."""
    if not 0 <= k < s.N:
        raise ContractError(f"step {k} outside horizon of length {s.N}")
    return _mode_power(s, k, gear_index, p, mm)[0]


def power_table(s: Scenario, p: VehicleParams, mm: MotorModel) -> PowerTable:
    if mm.penalty_power is None:
        raise ContractError("motor model has no penalty power; fit it first")
    P = np.empty((s.N, p.n_b))
    ok = np.ones((s.N, p.n_b), dtype=bool)
    reasons = {}
    for k in range(s.N):
        for i in range(p.n_b):
            power, why = _mode_power(s, k, i + 1, p, mm)
            if power is None:
                P[k, i] = mm.penalty_power
                ok[k, i] = False
                reasons[(k, i + 1)] = why
            else:
                P[k, i] = power
    return PowerTable(power=P, feasible=ok, reasons=reasons)


def shoot(P, B, x0, dt):
    """Batched energy rollout. ``P`` and ``B`` are (M, N, n_b), ``x0`` is (M,); returns (M, N+1)."""
    M, N, _ = B.shape
    x = np.empty((M, N + 1))
    x[:, 0] = x0
    for k in range(N):
        x[:, k + 1] = np.sum(B[:, k, :] * (x[:, k, None] + P[:, k, :] * dt), axis=1)
    return x


def shoot_grad(P, B, x_traj, dt):
    """d x_N / d B for ``shoot`` (no SOS1 projection), shape (M, N, n_b)."""
    M, N, _ = B.shape
    G = np.empty_like(B)
    tail = np.ones(M)
    for k in range(N - 1, -1, -1):
        G[:, k, :] = (x_traj[:, k, None] + P[:, k, :] * dt) * tail[:, None]
        tail = tail * B[:, k, :].sum(axis=1)
    return G


def _as_matrix(plan, check):
    B = plan.B if isinstance(plan, RelaxedPlan) else np.asarray(plan, dtype=float)
    if check and not isinstance(plan, RelaxedPlan):
        check_sos1(B)
    return B


def rollout(s: Scenario, plan, p: VehicleParams, mm: MotorModel, table: PowerTable | None = None,
            check: bool = True) -> RolloutResult:
    """Single-shooting rollout of a relaxed plan.

    ``check=False`` skips the SOS1 contract so finite-difference probes can
    step off the simplex.
    """
    B = _as_matrix(plan, check)
    table = table or power_table(s, p, mm)
    if B.shape != table.power.shape:
        raise ContractError(f"plan shape {B.shape} does not match horizon {table.power.shape}")
    x = shoot(table.power[None], B[None], np.array([s.x0]), s.dt)[0]
    infeasible = [
        (k, i + 1, table.reasons[(k, i + 1)])
        for k, i in zip(*np.nonzero(~table.feasible & (B > 0)))
    ]
    return RolloutResult(
        x_traj=x,
        per_step_power=np.sum(B * table.power, axis=1),
        feasible=not infeasible,
        infeasible_steps=infeasible,
    )


def rollout_grad(s: Scenario, plan, p: VehicleParams, mm: MotorModel, table: PowerTable | None = None,
                 check: bool = True) -> np.ndarray:
    B = _as_matrix(plan, check)
    table = table or power_table(s, p, mm)
    x = shoot(table.power[None], B[None], np.array([s.x0]), s.dt)
    return shoot_grad(table.power[None], B[None], x, s.dt)[0]


@functools.lru_cache(maxsize=8)
def all_gear_sequences(n_b: int, N: int) -> np.ndarray:
    """Every gear sequence of length N in lexicographic order, 0-based, shape (n_b**N, N)."""
    seqs = np.indices((n_b,) * N).reshape(N, -1).T.copy()
    seqs.setflags(write=False)
    return seqs


def exhaustive_solve(s: Scenario, p: VehicleParams, mm: MotorModel, table: PowerTable | None = None,
                     return_candidates: bool = False):
    """Globally optimal gear sequence by enumerating all n_b**N candidates.

    Candidates with an infeasible step are excluded. Among equal energies the
    lexicographically smallest sequence (lower gears first) wins. Returns
    ``(IntegerPlan, x_N)``, plus the per-candidate energies (inf where
    excluded) when ``return_candidates`` is set.
    """
    table = table or power_table(s, p, mm)
    seqs = all_gear_sequences(p.n_b, s.N)
    steps = np.arange(s.N)
    x = np.full(len(seqs), float(s.x0))
    for k in steps:
        x = x + table.power[k, seqs[:, k]] * s.dt
    ok = np.all(table.feasible[steps, seqs], axis=1)
    if not ok.any():
        raise InfeasibleScenarioError("every gear sequence violates the motor limits")
    energies = np.where(ok, x, np.inf)
    best = int(np.argmin(energies))
    plan = IntegerPlan(seqs[best] + 1)
    if return_candidates:
        return plan, float(x[best]), energies
    return plan, float(x[best])


def rule_based_gear(v: float, current_gear: int, v_up_kmh: float = 24.0, v_down_kmh: float = 18.0) -> int:
    """Speed-only hysteresis schedule for a 2-speed gearbox."""
    if v < 0:
        raise ContractError("speed must be non-negative")
    if current_gear == 1 and v > v_up_kmh * KMH:
        return 2
    if current_gear == 2 and v < v_down_kmh * KMH:
        return 1
    return current_gear


def round_sos1(plan) -> IntegerPlan:
    """Per-step argmax; exact ties go to the lower gear."""
    B = _as_matrix(plan, True)
    return IntegerPlan((np.argmax(B, axis=1) + 1).tolist())


def first_gear(B: np.ndarray) -> int:
    """First element of ``round_sos1`` without rounding the remaining rows."""
    return int(B[0].argmax()) + 1

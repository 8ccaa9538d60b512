"""Longitudinal EV model: road loads, driveline torque split and motor power.

Two motor power models live here. ``motor_power_map`` is the reference
efficiency-map model used as the plant in closed loop. ``motor_power_poly``
is the 3x3 polynomial surrogate the optimizers work with; its coefficients
come from a least-squares fit against the map (``fit_power_poly``).

Sign convention everywhere: positive power drains the battery, negative
power is regenerated energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, FittingError, InfeasibleGearError, TorqueInfeasibleError

RPM_TO_RAD_S = math.pi / 30.0


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1533.0
    delta: float = 1.05
    f: float = 0.01
    g: float = 9.81
    Av: float = 0.45864
    eta_t: float = 0.96
    I0: float = 3.94
    gears: tuple[float, ...] = (3.4, 1.5)
    r_w: float = 0.31

    def __post_init__(self):
        object.__setattr__(self, "gears", tuple(float(x) for x in self.gears))
        if self.m <= 0:
            raise DomainError("mass must be positive")
        if self.delta < 1:
            raise DomainError("rotating-mass coefficient must be >= 1")
        if not 0 < self.eta_t <= 1:
            raise DomainError("transmission efficiency must lie in (0, 1]")
        if self.Av < 0:
            raise DomainError("aero coefficient must be non-negative")
        if self.r_w <= 0 or self.I0 <= 0:
            raise DomainError("wheel radius and final drive ratio must be positive")
        if not self.gears or any(x <= 0 for x in self.gears):
            raise DomainError("gear ratios must be positive")
        if any(a <= b for a, b in zip(self.gears, self.gears[1:])):
            raise DomainError("gear ratios must be strictly decreasing")

    @property
    def n_b(self) -> int:
        return len(self.gears)

    @property
    def speed_factor(self) -> float:
        """rpm of the motor per (m/s of vehicle speed x gear ratio)."""
        return 30.0 * self.I0 / (math.pi * self.r_w)

    def ratio(self, gear_index: int) -> float:
        if not 1 <= gear_index <= self.n_b:
            raise DomainError(f"gear index {gear_index} outside [1, {self.n_b}]")
        return self.gears[gear_index - 1]

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        return cls(
            m=d.get("mass", cls.m),
            delta=d.get("delta", cls.delta),
            f=d.get("f", cls.f),
            g=d.get("g", cls.g),
            Av=d.get("Av", cls.Av),
            eta_t=d.get("eta_t", cls.eta_t),
            I0=d.get("I0", cls.I0),
            gears=tuple(d.get("gears", (3.4, 1.5))),
            r_w=d.get("r_w", cls.r_w),
        )

    def to_dict(self) -> dict:
        return {
            "mass": self.m,
            "delta": self.delta,
            "f": self.f,
            "g": self.g,
            "Av": self.Av,
            "eta_t": self.eta_t,
            "I0": self.I0,
            "gears": list(self.gears),
            "r_w": self.r_w,
        }


# c0 [W], c1 [W/rpm], c2 [W/rpm^2], c3 [W/(N m)^2]
DEFAULT_LOSS_COEFFS = (130.0, 0.013, 1.3e-5, 0.52)


@dataclass(frozen=True)
class MotorModel:
    """Motor limits, synthetic efficiency surface and fitted power polynomial.

    The efficiency surface is a loss model: with mechanical power ``P`` and
    losses ``c0 + c1 n + c2 n^2 + c3 T^2`` the efficiency is
    ``|P| / (|P| + losses)``, floored at ``eta_min`` so it stays positive
    where ``P`` vanishes (the power there is zero on both branches anyway).

    ``rho`` holds the coefficients of power in (torque, motor speed) and
    ``phi`` the same polynomial in (torque, vehicle speed x gear ratio) for
    the vehicle it was fitted against. Both are 3x3, indexed ``[i, j]`` for
    ``T^i`` times the speed term to the power ``j``.
    """

    T_max: float = 250.0
    n_max: float = 12000.0
    loss_coeffs: tuple[float, ...] = DEFAULT_LOSS_COEFFS
    eta_min: float = 1e-3
    rho: np.ndarray | None = field(default=None, compare=False)
    phi: np.ndarray | None = field(default=None, compare=False)
    penalty_power: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "loss_coeffs", tuple(float(c) for c in self.loss_coeffs))
        if self.T_max <= 0 or self.n_max <= 0:
            raise DomainError("motor limits must be positive")
        if len(self.loss_coeffs) != 4 or any(c < 0 for c in self.loss_coeffs):
            raise DomainError("loss_coeffs must be four non-negative numbers")
        if self.loss_coeffs[0] <= 0:
            raise DomainError("constant loss c0 must be positive")
        if not 0 < self.eta_min <= 1:
            raise DomainError("eta_min must lie in (0, 1]")
        for name in ("rho", "phi"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                if arr.shape != (3, 3):
                    raise DomainError(f"{name} must be 3x3")
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def fitted(self) -> bool:
        return self.rho is not None and self.phi is not None

    def losses(self, n_m, T_m):
        c0, c1, c2, c3 = self.loss_coeffs
        return c0 + c1 * n_m + c2 * n_m**2 + c3 * T_m**2

    def efficiency(self, n_m, T_m):
        """Efficiency surface value(s) in [eta_min, 1)."""
        p_mech = np.abs(np.asarray(T_m, dtype=float) * np.asarray(n_m, dtype=float)) * RPM_TO_RAD_S
        eta = p_mech / (p_mech + self.losses(n_m, T_m))
        eta = np.maximum(eta, self.eta_min)
        return float(eta) if np.ndim(eta) == 0 else eta

    @classmethod
    def from_dict(cls, d: dict) -> "MotorModel":
        return cls(
            T_max=d.get("T_max", cls.T_max),
            n_max=d.get("n_max", cls.n_max),
            loss_coeffs=tuple(d.get("loss_coeffs", DEFAULT_LOSS_COEFFS)),
            eta_min=d.get("eta_min", cls.eta_min),
            rho=d.get("rho"),
            phi=d.get("phi"),
            penalty_power=d.get("penalty_power"),
        )

    def to_dict(self) -> dict:
        d = {
            "T_max": self.T_max,
            "n_max": self.n_max,
            "loss_coeffs": list(self.loss_coeffs),
            "eta_min": self.eta_min,
        }
        if self.rho is not None:
            d["rho"] = self.rho.tolist()
        if self.phi is not None:
            d["phi"] = self.phi.tolist()
        if self.penalty_power is not None:
            d["penalty_power"] = self.penalty_power
        return d


@dataclass(frozen=True)
class TorqueSplit:
    T_m: float
    T_b: float
    gear_index: int


def air_resistance(v: float, p: VehicleParams) -> float:
    if v < 0:
        raise DomainError(f"speed must be non-negative, got {v}")
    return p.Av * v * v


def required_traction_force(v: float, a: float, alpha: float, p: VehicleParams) -> float:
    """Wheel force needed to follow acceleration ``a`` at speed ``v`` on slope ``alpha``."""
    if v < 0:
        raise DomainError(f"speed must be non-negative, got {v}")
    return (
        p.delta * p.m * a
        + p.Av * v * v
        + p.m * p.g * (math.sin(alpha) + p.f * math.cos(alpha))
    )


def motor_speed(v: float, gear_index: int, p: VehicleParams, mm: MotorModel | None = None) -> float:
    """Motor speed in rpm. Raises InfeasibleGearError above ``mm.n_max`` when a motor is given."""
    if v < 0:
        raise DomainError(f"speed must be non-negative, got {v}")
    n_m = p.speed_factor * p.ratio(gear_index) * v
    if mm is not None and n_m > mm.n_max:
        raise InfeasibleGearError(
            f"gear {gear_index} at {v:.3f} m/s needs {n_m:.1f} rpm > {mm.n_max} rpm"
        )
    return n_m


def torque_split(F_req: float, gear_index: int, v: float, p: VehicleParams, mm: MotorModel) -> TorqueSplit:
    """Split the wheel force demand into motor torque and friction-brake torque.

    Braking demand goes to the motor first; whatever exceeds the regeneration
    limit ``-T_max`` is left for the friction brakes.
    """
    motor_speed(v, gear_index, p, mm)
    gain = p.ratio(gear_index) * p.I0 * p.eta_t
    T_m = F_req * p.r_w / gain
    if F_req >= 0:
        if T_m > mm.T_max:
            raise TorqueInfeasibleError(
                f"gear {gear_index} needs {T_m:.2f} N m > {mm.T_max} N m"
            )
        return TorqueSplit(T_m=T_m, T_b=0.0, gear_index=gear_index)
    if T_m >= -mm.T_max:
        return TorqueSplit(T_m=T_m, T_b=0.0, gear_index=gear_index)
    T_m = -mm.T_max
    T_b = F_req * p.r_w - T_m * gain
    return TorqueSplit(T_m=T_m, T_b=min(T_b, 0.0), gear_index=gear_index)


def wheel_force(ts: TorqueSplit, p: VehicleParams) -> float:
    """Reassemble the wheel force from a torque split (inverse of ``torque_split``)."""
    return (ts.T_m * p.ratio(ts.gear_index) * p.I0 * p.eta_t + ts.T_b) / p.r_w


def motor_power_map(n_m, T_m, mm: MotorModel):
    """Electrical power from the efficiency surface. Accepts scalars or arrays."""
    n_m = np.asarray(n_m, dtype=float)
    T_m = np.asarray(T_m, dtype=float)
    p_mech = T_m * n_m * RPM_TO_RAD_S
    eta = mm.efficiency(n_m, T_m)
    out = np.where(T_m > 0, p_mech / eta, p_mech * eta)
    return float(out) if out.ndim == 0 else out


def _design_matrix(T, s):
    T = np.asarray(T, dtype=float).ravel()
    s = np.asarray(s, dtype=float).ravel()
    return np.stack([T**i * s**j for i in range(3) for j in range(3)], axis=1)


def fit_power_poly(mm: MotorModel, p: VehicleParams, grid: int | tuple[int, int] = 25) -> MotorModel:
    """Least-squares fit of the 3x3 power polynomial to the efficiency map.

    ``grid`` gives the number of uniformly spaced samples per axis over
    ``[0, n_max] x [-T_max, T_max]``. The fit runs in normalized coordinates
    to keep the design matrix well conditioned.
    """
    n_n, n_t = (grid, grid) if isinstance(grid, int) else grid
    if n_n < 9 or n_t < 9:
        raise FittingError("grid needs at least 9 points per axis")
    n_axis = np.linspace(0.0, mm.n_max, n_n)
    t_axis = np.linspace(-mm.T_max, mm.T_max, n_t)
    N, T = np.meshgrid(n_axis, t_axis, indexing="ij")
    target = motor_power_map(N, T, mm).ravel()

    A = _design_matrix(T / mm.T_max, N / mm.n_max)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise FittingError("rank-deficient design matrix")
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)

    i = np.arange(3)[:, None]
    j = np.arange(3)[None, :]
    rho = coef.reshape(3, 3) / (mm.T_max**i * mm.n_max**j)
    phi = rho * p.speed_factor**j
    penalty = 10.0 * float(np.max(np.abs(target)))
    return replace(mm, rho=rho, phi=phi, penalty_power=penalty)


def fit_residual(mm: MotorModel, grid: int | tuple[int, int] = 25) -> dict:
    """RMS residual of the fitted polynomial against the map on a uniform grid."""
    n_n, n_t = (grid, grid) if isinstance(grid, int) else grid
    N, T = np.meshgrid(
        np.linspace(0.0, mm.n_max, n_n), np.linspace(-mm.T_max, mm.T_max, n_t), indexing="ij"
    )
    ref = motor_power_map(N, T, mm)
    res = poly_power_nT(N, T, mm) - ref
    rms = float(np.sqrt(np.mean(res**2)))
    mean_abs = float(np.mean(np.abs(ref)))
    return {"rms_w": rms, "mean_abs_power_w": mean_abs, "relative_rms": rms / mean_abs}


def poly_power_nT(n_m, T_m, mm: MotorModel):
    """Power polynomial in (motor speed, torque) using ``rho``."""
    if mm.rho is None:
        raise FittingError("motor model has not been fitted")
    n_m = np.asarray(n_m, dtype=float)
    T_m = np.asarray(T_m, dtype=float)
    r = mm.rho
    out = sum(r[i, j] * T_m**i * n_m**j for i in range(3) for j in range(3))
    return float(out) if np.ndim(out) == 0 else out


def motor_power_poly(v: float, gear_index: int, T_m: float, mm: MotorModel, p: VehicleParams) -> float:
    """Power polynomial in (vehicle speed, gear ratio, torque) using ``phi``."""
    if mm.phi is None:
        raise FittingError("motor model has not been fitted")
    phi = mm.phi
    s = v * p.ratio(gear_index)
    t = (1.0, T_m, T_m * T_m)
    sv = (1.0, s, s * s)
    total = 0.0
    for i in range(3):
        for j in range(3):
            total += phi[i, j] * t[i] * sv[j]
    return total


def energy_step(x_k: float, P_m: float, dt: float) -> float:
    if dt <= 0:
        raise DomainError("dt must be positive")
    return x_k + P_m * dt


def demand_force(v: float, a: float, alpha: float, p: VehicleParams) -> float:
    """Wheel force the powertrain has to deliver for one step.

    A vehicle standing still and not launching needs no traction; rolling
    resistance is a static reaction there, not a load.
    """
    if v == 0.0 and a <= 0.0:
        return 0.0
    return required_traction_force(v, a, alpha, p)

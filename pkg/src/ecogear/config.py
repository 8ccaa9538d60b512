"""Run configuration: one JSON document with vehicle, motor, horizon, train and rule_based sections.

Any section may be given inline or as a path to its own JSON file, resolved
relative to the directory of the main config. A motor section without fitted
coefficients is fitted on load.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

from .errors import EcogearError
from .nn import TrainConfig
from .vehicle import MotorModel, VehicleParams, fit_power_poly

DEFAULT_SEED = 42
DEFAULT_FIT_GRID = 25

VEHICLE_KEYS = {"mass", "delta", "f", "g", "Av", "eta_t", "I0", "gears", "r_w"}
# fit-motor output carries its residual report and grid; both are accepted back
MOTOR_KEYS = {"T_max", "n_max", "loss_coeffs", "eta_min", "rho", "phi", "penalty_power", "fit_grid", "residual"}
HORIZON_KEYS = {"N", "dt"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
RULE_KEYS = {"v_up_kmh", "v_down_kmh", "initial_gear"}
SECTIONS = {
    "vehicle": VEHICLE_KEYS,
    "motor": MOTOR_KEYS,
    "horizon": HORIZON_KEYS,
    "train": TRAIN_KEYS,
    "rule_based": RULE_KEYS,
}


class ConfigError(EcogearError, ValueError):
    """Missing or malformed configuration."""


@dataclass(frozen=True)
class RunConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    motor: MotorModel = field(default_factory=MotorModel)
    N: int = 8
    dt: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)
    v_up_kmh: float = 24.0
    v_down_kmh: float = 18.0
    initial_gear: int = 1
    seed: int = DEFAULT_SEED
    fit_grid: int = DEFAULT_FIT_GRID

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("horizon N must be >= 1")
        if not self.dt > 0:
            raise ConfigError("horizon dt must be positive")
        if self.v_down_kmh > self.v_up_kmh:
            raise ConfigError("rule_based v_down_kmh must not exceed v_up_kmh")
        if not 1 <= self.initial_gear <= self.vehicle.n_b:
            raise ConfigError("rule_based initial_gear is not a valid gear")

    def to_dict(self) -> dict:
        train = asdict(self.train)
        train.pop("seed")
        motor = self.motor.to_dict()
        motor["fit_grid"] = self.fit_grid
        return {
            "vehicle": self.vehicle.to_dict(),
            "motor": motor,
            "horizon": {"N": self.N, "dt": self.dt},
            "train": train,
            "rule_based": {
                "v_up_kmh": self.v_up_kmh,
                "v_down_kmh": self.v_down_kmh,
                "initial_gear": self.initial_gear,
            },
            "seed": self.seed,
        }


def _read_json(path: str) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return doc


def _section(doc: dict, name: str, base_dir: str) -> dict:
    sec = doc.get(name, {})
    if isinstance(sec, str):
        sec = _read_json(os.path.join(base_dir, sec))
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object or a path to a JSON file")
    unknown = set(sec) - SECTIONS[name]
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {', '.join(sorted(unknown))}")
    return sec


def build_config(doc: dict, base_dir: str = ".", seed: int | None = None) -> RunConfig:
    unknown = set(doc) - set(SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    secs = {name: _section(doc, name, base_dir) for name in SECTIONS}
    seed = doc.get("seed", DEFAULT_SEED) if seed is None else seed
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    try:
        vehicle = VehicleParams.from_dict(secs["vehicle"])
        motor_doc = secs["motor"]
        fit_grid = int(motor_doc.get("fit_grid", DEFAULT_FIT_GRID))
        motor = MotorModel.from_dict(motor_doc)
        if not motor.fitted or motor.penalty_power is None:
            motor = fit_power_poly(motor, vehicle, fit_grid)
        train = TrainConfig(**secs["train"], seed=seed)
        hz = secs["horizon"]
        rb = secs["rule_based"]
        return RunConfig(
            vehicle=vehicle,
            motor=motor,
            N=int(hz.get("N", 8)),
            dt=float(hz.get("dt", 1.0)),
            train=train,
            v_up_kmh=float(rb.get("v_up_kmh", 24.0)),
            v_down_kmh=float(rb.get("v_down_kmh", 18.0)),
            initial_gear=int(rb.get("initial_gear", 1)),
            seed=seed,
            fit_grid=fit_grid,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | None = None, seed: int | None = None) -> RunConfig:
    """Load a run config; ``None`` gives the built-in defaults."""
    if path is None:
        return build_config({}, seed=seed)
    doc = _read_json(path)
    return build_config(doc, os.path.dirname(os.path.abspath(path)), seed)

"""Driving cycles, NEDC generation and horizon window extraction."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, CycleError

KMH = 1.0 / 3.6

# (duration s, v_start km/h, v_end km/h); gear-change phases hold speed except
# the last urban one, where the vehicle coasts from 35 to 32 km/h.
ECE15_SEGMENTS = (
    (11, 0, 0),
    (4, 0, 15),
    (8, 15, 15),
    (2, 15, 10),
    (3, 10, 0),
    (21, 0, 0),
    (5, 0, 15),
    (2, 15, 15),
    (5, 15, 32),
    (24, 32, 32),
    (8, 32, 10),
    (3, 10, 0),
    (21, 0, 0),
    (5, 0, 15),
    (2, 15, 15),
    (9, 15, 35),
    (2, 35, 35),
    (8, 35, 50),
    (12, 50, 50),
    (8, 50, 35),
    (13, 35, 35),
    (2, 35, 32),
    (7, 32, 10),
    (3, 10, 0),
    (7, 0, 0),
)

EUDC_SEGMENTS = (
    (20, 0, 0),
    (5, 0, 15),
    (2, 15, 15),
    (9, 15, 35),
    (2, 35, 35),
    (8, 35, 50),
    (2, 50, 50),
    (13, 50, 70),
    (50, 70, 70),
    (8, 70, 50),
    (69, 50, 50),
    (13, 50, 70),
    (50, 70, 70),
    (35, 70, 100),
    (30, 100, 100),
    (20, 100, 120),
    (10, 120, 120),
    (16, 120, 80),
    (8, 80, 50),
    (10, 50, 0),
    (20, 0, 0),
)

NEDC_SEGMENTS = ECE15_SEGMENTS * 4 + EUDC_SEGMENTS


@dataclass(frozen=True)
class DrivingCycle:
    t: np.ndarray
    v: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        v = np.array(self.v, dtype=float)
        alpha = np.zeros_like(v) if self.alpha is None else np.array(self.alpha, dtype=float)
        if not (t.ndim == v.ndim == alpha.ndim == 1) or not (len(t) == len(v) == len(alpha)):
            raise CycleError("t, v and alpha must be 1-D sequences of equal length")
        if len(t) >= 2:
            steps = np.diff(t)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=0, atol=1e-9):
                raise CycleError("timestamps must increase with a constant step")
        if np.any(v < 0):
            raise CycleError("speeds must be non-negative")
        for arr in (t, v, alpha):
            arr.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "alpha", alpha)

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        if len(self.t) < 2:
            raise CycleError("cycle has fewer than 2 samples")
        return float(self.t[1] - self.t[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "v", "alpha"])
        for row in zip(self.t, self.v, self.alpha):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


@dataclass(frozen=True)
class Scenario:
    """One horizon: initial energy plus N steps of speed, acceleration and slope."""

    x0: float
    v_ref: np.ndarray
    a_ref: np.ndarray
    alpha_ref: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        v = np.array(self.v_ref, dtype=float)
        a = np.array(self.a_ref, dtype=float)
        al = np.zeros_like(v) if self.alpha_ref is None else np.array(self.alpha_ref, dtype=float)
        if not (v.shape == a.shape == al.shape) or v.ndim != 1:
            raise ContractError("reference sequences must share one length")
        if np.any(v < 0):
            raise ContractError("reference speeds must be non-negative")
        if self.dt <= 0:
            raise ContractError("dt must be positive")
        for arr in (v, a, al):
            arr.setflags(write=False)
        object.__setattr__(self, "v_ref", v)
        object.__setattr__(self, "a_ref", a)
        object.__setattr__(self, "alpha_ref", al)

    @property
    def N(self) -> int:
        return len(self.v_ref)


def load_cycle(source) -> DrivingCycle:
    """Parse a ``t,v[,alpha]`` CSV from a path or text stream.

    The header line may be omitted, in which case the columns are positional.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return load_cycle(fh)

    rows = csv.reader(source)
    try:
        first = [h.strip() for h in next(rows)]
    except StopIteration:
        raise CycleError("empty cycle file", line=1) from None
    try:
        [float(x) for x in first]
    except ValueError:
        header, start = first, 2
        if header[:2] != ["t", "v"] or len(header) > 3 or (len(header) == 3 and header[2] != "alpha"):
            raise CycleError(f"expected header 't,v[,alpha]', got {','.join(header)!r}", line=1) from None
        reader = rows
    else:
        # headerless input: the first row is data
        header, start = ["t", "v", "alpha"][: len(first)], 1
        reader = itertools.chain([first], rows)

    t, v, alpha = [], [], []
    step = None
    for lineno, row in enumerate(reader, start=start):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CycleError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise CycleError(f"non-numeric field in {row!r}", line=lineno) from None
        if not all(math.isfinite(x) for x in vals):
            raise CycleError("non-finite value", line=lineno)
        if vals[1] < 0:
            raise CycleError(f"negative speed {vals[1]}", line=lineno)
        if t:
            d = vals[0] - t[-1]
            if step is None:
                if d <= 0:
                    raise CycleError("timestamps must increase", line=lineno)
                step = d
            elif abs(d - step) > 1e-9:
                raise CycleError(f"non-uniform time step {d} (expected {step})", line=lineno)
        t.append(vals[0])
        v.append(vals[1])
        alpha.append(vals[2] if len(vals) == 3 else 0.0)
    if not t:
        raise CycleError("cycle has no data rows", line=2)
    return DrivingCycle(t=t, v=v, alpha=alpha)


def _segments_to_cycle(segments, dt: float) -> DrivingCycle:
    v = [0.0]
    for duration, v0, v1 in segments:
        n = duration / dt
        if abs(n - round(n)) > 1e-9 or n < 1:
            raise CycleError(f"dt={dt} does not divide segment duration {duration}")
        n = int(round(n))
        for i in range(1, n + 1):
            v.append((v0 + (v1 - v0) * i / n) * KMH)
    t = np.arange(len(v)) * dt
    return DrivingCycle(t=t, v=np.array(v), alpha=np.zeros(len(v)))


def gen_nedc(dt: float = 1.0) -> DrivingCycle:
    """Piecewise-linear NEDC: four ECE-15 urban cycles then one EUDC, 1180 s."""
    if not dt > 0:
        raise CycleError("dt must be positive")
    return _segments_to_cycle(NEDC_SEGMENTS, dt)


def derive_accel(c: DrivingCycle) -> np.ndarray:
    """Forward-difference acceleration; the last sample repeats the one before it."""
    if len(c) < 2:
        raise CycleError("need at least 2 samples to derive acceleration")
    a = np.empty(len(c))
    a[:-1] = np.diff(c.v) / c.dt
    a[-1] = a[-2]
    return a


def windows(c: DrivingCycle, N: int, stride: int = 1, accel: np.ndarray | None = None) -> list[Scenario]:
    """Slide an N-step horizon over the cycle. Every window starts with x0 = 0."""
    if N < 1 or stride < 1:
        raise ContractError("N and stride must be positive")
    if len(c) < N + 1:
        raise ContractError(f"horizon N={N} needs at least {N + 1} samples, cycle has {len(c)}")
    a = derive_accel(c) if accel is None else accel
    dt = c.dt
    return [
        Scenario(x0=0.0, v_ref=c.v[k : k + N], a_ref=a[k : k + N], alpha_ref=c.alpha[k : k + N], dt=dt)
        for k in range(0, len(c) - N, stride)
    ]


def horizon_at(c: DrivingCycle, k: int, N: int, accel: np.ndarray, x0: float = 0.0) -> Scenario:
    """Scenario starting at cycle index ``k``; past the end the last speed is held with a = 0."""
    L = len(c)
    if not 0 <= k < L:
        raise ContractError(f"index {k} outside cycle of length {L}")
    end = min(k + N, L)
    pad = N - (end - k)
    v = np.concatenate([c.v[k:end], np.full(pad, c.v[-1])])
    a = np.concatenate([accel[k:end], np.zeros(pad)])
    al = np.concatenate([c.alpha[k:end], np.full(pad, c.alpha[-1])])
    return Scenario(x0=x0, v_ref=v, a_ref=a, alpha_ref=al, dt=c.dt)

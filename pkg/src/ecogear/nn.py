"""MLP gear optimizer with soft-argmax heads, trained through the energy rollout.

The network maps the reference speeds and accelerations of one horizon to
N rows of gear selectors. Each row is a softmax of K-scaled logits, so the
output satisfies SOS1 by construction and stays differentiable. Training
minimizes the rolled-out horizon energy plus a binarity penalty
``sum b (1 - b)``; every gradient is written out by hand.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cycle import Scenario
from .errors import ContractError, TrainingError
from .ocp import RelaxedPlan, power_table, shoot, shoot_grad
from .vehicle import MotorModel, VehicleParams

PARAMS_FORMAT = "ecogear-mlp"
PARAMS_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    n_hidden_layers: int = 2
    hidden_width: int = 64
    activation: str = "tanh"
    n_heads: int = 8
    head_width: int = 2
    K: float = 10.0

    def __post_init__(self):
        if self.K <= 0:
            raise ContractError("soft-argmax scale K must be positive")
        if self.activation != "tanh":
            raise ContractError("only tanh hidden activations are supported")
        if min(self.n_hidden_layers, self.hidden_width, self.n_heads, self.head_width) < 1:
            raise ContractError("network dimensions must be positive")

    @property
    def input_dim(self) -> int:
        return 2 * self.n_heads

    @property
    def layer_sizes(self) -> list[int]:
        return (
            [self.input_dim]
            + [self.hidden_width] * self.n_hidden_layers
            + [self.n_heads * self.head_width]
        )


@dataclass(frozen=True)
class TrainConfig:
    omega1: float = 1.0
    omega2: float = 1e-4
    eta: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    seed: int = 42
    E_ref: float | None = None
    optimizer: str = "adam"
    penalty_start: float = 0.5
    penalty_ramp: float = 0.25
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if min(self.omega1, self.omega2, self.eta) < 0 or self.eta == 0:
            raise ContractError("loss weights must be non-negative and the learning rate positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be positive")
        if self.E_ref is not None and self.E_ref <= 0:
            raise ContractError("E_ref must be positive")
        if not (0 <= self.penalty_start <= 1 and 0 <= self.penalty_ramp <= 1):
            raise ContractError("penalty_start and penalty_ramp are fractions of the epoch budget")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")

    def penalty_scale(self, epoch: int) -> float:
        """Multiplier on omega2 used for the gradient in ``epoch`` (1-based)."""
        done = (epoch - 1) / self.epochs
        if done < self.penalty_start:
            return 0.0
        if self.penalty_ramp == 0:
            return 1.0
        return min(1.0, (done - self.penalty_start) / self.penalty_ramp)


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feat_mean: np.ndarray
    feat_scale: np.ndarray
    net: NetConfig = field(default_factory=NetConfig)
    E_ref: float | None = None

    def __post_init__(self):
        sizes = self.net.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ContractError("layer count does not match the network config")
        for W, b, n_in, n_out in zip(self.weights, self.biases, sizes[:-1], sizes[1:]):
            if W.shape != (n_in, n_out) or b.shape != (n_out,):
                raise ContractError(f"layer shape {W.shape} does not match ({n_in}, {n_out})")
        if self.feat_mean.shape != (sizes[0],) or self.feat_scale.shape != (sizes[0],):
            raise ContractError("normalization statistics have the wrong length")
        if np.any(self.feat_scale <= 0):
            raise ContractError("normalization scales must be positive")

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def with_arrays(self, arrays) -> "MlpParams":
        return MlpParams(
            weights=[np.array(a) for a in arrays[0::2]],
            biases=[np.array(a) for a in arrays[1::2]],
            feat_mean=self.feat_mean,
            feat_scale=self.feat_scale,
            net=self.net,
            E_ref=self.E_ref,
        )

    def to_json(self) -> str:
        doc = {
            "format": PARAMS_FORMAT,
            "version": PARAMS_VERSION,
            "net": asdict(self.net),
            "layers": [
                {"shape": list(W.shape), "weights": W.ravel().tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
            "normalization": {"mean": self.feat_mean.tolist(), "scale": self.feat_scale.tolist()},
            "E_ref": self.E_ref,
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MlpParams":
        doc = json.loads(text)
        if doc.get("format") != PARAMS_FORMAT or doc.get("version") != PARAMS_VERSION:
            raise ContractError("not an ecogear parameter file of a supported version")
        layers = doc["layers"]
        return cls(
            weights=[np.array(L["weights"], dtype=float).reshape(L["shape"]) for L in layers],
            biases=[np.array(L["bias"], dtype=float) for L in layers],
            feat_mean=np.array(doc["normalization"]["mean"], dtype=float),
            feat_scale=np.array(doc["normalization"]["scale"], dtype=float),
            net=NetConfig(**doc["net"]),
            E_ref=doc.get("E_ref"),
        )


def init_params(net: NetConfig, feat_mean, feat_scale, seed: int) -> MlpParams:
    """Xavier-uniform weights, zero biases.

    The output layer gets an extra 1/K gain so the scaled logits start O(1)
    and the soft-argmax heads are not saturated before training begins.
    """
    rng = np.random.default_rng(seed)
    sizes = net.layer_sizes
    weights, biases = [], []
    for li, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = math.sqrt(6.0 / (n_in + n_out))
        if li == len(sizes) - 2:
            lim /= net.K
        weights.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases, np.asarray(feat_mean, float), np.asarray(feat_scale, float), net)


def raw_features(s: Scenario) -> np.ndarray:
    return np.concatenate([s.v_ref, s.a_ref])


def feature_stats(data) -> tuple[np.ndarray, np.ndarray]:
    """Per-input mean and standard deviation; constant inputs get scale 1."""
    X = np.stack([raw_features(s) for s in data])
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def featurize(s: Scenario, params: MlpParams) -> np.ndarray:
    """Normalized (v_ref, a_ref) of the horizon; x0 is left out since it cannot change the argmin."""
    x = raw_features(s)
    if x.shape != params.feat_mean.shape:
        raise ContractError(f"scenario gives {x.size} features, network expects {params.feat_mean.size}")
    return (x - params.feat_mean) / params.feat_scale


def unfeaturize(x: np.ndarray, params: MlpParams) -> np.ndarray:
    return x * params.feat_scale + params.feat_mean


def soft_argmax(z, K: float):
    """softmax(K z) over the last axis, shifted by the row max to avoid overflow."""
    z = np.asarray(z, dtype=float)
    if np.isnan(z).any():
        raise ContractError("soft_argmax got NaN logits")
    u = K * z
    u = u - u.max(axis=-1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=-1, keepdims=True)


def soft_argmax_backward(b, g, K: float):
    """Vector-Jacobian product of ``soft_argmax``: dL/dz from b and dL/db."""
    return K * b * (g - np.sum(b * g, axis=-1, keepdims=True))


def _forward(X, params: MlpParams):
    acts = [X]
    h = X
    n = len(params.weights)
    for li, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ W + b
        if li < n - 1:
            h = np.tanh(h)
        acts.append(h)
    net = params.net
    Z = acts[-1].reshape(X.shape[0], net.n_heads, net.head_width)
    return soft_argmax(Z, net.K), acts


def forward_batch(X, params: MlpParams) -> np.ndarray:
    """Selector matrices for a batch of feature rows, shape (M, N, n_b)."""
    h = np.atleast_2d(X)
    Ws, bs = params.weights, params.biases
    for W, b in zip(Ws[:-1], bs[:-1]):
        h = np.tanh(h @ W + b)
    z = h @ Ws[-1] + bs[-1]
    net = params.net
    return soft_argmax(z.reshape(-1, net.n_heads, net.head_width), net.K)


def forward(s: Scenario, params: MlpParams) -> RelaxedPlan:
    # softmax rows are SOS1 by construction, so the plan skips re-validation
    return RelaxedPlan.trusted(forward_batch(featurize(s, params), params)[0])


class InferenceNet:
    """Deployment form of a trained network for single-horizon queries.

    Input normalization is folded into the first layer and the soft-argmax
    scale K into the output layer, so one query is a handful of small
    matrix products. Outputs match ``forward`` to rounding error.
    """

    def __init__(self, params: MlpParams):
        net = params.net
        inv = 1.0 / params.feat_scale
        W = [np.array(w) for w in params.weights]
        b = [np.array(x) for x in params.biases]
        b[0] = b[0] - (params.feat_mean * inv) @ W[0]
        W[0] = W[0] * inv[:, None]
        W[-1] = W[-1] * net.K
        b[-1] = b[-1] * net.K
        self.hidden = list(zip(W[:-1], b[:-1]))
        self.W_out, self.b_out = W[-1], b[-1]
        self.shape = (net.n_heads, net.head_width)
        # hidden units are tanh-bounded, so this bounds every logit; below it exp
        # can neither overflow nor underflow and the max shift can be skipped
        logit_bound = float(np.max(np.abs(self.W_out).sum(axis=0) + np.abs(self.b_out)))
        self.shift = not (net.activation == "tanh" and logit_bound < 300.0)

    def plan_matrix(self, s: Scenario) -> np.ndarray:
        h = np.concatenate((s.v_ref, s.a_ref))
        for W, b in self.hidden:
            h = h @ W
            h += b
            np.tanh(h, out=h)
        u = h @ self.W_out
        u += self.b_out
        u = u.reshape(self.shape)
        if self.shift:
            u -= u.max(axis=1, keepdims=True)
        np.exp(u, out=u)
        u /= u.sum(axis=1, keepdims=True)
        return u

    def plan(self, s: Scenario) -> RelaxedPlan:
        return RelaxedPlan.trusted(self.plan_matrix(s))


def binarity(B) -> np.ndarray:
    """Per-sample binarity penalty sum b (1 - b)."""
    B = np.asarray(B)
    return np.sum(B * (1.0 - B), axis=(-2, -1))


def binarity_gap(B) -> float:
    """Mean of 1 - max_i b over all rows."""
    return float(np.mean(1.0 - np.max(B, axis=-1)))


def loss_terms(B, P, x0, dt, cfg: TrainConfig, E_ref: float):
    """Per-sample (energy term, binarity term, x_traj) for a batch."""
    x = shoot(P, B, x0, dt)
    return cfg.omega1 * x[:, -1] / E_ref, cfg.omega2 * binarity(B), x


def loss(plan: RelaxedPlan, s: Scenario, cfg: TrainConfig, p: VehicleParams, mm: MotorModel,
         E_ref: float | None = None) -> float:
    E_ref = E_ref or cfg.E_ref
    if E_ref is None:
        raise ContractError("E_ref is required")
    P = power_table(s, p, mm).power
    e, xi, _ = loss_terms(plan.B[None], P[None], np.array([s.x0]), s.dt, cfg, E_ref)
    return float(e[0] + xi[0])


def loss_grad_B(B, P, x_traj, dt, cfg: TrainConfig, E_ref: float):
    """dL/dB: energy part through the rollout plus the binarity penalty."""
    return cfg.omega1 / E_ref * shoot_grad(P, B, x_traj, dt) + cfg.omega2 * (1.0 - 2.0 * B)


def loss_and_grad(params: MlpParams, X, P, x0, dt, cfg: TrainConfig, E_ref: float):
    """Batch-mean loss and its gradient w.r.t. every weight and bias.

    Returns ``(loss, energy_term, binarity_term, grads)`` with ``grads``
    ordered like ``params.arrays()``.
    """
    M = X.shape[0]
    B, acts = _forward(X, params)
    e, xi, x = loss_terms(B, P, x0, dt, cfg, E_ref)
    gB = loss_grad_B(B, P, x, dt, cfg, E_ref) / M
    d = soft_argmax_backward(B, gB, params.net.K).reshape(M, -1)

    grads = []
    n = len(params.weights)
    for li in range(n - 1, -1, -1):
        grads.append(d.sum(axis=0))
        grads.append(acts[li].T @ d)
        if li > 0:
            d = (d @ params.weights[li].T) * (1.0 - acts[li] ** 2)
    grads.reverse()
    return float(np.mean(e + xi)), float(np.mean(e)), float(np.mean(xi)), grads


def backward(s: Scenario, params: MlpParams, cfg: TrainConfig, p: VehicleParams, mm: MotorModel,
             E_ref: float | None = None) -> list[np.ndarray]:
    """Gradient of the single-scenario loss w.r.t. the network parameters."""
    E_ref = E_ref or cfg.E_ref or params.E_ref
    if E_ref is None:
        raise ContractError("E_ref is required")
    X = featurize(s, params)[None]
    P = power_table(s, p, mm).power[None]
    return loss_and_grad(params, X, P, np.array([s.x0]), s.dt, cfg, E_ref)[3]


def reference_energy(tables) -> float:
    """Largest |x_N| over every window's feasible single-gear plan."""
    best = 0.0
    for t in tables:
        for i in range(t.power.shape[1]):
            if t.feasible[:, i].all():
                best = max(best, abs(float(np.sum(t.power[:, i]))))
    return best if best > 0 else 1.0


@dataclass
class TrainResult:
    params: MlpParams
    history: list[tuple[int, float, float, float]]
    E_ref: float

    def history_csv(self) -> str:
        lines = ["epoch,mean_loss,energy_term,binarity_term"]
        lines += [f"{ep},{l!r},{e!r},{b!r}" for ep, l, e, b in self.history]
        return "\n".join(lines) + "\n"


class _Adam:
    def __init__(self, arrays, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads):
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1**self.t
        b2t = 1.0 - c.beta2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            a -= c.eta * (m / b1t) / (np.sqrt(v / b2t) + c.eps)


class _SGD:
    def __init__(self, arrays, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, arrays, grads):
        for a, g in zip(arrays, grads):
            a -= self.cfg.eta * g


def train(data, p: VehicleParams, mm: MotorModel, cfg: TrainConfig = TrainConfig(),
          net: NetConfig | None = None, progress=None) -> TrainResult:
    """Mini-batch training over horizon scenarios; deterministic for a given ``cfg.seed``."""
    data = list(data)
    if not data:
        raise ContractError("training set is empty")
    N = data[0].N
    net = net or NetConfig(n_heads=N, head_width=p.n_b)
    if net.n_heads != N or net.head_width != p.n_b:
        raise ContractError("network heads must match horizon length and gear count")
    dt = data[0].dt

    tables = [power_table(s, p, mm) for s in data]
    P = np.stack([t.power for t in tables])
    x0 = np.array([s.x0 for s in data])
    E_ref = cfg.E_ref or reference_energy(tables)

    mean, scale = feature_stats(data)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(net, mean, scale, int(rng.integers(2**32)))
    params.E_ref = E_ref
    X = np.stack([featurize(s, params) for s in data])

    arrays = params.arrays()
    opt = _Adam(arrays, cfg) if cfg.optimizer == "adam" else _SGD(arrays, cfg)
    history = []
    M = len(data)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(M)
        step_cfg = replace(cfg, omega2=cfg.omega2 * cfg.penalty_scale(epoch))
        for start in range(0, M, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch_loss, *_, grads = loss_and_grad(params, X[idx], P[idx], x0[idx], dt, step_cfg, E_ref)
            if not math.isfinite(batch_loss):
                raise TrainingError("batch loss is not finite", epoch)
            opt.step(arrays, grads)
        B = forward_batch(X, params)
        e, xi, _ = loss_terms(B, P, x0, dt, cfg, E_ref)
        row = (epoch, float(np.mean(e + xi)), float(np.mean(e)), float(np.mean(xi)))
        if not all(math.isfinite(v) for v in row[1:]) or not all(np.isfinite(a).all() for a in arrays):
            raise TrainingError("loss is not finite", epoch)
        history.append(row)
        if progress is not None:
            progress(row)
    return TrainResult(params=params, history=history, E_ref=E_ref)

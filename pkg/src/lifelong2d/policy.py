"""Behavior-cloning policy: MLP trunk with a Gaussian-mixture action head.

The network consumes a flattened window of the last H frames (vision
embedding, language embedding, proprioception per frame) and emits mixture
logits, per-mode means, and per-mode stds for the 3-dim action. Training
minimizes the weighted mean negative log-likelihood of demonstrated actions.
Forward, backward, and the AdamW update are written out by hand in numpy so
gradients are exact, deterministic, and maskable per weight entry (needed by
the mask-partitioning strategy).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError
from .seeding import rng_from

ACTION_DIM = 3
SIGMA_MIN = 1e-3

PARAM_KEYS = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class PolicyConfig:
    d_v: int = 48
    d_l: int = 32
    window: int = 10
    hidden: int = 128
    modes: int = 5
    sigma_min: float = SIGMA_MIN
    # actions are divided by this for training/sampling so the head works in
    # O(1) units; world actions are (dx, dy, toggle) with |dx|,|dy| <= 0.05
    action_scale: tuple[float, float, float] = (0.05, 0.05, 1.0)
    # input gain: ReLU nets are positively homogeneous, so scaling the input
    # scales the hidden activations, and with a per-coordinate optimizer the
    # head's output moves `feature_gain` times further per update step; at
    # the fixed small learning rate this is what lets the mixture logits
    # become context-dependent (and local adaptation act) within the epoch
    # budget
    feature_gain: float = 16.0

    @property
    def frame_dim(self) -> int:
        return self.d_v + self.d_l + 3

    @property
    def d_in(self) -> int:
        return self.window * self.frame_dim

    @property
    def head_dim(self) -> int:
        return self.modes * (1 + 2 * ACTION_DIM)

    def to_dict(self) -> dict:
        return {
            "d_v": self.d_v,
            "d_l": self.d_l,
            "window": self.window,
            "hidden": self.hidden,
            "modes": self.modes,
            "sigma_min": self.sigma_min,
            "action_scale": list(self.action_scale),
            "feature_gain": self.feature_gain,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PolicyConfig":
        return cls(
            d_v=int(doc["d_v"]),
            d_l=int(doc["d_l"]),
            window=int(doc["window"]),
            hidden=int(doc["hidden"]),
            modes=int(doc["modes"]),
            sigma_min=float(doc["sigma_min"]),
            action_scale=tuple(float(s) for s in doc.get("action_scale", (0.05, 0.05, 1.0))),
            feature_gain=float(doc.get("feature_gain", 16.0)),
        )


@dataclass
class PolicyParams:
    """All trainable arrays, keyed w1/b1/w2/b2/w3/b3."""

    cfg: PolicyConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "PolicyParams":
        return PolicyParams(cfg=self.cfg, arrays={k: v.copy() for k, v in self.arrays.items()})


def init_params(cfg: PolicyConfig, seed: int) -> PolicyParams:
    """He-initialized trunk, near-zero head so the initial policy is gentle.

    The std pre-activations start at -2 (sigma ~ 0.13 in normalized action
    units) so early rollouts are cautious and stds start near useful values.
    """
    rng = rng_from(seed, "policy-init")
    h, d, k = cfg.hidden, cfg.d_in, cfg.modes
    b3 = np.zeros(cfg.head_dim)
    b3[k + k * ACTION_DIM :] = -2.0
    # the head init shrinks with the input gain so initial outputs stay O(0.1)
    arrays = {
        "w1": rng.standard_normal((h, d)) * np.sqrt(2.0 / d),
        "b1": np.zeros(h),
        "w2": rng.standard_normal((h, h)) * np.sqrt(2.0 / h),
        "b2": np.zeros(h),
        "w3": rng.standard_normal((cfg.head_dim, h)) * (0.08 / cfg.feature_gain),
        "b3": b3,
    }
    return PolicyParams(cfg=cfg, arrays=arrays)


@dataclass
class GMMParams:
    """Mixture parameters for one input window."""

    weights: np.ndarray   # (K,), sums to 1
    means: np.ndarray     # (K, 3)
    stds: np.ndarray      # (K, 3), all >= sigma_min


def _softplus(x: np.ndarray) -> np.ndarray:
    # stable: log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.exp(x - m).sum(axis=axis))


class _Cache:
    __slots__ = ("x", "z1", "a1", "z2", "a2", "logits", "mu", "sp", "sigma")


def _forward_batch(params: PolicyParams, x: np.ndarray) -> _Cache:
    arr = params.arrays
    k = params.cfg.modes
    c = _Cache()
    c.x = params.cfg.feature_gain * x
    c.z1 = c.x @ arr["w1"].T + arr["b1"]
    c.a1 = np.maximum(c.z1, 0.0)
    c.z2 = c.a1 @ arr["w2"].T + arr["b2"]
    c.a2 = np.maximum(c.z2, 0.0)
    out = c.a2 @ arr["w3"].T + arr["b3"]
    c.logits = out[:, :k]
    c.mu = out[:, k : k + k * ACTION_DIM].reshape(-1, k, ACTION_DIM)
    c.sp = out[:, k + k * ACTION_DIM :].reshape(-1, k, ACTION_DIM)
    c.sigma = _softplus(c.sp) + params.cfg.sigma_min
    return c


def forward(params: PolicyParams, window: np.ndarray) -> GMMParams:
    """Mixture parameters for one flattened window."""
    x = np.asarray(window, dtype=np.float64)
    if x.shape != (params.cfg.d_in,):
        raise InputError(f"window must have shape ({params.cfg.d_in},), got {x.shape}")
    c = _forward_batch(params, x.reshape(1, -1))
    logits = c.logits[0]
    w = np.exp(logits - _logsumexp(logits))
    return GMMParams(weights=w, means=c.mu[0].copy(), stds=c.sigma[0].copy())


def nll(gmm: GMMParams, action: np.ndarray) -> float:
    """Negative log density of `action` under the mixture."""
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (ACTION_DIM,):
        raise InputError(f"action must have shape ({ACTION_DIM},), got {a.shape}")
    logw = np.log(gmm.weights)
    comp = (
        -0.5 * np.log(2.0 * np.pi) * ACTION_DIM
        - np.log(gmm.stds).sum(axis=1)
        - 0.5 * (((a - gmm.means) / gmm.stds) ** 2).sum(axis=1)
    )
    return float(-_logsumexp(logw + comp))


def sample_action(gmm: GMMParams, rng: np.random.Generator) -> np.ndarray:
    """Draw one action: pick a mode by weight, then a Gaussian sample."""
    u = float(rng.random())
    k = int(np.searchsorted(np.cumsum(gmm.weights), u))
    k = min(k, gmm.weights.shape[0] - 1)
    return gmm.means[k] + gmm.stds[k] * rng.standard_normal(ACTION_DIM)


def backward(
    params: PolicyParams,
    windows: np.ndarray,
    actions: np.ndarray,
    sample_weights: np.ndarray | None = None,
    loss_scale: float = 1.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted mean NLL over a batch and its exact parameter gradients.

    The loss is loss_scale * sum_i w_i * nll_i / sum_i w_i; uniform weights
    reduce it to the plain batch mean.
    """
    x = np.asarray(windows, dtype=np.float64)
    a = np.asarray(actions, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.cfg.d_in:
        raise InputError(f"windows must have shape (n, {params.cfg.d_in}), got {x.shape}")
    if a.shape != (x.shape[0], ACTION_DIM):
        raise InputError("actions do not match the window batch")
    if x.shape[0] == 0:
        raise InputError("empty batch")
    if sample_weights is None:
        w = np.ones(x.shape[0])
    else:
        w = np.asarray(sample_weights, dtype=np.float64)
        if w.shape != (x.shape[0],) or np.any(w < 0):
            raise InputError("sample weights must be non-negative, one per sample")
    wsum = float(w.sum())
    if wsum <= 0.0:
        raise InputError("sample weights sum to zero")

    c = _forward_batch(params, x)
    k = params.cfg.modes
    logw = c.logits - _logsumexp(c.logits, axis=1)[:, None]                 # (B, K)
    diff = a[:, None, :] - c.mu                                             # (B, K, 3)
    comp = (
        -0.5 * np.log(2.0 * np.pi) * ACTION_DIM
        - np.log(c.sigma).sum(axis=2)
        - 0.5 * ((diff / c.sigma) ** 2).sum(axis=2)
    )                                                                       # (B, K)
    scores = logw + comp
    lse = _logsumexp(scores, axis=1)                                        # (B,)
    nlls = -lse
    loss = loss_scale * float((w * nlls).sum()) / wsum

    coef = (loss_scale * w / wsum)[:, None]                                 # (B, 1)
    resp = np.exp(scores - lse[:, None])                                    # responsibilities
    mixw = np.exp(logw)
    d_logits = coef * (mixw - resp)
    d_mu = -(coef[:, :, None] * resp[:, :, None]) * diff / c.sigma**2
    d_sigma = (coef[:, :, None] * resp[:, :, None]) * (1.0 / c.sigma - diff**2 / c.sigma**3)
    d_sp = d_sigma * _sigmoid(c.sp)

    d_out = np.concatenate(
        [d_logits, d_mu.reshape(-1, k * ACTION_DIM), d_sp.reshape(-1, k * ACTION_DIM)], axis=1
    )
    arr = params.arrays
    grads: dict[str, np.ndarray] = {}
    grads["w3"] = d_out.T @ c.a2
    grads["b3"] = d_out.sum(axis=0)
    d_a2 = d_out @ arr["w3"]
    d_z2 = d_a2 * (c.z2 > 0)
    grads["w2"] = d_z2.T @ c.a1
    grads["b2"] = d_z2.sum(axis=0)
    d_a1 = d_z2 @ arr["w2"]
    d_z1 = d_a1 * (c.z1 > 0)
    grads["w1"] = d_z1.T @ c.x
    grads["b1"] = d_z1.sum(axis=0)
    return loss, grads


# ---------------------------------------------------------------------------
# Optimizer


@dataclass
class OptimizerState:
    """AdamW first/second moments plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: PolicyParams) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.arrays.items()},
            v={k: np.zeros_like(a) for k, a in params.arrays.items()},
            step=0,
        )


def grad_global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float = 100.0) -> float:
    """Scale all gradients in place so the global L2 norm is <= max_norm."""
    total = grad_global_norm(grads)
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def adamw_step(
    params: PolicyParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float = 1e-4,
    betas: tuple[float, float] = (0.9, 0.999),
    weight_decay: float = 1e-4,
    eps: float = 1e-8,
    trainable: dict[str, np.ndarray] | None = None,
) -> None:
    """One decoupled-weight-decay Adam update, in place.

    `trainable`, when given, is a boolean mask per array; entries outside the
    mask receive neither the gradient step nor the decay (they stay frozen).
    """
    b1, b2 = betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for key, p in params.arrays.items():
        g = grads[key]
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = lr * ((m / bc1) / (np.sqrt(v / bc2) + eps) + weight_decay * p)
        if trainable is not None:
            update = np.where(trainable[key], update, 0.0)
        p -= update


# ---------------------------------------------------------------------------
# Frame windows


def demo_rows(demo) -> np.ndarray:
    """Per-frame input rows (vision | language | proprio) for a demonstration."""
    l = len(demo)
    return np.concatenate(
        [demo.vision, np.tile(demo.lang, (l, 1)), demo.proprio], axis=1
    )


def window_matrix(rows: np.ndarray, window: int) -> np.ndarray:
    """All H-frame windows of a row matrix, left-padded with the first frame.

    Row t of the result is rows[max(0, t-H+1) .. t] flattened oldest-first.
    """
    r = np.asarray(rows, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] == 0:
        raise InputError("rows must be a non-empty 2-D matrix")
    if window < 1:
        raise InputError("window must be >= 1")
    l = r.shape[0]
    idx = np.arange(l)[:, None] - (window - 1 - np.arange(window))[None, :]
    return r[np.clip(idx, 0, None)].reshape(l, window * r.shape[1])


class RollingWindow:
    """Streaming window builder for rollouts (left-pads with the first row)."""

    def __init__(self, window: int, frame_dim: int):
        self.window = int(window)
        self.frame_dim = int(frame_dim)
        self._rows: np.ndarray | None = None

    def push(self, row: np.ndarray) -> np.ndarray:
        r = np.asarray(row, dtype=np.float64)
        if r.shape != (self.frame_dim,):
            raise InputError(f"row must have shape ({self.frame_dim},), got {r.shape}")
        if self._rows is None:
            self._rows = np.tile(r, (self.window, 1))
        else:
            self._rows[:-1] = self._rows[1:]
            self._rows[-1] = r
        return self._rows.ravel().copy()

    def reset(self) -> None:
        self._rows = None


# ---------------------------------------------------------------------------
# Checkpoints

_MAGIC = b"LL2D"
_VERSION = 1


def save_params(params: PolicyParams, path: str, meta: dict | None = None) -> None:
    """Binary checkpoint (little-endian float64) plus a JSON sidecar.

    The byte stream is a pure function of the parameter values, so identical
    training runs produce identical checkpoint files.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(params.arrays)))
        for key in PARAM_KEYS:
            a = np.ascontiguousarray(params.arrays[key], dtype=np.float64)
            name = key.encode("ascii")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", a.ndim))
            for dim in a.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(a.tobytes())
    sidecar = {"config": params.cfg.to_dict(), "meta": meta or {}}
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path: str) -> tuple[PolicyParams, dict]:
    """Load a checkpoint written by save_params; returns (params, meta)."""
    try:
        with open(path + ".json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        cfg = PolicyConfig.from_dict(sidecar["config"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad checkpoint sidecar for {path}: {exc}") from exc

    arrays: dict[str, np.ndarray] = {}
    try:
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise FormatError(f"{path} is not a policy checkpoint")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != _VERSION:
                raise FormatError(f"unsupported checkpoint version {version}")
            (count,) = struct.unpack("<I", fh.read(4))
            for _ in range(count):
                (nlen,) = struct.unpack("<H", fh.read(2))
                name = fh.read(nlen).decode("ascii")
                (ndim,) = struct.unpack("<B", fh.read(1))
                shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
                nbytes = int(np.prod(shape, dtype=np.int64)) * 8
                buf = fh.read(nbytes)
                if len(buf) != nbytes:
                    raise FormatError(f"{path} is truncated")
                arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    except (OSError, struct.error) as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if set(arrays) != set(PARAM_KEYS):
        raise FormatError(f"checkpoint {path} has unexpected parameter arrays")
    return PolicyParams(cfg=cfg, arrays=arrays), sidecar.get("meta", {})

"""Sequential multi-task training strategies over one shared policy.

Strategies: naive fine-tuning, experience replay (per-batch mixing with the
episodic memory), gradient projection against a replay reference gradient,
a quadratic penalty anchored at previous-task solutions with a diagonal
curvature estimate, and mask-partitioning (prune free weights after each
task, freeze what the task keeps, give the remainder to later tasks).

All strategies share one loop: stream demos into memory, train with AdamW on
windowed behavior cloning for a fixed number of epochs, probe success every
few epochs and keep the best checkpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import taskworld
from .errors import CapacityExhausted, ConfigurationError, InputError
from .memory import EpisodicMemory, demo_windows, replay_batch
from .policy import (
    OptimizerState,
    PolicyParams,
    adamw_step,
    backward,
    clip_grad_norm,
)
from .rollout import evaluate_task
from .seeding import rng_from
from .taskworld import Demonstration, TaskSpec

STRATEGIES = ("naive", "er", "agem", "ewc", "packnet")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 1e-4
    grad_clip: float = 100.0
    loss_scale: float = 1.0
    eval_every: int = 10           # probe cadence in epochs (0 disables probes)
    probe_episodes: int = 20
    max_episode_len: int = taskworld.MAX_EPISODE_LEN
    toggle_boost: float = 5.0      # loss weight on gripper-toggle frames; they are
                                   # ~4% of frames and the mixture ignores them
                                   # otherwise within the short epoch budget

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if self.lr <= 0 or self.grad_clip <= 0:
            raise ConfigurationError("lr and grad_clip must be positive")
        if self.eval_every < 0 or self.probe_episodes < 1:
            raise ConfigurationError("eval_every must be >= 0, probe_episodes >= 1")
        if self.toggle_boost < 1.0:
            raise ConfigurationError("toggle_boost must be >= 1")


def frame_weights(actions: np.ndarray, toggle_boost: float) -> np.ndarray:
    """Per-frame loss weights: toggle_boost on gripper-toggle frames, else 1."""
    return np.where(np.asarray(actions)[:, 2] >= 0.5, float(toggle_boost), 1.0)


@dataclass
class StrategyConfig:
    kind: str = "naive"
    er_mix: float = 0.5                 # fraction of each batch drawn from memory
    ewc_lambda: float = 100.0
    ewc_fisher_batches: int = 16
    packnet_prune_frac: float = 0.75
    packnet_posttrain_epochs: int = 10

    def validate(self) -> None:
        if self.kind not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.kind!r}, expected one of {STRATEGIES}")
        if not 0.0 <= self.er_mix <= 1.0:
            raise ConfigurationError("er_mix must be in [0, 1]")
        if self.ewc_lambda < 0 or self.ewc_fisher_batches < 1:
            raise ConfigurationError("bad curvature-penalty settings")
        if not 0.0 <= self.packnet_prune_frac <= 1.0:
            raise ConfigurationError("packnet_prune_frac must be in [0, 1]")
        if self.packnet_posttrain_epochs < 0:
            raise ConfigurationError("packnet_posttrain_epochs must be >= 0")


@dataclass
class EwcAnchor:
    params: dict[str, np.ndarray]
    fisher: dict[str, np.ndarray]


@dataclass
class StrategyState:
    """Mutable cross-task state accumulated by a strategy."""

    anchors: list[EwcAnchor] = field(default_factory=list)
    owner: dict[str, np.ndarray] | None = None   # packnet: per-entry owning task, -1 free
    tasks_seen: int = 0
    exhausted_at: int | None = None


def init_strategy_state(cfg: StrategyConfig, params: PolicyParams) -> StrategyState:
    cfg.validate()
    state = StrategyState()
    if cfg.kind == "packnet":
        state.owner = {k: np.full(a.shape, -1, dtype=np.int32) for k, a in params.arrays.items()}
    return state


# ---------------------------------------------------------------------------
# Strategy primitives


def ewc_penalty(
    params: PolicyParams,
    anchors: list[EwcAnchor],
    lam: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Quadratic anchor penalty (lam/2) * sum F (theta - theta*)^2 and its gradient."""
    pen = 0.0
    grads = {k: np.zeros_like(a) for k, a in params.arrays.items()}
    for anchor in anchors:
        for k, p in params.arrays.items():
            diff = p - anchor.params[k]
            pen += 0.5 * lam * float((anchor.fisher[k] * diff * diff).sum())
            grads[k] += lam * anchor.fisher[k] * diff
    return pen, grads


def estimate_fisher(
    params: PolicyParams,
    xs: np.ndarray,
    acts: np.ndarray,
    n_batches: int,
    batch_size: int,
    rng: np.random.Generator,
    loss_scale: float = 1.0,
    toggle_boost: float = 1.0,
) -> dict[str, np.ndarray]:
    """Diagonal curvature proxy: mean of squared batch gradients."""
    if xs.shape[0] == 0:
        raise InputError("cannot estimate curvature from an empty dataset")
    fisher = {k: np.zeros_like(a) for k, a in params.arrays.items()}
    n = xs.shape[0]
    for _ in range(n_batches):
        idx = rng.integers(n, size=min(batch_size, n))
        _, grads = backward(
            params, xs[idx], acts[idx],
            sample_weights=frame_weights(acts[idx], toggle_boost),
            loss_scale=loss_scale,
        )
        for k in fisher:
            fisher[k] += grads[k] ** 2
    for k in fisher:
        fisher[k] /= n_batches
    return fisher


def agem_project(
    grads: dict[str, np.ndarray],
    ref_grads: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """Project grads so the inner product with the reference is non-negative.

    If <g, g_ref> >= 0 the gradient passes through unchanged; otherwise the
    component along g_ref is removed: g - (<g, g_ref>/<g_ref, g_ref>) g_ref.
    """
    dot = sum(float((grads[k] * ref_grads[k]).sum()) for k in grads)
    if dot >= 0.0:
        return grads
    ref_sq = sum(float((ref_grads[k] ** 2).sum()) for k in ref_grads)
    if ref_sq <= 1e-300:
        return grads
    coef = dot / ref_sq
    return {k: grads[k] - coef * ref_grads[k] for k in grads}


# PackNet-style mask partitioning


def packnet_free_counts(owner: dict[str, np.ndarray]) -> dict[str, int]:
    return {k: int((o < 0).sum()) for k, o in owner.items()}


def packnet_check_capacity(owner: dict[str, np.ndarray], task_index: int) -> None:
    """Raise CapacityExhausted if any array has no free entries left."""
    empty = [k for k, n in packnet_free_counts(owner).items() if n == 0]
    if empty:
        raise CapacityExhausted(
            f"no free weights left in {empty} when starting task {task_index}"
        )


def packnet_commit(
    params: PolicyParams,
    owner: dict[str, np.ndarray],
    task_index: int,
    prune_frac: float,
) -> None:
    """Prune the free weights of each array and assign survivors to `task_index`.

    Per array: the floor(prune_frac * n_free) smallest-magnitude free entries
    are zeroed and stay free; the remaining free entries become owned by
    task_index and are frozen from now on. In place.
    """
    for k, p in params.arrays.items():
        own = owner[k]
        flat_p = p.reshape(-1)
        flat_o = own.reshape(-1)
        free_idx = np.flatnonzero(flat_o < 0)
        if free_idx.size == 0:
            continue
        n_prune = int(math.floor(prune_frac * free_idx.size))
        order = np.argsort(np.abs(flat_p[free_idx]), kind="stable")
        pruned = free_idx[order[:n_prune]]
        kept = free_idx[order[n_prune:]]
        flat_p[pruned] = 0.0
        flat_o[kept] = task_index


def masked_params(
    params: PolicyParams,
    owner: dict[str, np.ndarray],
    task_index: int,
) -> PolicyParams:
    """Inference-time network for `task_index`: weights owned by tasks > task_index
    or still free are zeroed, reproducing the network as it stood right after
    that task's commit."""
    out = params.copy()
    for k, p in out.arrays.items():
        keep = (owner[k] >= 0) & (owner[k] <= task_index)
        p[~keep] = 0.0
    return out


# ---------------------------------------------------------------------------
# Task training


def _epoch_batches(
    n: int, chunk: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Shuffled index chunks covering the dataset once; a lone short chunk is
    kept, otherwise trailing remainders are dropped."""
    perm = rng.permutation(n)
    if n <= chunk:
        return [perm]
    n_chunks = n // chunk
    return [perm[i * chunk : (i + 1) * chunk] for i in range(n_chunks)]


def train_task(
    params: PolicyParams,
    demos: list[Demonstration],
    mem: EpisodicMemory,
    task: TaskSpec,
    strategy: StrategyConfig,
    state: StrategyState,
    train_cfg: TrainConfig,
    vision_enc,
    lang_enc,
    seed: int,
    log=None,
) -> PolicyParams:
    """Train the policy on one task's demonstrations under a strategy.

    Streams the demos into the episodic memory, runs the epoch loop, probes
    task success every `eval_every` epochs keeping the best checkpoint, and
    applies the strategy's end-of-task bookkeeping (curvature anchor or mask
    commit + post-train). Returns the selected parameters; inputs are not
    mutated. Raises CapacityExhausted when mask partitioning has no free
    weights left for this task.
    """
    strategy.validate()
    train_cfg.validate()
    if not demos:
        raise InputError("train_task needs at least one demonstration")
    emit = log if log is not None else (lambda event: None)
    task_pos = state.tasks_seen

    if strategy.kind == "packnet":
        try:
            packnet_check_capacity(state.owner, task_pos)
        except CapacityExhausted:
            if state.exhausted_at is None:
                state.exhausted_at = task_pos
            raise

    for demo in demos:
        mem.admit(demo)

    cfg = params.cfg
    xs, acts = demo_windows(demos, cfg.window)
    scale = np.asarray(cfg.action_scale)
    acts = acts / scale

    params = params.copy()
    opt = OptimizerState.for_params(params)
    batch_rng = rng_from(seed, "batches", task_pos)
    replay_rng = rng_from(seed, "replay", task_pos)
    trainable = None
    if strategy.kind == "packnet":
        trainable = {k: o < 0 for k, o in state.owner.items()}

    k_replay = int(round(strategy.er_mix * train_cfg.batch_size))
    chunk = train_cfg.batch_size
    if strategy.kind == "er" and len(mem) > 0:
        chunk = max(1, train_cfg.batch_size - k_replay)

    best: PolicyParams | None = None
    best_rate = -1.0
    for epoch in range(train_cfg.epochs):
        losses = []
        for idx in _epoch_batches(xs.shape[0], chunk, batch_rng):
            bx, ba = xs[idx], acts[idx]
            if strategy.kind == "er" and len(mem) > 0:
                rx, ra = replay_batch(mem, k_replay, cfg.window, replay_rng)
                bx = np.concatenate([bx, rx])
                ba = np.concatenate([ba, ra / scale])
            loss, grads = backward(
                params, bx, ba,
                sample_weights=frame_weights(ba, train_cfg.toggle_boost),
                loss_scale=train_cfg.loss_scale,
            )

            if strategy.kind == "agem" and len(mem) > 0:
                rx, ra = replay_batch(mem, train_cfg.batch_size, cfg.window, replay_rng)
                ra = ra / scale
                _, ref = backward(
                    params, rx, ra,
                    sample_weights=frame_weights(ra, train_cfg.toggle_boost),
                    loss_scale=train_cfg.loss_scale,
                )
                grads = agem_project(grads, ref)
            elif strategy.kind == "ewc" and state.anchors:
                pen, pen_grads = ewc_penalty(params, state.anchors, strategy.ewc_lambda)
                loss += pen
                for key in grads:
                    grads[key] += pen_grads[key]
            elif strategy.kind == "packnet":
                for key in grads:
                    grads[key] *= trainable[key]

            clip_grad_norm(grads, train_cfg.grad_clip)
            adamw_step(
                params, grads, opt,
                lr=train_cfg.lr, betas=train_cfg.betas,
                weight_decay=train_cfg.weight_decay, trainable=trainable,
            )
            losses.append(loss)

        event = {
            "event": "epoch",
            "task": task.eval_task_id,
            "task_pos": task_pos,
            "epoch": epoch + 1,
            "loss": float(np.mean(losses)),
        }
        if train_cfg.eval_every and (epoch + 1) % train_cfg.eval_every == 0:
            rate, _ = evaluate_task(
                params, task, vision_enc, lang_enc,
                train_cfg.probe_episodes, rng_from(seed, "probe", task_pos, epoch),
                train_cfg.max_episode_len,
            )
            event["probe"] = rate
            if rate >= best_rate:  # ties -> later checkpoint (more training)
                best_rate = rate
                best = params.copy()
        emit(event)

    if best is not None:
        params = best

    if strategy.kind == "packnet":
        packnet_commit(params, state.owner, task_pos, strategy.packnet_prune_frac)
        post_mask = {k: o == task_pos for k, o in state.owner.items()}
        post_opt = OptimizerState.for_params(params)
        post_rng = rng_from(seed, "posttrain", task_pos)
        for epoch in range(strategy.packnet_posttrain_epochs):
            losses = []
            for idx in _epoch_batches(xs.shape[0], train_cfg.batch_size, post_rng):
                loss, grads = backward(
                    params, xs[idx], acts[idx],
                    sample_weights=frame_weights(acts[idx], train_cfg.toggle_boost),
                    loss_scale=train_cfg.loss_scale,
                )
                for key in grads:
                    grads[key] *= post_mask[key]
                clip_grad_norm(grads, train_cfg.grad_clip)
                adamw_step(
                    params, grads, post_opt,
                    lr=train_cfg.lr, betas=train_cfg.betas,
                    weight_decay=train_cfg.weight_decay, trainable=post_mask,
                )
                losses.append(loss)
            emit({
                "event": "posttrain_epoch",
                "task": task.eval_task_id,
                "task_pos": task_pos,
                "epoch": epoch + 1,
                "loss": float(np.mean(losses)),
            })
    elif strategy.kind == "ewc":
        fisher = estimate_fisher(
            params, xs, acts,
            strategy.ewc_fisher_batches, train_cfg.batch_size,
            rng_from(seed, "fisher", task_pos), train_cfg.loss_scale,
            train_cfg.toggle_boost,
        )
        state.anchors.append(
            EwcAnchor(params={k: a.copy() for k, a in params.arrays.items()}, fisher=fisher)
        )

    state.tasks_seen += 1
    return params


def evaluate_matrix_row(
    params: PolicyParams,
    tasks: list[TaskSpec],
    vision_enc,
    lang_enc,
    episodes: int,
    seed: int,
    max_len: int,
    owner: dict[str, np.ndarray] | None = None,
    on_episode=None,
) -> list[float]:
    """Success rate on each listed task with the current parameters.

    With `owner` given (mask partitioning), task j is evaluated through its
    masked network — the oracle-task-id inference mode. `on_episode` receives
    (task_index, episode_index, success).
    """
    rates: list[float] = []
    for j, task in enumerate(tasks):
        p = masked_params(params, owner, j) if owner is not None else params
        rng = rng_from(seed, "eval", j)
        rate, outcomes = evaluate_task(p, task, vision_enc, lang_enc, episodes, rng, max_len)
        if on_episode is not None:
            for e, ok in enumerate(outcomes):
                on_episode(j, e, ok)
        rates.append(rate)
    return rates

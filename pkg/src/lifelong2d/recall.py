"""Test-time retrieval and weighted local adaptation.

When a trained policy faces a task again later, it (1) runs a short quiz of
rollouts, (2) retrieves the closest stored demonstrations by a weighted
combination of scene-embedding and instruction-embedding distance, (3) marks
the demo segments where failed quiz rollouts diverged from each retrieved
demo, and (4) fine-tunes locally on the retrieved demos with those segments
upweighted, before the final evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import taskworld
from .errors import InputError, MemoryEmpty
from .lifelong import TrainConfig, _epoch_batches, frame_weights
from .memory import EpisodicMemory
from .policy import (
    OptimizerState,
    PolicyParams,
    adamw_step,
    backward,
    clip_grad_norm,
    demo_rows,
    window_matrix,
)
from .rollout import RolloutRecord, evaluate_task, run_episode
from .seeding import rng_from
from .taskworld import Demonstration, TaskSpec


@dataclass
class RetrievalQuery:
    """Scene + instruction embeddings with distance weights and keep fraction."""

    scene: np.ndarray        # (d_v,)
    lang: np.ndarray         # (d_l,)
    alpha_v: float = 1.0
    alpha_l: float = 0.5
    frac: float = 0.10

    def validate(self) -> None:
        if self.alpha_v < 0 or self.alpha_l < 0 or self.alpha_v + self.alpha_l <= 0:
            raise InputError("distance weights must be non-negative and not both zero")
        if not 0.0 < self.frac <= 1.0:
            raise InputError("retrieval fraction must be in (0, 1]")


def retrieval_distances(mem: EpisodicMemory, query: RetrievalQuery) -> np.ndarray:
    """Weighted distance alpha_v*||scene - demo scene|| + alpha_l*||lang - demo lang||
    for every stored demo (demo scene embedding = its first frame)."""
    query.validate()
    if len(mem) == 0:
        raise MemoryEmpty("cannot retrieve from an empty memory")
    scene = np.asarray(query.scene, dtype=np.float64)
    lang = np.asarray(query.lang, dtype=np.float64)
    out = np.empty(len(mem))
    for i, demo in enumerate(mem.demos):
        if demo.vision.shape[1] != scene.shape[0] or demo.lang.shape[0] != lang.shape[0]:
            raise InputError("query embedding dims do not match stored demos")
        d_v = float(np.linalg.norm(demo.vision[0] - scene))
        d_l = float(np.linalg.norm(demo.lang - lang))
        out[i] = query.alpha_v * d_v + query.alpha_l * d_l
    return out


def retrieve(mem: EpisodicMemory, query: RetrievalQuery) -> tuple[list[int], np.ndarray]:
    """Indices of the ceil(frac * |mem|) nearest demos, nearest first.

    Ties break toward earlier insertion (stable sort), so results are
    reproducible across reruns.
    """
    dists = retrieval_distances(mem, query)
    order = np.argsort(dists, kind="stable")
    count = int(math.ceil(query.frac * len(mem)))
    picked = [int(i) for i in order[:count]]
    return picked, dists[picked]


# ---------------------------------------------------------------------------
# Divergence segments and frame weights


def frame_distances(demo: Demonstration, rollouts: list[RolloutRecord]) -> np.ndarray:
    """Per-demo-frame divergence curves, one row per rollout.

    Entry [r, t] is the minimum embedding distance between demo frame t and
    any frame of rollout r — low while the rollout still tracked the demo,
    high for demo frames the rollout never reached.
    """
    if not rollouts:
        raise InputError("no rollouts given")
    dv = demo.vision
    out = np.empty((len(rollouts), dv.shape[0]))
    for r, rec in enumerate(rollouts):
        if rec.vision.shape[1] != dv.shape[1]:
            raise InputError("rollout embedding dim does not match the demo")
        diff = dv[:, None, :] - rec.vision[None, :, :]
        out[r] = np.sqrt((diff**2).sum(axis=2)).min(axis=1)
    return out


def smooth(curve: np.ndarray, window: int = 5) -> np.ndarray:
    """Centered moving average with edge truncation; window must be odd."""
    d = np.asarray(curve, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] == 0:
        raise InputError("curve must be a non-empty 1-D array")
    if window < 1 or window % 2 == 0:
        raise InputError("smoothing window must be a positive odd integer")
    half = window // 2
    l = d.shape[0]
    out = np.empty(l)
    for t in range(l):
        lo = max(0, t - half)
        hi = min(l, t + half + 1)
        out[t] = d[lo:hi].mean()
    return out


def separation_segment(
    curve: np.ndarray,
    pad: int = 15,
    band: tuple[float, float] = (1.0 / 8.0, 1.0 / 3.0),
    mode: str = "anchor_pad",
) -> tuple[int, int] | None:
    """Locate where a divergence curve leaves the low-distance regime.

    The band is [band[0]*max, band[1]*max] of the curve's maximum; the anchor
    is the last frame inside the band (the transition out of tracking). Mode
    "anchor_pad" returns the anchor padded by +/-pad frames; mode "band"
    returns the whole in-band extent padded by +/-pad. Returns None for a
    flat-zero curve (nothing diverged). Bounds are clipped to the curve.
    """
    d = np.asarray(curve, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] == 0:
        raise InputError("curve must be a non-empty 1-D array")
    if pad < 0 or not 0.0 < band[0] < band[1]:
        raise InputError("bad pad or band")
    if mode not in ("anchor_pad", "band"):
        raise InputError(f"unknown segment mode {mode!r}")
    m = float(d.max())
    if m <= 0.0:
        return None
    in_band = (d >= band[0] * m) & (d <= band[1] * m)
    idx = np.flatnonzero(in_band)
    l = d.shape[0]
    if idx.size == 0:
        # curve never enters the band; fall back to the most divergent frame
        lo = hi = int(np.argmax(d))
    elif mode == "anchor_pad":
        lo = hi = int(idx[-1])
    else:
        lo, hi = int(idx[0]), int(idx[-1])
    return max(0, lo - pad), min(l - 1, hi + pad)


def build_weights(
    demo_len: int,
    segments: list[tuple[int, int]],
    base: float = 1.0,
    increment: float = 0.3,
    clip_max: float = 2.0,
) -> np.ndarray:
    """Per-frame weights: base plus `increment` for each covering segment,
    clipped at clip_max, then normalized to mean exactly 1.

    Segments are inclusive [lo, hi] index ranges into the demo.
    """
    if demo_len < 1:
        raise InputError("demo_len must be >= 1")
    w = np.full(demo_len, float(base))
    for lo, hi in segments:
        if lo > hi or lo < 0 or hi >= demo_len:
            raise InputError(f"segment ({lo}, {hi}) out of range for length {demo_len}")
        w[lo : hi + 1] += increment
    np.clip(w, None, clip_max, out=w)
    w *= demo_len / w.sum()
    return w


# ---------------------------------------------------------------------------
# Quiz, local adaptation, and the full test-time procedure


@dataclass
class AdaptConfig:
    quiz_episodes: int = 10
    retrieve_frac: float = 0.10
    alpha_v: float = 1.0
    alpha_l: float = 0.5
    weighting: str = "selective"       # selective | uniform
    smooth_window: int = 5
    pad: int = 15
    band: tuple[float, float] = (1.0 / 8.0, 1.0 / 3.0)
    segment_mode: str = "anchor_pad"   # anchor_pad | band
    weight_increment: float = 0.3
    weight_clip: float = 2.0
    max_failed_rollouts: int = 5
    adapt_epochs: int = 20
    eval_episodes: int = 20
    max_episode_len: int = taskworld.MAX_EPISODE_LEN

    def validate(self) -> None:
        if self.quiz_episodes < 1 or self.eval_episodes < 1:
            raise InputError("quiz_episodes and eval_episodes must be >= 1")
        if self.weighting not in ("selective", "uniform"):
            raise InputError(f"unknown weighting {self.weighting!r}")
        if self.adapt_epochs < 0 or self.max_failed_rollouts < 0:
            raise InputError("adapt_epochs and max_failed_rollouts must be >= 0")


@dataclass
class TaskReport:
    """Everything the test-time procedure did for one task."""

    eval_task_id: int
    weighting: str
    quiz_rate: float
    quiz_successes: list[bool]
    n_failed_used: int
    retrieved_indices: list[int]
    retrieved_task_ids: list[int]
    retrieval_distances: list[float]
    retrieval_accuracy: float
    segments: list[list[list[int]]]        # per retrieved demo, [lo, hi] pairs
    weight_ranges: list[list[float]]       # per retrieved demo, [min, max]
    adapted_rate: float
    eval_successes: list[bool]
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "eval_task_id": self.eval_task_id,
            "weighting": self.weighting,
            "quiz_rate": self.quiz_rate,
            "quiz_successes": self.quiz_successes,
            "n_failed_used": self.n_failed_used,
            "retrieved_indices": self.retrieved_indices,
            "retrieved_task_ids": self.retrieved_task_ids,
            "retrieval_distances": self.retrieval_distances,
            "retrieval_accuracy": self.retrieval_accuracy,
            "segments": self.segments,
            "weight_ranges": self.weight_ranges,
            "adapted_rate": self.adapted_rate,
            "eval_successes": self.eval_successes,
            "wall_time": self.wall_time,
        }


def quiz(
    params: PolicyParams,
    task: TaskSpec,
    vision_enc,
    lang_enc,
    episodes: int,
    rng: np.random.Generator,
    max_len: int = taskworld.MAX_EPISODE_LEN,
) -> list[RolloutRecord]:
    """Recorded probe rollouts on one task (used before adaptation)."""
    if episodes < 0:
        raise InputError("quiz episode count must be >= 0")
    return [
        run_episode(params, task, vision_enc, lang_enc, rng, max_len, record=True)[1]
        for _ in range(episodes)
    ]


def local_adapt(
    params: PolicyParams,
    weighted_demos: list[tuple[Demonstration, np.ndarray]],
    train_cfg: TrainConfig,
    epochs: int,
    rng: np.random.Generator,
) -> PolicyParams:
    """Fine-tune a copy of the policy on weighted demo frames.

    Same optimizer settings as task training, fresh moments, no probes: runs
    exactly `epochs` passes and returns the result.
    """
    if not weighted_demos:
        raise InputError("no demonstrations to adapt on")
    xs_parts, act_parts, w_parts = [], [], []
    for demo, weights in weighted_demos:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(demo),):
            raise InputError("weight vector length does not match its demo")
        if np.any(w < 0) or float(w.sum()) <= 0.0:
            raise InputError("weights must be non-negative and not all zero")
        xs_parts.append(window_matrix(demo_rows(demo), params.cfg.window))
        act_parts.append(demo.actions)
        w_parts.append(w * frame_weights(demo.actions, train_cfg.toggle_boost))
    xs = np.concatenate(xs_parts)
    acts = np.concatenate(act_parts) / np.asarray(params.cfg.action_scale)
    ws = np.concatenate(w_parts)

    out = params.copy()
    opt = OptimizerState.for_params(out)
    for _epoch in range(epochs):
        for idx in _epoch_batches(xs.shape[0], train_cfg.batch_size, rng):
            _, grads = backward(
                out, xs[idx], acts[idx],
                sample_weights=ws[idx], loss_scale=train_cfg.loss_scale,
            )
            clip_grad_norm(grads, train_cfg.grad_clip)
            adamw_step(
                out, grads, opt,
                lr=train_cfg.lr, betas=train_cfg.betas,
                weight_decay=train_cfg.weight_decay,
            )
    return out


def adapt_and_test(
    params: PolicyParams,
    mem: EpisodicMemory,
    task: TaskSpec,
    vision_enc,
    lang_enc,
    adapt_cfg: AdaptConfig,
    train_cfg: TrainConfig,
    seed: int,
) -> tuple[PolicyParams, TaskReport]:
    """Full test-time procedure for one task.

    Quiz the frozen policy, build a retrieval query from the first quiz
    episode (its first-frame scene embedding and its instruction embedding),
    retrieve the nearest stored demos, weight their frames by where the
    failed quiz rollouts diverged (selective mode) or uniformly, locally
    adapt, and evaluate the adapted policy. Returns it plus a full report.
    """
    adapt_cfg.validate()
    records = quiz(
        params, task, vision_enc, lang_enc,
        adapt_cfg.quiz_episodes, rng_from(seed, "quiz"), adapt_cfg.max_episode_len,
    )
    quiz_successes = [r.success for r in records]
    query = RetrievalQuery(
        scene=records[0].vision[0],
        lang=records[0].lang,
        alpha_v=adapt_cfg.alpha_v,
        alpha_l=adapt_cfg.alpha_l,
        frac=adapt_cfg.retrieve_frac,
    )
    indices, dists = retrieve(mem, query)
    retrieved = [mem.demos[i] for i in indices]
    failed = [r for r in records if not r.success][: adapt_cfg.max_failed_rollouts]

    weighted: list[tuple[Demonstration, np.ndarray]] = []
    all_segments: list[list[list[int]]] = []
    weight_ranges: list[list[float]] = []
    for demo in retrieved:
        segments: list[tuple[int, int]] = []
        if adapt_cfg.weighting == "selective" and failed:
            curves = frame_distances(demo, failed)
            for row in curves:
                seg = separation_segment(
                    smooth(row, adapt_cfg.smooth_window),
                    pad=adapt_cfg.pad, band=adapt_cfg.band, mode=adapt_cfg.segment_mode,
                )
                if seg is not None:
                    segments.append(seg)
        weights = build_weights(
            len(demo), segments,
            increment=adapt_cfg.weight_increment, clip_max=adapt_cfg.weight_clip,
        )
        weighted.append((demo, weights))
        all_segments.append([[int(lo), int(hi)] for lo, hi in segments])
        weight_ranges.append([float(weights.min()), float(weights.max())])

    adapted = local_adapt(
        params, weighted, train_cfg, adapt_cfg.adapt_epochs, rng_from(seed, "adapt")
    )
    final_rate, eval_successes = evaluate_task(
        adapted, task, vision_enc, lang_enc,
        adapt_cfg.eval_episodes, rng_from(seed, "final"), adapt_cfg.max_episode_len,
    )
    tids = [d.eval_task_id for d in retrieved]
    report = TaskReport(
        eval_task_id=task.eval_task_id,
        weighting=adapt_cfg.weighting,
        quiz_rate=float(np.mean(quiz_successes)),
        quiz_successes=quiz_successes,
        n_failed_used=len(failed),
        retrieved_indices=indices,
        retrieved_task_ids=tids,
        retrieval_distances=[float(x) for x in dists],
        retrieval_accuracy=float(np.mean([t == task.eval_task_id for t in tids])),
        segments=all_segments,
        weight_ranges=weight_ranges,
        adapted_rate=final_rate,
        eval_successes=eval_successes,
    )
    return adapted, report

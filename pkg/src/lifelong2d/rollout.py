"""Closed-loop policy rollouts in the task world.

Shared by training probes, post-task evaluation, and the test-time quiz.
Actions are sampled from the policy's mixture output (in normalized units)
and rescaled to world units before stepping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import taskworld
from .policy import PolicyParams, RollingWindow, forward, sample_action
from .taskworld import TaskSpec


@dataclass
class RolloutRecord:
    """One evaluated episode: per-frame vision embeddings plus the outcome."""

    eval_task_id: int
    description: list[str]
    vision: np.ndarray      # (l, d_v)
    lang: np.ndarray        # (d_l,)
    success: bool
    steps: int


def run_episode(
    params: PolicyParams,
    task: TaskSpec,
    vision_enc,
    lang_enc,
    rng: np.random.Generator,
    max_len: int = taskworld.MAX_EPISODE_LEN,
    record: bool = False,
) -> tuple[bool, RolloutRecord | None]:
    """Run one episode from a jittered start; stops early on success."""
    cfg = params.cfg
    scale = np.asarray(cfg.action_scale)
    state = taskworld.jittered_initial_state(task, rng)
    description = list(task.descriptions[int(rng.integers(len(task.descriptions)))])
    lang = lang_enc.encode(description)
    ring = RollingWindow(cfg.window, cfg.frame_dim)
    vision_rows: list[np.ndarray] = [] if record else None  # type: ignore[assignment]

    succeeded = False
    steps = 0
    for _t in range(max_len):
        obs = state.obs_vector()
        v = vision_enc.encode(obs)
        if record:
            vision_rows.append(v)
        window = ring.push(np.concatenate([v, lang, state.proprio_vector()]))
        gmm = forward(params, window)
        action = sample_action(gmm, rng) * scale
        state = taskworld.step(state, action)
        steps += 1
        if taskworld.success(state, task):
            succeeded = True
            break

    rec = None
    if record:
        rec = RolloutRecord(
            eval_task_id=task.eval_task_id,
            description=description,
            vision=np.array(vision_rows),
            lang=lang,
            success=succeeded,
            steps=steps,
        )
    return succeeded, rec


def evaluate_task(
    params: PolicyParams,
    task: TaskSpec,
    vision_enc,
    lang_enc,
    episodes: int,
    rng: np.random.Generator,
    max_len: int = taskworld.MAX_EPISODE_LEN,
) -> tuple[float, list[bool]]:
    """Success rate over independent episodes (no recording)."""
    outcomes = [
        run_episode(params, task, vision_enc, lang_enc, rng, max_len)[0]
        for _ in range(episodes)
    ]
    return (float(np.mean(outcomes)) if outcomes else 0.0), outcomes

"""Deterministic 2D pick-and-place world with a scripted expert.

The arena is the unit square. An agent with a point gripper moves by bounded
(dx, dy) steps and toggles its gripper to grab/release the nearest object.
A task suite is a list of pick-and-place tasks drawn from one of four
families that control what varies between tasks (object layouts, zone
layouts, or only the instructed target). Every task carries a pool of
paraphrased natural-language instructions built from templates over a fixed
color/zone vocabulary.

Everything here is pure numpy + stdlib and fully seeded: identical seeds give
byte-identical suites, demonstrations, and expert trajectories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FormatError, InputError, InternalError
from .seeding import rng_from, spawn_seed

ARENA_LOW = 0.0
ARENA_HIGH = 1.0
DELTA_MAX = 0.05          # per-axis position change per step
EPS_GRASP = 0.04          # gripper reach when closing
ZONE_RADIUS = 0.08        # default drop-zone radius
MAX_EPISODE_LEN = 150
GEOM_GAIN = 4.0           # sensor gain on the egocentric obs block; keeps
                          # close-range geometry dominant in the observation's
                          # variance so downstream features resolve it

FAMILIES = ("spatial", "object", "goal", "mixed")

COLOR_WORDS = (
    "red", "blue", "green", "yellow", "purple", "orange", "pink", "brown",
    "black", "white", "gray", "cyan", "magenta", "teal", "maroon", "navy",
    "olive", "coral", "crimson", "indigo", "violet", "amber", "beige",
    "turquoise", "salmon", "lavender",
)
ZONE_WORDS = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa",
    "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
    "xray", "yankee", "zulu",
)
CONTENT_VOCAB = frozenset(COLOR_WORDS) | frozenset(ZONE_WORDS)
MAX_TASKS = min(len(COLOR_WORDS), len(ZONE_WORDS))

# Instruction templates. Slots in braces are filled per paraphrase; {color}
# and {zone} appear exactly once in each template so content words survive
# any rendering.
_SYNONYMS = {
    "v_put": ("put", "place", "set", "drop"),
    "v_move": ("move", "bring", "carry", "take"),
    "v_grab": ("grab", "pick", "fetch"),
    "v_goes": ("goes", "belongs"),
    "v_get": ("get", "receive", "hold"),
    "p_in": ("in", "into", "inside"),
    "n_obj": ("block", "piece", "puck"),
}
_TEMPLATES = (
    "{v_put} the {color} {n_obj} {p_in} the {zone} zone",
    "{v_move} the {color} {n_obj} to the {zone} area",
    "{v_grab} the {color} {n_obj} and {v_put} it {p_in} the {zone} zone",
    "the {color} {n_obj} {v_goes} {p_in} the {zone} region",
    "{v_put} the {color} one {p_in} {zone}",
    "{v_move} the {color} {n_obj} over to {zone}",
    "please {v_put} the {color} {n_obj} {p_in} the {zone} zone",
    "{v_grab} the {color} {n_obj} then {v_move} it to the {zone} spot",
    "the {zone} zone should {v_get} the {color} {n_obj}",
    "{v_move} the {color} {n_obj} {p_in} the {zone} zone now",
)


@dataclass
class WorldState:
    """Full mutable world snapshot. `held` is an object index or None."""

    agent_pos: np.ndarray           # (2,)
    gripper_closed: bool
    held: int | None
    object_pos: np.ndarray          # (n_objects, 2)
    object_colors: np.ndarray       # (n_objects,) int color ids
    zone_pos: np.ndarray            # (n_zones, 2)
    zone_radii: np.ndarray          # (n_zones,)

    def copy(self) -> "WorldState":
        return WorldState(
            agent_pos=self.agent_pos.copy(),
            gripper_closed=self.gripper_closed,
            held=self.held,
            object_pos=self.object_pos.copy(),
            object_colors=self.object_colors.copy(),
            zone_pos=self.zone_pos.copy(),
            zone_radii=self.zone_radii.copy(),
        )

    def obs_vector(self) -> np.ndarray:
        """Flat observation: agent, gripper, held flag, objects, zones, plus
        egocentric offsets and ranges (the workspace camera is agent-mounted,
        so relative geometry is part of the scene observation)."""
        n = self.object_pos.shape[0]
        head = np.array(
            [
                self.agent_pos[0],
                self.agent_pos[1],
                1.0 if self.gripper_closed else 0.0,
                1.0 if self.held is not None else 0.0,
            ]
        )
        objs = np.concatenate(
            [self.object_pos, (self.object_colors / 25.0).reshape(n, 1)], axis=1
        )
        zones = np.concatenate([self.zone_pos, self.zone_radii.reshape(-1, 1)], axis=1)
        rel_obj = self.object_pos - self.agent_pos
        rng_obj = np.linalg.norm(rel_obj, axis=1).reshape(-1, 1)
        rel_zone = self.zone_pos - self.agent_pos
        rng_zone = np.linalg.norm(rel_zone, axis=1).reshape(-1, 1)
        return np.concatenate(
            [
                head,
                objs.ravel(),
                zones.ravel(),
                GEOM_GAIN * np.concatenate([rel_obj, rng_obj], axis=1).ravel(),
                GEOM_GAIN * np.concatenate([rel_zone, rng_zone], axis=1).ravel(),
            ]
        )

    def proprio_vector(self) -> np.ndarray:
        """Agent-centric slice: x, y, gripper bit."""
        return np.array(
            [self.agent_pos[0], self.agent_pos[1], 1.0 if self.gripper_closed else 0.0]
        )


@dataclass
class TaskSpec:
    """One pick-and-place task: resolved layout plus instruction pool."""

    family: str
    n_tasks: int
    suite_seed: int
    task_index: int
    eval_task_id: int
    layout_seed: int
    target_object: int
    target_zone: int
    agent_start: np.ndarray         # (2,)
    object_pos: np.ndarray          # (n, 2) base positions before jitter
    object_colors: np.ndarray       # (n,)
    zone_pos: np.ndarray            # (n, 2)
    zone_radii: np.ndarray          # (n,)
    color_word: str
    zone_word: str
    descriptions: list[list[str]] = field(default_factory=list)

    @property
    def obs_len(self) -> int:
        return 4 + 6 * self.object_pos.shape[0] + 6 * self.zone_pos.shape[0]


def obs_length(n_tasks: int) -> int:
    """Observation vector length for a suite of `n_tasks` tasks."""
    return 4 + 12 * n_tasks


def step(state: WorldState, action: np.ndarray) -> WorldState:
    """Apply one action (dx, dy, toggle) and return the successor state.

    Movement is clamped per-axis to +/-DELTA_MAX and the agent stays in the
    arena. A held object rides along with the agent. toggle >= 0.5 flips the
    gripper: closing grabs the nearest object within EPS_GRASP (if any),
    opening releases at the agent position. The input state is not mutated.
    """
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (3,):
        raise InputError(f"action must have shape (3,), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("action contains non-finite values")

    s = state.copy()
    delta = np.clip(a[:2], -DELTA_MAX, DELTA_MAX)
    s.agent_pos = np.clip(s.agent_pos + delta, ARENA_LOW, ARENA_HIGH)
    if s.held is not None:
        s.object_pos[s.held] = s.agent_pos.copy()

    if a[2] >= 0.5:
        if s.gripper_closed:
            s.gripper_closed = False
            s.held = None  # object stays where it was released
        else:
            s.gripper_closed = True
            dists = np.linalg.norm(s.object_pos - s.agent_pos, axis=1)
            nearest = int(np.argmin(dists))
            if dists[nearest] <= EPS_GRASP:
                s.held = nearest
                s.object_pos[nearest] = s.agent_pos.copy()
    return s


def success(state: WorldState, task: TaskSpec) -> bool:
    """True when the target object rests inside the target zone, not held."""
    if state.held == task.target_object:
        return False
    obj = state.object_pos[task.target_object]
    zone = task.zone_pos[task.target_zone]
    return float(np.linalg.norm(obj - zone)) < float(task.zone_radii[task.target_zone])


# ---------------------------------------------------------------------------
# Instructions


def paraphrase(description: list[str], k: int, seed: int) -> list[list[str]]:
    """Build k distinct paraphrases preserving the color/zone content words.

    The color and zone are read from the input tokens (first match against the
    fixed vocabularies); everything else is re-rendered from templates with
    seeded synonym choices.
    """
    if not description:
        raise InputError("description is empty")
    if k < 1:
        raise InputError("paraphrase count must be >= 1")
    color = next((t for t in description if t in COLOR_WORDS), None)
    zone = next((t for t in description if t in ZONE_WORDS), None)
    if color is None or zone is None:
        raise InputError("description lacks a known color or zone word")

    rng = rng_from(seed, "paraphrase")
    pool: list[list[str]] = []
    seen: set[tuple[str, ...]] = set()
    attempts = 0
    while len(pool) < k:
        template = _TEMPLATES[attempts % len(_TEMPLATES)]
        tokens: list[str] = []
        for raw in template.split():
            if raw == "{color}":
                tokens.append(color)
            elif raw == "{zone}":
                tokens.append(zone)
            elif raw.startswith("{"):
                options = _SYNONYMS[raw[1:-1]]
                tokens.append(options[int(rng.integers(len(options)))])
            else:
                tokens.append(raw)
        attempts += 1
        key = tuple(tokens)
        if key not in seen:
            seen.add(key)
            pool.append(tokens)
        if attempts > 200 * k:
            raise InternalError("could not generate enough distinct paraphrases")
    return pool


# ---------------------------------------------------------------------------
# Suite generation


def _sample_points(
    rng: np.random.Generator,
    n: int,
    low: float,
    high: float,
    min_sep: float,
) -> np.ndarray:
    """Greedy min-separation sampler with restarts; deterministic given rng."""
    for _ in range(200):
        pts: list[np.ndarray] = []
        ok = True
        for _i in range(n):
            placed = False
            for _try in range(200):
                cand = rng.uniform(low, high, size=2)
                if all(np.linalg.norm(cand - p) >= min_sep for p in pts):
                    pts.append(cand)
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if ok:
            return np.array(pts)
    raise InternalError(f"could not place {n} points with separation {min_sep}")


def make_suite(
    family: str,
    n_tasks: int,
    seed: int,
    paraphrases: int = 10,
) -> list[TaskSpec]:
    """Generate a task suite.

    Families control what varies across tasks:
      spatial -- same objects everywhere, zone layout differs per task
      object  -- object layout differs per task, zones shared
      goal    -- identical scene, only the instructed object/zone pair differs
      mixed   -- both layouts differ per task
    Task k targets object k and a seeded permutation's zone; each task gets a
    distinct color word and zone word so instruction pools never share
    content words across tasks.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown family {family!r}, expected one of {FAMILIES}")
    if not 1 <= n_tasks <= MAX_TASKS:
        raise ConfigurationError(f"n_tasks must be in [1, {MAX_TASKS}], got {n_tasks}")
    if paraphrases < 1:
        raise ConfigurationError("paraphrases must be >= 1")

    shared = rng_from(seed, "suite-shared")
    color_ids = shared.permutation(len(COLOR_WORDS))[:n_tasks]
    zone_name_ids = shared.permutation(len(ZONE_WORDS))[:n_tasks]
    zone_perm = shared.permutation(n_tasks)
    shared_objects = _sample_points(rng_from(seed, "shared-objects"), n_tasks, 0.08, 0.92, 0.16)
    shared_zones = _sample_points(rng_from(seed, "shared-zones"), n_tasks, 0.10, 0.90, 0.12)
    shared_start = shared.uniform(0.10, 0.90, size=2)

    tasks: list[TaskSpec] = []
    for k in range(n_tasks):
        layout_seed = spawn_seed(seed, "task-layout", k)
        local = rng_from(layout_seed, "local-layout")
        own_objects = _sample_points(local, n_tasks, 0.08, 0.92, 0.16)
        own_zones = _sample_points(local, n_tasks, 0.10, 0.90, 0.12)
        agent_start = local.uniform(0.10, 0.90, size=2)

        if family == "spatial":
            object_pos, zone_pos = shared_objects, own_zones
        elif family == "object":
            object_pos, zone_pos = own_objects, shared_zones
        elif family == "goal":
            # fully identical scene: only the instruction separates goal tasks,
            # so retrieval has to lean on the language channel
            object_pos, zone_pos = shared_objects, shared_zones
            agent_start = shared_start
        else:
            object_pos, zone_pos = own_objects, own_zones

        target_zone = int(zone_perm[k])
        color_word = COLOR_WORDS[color_ids[k]]
        zone_word = ZONE_WORDS[zone_name_ids[target_zone]]
        base = ["put", "the", color_word, "block", "in", "the", zone_word, "zone"]
        pool = paraphrase(base, paraphrases, spawn_seed(layout_seed, "descriptions"))

        tasks.append(
            TaskSpec(
                family=family,
                n_tasks=n_tasks,
                suite_seed=int(seed),
                task_index=k,
                eval_task_id=k,
                layout_seed=layout_seed,
                target_object=k,
                target_zone=target_zone,
                agent_start=agent_start,
                object_pos=object_pos.copy(),
                object_colors=color_ids.copy(),
                zone_pos=zone_pos.copy(),
                zone_radii=np.full(n_tasks, ZONE_RADIUS),
                color_word=color_word,
                zone_word=zone_word,
                descriptions=pool,
            )
        )
    return tasks


def save_suite(tasks: list[TaskSpec], path: str) -> None:
    if not tasks:
        raise InputError("cannot save an empty suite")
    head = tasks[0]
    doc = {
        "version": 1,
        "family": head.family,
        "n_tasks": head.n_tasks,
        "seed": head.suite_seed,
        "paraphrases": len(head.descriptions),
        "tasks": [
            {
                "task_index": t.task_index,
                "eval_task_id": t.eval_task_id,
                "layout_seed": t.layout_seed,
                "target_object": t.target_object,
                "target_zone": t.target_zone,
                "color_word": t.color_word,
                "zone_word": t.zone_word,
                "descriptions": [" ".join(d) for d in t.descriptions],
            }
            for t in tasks
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_suite(path: str) -> list[TaskSpec]:
    """Load a suite file, regenerating layouts and cross-checking the stored fields."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read suite file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise FormatError(f"unsupported suite file version in {path}")
    try:
        tasks = make_suite(doc["family"], doc["n_tasks"], doc["seed"], doc["paraphrases"])
        stored = doc["tasks"]
    except KeyError as exc:
        raise FormatError(f"suite file {path} is missing field {exc}") from exc
    except ConfigurationError as exc:
        raise FormatError(f"suite file {path} holds invalid parameters: {exc}") from exc
    if len(stored) != len(tasks):
        raise FormatError(f"suite file {path} task count mismatch")
    for t, rec in zip(tasks, stored):
        same = (
            rec.get("layout_seed") == t.layout_seed
            and rec.get("target_object") == t.target_object
            and rec.get("target_zone") == t.target_zone
            and rec.get("descriptions") == [" ".join(d) for d in t.descriptions]
        )
        if not same:
            raise FormatError(
                f"suite file {path} does not match its generator (task {t.task_index})"
            )
    return tasks


# ---------------------------------------------------------------------------
# Initial states


def initial_state(task: TaskSpec) -> WorldState:
    """Canonical un-jittered start state."""
    return WorldState(
        agent_pos=task.agent_start.copy(),
        gripper_closed=False,
        held=None,
        object_pos=task.object_pos.copy(),
        object_colors=task.object_colors.copy(),
        zone_pos=task.zone_pos.copy(),
        zone_radii=task.zone_radii.copy(),
    )


def jittered_initial_state(task: TaskSpec, rng: np.random.Generator) -> WorldState:
    """Start state with +/-0.1 uniform jitter on agent and object positions.

    Rejection-sampled so objects stay mutually separated by 2*EPS_GRASP and
    the target object does not start inside the target zone.
    """
    n = task.object_pos.shape[0]
    zone_c = task.zone_pos[task.target_zone]
    zone_r = float(task.zone_radii[task.target_zone])
    for _ in range(1000):
        objs = np.clip(task.object_pos + rng.uniform(-0.1, 0.1, size=(n, 2)), 0.02, 0.98)
        agent = np.clip(task.agent_start + rng.uniform(-0.1, 0.1, size=2), 0.02, 0.98)
        diff = objs[:, None, :] - objs[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        dist[np.arange(n), np.arange(n)] = np.inf
        if dist.min() < 2 * EPS_GRASP:
            continue
        if np.linalg.norm(objs[task.target_object] - zone_c) < zone_r + 0.02:
            continue
        state = initial_state(task)
        state.agent_pos = agent
        state.object_pos = objs
        return state
    raise InternalError("could not sample a valid jittered start state")


# ---------------------------------------------------------------------------
# Demonstrations


@dataclass
class Demonstration:
    """One expert episode with per-frame observations and embeddings."""

    eval_task_id: int
    description: list[str]
    obs: np.ndarray        # (l, obs_len)
    proprio: np.ndarray    # (l, 3)
    actions: np.ndarray    # (l, 3)
    vision: np.ndarray     # (l, d_v)
    lang: np.ndarray       # (d_l,)

    def __len__(self) -> int:
        return int(self.obs.shape[0])


def _approach_point(target: np.ndarray, offset: float = 0.08) -> np.ndarray:
    center = np.array([0.5, 0.5])
    direction = center - target
    nrm = float(np.linalg.norm(direction))
    unit = direction / nrm if nrm > 1e-9 else np.array([1.0, 0.0])
    return target + offset * unit


EXPERT_SPEED = 0.4 * DELTA_MAX  # cruise slower than the cap so demos have
                                # enough frames for segment-level weighting
EXPERT_NOISE = 0.5              # execution noise (relative to speed) while
                                # recording; it is injected into the *executed*
                                # step only, so demos cover off-path states
                                # while the recorded labels stay clean
EXPERT_DWELL = 3                # stop-frames emitted in grasp/release range
                                # before the gripper toggle


def _drive_action(
    agent: np.ndarray,
    waypoint: np.ndarray,
    gain: float = 0.5,
) -> np.ndarray:
    v = gain * (waypoint - agent)
    nrm = float(np.linalg.norm(v))
    if nrm > EXPERT_SPEED:
        v = v * (EXPERT_SPEED / nrm)
    return np.array([v[0], v[1], 0.0])


def expert_rollout(task: TaskSpec, vision_enc, lang_enc, seed: int) -> Demonstration:
    """Scripted pick-and-place trajectory for `task`, encoded per frame.

    Raises InternalError if the script fails (should not happen for suites
    produced by make_suite).
    """
    rng = rng_from(seed, "expert")
    state = jittered_initial_state(task, rng)
    description = list(task.descriptions[int(rng.integers(len(task.descriptions)))])

    obj0 = state.object_pos[task.target_object].copy()
    zone_c = task.zone_pos[task.target_zone].copy()
    plan = [
        (_approach_point(obj0), 0.03, False),
        (obj0, 0.4 * EPS_GRASP, True),          # grab
        (_approach_point(zone_c), 0.03, False),
        (zone_c, 0.25 * ZONE_RADIUS, True),     # release
    ]

    obs_rows: list[np.ndarray] = []
    prop_rows: list[np.ndarray] = []
    act_rows: list[np.ndarray] = []

    def record_and_step(action: np.ndarray, jitter: bool = False) -> None:
        nonlocal state
        obs_rows.append(state.obs_vector())
        prop_rows.append(state.proprio_vector())
        act_rows.append(action)
        executed = action
        if jitter:
            executed = action + np.concatenate(
                [EXPERT_NOISE * EXPERT_SPEED * rng.standard_normal(2), [0.0]]
            )
        state = step(state, executed)
        if len(act_rows) > MAX_EPISODE_LEN:
            raise InternalError("expert exceeded the episode length cap")

    for waypoint, tol, toggle in plan:
        while float(np.linalg.norm(state.agent_pos - waypoint)) > tol:
            record_and_step(_drive_action(state.agent_pos, waypoint), jitter=True)
        if toggle:
            # settle in place before actuating: the stop-when-near behavior
            # is what makes the grasp/release context learnable, and it gives
            # a cloned policy several in-range frames to emit the toggle
            for _ in range(EXPERT_DWELL):
                record_and_step(np.array([0.0, 0.0, 0.0]))
            record_and_step(np.array([0.0, 0.0, 1.0]))
            if state.gripper_closed and state.held != task.target_object:
                raise InternalError("expert grabbed the wrong object")

    if not success(state, task):
        raise InternalError("expert episode did not end in success")

    obs = np.array(obs_rows)
    return Demonstration(
        eval_task_id=task.eval_task_id,
        description=description,
        obs=obs,
        proprio=np.array(prop_rows),
        actions=np.array(act_rows),
        vision=vision_enc.encode_batch(obs),
        lang=lang_enc.encode(description),
    )


def collect_demos(task: TaskSpec, vision_enc, lang_enc, n: int, seed: int) -> list[Demonstration]:
    """n independent expert demonstrations with per-demo derived seeds."""
    if n < 1:
        raise InputError("demo count must be >= 1")
    return [
        expert_rollout(task, vision_enc, lang_enc, spawn_seed(seed, "demo", i))
        for i in range(n)
    ]


def demo_to_dict(demo: Demonstration) -> dict:
    return {
        "eval_task_id": demo.eval_task_id,
        "description": list(demo.description),
        "obs": demo.obs.tolist(),
        "proprio": demo.proprio.tolist(),
        "actions": demo.actions.tolist(),
        "vision": demo.vision.tolist(),
        "lang": demo.lang.tolist(),
    }


def demo_from_dict(doc: dict) -> Demonstration:
    try:
        demo = Demonstration(
            eval_task_id=int(doc["eval_task_id"]),
            description=list(doc["description"]),
            obs=np.asarray(doc["obs"], dtype=np.float64),
            proprio=np.asarray(doc["proprio"], dtype=np.float64),
            actions=np.asarray(doc["actions"], dtype=np.float64),
            vision=np.asarray(doc["vision"], dtype=np.float64),
            lang=np.asarray(doc["lang"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed demonstration record: {exc}") from exc
    if demo.obs.ndim != 2 or demo.obs.shape[0] != demo.actions.shape[0]:
        raise FormatError("demonstration arrays disagree on length")
    return demo

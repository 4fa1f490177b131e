"""Episodic demonstration memory with pluggable admission policies.

Two policies: `oracle_quota` keeps the first N demonstrations per task id and
never evicts (the fixed-budget setting used for the headline experiments);
`reservoir` keeps a uniform sample of the whole stream under a global
capacity. Replay draws frame windows uniformly over all stored frames. The
memory round-trips exactly through a JSON-lines file, including the reservoir
RNG state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InputError, MemoryEmpty
from .policy import demo_rows, window_matrix
from .taskworld import Demonstration, demo_from_dict, demo_to_dict


@dataclass
class AdmissionConfig:
    kind: str = "oracle_quota"     # oracle_quota | reservoir
    per_task: int = 8              # oracle_quota: demos kept per task id
    capacity: int = 64             # reservoir: total demos kept

    def validate(self) -> None:
        if self.kind not in ("oracle_quota", "reservoir"):
            raise InputError(f"unknown admission kind {self.kind!r}")
        if self.kind == "oracle_quota" and self.per_task < 1:
            raise InputError("per_task must be >= 1")
        if self.kind == "reservoir" and self.capacity < 1:
            raise InputError("capacity must be >= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "per_task": self.per_task, "capacity": self.capacity}

    @classmethod
    def from_dict(cls, doc: dict) -> "AdmissionConfig":
        cfg = cls(
            kind=str(doc["kind"]),
            per_task=int(doc["per_task"]),
            capacity=int(doc["capacity"]),
        )
        cfg.validate()
        return cfg


class EpisodicMemory:
    """Stores whole demonstrations; insertion positions are stable."""

    def __init__(self, admission: AdmissionConfig | None = None, seed: int = 0):
        self.admission = admission or AdmissionConfig()
        self.admission.validate()
        self.stream_count = 0
        self.demos: list[Demonstration] = []
        self._rows_cache: list[np.ndarray | None] = []
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.demos)

    def admit(self, demo: Demonstration) -> bool:
        """Offer one demonstration to the memory; True if it was stored."""
        self.stream_count += 1
        if self.admission.kind == "oracle_quota":
            kept = sum(1 for d in self.demos if d.eval_task_id == demo.eval_task_id)
            if kept < self.admission.per_task:
                self.demos.append(demo)
                self._rows_cache.append(None)
                return True
            return False
        # reservoir (algorithm R): item i replaces a random slot with prob cap/i
        if len(self.demos) < self.admission.capacity:
            self.demos.append(demo)
            self._rows_cache.append(None)
            return True
        j = int(self._rng.integers(self.stream_count))
        if j < self.admission.capacity:
            self.demos[j] = demo
            self._rows_cache[j] = None
            return True
        return False

    def rows(self, index: int) -> np.ndarray:
        """Cached per-frame input rows for stored demo `index`."""
        cached = self._rows_cache[index]
        if cached is None:
            cached = demo_rows(self.demos[index])
            self._rows_cache[index] = cached
        return cached

    def frame_count(self) -> int:
        return sum(len(d) for d in self.demos)

    def task_ids(self) -> list[int]:
        return [d.eval_task_id for d in self.demos]


def replay_batch(
    mem: EpisodicMemory,
    k: int,
    window: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """k frame windows drawn uniformly over every frame stored in memory.

    Returns (windows (k, window*frame_dim), actions (k, 3)).
    """
    if k < 0:
        raise InputError("batch size must be >= 0")
    if len(mem) == 0:
        raise MemoryEmpty("cannot replay from an empty memory")
    lengths = np.array([len(d) for d in mem.demos])
    bounds = np.cumsum(lengths)
    total = int(bounds[-1])
    frame_dim = mem.rows(0).shape[1]
    xs = np.empty((k, window * frame_dim))
    acts = np.empty((k, 3))
    flat = rng.integers(total, size=k)
    for i, f in enumerate(flat):
        di = int(np.searchsorted(bounds, f, side="right"))
        t = int(f - (bounds[di - 1] if di > 0 else 0))
        rows = mem.rows(di)
        lo = max(0, t - window + 1)
        seg = rows[lo : t + 1]
        if seg.shape[0] < window:
            seg = np.concatenate([np.tile(rows[0], (window - seg.shape[0], 1)), seg])
        xs[i] = seg.ravel()
        acts[i] = mem.demos[di].actions[t]
    return xs, acts


def demo_windows(demos: list[Demonstration], window: int) -> tuple[np.ndarray, np.ndarray]:
    """All frame windows and actions of a demo list, concatenated."""
    if not demos:
        raise InputError("no demonstrations given")
    xs = [window_matrix(demo_rows(d), window) for d in demos]
    acts = [d.actions for d in demos]
    return np.concatenate(xs), np.concatenate(acts)


def save_memory(mem: EpisodicMemory, path: str) -> None:
    """JSON-lines dump: one header line, then one line per stored demo."""
    header = {
        "version": 1,
        "admission": mem.admission.to_dict(),
        "stream_count": mem.stream_count,
        "count": len(mem.demos),
        "rng_state": _encode_rng_state(mem._rng),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for demo in mem.demos:
            fh.write(json.dumps(demo_to_dict(demo), sort_keys=True) + "\n")


def load_memory(path: str) -> EpisodicMemory:
    """Inverse of save_memory; raises FormatError on any corruption."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read memory file {path}: {exc}") from exc
    if not lines:
        raise FormatError(f"memory file {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"memory file {path} has a corrupt header: {exc}") from exc
    if not isinstance(header, dict) or header.get("version") != 1:
        raise FormatError(f"unsupported memory file version in {path}")
    try:
        mem = EpisodicMemory(AdmissionConfig.from_dict(header["admission"]))
        mem.stream_count = int(header["stream_count"])
        _restore_rng_state(mem._rng, header["rng_state"])
        expected = int(header["count"])
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise FormatError(f"memory file {path} has a bad header: {exc}") from exc
    body = lines[1:]
    if len(body) != expected:
        raise FormatError(
            f"memory file {path} is truncated: header says {expected} demos, found {len(body)}"
        )
    for line in body:
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"memory file {path} has a corrupt record: {exc}") from exc
        mem.demos.append(demo_from_dict(doc))
        mem._rows_cache.append(None)
    return mem


def _encode_rng_state(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": str(state["state"]["state"]),
        "inc": str(state["state"]["inc"]),
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }


def _restore_rng_state(rng: np.random.Generator, doc: dict) -> None:
    if doc["bit_generator"] != "PCG64":
        raise FormatError(f"unexpected bit generator {doc['bit_generator']!r}")
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": int(doc["state"]), "inc": int(doc["inc"])},
        "has_uint32": int(doc["has_uint32"]),
        "uinteger": int(doc["uinteger"]),
    }

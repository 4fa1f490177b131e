"""Frozen stand-in encoders for vision and language.

These play the role that large pretrained encoders play in the real pipeline:
fixed (never trained) maps from raw observations / token lists to embedding
vectors. Vision is a seeded random projection squashed by tanh; language sums
seeded per-word hash vectors. Language has two modes:

  cluster -- only content words (colors, zone names) contribute, so all
             paraphrases of one instruction share an embedding and tasks are
             cleanly separated;
  noisy   -- function words and token positions also contribute, smearing the
             clusters the way a generic sentence encoder would.

Both are deterministic functions of (seed, input) alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import InputError
from .seeding import rng_from

NOISY_SCALE = 0.75  # weight of non-content contributions in noisy mode


class VisionEncoder:
    """tanh of a fixed Gaussian projection of the observation vector."""

    def __init__(self, obs_len: int, d_v: int = 32, seed: int = 0):
        if obs_len < 1 or d_v < 1:
            raise InputError("obs_len and d_v must be positive")
        self.obs_len = int(obs_len)
        self.d_v = int(d_v)
        rng = rng_from(seed, "vision-projection")
        self._proj = rng.standard_normal((d_v, obs_len)) / np.sqrt(obs_len)

    def encode(self, obs: np.ndarray) -> np.ndarray:
        o = np.asarray(obs, dtype=np.float64)
        if o.shape != (self.obs_len,):
            raise InputError(f"expected obs of shape ({self.obs_len},), got {o.shape}")
        return np.tanh(self._proj @ o)

    def encode_batch(self, obs: np.ndarray) -> np.ndarray:
        o = np.asarray(obs, dtype=np.float64)
        if o.ndim != 2 or o.shape[1] != self.obs_len:
            raise InputError(f"expected obs batch of shape (n, {self.obs_len}), got {o.shape}")
        return np.tanh(o @ self._proj.T)


def _word_hash(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")


class LanguageEncoder:
    """Sum of seeded per-word hash vectors, normalized to unit length."""

    def __init__(
        self,
        content_vocab: frozenset[str] | set[str],
        d_l: int = 32,
        mode: str = "cluster",
        seed: int = 0,
    ):
        if mode not in ("cluster", "noisy"):
            raise InputError(f"unknown language mode {mode!r}")
        if d_l < 1:
            raise InputError("d_l must be positive")
        self.vocab = frozenset(content_vocab)
        self.d_l = int(d_l)
        self.mode = mode
        self.seed = int(seed)
        self._cache: dict[str, np.ndarray] = {}

    def _vec(self, key: str) -> np.ndarray:
        v = self._cache.get(key)
        if v is None:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, _word_hash(key)])
            )
            v = rng.standard_normal(self.d_l)
            self._cache[key] = v
        return v

    def encode(self, tokens: list[str]) -> np.ndarray:
        if not tokens:
            raise InputError("cannot encode an empty token list")
        total = np.zeros(self.d_l)
        for i, tok in enumerate(tokens):
            if tok in self.vocab:
                total = total + self._vec("w:" + tok)
            elif self.mode == "noisy":
                total = total + NOISY_SCALE * self._vec("w:" + tok)
                total = total + NOISY_SCALE * self._vec(f"p:{i}:{tok}")
        nrm = float(np.linalg.norm(total))
        if nrm == 0.0:
            return np.zeros(self.d_l)
        return total / nrm


def pca2(embeddings: np.ndarray, iters: int = 200, seed: int = 0) -> np.ndarray:
    """Project rows onto the top two principal axes (power iteration).

    Used for diagnostic scatter plots of embedding clusters; deterministic
    given the seed, with a fixed sign convention (first sizable component of
    each axis is positive).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InputError("pca2 needs a (n>=2, d) embedding matrix")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc
    rng = rng_from(seed, "pca2")
    axes = []
    c = cov.copy()
    for _ in range(2):
        v = rng.standard_normal(x.shape[1])
        v /= np.linalg.norm(v)
        for _i in range(iters):
            v = c @ v
            for prev in axes:
                v = v - (v @ prev) * prev
            nrm = float(np.linalg.norm(v))
            if nrm < 1e-30:
                break
            v = v / nrm
        big = np.flatnonzero(np.abs(v) > 1e-12)
        if big.size and v[big[0]] < 0:
            v = -v
        lam = float(v @ c @ v)
        c = c - lam * np.outer(v, v)
        axes.append(v)
    return xc @ np.stack(axes, axis=1)

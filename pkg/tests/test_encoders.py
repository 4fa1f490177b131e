import numpy as np
import pytest

from lifelong2d.encoders import LanguageEncoder, VisionEncoder, pca2
from lifelong2d.errors import InputError
from lifelong2d.taskworld import CONTENT_VOCAB, make_suite


# ---------------------------------------------------------------------------
# vision


def test_vision_zero_obs_maps_to_zero():
    enc = VisionEncoder(10, 8, seed=0)
    assert np.array_equal(enc.encode(np.zeros(10)), np.zeros(8))


def test_vision_deterministic_and_bounded():
    enc1 = VisionEncoder(12, 16, seed=4)
    enc2 = VisionEncoder(12, 16, seed=4)
    obs = np.linspace(-1, 1, 12)
    e1, e2 = enc1.encode(obs), enc2.encode(obs)
    assert np.array_equal(e1, e2)
    assert np.all(np.abs(e1) < 1.0)


def test_vision_seed_changes_projection():
    obs = np.ones(9)
    a = VisionEncoder(9, 8, seed=0).encode(obs)
    b = VisionEncoder(9, 8, seed=1).encode(obs)
    assert not np.array_equal(a, b)


def test_vision_batch_matches_single():
    enc = VisionEncoder(7, 5, seed=2)
    rng = np.random.default_rng(0)
    batch = rng.uniform(-1, 1, size=(6, 7))
    stacked = np.stack([enc.encode(row) for row in batch])
    assert np.allclose(enc.encode_batch(batch), stacked)


def test_vision_shape_errors():
    enc = VisionEncoder(7, 5, seed=2)
    with pytest.raises(InputError):
        enc.encode(np.zeros(8))
    with pytest.raises(InputError):
        enc.encode_batch(np.zeros((3, 8)))
    with pytest.raises(InputError):
        VisionEncoder(0, 5)


def test_vision_configurable_width():
    enc = VisionEncoder(20, 512, seed=0)
    assert enc.encode(np.zeros(20)).shape == (512,)


# ---------------------------------------------------------------------------
# language


def test_language_unit_norm_both_modes():
    toks = ["put", "the", "crimson", "block", "in", "the", "alpha", "zone"]
    for mode in ("cluster", "noisy"):
        v = LanguageEncoder(CONTENT_VOCAB, 32, mode=mode, seed=0).encode(toks)
        assert np.isclose(np.linalg.norm(v), 1.0)


def test_cluster_mode_ignores_function_words_and_order():
    enc = LanguageEncoder(CONTENT_VOCAB, 32, mode="cluster", seed=0)
    a = enc.encode(["put", "the", "crimson", "block", "in", "the", "alpha", "zone"])
    b = enc.encode(["alpha", "crimson"])
    c = enc.encode(["crimson", "alpha", "please", "now"])
    assert np.allclose(a, b)
    assert np.allclose(a, c)


def test_noisy_mode_depends_on_function_words_and_order():
    enc = LanguageEncoder(CONTENT_VOCAB, 32, mode="noisy", seed=0)
    a = enc.encode(["put", "the", "crimson", "block", "in", "the", "alpha", "zone"])
    b = enc.encode(["grab", "the", "crimson", "block", "for", "the", "alpha", "zone"])
    c = enc.encode(["the", "put", "crimson", "block", "in", "the", "alpha", "zone"])
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)


def test_language_rejects_empty_and_bad_mode():
    enc = LanguageEncoder(CONTENT_VOCAB, 16, mode="cluster", seed=0)
    with pytest.raises(InputError):
        enc.encode([])
    with pytest.raises(InputError):
        LanguageEncoder(CONTENT_VOCAB, 16, mode="bert", seed=0)


def test_language_no_content_words_gives_zero_vector():
    enc = LanguageEncoder(CONTENT_VOCAB, 16, mode="cluster", seed=0)
    assert np.array_equal(enc.encode(["move", "it", "now"]), np.zeros(16))


def test_cluster_paraphrases_tighter_than_other_tasks():
    # every paraphrase of a task must sit closer to its siblings than to any
    # other task's description
    tasks = make_suite("goal", 5, 3)
    enc = LanguageEncoder(CONTENT_VOCAB, 32, mode="cluster", seed=0)
    embeds = [[enc.encode(d) for d in t.descriptions] for t in tasks]
    for i, mine in enumerate(embeds):
        intra = max(
            float(np.linalg.norm(a - b)) for a in mine for b in mine
        )
        inter = min(
            float(np.linalg.norm(a - b))
            for j, other in enumerate(embeds)
            if j != i
            for a in mine
            for b in other
        )
        assert intra < inter


def test_language_configurable_width():
    enc = LanguageEncoder(CONTENT_VOCAB, 384, mode="cluster", seed=0)
    assert enc.encode(["crimson"]).shape == (384,)


# ---------------------------------------------------------------------------
# pca diagnostic


def test_pca2_recovers_dominant_plane():
    rng = np.random.default_rng(8)
    # two elongated clusters in a 10-d space
    base = rng.standard_normal((2, 10))
    pts = np.concatenate(
        [
            rng.standard_normal((40, 1)) * 3.0 @ base[:1] + base[1] * 4,
            rng.standard_normal((40, 1)) * 3.0 @ base[:1] - base[1] * 4,
        ]
    )
    proj = pca2(pts)
    assert proj.shape == (80, 2)
    # cluster separation survives the projection
    a, b = proj[:40], proj[40:]
    gap = np.linalg.norm(a.mean(axis=0) - b.mean(axis=0))
    spread = max(a.std(), b.std())
    assert gap > spread


def test_pca2_deterministic():
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((12, 6))
    assert np.array_equal(pca2(pts), pca2(pts))


def test_pca2_rejects_degenerate_input():
    with pytest.raises(InputError):
        pca2(np.zeros((1, 4)))

"""Shared fixtures: a small suite and encoders reused by fast unit tests."""

import numpy as np
import pytest

from lifelong2d.encoders import LanguageEncoder, VisionEncoder
from lifelong2d.policy import PolicyConfig
from lifelong2d.taskworld import CONTENT_VOCAB, collect_demos, make_suite


@pytest.fixture(scope="session")
def spatial_suite():
    return make_suite("spatial", 5, 7)


@pytest.fixture(scope="session")
def encoders(spatial_suite):
    venc = VisionEncoder(spatial_suite[0].obs_len, 48, seed=0)
    lenc = LanguageEncoder(CONTENT_VOCAB, 32, mode="cluster", seed=0)
    return venc, lenc


@pytest.fixture(scope="session")
def small_policy_cfg():
    # deliberately tiny so gradient-heavy tests stay fast
    return PolicyConfig(d_v=6, d_l=4, window=3, hidden=10, modes=2)


@pytest.fixture(scope="session")
def task0_demos(spatial_suite, encoders):
    venc, lenc = encoders
    return collect_demos(spatial_suite[0], venc, lenc, 6, seed=101)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from starhnoma import config as cfgmod
from starhnoma import channel as chmod
from starhnoma._kernels import warmup


@pytest.fixture(scope="session", autouse=True)
def _jit_warmup():
    warmup()


@pytest.fixture()
def tiny_cfg():
    """Small scenario for fast end-to-end tests."""
    return cfgmod.make_config(seed=7, n_users=4, n_surface_elements=8, n_tx_antennas=8)


@pytest.fixture()
def table_cfg():
    return cfgmod.make_config(seed=11)


def make_channels(cfg, trial=0):
    rng = cfgmod.trial_rng(cfg.seed, trial)
    return chmod.synthesize_channels(cfg, rng)


@pytest.fixture()
def channels4(tiny_cfg):
    return make_channels(tiny_cfg)

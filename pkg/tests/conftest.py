"""
Shared fixtures: a desk-sized configuration (one site, three sectors,
eight Set A beams) that keeps every simulation test under a second.
"""

import logging
import sys
from pathlib import Path

import pytest

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from database.repository import ArtifactRepository
from src.core.config import SimConfig, build_config

logging.basicConfig(level=logging.INFO)

SEEDS = {"drop": 11, "split": 12, "model": 13, "eval": 14}

SMALL_CONFIG = {
    "use_case": "sbp2",
    "ue_speed_kmph": 30.0,
    "l_o": 2,
    "l_p": 1,
    "layout": {"n_sites": 1, "sectors_per_site": 3, "ues_per_sector": 2},
    "antenna": {"gnb_m": 2, "gnb_n": 4, "ue_n": 2, "ue_panels": 2},
    "codebook": {"set_a_az": 4, "set_a_el": 2, "set_b_size": 4, "ssb_group_az": 2, "ssb_group_el": 1,
                 "ue_beams_per_panel": 2},
    "channel": {"n_clusters": 3},
    "measurement": {"l1_window": 2, "rx_window": 2},
    "dataset": {"n_drops": 1, "n_instants": 8},
    "training": {"epochs": 2, "batch_size": 16, "hidden": 16, "enforce_budget": False, "log_every": 1},
    "monitoring": {"window": 4},
    "inference": {"n_eval_drops": 1, "k_max": 4},
    "seeds": SEEDS,
}


@pytest.fixture
def small_config() -> SimConfig:
    return build_config(SMALL_CONFIG)


@pytest.fixture
def tbp_config(small_config) -> SimConfig:
    return small_config.replace(use_case="tbp")


@pytest.fixture
def sbp1_config(small_config) -> SimConfig:
    return small_config.replace(use_case="sbp1")


@pytest.fixture
def repository(tmp_path) -> ArtifactRepository:
    return ArtifactRepository(root=tmp_path, retry_delay=0.0)

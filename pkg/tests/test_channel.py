import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from src.core.config import ChannelConfig
from src.processors.channel import LinkDescriptor, channel_matrix, channel_realization, draw_clusters
from src.processors.codebook import ArrayGeometry

GNB = ArrayGeometry(m_h=4, m_v=2)
UE = ArrayGeometry(m_h=2, m_v=1)


def _link(los=True, velocity=(0.0, 0.0)):
    return LinkDescriptor(aod=0.2, zod=1.7, aoa=2.5, zoa=1.45, los=los, pathloss_db=100.0,
                          velocity=velocity, wavelength=0.01)


def test_los_clusters_add_dominant_path():
    cfg = ChannelConfig(n_clusters=3, k_factor_db=10.0)
    clusters = draw_clusters(True, cfg, seed=1)
    assert len(clusters) == 4
    assert clusters.powers.sum() == pytest.approx(1.0)
    assert clusters.powers[0] == pytest.approx(10.0 / 11.0)
    assert clusters.aod_offsets[0] == 0.0


def test_nlos_clusters():
    clusters = draw_clusters(False, ChannelConfig(n_clusters=5), seed=2)
    assert len(clusters) == 5
    assert clusters.powers.sum() == pytest.approx(1.0)
    assert not clusters.los


def test_nlos_without_clusters_is_rejected():
    with pytest.raises(ValueError):
        draw_clusters(False, ChannelConfig(n_clusters=0), seed=0)


def test_clusters_are_seeded():
    a = draw_clusters(False, ChannelConfig(), seed=7)
    b = draw_clusters(False, ChannelConfig(), seed=7)
    np.testing.assert_array_equal(a.aod_offsets, b.aod_offsets)
    np.testing.assert_array_equal(a.phases, b.phases)


def test_channel_shape_and_los_check():
    clusters = draw_clusters(True, ChannelConfig(n_clusters=3), seed=3)
    realization = channel_matrix(GNB, UE, _link(), clusters, t=0.0)
    assert realization.h.shape == (UE.n_elements, GNB.n_elements)
    assert len(realization.cluster_params) == 4
    with pytest.raises(ValueError):
        channel_matrix(GNB, UE, _link(los=False), clusters, t=0.0)


def test_single_path_power_matches_pathloss():
    clusters = draw_clusters(True, ChannelConfig(n_clusters=0), seed=4)
    h = channel_matrix(GNB, UE, _link(), clusters, t=0.0).h
    expected = UE.n_elements * GNB.n_elements * 10.0 ** (-100.0 / 10.0)
    assert np.linalg.norm(h) ** 2 == pytest.approx(expected, rel=1e-9)


def test_static_channel_does_not_change():
    clusters = draw_clusters(False, ChannelConfig(n_clusters=4), seed=5)
    h0 = channel_matrix(GNB, UE, _link(los=False), clusters, t=0.0).h
    h1 = channel_matrix(GNB, UE, _link(los=False), clusters, t=1.0).h
    np.testing.assert_allclose(h0, h1)


def test_doppler_rotates_phase_only_for_single_path():
    clusters = draw_clusters(True, ChannelConfig(n_clusters=0), seed=6)
    moving = _link(velocity=(8.0, -3.0))
    h0 = channel_matrix(GNB, UE, moving, clusters, t=0.0).h
    h1 = channel_matrix(GNB, UE, moving, clusters, t=0.05).h
    assert not np.allclose(h0, h1)
    assert np.linalg.norm(h1) == pytest.approx(np.linalg.norm(h0))


def test_realization_is_reproducible():
    a = channel_realization(GNB, UE, _link(los=False), t=0.3, seed=8)
    b = channel_realization(GNB, UE, _link(los=False), t=0.3, seed=8)
    np.testing.assert_array_equal(a.h, b.h)
    assert math.isfinite(a.pathloss_db)


@pytest.mark.parametrize("los", [True, False])
def test_mean_channel_energy_matches_pathloss(los):
    link = _link(los=los)
    cfg = ChannelConfig()
    ratios = []
    for seed in range(10_000):
        realization = channel_realization(GNB, UE, link, t=0.0, seed=seed, channel_cfg=cfg)
        scale = UE.n_elements * GNB.n_elements * 10.0 ** (-realization.pathloss_db / 10.0)
        ratios.append(np.linalg.norm(realization.h) ** 2 / scale)
    assert np.mean(ratios) == pytest.approx(1.0, rel=0.05)


def test_channel_decorrelates_with_lag():
    # moving across the arrival direction spreads the cluster Doppler rates the most
    aoa = _link().aoa
    speed = 30.0 / 3.6
    link = _link(los=False, velocity=(speed * math.cos(aoa + math.pi / 2), speed * math.sin(aoa + math.pi / 2)))
    lags = [0.0, 0.25e-3, 0.5e-3, 1e-3, 2e-3]
    cfg = ChannelConfig()
    coherence = np.zeros(len(lags))
    for seed in range(200):
        clusters = draw_clusters(False, cfg, seed=seed)
        h0 = channel_matrix(GNB, UE, link, clusters, t=0.0).h
        for i, lag in enumerate(lags):
            h = channel_matrix(GNB, UE, link, clusters, t=lag).h
            coherence[i] += abs(np.vdot(h0, h)) / (np.linalg.norm(h0) * np.linalg.norm(h))
    coherence /= 200
    assert coherence[0] == pytest.approx(1.0)
    assert spearmanr(lags, coherence)[0] < -0.8

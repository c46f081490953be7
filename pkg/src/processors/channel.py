"""
Clustered geometric mmWave channel H(t).

Each link carries a fixed set of clusters whose angles are offsets around
the current geometric direction, so the channel evolves smoothly while the
UE moves. Per-cluster Doppler comes from the UE velocity projected on the
cluster's arrival direction.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.core.config import ChannelConfig, logger
from src.processors.codebook import ArrayGeometry, azimuth_to_theta, element_gain_db, steering_matrix
from src.processors.deployment import LargeScale, NetworkLayout, Sector, UEState, link_geometry, wrap_angle


@dataclass(frozen=True)
class LinkDescriptor:
    """Geometric state of one sector-to-UE link at one instant."""

    aod: float                 # departure azimuth offset from the sector boresight
    zod: float                 # departure zenith
    aoa: float                 # global arrival azimuth (towards the site)
    zoa: float                 # arrival zenith
    los: bool
    pathloss_db: float         # pathloss plus shadowing, before element gains
    velocity: Tuple[float, float] = (0.0, 0.0)
    wavelength: float = 0.01


@dataclass(frozen=True, eq=False)
class ClusterSet:
    """Per-link cluster parameters, angles relative to the geometric direction."""

    aod_offsets: np.ndarray
    zod_offsets: np.ndarray
    aoa_offsets: np.ndarray
    zoa_offsets: np.ndarray
    powers: np.ndarray         # sums to 1
    phases: np.ndarray
    los: bool

    def __len__(self) -> int:
        return len(self.powers)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: np.ndarray                              # (M_rx, M_tx)
    los: bool
    pathloss_db: float                         # effective loss including element gains
    cluster_params: List[Tuple[float, float, complex, float]]  # (AoD, AoA, gain, Doppler rate)


def draw_clusters(los: bool, channel_cfg: ChannelConfig, seed: int) -> ClusterSet:
    """
    Draw the cluster set of a link.

    Angular offsets are Laplacian around the geometric direction with the
    state's spread (zenith spreads scaled down). A LoS link adds a dominant
    zero-offset cluster holding K/(K+1) of the power.
    """
    rng = np.random.default_rng(seed)
    n = channel_cfg.n_clusters
    if n == 0 and not los:
        raise ValueError("An NLoS link needs at least one scattered cluster")
    spread = math.radians(channel_cfg.los_angular_spread_deg if los else channel_cfg.nlos_angular_spread_deg)
    b_az = spread / math.sqrt(2.0)
    b_zen = b_az * channel_cfg.zenith_spread_scale

    offsets = [rng.laplace(0.0, b, size=n) if b > 0 else np.zeros(n) for b in (b_az, b_zen, b_az, b_zen)]
    powers = rng.exponential(1.0, size=n)
    if n:
        powers /= powers.sum()
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n)

    if los:
        k_lin = 10.0 ** (channel_cfg.k_factor_db / 10.0)
        dominant = k_lin / (k_lin + 1.0) if n else 1.0
        powers = np.concatenate([[dominant], powers * (1.0 - dominant)])
        offsets = [np.concatenate([[0.0], o]) for o in offsets]
        phases = np.concatenate([[rng.uniform(0.0, 2.0 * np.pi)], phases])

    return ClusterSet(aod_offsets=offsets[0], zod_offsets=offsets[1], aoa_offsets=offsets[2],
                      zoa_offsets=offsets[3], powers=powers, phases=phases, los=los)


def describe_link(layout: NetworkLayout, ue: UEState, sector: Sector, large: LargeScale,
                  shadowing_db: float = 0.0) -> LinkDescriptor:
    """Link descriptor at the UE's current position (nearest wrap-around image)."""
    geometry = link_geometry(layout, ue, sector)
    return LinkDescriptor(aod=float(wrap_angle(geometry.azimuth - sector.boresight)),
                          zod=geometry.zenith_departure,
                          aoa=float(wrap_angle(geometry.azimuth + np.pi)),
                          zoa=geometry.zenith_arrival,
                          los=large.los,
                          pathloss_db=large.pathloss_db + shadowing_db,
                          velocity=(float(ue.velocity[0]), float(ue.velocity[1])),
                          wavelength=layout.wavelength)


def effective_pathloss_db(sector_geom: ArrayGeometry, ue_geom: ArrayGeometry, link: LinkDescriptor,
                          panel_boresight: float = 0.0) -> float:
    """Pathloss minus both element gains along the geometric direction."""
    tx_gain = element_gain_db(sector_geom, link.aod, link.zod)
    rx_gain = element_gain_db(ue_geom, link.aoa - panel_boresight, link.zoa)
    return float(link.pathloss_db - tx_gain - rx_gain)


def channel_matrix(sector_geom: ArrayGeometry, ue_geom: ArrayGeometry, link: LinkDescriptor,
                   clusters: ClusterSet, t: float, panel_boresight: float = 0.0) -> ChannelRealization:
    """
    Evaluate H(t) = sum_c g_c e^{j w_c t} a_rx(AoA_c) a_tx(AoD_c)^H.

    Steering vectors carry sqrt(M) so that E[|H|_F^2] = M_rx M_tx 10^(-PL/10)
    for the effective pathloss.
    """
    if clusters.los != link.los:
        raise ValueError("Cluster set and link disagree on the LoS state")
    pathloss = effective_pathloss_db(sector_geom, ue_geom, link, panel_boresight)
    amplitude = 10.0 ** (-pathloss / 20.0)

    aod = link.aod + clusters.aod_offsets
    zod = np.clip(link.zod + clusters.zod_offsets, 0.0, np.pi)
    aoa = link.aoa + clusters.aoa_offsets
    zoa = np.clip(link.zoa + clusters.zoa_offsets, 0.0, np.pi)

    a_tx = steering_matrix(sector_geom, azimuth_to_theta(aod), zod) * math.sqrt(sector_geom.n_elements)
    a_rx = steering_matrix(ue_geom, azimuth_to_theta(wrap_angle(aoa - panel_boresight)), zoa) \
        * math.sqrt(ue_geom.n_elements)

    vx, vy = link.velocity
    doppler = 2.0 * np.pi / link.wavelength * np.sin(zoa) * (vx * np.cos(aoa) + vy * np.sin(aoa))
    gains = amplitude * np.sqrt(clusters.powers) * np.exp(1j * (clusters.phases + doppler * t))

    h = np.einsum("c,cr,ct->rt", gains, a_rx, a_tx.conj())
    if not np.all(np.isfinite(h)):
        logger.error(f"Non-finite channel entries for link {link}")
        raise ValueError("Channel matrix has non-finite entries")
    params = [(float(aod[c]), float(aoa[c]), complex(gains[c]), float(doppler[c])) for c in range(len(clusters))]
    return ChannelRealization(h=h, los=link.los, pathloss_db=pathloss, cluster_params=params)


def channel_realization(sector_geom: ArrayGeometry, ue_geom: ArrayGeometry, link: LinkDescriptor, t: float,
                        seed: int, channel_cfg: Optional[ChannelConfig] = None,
                        panel_boresight: float = 0.0) -> ChannelRealization:
    """Draw the clusters for ``seed`` and evaluate the channel at time ``t``."""
    clusters = draw_clusters(link.los, channel_cfg or ChannelConfig(), seed)
    return channel_matrix(sector_geom, ue_geom, link, clusters, t, panel_boresight)

"""
Hexagonal multi-site deployment, UE drops, mobility and large-scale fading.

Pathloss and LoS probability follow the 3GPP TR 38.901 UMa formulas; the
shadowing is a lognormal AR(1) process along each UE trajectory.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.constants import speed_of_light

from src.core.config import SimConfig, logger

# Sector boresights (degrees) for 3-sector sites
THREE_SECTOR_BORESIGHTS_DEG = (30.0, 150.0, 270.0)

# Effective environment height for the UMa breakpoint distance (m)
ENVIRONMENT_HEIGHT_M = 1.0

# 38.901 formulas are defined from 10 m onwards
MIN_PATHLOSS_DISTANCE_M = 10.0

# Cluster-tiling coefficients (i, j) for wrap-around: |shift|^2 = i^2 + i*j + j^2 sites
WRAP_COEFFICIENTS = {7: (2, 1), 19: (3, 2)}

MAX_REFLECTION_TRIES = 16


def _unit(angle: np.ndarray) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def wrap_angle(angle: np.ndarray) -> np.ndarray:
    """Wrap angles to [-pi, pi)."""
    return np.mod(np.asarray(angle) + np.pi, 2.0 * np.pi) - np.pi


# ---------------------------------------------------
# Layout
# ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class Sector:
    sector_id: int
    site_id: int
    position: np.ndarray      # site position (2,)
    boresight: float          # radians
    half_width: float         # coverage half-width around the boresight
    images: np.ndarray        # site position and its wrap-around images (K, 2)


@dataclass(frozen=True, eq=False)
class NetworkLayout:
    n_sites: int
    sectors_per_site: int
    isd: float
    gnb_height: float
    ue_height: float
    carrier_hz: float
    wrap_around: bool
    min_distance: float
    sector_orientations: Tuple[float, ...]
    sites: np.ndarray
    sectors: Tuple[Sector, ...]

    @property
    def wavelength(self) -> float:
        return speed_of_light / self.carrier_hz

    @property
    def cell_radius(self) -> float:
        """Circumradius of the hexagonal site cell."""
        return self.isd / math.sqrt(3.0)


def hex_site_positions(n_sites: int, isd: float) -> np.ndarray:
    """Site centers of a 1-, 7- or 19-site hexagonal grid, neighbours at 30 + 60k degrees."""
    if n_sites not in (1, 7, 19):
        raise ValueError(f"Unsupported site count {n_sites}, must be 1, 7 or 19")
    sites = [np.zeros(2)]
    ring_angles = np.radians(30.0 + 60.0 * np.arange(6))
    if n_sites >= 7:
        sites.extend(isd * _unit(ring_angles))
    if n_sites == 19:
        sites.extend(2.0 * isd * _unit(ring_angles))
        sites.extend(math.sqrt(3.0) * isd * _unit(np.radians(60.0 * np.arange(6))))
    return np.array(sites)


def wrap_shifts(n_sites: int, isd: float) -> np.ndarray:
    """Translation vectors of the six neighbouring cluster copies (plus the origin)."""
    i, j = WRAP_COEFFICIENTS[n_sites]
    base = isd * (i * _unit(np.radians(30.0)) + j * _unit(np.radians(90.0)))
    rotations = np.radians(60.0 * np.arange(6))
    cos, sin = np.cos(rotations), np.sin(rotations)
    shifts = np.stack([cos * base[0] - sin * base[1], sin * base[0] + cos * base[1]], axis=-1)
    return np.vstack([np.zeros((1, 2)), shifts])


def build_layout(config: SimConfig) -> NetworkLayout:
    """
    Build the site grid and sector descriptors.

    Args:
        config: Simulator configuration

    Returns:
        NetworkLayout whose ``sectors`` hold boresights and wrap-around images
    """
    lc = config.layout
    sites = hex_site_positions(lc.n_sites, lc.isd_m)
    wrap = lc.wrap_around and lc.n_sites > 1
    if lc.wrap_around and not wrap:
        logger.warning("Wrap-around needs 7 or 19 sites, disabled for a single site")
    shifts = wrap_shifts(lc.n_sites, lc.isd_m) if wrap else np.zeros((1, 2))

    if lc.sectors_per_site == 3:
        orientations = tuple(math.radians(b) for b in THREE_SECTOR_BORESIGHTS_DEG)
        half_width = math.pi / 3.0
    else:
        orientations = (0.0,)
        half_width = math.pi

    sectors = []
    for site_id, site in enumerate(sites):
        for boresight in orientations:
            sectors.append(Sector(sector_id=len(sectors), site_id=site_id, position=site,
                                  boresight=boresight, half_width=half_width, images=site + shifts))

    layout = NetworkLayout(n_sites=lc.n_sites, sectors_per_site=lc.sectors_per_site, isd=lc.isd_m,
                           gnb_height=lc.gnb_height_m, ue_height=lc.ue_height_m, carrier_hz=lc.carrier_hz,
                           wrap_around=wrap, min_distance=lc.min_distance_m, sector_orientations=orientations,
                           sites=sites, sectors=tuple(sectors))
    logger.debug(f"Layout built: {lc.n_sites} sites, {len(sectors)} sectors, wrap_around={wrap}")
    return layout


def in_sector_coverage(layout: NetworkLayout, sector: Sector, xy: np.ndarray) -> np.ndarray:
    """True where points lie in the site hexagon, inside the sector wedge and beyond the minimum distance."""
    rel = np.atleast_2d(xy) - sector.position
    normals = _unit(np.radians(30.0 + 60.0 * np.arange(6)))
    inside_hex = np.all(rel @ normals.T <= layout.isd / 2.0 + 1e-9, axis=-1)
    dist = np.linalg.norm(rel, axis=-1)
    offset = wrap_angle(np.arctan2(rel[:, 1], rel[:, 0]) - sector.boresight)
    in_wedge = np.abs(offset) <= sector.half_width + 1e-12
    return inside_hex & in_wedge & (dist >= layout.min_distance)


# ---------------------------------------------------
# UEs and mobility
# ---------------------------------------------------

@dataclass(eq=False)
class UEState:
    """Mutable UE state owned by one simulation loop."""

    ue_id: int
    position: np.ndarray                       # (x, y, z) meters
    velocity: np.ndarray                       # (vx, vy) m/s
    panel_orientations: Tuple[float, float]    # panel boresight azimuths (radians)
    serving_sector: int
    rng_seed: int
    travelled_m: float = 0.0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.rng_seed)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))


def drop_ues(layout: NetworkLayout, n_per_sector: int, seed: int, speed_mps: float = 0.0,
             n_panels: int = 2) -> List[UEState]:
    """
    Drop UEs uniformly in every sector's coverage polygon.

    Each UE gets a random heading for its panels and an independent random
    direction of motion at the given speed.
    """
    if n_per_sector < 1:
        raise ValueError(f"n_per_sector must be >= 1, got {n_per_sector}")
    rng = np.random.default_rng(seed)
    radius = layout.cell_radius
    ues: List[UEState] = []
    for sector in layout.sectors:
        accepted = 0
        while accepted < n_per_sector:
            candidates = sector.position + rng.uniform(-radius, radius, size=(4 * n_per_sector, 2))
            for xy in candidates[in_sector_coverage(layout, sector, candidates)]:
                if accepted == n_per_sector:
                    break
                heading = rng.uniform(0.0, 2.0 * np.pi)
                direction = rng.uniform(0.0, 2.0 * np.pi)
                panels = (heading + np.pi / 2, heading - np.pi / 2) if n_panels == 2 else (heading,)
                ues.append(UEState(ue_id=len(ues),
                                   position=np.array([xy[0], xy[1], layout.ue_height]),
                                   velocity=speed_mps * _unit(direction),
                                   panel_orientations=tuple(float(p) for p in panels),
                                   serving_sector=sector.sector_id,
                                   rng_seed=int(rng.integers(2**31 - 1))))
                accepted += 1
    return ues


def step_mobility(ue: UEState, dt: float, layout: Optional[NetworkLayout] = None) -> UEState:
    """
    Advance a UE along a straight line for ``dt`` seconds.

    With a layout, a step that would leave the serving sector's coverage
    redraws the direction (same speed) until the step stays inside; if no
    direction fits, the UE turns around and stays put for this step.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    speed = ue.speed
    if speed == 0.0:
        return ue
    step = ue.velocity * dt
    target = ue.position[:2] + step
    if layout is not None:
        sector = layout.sectors[ue.serving_sector]
        tries = 0
        while not in_sector_coverage(layout, sector, target)[0]:
            if tries == MAX_REFLECTION_TRIES:
                ue.velocity = -ue.velocity
                return ue
            ue.velocity = speed * _unit(ue.rng.uniform(0.0, 2.0 * np.pi))
            step = ue.velocity * dt
            target = ue.position[:2] + step
            tries += 1
    ue.position = np.array([target[0], target[1], ue.position[2]])
    ue.travelled_m += speed * dt
    return ue


# ---------------------------------------------------
# Large-scale fading
# ---------------------------------------------------

def los_probability(d2d: np.ndarray, h_ut: float = 1.5) -> np.ndarray:
    """UMa LoS probability; 1 up to 18 m, then the 38.901 decay."""
    d2d = np.maximum(np.asarray(d2d, dtype=float), 1e-9)
    c_h = 0.0 if h_ut <= 13.0 else ((h_ut - 13.0) / 10.0) ** 1.5
    decay = (18.0 / d2d + np.exp(-d2d / 63.0) * (1.0 - 18.0 / d2d)) * \
        (1.0 + c_h * 1.25 * (d2d / 100.0) ** 3 * np.exp(-d2d / 150.0))
    return np.where(d2d <= 18.0, 1.0, decay)


def uma_pathloss_db(d2d: np.ndarray, los: np.ndarray, carrier_hz: float, h_bs: float, h_ut: float) -> np.ndarray:
    """
    UMa pathloss (dB) from the 38.901 LoS/NLoS formulas.

    NLoS is floored at the LoS value; distances below 10 m are evaluated at 10 m.
    """
    d2d = np.maximum(np.asarray(d2d, dtype=float), MIN_PATHLOSS_DISTANCE_M)
    fc_ghz = carrier_hz / 1e9
    d3d = np.sqrt(d2d ** 2 + (h_bs - h_ut) ** 2)
    d_bp = 4.0 * (h_bs - ENVIRONMENT_HEIGHT_M) * (h_ut - ENVIRONMENT_HEIGHT_M) * carrier_hz / speed_of_light
    pl1 = 28.0 + 22.0 * np.log10(d3d) + 20.0 * np.log10(fc_ghz)
    pl2 = 28.0 + 40.0 * np.log10(d3d) + 20.0 * np.log10(fc_ghz) - 9.0 * np.log10(d_bp ** 2 + (h_bs - h_ut) ** 2)
    pl_los = np.where(d2d <= d_bp, pl1, pl2)
    pl_nlos = 13.54 + 39.08 * np.log10(d3d) + 20.0 * np.log10(fc_ghz) - 0.6 * (h_ut - 1.5)
    return np.where(np.asarray(los, dtype=bool), pl_los, np.maximum(pl_los, pl_nlos))


@dataclass(frozen=True)
class LinkGeometry:
    d2d: float
    d3d: float
    azimuth: float        # global azimuth from the (nearest image of the) site to the UE
    zenith_departure: float
    zenith_arrival: float
    image: Tuple[float, float]


def link_geometry(layout: NetworkLayout, ue: UEState, sector: Sector) -> LinkGeometry:
    """Geometry towards the nearest wrap-around image of the sector's site."""
    rel = ue.position[:2] - sector.images
    dists = np.linalg.norm(rel, axis=-1)
    k = int(np.argmin(dists))
    d2d = float(max(dists[k], 1e-6))
    dh = layout.gnb_height - ue.position[2]
    elevation = math.atan2(dh, d2d)
    return LinkGeometry(d2d=d2d,
                        d3d=math.hypot(d2d, dh),
                        azimuth=float(math.atan2(rel[k, 1], rel[k, 0])),
                        zenith_departure=math.pi / 2 + elevation,
                        zenith_arrival=math.pi / 2 - elevation,
                        image=(float(sector.images[k, 0]), float(sector.images[k, 1])))


@dataclass(frozen=True)
class LargeScale:
    los: bool
    pathloss_db: float
    shadowing_std_db: float
    geometry: LinkGeometry


def large_scale(layout: NetworkLayout, ue: UEState, sector: Sector, rng: np.random.Generator,
                shadowing_los_db: float = 4.0, shadowing_nlos_db: float = 6.0) -> LargeScale:
    """
    Draw the LoS state of a link and evaluate its distance-dependent pathloss.

    The shadowing standard deviation is returned for the state; the
    correlated shadowing value itself is tracked by ``ShadowingProcess``.
    """
    geometry = link_geometry(layout, ue, sector)
    los = bool(rng.random() < los_probability(geometry.d2d, ue.position[2]))
    pathloss = float(uma_pathloss_db(geometry.d2d, los, layout.carrier_hz, layout.gnb_height, ue.position[2]))
    return LargeScale(los=los, pathloss_db=pathloss,
                      shadowing_std_db=shadowing_los_db if los else shadowing_nlos_db,
                      geometry=geometry)


class ShadowingProcess:
    """Lognormal shadowing correlated along a trajectory (Gudmundson AR(1))."""

    def __init__(self, std_db: float, decorrelation_m: float, rng: np.random.Generator):
        self.std_db = std_db
        self.decorrelation_m = decorrelation_m
        self._rng = rng
        self.value_db = float(rng.normal(0.0, std_db)) if std_db > 0 else 0.0

    def advance(self, distance_m: float) -> float:
        if distance_m > 0 and self.std_db > 0:
            rho = math.exp(-distance_m / self.decorrelation_m)
            innovation = float(self._rng.normal(0.0, self.std_db))
            self.value_db = rho * self.value_db + math.sqrt(1.0 - rho * rho) * innovation
        return self.value_db

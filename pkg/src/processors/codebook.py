"""
UPA steering vectors, CSI-RS / SSB / RX codebooks and Set B selection patterns.

Angle convention: ``theta`` is measured from the horizontal array axis, so a
direction at azimuth offset ``a`` from the panel boresight has
``theta = pi/2 - a``; ``phi`` is the zenith angle (pi/2 on the horizon).
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

from src.core.config import GNB_ELEMENT_PARAMS, UE_ELEMENT_PARAMS, AntennaConfig, logger
from src.schema.contracts import (
    BeamModel,
    CodebookDocument,
    CodebookKind,
    ElementPattern,
    GeometryModel,
    PatternMode,
)

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------
# Domain types
# ---------------------------------------------------

@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array: m_h columns by m_v rows, spacing in wavelengths."""

    m_h: int
    m_v: int
    d_h: float = 0.5
    d_v: float = 0.5
    element_pattern: ElementPattern = ElementPattern.ISOTROPIC
    # 3GPP element pattern: half-power beamwidth, max attenuation, max gain
    hpbw_deg: float = 65.0
    max_attenuation_db: float = 30.0
    max_gain_dbi: float = 8.0

    def __post_init__(self):
        if self.m_h < 1 or self.m_v < 1:
            raise ValueError(f"Array needs at least one element per axis, got ({self.m_h}, {self.m_v})")
        if self.d_h <= 0 or self.d_v <= 0:
            raise ValueError(f"Element spacing must be positive, got ({self.d_h}, {self.d_v})")

    @property
    def n_elements(self) -> int:
        return self.m_h * self.m_v


@dataclass(frozen=True)
class SteeringAngles:
    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta < TWO_PI:
            raise ValueError(f"theta must lie in [0, 2pi), got {self.theta}")
        if not 0.0 <= self.phi <= np.pi:
            raise ValueError(f"phi must lie in [0, pi], got {self.phi}")


@dataclass(frozen=True, eq=False)
class BeamformingVector:
    coefficients: np.ndarray
    angles: SteeringAngles
    beam_id: int


@dataclass(frozen=True, eq=False)
class Codebook:
    geometry: ArrayGeometry
    beams: Tuple[BeamformingVector, ...]
    n_az: int
    n_el: int
    kind: CodebookKind

    def __post_init__(self):
        if len(self.beams) != self.n_az * self.n_el:
            raise ValueError(f"Codebook has {len(self.beams)} beams for a {self.n_az}x{self.n_el} grid")

    def __len__(self) -> int:
        return len(self.beams)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Beamforming vectors stacked as columns, shape (M, N)."""
        return np.stack([b.coefficients for b in self.beams], axis=1)

    @cached_property
    def thetas(self) -> np.ndarray:
        return np.array([b.angles.theta for b in self.beams])

    @cached_property
    def phis(self) -> np.ndarray:
        return np.array([b.angles.phi for b in self.beams])

    def grid_index(self, beam_id: int) -> Tuple[int, int]:
        """(az_idx, el_idx) of a beam; azimuth varies fastest."""
        return beam_id % self.n_az, beam_id // self.n_az


@dataclass(frozen=True)
class SetBPattern:
    mode: PatternMode
    n_set_a: int
    indices: Tuple[int, ...] = ()
    ssb: Optional[Codebook] = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode == PatternMode.SUBSET:
            if not self.indices:
                raise ValueError("Subset pattern needs at least one index")
            if list(self.indices) != sorted(set(self.indices)):
                raise ValueError("Subset pattern indices must be unique and sorted")
            if self.indices[-1] >= self.n_set_a or self.indices[0] < 0:
                raise ValueError(f"Subset pattern index out of range for Set A size {self.n_set_a}")
        elif self.ssb is None or len(self.ssb) == 0:
            raise ValueError("Separate-codebook pattern needs a non-empty SSB codebook")

    def __len__(self) -> int:
        if self.mode == PatternMode.SUBSET:
            return len(self.indices)
        return len(self.ssb)

    @property
    def is_subset(self) -> bool:
        return self.mode == PatternMode.SUBSET


# ---------------------------------------------------
# Steering vectors
# ---------------------------------------------------

def steering_matrix(geometry: ArrayGeometry, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """
    Unit-norm steering vectors for arrays of angles.

    Args:
        geometry: Array geometry
        theta: Azimuth angles (radians), any shape S
        phi: Zenith angles (radians), same shape S

    Returns:
        Complex array of shape S + (m_h * m_v,), entry p*m_v + q is the
        product of horizontal entry p and vertical entry q.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    p = np.arange(geometry.m_h)
    q = np.arange(geometry.m_v)
    horizontal = np.exp(-1j * TWO_PI * geometry.d_h * p * (np.sin(phi) * np.cos(theta))[..., None])
    vertical = np.exp(-1j * TWO_PI * geometry.d_v * q * np.cos(phi)[..., None])
    horizontal /= math.sqrt(geometry.m_h)
    vertical /= math.sqrt(geometry.m_v)
    out = horizontal[..., :, None] * vertical[..., None, :]
    return out.reshape(theta.shape + (geometry.n_elements,))


def steering_vector(geometry: ArrayGeometry, angles: SteeringAngles, beam_id: int = 0) -> BeamformingVector:
    coefficients = steering_matrix(geometry, np.array(angles.theta), np.array(angles.phi))
    return BeamformingVector(coefficients=coefficients, angles=angles, beam_id=beam_id)


def azimuth_to_theta(azimuth_offset: np.ndarray) -> np.ndarray:
    """Map azimuth offsets from boresight (radians) to array-frame theta in [0, 2pi)."""
    return np.mod(np.pi / 2 - np.asarray(azimuth_offset, dtype=float), TWO_PI)


def element_gain_db(geometry: ArrayGeometry, azimuth_offset: np.ndarray, zenith: np.ndarray) -> np.ndarray:
    """
    Element gain (dBi) towards a direction given relative to the panel boresight.

    The sectorized pattern is the 3GPP combination of the vertical and
    horizontal cuts, -min(-(A_V + A_H), A_max) + G_max.
    """
    azimuth_offset = np.asarray(azimuth_offset, dtype=float)
    zenith = np.asarray(zenith, dtype=float)
    if geometry.element_pattern == ElementPattern.ISOTROPIC:
        return np.zeros(np.broadcast(azimuth_offset, zenith).shape)
    az_deg = np.degrees(np.angle(np.exp(1j * azimuth_offset)))
    zen_deg = np.degrees(zenith)
    a_max = geometry.max_attenuation_db
    a_v = -np.minimum(12.0 * ((zen_deg - 90.0) / geometry.hpbw_deg) ** 2, a_max)
    a_h = -np.minimum(12.0 * (az_deg / geometry.hpbw_deg) ** 2, a_max)
    return -np.minimum(-(a_v + a_h), a_max) + geometry.max_gain_dbi


# ---------------------------------------------------
# Codebook construction
# ---------------------------------------------------

def _grid_points(span: Sequence[float], n: int, name: str) -> np.ndarray:
    lo, hi = float(span[0]), float(span[1])
    if hi < lo:
        raise ValueError(f"{name} span must be increasing, got {span}")
    if hi == lo and n > 1:
        raise ValueError(f"{name} span has zero length but {n} beams were requested")
    step = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * step


def build_tx_codebook(geometry: ArrayGeometry,
                      n_az: int,
                      n_el: int,
                      az_span: Sequence[float],
                      el_span: Sequence[float],
                      kind: CodebookKind = CodebookKind.CSIRS) -> Codebook:
    """
    Beams on a uniform angular grid, ordered with the azimuth index fastest.

    Args:
        geometry: Panel geometry
        n_az, n_el: Grid counts
        az_span: Azimuth offsets from boresight (degrees)
        el_span: Zenith angles (degrees)
        kind: Codebook kind tag

    Returns:
        Codebook of n_az * n_el unit-norm beams
    """
    if n_az < 1 or n_el < 1:
        raise ValueError(f"Grid counts must be positive, got ({n_az}, {n_el})")
    az = np.radians(_grid_points(az_span, n_az, "azimuth"))
    zen = np.radians(_grid_points(el_span, n_el, "zenith"))
    thetas = np.tile(azimuth_to_theta(az), n_el)
    phis = np.repeat(zen, n_az)
    vectors = steering_matrix(geometry, thetas, phis)
    beams = tuple(
        BeamformingVector(coefficients=vectors[i], angles=SteeringAngles(float(thetas[i]), float(phis[i])), beam_id=i)
        for i in range(n_az * n_el)
    )
    return Codebook(geometry=geometry, beams=beams, n_az=n_az, n_el=n_el, kind=kind)


def build_ssb_codebook(csirs: Codebook, group_az: int, group_el: int) -> Codebook:
    """
    Wide beams formed as normalized sums of group_az x group_el CSI-RS blocks.

    A final partial block along either axis combines the remaining beams.
    """
    if group_az < 1 or group_el < 1:
        raise ValueError(f"Group sizes must be positive, got ({group_az}, {group_el})")
    if group_az > csirs.n_az or group_el > csirs.n_el:
        raise ValueError(f"Group ({group_az}, {group_el}) exceeds the CSI-RS grid ({csirs.n_az}, {csirs.n_el})")
    n_az = math.ceil(csirs.n_az / group_az)
    n_el = math.ceil(csirs.n_el / group_el)
    beams = []
    for el_block in range(n_el):
        el_rows = range(el_block * group_el, min((el_block + 1) * group_el, csirs.n_el))
        for az_block in range(n_az):
            az_cols = range(az_block * group_az, min((az_block + 1) * group_az, csirs.n_az))
            members = [row * csirs.n_az + col for row in el_rows for col in az_cols]
            combined = csirs.matrix[:, members].sum(axis=1)
            norm = np.linalg.norm(combined)
            if norm < 1e-12:
                raise ValueError(f"SSB block {members} combines to a null vector")
            angles = SteeringAngles(theta=float(np.mean(csirs.thetas[members])),
                                    phi=float(np.mean(csirs.phis[members])))
            beams.append(BeamformingVector(coefficients=combined / norm, angles=angles, beam_id=len(beams)))
    return Codebook(geometry=csirs.geometry, beams=tuple(beams), n_az=n_az, n_el=n_el, kind=CodebookKind.SSB)


def build_rx_codebook(geometry: ArrayGeometry, n_beams: int,
                      az_span: Sequence[float] = (-60.0, 60.0)) -> Codebook:
    """Horizontal RX beams of one UE panel, all steered to the horizon."""
    return build_tx_codebook(geometry, n_beams, 1, az_span, (90.0, 90.0), kind=CodebookKind.RX)


def gnb_array(antenna: AntennaConfig) -> ArrayGeometry:
    """
    gNB array geometry over all Mg x Ng panels, rows by columns.

    Panels abut at the element spacing, so the grid stays uniform. Both
    polarizations carry the same beam and share one geometry.
    """
    hpbw, a_max, gain = GNB_ELEMENT_PARAMS
    rows, cols = antenna.gnb_grid
    return ArrayGeometry(m_h=cols, m_v=rows, d_h=antenna.d_h, d_v=antenna.d_v,
                         element_pattern=antenna.gnb_pattern,
                         hpbw_deg=hpbw, max_attenuation_db=a_max, max_gain_dbi=gain)


def ue_array(antenna: AntennaConfig) -> ArrayGeometry:
    hpbw, a_max, gain = UE_ELEMENT_PARAMS
    return ArrayGeometry(m_h=antenna.ue_n, m_v=antenna.ue_m, element_pattern=antenna.ue_pattern,
                         hpbw_deg=hpbw, max_attenuation_db=a_max, max_gain_dbi=gain)


# ---------------------------------------------------
# Set B patterns
# ---------------------------------------------------

def select_set_b(set_a: Codebook, n_b: int) -> SetBPattern:
    """
    Fixed, evenly strided Set B covering both angular axes of Set A.

    The (n_az_B, n_el_B) split with n_az_B * n_el_B = n_b minimizes
    |stride_az - stride_el|; integer strides come first and remaining ties
    keep more elevation rows. Offset is 0.
    """
    n_a = len(set_a)
    if n_b < 1 or n_b > n_a:
        raise ValueError(f"Set B size must lie in [1, {n_a}], got {n_b}")
    if n_b == n_a:
        return SetBPattern(mode=PatternMode.SUBSET, n_set_a=n_a, indices=tuple(range(n_a)))

    candidates = []
    for n_el_b in range(1, set_a.n_el + 1):
        if n_b % n_el_b:
            continue
        n_az_b = n_b // n_el_b
        if n_az_b > set_a.n_az:
            continue
        stride_az = set_a.n_az / n_az_b
        stride_el = set_a.n_el / n_el_b
        exact = stride_az.is_integer() and stride_el.is_integer()
        candidates.append(((not exact, abs(stride_az - stride_el), stride_el), n_az_b, n_el_b, stride_az, stride_el))

    if not candidates:
        logger.warning(f"Set B size {n_b} does not factor over the {set_a.n_az}x{set_a.n_el} grid, "
                       f"using evenly spaced indices")
        indices = np.unique(np.floor(np.arange(n_b) * n_a / n_b).astype(int))
        return SetBPattern(mode=PatternMode.SUBSET, n_set_a=n_a, indices=tuple(int(i) for i in indices))

    _, n_az_b, n_el_b, stride_az, stride_el = min(candidates, key=lambda c: c[0])
    az_pos = np.floor(np.arange(n_az_b) * stride_az).astype(int)
    el_pos = np.floor(np.arange(n_el_b) * stride_el).astype(int)
    indices = sorted(int(el * set_a.n_az + az) for el in el_pos for az in az_pos)
    return SetBPattern(mode=PatternMode.SUBSET, n_set_a=n_a, indices=tuple(indices))


def separate_pattern(ssb: Codebook, n_set_a: int) -> SetBPattern:
    """Pattern for wide-to-narrow prediction: Set B is the SSB codebook."""
    return SetBPattern(mode=PatternMode.SEPARATE_CODEBOOK, n_set_a=n_set_a, ssb=ssb)


# ---------------------------------------------------
# Serialization
# ---------------------------------------------------

def codebook_to_document(codebook: Codebook) -> CodebookDocument:
    g = codebook.geometry
    return CodebookDocument(
        geometry=GeometryModel(m_h=g.m_h, m_v=g.m_v, d_h=g.d_h, d_v=g.d_v, element_pattern=g.element_pattern),
        kind=codebook.kind,
        n_az=codebook.n_az,
        n_el=codebook.n_el,
        beams=[
            BeamModel(beam_id=b.beam_id, theta_rad=b.angles.theta, phi_rad=b.angles.phi,
                      coeffs=[[float(c.real), float(c.imag)] for c in b.coefficients])
            for b in codebook.beams
        ],
    )


def codebook_from_document(document: CodebookDocument) -> Codebook:
    g = document.geometry
    geometry = ArrayGeometry(m_h=g.m_h, m_v=g.m_v, d_h=g.d_h, d_v=g.d_v, element_pattern=g.element_pattern)
    beams = []
    for beam in document.beams:
        coeffs = np.array([complex(re, im) for re, im in beam.coeffs])
        if coeffs.shape != (geometry.n_elements,):
            raise ValueError(f"Beam {beam.beam_id} has {coeffs.size} coefficients, expected {geometry.n_elements}")
        beams.append(BeamformingVector(coefficients=coeffs,
                                       angles=SteeringAngles(beam.theta_rad, beam.phi_rad),
                                       beam_id=beam.beam_id))
    return Codebook(geometry=geometry, beams=tuple(beams), n_az=document.n_az, n_el=document.n_el, kind=document.kind)

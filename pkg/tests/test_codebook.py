import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.processors.codebook import (
    ArrayGeometry,
    SetBPattern,
    SteeringAngles,
    build_rx_codebook,
    build_ssb_codebook,
    build_tx_codebook,
    codebook_from_document,
    codebook_to_document,
    element_gain_db,
    gnb_array,
    select_set_b,
    separate_pattern,
    steering_matrix,
)
from src.schema.contracts import CodebookKind, PatternMode


@pytest.fixture
def panel():
    return ArrayGeometry(m_h=4, m_v=2)


@pytest.fixture
def set_a(panel):
    return build_tx_codebook(panel, 4, 2, (-60.0, 60.0), (90.0, 135.0))


def test_steering_vectors_are_unit_norm(panel):
    thetas = np.linspace(0.1, 3.0, 5)
    phis = np.full(5, np.pi / 2)
    vectors = steering_matrix(panel, thetas, phis)
    assert vectors.shape == (5, panel.n_elements)
    np.testing.assert_allclose(np.linalg.norm(vectors, axis=-1), 1.0)


def test_tx_codebook_grid_order(set_a, panel):
    assert len(set_a) == 8
    assert set_a.matrix.shape == (panel.n_elements, 8)
    assert set_a.kind == CodebookKind.CSIRS
    # azimuth fastest: beams 0..3 share the first zenith row
    assert np.allclose(set_a.phis[:4], set_a.phis[0])
    assert not np.isclose(set_a.phis[4], set_a.phis[0])
    assert set_a.grid_index(5) == (1, 1)
    np.testing.assert_allclose(np.linalg.norm(set_a.matrix, axis=0), 1.0)


def test_each_beam_points_at_its_own_direction(set_a, panel):
    directions = steering_matrix(panel, set_a.thetas, set_a.phis)
    gains = np.abs(directions.conj() @ set_a.matrix)
    assert np.array_equal(np.argmax(gains, axis=1), np.arange(len(set_a)))


def test_tx_codebook_rejects_empty_grid(panel):
    with pytest.raises(ValueError):
        build_tx_codebook(panel, 0, 2, (-60.0, 60.0), (90.0, 135.0))


def test_ssb_codebook_groups_blocks(set_a):
    ssb = build_ssb_codebook(set_a, 2, 1)
    assert len(ssb) == 4
    assert (ssb.n_az, ssb.n_el) == (2, 2)
    assert ssb.kind == CodebookKind.SSB
    np.testing.assert_allclose(np.linalg.norm(ssb.matrix, axis=0), 1.0)


def test_ssb_partial_block(set_a):
    ssb = build_ssb_codebook(set_a, 3, 2)
    assert (ssb.n_az, ssb.n_el) == (2, 1)


def test_ssb_group_larger_than_grid(set_a):
    with pytest.raises(ValueError):
        build_ssb_codebook(set_a, 5, 1)


def test_rx_codebook_is_horizontal():
    rx = build_rx_codebook(ArrayGeometry(m_h=4, m_v=1), 4)
    assert len(rx) == 4
    assert rx.kind == CodebookKind.RX
    np.testing.assert_allclose(rx.phis, np.pi / 2)


def test_set_b_strided_subset(set_a):
    pattern = select_set_b(set_a, 4)
    assert pattern.mode == PatternMode.SUBSET
    assert pattern.indices == (0, 2, 4, 6)
    assert len(pattern) == 4


def test_set_b_full_size_is_identity(set_a):
    assert select_set_b(set_a, 8).indices == tuple(range(8))


@pytest.mark.parametrize("n_b", [0, 9])
def test_set_b_size_out_of_range(set_a, n_b):
    with pytest.raises(ValueError):
        select_set_b(set_a, n_b)


def test_subset_pattern_validation():
    with pytest.raises(ValueError):
        SetBPattern(PatternMode.SUBSET, 8, (2, 0))
    with pytest.raises(ValueError):
        SetBPattern(PatternMode.SUBSET, 8, (0, 8))
    with pytest.raises(ValueError):
        SetBPattern(PatternMode.SEPARATE_CODEBOOK, 8)


def test_separate_pattern_uses_ssb(set_a):
    ssb = build_ssb_codebook(set_a, 2, 1)
    pattern = separate_pattern(ssb, len(set_a))
    assert not pattern.is_subset
    assert len(pattern) == 4


def test_steering_angle_ranges():
    with pytest.raises(ValueError):
        SteeringAngles(theta=2 * np.pi, phi=1.0)
    with pytest.raises(ValueError):
        SteeringAngles(theta=1.0, phi=-0.1)


def test_array_geometry_validation():
    with pytest.raises(ValueError):
        ArrayGeometry(m_h=0, m_v=2)
    with pytest.raises(ValueError):
        ArrayGeometry(m_h=2, m_v=2, d_h=0.0)


def test_isotropic_elements_have_no_gain(panel):
    gains = element_gain_db(panel, np.array([0.0, 1.0]), np.array([np.pi / 2, 2.0]))
    np.testing.assert_allclose(gains, 0.0)


def test_codebook_document_keeps_coefficients(set_a):
    restored = codebook_from_document(codebook_to_document(set_a))
    np.testing.assert_allclose(restored.matrix, set_a.matrix)
    assert (restored.n_az, restored.n_el, restored.kind) == (4, 2, CodebookKind.CSIRS)


def test_gnb_array_spans_every_panel(small_config):
    antenna = small_config.replace(antenna__gnb_mg=2, antenna__gnb_ng=3).antenna
    geometry = gnb_array(antenna)
    assert (geometry.m_v, geometry.m_h) == (2 * 2, 4 * 3)
    assert geometry.d_h == antenna.d_h


# ---------------------------------------------------
# Properties
# ---------------------------------------------------

def _direct_steering(geometry, theta, phi):
    """Element-by-element steering vector, index p * m_v + q."""
    out = np.empty(geometry.n_elements, dtype=complex)
    for p in range(geometry.m_h):
        for q in range(geometry.m_v):
            phase = geometry.d_h * p * np.sin(phi) * np.cos(theta) + geometry.d_v * q * np.cos(phi)
            out[p * geometry.m_v + q] = np.exp(-2j * np.pi * phase)
    return out / np.sqrt(geometry.n_elements)


@settings(max_examples=1000, deadline=None)
@given(m_h=st.integers(1, 8), m_v=st.integers(1, 4),
       d_h=st.sampled_from([0.5, 0.7]), d_v=st.sampled_from([0.5, 0.8]),
       theta=st.floats(0.0, 2 * np.pi, exclude_max=True), phi=st.floats(0.0, np.pi))
def test_kronecker_steering_matches_direct_sum(m_h, m_v, d_h, d_v, theta, phi):
    geometry = ArrayGeometry(m_h=m_h, m_v=m_v, d_h=d_h, d_v=d_v)
    vector = steering_matrix(geometry, np.array(theta), np.array(phi))
    np.testing.assert_allclose(vector, _direct_steering(geometry, theta, phi), rtol=0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(m_h=st.integers(1, 8), m_v=st.integers(1, 4), n_az=st.integers(1, 8), n_el=st.integers(1, 4))
def test_unit_ssb_grouping_is_identity(m_h, m_v, n_az, n_el):
    csirs = build_tx_codebook(ArrayGeometry(m_h=m_h, m_v=m_v), n_az, n_el, (-60.0, 60.0), (90.0, 135.0))
    ssb = build_ssb_codebook(csirs, 1, 1)
    assert (ssb.n_az, ssb.n_el) == (n_az, n_el)
    np.testing.assert_allclose(ssb.matrix, csirs.matrix, rtol=0, atol=1e-12)
    np.testing.assert_allclose(ssb.thetas, csirs.thetas, rtol=0, atol=1e-12)

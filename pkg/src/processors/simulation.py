"""
Per-drop simulation loop.

One drop places UEs, moves them for ``n_instants`` measurement periods and
records, per UE and instant, the filtered genie Set A, the model-input
measurements, the instantaneous serving-beam RSRP under the selected RX beam
and the interference seen on every RX beam.
"""

from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.core.config import SimConfig, logger
from src.processors.channel import ClusterSet, channel_matrix, describe_link, draw_clusters
from src.processors.codebook import (
    ArrayGeometry,
    Codebook,
    SetBPattern,
    build_rx_codebook,
    build_ssb_codebook,
    build_tx_codebook,
    gnb_array,
    select_set_b,
    separate_pattern,
    ue_array,
)
from src.processors.deployment import (
    LargeScale,
    NetworkLayout,
    ShadowingProcess,
    UEState,
    build_layout,
    drop_ues,
    large_scale,
    link_geometry,
    step_mobility,
    uma_pathloss_db,
)
from src.processors.measurement import (
    LinkBudget,
    RsrpVector,
    RxBeamSelector,
    build_report,
    l1_filter,
    measure_set,
    watts_to_dbm,
)
from src.schema.contracts import LayoutDocument, MeasurementReportRecord, SectorModel, UETrajectoryModel, UseCase


@dataclass(frozen=True, eq=False)
class BeamContext:
    """Geometries, codebooks and Set B pattern shared by every drop of one configuration."""

    gnb: ArrayGeometry
    ue: ArrayGeometry
    set_a: Codebook
    ssb: Codebook
    rx_codebooks: Tuple[Codebook, ...]
    pattern: SetBPattern
    link: LinkBudget

    @property
    def input_codebook(self) -> Codebook:
        return self.set_a if self.pattern.is_subset else self.ssb

    @property
    def n_rx(self) -> int:
        return sum(len(c) for c in self.rx_codebooks)


def build_context(config: SimConfig) -> BeamContext:
    cb = config.codebook
    gnb = gnb_array(config.antenna)
    ue = ue_array(config.antenna)
    set_a = build_tx_codebook(gnb, cb.set_a_az, cb.set_a_el, cb.az_span_deg, cb.zenith_span_deg)
    ssb = build_ssb_codebook(set_a, cb.ssb_group_az, cb.ssb_group_el)
    rx = build_rx_codebook(ue, cb.ue_beams_per_panel)
    if config.use_case == UseCase.SBP1:
        pattern = separate_pattern(ssb, len(set_a))
    else:
        pattern = select_set_b(set_a, cb.set_b_size)
    rows, cols = config.antenna.gnb_grid
    logger.debug(f"gNB array {rows}x{cols} x{config.antenna.gnb_p} polarizations "
                 f"({config.antenna.gnb_elements} elements), Set A {len(set_a)}, SSB {len(ssb)}, Set B {len(pattern)}")
    return BeamContext(gnb=gnb, ue=ue, set_a=set_a, ssb=ssb,
                       rx_codebooks=tuple(rx for _ in range(config.antenna.ue_panels)),
                       pattern=pattern, link=LinkBudget.downlink(config.link))


@dataclass(eq=False)
class DropTrace:
    """Everything one drop produced; arrays are indexed (ue, instant, ...)."""

    drop_id: int
    antenna_label: str
    speed_kmph: float
    times: np.ndarray                  # (T,)
    ue_ids: np.ndarray                 # (U,)
    serving_sector: np.ndarray         # (U,)
    los: np.ndarray                    # (U,) serving-link LoS state
    positions: np.ndarray              # (U, T, 2)
    set_a_genie_dbm: np.ndarray        # (U, T, N_A) L1-filtered, noise-free
    set_a_label_dbm: np.ndarray        # (U, T, N_A) label source (noisy in noisy-label mode)
    serving_rsrp_dbm: np.ndarray       # (U, T, N_A) instantaneous, under the selected RX beam
    best_rx: np.ndarray                # (U, T, N_A)
    input_dbm: np.ndarray              # (U, T, N_in) L1-filtered input-codebook measurements
    interference_dbm: np.ndarray       # (U, T, N_rx) per RX beam
    noise_dbm: float
    layout: Optional[NetworkLayout] = None

    @property
    def n_ues(self) -> int:
        return len(self.ue_ids)

    @property
    def n_instants(self) -> int:
        return len(self.times)

    def sector_loads(self) -> Dict[int, int]:
        """Number of UEs served by each sector."""
        sectors, counts = np.unique(self.serving_sector, return_counts=True)
        return {int(s): int(c) for s, c in zip(sectors, counts)}

    def input_vector(self, u: int, t: int, codebook_ref: str) -> RsrpVector:
        return RsrpVector(values_dbm=self.input_dbm[u, t], codebook_ref=codebook_ref, timestamp=float(self.times[t]))

    def reports(self, context: BeamContext, n_s: int) -> Iterator[MeasurementReportRecord]:
        """Set B measurement reports of every UE and instant."""
        ref = context.input_codebook.kind.value
        for u in range(self.n_ues):
            for t in range(self.n_instants):
                report = build_report(self.input_vector(u, t, ref), context.pattern, n_s)
                yield report.to_record(int(self.ue_ids[u]), self.drop_id)

    def to_layout_document(self) -> LayoutDocument:
        if self.layout is None:
            raise ValueError("Trace was built without its layout")
        lay = self.layout
        return LayoutDocument(
            n_sites=lay.n_sites, sectors_per_site=lay.sectors_per_site, isd_m=lay.isd, wrap_around=lay.wrap_around,
            sectors=[SectorModel(sector_id=s.sector_id, site_id=s.site_id, x=float(s.position[0]),
                                 y=float(s.position[1]), boresight_rad=s.boresight) for s in lay.sectors],
            ues=[UETrajectoryModel(ue_id=int(self.ue_ids[u]), serving_sector=int(self.serving_sector[u]),
                                   speed_mps=self.speed_kmph / 3.6,
                                   positions=[(float(x), float(y)) for x, y in self.positions[u]])
                 for u in range(self.n_ues)],
        )


class _Link:
    """Per (UE, sector) state kept across instants."""

    def __init__(self, los: bool, pathloss_db: float, shadowing: ShadowingProcess, clusters: ClusterSet):
        self.los = los
        self.pathloss_db = pathloss_db
        self.shadowing = shadowing
        self.clusters = clusters


def _panel_channels(context: BeamContext, layout: NetworkLayout, ue: UEState, sector_id: int,
                    state: _Link, t: float) -> List[np.ndarray]:
    sector = layout.sectors[sector_id]
    geometry = link_geometry(layout, ue, sector)
    pathloss = float(uma_pathloss_db(geometry.d2d, state.los, layout.carrier_hz, layout.gnb_height, ue.position[2]))
    large = LargeScale(los=state.los, pathloss_db=pathloss, shadowing_std_db=state.shadowing.std_db, geometry=geometry)
    link = describe_link(layout, ue, sector, large, state.shadowing.value_db)
    return [channel_matrix(context.gnb, context.ue, link, state.clusters, t, boresight).h
            for boresight in ue.panel_orientations[:len(context.rx_codebooks)]]


def simulate_drop(config: SimConfig, drop_id: int, context: Optional[BeamContext] = None,
                  seed: Optional[int] = None) -> DropTrace:
    """
    Simulate one drop.

    Args:
        config: Simulator configuration
        drop_id: Drop index, also mixed into the drop seed
        context: Prebuilt codebooks (built from ``config`` when omitted)
        seed: Base seed, ``config.seeds.drop`` by default

    Returns:
        DropTrace with per-UE, per-instant measurements
    """
    context = context or build_context(config)
    base_seed = config.seeds.drop if seed is None else seed
    rng = np.random.default_rng([base_seed, drop_id])
    layout = build_layout(config)
    ues = drop_ues(layout, config.layout.ues_per_sector, int(rng.integers(2**31 - 1)), config.ue_speed_mps,
                   n_panels=config.antenna.ue_panels)
    mc = config.measurement
    ch = config.channel
    n_t = config.dataset.n_instants
    n_sectors = len(layout.sectors)
    n_a = len(context.set_a)
    n_in = len(context.input_codebook)
    n_rx = context.n_rx
    interference_seed = int(rng.integers(2**31 - 1))

    links: Dict[Tuple[int, int], _Link] = {}
    for ue in ues:
        for sector in layout.sectors:
            large = large_scale(layout, ue, sector, rng, ch.shadowing_los_db, ch.shadowing_nlos_db)
            shadowing = ShadowingProcess(large.shadowing_std_db, ch.shadowing_decorrelation_m, rng)
            clusters = draw_clusters(large.los, ch, int(rng.integers(2**31 - 1)))
            links[(ue.ue_id, sector.sector_id)] = _Link(large.los, large.pathloss_db, shadowing, clusters)

    shape = (len(ues), n_t)
    positions = np.zeros(shape + (2,))
    genie = np.zeros(shape + (n_a,))
    labels = np.zeros(shape + (n_a,))
    serving = np.zeros(shape + (n_a,))
    best_rx = np.zeros(shape + (n_a,), dtype=int)
    inputs = np.zeros(shape + (n_in,))
    interference = np.zeros(shape + (n_rx,))
    times = np.arange(n_t) * mc.interval_s

    # Interfering sectors transmit one random Set A beam per instant, shared by all UEs
    interferer_beams = np.random.default_rng([interference_seed, drop_id]).integers(n_a, size=(n_t, n_sectors))
    rx_matrix = [c.matrix for c in context.rx_codebooks]

    for u, ue in enumerate(ues):
        noise_rng = np.random.default_rng(ue.rng_seed + 1)
        genie_selector = RxBeamSelector(mc.rx_window)
        noisy_selector = RxBeamSelector(mc.rx_window)
        input_selector = RxBeamSelector(mc.rx_window)
        genie_hist, label_hist, input_hist = deque(maxlen=mc.l1_window), deque(maxlen=mc.l1_window), \
            deque(maxlen=mc.l1_window)

        for k, t in enumerate(times):
            if k > 0:
                before = ue.travelled_m
                step_mobility(ue, mc.interval_s, layout)
                for sector in layout.sectors:
                    links[(ue.ue_id, sector.sector_id)].shadowing.advance(ue.travelled_m - before)
            positions[u, k] = ue.position[:2]

            channels = _panel_channels(context, layout, ue, ue.serving_sector, links[(ue.ue_id, ue.serving_sector)], t)
            genie_vec = measure_set(channels, context.set_a, context.rx_codebooks, context.link, t,
                                    selector=genie_selector, floor_dbm=mc.rsrp_floor_dbm)
            genie_hist.append(genie_vec)
            genie[u, k] = l1_filter(genie_hist, mc.l1_window).values_dbm
            serving[u, k] = genie_vec.values_dbm
            best_rx[u, k] = genie_vec.rx_beams

            if mc.noisy_labels or (mc.noisy_inputs and context.pattern.is_subset):
                noisy_vec = measure_set(channels, context.set_a, context.rx_codebooks, context.link, t,
                                        selector=noisy_selector, with_noise=True, rng=noise_rng,
                                        floor_dbm=mc.rsrp_floor_dbm)
            else:
                noisy_vec = genie_vec
            label_hist.append(noisy_vec if mc.noisy_labels else genie_vec)
            labels[u, k] = l1_filter(label_hist, mc.l1_window).values_dbm

            if context.pattern.is_subset:
                input_vec = noisy_vec if mc.noisy_inputs else genie_vec
            else:
                input_vec = measure_set(channels, context.ssb, context.rx_codebooks, context.link, t,
                                        selector=input_selector, with_noise=mc.noisy_inputs, rng=noise_rng,
                                        floor_dbm=mc.rsrp_floor_dbm)
            input_hist.append(input_vec)
            inputs[u, k] = l1_filter(input_hist, mc.l1_window).values_dbm

            interference_w = np.zeros(n_rx)
            for sector in layout.sectors:
                if sector.sector_id == ue.serving_sector:
                    continue
                beam = context.set_a.matrix[:, interferer_beams[k, sector.sector_id]]
                panel_h = _panel_channels(context, layout, ue, sector.sector_id,
                                          links[(ue.ue_id, sector.sector_id)], t)
                interference_w += np.concatenate(
                    [np.abs(rx.conj().T @ (h @ beam)) ** 2 for rx, h in zip(rx_matrix, panel_h)])
            interference[u, k] = watts_to_dbm(context.link.tx_power_w * interference_w, mc.rsrp_floor_dbm)

    trace = DropTrace(drop_id=drop_id, antenna_label=config.antenna.label, speed_kmph=config.ue_speed_kmph,
                      times=times, ue_ids=np.array([ue.ue_id for ue in ues]),
                      serving_sector=np.array([ue.serving_sector for ue in ues]),
                      los=np.array([links[(ue.ue_id, ue.serving_sector)].los for ue in ues]),
                      positions=positions, set_a_genie_dbm=genie, set_a_label_dbm=labels, serving_rsrp_dbm=serving,
                      best_rx=best_rx, input_dbm=inputs, interference_dbm=interference,
                      noise_dbm=context.link.noise_power_dbm, layout=layout)
    logger.info(f"Drop {drop_id}: {trace.n_ues} UEs x {n_t} instants over {n_sectors} sectors "
                f"({int(trace.los.sum())} LoS serving links)")
    return trace

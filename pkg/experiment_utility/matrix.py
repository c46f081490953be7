"""
Experiment matrix presets.

Cells are named ``<CASE>_<N_B>_<N_A>``; generalization cells append the
test condition, e.g. ``SBP2_16_64@4x16`` or ``TBP_16_32@120kmph``.
"""

from typing import Callable, Dict, List, Sequence

from src.core.config import SBP_SET_A_GRID, SSB_GROUP, TBP_SET_A_GRID, SimConfig
from src.core.errors import ConfigError
from src.core.service import MatrixCell

SBP_SET_B_SIZES = (8, 16, 32)
TBP_SET_B_SIZES = (32, 16, 8)
GENERALIZATION_ANTENNAS = ((4, 4), (4, 16))
GENERALIZATION_SPEEDS_KMPH = (60.0, 120.0)


def cell_name(config: SimConfig) -> str:
    return f"{config.use_case.value.upper()}_{config.n_set_b}_{config.n_set_a}"


def _sbp(base: SimConfig, use_case: str, n_b: int) -> SimConfig:
    return base.replace(use_case=use_case, ue_speed_kmph=3.0, codebook__set_a_az=SBP_SET_A_GRID[0],
                        codebook__set_a_el=SBP_SET_A_GRID[1], codebook__ssb_group_az=SSB_GROUP[0],
                        codebook__ssb_group_el=SSB_GROUP[1], codebook__set_b_size=n_b)


def _tbp(base: SimConfig, n_b: int, speed_kmph: float = 30.0) -> SimConfig:
    return base.replace(use_case="tbp", ue_speed_kmph=speed_kmph, codebook__set_a_az=TBP_SET_A_GRID[0],
                        codebook__set_a_el=TBP_SET_A_GRID[1], codebook__set_b_size=n_b)


def sbp_sweep(base: SimConfig) -> List[MatrixCell]:
    """Narrow-to-narrow with Set B of 8, 16 and 32 out of 64."""
    return [MatrixCell(cell_name(cfg), cfg) for cfg in (_sbp(base, "sbp2", n_b) for n_b in SBP_SET_B_SIZES)]


def sbp1_cell(base: SimConfig) -> List[MatrixCell]:
    cfg = _sbp(base, "sbp1", 16)
    return [MatrixCell(cell_name(cfg), cfg)]


def tbp_sweep(base: SimConfig) -> List[MatrixCell]:
    return [MatrixCell(cell_name(cfg), cfg) for cfg in (_tbp(base, n_b) for n_b in TBP_SET_B_SIZES)]


def antenna_generalization(base: SimConfig) -> List[MatrixCell]:
    """SBP2_16_64 trained on the configured 4x8 panel, tested on 4x4 and 4x16."""
    train = _sbp(base, "sbp2", 16).replace(antenna__gnb_m=4, antenna__gnb_n=8)
    cells = [MatrixCell(f"{cell_name(train)}@{train.antenna.label}", train)]
    for m, n in GENERALIZATION_ANTENNAS:
        test = train.replace(antenna__gnb_m=m, antenna__gnb_n=n)
        cells.append(MatrixCell(f"{cell_name(train)}@{test.antenna.label}", train, test))
    return cells


def speed_generalization(base: SimConfig) -> List[MatrixCell]:
    """TBP_16_32 trained at 30 km/h, tested at 30, 60 and 120 km/h."""
    train = _tbp(base, 16)
    cells = [MatrixCell(f"{cell_name(train)}@30kmph", train)]
    for speed in GENERALIZATION_SPEEDS_KMPH:
        test = train.replace(ue_speed_kmph=speed)
        cells.append(MatrixCell(f"{cell_name(train)}@{speed:g}kmph", train, test))
    return cells


PRESETS: Dict[str, Callable[[SimConfig], List[MatrixCell]]] = {
    "sbp-sweep": sbp_sweep,
    "sbp1": sbp1_cell,
    "tbp-sweep": tbp_sweep,
    "antenna": antenna_generalization,
    "speed": speed_generalization,
}


def build_matrix(base: SimConfig, presets: Sequence[str]) -> List[MatrixCell]:
    """Cells of the named presets in order; ``all`` expands to every preset."""
    names = list(PRESETS) if "all" in presets else list(presets)
    unknown = [n for n in names if n not in PRESETS]
    if unknown:
        raise ConfigError(f"Unknown matrix presets {unknown}; choose from {sorted(PRESETS)} or 'all'")
    return [cell for name in names for cell in PRESETS[name](base)]

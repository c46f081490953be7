"""
Non-learning serving policies and the observation they decide on.

Every policy ranks Set A beams for one target instant; ties always go to the
lower beam index.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.core.interfaces import BeamPolicyInterface, PredictorInterface
from src.processors.measurement import MeasurementReport, RsrpVector
from src.schema.contracts import PolicyKind


@dataclass(frozen=True, eq=False)
class Observation:
    """What the network knows when choosing the beam for one UE and target instant."""

    current_report: MeasurementReport     # Set B report at the target instant
    held_report: MeasurementReport        # Set B report used by sample-and-hold
    model_input: np.ndarray
    genie_dbm: np.ndarray                 # filtered genie Set A at the target instant

    @property
    def n_set_a(self) -> int:
        return len(self.genie_dbm)


def _rank_from_ids(first: Sequence[int], n_set_a: int) -> np.ndarray:
    """Given beams first, then the remaining Set A beams in ascending order."""
    head = [int(b) for b in first]
    seen = set(head)
    return np.array(head + [b for b in range(n_set_a) if b not in seen], dtype=int)


def rank_by_value(values: np.ndarray) -> np.ndarray:
    """Indices sorted by descending value, lower index first on ties."""
    values = np.asarray(values)
    return np.lexsort((np.arange(len(values)), -values))


def _require_subset(report: MeasurementReport) -> None:
    if not report.entries:
        raise ValueError("Report is empty")
    if not report.set_b_ref.is_subset:
        raise ValueError("Set B baselines need a subset pattern; SSB reports do not index Set A")


def baseline_strongest_set_b(report: MeasurementReport) -> int:
    """Set A index of the strongest reported Set B beam."""
    _require_subset(report)
    return report.entries[0][0]


def sample_and_hold(report_t: MeasurementReport) -> Tuple[int, int]:
    """Strongest Set B beam at t, kept for t and t+1."""
    beam = baseline_strongest_set_b(report_t)
    return beam, beam


def exhaustive_genie(set_a_rsrp: Union[RsrpVector, np.ndarray]) -> int:
    values = set_a_rsrp.values_dbm if isinstance(set_a_rsrp, RsrpVector) else np.asarray(set_a_rsrp)
    return int(np.argmax(values))


# ---------------------------------------------------
# Policies
# ---------------------------------------------------

class StrongestSetBPolicy(BeamPolicyInterface):
    kind = PolicyKind.STRONGEST_SET_B

    def rank(self, observation: Observation) -> np.ndarray:
        _require_subset(observation.current_report)
        return _rank_from_ids(observation.current_report.beam_ids, observation.n_set_a)


class SampleAndHoldPolicy(BeamPolicyInterface):
    kind = PolicyKind.SAMPLE_AND_HOLD

    def rank(self, observation: Observation) -> np.ndarray:
        _require_subset(observation.held_report)
        return _rank_from_ids(observation.held_report.beam_ids, observation.n_set_a)


class ExhaustiveGeniePolicy(BeamPolicyInterface):
    kind = PolicyKind.EXHAUSTIVE_GENIE

    def rank(self, observation: Observation) -> np.ndarray:
        return rank_by_value(observation.genie_dbm)


class ModelPolicy(BeamPolicyInterface):
    """Ranks beams by the predictor's probabilities."""

    kind = PolicyKind.MODEL

    def __init__(self, predictor: PredictorInterface):
        self.predictor = predictor

    def rank(self, observation: Observation) -> np.ndarray:
        probs = self.predictor.predict_proba(observation.model_input[None, :])[0]
        return rank_by_value(probs)

    def rank_batch(self, inputs: np.ndarray) -> np.ndarray:
        probs = self.predictor.predict_proba(inputs)
        return np.stack([rank_by_value(p) for p in probs])


def make_policy(kind: PolicyKind, predictor: Optional[PredictorInterface] = None) -> BeamPolicyInterface:
    if kind == PolicyKind.MODEL:
        if predictor is None:
            raise ValueError("The model policy needs trained weights")
        return ModelPolicy(predictor)
    return {
        PolicyKind.STRONGEST_SET_B: StrongestSetBPolicy,
        PolicyKind.SAMPLE_AND_HOLD: SampleAndHoldPolicy,
        PolicyKind.EXHAUSTIVE_GENIE: ExhaustiveGeniePolicy,
    }[kind]()

"""
The three predictor families, their sizing rule and Top-K inference.

    sbp1-dnn      dense - relu - dense - relu - dense
    sbp2-cnn-dnn  conv1d(16, width 3) over Set B - relu - dense - relu - dense
    tbp-lstm-cnn  per-step conv1d(4, width 3) - relu - lstm - dense

Hidden widths are picked from ``HIDDEN_CANDIDATES`` so that the parameter
count lands closest to the middle of the family's budget.
"""

import base64
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.core.config import SBP_BUDGET, TBP_BUDGET, logger
from src.core.errors import ConfigError, NumericalError, SchemaMismatchError
from src.core.interfaces import PredictorInterface
from src.models.layers import (
    LSTM,
    Conv1D,
    Dense,
    Flatten,
    ReLU,
    Reshape,
    Sequential,
    TimeDistributed,
    softmax,
)
from src.processors.dataset import DatasetSchema
from src.schema.contracts import ModelFamily, TensorModel, TrainingCurveModel, UseCase, WeightsDocument

HIDDEN_CANDIDATES = (32, 48, 64, 96, 128, 160, 192, 256, 320, 384, 512)
CONV_WIDTH = 3
SBP2_CONV_FILTERS = 16
TBP_CONV_FILTERS = 4
WEIGHTS_FORMAT_VERSION = 1
MAX_WEIGHTS_BYTES = 1_000_000

FAMILY_FOR_USE_CASE = {
    UseCase.SBP1: ModelFamily.SBP1_DNN,
    UseCase.SBP2: ModelFamily.SBP2_CNN_DNN,
    UseCase.TBP: ModelFamily.TBP_LSTM_CNN,
}


@dataclass(frozen=True)
class ModelConfig:
    family: ModelFamily
    input_dim: int
    output_dim: int
    hidden: int
    n_set_b: int
    l_o: int = 1
    conv_filters: int = 0
    param_count: int = 0
    macs: int = 0

    @property
    def budget(self) -> Tuple[int, int, int, int]:
        """(min params, max params, max MACs, max serialized bytes)."""
        return TBP_BUDGET if self.family == ModelFamily.TBP_LSTM_CNN else SBP_BUDGET

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["family"] = self.family.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        return cls(**{**data, "family": ModelFamily(data["family"])})


def _layers(family: ModelFamily, input_dim: int, output_dim: int, hidden: int, n_set_b: int, l_o: int,
            rng: np.random.Generator) -> Sequential:
    if family == ModelFamily.SBP1_DNN:
        return Sequential([Dense(input_dim, hidden, rng), ReLU(), Dense(hidden, hidden, rng), ReLU(),
                           Dense(hidden, output_dim, rng)])
    if family == ModelFamily.SBP2_CNN_DNN:
        return Sequential([Reshape((n_set_b, 1)), Conv1D(1, SBP2_CONV_FILTERS, CONV_WIDTH, n_set_b, rng), ReLU(),
                           Flatten(), Dense(n_set_b * SBP2_CONV_FILTERS, hidden, rng), ReLU(),
                           Dense(hidden, output_dim, rng)])
    return Sequential([Reshape((l_o, n_set_b, 1)),
                       TimeDistributed(Conv1D(1, TBP_CONV_FILTERS, CONV_WIDTH, n_set_b, rng), l_o), ReLU(),
                       Reshape((l_o, n_set_b * TBP_CONV_FILTERS)),
                       LSTM(n_set_b * TBP_CONV_FILTERS, hidden, l_o, rng),
                       Dense(hidden, output_dim, rng)])


def model_config_for(schema: DatasetSchema, hidden: Optional[int] = None, enforce_budget: bool = True) -> ModelConfig:
    """
    Size a model for a dataset schema.

    Raises:
        ConfigError: no candidate width fits the parameter and MAC budgets
    """
    family = FAMILY_FOR_USE_CASE[schema.use_case]
    l_o = schema.l_o if family == ModelFamily.TBP_LSTM_CNN else 1
    filters = {ModelFamily.SBP2_CNN_DNN: SBP2_CONV_FILTERS, ModelFamily.TBP_LSTM_CNN: TBP_CONV_FILTERS}.get(family, 0)
    lo, hi, max_macs, _ = TBP_BUDGET if family == ModelFamily.TBP_LSTM_CNN else SBP_BUDGET
    sizing_rng = np.random.default_rng(0)

    def sized(width: int) -> ModelConfig:
        net = _layers(family, schema.input_dim, schema.n_set_a, width, schema.n_set_b, l_o, sizing_rng)
        return ModelConfig(family=family, input_dim=schema.input_dim, output_dim=schema.n_set_a, hidden=width,
                           n_set_b=schema.n_set_b, l_o=l_o, conv_filters=filters,
                           param_count=net.n_params, macs=net.macs)

    if hidden is not None:
        config = sized(hidden)
        if enforce_budget:
            check_budget(config)
        return config
    fitting = [c for c in map(sized, HIDDEN_CANDIDATES) if lo <= c.param_count <= hi and c.macs <= max_macs]
    if not fitting:
        raise ConfigError(f"No {family.value} width fits {lo}-{hi} parameters for schema {schema}")
    best = min(fitting, key=lambda c: (abs(c.param_count - (lo + hi) / 2), c.hidden))
    logger.info(f"{family.value}: hidden={best.hidden}, {best.param_count} parameters, {best.macs} MACs")
    return best


def check_budget(config: ModelConfig) -> None:
    lo, hi, max_macs, _ = config.budget
    if not lo <= config.param_count <= hi:
        raise ConfigError(f"{config.family.value} has {config.param_count} parameters, budget is {lo}-{hi}")
    if config.macs > max_macs:
        raise ConfigError(f"{config.family.value} needs {config.macs} MACs, budget is {max_macs}")


@dataclass(frozen=True, eq=False)
class PredictionOutput:
    probs: np.ndarray
    top_k: List[int]


def predict_top_k(output: PredictionOutput, k: int) -> List[int]:
    """The k most probable beams, ties to the lower index."""
    return top_k_indices(output.probs, k)


def top_k_indices(probs: np.ndarray, k: int) -> List[int]:
    probs = np.asarray(probs)
    if not 1 <= k <= probs.shape[-1]:
        raise ValueError(f"k must lie in [1, {probs.shape[-1]}], got {k}")
    order = np.lexsort((np.arange(probs.shape[-1]), -probs))
    return [int(i) for i in order[:k]]


class BeamPredictor(PredictorInterface):
    """A sized network plus its config and seed."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = seed
        self.network = _layers(config.family, config.input_dim, config.output_dim, config.hidden,
                               config.n_set_b, config.l_o, np.random.default_rng(seed))
        self.curve = TrainingCurveModel()

    def logits(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        if inputs.shape[1] != self.config.input_dim:
            raise ValueError(f"Input width {inputs.shape[1]} does not match model input {self.config.input_dim}")
        return self.network.forward(inputs)

    def predict_proba(self, inputs: np.ndarray) -> np.ndarray:
        return softmax(self.logits(inputs))

    def forward(self, x: np.ndarray) -> PredictionOutput:
        """Prediction for a single input vector."""
        probs = self.predict_proba(np.asarray(x)[None, :])[0]
        return PredictionOutput(probs=probs, top_k=top_k_indices(probs, len(probs)))

    def parameters(self) -> Dict[str, np.ndarray]:
        return dict(self.network.named_parameters())

    def gradients(self) -> Dict[str, np.ndarray]:
        return dict(self.network.named_gradients())

    def check_finite(self) -> None:
        for name, value in self.network.named_parameters():
            if not np.all(np.isfinite(value)):
                raise NumericalError(f"Parameter {name} has non-finite values")

    def __repr__(self) -> str:
        return f"BeamPredictor({self.config.family.value}, hidden={self.config.hidden}, params={self.config.param_count})"


# ---------------------------------------------------
# Weights document
# ---------------------------------------------------

def _encode(name: str, array: np.ndarray) -> TensorModel:
    data = np.ascontiguousarray(array, dtype="<f4")
    return TensorModel(name=name, shape=list(array.shape), dtype="float32",
                       data_b64=base64.b64encode(data.tobytes()).decode("ascii"))


def _decode(tensor: TensorModel) -> np.ndarray:
    raw = base64.b64decode(tensor.data_b64)
    return np.frombuffer(raw, dtype="<f4").astype(float).reshape(tensor.shape)


def weights_to_document(predictor: BeamPredictor, extra_config: Optional[Dict[str, Any]] = None) -> WeightsDocument:
    predictor.check_finite()
    config = predictor.config.to_dict()
    if extra_config:
        config.update(extra_config)
    return WeightsDocument(format_version=WEIGHTS_FORMAT_VERSION, config=config, seed=predictor.seed,
                           tensors=[_encode(name, value) for name, value in predictor.network.named_parameters()],
                           curve=predictor.curve)


def weights_from_document(document: WeightsDocument, schema: Optional[DatasetSchema] = None) -> BeamPredictor:
    """Rebuild a predictor; ``schema`` guards against loading weights for another configuration."""
    if document.format_version != WEIGHTS_FORMAT_VERSION:
        raise SchemaMismatchError(f"Unsupported weights format {document.format_version}")
    fields = {k: document.config[k] for k in ModelConfig.__dataclass_fields__ if k in document.config}
    config = ModelConfig.from_dict(fields)
    if schema is not None:
        expected = model_config_for(schema, hidden=config.hidden, enforce_budget=False)
        if (expected.family, expected.input_dim, expected.output_dim) != \
                (config.family, config.input_dim, config.output_dim):
            raise SchemaMismatchError(f"Weights for {config.family.value} {config.input_dim}->{config.output_dim} "
                                      f"do not match schema {schema}")
    predictor = BeamPredictor(config, document.seed)
    params = predictor.parameters()
    names = [t.name for t in document.tensors]
    if sorted(names) != sorted(params):
        raise SchemaMismatchError(f"Weights tensors {names} do not match the network")
    for tensor in document.tensors:
        value = _decode(tensor)
        if value.shape != params[tensor.name].shape:
            raise SchemaMismatchError(f"Tensor {tensor.name} has shape {value.shape}, "
                                      f"expected {params[tensor.name].shape}")
        params[tensor.name][...] = value
    predictor.curve = document.curve
    predictor.check_finite()
    return predictor

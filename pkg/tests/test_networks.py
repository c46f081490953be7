import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from database.repository import dumps
from src.core.config import SBP_BUDGET, TBP_BUDGET
from src.core.errors import ConfigError, NumericalError, SchemaMismatchError
from src.models.networks import (
    MAX_WEIGHTS_BYTES,
    BeamPredictor,
    PredictionOutput,
    model_config_for,
    predict_top_k,
    top_k_indices,
    weights_from_document,
    weights_to_document,
)
from src.processors.dataset import DatasetSchema
from src.schema.contracts import ModelFamily, UseCase

SBP2_64 = DatasetSchema(UseCase.SBP2, 16, 64)
SBP1_64 = DatasetSchema(UseCase.SBP1, 16, 64)
TBP_32 = DatasetSchema(UseCase.TBP, 16, 32, l_o=5, l_p=1)


@pytest.mark.parametrize("schema,budget", [(SBP2_64, SBP_BUDGET), (SBP1_64, SBP_BUDGET), (TBP_32, TBP_BUDGET)])
def test_auto_sizing_fits_budget(schema, budget):
    config = model_config_for(schema)
    lo, hi, max_macs, _ = budget
    assert lo <= config.param_count <= hi
    assert config.macs <= max_macs
    assert config.output_dim == schema.n_set_a
    assert config.input_dim == schema.input_dim


def test_families():
    assert model_config_for(SBP2_64).family == ModelFamily.SBP2_CNN_DNN
    assert model_config_for(SBP1_64).family == ModelFamily.SBP1_DNN
    tbp = model_config_for(TBP_32)
    assert tbp.family == ModelFamily.TBP_LSTM_CNN
    assert tbp.l_o == 5


def test_fixed_width_outside_budget():
    with pytest.raises(ConfigError):
        model_config_for(SBP2_64, hidden=8)
    config = model_config_for(SBP2_64, hidden=8, enforce_budget=False)
    assert config.hidden == 8


def test_auto_sized_weights_fit_size_budget():
    predictor = BeamPredictor(model_config_for(SBP2_64), seed=0)
    assert len(dumps(weights_to_document(predictor))) <= MAX_WEIGHTS_BYTES


@pytest.mark.parametrize("schema", [SBP2_64, SBP1_64, TBP_32])
def test_predict_proba_is_distribution(schema):
    predictor = BeamPredictor(model_config_for(schema, hidden=16, enforce_budget=False), seed=1)
    probs = predictor.predict_proba(np.random.default_rng(0).standard_normal((3, schema.input_dim)))
    assert probs.shape == (3, schema.n_set_a)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_input_width_checked():
    predictor = BeamPredictor(model_config_for(SBP2_64, hidden=16, enforce_budget=False), seed=1)
    with pytest.raises(ValueError):
        predictor.predict_proba(np.zeros((1, 15)))


def test_forward_ranks_all_beams():
    predictor = BeamPredictor(model_config_for(SBP2_64, hidden=16, enforce_budget=False), seed=2)
    output = predictor.forward(np.zeros(16))
    assert sorted(output.top_k) == list(range(64))
    assert output.top_k[0] == int(np.argmax(output.probs))


def test_top_k_ties_go_to_lower_index():
    assert top_k_indices(np.array([0.2, 0.4, 0.4, 0.0]), 3) == [1, 2, 0]
    output = PredictionOutput(probs=np.array([0.1, 0.6, 0.3]), top_k=[1, 2, 0])
    assert predict_top_k(output, 2) == [1, 2]
    with pytest.raises(ValueError):
        top_k_indices(np.array([0.5, 0.5]), 3)


def test_same_seed_same_weights():
    config = model_config_for(SBP2_64, hidden=16, enforce_budget=False)
    a, b = BeamPredictor(config, seed=5), BeamPredictor(config, seed=5)
    for name, value in a.parameters().items():
        np.testing.assert_array_equal(value, b.parameters()[name])


def test_weights_document_restores_predictions():
    predictor = BeamPredictor(model_config_for(TBP_32, hidden=16, enforce_budget=False), seed=3)
    # float32 storage: compare against float32-rounded parameters
    for value in predictor.parameters().values():
        value[...] = value.astype(np.float32)
    document = weights_to_document(predictor, extra_config={"config_hash": "abc"})
    assert document.config["config_hash"] == "abc"
    restored = weights_from_document(document, TBP_32)
    x = np.random.default_rng(1).standard_normal((2, TBP_32.input_dim))
    np.testing.assert_allclose(restored.predict_proba(x), predictor.predict_proba(x))


def test_weights_for_other_schema_rejected():
    predictor = BeamPredictor(model_config_for(SBP2_64, hidden=16, enforce_budget=False), seed=3)
    document = weights_to_document(predictor)
    with pytest.raises(SchemaMismatchError):
        weights_from_document(document, DatasetSchema(UseCase.SBP2, 8, 64))


def test_non_finite_weights_are_not_saved():
    predictor = BeamPredictor(model_config_for(SBP2_64, hidden=16, enforce_budget=False), seed=3)
    next(iter(predictor.parameters().values()))[0] = np.nan
    with pytest.raises(NumericalError):
        weights_to_document(predictor)


# Coarse values so that ties are common
_probability_rows = st.integers(2, 64).flatmap(
    lambda n: st.tuples(arrays(np.float64, n, elements=st.sampled_from([0.0, 0.05, 0.1, 0.25, 0.5]) | st.floats(0.0, 1.0)),
                        st.integers(1, n)))


@settings(max_examples=1000, deadline=None)
@given(_probability_rows)
def test_top_k_is_prefix_of_stable_sort(row):
    probs, k = row
    expected = sorted(range(len(probs)), key=lambda i: (-probs[i], i))[:k]
    assert top_k_indices(probs, k) == expected

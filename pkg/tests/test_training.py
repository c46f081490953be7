import numpy as np
import pytest

from src.core.config import TrainingConfig
from src.core.errors import SchemaMismatchError
from src.models.networks import BeamPredictor, model_config_for
from src.models.training import Adam, StepLR, accuracy, train, train_arrays
from src.processors.dataset import Dataset, DatasetSchema, TrainingSample
from src.schema.contracts import SampleMeta, Split, UseCase

SCHEMA = DatasetSchema(UseCase.SBP2, 4, 4)


def _separable(n_per_class=20, seed=0):
    """Label = position of the strongest of four inputs."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(4), n_per_class)
    x = rng.uniform(-1.0, -0.5, size=(len(labels), 4))
    x[np.arange(len(labels)), labels] = 0.0
    return x, labels


def _dataset(x, y):
    samples = [TrainingSample(input=row, label=int(label),
                              meta=SampleMeta(ue_id=i, drop_id=0, t=0.0, speed_kmph=3.0, antenna_config="4x8"))
               for i, (row, label) in enumerate(zip(x, y))]
    splits = [Split.TRAIN if i % 5 < 3 else (Split.VAL if i % 5 == 3 else Split.TEST) for i in range(len(y))]
    return Dataset(samples=samples, splits=splits, schema=SCHEMA)


def test_adam_moves_against_gradient():
    params = {"w": np.array([1.0, -1.0])}
    Adam(lr=0.1).step(params, {"w": np.array([2.0, -3.0])})
    # first bias-corrected step has magnitude lr
    np.testing.assert_allclose(params["w"], [0.9, -0.9], atol=1e-6)


def test_step_lr_schedule():
    optimizer = Adam(lr=0.01)
    scheduler = StepLR(optimizer, step_size=2, gamma=0.5)
    rates = [scheduler.step() for _ in range(5)]
    assert rates == pytest.approx([0.01, 0.005, 0.005, 0.0025, 0.0025])


def test_step_lr_first_decay_after_step_size():
    scheduler = StepLR(Adam(lr=0.01), step_size=20, gamma=0.5)
    rates = [scheduler.step() for _ in range(40)]
    assert rates[0] == pytest.approx(0.01)
    assert rates[18] == pytest.approx(0.01)
    assert rates[19] == pytest.approx(0.005)
    assert rates[39] == pytest.approx(0.0025)


def test_step_lr_every_epoch_decays_on_first_step():
    optimizer = Adam(lr=0.01)
    assert StepLR(optimizer, step_size=1, gamma=0.5).step() == pytest.approx(0.01 * 0.5)
    assert optimizer.lr == pytest.approx(0.005)


def test_training_learns_separable_task():
    x, y = _separable()
    predictor = BeamPredictor(model_config_for(SCHEMA, hidden=16, enforce_budget=False), seed=0)
    hyper = TrainingConfig(lr0=0.02, epochs=60, batch_size=16, step_epochs=30)
    curve = train_arrays(predictor, x, y, hyper, seed=0)
    assert len(curve.train_loss) == 60
    assert curve.train_loss[-1] < curve.train_loss[0]
    assert accuracy(predictor, x, y) > 0.9
    assert all(v is None for v in curve.val_loss)


def test_overfits_ten_samples():
    schema = DatasetSchema(UseCase.SBP2, 8, 16)
    rng = np.random.default_rng(5)
    x = rng.uniform(-1.0, 0.0, size=(10, 8))
    y = rng.integers(16, size=10)
    predictor = BeamPredictor(model_config_for(schema, hidden=32, enforce_budget=False), seed=0)
    hyper = TrainingConfig(lr0=0.01, epochs=500, batch_size=10, step_epochs=500, log_every=100)
    train_arrays(predictor, x, y, hyper, seed=0)
    assert accuracy(predictor, x, y) == 1.0


def test_training_is_reproducible():
    x, y = _separable()
    hyper = TrainingConfig(epochs=3, batch_size=8)
    config = model_config_for(SCHEMA, hidden=16, enforce_budget=False)
    a, b = BeamPredictor(config, seed=1), BeamPredictor(config, seed=1)
    train_arrays(a, x, y, hyper, seed=2)
    train_arrays(b, x, y, hyper, seed=2)
    for name, value in a.parameters().items():
        np.testing.assert_array_equal(value, b.parameters()[name])


def test_train_uses_splits():
    x, y = _separable()
    hyper = TrainingConfig(epochs=2, batch_size=8, step_epochs=1)
    predictor, curve = train(model_config_for(SCHEMA, hidden=16, enforce_budget=False), _dataset(x, y), hyper, seed=0)
    assert len(curve.val_loss) == 2
    assert all(v is not None and np.isfinite(v) for v in curve.val_loss)
    assert curve.learning_rate == pytest.approx([0.01, 0.005])
    assert predictor.curve is curve


def test_train_rejects_other_schema():
    x, y = _separable()
    config = model_config_for(DatasetSchema(UseCase.SBP2, 4, 8), hidden=16, enforce_budget=False)
    with pytest.raises(SchemaMismatchError):
        train(config, _dataset(x, y), TrainingConfig(epochs=1), seed=0)


def test_empty_training_set():
    predictor = BeamPredictor(model_config_for(SCHEMA, hidden=16, enforce_budget=False), seed=0)
    with pytest.raises(ValueError):
        train_arrays(predictor, np.zeros((0, 4)), np.zeros(0, dtype=int), TrainingConfig(), seed=0)

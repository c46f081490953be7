"""
Adam + StepLR minibatch training of a BeamPredictor.
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np

from src.core.config import TrainingConfig, logger
from src.core.errors import NumericalError, SchemaMismatchError
from src.models.layers import cross_entropy_loss, softmax, softmax_cross_entropy_grad
from src.models.networks import BeamPredictor, ModelConfig
from src.processors.dataset import Dataset
from src.schema.contracts import Split, TrainingCurveModel


class Adam:
    """Adam with bias-corrected moments; parameters are updated in place."""

    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, value in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(value)
                self.v[name] = np.zeros_like(value)
            self.m[name] *= self.beta1
            self.m[name] += (1.0 - self.beta1) * g
            self.v[name] *= self.beta2
            self.v[name] += (1.0 - self.beta2) * (g * g)
            value -= (self.lr / bc1) * self.m[name] / (np.sqrt(self.v[name] / bc2) + self.eps)


class StepLR:
    """
    Multiply the learning rate by ``gamma`` every ``step_size`` epochs.

    ``step()`` is called once per finished epoch; after n calls the rate is
    lr0 * gamma ** (n // step_size). The first decay comes after
    ``step_size`` calls, so only ``step_size=1`` gives lr0 * gamma after the
    first call.
    """

    def __init__(self, optimizer: Adam, step_size: int, gamma: float):
        self.optimizer = optimizer
        self.step_size = step_size
        self.gamma = gamma
        self.base_lr = optimizer.lr
        self.epoch = 0

    def step(self) -> float:
        self.epoch += 1
        self.optimizer.lr = self.base_lr * self.gamma ** (self.epoch // self.step_size)
        return self.optimizer.lr


def _batch_loss(predictor: BeamPredictor, inputs: np.ndarray, labels: np.ndarray) -> float:
    return cross_entropy_loss(predictor.predict_proba(inputs), labels)


def train_arrays(predictor: BeamPredictor, x_train: np.ndarray, y_train: np.ndarray,
                 hyper: TrainingConfig, seed: int, x_val: Optional[np.ndarray] = None,
                 y_val: Optional[np.ndarray] = None) -> TrainingCurveModel:
    """
    Train in place on arrays and return the per-epoch curve.

    Raises:
        NumericalError: a non-finite loss or parameter appears
    """
    if len(y_train) == 0:
        raise ValueError("Training set is empty")
    rng = np.random.default_rng(seed)
    optimizer = Adam(hyper.lr0, hyper.beta1, hyper.beta2, hyper.eps)
    scheduler = StepLR(optimizer, hyper.step_epochs, hyper.gamma)
    params = predictor.parameters()
    curve = TrainingCurveModel()

    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(y_train))
        total, seen = 0.0, 0
        for start in range(0, len(order), hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            predictor.network.zero_grad()
            probs = softmax(predictor.logits(x_train[batch]))
            loss = cross_entropy_loss(probs, y_train[batch])
            if not math.isfinite(loss):
                logger.error(f"Non-finite training loss at epoch {epoch}, batch starting {start}")
                raise NumericalError(f"Training loss became {loss} at epoch {epoch}")
            predictor.network.backward(softmax_cross_entropy_grad(probs, y_train[batch]))
            optimizer.step(params, predictor.gradients())
            total += loss * len(batch)
            seen += len(batch)
        predictor.check_finite()

        train_loss = total / seen
        val_loss = _batch_loss(predictor, x_val, y_val) if x_val is not None and len(y_val) else None
        curve.train_loss.append(train_loss)
        curve.val_loss.append(val_loss)
        curve.learning_rate.append(optimizer.lr)
        scheduler.step()
        if epoch == 1 or epoch % hyper.log_every == 0 or epoch == hyper.epochs:
            shown = "n/a" if val_loss is None else f"{val_loss:.4f}"
            logger.info(f"Epoch {epoch}/{hyper.epochs}: train_loss={train_loss:.4f} val_loss={shown} "
                        f"lr={curve.learning_rate[-1]:.5f}")
    predictor.curve = curve
    return curve


def train(config: ModelConfig, dataset: Dataset, hyper: TrainingConfig, seed: int) -> Tuple[BeamPredictor, TrainingCurveModel]:
    """
    Build and train a predictor on the dataset's train split, validating on val.

    Raises:
        SchemaMismatchError: dataset and model disagree on input or output size
        NumericalError: training diverged
    """
    if dataset.schema.input_dim != config.input_dim or dataset.schema.n_set_a != config.output_dim:
        raise SchemaMismatchError(f"Dataset schema {dataset.schema} does not fit model "
                                  f"{config.input_dim}->{config.output_dim}")
    x_train, y_train = dataset.arrays(Split.TRAIN)
    x_val, y_val = dataset.arrays(Split.VAL)
    predictor = BeamPredictor(config, seed)
    logger.info(f"Training {predictor!r} on {len(y_train)} samples ({len(y_val)} validation)")
    curve = train_arrays(predictor, x_train, y_train, hyper, seed, x_val, y_val)
    return predictor, curve


def accuracy(predictor: BeamPredictor, inputs: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(predictor.predict_proba(inputs), axis=1) == labels))

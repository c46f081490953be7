"""
Numpy layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during ``forward``;
``backward`` takes the gradient of the loss w.r.t. the layer output, stores
parameter gradients in ``grads`` and returns the gradient w.r.t. the input.
Shapes are batch-first.
"""

import math
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

LOG_CLAMP = 1e-12


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Layer:
    """Base layer: no parameters, identity shapes."""

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.macs = 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for name, value in self.params.items():
            self.grads[name] = np.zeros_like(value)

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def __repr__(self) -> str:
        shapes = ", ".join(f"{k}={v.shape}" for k, v in self.params.items())
        return f"{type(self).__name__}({shapes})"


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.params = {"W": _uniform_fan_in(rng, n_in, (n_in, n_out)), "b": np.zeros(n_out)}
        self.macs = n_in * n_out
        self._x: Optional[np.ndarray] = None
        self.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class Reshape(Layer):
    """Reshape the non-batch dimensions."""

    def __init__(self, shape: Sequence[int]):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._in_shape)


class Flatten(Reshape):
    def __init__(self):
        super().__init__((-1,))


class Conv1D(Layer):
    """
    'Same'-padded 1-D convolution over (batch, length, channels) via im2col.
    """

    def __init__(self, in_channels: int, out_channels: int, width: int, length: int, rng: np.random.Generator):
        super().__init__()
        if width % 2 == 0:
            raise ValueError(f"Convolution width must be odd for 'same' padding, got {width}")
        self.width = width
        self.pad = width // 2
        fan_in = width * in_channels
        self.params = {"W": _uniform_fan_in(rng, fan_in, (fan_in, out_channels)), "b": np.zeros(out_channels)}
        self.macs = length * fan_in * out_channels
        self.zero_grad()

    def _columns(self, x: np.ndarray) -> np.ndarray:
        length = x.shape[1]
        padded = np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0)))
        cols = np.stack([padded[:, j:j + length, :] for j in range(self.width)], axis=2)
        return cols.reshape(x.shape[0], length, -1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        self._cols = self._columns(x)
        return self._cols @ self.params["W"] + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        batch, length, channels = self._in_shape
        fan_in = self.params["W"].shape[0]
        self.grads["W"] = self._cols.reshape(-1, fan_in).T @ dy.reshape(-1, dy.shape[-1])
        self.grads["b"] = dy.sum(axis=(0, 1))
        dcols = (dy @ self.params["W"].T).reshape(batch, length, self.width, channels)
        dpadded = np.zeros((batch, length + 2 * self.pad, channels))
        for j in range(self.width):
            dpadded[:, j:j + length, :] += dcols[:, :, j, :]
        return dpadded[:, self.pad:self.pad + length, :]


class TimeDistributed(Layer):
    """Apply a layer independently to every step of a (batch, steps, ...) input."""

    def __init__(self, layer: Layer, steps: int):
        super().__init__()
        self.layer = layer
        self.params = layer.params
        self.grads = layer.grads
        self.macs = steps * layer.macs

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._lead = x.shape[:2]
        y = self.layer.forward(x.reshape((-1,) + x.shape[2:]))
        return y.reshape(self._lead + y.shape[1:])

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = self.layer.backward(dy.reshape((-1,) + dy.shape[2:]))
        self.grads = self.layer.grads
        return dx.reshape(self._lead + dx.shape[1:])

    def zero_grad(self) -> None:
        self.layer.zero_grad()
        self.grads = self.layer.grads


class LSTM(Layer):
    """
    Single recurrent layer returning the last hidden state.

    Gate order in the stacked weights: input, forget, cell, output.
    """

    def __init__(self, n_in: int, hidden: int, steps: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.params = {
            "W": _uniform_fan_in(rng, hidden, (n_in, 4 * hidden)),
            "U": _uniform_fan_in(rng, hidden, (hidden, 4 * hidden)),
            "b": np.zeros(4 * hidden),
        }
        self.macs = steps * 4 * hidden * (n_in + hidden)
        self.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        batch, steps, _ = x.shape
        hd = self.hidden
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        h = np.zeros((batch, hd))
        c = np.zeros((batch, hd))
        self._cache: List[Tuple[np.ndarray, ...]] = []
        for t in range(steps):
            z = x[:, t, :] @ W + h @ U + b
            i = _sigmoid(z[:, :hd])
            f = _sigmoid(z[:, hd:2 * hd])
            g = np.tanh(z[:, 2 * hd:3 * hd])
            o = _sigmoid(z[:, 3 * hd:])
            c_next = f * c + i * g
            h_next = o * np.tanh(c_next)
            self._cache.append((x[:, t, :], h, c, i, f, g, o, c_next))
            h, c = h_next, c_next
        self._in_shape = x.shape
        return h

    def backward(self, dy: np.ndarray) -> np.ndarray:
        W, U = self.params["W"], self.params["U"]
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros_like(self.params["b"])
        dx = np.zeros(self._in_shape)
        dh = dy
        dc = np.zeros_like(dy)
        for t in reversed(range(len(self._cache))):
            x_t, h_prev, c_prev, i, f, g, o, c_t = self._cache[t]
            tanh_c = np.tanh(c_t)
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c ** 2)
            dz = np.concatenate([dc * g * i * (1.0 - i),
                                 dc * c_prev * f * (1.0 - f),
                                 dc * i * (1.0 - g ** 2),
                                 do * o * (1.0 - o)], axis=1)
            dW += x_t.T @ dz
            dU += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t, :] = dz @ W.T
            dh = dz @ U.T
            dc = dc * f
        self.grads = {"W": dW, "U": dU, "b": db}
        return dx


class Sequential(Layer):
    def __init__(self, layers: Sequence[Layer]):
        super().__init__()
        self.layers = list(layers)
        self.macs = sum(layer.macs for layer in self.layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def named_parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        for idx, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{idx}.{name}", value

    def named_gradients(self) -> Iterator[Tuple[str, np.ndarray]]:
        for idx, layer in enumerate(self.layers):
            for name in layer.params:
                yield f"{idx}.{name}", layer.grads[name]

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def __repr__(self) -> str:
        return "Sequential(\n" + "\n".join(f"  {layer!r}" for layer in self.layers) + "\n)"


# ---------------------------------------------------
# Softmax + cross-entropy
# ---------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true classes (log clamped at 1e-12)."""
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels, dtype=int)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= probs.shape[1]:
        raise ValueError(f"Labels must lie in [0, {probs.shape[1]})")
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, LOG_CLAMP))))


def softmax_cross_entropy_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. the logits."""
    grad = probs.copy()
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)

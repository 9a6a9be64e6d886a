"""Small classical classifiers with hand-written backprop.

Two families share one container:

* ``mlp``: dense ReLU layers then a linear output layer.
* ``convnet``: 3x3 same-padded convolutions, each followed by ReLU and 2x2
  max-pooling, then one hidden dense ReLU layer and a linear output layer.

Inputs are flattened row-major pixel vectors, as for the QVC.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import write_checkpoint
from .errors import ConfigurationError
from .optim import check_labels, cross_entropy_batch, softmax, softmax_xent_grad


class Dense:
    def __init__(self, n_in, n_out):
        self.W = np.zeros((n_in, n_out))
        self.b = np.zeros(n_out)

    def params(self):
        return [self.W, self.b]

    def init(self, rng):
        self.W[...] = rng.standard_normal(self.W.shape) * np.sqrt(2.0 / self.W.shape[0])
        self.b[...] = 0.0

    def forward(self, x):
        self._x = x
        return x @ self.W + self.b

    def backward(self, dout):
        self.grads = [self._x.T @ dout, dout.sum(axis=0)]
        return dout @ self.W.T


class ReLU:
    def params(self):
        return []

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        self.grads = []
        return np.where(self._mask, dout, 0.0)


class Conv3x3:
    """Same-padded 3x3 convolution over ``(N, C, H, W)`` via im2col."""

    def __init__(self, c_in, c_out):
        self.W = np.zeros((c_out, c_in, 3, 3))
        self.b = np.zeros(c_out)

    def params(self):
        return [self.W, self.b]

    def init(self, rng):
        fan_in = self.W[0].size
        self.W[...] = rng.standard_normal(self.W.shape) * np.sqrt(2.0 / fan_in)
        self.b[...] = 0.0

    def forward(self, x):
        n, c, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n, c, h, w, 3, 3)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)
        self._cols, self._shape = cols, x.shape
        out = cols @ self.W.reshape(self.W.shape[0], -1).T + self.b
        return out.reshape(n, h, w, -1).transpose(0, 3, 1, 2)

    def backward(self, dout):
        n, c, h, w = self._shape
        c_out = self.W.shape[0]
        d2 = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
        self.grads = [(d2.T @ self._cols).reshape(self.W.shape), d2.sum(axis=0)]
        dcols = (d2 @ self.W.reshape(c_out, -1)).reshape(n, h, w, c, 3, 3)
        dxp = np.zeros((n, c, h + 2, w + 2))
        for di in range(3):
            for dj in range(3):
                dxp[:, :, di:di + h, dj:dj + w] += dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
        return dxp[:, :, 1:-1, 1:-1]


class MaxPool2:
    """2x2 max-pooling, stride 2. Gradient goes to the first maximal entry of each window."""

    def params(self):
        return []

    def forward(self, x):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ConfigurationError(f"max-pooling needs even spatial dims, got {h}x{w}")
        win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        self._arg = win.argmax(axis=-1)
        self._shape = x.shape
        return win.max(axis=-1)

    def backward(self, dout):
        self.grads = []
        n, c, h, w = self._shape
        win = np.zeros(dout.shape + (4,))
        np.put_along_axis(win, self._arg[..., None], dout[..., None], axis=-1)
        return win.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(self._shape)


class Reshape:
    def __init__(self, shape):
        self.shape = shape

    def params(self):
        return []

    def forward(self, x):
        self._in = x.shape
        return x.reshape((x.shape[0],) + tuple(self.shape))

    def backward(self, dout):
        self.grads = []
        return dout.reshape(self._in)


@dataclass
class ClassicalModel:
    family: str
    input_shape: tuple
    num_classes: int
    conv_widths: tuple = ()
    hidden: tuple = (64,)
    seed: int | None = 0
    name: str = ""
    init_mode: str = "he"
    layers: list = field(init=False, repr=False)

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.conv_widths = tuple(self.conv_widths)
        self.hidden = tuple(self.hidden)
        self.name = self.name or self.family
        h, w = self.input_shape
        layers = []
        if self.family == "convnet":
            if not self.conv_widths:
                raise ConfigurationError("convnet needs conv_widths")
            layers.append(Reshape((1, h, w)))
            c = 1
            for width in self.conv_widths:
                layers += [Conv3x3(c, width), ReLU(), MaxPool2()]
                c, h, w = width, h // 2, w // 2
            layers.append(Reshape((c * h * w,)))
            n_in = c * h * w
        elif self.family == "mlp":
            n_in = h * w
        else:
            raise ConfigurationError(f"unknown classical family {self.family!r}")
        if n_in == 0:
            raise ConfigurationError(f"input {self.input_shape} too small for {len(self.conv_widths)} pooling stages")
        for width in self.hidden:
            layers += [Dense(n_in, width), ReLU()]
            n_in = width
        layers.append(Dense(n_in, self.num_classes))
        self.layers = layers
        if self.init_mode == "he":
            rng = np.random.default_rng(self.seed)
            for layer in layers:
                if hasattr(layer, "init"):
                    layer.init(rng)
        elif self.init_mode != "zeros":
            raise ConfigurationError(f"unknown init mode {self.init_mode!r}")

    def parameters(self):
        return [p for layer in self.layers for p in layer.params()]

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_shape[0] * self.input_shape[1]:
            raise ConfigurationError(f"expected {self.input_shape[0] * self.input_shape[1]} pixels, got {X.shape[1]}")
        return X

    def logits(self, X):
        out = self._check(X)
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def scores(self, X):
        return self.logits(X)

    def probabilities(self, X):
        return softmax(self.logits(X))

    def predict(self, X):
        return np.argmax(self.logits(X), axis=1)

    def _backward(self, dlogits):
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d, [g for layer in self.layers for g in layer.grads]

    def backward(self, X, y):
        """Mean loss, weight gradients and per-example input gradients.

        Input gradients are of the per-example loss (not divided by the batch
        size), which is what the attacks consume.
        """
        y = check_labels(y, self.num_classes)
        probs = softmax(self.logits(X))
        losses = cross_entropy_batch(probs, y)
        dlogits = softmax_xent_grad(probs, y)
        dx, grads = self._backward(dlogits / len(y))
        return float(losses.mean()), grads, dx * len(y)

    def loss_and_grads(self, X, y):
        loss, grads, _ = self.backward(X, y)
        return loss, grads

    def loss_and_input_grad(self, X, y):
        y = check_labels(y, self.num_classes)
        probs = softmax(self.logits(X))
        dx, _ = self._backward(softmax_xent_grad(probs, y))
        return cross_entropy_batch(probs, y), dx

    def header(self) -> dict:
        return {
            "family": self.family,
            "name": self.name,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "conv_widths": list(self.conv_widths),
            "hidden": list(self.hidden),
            "seed": self.seed,
        }

    def save(self, path) -> None:
        write_checkpoint(path, self.header(), self.parameters())

    @classmethod
    def from_checkpoint(cls, header, arrays) -> ClassicalModel:
        model = cls(header["family"], header["input_shape"], header["num_classes"], header["conv_widths"],
                    header["hidden"], header.get("seed"), header.get("name", ""), init_mode="zeros")
        params = model.parameters()
        if len(params) != len(arrays) or any(p.shape != a.shape for p, a in zip(params, arrays)):
            raise ConfigurationError("checkpoint parameter shapes do not match the declared architecture")
        for p, a in zip(params, arrays):
            p[...] = a
        return model


def c_forward(model: ClassicalModel, x):
    logits = model.logits(np.asarray(x, dtype=np.float64).ravel()[None, :])[0]
    return logits, softmax(logits)


def c_backward(model: ClassicalModel, batch):
    X, y = batch
    return model.backward(X, y)

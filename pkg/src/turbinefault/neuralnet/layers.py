"""Layers with hand-written backward passes. All tensors are batch-first."""

from __future__ import annotations

import math

import numpy as np

ACTIVATIONS = ("tanh", "sigmoid", "linear")


def activate(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(a, kind):
    """Derivative of the activation expressed through its output ``a``."""
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(a)


def glorot_uniform(rng, shape, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    kind = "layer"
    param_names: tuple[str, ...] = ()

    def params(self):
        return [getattr(self, name) for name in self.param_names]

    def describe(self) -> dict:
        raise NotImplementedError


class Dense(Layer):
    kind = "Dense"
    param_names = ("W", "b")

    def __init__(self, n_in, n_out, activation="tanh", rng=None):
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.b = np.zeros(n_out)

    def forward(self, x):
        a = activate(x @ self.W + self.b, self.activation)
        return a, (x, a)

    def backward(self, dout, cache):
        x, a = cache
        dz = dout * activation_grad(a, self.activation)
        return dz @ self.W.T, [x.T @ dz, dz.sum(axis=0)]

    def describe(self):
        return {"type": self.kind, "n_in": self.n_in, "n_out": self.n_out,
                "activation": self.activation}


class Elman(Layer):
    """Simple recurrent layer; consumes ``(B, T, n_in)`` and returns the final hidden state.

    The hidden state starts at zero for every window.
    """

    kind = "Elman"
    param_names = ("Wx", "Wh", "b")

    def __init__(self, n_in, n_out, activation="tanh", rng=None):
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.Wx = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.Wh = glorot_uniform(rng, (n_out, n_out), n_out, n_out)
        self.b = np.zeros(n_out)

    def forward(self, x):
        B, T, _ = x.shape
        hs = np.zeros((T + 1, B, self.n_out))
        for t in range(T):
            hs[t + 1] = activate(x[:, t, :] @ self.Wx + hs[t] @ self.Wh + self.b, self.activation)
        return hs[T], (x, hs)

    def backward(self, dout, cache):
        x, hs = cache
        T = x.shape[1]
        dWx = np.zeros_like(self.Wx)
        dWh = np.zeros_like(self.Wh)
        db = np.zeros_like(self.b)
        dx = np.zeros_like(x)
        dh = dout
        for t in range(T - 1, -1, -1):
            dz = dh * activation_grad(hs[t + 1], self.activation)
            dWx += x[:, t, :].T @ dz
            dWh += hs[t].T @ dz
            db += dz.sum(axis=0)
            dx[:, t, :] = dz @ self.Wx.T
            dh = dz @ self.Wh.T
        return dx, [dWx, dWh, db]

    def describe(self):
        return {"type": self.kind, "n_in": self.n_in, "n_out": self.n_out,
                "activation": self.activation}


class Conv1D(Layer):
    """Valid 1-D convolution over the time axis: ``(B, T, C) -> (B, T - width + 1, F)``."""

    kind = "Conv1D"
    param_names = ("W", "b")

    def __init__(self, n_in, n_out, width=3, activation="tanh", rng=None):
        self.n_in, self.n_out, self.width, self.activation = n_in, n_out, width, activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = glorot_uniform(rng, (width, n_in, n_out), width * n_in, width * n_out)
        self.b = np.zeros(n_out)

    def _patches(self, x):
        # (B, T', width, C)
        view = np.lib.stride_tricks.sliding_window_view(x, self.width, axis=1)
        return np.moveaxis(view, -1, 2)

    def forward(self, x):
        patches = self._patches(x)
        z = np.einsum("btkc,kcf->btf", patches, self.W) + self.b
        a = activate(z, self.activation)
        return a, (x, patches, a)

    def backward(self, dout, cache):
        x, patches, a = cache
        dz = dout * activation_grad(a, self.activation)
        dW = np.einsum("btkc,btf->kcf", patches, dz)
        db = dz.sum(axis=(0, 1))
        dpatch = np.einsum("btf,kcf->btkc", dz, self.W)
        dx = np.zeros_like(x)
        for k in range(self.width):
            dx[:, k:k + dpatch.shape[1], :] += dpatch[:, :, k, :]
        return dx, [dW, db]

    def describe(self):
        return {"type": self.kind, "n_in": self.n_in, "n_out": self.n_out,
                "width": self.width, "activation": self.activation}


class MeanPool(Layer):
    """Average over the time axis: ``(B, T, F) -> (B, F)``."""

    kind = "MeanPool"

    def forward(self, x):
        return x.mean(axis=1), x.shape

    def backward(self, dout, shape):
        return np.broadcast_to(dout[:, None, :] / shape[1], shape).copy(), []

    def describe(self):
        return {"type": self.kind}


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Elman, Conv1D, MeanPool)}


def layer_from_description(desc: dict, params: dict | None = None) -> Layer:
    cls = LAYER_TYPES[desc["type"]]
    if cls is MeanPool:
        return MeanPool()
    kwargs = {"activation": desc["activation"]}
    if cls is Conv1D:
        kwargs["width"] = desc["width"]
    layer = cls(desc["n_in"], desc["n_out"], **kwargs)
    for name in layer.param_names:
        if params is not None:
            arr = np.asarray(params[name], dtype=float).reshape(getattr(layer, name).shape)
            setattr(layer, name, arr)
    return layer

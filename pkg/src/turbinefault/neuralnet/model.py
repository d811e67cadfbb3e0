"""The five fault-classifier architectures, forward pass and MSE gradients."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from ..dataio import N_FEATURES
from ..exceptions import ArtifactIOError, BadOverride, EmptyBatch, ShapeMismatch
from .layers import ACTIVATIONS, Conv1D, Dense, Elman, Layer, MeanPool, layer_from_description

MODEL_FORMAT = "turbinefault.net"
MODEL_VERSION = 1
DEFAULT_WINDOW = 12


class ArchKind(str, enum.Enum):
    FEEDFORWARD = "ff"
    RECURRENT = "rnn"
    CONVOLUTIONAL = "cnn"
    SPARSE_AUTOENCODER = "sae"
    NAR = "nar"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def uses_labels(self) -> bool:
        """NAR regresses on past fault labels instead of feature vectors."""
        return self is ArchKind.NAR


_LABELS = {
    ArchKind.FEEDFORWARD: "Feedforward Network",
    ArchKind.RECURRENT: "Recurrent Neural Network (RNN)",
    ArchKind.CONVOLUTIONAL: "Convolutional Neural Network (CNN)",
    ArchKind.SPARSE_AUTOENCODER: "Sparse Autoencoder",
    ArchKind.NAR: "Dynamic Time Series Non Linear Autoregressive (NAR)",
}

# default topology knobs per kind; anything here can be overridden
DEFAULTS = {
    ArchKind.FEEDFORWARD: {"hidden": (32, 16), "activation": "tanh"},
    ArchKind.RECURRENT: {"hidden": 32, "window": DEFAULT_WINDOW, "activation": "tanh"},
    ArchKind.CONVOLUTIONAL: {"filters": 16, "kernel_width": 3, "window": DEFAULT_WINDOW,
                             "activation": "tanh"},
    ArchKind.SPARSE_AUTOENCODER: {"hidden": 16, "rho": 0.05, "beta": 3.0},
    ArchKind.NAR: {"hidden": 16, "window": DEFAULT_WINDOW, "activation": "tanh"},
}

PRETRAIN = "pretrain"
SUPERVISED = "supervised"


@dataclass
class NetModel:
    """Layer stack plus architecture metadata.

    ``layers`` is the prediction path. For the sparse autoencoder,
    ``layers[0]`` is the encoder and ``decoder`` reconstructs the input
    from it during pre-training.
    """

    kind: ArchKind
    layers: list[Layer]
    window: int = 1
    input_width: int = N_FEATURES
    sparsity: tuple[float, float] | None = None
    decoder: Layer | None = None
    meta: dict = field(default_factory=dict)

    def parameters(self, phase: str = SUPERVISED) -> list[np.ndarray]:
        """Live parameter arrays whose gradients :func:`loss_and_gradients` returns."""
        if phase == PRETRAIN:
            self._require_autoencoder()
            return self.layers[0].params() + self.decoder.params()
        return [p for layer in self.layers for p in layer.params()]

    def trainable(self, phase: str = SUPERVISED) -> list[bool]:
        """Which entries of :meth:`parameters` the optimiser updates (frozen encoder in phase 2)."""
        params = self.parameters(phase)
        if phase == SUPERVISED and self.kind is ArchKind.SPARSE_AUTOENCODER:
            n_frozen = len(self.layers[0].params())
            return [i >= n_frozen for i in range(len(params))]
        return [True] * len(params)

    def get_state(self) -> list[np.ndarray]:
        arrays = [p for layer in self.layers for p in layer.params()]
        if self.decoder is not None:
            arrays += self.decoder.params()
        return [a.copy() for a in arrays]

    def set_state(self, state) -> None:
        arrays = [p for layer in self.layers for p in layer.params()]
        if self.decoder is not None:
            arrays += self.decoder.params()
        for live, saved in zip(arrays, state):
            live[...] = saved

    def describe(self) -> list[dict]:
        return [layer.describe() for layer in self.layers]

    def _require_autoencoder(self):
        if self.kind is not ArchKind.SPARSE_AUTOENCODER:
            raise ValueError("pre-training only applies to the sparse autoencoder")


def _positive_int(name, value):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise BadOverride(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def resolve_options(kind: ArchKind, overrides: dict | None) -> dict:
    kind = ArchKind(kind)
    opts = dict(DEFAULTS[kind])
    for key, value in (overrides or {}).items():
        if key not in opts:
            raise BadOverride(f"{kind.value}: unknown option {key!r}; "
                              f"allowed {sorted(opts)}")
        opts[key] = value
    if "activation" in opts and opts["activation"] not in ACTIVATIONS:
        raise BadOverride(f"unknown activation {opts['activation']!r}")
    return opts


def build_arch(kind, input_width: int = N_FEATURES, overrides: dict | None = None,
               seed: int = 0) -> NetModel:
    """Freshly initialised network of the requested kind.

    Weights are Glorot-uniform from ``seed``; biases start at zero. The
    read-out is always a single sigmoid unit.
    """
    kind = ArchKind(kind)
    opts = resolve_options(kind, overrides)
    rng = np.random.default_rng(seed)
    input_width = _positive_int("input_width", input_width)

    if kind is ArchKind.FEEDFORWARD:
        hidden = opts["hidden"]
        hidden = (hidden,) if isinstance(hidden, int) else tuple(hidden)
        widths = [input_width] + [_positive_int("hidden", h) for h in hidden]
        layers = [Dense(a, b, opts["activation"], rng) for a, b in zip(widths[:-1], widths[1:])]
        layers.append(Dense(widths[-1], 1, "sigmoid", rng))
        return NetModel(kind, layers, window=1, input_width=input_width, meta=opts)

    if kind is ArchKind.RECURRENT:
        h = _positive_int("hidden", opts["hidden"])
        window = _positive_int("window", opts["window"])
        layers = [Elman(input_width, h, opts["activation"], rng), Dense(h, 1, "sigmoid", rng)]
        return NetModel(kind, layers, window=window, input_width=input_width, meta=opts)

    if kind is ArchKind.CONVOLUTIONAL:
        f = _positive_int("filters", opts["filters"])
        width = _positive_int("kernel_width", opts["kernel_width"])
        window = _positive_int("window", opts["window"])
        if width > window:
            raise BadOverride(f"kernel_width {width} exceeds window {window}")
        layers = [Conv1D(input_width, f, width, opts["activation"], rng), MeanPool(),
                  Dense(f, 1, "sigmoid", rng)]
        return NetModel(kind, layers, window=window, input_width=input_width, meta=opts)

    if kind is ArchKind.SPARSE_AUTOENCODER:
        h = _positive_int("hidden", opts["hidden"])
        rho, beta = float(opts["rho"]), float(opts["beta"])
        if not 0.0 < rho < 1.0 or beta < 0.0:
            raise BadOverride(f"need 0 < rho < 1 and beta >= 0, got rho={rho}, beta={beta}")
        encoder = Dense(input_width, h, "sigmoid", rng)
        decoder = Dense(h, input_width, "linear", rng)
        head = Dense(h, 1, "sigmoid", rng)
        return NetModel(kind, [encoder, head], window=1, input_width=input_width,
                        sparsity=(rho, beta), decoder=decoder, meta=opts)

    h = _positive_int("hidden", opts["hidden"])
    window = _positive_int("window", opts["window"])
    layers = [Dense(window, h, opts["activation"], rng), Dense(h, 1, "sigmoid", rng)]
    return NetModel(kind, layers, window=window, input_width=1, meta=opts)


def prepare_input(model: NetModel, x) -> np.ndarray:
    """Coerce a batch of windows to the shape the first layer expects."""
    x = np.asarray(x, dtype=float)
    k = model.kind
    if k is ArchKind.NAR:
        if x.ndim == 3 and x.shape[2] == 1:
            x = x[:, :, 0]
        if x.ndim != 2 or x.shape[1] != model.window:
            raise ShapeMismatch(f"NAR expects (batch, {model.window}) label windows, got {x.shape}")
        return x
    if model.window == 1 and k in (ArchKind.FEEDFORWARD, ArchKind.SPARSE_AUTOENCODER):
        if x.ndim == 3 and x.shape[1] == 1:
            x = x[:, 0, :]
        if x.ndim != 2 or x.shape[1] != model.input_width:
            raise ShapeMismatch(f"expected (batch, {model.input_width}), got {x.shape}")
        return x
    if x.ndim != 3 or x.shape[1:] != (model.window, model.input_width):
        raise ShapeMismatch(
            f"expected (batch, {model.window}, {model.input_width}), got {x.shape}")
    return x


def _forward_layers(layers, x):
    caches = []
    for layer in layers:
        x, cache = layer.forward(x)
        caches.append(cache)
    return x, caches


def _backward_layers(layers, caches, dout):
    grads = []
    for layer, cache in zip(reversed(layers), reversed(caches)):
        dout, g = layer.backward(dout, cache)
        grads = g + grads
    return dout, grads


def forward(model: NetModel, x) -> np.ndarray:
    """Fault probabilities in (0, 1), one per window."""
    out, _ = _forward_layers(model.layers, prepare_input(model, x))
    return out[:, 0]


def kl_bernoulli(rho, rho_hat):
    return rho * np.log(rho / rho_hat) + (1 - rho) * np.log((1 - rho) / (1 - rho_hat))


def loss_and_gradients(model: NetModel, x, y=None, phase: str = SUPERVISED):
    """Batch loss and gradients aligned with ``model.parameters(phase)``.

    Supervised: mean squared error between predictions and labels.
    Pre-training (sparse autoencoder only): mean squared reconstruction error
    plus ``beta * sum_j KL(rho || rho_hat_j)`` where ``rho_hat_j`` is the
    batch-mean activation of hidden unit ``j``.
    """
    x = prepare_input(model, x)
    n = x.shape[0]
    if n == 0:
        raise EmptyBatch("empty batch")

    if phase == PRETRAIN:
        model._require_autoencoder()
        rho, beta = model.sparsity
        encoder, decoder = model.layers[0], model.decoder
        h, enc_cache = encoder.forward(x)
        recon, dec_cache = decoder.forward(h)
        diff = recon - x
        rho_hat = h.mean(axis=0)
        loss = float(np.mean(diff ** 2) + beta * kl_bernoulli(rho, rho_hat).sum())
        dh, dec_grads = decoder.backward(2.0 * diff / diff.size, dec_cache)
        dh = dh + beta * (-rho / rho_hat + (1 - rho) / (1 - rho_hat)) / n
        _, enc_grads = encoder.backward(dh, enc_cache)
        return loss, enc_grads + dec_grads

    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ShapeMismatch(f"{n} windows but {y.shape[0]} labels")
    out, caches = _forward_layers(model.layers, x)
    diff = out[:, 0] - y
    loss = float(np.mean(diff ** 2))
    _, grads = _backward_layers(model.layers, caches, (2.0 * diff / n)[:, None])
    return loss, grads


def mse_on(model: NetModel, x, y) -> float:
    return float(np.mean((forward(model, x) - np.asarray(y, dtype=float)) ** 2))


def reconstruction_loss(model: NetModel, x) -> float:
    """Pre-training objective without gradients."""
    return loss_and_gradients(model, x, phase=PRETRAIN)[0]


# --- persistence ----------------------------------------------------------

def _layer_doc(layer: Layer) -> dict:
    doc = layer.describe()
    doc["params"] = {name: getattr(layer, name).tolist() for name in layer.param_names}
    return doc


def model_to_dict(model: NetModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind.value,
        "window": model.window,
        "input_width": model.input_width,
        "sparsity": list(model.sparsity) if model.sparsity else None,
        "options": {k: list(v) if isinstance(v, tuple) else v for k, v in model.meta.items()},
        "layers": [_layer_doc(layer) for layer in model.layers],
        "decoder": _layer_doc(model.decoder) if model.decoder is not None else None,
    }


def model_from_dict(doc: dict) -> NetModel:
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ArtifactIOError(f"not a version-{MODEL_VERSION} network model")
    layers = [layer_from_description(d, d.get("params")) for d in doc["layers"]]
    decoder = doc.get("decoder")
    return NetModel(
        ArchKind(doc["kind"]), layers, window=int(doc["window"]),
        input_width=int(doc["input_width"]),
        sparsity=tuple(doc["sparsity"]) if doc.get("sparsity") else None,
        decoder=layer_from_description(decoder, decoder["params"]) if decoder else None,
        meta=dict(doc.get("options") or {}),
    )


def save_net(model: NetModel, path, extra: dict | None = None) -> None:
    doc = model_to_dict(model)
    if extra:
        doc["extra"] = extra
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write model {path}: {exc}") from exc


def load_net(path) -> NetModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read model {path}: {exc}") from exc
    return model_from_dict(doc)

"""Verification classifiers: small ReLU MLPs with hand-written backprop,
score-level fusion and a plain SGD training loop."""

import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from kinshape import pipeline
from kinshape.errors import ConfigError, DataError, DataFormatError, DivergenceError, ShapeMismatchError, StateError

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "kinshape-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    """Fully connected layers ``(weight[out, in], bias[out])``.

    ReLU between layers, identity on the output layer.
    """

    layers: list

    def __post_init__(self):
        for idx, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeMismatchError(f"layer {idx}: weight {w.shape} / bias {b.shape} mismatch")
            if idx and w.shape[1] != self.layers[idx - 1][0].shape[0]:
                raise ShapeMismatchError(f"layer {idx} input dim does not chain with layer {idx - 1}")

    @property
    def dims(self):
        return [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers]

    def copy(self):
        return MlpParams([(w.copy(), b.copy()) for w, b in self.layers])


def init_mlp(dims, rng):
    """Glorot-uniform weights, zero biases."""
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return MlpParams(layers)


def mlp_forward(params, x):
    """Return ``(logits, cache)``. ``x`` is one input vector or a batch (rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.dims[0]:
        raise ShapeMismatchError(f"input dim {x.shape[-1]} does not match network input {params.dims[0]}")
    single = x.ndim == 1
    h = x[None, :] if single else x
    acts = [h]
    last = len(params.layers) - 1
    for idx, (w, b) in enumerate(params.layers):
        z = h @ w.T + b
        h = z if idx == last else np.maximum(z, 0.0)
        acts.append(h)
    logits = h[0] if single else h
    return logits, {"acts": acts, "single": single, "dims": params.dims}


def mlp_backward(params, cache, grad_logits):
    """Reverse-mode pass. Returns ``(param_grads, grad_input)`` where
    ``param_grads`` mirrors ``params.layers``. Batch gradients are summed."""
    if cache["dims"] != params.dims:
        raise StateError("cache was produced by a network with different layer dims")
    acts = cache["acts"]
    g = np.asarray(grad_logits, dtype=np.float64)
    if cache["single"]:
        g = g[None, :]
    if g.shape != acts[-1].shape:
        raise StateError(f"grad_logits shape {g.shape} does not match cached output {acts[-1].shape}")
    grads = [None] * len(params.layers)
    for idx in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[idx]
        if idx != len(params.layers) - 1:
            g = g * (acts[idx + 1] > 0.0)
        grads[idx] = (g.T @ acts[idx], g.sum(axis=0))
        g = g @ w
    grad_input = g[0] if cache["single"] else g
    return grads, grad_input


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, label):
    """Cross-entropy of a 2-way logit vector against ``label`` in {0, 1}.

    Returns ``(loss, grad_logits)`` with ``grad = softmax - onehot``.
    """
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    loss = float(log_norm - shifted[label])
    grad = np.exp(shifted - log_norm)
    grad[label] -= 1.0
    return loss, grad


def softmax_xent_batch(logits, labels):
    """Mean cross-entropy over a batch; gradient is already divided by the batch size."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(labels))
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / len(labels)


def fuse(p_appearance, p_shape, weight=0.5):
    """Convex combination ``weight * p_appearance + (1 - weight) * p_shape``."""
    if not 0.0 <= weight <= 1.0:
        raise ConfigError(f"fusion weight must lie in [0, 1], got {weight}")
    return weight * np.asarray(p_appearance) + (1.0 - weight) * np.asarray(p_shape)


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    l2_penalty: float = 1e-2
    hidden_dims: tuple = (64, 16)
    fusion: str = "score"  # "score" averages branch probabilities; "feature" trains a joint net
    fusion_weight: float = 0.5
    center: bool = True
    normalize_appearance: bool = False
    swap_augment: bool = True  # also train on every pair in (b, a) order
    standardize: str = "global"  # "global", "column" or "none"; statistics from the training set
    input_grads: bool = False  # also backprop into the raw shapes/appearances (not applied)
    input_grad_path: str = "auto"

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2_penalty < 0:
            raise ConfigError(f"l2_penalty must be >= 0, got {self.l2_penalty}")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be positive, got {self.hidden_dims}")
        if self.fusion not in ("score", "feature"):
            raise ConfigError(f"fusion must be 'score' or 'feature', got {self.fusion!r}")
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ConfigError(f"fusion_weight must lie in [0, 1], got {self.fusion_weight}")
        if self.standardize not in ("global", "column", "none"):
            raise ConfigError(f"standardize must be global/column/none, got {self.standardize!r}")
        if self.input_grad_path not in ("svd", "projector", "auto"):
            raise ConfigError(f"input_grad_path must be svd/projector/auto, got {self.input_grad_path!r}")

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


@dataclass
class FusedScore:
    p_appearance: float
    p_shape: float
    p_fused: float


@dataclass
class KinshipModel:
    shape_net: MlpParams
    appearance_net: MlpParams
    config: TrainConfig
    joint_net: MlpParams = None
    scalers: dict = field(default_factory=dict)

    def _scale(self, name, x):
        if name not in self.scalers:
            return x
        mean, std = self.scalers[name]
        return (x - mean) / std

    def predict(self, samples):
        """Kin probabilities per branch, as three arrays ``(p_app, p_shape, p_fused)``."""
        cfg = self.config
        x_shape, x_app = pipeline.feature_matrices(
            samples, center=cfg.center, normalize=cfg.normalize_appearance
        )
        self._check_inputs(x_shape, x_app)
        x_shape = self._scale("shape", x_shape)
        x_app = self._scale("appearance", x_app)
        p_shape = softmax(mlp_forward(self.shape_net, x_shape)[0])[:, 1]
        p_app = softmax(mlp_forward(self.appearance_net, x_app)[0])[:, 1]
        if cfg.fusion == "feature":
            joint = np.concatenate([x_shape, x_app], axis=1)
            p_fused = softmax(mlp_forward(self.joint_net, joint)[0])[:, 1]
        else:
            p_fused = fuse(p_app, p_shape, cfg.fusion_weight)
        return p_app, p_shape, p_fused

    def score(self, sample):
        p_app, p_shape, p_fused = self.predict([sample])
        return FusedScore(float(p_app[0]), float(p_shape[0]), float(p_fused[0]))

    def _check_inputs(self, x_shape, x_app):
        if x_shape.shape[1] != self.shape_net.dims[0]:
            raise ShapeMismatchError(
                f"model expects {self.shape_net.dims[0]} shape features, got {x_shape.shape[1]}"
            )
        if x_app.shape[1] != self.appearance_net.dims[0]:
            raise ShapeMismatchError(
                f"model expects {self.appearance_net.dims[0]} appearance features, got {x_app.shape[1]}"
            )


@dataclass
class TrainResult:
    model: KinshipModel
    history: list = field(default_factory=list)

    @property
    def shape_net(self):
        return self.model.shape_net

    @property
    def appearance_net(self):
        return self.model.appearance_net


def _sgd_step(params, grads, lr, l2):
    for (w, b), (gw, gb) in zip(params.layers, grads):
        if l2:
            gw = gw + l2 * w
        w -= lr * gw
        b -= lr * gb


def _check_classes(samples):
    labels = np.array([s.label for s in samples], dtype=int)
    for cls in (0, 1):
        if np.sum(labels == cls) < 2:
            raise DataError(f"need at least 2 samples of class {cls}, got {int(np.sum(labels == cls))}")
    return labels


def fit_scaler(x, mode="column", eps=1e-12):
    """Centre and scale features with training statistics.

    ``"column"`` uses each column's mean and std (constant columns get std 1);
    ``"global"`` keeps the origin and divides every column by the overall RMS,
    preserving the relative geometry of the feature vectors.
    """
    if mode == "global":
        rms = float(np.sqrt(np.mean(x ** 2)))
        return np.zeros(x.shape[1]), np.full(x.shape[1], rms if rms > eps else 1.0)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < eps] = 1.0
    return mean, std


def train(pairs, config=None):
    """Train both branch classifiers (and the joint net in feature-fusion mode).

    Inputs are fixed data, so comparison features are computed once. With
    ``config.input_grads`` the gradient w.r.t. every comparison feature is also
    pushed through the shape/appearance backward passes each step; those
    input gradients are summarised in the history but never applied.
    """
    config = config or TrainConfig()
    labels = _check_classes(pairs)
    rng = np.random.default_rng(config.seed)
    x_shape, x_app = pipeline.feature_matrices(
        pairs, center=config.center, normalize=config.normalize_appearance
    )
    sources = np.arange(len(pairs))
    flips = np.ones(len(pairs))
    if config.swap_augment:
        # swapping the pair negates B and leaves a * b unchanged
        x_shape = np.concatenate([x_shape, -x_shape])
        x_app = np.concatenate([x_app, x_app])
        labels = np.concatenate([labels, labels])
        sources = np.concatenate([sources, sources])
        flips = np.concatenate([flips, -flips])
    scalers = {}
    if config.standardize != "none":
        scalers = {
            "shape": fit_scaler(x_shape, config.standardize),
            "appearance": fit_scaler(x_app, config.standardize),
        }
        x_shape = (x_shape - scalers["shape"][0]) / scalers["shape"][1]
        x_app = (x_app - scalers["appearance"][0]) / scalers["appearance"][1]
    branches = {
        "shape": (init_mlp([x_shape.shape[1], *config.hidden_dims, 2], rng), x_shape),
        "appearance": (init_mlp([x_app.shape[1], *config.hidden_dims, 2], rng), x_app),
    }
    if config.fusion == "feature":
        joint = np.concatenate([x_shape, x_app], axis=1)
        branches["joint"] = (init_mlp([joint.shape[1], *config.hidden_dims, 2], rng), joint)

    n = len(labels)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        totals = dict.fromkeys(branches, 0.0)
        grad_norms = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            y = labels[idx]
            feature_grads = {}
            for name, (net, x) in branches.items():
                logits, cache = mlp_forward(net, x[idx])
                loss, g_logits = softmax_xent_batch(logits, y)
                grads, g_in = mlp_backward(net, cache, g_logits)
                _sgd_step(net, grads, config.learning_rate, config.l2_penalty)
                totals[name] += loss * len(idx)
                feature_grads[name] = g_in
            if config.input_grads:
                # chain through the standardisation before the comparison layers
                g_shape = feature_grads["shape"] / scalers["shape"][1] if scalers else feature_grads["shape"]
                g_app = feature_grads["appearance"] / scalers["appearance"][1] if scalers else feature_grads["appearance"]
                for row, sample_idx in enumerate(idx):
                    gsa, gsb, gaa, gab = pipeline.input_gradients(
                        pairs[sources[sample_idx]],
                        flips[sample_idx] * g_shape[row],
                        g_app[row],
                        center=config.center,
                        path=config.input_grad_path,
                    )
                    grad_norms.append(np.sqrt(np.sum(gsa ** 2) + np.sum(gsb ** 2)))
        record = {"epoch": epoch}
        for name, total in totals.items():
            record[f"{name}_loss"] = total / n
        record["loss"] = sum(record[f"{name}_loss"] for name in branches)
        if grad_norms:
            record["shape_input_grad_norm"] = float(np.mean(grad_norms))
        if not np.isfinite(record["loss"]):
            raise DivergenceError("training loss is not finite", epoch=epoch)
        log.debug("epoch %d loss %.5f", epoch, record["loss"])
        history.append(record)

    model = KinshipModel(
        shape_net=branches["shape"][0],
        appearance_net=branches["appearance"][0],
        config=config,
        joint_net=branches["joint"][0] if "joint" in branches else None,
        scalers=scalers,
    )
    return TrainResult(model, history)


# -- checkpoints -------------------------------------------------------------

def _net_to_dict(net):
    return {
        "dims": net.dims,
        "layers": [
            {
                "weight": {"rows": w.shape[0], "cols": w.shape[1], "data": w.ravel().tolist()},
                "bias": b.tolist(),
            }
            for w, b in net.layers
        ],
    }


def _net_from_dict(d):
    layers = []
    for layer in d["layers"]:
        wd = layer["weight"]
        w = np.array(wd["data"], dtype=np.float64).reshape(wd["rows"], wd["cols"])
        layers.append((w, np.array(layer["bias"], dtype=np.float64)))
    net = MlpParams(layers)
    if net.dims != list(d["dims"]):
        raise DataFormatError(f"layer dims {net.dims} disagree with header {d['dims']}")
    return net


def checkpoint_dict(model, extra=None):
    nets = {"shape": _net_to_dict(model.shape_net), "appearance": _net_to_dict(model.appearance_net)}
    if model.joint_net is not None:
        nets["joint"] = _net_to_dict(model.joint_net)
    scalers = {
        name: {"mean": mean.tolist(), "std": std.tolist()} for name, (mean, std) in model.scalers.items()
    }
    out = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": model.config.seed,
        "config": model.config.to_dict(),
        "nets": nets,
        "scalers": scalers,
    }
    if extra:
        out["extra"] = extra
    return out


def save_checkpoint(path, model, extra=None):
    """Write a JSON checkpoint. Floats use shortest round-trip repr, so
    save/load is exact and identical models give identical files."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(model, extra), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"not valid JSON: {exc.msg}", path=path, line=exc.lineno) from None
    if d.get("format") != CHECKPOINT_FORMAT:
        raise DataFormatError("not a kinshape checkpoint", path=path)
    if d.get("version") != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {d.get('version')}", path=path)
    nets = d["nets"]
    return KinshipModel(
        shape_net=_net_from_dict(nets["shape"]),
        appearance_net=_net_from_dict(nets["appearance"]),
        config=TrainConfig.from_dict(d["config"]),
        joint_net=_net_from_dict(nets["joint"]) if "joint" in nets else None,
        scalers={
            name: (np.array(v["mean"], dtype=np.float64), np.array(v["std"], dtype=np.float64))
            for name, v in d.get("scalers", {}).items()
        },
    )

"""The target classifier: a small LeNet-style convolutional network with
exact input-gradient evaluation, trained by plain minibatch SGD.

Everything is float64 and deterministic given a seed. Layer forward passes
are pure (caches returned, not stored), so inference is safe to run
concurrently on a shared model.
"""

import json
from dataclasses import dataclass

import numpy as np

from dss import backend


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError(f"invalid training config: {self}")


# ---------------------------------------------------------------------------
# layers


class Conv2D:
    """Stride-1 convolution via im2col; weight shape (out_ch, in_ch*k*k)."""

    def __init__(self, in_ch, out_ch, kernel, padding=0):
        self.in_ch, self.out_ch, self.kernel, self.padding = in_ch, out_ch, kernel, padding
        self.weight = np.zeros((out_ch, in_ch * kernel * kernel))
        self.bias = np.zeros(out_ch)

    def init_params(self, rng):
        fan_in = self.weight.shape[1]
        self.weight = rng.standard_normal(self.weight.shape) / np.sqrt(fan_in)
        self.bias = np.zeros(self.out_ch)

    def descriptor(self):
        return {"type": "conv", "in": self.in_ch, "out": self.out_ch,
                "kernel": self.kernel, "padding": self.padding}

    def forward(self, x):
        n, c, h, w = x.shape
        p, k = self.padding, self.kernel
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = backend.im2col(x, k, k)
        oh = x.shape[2] - k + 1
        ow = x.shape[3] - k + 1
        out = np.matmul(self.weight, cols) + self.bias[:, np.newaxis]
        return out.reshape(n, self.out_ch, oh, ow), (cols, h, w)

    def backward(self, dout, cache):
        cols, h, w = cache
        n = dout.shape[0]
        p, k = self.padding, self.kernel
        d2 = dout.reshape(n, self.out_ch, -1)
        dweight = np.einsum("nol,nil->oi", d2, cols)
        dbias = d2.sum(axis=(0, 2))
        dcols = np.matmul(self.weight.T, d2)
        dx = backend.col2im(dcols, self.in_ch, h + 2 * p, w + 2 * p, k, k)
        if p:
            dx = dx[:, :, p:-p, p:-p]
        return dx, [dweight, dbias]

    @property
    def params(self):
        return [self.weight, self.bias]


class AvgPool2D:
    """2x2 average pooling, stride 2; smooth w.r.t. the input."""

    def __init__(self, size=2):
        self.size = size

    def descriptor(self):
        return {"type": "avgpool", "size": self.size}

    def init_params(self, rng):
        pass

    def forward(self, x):
        n, c, h, w = x.shape
        s = self.size
        out = x.reshape(n, c, h // s, s, w // s, s).mean(axis=(3, 5))
        return out, (h, w)

    def backward(self, dout, cache):
        h, w = cache
        s = self.size
        dx = np.repeat(np.repeat(dout, s, axis=2), s, axis=3) / (s * s)
        return dx, []

    params = ()


class Tanh:
    def descriptor(self):
        return {"type": "tanh"}

    def init_params(self, rng):
        pass

    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, dout, cache):
        return dout * (1.0 - cache * cache), []

    params = ()


class ReLU:
    def descriptor(self):
        return {"type": "relu"}

    def init_params(self, rng):
        pass

    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, dout, cache):
        return dout * cache, []

    params = ()


class MaxPool2D:
    """2x2 max pooling, stride 2; ties route the gradient to the first
    (row-major) maximal element of the window."""

    def __init__(self, size=2):
        self.size = size

    def descriptor(self):
        return {"type": "maxpool", "size": self.size}

    def init_params(self, rng):
        pass

    def forward(self, x):
        n, c, h, w = x.shape
        s = self.size
        tiles = x.reshape(n, c, h // s, s, w // s, s).transpose(0, 1, 2, 4, 3, 5)
        tiles = tiles.reshape(n, c, h // s, w // s, s * s)
        arg = np.argmax(tiles, axis=4)
        out = np.take_along_axis(tiles, arg[..., np.newaxis], axis=4)[..., 0]
        return out, (arg, (h, w))

    def backward(self, dout, cache):
        arg, (h, w) = cache
        n, c, oh, ow = dout.shape
        s = self.size
        dtiles = np.zeros((n, c, oh, ow, s * s), dtype=dout.dtype)
        np.put_along_axis(dtiles, arg[..., np.newaxis], dout[..., np.newaxis],
                          axis=4)
        dx = dtiles.reshape(n, c, oh, ow, s, s).transpose(0, 1, 2, 4, 3, 5)
        return dx.reshape(n, c, h, w), []

    params = ()


class Flatten:
    def descriptor(self):
        return {"type": "flatten"}

    def init_params(self, rng):
        pass

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, cache):
        return dout.reshape(cache), []

    params = ()


class Dense:
    def __init__(self, in_dim, out_dim):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = np.zeros((out_dim, in_dim))
        self.bias = np.zeros(out_dim)

    def init_params(self, rng):
        self.weight = rng.standard_normal(self.weight.shape) / np.sqrt(self.in_dim)
        self.bias = np.zeros(self.out_dim)

    def descriptor(self):
        return {"type": "dense", "in": self.in_dim, "out": self.out_dim}

    def forward(self, x):
        return x @ self.weight.T + self.bias, x

    def backward(self, dout, cache):
        dweight = dout.T @ cache
        dbias = dout.sum(axis=0)
        dx = dout @ self.weight
        return dx, [dweight, dbias]

    @property
    def params(self):
        return [self.weight, self.bias]


_LAYER_BUILDERS = {
    "conv": lambda d: Conv2D(d["in"], d["out"], d["kernel"], d["padding"]),
    "avgpool": lambda d: AvgPool2D(d["size"]),
    "maxpool": lambda d: MaxPool2D(d["size"]),
    "tanh": lambda d: Tanh(),
    "relu": lambda d: ReLU(),
    "flatten": lambda d: Flatten(),
    "dense": lambda d: Dense(d["in"], d["out"]),
}


# ---------------------------------------------------------------------------
# classifier


class ClassifierModel:
    """Feed-forward net over (C, H, W) inputs producing K logits."""

    def __init__(self, layers, class_count, input_shape):
        self.layers = layers
        self.class_count = class_count
        self.input_shape = tuple(input_shape)

    # construction ---------------------------------------------------------

    @classmethod
    def lenet(cls, input_shape=(1, 28, 28), class_count=10, seed=0,
              activation="tanh", pool="avg"):
        """LeNet variant: two conv+activation+pool blocks, two affine layers.

        Tanh keeps the logit map smooth, which makes finite-difference
        gradient checks clean; ReLU/max-pool are piecewise linear, so
        gradient checks must sample away from kinks.
        """
        act = {"tanh": Tanh, "relu": ReLU}[activation]
        pooler = {"avg": AvgPool2D, "max": MaxPool2D}[pool]
        c, h, w = input_shape
        flat = 16 * (((h // 2) - 4) // 2) * (((w // 2) - 4) // 2)
        layers = [
            Conv2D(c, 6, 5, padding=2), act(), pooler(2),
            Conv2D(6, 16, 5, padding=0), act(), pooler(2),
            Flatten(),
            Dense(flat, 120), act(),
            Dense(120, class_count),
        ]
        model = cls(layers, class_count, input_shape)
        rng = np.random.default_rng(seed)
        for layer in layers:
            layer.init_params(rng)
        return model

    @classmethod
    def from_descriptor(cls, architecture, class_count, input_shape):
        layers = [_LAYER_BUILDERS[d["type"]](d) for d in architecture]
        return cls(layers, class_count, input_shape)

    def descriptor(self):
        return [layer.descriptor() for layer in self.layers]

    # inference ------------------------------------------------------------

    def _check_shape(self, x):
        if x.shape[1:] != self.input_shape:
            raise ValueError(
                f"input shape {x.shape[1:]} does not match model {self.input_shape}")

    def forward_batch(self, x, with_cache=False):
        x = np.asarray(x, dtype=np.float64)
        self._check_shape(x)
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return (x, caches) if with_cache else x

    def forward(self, x):
        """Logits for one (C, H, W) input."""
        return self.forward_batch(np.asarray(x)[np.newaxis])[0]

    def predict(self, x):
        """Argmax class; ties resolve to the lowest index."""
        return int(np.argmax(self.forward(x)))

    def predict_batch(self, x):
        return np.argmax(self.forward_batch(x), axis=1)

    def _backward(self, dlogits, caches, want_param_grads):
        grads = []
        dx = dlogits
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dx, pgrads = layer.backward(dx, cache)
            if want_param_grads:
                grads.append(pgrads)
        return dx, list(reversed(grads)) if want_param_grads else None

    def input_gradient_batch(self, x, labels):
        """d cross_entropy(forward(x_i), labels_i) / d x_i for each i."""
        x = np.asarray(x, dtype=np.float64)
        labels = np.asarray(labels)
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise ValueError(f"labels out of range [0, {self.class_count})")
        logits, caches = self.forward_batch(x, with_cache=True)
        dlogits = softmax(logits)
        dlogits[np.arange(len(labels)), labels] -= 1.0
        dx, _ = self._backward(dlogits, caches, want_param_grads=False)
        return dx

    def input_gradient(self, x, label):
        """Exact gradient of the cross-entropy at `label` w.r.t. every pixel."""
        return self.input_gradient_batch(np.asarray(x)[np.newaxis], [label])[0]

    # training -------------------------------------------------------------

    def train_step(self, x, labels, learning_rate):
        logits, caches = self.forward_batch(x, with_cache=True)
        n = len(labels)
        dlogits = softmax(logits)
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
        _, grads = self._backward(dlogits, caches, want_param_grads=True)
        for layer, pgrads in zip(self.layers, grads):
            for param, grad in zip(layer.params, pgrads):
                param -= learning_rate * grad
        return float(np.mean(cross_entropy_batch(logits, labels)))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, label):
    """-log softmax(logits)[label], with log-sum-exp stabilization."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise ValueError(f"label {label} out of range for {logits.shape[-1]} classes")
    z = logits - logits.max()
    return float(np.log(np.sum(np.exp(z))) - z[label])


def cross_entropy_batch(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1))
    return lse - z[np.arange(len(labels)), labels]


def train_classifier(images, labels, config, test_images=None, test_labels=None,
                     log=None, activation="tanh", pool="avg"):
    """Train a LeNet on (image, label) pairs with fixed-rate minibatch SGD.

    Deterministic given config.seed. Returns the trained model; if a test
    split is supplied, per-epoch accuracy is passed to `log`.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("empty training set")
    class_count = max(10, int(labels.max()) + 1)
    model = ClassifierModel.lenet(input_shape=images.shape[1:],
                                  class_count=class_count, seed=config.seed,
                                  activation=activation, pool=pool)
    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        order = rng.permutation(len(images))
        losses = []
        for start in range(0, len(images), config.batch_size):
            idx = order[start:start + config.batch_size]
            losses.append(model.train_step(images[idx], labels[idx],
                                           config.learning_rate))
        if log is not None:
            msg = f"epoch {epoch + 1}/{config.epochs} loss={np.mean(losses):.4f}"
            if test_images is not None:
                acc = evaluate_accuracy(model, test_images, test_labels)
                msg += f" test_acc={acc:.4f}"
            log(msg)
    return model


def evaluate_accuracy(model, images, labels, batch_size=256):
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    correct = 0
    for start in range(0, len(images), batch_size):
        pred = model.predict_batch(images[start:start + batch_size])
        correct += int(np.sum(pred == labels[start:start + batch_size]))
    return correct / len(images)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "dss-model-v1"


def save_checkpoint(model, path):
    """Self-describing container: architecture, class count, parameter arrays."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "class_count": model.class_count,
        "input_shape": list(model.input_shape),
        "architecture": model.descriptor(),
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    i = 0
    for layer in model.layers:
        for param in layer.params:
            arrays[f"param_{i}"] = param
            i += 1
    np.savez(path, **arrays)


def load_checkpoint(path):
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(
                f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        model = ClassifierModel.from_descriptor(
            meta["architecture"], meta["class_count"], meta["input_shape"])
        i = 0
        for layer in model.layers:
            for j, param in enumerate(layer.params):
                loaded = data[f"param_{i}"]
                if loaded.shape != param.shape:
                    raise ValueError(f"{path}: parameter {i} shape mismatch")
                layer.params[j][...] = loaded
                i += 1
    return model

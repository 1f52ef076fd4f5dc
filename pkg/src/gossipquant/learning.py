"""Models, losses, gradients, and dataset plumbing for the simulator.

Two small models share one interface over flat parameter vectors:
multinomial logistic regression and a one-hidden-layer tanh network.
Both expose the mean cross-entropy loss and its analytic gradient;
``finite_diff_check`` validates the gradient against central differences.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IdxFormatError

__all__ = [
    "Dataset",
    "Model",
    "loss",
    "global_loss",
    "minibatch_gradient",
    "finite_diff_check",
    "gen_synthetic",
    "load_idx",
    "save_csv",
    "partition_noniid",
]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("features must be a nonempty (n, p) matrix")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must have one entry per row")
        if self.num_classes < 1 or labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError("labels must lie in [0, num_classes)")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def take(self, indices):
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class Model:
    """Stateless evaluator over flat parameter vectors.

    ``kind`` is "logistic" or "mlp"; the mlp uses one tanh hidden layer of
    ``hidden_width`` units.
    """

    def __init__(self, kind, p, num_classes, hidden_width=16):
        if kind not in ("logistic", "mlp"):
            raise ValueError(f"unknown model kind {kind!r}")
        if p < 0 or num_classes < 1:
            raise ValueError("bad model dimensions")
        if kind == "mlp" and hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")
        self.kind = kind
        self.p = p
        self.num_classes = num_classes
        self.hidden_width = hidden_width if kind == "mlp" else 0

    @property
    def d(self):
        if self.kind == "logistic":
            return self.p * self.num_classes + self.num_classes
        h, c = self.hidden_width, self.num_classes
        return self.p * h + h + h * c + c

    def init_params(self, rng=None, scale=0.1):
        """Zero start for the convex model, Gaussian start otherwise."""
        if self.kind == "logistic" or rng is None:
            return np.zeros(self.d)
        return scale * rng.standard_normal(self.d)

    def _unpack(self, params):
        if params.shape != (self.d,):
            raise ValueError(f"expected {self.d} parameters, got {params.shape}")
        if self.kind == "logistic":
            split = self.p * self.num_classes
            return params[:split].reshape(self.p, self.num_classes), params[split:]
        h, c = self.hidden_width, self.num_classes
        i0 = self.p * h
        i1 = i0 + h
        i2 = i1 + h * c
        return (
            params[:i0].reshape(self.p, h),
            params[i0:i1],
            params[i1:i2].reshape(h, c),
            params[i2:],
        )

    def _probs(self, params, X):
        if self.kind == "logistic":
            W, b = self._unpack(params)
            return _softmax(X @ W + b), None
        W1, b1, W2, b2 = self._unpack(params)
        hidden = np.tanh(X @ W1 + b1)
        return _softmax(hidden @ W2 + b2), hidden

    def loss(self, params, data):
        """Mean cross-entropy over the given rows."""
        params = np.asarray(params, dtype=np.float64)
        self._check_width(data)
        probs, _ = self._probs(params, data.features)
        picked = probs[np.arange(data.n), data.labels]
        return float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    def gradient(self, params, data):
        """Analytic gradient of the mean cross-entropy, flattened."""
        params = np.asarray(params, dtype=np.float64)
        self._check_width(data)
        X, y, n = data.features, data.labels, data.n
        probs, hidden = self._probs(params, X)
        delta = probs
        delta[np.arange(n), y] -= 1.0
        delta /= n
        if self.kind == "logistic":
            return np.concatenate([(X.T @ delta).ravel(), delta.sum(axis=0)])
        W1, b1, W2, b2 = self._unpack(params)
        g_w2 = hidden.T @ delta
        g_b2 = delta.sum(axis=0)
        back = (delta @ W2.T) * (1.0 - hidden * hidden)
        g_w1 = X.T @ back
        g_b1 = back.sum(axis=0)
        return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])

    def accuracy(self, params, data):
        probs, _ = self._probs(np.asarray(params, dtype=np.float64), data.features)
        return float(np.mean(probs.argmax(axis=1) == data.labels))

    def _check_width(self, data):
        if data.p != self.p or data.num_classes > self.num_classes:
            raise ValueError(
                f"model expects {self.p} features / {self.num_classes} classes, "
                f"dataset has {data.p} / {data.num_classes}"
            )


def loss(model, params, data):
    return model.loss(params, data)


def global_loss(model, params, shards):
    """Shard-size-weighted mean of per-shard losses."""
    total = sum(shard.n for shard in shards)
    return sum(shard.n / total * model.loss(params, shard) for shard in shards)


def minibatch_gradient(model, params, shard, batch_size, rng):
    """Gradient on a uniform with-replacement batch; full batch is exact.

    Sampling each row independently keeps the estimator unbiased for the
    full-shard gradient. ``batch_size == shard.n`` skips sampling and
    returns the deterministic full gradient.
    """
    if shard.n < 1:
        raise ValueError("shard is empty")
    if not 1 <= batch_size <= shard.n:
        raise ValueError(f"batch_size must lie in [1, {shard.n}]")
    if batch_size == shard.n:
        return model.gradient(params, shard)
    idx = rng.integers(0, shard.n, size=batch_size)
    return model.gradient(params, shard.take(idx))


def finite_diff_check(model, params, data, step=1e-5, max_coords=200, rng=None):
    """Max relative error of the analytic gradient vs central differences.

    Checks ``min(d, max_coords)`` coordinates (randomly sampled when the
    model is larger). The denominator is the largest analytic component,
    floored to avoid blowing up on an identically zero gradient.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = np.asarray(params, dtype=np.float64)
    analytic = model.gradient(params, data)
    d = params.size
    if d <= max_coords:
        coords = np.arange(d)
    else:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(d, size=max_coords, replace=False)
    worst = 0.0
    for c in coords:
        shifted = params.copy()
        shifted[c] = params[c] + step
        up = model.loss(shifted, data)
        shifted[c] = params[c] - step
        down = model.loss(shifted, data)
        fd = (up - down) / (2.0 * step)
        worst = max(worst, abs(fd - analytic[c]))
    scale = max(float(np.max(np.abs(analytic))), 1e-8)
    return worst / scale


def gen_synthetic(n, p, num_classes, separation, seed):
    """Gaussian class blobs with means ``separation`` apart.

    Class means sit on orthonormal directions scaled so every pair is
    exactly ``separation`` apart when the feature dimension allows it
    (p >= num_classes); otherwise random unit directions approximate the
    spacing. Labels are balanced within one sample.
    """
    if n < num_classes:
        raise ValueError("need at least one sample per class")
    if p < 1 or num_classes < 1:
        raise ValueError("bad dimensions")
    rng = np.random.default_rng(seed)
    if p >= num_classes:
        basis, _ = np.linalg.qr(rng.standard_normal((p, num_classes)))
        dirs = basis.T
    else:
        dirs = rng.standard_normal((num_classes, p))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = (separation / np.sqrt(2.0)) * dirs
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    features = means[labels] + rng.standard_normal((n, p))
    return Dataset(features, labels, num_classes)


def _read_exact(fh, count, path):
    data = fh.read(count)
    if len(data) != count:
        raise IdxFormatError(f"{path}: truncated file, wanted {count} bytes, got {len(data)}")
    return data


def load_idx(images_path, labels_path):
    """Parse the big-endian IDX image/label pair into a dataset.

    Images use magic 2051 with (count, rows, cols) dimensions; labels use
    magic 2049 with (count,). Pixel bytes are scaled to [0, 1]. The two
    counts must agree.
    """
    with open(images_path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">iiii", _read_exact(fh, 16, images_path))
        if magic != 2051:
            raise IdxFormatError(f"{images_path}: image magic is {magic}, expected 2051")
        pixels = np.frombuffer(_read_exact(fh, n * rows * cols, images_path), dtype=np.uint8)
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">ii", _read_exact(fh, 8, labels_path))
        if magic != 2049:
            raise IdxFormatError(f"{labels_path}: label magic is {magic}, expected 2049")
        labels = np.frombuffer(_read_exact(fh, n_labels, labels_path), dtype=np.uint8)
    if n != n_labels:
        raise IdxFormatError(f"image count {n} does not match label count {n_labels}")
    features = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), int(labels.max()) + 1 if n else 1)


def save_csv(dataset, path):
    """Write features plus a trailing label column with a header row."""
    header = ",".join([f"x{i}" for i in range(dataset.p)] + ["label"])
    body = np.column_stack([dataset.features, dataset.labels.astype(np.float64)])
    np.savetxt(path, body, delimiter=",", header=header, comments="")


def partition_noniid(data, n_nodes, label_fraction, seed):
    """Split a dataset into one shard per node with a class-skew knob.

    A ``label_fraction`` portion of each class is pinned to the node with
    index ``class mod n_nodes``; the remaining samples are shuffled and
    dealt round-robin. Shards are disjoint and cover the dataset.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if not 0.0 <= label_fraction <= 1.0:
        raise ValueError("label_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    owned = [[] for _ in range(n_nodes)]
    leftover = []
    for cls in range(data.num_classes):
        idx = np.flatnonzero(data.labels == cls)
        rng.shuffle(idx)
        cut = int(round(label_fraction * idx.size))
        owned[cls % n_nodes].extend(idx[:cut])
        leftover.extend(idx[cut:])
    leftover = np.array(leftover, dtype=np.int64)
    rng.shuffle(leftover)
    for pos, sample in enumerate(leftover):
        owned[pos % n_nodes].append(sample)
    shards = []
    for node_idx in owned:
        node_idx = np.sort(np.array(node_idx, dtype=np.int64))
        if node_idx.size == 0:
            raise ValueError("a node received no samples; lower n_nodes or label_fraction")
        shards.append(data.take(node_idx))
    return shards

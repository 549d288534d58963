"""Sparse binary-classification data and the logistic loss.

Datasets are held as a CSR feature matrix plus a {-1, +1} label vector.
:class:`SparseExample` gives a per-row view for code that wants one.
"""

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

__all__ = [
    "SparseExample",
    "Dataset",
    "LibsvmFormatError",
    "logistic_loss_grad",
    "logistic_loss",
    "load_libsvm",
    "write_libsvm",
    "synth_sparse_dataset",
    "evaluate",
]

SYNTH_DENSITY = 0.1


class SparseExample(NamedTuple):
    features: list  # [(index, value), ...] strictly increasing indices
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    features: sp.csr_matrix
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        X = sp.csr_matrix(self.features, dtype=np.float64)
        X.sort_indices()
        y = np.asarray(self.labels, dtype=np.float64)
        if y.shape != (X.shape[0],):
            raise ValueError(f"{y.shape[0]} labels for {X.shape[0]} examples")
        if not np.all(np.abs(y) == 1):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def dim(self):
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def example(self, i):
        row = self.features.getrow(i)
        return SparseExample(list(zip(row.indices.tolist(), row.data.tolist())), int(self.labels[i]))

    @property
    def examples(self):
        return [self.example(i) for i in range(len(self))]

    @classmethod
    def from_examples(cls, examples, dim, name=""):
        indptr, indices, data, labels = [0], [], [], []
        for ex in examples:
            idx = [i for i, _ in ex.features]
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError("feature indices must be strictly increasing")
            if idx and (idx[0] < 0 or idx[-1] >= dim):
                raise ValueError(f"feature index out of range for dim {dim}")
            indices.extend(idx)
            data.extend(v for _, v in ex.features)
            indptr.append(len(indices))
            labels.append(ex.label)
        X = sp.csr_matrix((data, indices, indptr), shape=(len(labels), dim))
        return cls(X, np.array(labels, dtype=np.float64), name)

    def subset(self, rows):
        return Dataset(self.features[rows], self.labels[rows], self.name)

    def split(self, n_first):
        return self.subset(slice(0, n_first)), self.subset(slice(n_first, len(self)))

    def equals(self, other):
        a, b = self.features, other.features
        return (
            a.shape == b.shape
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )


def _margins(x, batch):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (batch.dim,):
        raise ValueError(f"parameter dimension {x.shape} does not match data dimension {batch.dim}")
    return batch.labels * (batch.features @ x)


def logistic_loss(x, batch):
    if len(batch) == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.logaddexp(0.0, -_margins(x, batch))))


def logistic_loss_grad(x, batch):
    """Mean logistic loss and its gradient over ``batch``.

    The l1 term is not included; regularization lives in the update rule.
    Returns ``(loss, grad)`` with a dense gradient.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    m = _margins(x, batch)
    loss = float(np.mean(np.logaddexp(0.0, -m)))
    weights = -batch.labels * expit(-m) / len(batch)
    grad = batch.features.T @ weights
    return loss, np.asarray(grad, dtype=np.float64)


class LibsvmFormatError(ValueError):
    pass


def _parse_label(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise LibsvmFormatError(f"line {lineno}: bad label {token!r}") from None
    if value == 1:
        return 1
    if value in (-1, 0):
        return -1
    raise LibsvmFormatError(f"line {lineno}: label {token!r} is not binary (expected +1/-1 or 1/0)")


def load_libsvm(path, dim=None, name=None):
    """Read a binary LIBSVM/svmlight file.

    Indices are 1-based in the file and 0-based in memory. Labels ``0`` and
    ``-1`` both map to -1. ``dim`` may be given to pad the feature space
    (e.g. to align train and test files); it defaults to the largest index.
    """
    indptr, indices, data, labels = [0], [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            labels.append(_parse_label(tokens[0], lineno))
            prev = -1
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    i = int(idx) - 1
                    v = float(val)
                except ValueError:
                    raise LibsvmFormatError(f"line {lineno}: cannot parse {tok!r}") from None
                if not sep or i < 0 or not np.isfinite(v):
                    raise LibsvmFormatError(f"line {lineno}: cannot parse {tok!r}")
                if i <= prev:
                    raise LibsvmFormatError(f"line {lineno}: indices not strictly increasing")
                prev = i
                indices.append(i)
                data.append(v)
            indptr.append(len(indices))
    if not labels:
        raise LibsvmFormatError(f"{path}: empty file")
    width = max(indices) + 1 if indices else 1
    if dim is not None:
        if dim < width:
            raise LibsvmFormatError(f"{path}: feature index {width} exceeds dim {dim}")
        width = dim
    X = sp.csr_matrix((data, indices, indptr), shape=(len(labels), width))
    return Dataset(X, np.array(labels, dtype=np.float64), name or os.path.basename(str(path)))


def write_libsvm(dataset, path):
    X = dataset.features
    with open(path, "w") as fh:
        for r in range(len(dataset)):
            lo, hi = X.indptr[r], X.indptr[r + 1]
            pairs = " ".join(f"{i + 1}:{v!r}" for i, v in zip(X.indices[lo:hi].tolist(), X.data[lo:hi].tolist()))
            label = "+1" if dataset.labels[r] > 0 else "-1"
            fh.write(f"{label} {pairs}\n" if pairs else f"{label}\n")


def synth_sparse_dataset(n, d, k_true, noise=0.0, seed=0, density=SYNTH_DENSITY):
    """Random sparse linear classification problem with a sparse ground truth.

    ``x_true`` has ``k_true`` entries equal to +-1 at random positions.
    Features are N(0, 1) at the given density. Labels are
    ``sign(<x_true, z> + noise * eps)``; exact ties are broken by a fair
    coin, so ``k_true == 0`` yields random labels.
    """
    if n < 1 or d < 1 or not 0 <= k_true <= d or noise < 0:
        raise ValueError(f"invalid sizes n={n}, d={d}, k_true={k_true}, noise={noise}")
    rng = np.random.default_rng(seed)
    x_true = np.zeros(d)
    support = rng.choice(d, size=k_true, replace=False)
    x_true[support] = rng.choice([-1.0, 1.0], size=k_true)
    X = sp.random(n, d, density=density, format="csr", random_state=rng, data_rvs=rng.standard_normal)
    score = X @ x_true + noise * rng.standard_normal(n)
    coin = rng.choice([-1.0, 1.0], size=n)
    y = np.where(score > 0, 1.0, np.where(score < 0, -1.0, coin))
    return Dataset(X, y, f"synth-n{n}-d{d}-k{k_true}-s{seed}"), x_true


def evaluate(x, test):
    """Classification accuracy in percent; a zero margin predicts +1."""
    if len(test) == 0:
        raise ValueError("empty test set")
    scores = test.features @ np.asarray(x, dtype=np.float64)
    pred = np.where(scores >= 0, 1.0, -1.0)
    return 100.0 * float(np.mean(pred == test.labels))

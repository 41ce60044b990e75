"""Synthetic data generation, LIBSVM text parsing, deterministic splits.

All randomness flows through ``numpy.random.Generator`` seeded with
PCG64 from a 64-bit integer, so every draw reproduces bit-for-bit for a
given seed.  Noise levels are set from the realized draw so the
signal-to-noise ratio ``||A beta|| / ||b - A beta||`` equals its target
exactly on each generated dataset.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "Dataset",
    "gen_elastic_net",
    "gen_sparse_group_lasso",
    "gen_svm_binary",
    "parse_libsvm",
    "write_libsvm",
    "split_shuffle",
    "dataset_to_csv",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense feature matrix (rows are samples) plus targets.

    ``kind`` is "regression" (real targets) or "classification"
    (targets in {-1, +1}).
    """

    features: np.ndarray
    targets: np.ndarray
    kind: str = "regression"

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise InvalidInputError("feature rows and targets disagree")
        if self.kind not in ("regression", "classification"):
            raise InvalidInputError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "classification" and y.size and not np.all(np.isin(y, (-1.0, 1.0))):
            raise InvalidInputError("classification labels must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def sample_count(self):
        return self.features.shape[0]

    def take(self, idx):
        return Dataset(self.features[idx], self.targets[idx], self.kind)


def _ar1_features(rng, n, p, corr=0.5):
    # a_1 = e_1, a_j = corr*a_{j-1} + sqrt(1-corr^2)*e_j: unit marginal
    # variance with cor(a_j, a_k) = corr^|j-k|
    eps = rng.standard_normal((n, p))
    out = np.empty((n, p))
    out[:, 0] = eps[:, 0]
    fac = np.sqrt(1.0 - corr**2)
    for j in range(1, p):
        out[:, j] = corr * out[:, j - 1] + fac * eps[:, j]
    return out


def _snr_noise(rng, signal, snr=2.0):
    eps = rng.standard_normal(signal.size)
    sigma = np.linalg.norm(signal) / (snr * np.linalg.norm(eps))
    return sigma * eps


def gen_elastic_net(n_train, n_val, n_test, p, seed, n_nonzero=15, snr=2.0):
    """Correlated-feature regression data for elastic-net tuning.

    Features are Gaussian with lag correlation ``0.5^|j-k|``; the true
    coefficient vector has exactly ``n_nonzero`` entries equal to 1 at
    positions drawn uniformly without replacement; noise is scaled so
    the realized SNR equals ``snr`` exactly.

    Returns (train, val, test, beta).
    """
    if p < n_nonzero:
        raise InvalidInputError(f"need p >= {n_nonzero}")
    rng = np.random.default_rng(seed)
    n = n_train + n_val + n_test
    X = _ar1_features(rng, n, p)
    beta = np.zeros(p)
    beta[rng.choice(p, size=n_nonzero, replace=False)] = 1.0
    signal = X @ beta
    y = signal + _snr_noise(rng, signal, snr)
    full = Dataset(X, y)
    return (
        full.take(slice(0, n_train)),
        full.take(slice(n_train, n_train + n_val)),
        full.take(slice(n_train + n_val, n)),
        beta,
    )


def gen_sparse_group_lasso(p, n_groups, seed, n_train=100, n_val=100, n_test=100, snr=2.0):
    """Grouped regression data: standard-normal features, true
    coefficients (1..5, 0, ...) in each of the first three groups.

    Features are grouped by order (first p/M features form group one,
    and so on).  Returns (train, val, test, beta, groups).
    """
    if p % n_groups != 0:
        raise InvalidInputError("number of groups must divide p")
    size = p // n_groups
    if size < 5:
        raise InvalidInputError("group size must be at least 5")
    if n_groups < 3:
        raise InvalidInputError("need at least three groups for the signal pattern")
    rng = np.random.default_rng(seed)
    n = n_train + n_val + n_test
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    for g in range(3):
        beta[g * size : g * size + 5] = np.arange(1.0, 6.0)
    signal = X @ beta
    y = signal + _snr_noise(rng, signal, snr)
    full = Dataset(X, y)
    groups = tuple(np.arange(g * size, (g + 1) * size) for g in range(n_groups))
    return (
        full.take(slice(0, n_train)),
        full.take(slice(n_train, n_train + n_val)),
        full.take(slice(n_train + n_val, n)),
        beta,
        groups,
    )


def gen_svm_binary(n, p, seed, label_noise=0.1, margin=0.25):
    """Binary classification data: a random linear separator with a
    margin, then a fraction of labels flipped."""
    if not 0 <= label_noise < 0.5:
        raise InvalidInputError("label_noise must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(p)
    w /= np.linalg.norm(w)
    X = rng.standard_normal((n, p))
    sides = np.sign(X @ w)
    sides[sides == 0] = 1.0
    # push points away from the boundary to get a separable core
    X = X + margin * np.outer(sides, w)
    y = sides.copy()
    flips = rng.random(n) < label_noise
    y[flips] *= -1.0
    return Dataset(X, y, kind="classification")


def parse_libsvm(source, n_features=None):
    """Parse LIBSVM text ("label idx:val idx:val ..." with 1-based,
    strictly increasing indices) into a dense dataset.

    ``source`` may be a string or a text stream.  Absent indices are
    zero; the largest index seen defines the feature dimension unless
    ``n_features`` overrides it.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    labels = []
    rows = []
    max_idx = 0
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError as exc:
            raise InvalidInputError(f"line {lineno}: bad label {tokens[0]!r}") from exc
        entries = []
        prev = 0
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError as exc:
                raise InvalidInputError(f"line {lineno}: bad feature token {tok!r}") from exc
            if idx <= prev:
                raise InvalidInputError(
                    f"line {lineno}: indices must be 1-based and strictly increasing"
                )
            prev = idx
            entries.append((idx, val))
        if entries:
            max_idx = max(max_idx, entries[-1][0])
        rows.append(entries)
    dim = n_features if n_features is not None else max_idx
    if n_features is not None and max_idx > n_features:
        raise InvalidInputError(f"feature index {max_idx} exceeds n_features={n_features}")
    X = np.zeros((len(rows), dim))
    for i, entries in enumerate(rows):
        for idx, val in entries:
            X[i, idx - 1] = val
    y = np.array(labels)
    kind = "classification" if y.size and np.all(np.isin(y, (-1.0, 1.0))) else "regression"
    return Dataset(X, y, kind=kind)


def write_libsvm(dataset, stream=None):
    """Serialize in LIBSVM text form (sparse: zeros omitted)."""
    out = stream or io.StringIO()
    for i in range(dataset.sample_count):
        row = dataset.features[i]
        nz = np.nonzero(row)[0]
        label = dataset.targets[i]
        parts = [f"{label:.17g}"] + [f"{j + 1}:{row[j]:.17g}" for j in nz]
        out.write(" ".join(parts) + "\n")
    return out.getvalue() if stream is None else None


def split_shuffle(dataset, sizes, seed):
    """Deterministically shuffle then split into consecutive pieces.

    ``sizes`` may sum to less than the sample count; the surplus is
    dropped.  Oversubscription raises.
    """
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes):
        raise InvalidInputError("split sizes must be nonnegative")
    if sum(sizes) > dataset.sample_count:
        raise InvalidInputError(
            f"requested {sum(sizes)} samples, dataset has {dataset.sample_count}"
        )
    perm = np.random.default_rng(seed).permutation(dataset.sample_count)
    pieces = []
    start = 0
    for s in sizes:
        pieces.append(dataset.take(perm[start : start + s]))
        start += s
    return tuple(pieces)


def dataset_to_csv(dataset, path):
    """Write features and targets as CSV (one row per sample; last
    column is the target)."""
    header = ",".join([f"x{j}" for j in range(dataset.feature_dim)] + ["target"])
    body = np.column_stack([dataset.features, dataset.targets])
    np.savetxt(path, body, delimiter=",", header=header, comments="")

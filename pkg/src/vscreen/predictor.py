"""Regression tree that predicts docking time from SMILES features, and the 10 ms bucketizer."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dock.engine import dock_and_score
from .dock.types import ScoringConfig
from .molmodel.smiles import FeatureVector, smiles_features
from .molmodel.types import Ligand, Pocket

log = logging.getLogger(__name__)

MAX_DEPTH = 16
MIN_LEAF = 5
BUCKET_WIDTH_MS = 10.0
N_FEATURES = len(FeatureVector._fields)
FORMAT_VERSION = 1


class TrainingError(ValueError):
    pass


class TreeFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    features: tuple[float, ...]
    time_ms: float

    def __post_init__(self) -> None:
        features = tuple(float(f) for f in self.features)
        if len(features) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {len(features)}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "time_ms", float(self.time_ms))
        if not (math.isfinite(self.time_ms) and self.time_ms >= 0):
            raise ValueError(f"time_ms must be finite and >= 0, got {self.time_ms}")


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class Leaf:
    mean: float


@dataclass(frozen=True)
class TimeTree:
    """Nodes in depth-first order; node 0 is the root."""

    nodes: tuple[Split | Leaf, ...]
    max_depth: int = MAX_DEPTH

    def __post_init__(self) -> None:
        if not self.nodes:
            raise ValueError("a tree needs at least one node")
        for node in self.nodes:
            if isinstance(node, Split):
                if not (0 <= node.feature < N_FEATURES):
                    raise ValueError(f"feature index {node.feature} out of range")
                if not (0 < node.left < len(self.nodes) and 0 < node.right < len(self.nodes)):
                    raise ValueError("child index out of range")
        if self.depth > self.max_depth:
            raise ValueError(f"tree depth {self.depth} exceeds {self.max_depth}")

    @property
    def depth(self) -> int:
        """Edges on the longest root-to-leaf path."""
        best = 0
        stack = [(0, 0)]
        seen = 0
        while stack:
            idx, d = stack.pop()
            seen += 1
            if seen > len(self.nodes):
                raise ValueError("tree nodes form a cycle")
            node = self.nodes[idx]
            if isinstance(node, Split):
                stack += [(node.left, d + 1), (node.right, d + 1)]
            else:
                best = max(best, d)
        return best

    @property
    def n_leaves(self) -> int:
        return sum(isinstance(n, Leaf) for n in self.nodes)

    def leaf_index(self, features: Sequence[float]) -> int:
        idx = 0
        node = self.nodes[0]
        while isinstance(node, Split):
            idx = node.left if features[node.feature] <= node.threshold else node.right
            node = self.nodes[idx]
        return idx


def _as_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([s.features for s in samples], dtype=np.float64).reshape(-1, N_FEATURES)
    y = np.array([s.time_ms for s in samples], dtype=np.float64)
    return X, y


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float] | None:
    """Feature and midpoint threshold with the lowest total child squared error.

    Ties go to the lowest feature index, then the lowest threshold.  Returns
    None when no split leaves ``min_leaf`` samples on both sides or none
    lowers the error.
    """
    n = len(y)
    total = y.sum()
    parent = total * total / n
    best_gain = parent * (1.0 + 64 * np.finfo(float).eps)
    best: tuple[int, float] | None = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cs = np.cumsum(y[order])
        i = np.arange(min_leaf - 1, n - min_leaf)
        if len(i) == 0:
            continue
        i = i[xs[i] != xs[i + 1]]
        if len(i) == 0:
            continue
        left = cs[i]
        n_left = i + 1.0
        gain = left * left / n_left + (total - left) ** 2 / (n - n_left)
        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            best_gain = gain[k]
            best = (f, float((xs[i[k]] + xs[i[k] + 1]) / 2.0))
    return best


def train(samples: Sequence[Sample], max_depth: int = MAX_DEPTH, min_leaf: int = MIN_LEAF) -> TimeTree:
    """Fit a CART regression tree on squared error.

    Candidate thresholds are midpoints between consecutive distinct values.
    Growth stops at ``max_depth``, when a node has zero variance, or when no
    split keeps ``min_leaf`` samples in both children.

    Raises:
        TrainingError: fewer than ``min_leaf`` samples (or none at all).
    """
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
    if not samples:
        raise TrainingError("cannot train on an empty sample set")
    if len(samples) < min_leaf:
        raise TrainingError(f"need at least {min_leaf} samples, got {len(samples)}")
    X, y = _as_arrays(samples)
    nodes: list[Split | Leaf | None] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        me = len(nodes)
        nodes.append(None)
        ys = y[idx]
        split = None
        if depth < max_depth and len(idx) >= 2 * min_leaf and np.ptp(ys) > 0:
            split = _best_split(X[idx], ys, min_leaf)
        if split is None:
            nodes[me] = Leaf(float(np.mean(ys)))
            return me
        f, thr = split
        go_left = X[idx, f] <= thr
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        nodes[me] = Split(f, thr, left, right)
        return me

    grow(np.arange(len(y)), 0)
    return TimeTree(tuple(nodes), max_depth)  # type: ignore[arg-type]


def predict(tree: TimeTree, features: Sequence[float]) -> float:
    """Mean of the leaf reached by descending ``feature <= threshold`` to the left."""
    node = tree.nodes[tree.leaf_index(features)]
    assert isinstance(node, Leaf)
    return node.mean


def predict_many(tree: TimeTree, X) -> np.ndarray:
    return np.array([predict(tree, row) for row in np.asarray(X, dtype=np.float64)])


def predict_smiles(tree: TimeTree, smiles: str) -> float:
    return predict(tree, smiles_features(smiles))


@dataclass(frozen=True)
class BucketAssignment:
    bucket_id: int
    width: float = BUCKET_WIDTH_MS
    clamped: bool = False


def bucketize(predicted_ms: float, width: float = BUCKET_WIDTH_MS) -> BucketAssignment:
    """``floor(predicted_ms / width)``; negative predictions are clamped to bucket 0."""
    if not math.isfinite(predicted_ms):
        raise ValueError(f"prediction must be finite, got {predicted_ms}")
    if predicted_ms < 0:
        return BucketAssignment(0, width, True)
    return BucketAssignment(int(math.floor(predicted_ms / width)), width)


# -- evaluation ------------------------------------------------------------------------------


def holdout_split(n: int, fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled ``(train, test)`` index arrays."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


@dataclass(frozen=True)
class HoldoutReport:
    r2: float
    mean_error: float
    error_std: float
    n_train: int
    n_test: int


def evaluate(tree: TimeTree, samples: Sequence[Sample]) -> tuple[float, float, float]:
    """``(r2, mean signed error, error std)`` of the tree's predictions; error is predicted minus measured."""
    X, y = _as_arrays(samples)
    err = predict_many(tree, X) - y
    ss_res = float((err * err).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return r2, float(err.mean()), float(err.std())


def train_with_holdout(
    samples: Sequence[Sample], fraction: float = 0.2, seed: int = 0, max_depth: int = MAX_DEPTH, min_leaf: int = MIN_LEAF
) -> tuple[TimeTree, HoldoutReport]:
    """Train on a shuffled split and report quality on the held-out part."""
    train_idx, test_idx = holdout_split(len(samples), fraction, seed)
    fit = [samples[i] for i in train_idx]
    held = [samples[i] for i in test_idx]
    tree = train(fit, max_depth, min_leaf)
    r2, mean_error, std = evaluate(tree, held) if held else (float("nan"), float("nan"), float("nan"))
    return tree, HoldoutReport(r2, mean_error, std, len(fit), len(held))


# -- serialization ---------------------------------------------------------------------------


def dumps(tree: TimeTree) -> str:
    lines = [f"timetree v{FORMAT_VERSION} depth={tree.max_depth}"]
    for i, node in enumerate(tree.nodes):
        if isinstance(node, Split):
            lines.append(f"node {i} f{node.feature} <={node.threshold!r} left={node.left} right={node.right}")
        else:
            lines.append(f"leaf {i} mean={node.mean!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> TimeTree:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TreeFormatError("empty tree file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "timetree" or not head[2].startswith("depth="):
        raise TreeFormatError(f"bad header {lines[0]!r}")
    if head[1] != f"v{FORMAT_VERSION}":
        raise TreeFormatError(f"unsupported tree format {head[1]}")
    max_depth = int(head[2][len("depth=") :])
    nodes: list[Split | Leaf] = []
    try:
        for expect, line in enumerate(lines[1:]):
            parts = line.split()
            if int(parts[1]) != expect:
                raise TreeFormatError(f"node ids out of order at {line!r}")
            if parts[0] == "leaf" and len(parts) == 3 and parts[2].startswith("mean="):
                nodes.append(Leaf(float(parts[2][5:])))
            elif parts[0] == "node" and len(parts) == 6 and parts[2].startswith("f") and parts[3].startswith("<="):
                nodes.append(
                    Split(
                        int(parts[2][1:]),
                        float(parts[3][2:]),
                        int(parts[4].removeprefix("left=")),
                        int(parts[5].removeprefix("right=")),
                    )
                )
            else:
                raise TreeFormatError(f"bad node line {line!r}")
        return TimeTree(tuple(nodes), max_depth)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, TreeFormatError):
            raise
        raise TreeFormatError(str(exc)) from exc


def save(tree: TimeTree, path) -> None:
    Path(path).write_text(dumps(tree), encoding="ascii")


def load(path) -> TimeTree:
    return loads(Path(path).read_text(encoding="ascii"))


# -- measured samples -------------------------------------------------------------------------


def measure_samples(
    pocket: Pocket,
    ligands: Iterable[Ligand],
    config: ScoringConfig | None = None,
    on_error: Callable[[Ligand, Exception], None] | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> list[Sample]:
    """Dock each ligand once and record its features and wall time in milliseconds.

    The first ligand is docked once more beforehand as an untimed warm-up.
    Failing ligands are skipped and reported through ``on_error``.
    """
    ligands = list(ligands)
    if not ligands:
        return []
    try:
        dock_and_score(pocket, ligands[0], config)
    except Exception:  # the timed pass reports it
        pass
    samples = []
    for ligand in ligands:
        try:
            features = smiles_features(ligand.name)
            t0 = clock()
            dock_and_score(pocket, ligand, config)
            elapsed = (clock() - t0) * 1000.0
        except Exception as exc:
            log.warning("skipping %s: %s", ligand.name, exc)
            if on_error is not None:
                on_error(ligand, exc)
            continue
        samples.append(Sample(features, max(elapsed, 0.0)))
    return samples


def synthetic_samples(n: int, seed: int = 0, a: float = 0.1, sigma: float = 0.3) -> list[Sample]:
    """Samples following ``t = a * n_heavy * n_torsions + N(0, sigma)`` over a generated library."""
    from .synth import synthetic_timings

    _, features, times = synthetic_timings(n, seed, a, sigma)
    return [Sample(tuple(f), t) for f, t in zip(features, times)]

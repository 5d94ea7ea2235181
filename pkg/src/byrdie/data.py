"""Datasets, node shards, and their CSV formats."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (n, D), labels ``y`` (n,), stable sample ids.

    ``B`` is an upper bound on every row norm. ``classes`` holds the sorted
    distinct labels for classification data and is None for regression.
    """

    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    B: float
    classes: tuple | None = None
    label_names: tuple | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],) or self.ids.shape != self.y.shape:
            raise ConfigError("inconsistent dataset shapes")

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> dict:
        if self.classes is None:
            return {}
        return {c: int(np.sum(self.y == c)) for c in self.classes}

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=int)
        return Dataset(self.X[index], self.y[index], self.ids[index], self.B, self.classes, self.label_names)


@dataclass(frozen=True)
class Shard:
    """Local training set of one honest node."""

    owner: int
    data: Dataset

    @property
    def X(self):
        return self.data.X

    @property
    def y(self):
        return self.data.y

    def __len__(self):
        return len(self.data)


def synth_two_class(P: int, margin: float, noise: float, count: int, rng: np.random.Generator) -> Dataset:
    """Two Gaussian classes along a random unit direction, labels in {-1, +1}.

    Each point is ``y * margin * u + noise * g`` for standard normal ``g``. If
    any point ends up outside the unit ball, every point is scaled by the same
    factor so that the largest norm is 1.
    """
    if P < 1 or count < 2 or margin <= 0 or noise < 0:
        raise ConfigError(f"invalid synthetic spec P={P} count={count} margin={margin} noise={noise}")
    u = rng.standard_normal(P)
    u /= np.linalg.norm(u)
    y = np.where(np.arange(count) < count // 2, -1.0, 1.0)
    if count % 2:
        y[-1] = rng.choice([-1.0, 1.0])
    y = rng.permutation(y)
    X = y[:, None] * margin * u[None, :] + noise * rng.standard_normal((count, P))
    norms = np.linalg.norm(X, axis=1)
    top = norms.max()
    if top > 1.0:
        X = X / top
        norms = norms / top
    return Dataset(X, y, np.arange(count), float(norms.max()), (-1.0, 1.0))


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(
    path,
    label_col: int = -1,
    feature_cols=None,
    normalize: bool = False,
    map_labels: bool = True,
    standardize: bool = False,
) -> Dataset:
    """Read a comma-separated file of numeric features and one label column.

    A first line with no numeric field is taken as a header. Labels are mapped
    to contiguous class indices ``0..C-1`` in sorted order (numeric labels sort
    numerically); ``map_labels=False`` keeps numeric labels as they are. With
    ``normalize`` each feature is min-max scaled to [0, 1]; ``standardize``
    instead centers each feature and scales it to unit variance.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(n, r) for n, r in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in r)]
    if rows and not any(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(rows[0][1])
    label_idx = label_col % width
    if feature_cols is None:
        feature_cols = [c for c in range(width) if c != label_idx]
    feats, labels = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", lineno)
        try:
            feats.append([float(row[c]) for c in feature_cols])
        except ValueError:
            raise ParseError(f"non-numeric feature in {row!r}", lineno) from None
        labels.append(row[label_idx].strip())
    X = np.asarray(feats, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ParseError(f"{path}: non-finite feature value")
    if not map_labels:
        try:
            y = np.asarray([float(s) for s in labels])
        except ValueError:
            raise ParseError(f"{path}: non-numeric label with map_labels=False") from None
        classes = tuple(float(c) for c in np.unique(y))
    if all(_is_number(s) for s in labels):
        names = sorted(set(labels), key=float)
    else:
        names = sorted(set(labels))
    lookup = {name: idx for idx, name in enumerate(names)}
    if map_labels:
        y = np.asarray([lookup[s] for s in labels], dtype=float)
        classes = tuple(float(i) for i in range(len(names)))
    if normalize and standardize:
        raise ConfigError("normalize and standardize are mutually exclusive")
    if standardize:
        sd = X.std(axis=0)
        X = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    if normalize:
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        X = (X - lo) / np.where(span > 0, span, 1.0)
    B = float(np.linalg.norm(X, axis=1).max())
    return Dataset(X, y, np.arange(len(y)), B, classes, tuple(names) if map_labels else None)


def load_iris(normalize: bool = True, standardize: bool = False) -> Dataset:
    """The bundled 150-sample Iris table (4 features, 3 classes)."""
    ref = resources.files("byrdie") / "datasets" / "iris.csv"
    with resources.as_file(ref) as path:
        return load_csv(path, label_col=-1, normalize=normalize and not standardize, standardize=standardize)


def as_binary(ds: Dataset, positive) -> Dataset:
    """Relabel to {-1, +1} with ``positive`` mapped to +1."""
    y = np.where(ds.y == positive, 1.0, -1.0)
    return Dataset(ds.X, y, ds.ids, ds.B, (-1.0, 1.0))


@dataclass
class Partition:
    shards: dict = field(default_factory=dict)  # node id -> Shard
    test: Dataset | None = None


def _class_quota(N: int, n_classes: int, offset: int) -> list:
    base, extra = divmod(N, n_classes)
    return [base + (1 if (c - offset) % n_classes < extra else 0) for c in range(n_classes)]


def partition(
    ds: Dataset,
    honest_nodes,
    N: int,
    class_balanced: bool,
    rng: np.random.Generator,
) -> Partition:
    """Deal ``N`` distinct samples to each honest node; the rest form the test pool.

    With ``class_balanced`` every shard holds floor(N/C) or ceil(N/C) samples of
    each class; the classes that get the extra sample rotate across nodes.
    """
    honest_nodes = list(honest_nodes)
    need = len(honest_nodes) * N
    if N < 1 or need > len(ds):
        raise ConfigError(f"need {need} samples for {len(honest_nodes)} nodes x N={N}, have {len(ds)}")
    order = rng.permutation(len(ds))
    taken = np.zeros(len(ds), dtype=bool)
    out = Partition()
    if class_balanced:
        if ds.classes is None:
            raise ConfigError("class-balanced partition needs classification labels")
        pools = [list(order[ds.y[order] == c]) for c in ds.classes]
        cursor = [0] * len(pools)
        for pos, node in enumerate(honest_nodes):
            quota = _class_quota(N, len(pools), pos)
            picked = []
            for c, q in enumerate(quota):
                if cursor[c] + q > len(pools[c]):
                    raise ConfigError(f"class {ds.classes[c]} has too few samples for a balanced partition")
                picked.extend(pools[c][cursor[c]:cursor[c] + q])
                cursor[c] += q
            picked = np.sort(np.asarray(picked, dtype=int))
            taken[picked] = True
            out.shards[node] = Shard(node, ds.subset(picked))
    else:
        for pos, node in enumerate(honest_nodes):
            picked = np.sort(order[pos * N:(pos + 1) * N])
            taken[picked] = True
            out.shards[node] = Shard(node, ds.subset(picked))
    out.test = ds.subset(np.flatnonzero(~taken))
    return out


def cap_per_class(ds: Dataset, per_class: int) -> Dataset:
    """Keep at most ``per_class`` samples of each class, lowest ids first."""
    if ds.classes is None:
        return ds.subset(np.arange(min(len(ds), per_class)))
    keep = []
    for c in ds.classes:
        idx = np.flatnonzero(ds.y == c)
        idx = idx[np.argsort(ds.ids[idx], kind="stable")][:per_class]
        keep.extend(idx.tolist())
    return ds.subset(np.sort(np.asarray(keep, dtype=int)))


def pool(shards) -> Dataset:
    """Concatenate shards (in the given order) into one dataset."""
    parts = [s.data for s in shards]
    first = parts[0]
    return Dataset(
        np.concatenate([p.X for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.ids for p in parts]),
        max(p.B for p in parts),
        first.classes,
        first.label_names,
    )


def write_csv(ds: Dataset, path) -> None:
    """Write ``y,x1,...,xD`` rows using shortest round-trip float formatting."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"x{i + 1}" for i in range(ds.dim)])
        for yi, xi in zip(ds.y, ds.X):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])


def write_metadata(ds: Dataset, path, **extra) -> None:
    """Flat ``key=value`` sidecar: B, N, and one count per class."""
    lines = [f"B={ds.B!r}", f"N={len(ds)}", f"P={ds.dim}"]
    for c, n in ds.class_counts().items():
        lines.append(f"class[{c!r}]={n}")
    for key, value in extra.items():
        lines.append(f"{key}={value}")
    Path(path).write_text("\n".join(lines) + "\n")

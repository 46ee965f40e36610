"""Datasets: the synthetic two-feature task with known posterior, UCI loaders
with recorded preprocessing, and deterministic subsample/split machinery.

The synthetic task draws a balanced binary label in {-1, +1} (stored as
indices 0 and 1), a scale feature x2 uniform on [0, 1], and x1 normal with
mean y * x2 and standard deviation x2. Its posterior and cost-optimal decision
boundary are available in closed form, which makes it the workhorse for the
calibration diagnostics.

Raw UCI files live under <data_dir>/<name>/raw.<ext> next to an optional
``manifest`` file recording the expected sha256; a mismatch warns rather than
fails. Parsed datasets cache to a columnar text file for fast reload. The
data directory is ./data by default, overridden by $COSTBENCH_DATA_DIR.
"""
from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costs import (
    CostMatrix,
    SimplexDist,
    german_credit_deferral_matrix,
    german_credit_matrix,
    severity_three_class_matrix,
)


def data_dir() -> Path:
    return Path(os.environ.get("COSTBENCH_DATA_DIR", "data"))


# ---------------------------------------------------------------------------
# Preprocessing records: enough to replay the exact transform on new rows.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnTransform:
    name: str
    kind: str  # "numeric" | "categorical"
    mean: float = 0.0
    scale: float = 1.0
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class Preprocessing:
    columns: tuple[ColumnTransform, ...]
    n_dropped_rows: int = 0

    @property
    def feature_names(self) -> tuple[str, ...]:
        names = []
        for col in self.columns:
            if col.kind == "numeric":
                names.append(col.name)
            else:
                names.extend(f"{col.name}={c}" for c in col.categories)
        return tuple(names)

    def apply(self, raw_rows: list[list[str]]) -> np.ndarray:
        """Replay the recorded transform; unknown categories are an error."""
        out = np.empty((len(raw_rows), len(self.feature_names)))
        for i, row in enumerate(raw_rows):
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row has {len(row)} fields, transform expects {len(self.columns)}"
                )
            pos = 0
            for tok, col in zip(row, self.columns):
                if col.kind == "numeric":
                    out[i, pos] = (float(tok) - col.mean) / col.scale
                    pos += 1
                else:
                    width = len(col.categories)
                    try:
                        j = col.categories.index(tok)
                    except ValueError:
                        raise ValueError(
                            f"unknown category {tok!r} for column {col.name!r}"
                        ) from None
                    out[i, pos : pos + width] = 0.0
                    out[i, pos + j] = 1.0
                    pos += width
        return out


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    label_map: dict[str, int]
    source: dict  # {"kind": "synthetic"|"uci", ...provenance...}
    preprocessing: Preprocessing | None = None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        l = np.asarray(self.labels, dtype=int)
        if f.ndim != 2 or l.ndim != 1 or len(f) != len(l):
            raise ValueError("features must be (n, d) with n matching labels")
        if not np.all(np.isfinite(f)):
            raise ValueError("features contain non-finite values")
        n_classes = len(self.label_map)
        if l.size and (l.min() < 0 or l.max() >= n_classes):
            raise ValueError("labels out of range of label_map")
        f.setflags(write=False)
        l.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", l)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_map)


@dataclass(frozen=True, eq=False)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        sets = [set(map(int, s)) for s in (self.train, self.val, self.test)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("splits must be disjoint")


def split_xy(ds: Dataset, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return ds.features[idx], ds.labels[idx]


# ---------------------------------------------------------------------------
# Synthetic task.
# ---------------------------------------------------------------------------

SYNTHETIC_LABEL_MAP = {"-1": 0, "+1": 1}


def sample_synthetic(n: int, rng_seed: int) -> Dataset:
    """Draw n i.i.d. samples of the two-feature synthetic task."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(rng_seed)
    y_sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    x2 = rng.uniform(0.0, 1.0, n)
    x1 = rng.normal(y_sign * x2, x2)
    labels = (y_sign > 0).astype(int)
    return Dataset(
        features=np.column_stack([x1, x2]),
        labels=labels,
        label_map=dict(SYNTHETIC_LABEL_MAP),
        source={"kind": "synthetic", "seed": rng_seed, "n": n},
    )


def posterior(x) -> SimplexDist:
    """Conditional label distribution (P[-1], P[+1]) at a feature pair.

    Equal-density ratio of the two Gaussians reduces to a logistic in
    2 * x1 / x2. Requires x2 > 0.
    """
    x = np.asarray(x, dtype=float)
    x1, x2 = float(x[0]), float(x[1])
    if x2 <= 0:
        raise ValueError("posterior requires x2 > 0")
    eta = posterior_pos_many(np.array([[x1, x2]]))[0]
    return SimplexDist(np.array([1.0 - eta, eta]))


def posterior_pos_many(x: np.ndarray) -> np.ndarray:
    """P[label=+1 | x] for rows of x; vectorized logistic(2 * x1 / x2)."""
    x = np.asarray(x, dtype=float)
    if np.any(x[:, 1] <= 0):
        raise ValueError("posterior requires x2 > 0")
    z = 2.0 * x[:, 0] / x[:, 1]
    out = np.empty(len(x))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bayes_decision(x, alpha: float) -> int:
    """Cost-optimal decision in {-1, +1} for the binary alpha cost matrix.

    Returns +1 iff x1 >= (x2 / 2) * log(alpha / (1 - alpha)); the boundary
    itself decides +1. alpha = 1/2 reduces to sign(x1).
    """
    x = np.asarray(x, dtype=float)
    return int(bayes_decision_many(x[None, :], alpha)[0])


def bayes_decision_many(x: np.ndarray, alpha: float) -> np.ndarray:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie strictly between 0 and 1")
    x = np.asarray(x, dtype=float)
    if np.any(x[:, 1] <= 0):
        raise ValueError("bayes decision requires x2 > 0")
    thresh = 0.5 * x[:, 1] * np.log(alpha / (1.0 - alpha))
    return np.where(x[:, 0] >= thresh, 1, -1)


# ---------------------------------------------------------------------------
# UCI loaders.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UciSpec:
    name: str
    dirname: str
    filename: str
    delimiter: str | None  # None = any whitespace
    has_header: bool
    label_column: str | int  # header name, or index when headerless
    label_values: tuple[str, ...] | None  # ordered raw values; None = numeric codes
    cost_factory: object
    url: str
    expected_rows: int
    n_classes: int


UCI_SPECS: dict[str, UciSpec] = {
    "german_credit": UciSpec(
        name="german_credit",
        dirname="german_credit",
        filename="raw.data",
        delimiter=None,
        has_header=False,
        label_column=-1,
        label_values=("1", "2"),  # 1 = good risk -> 0, 2 = bad risk -> 1
        cost_factory=german_credit_matrix,
        url="https://archive.ics.uci.edu/dataset/144/statlog+german+credit+data",
        expected_rows=1000,
        n_classes=2,
    ),
    "german_credit_deferral": UciSpec(
        name="german_credit_deferral",
        dirname="german_credit",  # same raw file, extra defer report in the costs
        filename="raw.data",
        delimiter=None,
        has_header=False,
        label_column=-1,
        label_values=("1", "2"),
        cost_factory=german_credit_deferral_matrix,
        url="https://archive.ics.uci.edu/dataset/144/statlog+german+credit+data",
        expected_rows=1000,
        n_classes=2,
    ),
    "student_performance": UciSpec(
        name="student_performance",
        dirname="student_performance",
        filename="raw.csv",
        delimiter=";",
        has_header=True,
        label_column="Target",
        label_values=("Dropout", "Enrolled", "Graduate"),
        cost_factory=severity_three_class_matrix,
        url="https://archive.ics.uci.edu/dataset/697/predict+students+dropout+and+academic+success",
        expected_rows=4424,
        n_classes=3,
    ),
    "diabetes": UciSpec(
        name="diabetes",
        dirname="diabetes",
        filename="raw.csv",
        delimiter=",",
        has_header=True,
        label_column="Diabetes_012",
        label_values=None,  # 0 = none, 1 = pre-diabetic, 2 = diabetic
        cost_factory=severity_three_class_matrix,
        url="https://archive.ics.uci.edu/dataset/891/cdc+diabetes+health+indicators",
        expected_rows=253680,
        n_classes=3,
    ),
}

_MISSING_TOKENS = {"", "?", "NA", "NaN", "nan"}

# Per-process memo: datasets are immutable, and benchmark runs reload the
# same file once per (loss, seed) cell otherwise.
_LOAD_MEMO: dict = {}


def _is_float(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_manifest(spec: UciSpec, raw_path: Path) -> str:
    digest = _sha256(raw_path)
    manifest = raw_path.parent / "manifest"
    if manifest.exists():
        recorded = {}
        for line in manifest.read_text().splitlines():
            toks = line.split()
            if len(toks) == 2:
                recorded[toks[0]] = toks[1]
        want = recorded.get("sha256")
        if want and want != digest:
            warnings.warn(
                f"{spec.name}: raw file hash {digest[:12]}... does not match "
                f"manifest {want[:12]}...; proceeding with the file on disk"
            )
    return digest


def _parse_delimited(text: str, spec: UciSpec) -> tuple[list[str] | None, list[list[str]]]:
    rows = []
    header = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        toks = line.split(spec.delimiter) if spec.delimiter else line.split()
        toks = [t.strip().strip('"') for t in toks]
        if header is None and spec.has_header:
            header = toks
            continue
        rows.append(toks)
    return header, rows


def load_uci(name: str, path=None, use_cache: bool = True) -> tuple[Dataset, CostMatrix]:
    """Load, preprocess and cache a named UCI dataset with its cost matrix.

    Categorical columns are one-hot encoded; numeric columns standardized to
    mean 0 and variance 1 over the full dataset (before any subsampling).
    Incomplete rows are dropped and counted.
    """
    if name not in UCI_SPECS:
        raise ValueError(f"unknown dataset {name!r}; one of {sorted(UCI_SPECS)}")
    spec = UCI_SPECS[name]
    raw_path = Path(path) if path is not None else data_dir() / spec.dirname / spec.filename
    if not raw_path.exists():
        raise FileNotFoundError(
            f"{name}: raw file {raw_path} not found; fetch it from {spec.url} "
            f"(see scripts/fetch_uci.py)"
        )
    stat = raw_path.stat()
    memo_key = (name, str(raw_path), stat.st_mtime_ns, stat.st_size)
    if use_cache and memo_key in _LOAD_MEMO:
        return _LOAD_MEMO[memo_key]
    digest = _check_manifest(spec, raw_path)

    cache_path = raw_path.parent / "processed.tsv"
    if use_cache and cache_path.exists():
        cached = _read_cache(cache_path, digest)
        if cached is not None:
            result = (cached, spec.cost_factory())
            _LOAD_MEMO[memo_key] = result
            return result

    header, rows = _parse_delimited(raw_path.read_text(), spec)
    if not rows:
        raise ValueError(f"{name}: no data rows in {raw_path}")

    if isinstance(spec.label_column, int):
        label_idx = spec.label_column % len(rows[0])
    else:
        if header is None or spec.label_column not in header:
            raise ValueError(f"{name}: label column {spec.label_column!r} not found")
        label_idx = header.index(spec.label_column)

    n_cols = len(rows[0])
    complete = [r for r in rows if len(r) == n_cols and not any(t in _MISSING_TOKENS for t in r)]
    n_dropped = len(rows) - len(complete)
    if not complete:
        raise ValueError(f"{name}: every row was incomplete")

    raw_labels = [r[label_idx] for r in complete]
    feat_rows = [[t for i, t in enumerate(r) if i != label_idx] for r in complete]
    feat_names = (
        [h for i, h in enumerate(header) if i != label_idx]
        if header
        else [f"col{i}" for i in range(n_cols) if i != label_idx]
    )

    if spec.label_values is not None:
        label_map = {v: i for i, v in enumerate(spec.label_values)}
        try:
            labels = np.array([label_map[v] for v in raw_labels], dtype=int)
        except KeyError as exc:
            raise ValueError(f"{name}: unexpected label value {exc}") from None
    else:
        codes = [int(float(v)) for v in raw_labels]
        label_map = {str(c): c for c in sorted(set(codes))}
        labels = np.array(codes, dtype=int)
    if len(label_map) != spec.n_classes:
        raise ValueError(
            f"{name}: found {len(label_map)} classes, expected {spec.n_classes}"
        )

    transforms = []
    for j, col_name in enumerate(feat_names):
        column = [r[j] for r in feat_rows]
        if all(_is_float(t) for t in column):
            vals = np.array([float(t) for t in column])
            mean = float(vals.mean())
            scale = float(vals.std())
            if scale == 0.0:
                scale = 1.0  # constant column: centered, left unscaled
            transforms.append(ColumnTransform(col_name, "numeric", mean, scale))
        else:
            cats = tuple(sorted(set(column)))
            transforms.append(ColumnTransform(col_name, "categorical", categories=cats))
    prep = Preprocessing(tuple(transforms), n_dropped)
    features = prep.apply(feat_rows)

    ds = Dataset(
        features=features,
        labels=labels,
        label_map={str(k): v for k, v in label_map.items()},
        source={
            "kind": "uci",
            "name": spec.name,
            "file": str(raw_path),
            "sha256": digest,
            "n_dropped_rows": n_dropped,
        },
        preprocessing=prep,
    )
    if len(ds) != spec.expected_rows:
        warnings.warn(
            f"{name}: parsed {len(ds)} rows, expected {spec.expected_rows}"
        )
    if use_cache:
        try:
            _write_cache(cache_path, ds, digest)
        except OSError as exc:
            warnings.warn(f"{name}: could not write cache: {exc}")
        _LOAD_MEMO[memo_key] = (ds, spec.cost_factory())
    return ds, spec.cost_factory()


def _write_cache(path: Path, ds: Dataset, digest: str) -> None:
    """Columnar text cache: kind header, name header, then one row per sample."""
    prep = ds.preprocessing
    names = ("label",) + (prep.feature_names if prep else tuple(
        f"f{i}" for i in range(ds.n_features)
    ))
    meta = {
        "raw_sha256": digest,
        "label_map": ds.label_map,
        "source": ds.source,
        "n_dropped_rows": prep.n_dropped_rows if prep else 0,
        "columns": [
            {
                "name": c.name,
                "kind": c.kind,
                "mean": c.mean,
                "scale": c.scale,
                "categories": list(c.categories),
            }
            for c in (prep.columns if prep else ())
        ],
    }
    lines = [
        "#meta\t" + json.dumps(meta, sort_keys=True),
        "#kinds\t" + "\t".join(["label"] + ["num"] * ds.n_features),
        "#names\t" + "\t".join(names),
    ]
    for label, row in zip(ds.labels, ds.features):
        lines.append("\t".join([str(int(label))] + [repr(float(v)) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def _read_cache(path: Path, digest: str) -> Dataset | None:
    lines = path.read_text().splitlines()
    if len(lines) < 4 or not lines[0].startswith("#meta\t"):
        return None
    meta = json.loads(lines[0].split("\t", 1)[1])
    if meta.get("raw_sha256") != digest:
        return None  # raw file changed since the cache was written
    labels = []
    feats = []
    for line in lines[3:]:
        toks = line.split("\t")
        labels.append(int(toks[0]))
        feats.append([float(t) for t in toks[1:]])
    prep = Preprocessing(
        tuple(
            ColumnTransform(
                c["name"], c["kind"], c["mean"], c["scale"], tuple(c["categories"])
            )
            for c in meta["columns"]
        ),
        meta.get("n_dropped_rows", 0),
    )
    return Dataset(
        features=np.array(feats),
        labels=np.array(labels, dtype=int),
        label_map={k: int(v) for k, v in meta["label_map"].items()},
        source=meta["source"],
        preprocessing=prep if meta["columns"] else None,
    )


def subsample_and_split(
    ds: Dataset,
    n: int,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> SplitIndices:
    """Seed-deterministic subsample of n rows, then a train/val/test split."""
    if n > len(ds):
        raise ValueError(f"cannot subsample {n} rows from {len(ds)}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ds), size=n, replace=False)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    return SplitIndices(
        train=chosen[:n_train],
        val=chosen[n_train : n_train + n_val],
        test=chosen[n_train + n_val :],
        seed=seed,
    )

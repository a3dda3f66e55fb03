"""Preprocessing and the labeled training matrix (angles + per-PMU labels).

The preprocessing step separates time tags from the measured data, drops
rows with non-finite channels, wraps angles to (-pi, pi], and quantizes
values to 9 significant digits so that CSV serialization is lossless on
its output. Each row of the resulting matrix pairs the PMU angles at one
sample instant with the per-PMU 0/1 attack labels for that instant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .configio import ConfigError
from .grid_sim import Trajectory

# Keys written by the serializer itself; not allowed in user provenance.
_RESERVED_PROVENANCE = {"n_pmu", "rows"}


class EmptyDatasetError(ValueError):
    """Every row was filtered out (or an empty dataset was constructed)."""


def wrap_angle(theta):
    """Map angle(s) to (-pi, pi] (e.g. 3*pi/2 wraps to -pi/2)."""
    t = np.asarray(theta, dtype=float)
    wrapped = t - 2.0 * np.pi * np.round(t / (2.0 * np.pi))
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


def quantize9(values):
    """Round to 9 significant decimal digits exactly as the CSV writer formats."""
    arr = np.asarray(values, dtype=float)
    flat = np.array([float(format(v, ".9g")) for v in arr.ravel()])
    out = flat.reshape(arr.shape)
    if np.isscalar(values) or np.ndim(values) == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Rows of PMU angles with aligned per-PMU binary attack labels."""

    time_tags: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    provenance: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        tags = np.asarray(self.time_tags, dtype=float)
        feats = np.asarray(self.features, dtype=float)
        labs = np.asarray(self.labels, dtype=np.int64)
        for arr, name in ((tags, "time_tags"), (feats, "features"), (labs, "labels")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if feats.ndim != 2 or labs.ndim != 2:
            raise ValueError("features and labels must be 2-D")
        if feats.shape != labs.shape:
            raise ValueError(
                f"features {feats.shape} and labels {labs.shape} must have equal shape")
        if len(tags) != feats.shape[0]:
            raise ValueError("time_tags length must match the row count")
        if feats.shape[0] == 0:
            raise EmptyDatasetError("dataset has no rows")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        if not np.all((labs == 0) | (labs == 1)):
            raise ValueError("labels must be 0 or 1")
        prov = dict(self.provenance)
        for k, v in prov.items():
            if not isinstance(v, str):
                raise ValueError("provenance values must be strings")
            if k in _RESERVED_PROVENANCE:
                raise ValueError(f"provenance key {k!r} is reserved")
            if any(ch in k or ch in v for ch in " =\n,"):
                raise ValueError(f"provenance entry {k}={v!r} contains forbidden characters")
        object.__setattr__(self, "provenance", prov)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_pmus(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    validation_fraction: float = 0.15
    test_fraction: float = 0.15
    shuffle_seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.validation_fraction, self.test_fraction)
        if not all(0.0 < f < 1.0 for f in fracs):
            raise ValueError(f"split fractions must each be in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1.0e-12:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)!r}")


def preprocess(traj: Trajectory, labels: np.ndarray,
               provenance: Mapping[str, str] | None = None) -> LabeledDataset:
    """Turn a (possibly spoofed) trajectory plus labels into dataset rows.

    Time tags are carried into their own column, rows with any non-finite
    measurement are dropped (count recorded under provenance key
    ``rows_dropped``), angles are wrapped to (-pi, pi], and row order is
    preserved.
    """
    labels = np.asarray(labels)
    if labels.shape != traj.measurements.shape:
        raise ValueError(
            f"labels shape {labels.shape} does not match measurements "
            f"{traj.measurements.shape}")
    keep = np.all(np.isfinite(traj.measurements), axis=1)
    dropped = int(np.sum(~keep))
    if not np.any(keep):
        raise EmptyDatasetError(f"all {len(keep)} rows were non-finite; nothing left")
    prov = dict(provenance or {})
    prov["rows_dropped"] = str(dropped)
    return LabeledDataset(
        time_tags=quantize9(traj.time_tags[keep]),
        features=quantize9(wrap_angle(traj.measurements[keep])),
        labels=labels[keep],
        provenance=prov,
    )


def concat(datasets: Sequence[LabeledDataset]) -> LabeledDataset:
    """Row-wise concatenation; per-row origin is kept as provenance row ranges."""
    if not datasets:
        raise ValueError("concat needs at least one dataset")
    if len(datasets) == 1:
        return datasets[0]
    n_pmus = datasets[0].n_pmus
    for i, ds in enumerate(datasets):
        if ds.n_pmus != n_pmus:
            raise ValueError(
                f"dataset {i} has {ds.n_pmus} PMU columns, expected {n_pmus}")
    sources = []
    offset = 0
    for ds in datasets:
        tag = ds.provenance.get("scenario", "unknown")
        sources.append(f"{tag}:{offset}-{offset + ds.n_rows - 1}")
        offset += ds.n_rows
    return LabeledDataset(
        time_tags=np.concatenate([ds.time_tags for ds in datasets]),
        features=np.vstack([ds.features for ds in datasets]),
        labels=np.vstack([ds.labels for ds in datasets]),
        provenance={"scenario": "concat", "sources": ";".join(sources)},
    )


def _take(ds: LabeledDataset, idx: np.ndarray, part: str) -> LabeledDataset:
    prov = dict(ds.provenance)
    prov["split"] = part
    return LabeledDataset(ds.time_tags[idx], ds.features[idx], ds.labels[idx], prov)


def split(ds: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Seeded shuffle, then partition; sizes are rounded and train takes the remainder."""
    if ds.n_rows < 10:
        raise ValueError(f"need at least 10 rows to split, have {ds.n_rows}")
    rng = np.random.default_rng(spec.shuffle_seed)
    perm = rng.permutation(ds.n_rows)
    n_val = int(round(spec.validation_fraction * ds.n_rows))
    n_test = int(round(spec.test_fraction * ds.n_rows))
    n_train = ds.n_rows - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError("split produced an empty part; dataset too small")
    train_idx = perm[:n_train]
    val_idx = perm[n_train:n_train + n_val]
    test_idx = perm[n_train + n_val:]
    return (_take(ds, train_idx, "train"),
            _take(ds, val_idx, "validation"),
            _take(ds, test_idx, "test"))


# ---------------------------------------------------------------------------
# Dataset CSV: `# nngsd-dataset v1 n_pmu=N rows=M key=value ...` meta line,
# then header `t,x1..xN,y1..yN` and one row per sample.

def save_dataset_csv(ds: LabeledDataset, path: str | Path) -> None:
    meta = [f"n_pmu={ds.n_pmus}", f"rows={ds.n_rows}"]
    meta += [f"{k}={v}" for k, v in sorted(ds.provenance.items())]
    xcols = ",".join(f"x{j + 1}" for j in range(ds.n_pmus))
    ycols = ",".join(f"y{j + 1}" for j in range(ds.n_pmus))
    lines = ["# nngsd-dataset v1 " + " ".join(meta), f"t,{xcols},{ycols}"]
    for t, x, y in zip(ds.time_tags, ds.features, ds.labels):
        lines.append(format(t, ".9g") + ","
                     + ",".join(format(v, ".9g") for v in x) + ","
                     + ",".join(str(int(v)) for v in y))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset_csv(path: str | Path) -> LabeledDataset:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# nngsd-dataset v1"):
        raise ConfigError(f"{path}: missing '# nngsd-dataset v1' meta line")
    meta: dict[str, str] = {}
    for tok in lines[0].split()[2:]:
        key, _, value = tok.partition("=")
        meta[key] = value
    try:
        n_pmus = int(meta.pop("n_pmu"))
        n_rows = int(meta.pop("rows"))
    except (KeyError, ValueError):
        raise ConfigError(f"{path}: meta line must carry n_pmu= and rows=") from None
    if len(lines) < 2 or not lines[1].startswith("t,x1"):
        raise ConfigError(f"{path}: missing 't,x1..,y1..' header line")
    tags, feats, labs = [], [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 1 + 2 * n_pmus:
            raise ConfigError(f"{path}:{lineno}: expected {1 + 2 * n_pmus} columns")
        try:
            tags.append(float(parts[0]))
            feats.append([float(p) for p in parts[1:1 + n_pmus]])
            labs.append([int(p) for p in parts[1 + n_pmus:]])
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: non-numeric value") from None
    if len(tags) != n_rows:
        raise ConfigError(f"{path}: meta says rows={n_rows}, file has {len(tags)}")
    return LabeledDataset(np.array(tags), np.array(feats), np.array(labs, dtype=np.int64),
                          provenance=meta)

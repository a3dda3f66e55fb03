"""Decision unit: threshold raw network outputs, localize, re-attach time tags.

Raw sigmoid outputs in (0, 1) are turned into binary attack verdicts by a
step at the threshold alpha (the boundary value maps to 1), the PMUs with
verdict 1 are reported as attacked, and each verdict row keeps the time
tag of the sample it came from.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import mlp
from .dataset import LabeledDataset


@dataclass(frozen=True)
class NormalizerConfig:
    alpha: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True, eq=False)
class DetectionFrame:
    """Per-sample result: time tag, binary verdicts, raw network outputs."""

    time_tag: float
    verdicts: np.ndarray
    raw_outputs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.verdicts, dtype=np.int64)
        r = np.asarray(self.raw_outputs, dtype=float)
        if v.shape != r.shape:
            raise ValueError("verdicts and raw_outputs must have equal shape")
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("verdicts must be 0 or 1")
        object.__setattr__(self, "verdicts", v)
        object.__setattr__(self, "raw_outputs", r)


def normalize(raw, cfg: NormalizerConfig) -> np.ndarray:
    """Entry-wise step: 1 where the output is >= alpha, else 0."""
    arr = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("raw outputs must be finite")
    return (arr >= cfg.alpha).astype(np.int64)


def localize(verdicts) -> list[int]:
    """1-based PMU numbers with verdict 1, ascending."""
    v = np.asarray(verdicts)
    return [int(j) + 1 for j in np.flatnonzero(v)]


def run_pipeline(net: "mlp.MlpNetwork | Callable[[np.ndarray], np.ndarray]",
                 ds: LabeledDataset, cfg: NormalizerConfig) -> list[DetectionFrame]:
    """Score every dataset row: forward, threshold, localize, re-tag.

    ``net`` may be an MlpNetwork or any callable mapping an (n, n_pmus)
    batch to raw outputs (handy for stub scorers in tests). Output order
    equals input order.
    """
    if callable(net):
        raw = np.asarray(net(ds.features), dtype=float)
    else:
        if ds.n_pmus != net.n_inputs:
            raise ValueError(
                f"dataset width {ds.n_pmus} does not match network input "
                f"width {net.n_inputs}")
        raw = mlp.forward(net, ds.features)
    if raw.ndim != 2 or raw.shape[0] != ds.n_rows:
        raise ValueError(f"scorer returned shape {raw.shape} for {ds.n_rows} rows")
    verdicts = normalize(raw, cfg)
    return [DetectionFrame(float(t), v, r)
            for t, v, r in zip(ds.time_tags, verdicts, raw)]


def frames_verdict_matrix(frames: Sequence[DetectionFrame]) -> np.ndarray:
    return np.array([f.verdicts for f in frames], dtype=np.int64)


def frames_raw_matrix(frames: Sequence[DetectionFrame]) -> np.ndarray:
    return np.array([f.raw_outputs for f in frames], dtype=float)


# ---------------------------------------------------------------------------
# Report CSV (`t,v1..vN,raw1..rawN`) and a plain-text alarm summary.

def save_detection_report(frames: Sequence[DetectionFrame], path: str | Path) -> None:
    if not frames:
        raise ValueError("no detection frames to save")
    n = len(frames[0].verdicts)
    vcols = ",".join(f"v{j + 1}" for j in range(n))
    rcols = ",".join(f"raw{j + 1}" for j in range(n))
    lines = [f"t,{vcols},{rcols}"]
    for f in frames:
        lines.append(format(f.time_tag, ".9g") + ","
                     + ",".join(str(int(v)) for v in f.verdicts) + ","
                     + ",".join(format(r, ".9g") for r in f.raw_outputs))
    Path(path).write_text("\n".join(lines) + "\n")


def alarm_summary(frames: Sequence[DetectionFrame]) -> str:
    """Attacked-PMU intervals, one line per contiguous run of 1-verdicts."""
    if not frames:
        return "no frames\n"
    verdicts = frames_verdict_matrix(frames)
    tags = np.array([f.time_tag for f in frames])
    lines = []
    for j in range(verdicts.shape[1]):
        col = verdicts[:, j]
        edges = np.flatnonzero(np.diff(np.concatenate([[0], col, [0]])))
        for lo, hi in zip(edges[::2], edges[1::2]):
            lines.append(f"PMU {j + 1}: start={tags[lo]:.9g} end={tags[hi - 1]:.9g}")
    if not lines:
        return "no attacks detected\n"
    return "\n".join(lines) + "\n"

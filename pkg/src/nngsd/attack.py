"""GPS-spoofing attack model: time-varying phase offsets on PMU channels.

A spoofed receiver adopts a false time base, which shifts the phase of
everything the PMU reports while leaving signal magnitude untouched. On
the angle channel that is an additive offset, so injection adds the
per-PMU offset profile to the measured angle and leaves every other
channel bit-identical. Three waveform families are supported: step, ramp
(rate-limited rise to a plateau), and pulse (a short step).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configio import ConfigError, read_config, write_config
from .grid_sim import Trajectory

WAVEFORMS = ("step", "ramp", "pulse")


@dataclass(frozen=True)
class AttackProfile:
    """One spoof-phase profile on one PMU. `pmu_index` is 0-based."""

    pmu_index: int
    waveform: str
    start: float
    end: float
    magnitude: float
    ramp_rate: float = 0.0

    def __post_init__(self):
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"unknown waveform {self.waveform!r}, expected one of {WAVEFORMS}")
        if self.pmu_index < 0:
            raise ValueError("pmu_index must be >= 0")
        if not (0.0 <= self.start < self.end):
            raise ValueError(f"need 0 <= start < end, got [{self.start}, {self.end})")
        if not np.isfinite(self.magnitude):
            raise ValueError("magnitude must be finite")
        if not np.isfinite(self.ramp_rate):
            raise ValueError("ramp_rate must be finite")


@dataclass(frozen=True)
class AttackScenario:
    """A set of profiles; profiles on the same PMU must not overlap in time."""

    profiles: tuple[AttackProfile, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        by_pmu: dict[int, list[AttackProfile]] = {}
        for p in self.profiles:
            by_pmu.setdefault(p.pmu_index, []).append(p)
        for pmu, plist in by_pmu.items():
            plist.sort(key=lambda p: p.start)
            for a, b in zip(plist, plist[1:]):
                if b.start < a.end:
                    raise ValueError(
                        f"profiles on PMU index {pmu} overlap: "
                        f"[{a.start}, {a.end}) and [{b.start}, {b.end})")

    @property
    def attacked_pmus(self) -> tuple[int, ...]:
        return tuple(sorted({p.pmu_index for p in self.profiles}))


def theta_at(profile: AttackProfile, t):
    """Spoof phase offset (rad) of `profile` at time(s) `t`; 0 outside [start, end).

    Steps and pulses hold the peak magnitude over the window; ramps rise
    from zero at `ramp_rate` and saturate at the magnitude.
    """
    t_arr = np.asarray(t, dtype=float)
    inside = (t_arr >= profile.start) & (t_arr < profile.end)
    if profile.waveform == "ramp":
        value = np.minimum(profile.magnitude, profile.ramp_rate * (t_arr - profile.start))
    else:
        value = np.broadcast_to(profile.magnitude, t_arr.shape)
    out = np.where(inside, value, 0.0)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out)
    return out


def scenario_offsets(scenario: AttackScenario, time_tags: np.ndarray,
                     n_pmus: int) -> np.ndarray:
    """Per-sample, per-PMU spoof offsets on the given time grid."""
    offsets = np.zeros((len(time_tags), n_pmus))
    for p in scenario.profiles:
        if p.pmu_index >= n_pmus:
            raise IndexError(
                f"profile targets PMU index {p.pmu_index}, trajectory has {n_pmus} PMUs")
        offsets[:, p.pmu_index] += theta_at(p, time_tags)
    return offsets


def inject(traj: Trajectory, scenario: AttackScenario) -> tuple[Trajectory, np.ndarray]:
    """Apply the scenario to a trajectory.

    Returns the spoofed trajectory and an (n, n_pmus) 0/1 label matrix
    with 1 wherever the injected offset is nonzero. Channels of PMUs
    without an active profile are bit-identical to the input; time tags
    are unchanged.
    """
    offsets = scenario_offsets(scenario, traj.time_tags, traj.n_pmus)
    spoofed = traj.measurements.copy()
    for j in sorted({p.pmu_index for p in scenario.profiles}):
        spoofed[:, j] += offsets[:, j]
    labels = (offsets != 0.0).astype(np.int64)
    return Trajectory(traj.time_tags, traj.states, spoofed), labels


# ---------------------------------------------------------------------------
# Randomized scenario generation for dataset building and evaluation runs.

@dataclass(frozen=True)
class ScenarioGeneratorConfig:
    """Knobs for drawing random attack scenarios (all ranges inclusive)."""

    n_pmus: int = 5
    window: float = 10.0
    min_attacked: int = 1
    max_attacked: int = 3
    magnitude_range: tuple[float, float] = (0.1, 1.0)
    ramp_rate_range: tuple[float, float] = (0.1, 0.8)
    duration_range: tuple[float, float] = (1.5, 6.0)
    pulse_duration_range: tuple[float, float] = (0.2, 0.8)
    waveform_weights: tuple[float, float, float] = (0.4, 0.3, 0.3)
    start_margin: float = 0.5

    def __post_init__(self):
        if not (1 <= self.min_attacked <= self.max_attacked <= self.n_pmus):
            raise ValueError("need 1 <= min_attacked <= max_attacked <= n_pmus")
        if self.window <= 2 * self.start_margin:
            raise ValueError("window too short for the configured start margin")


def random_scenario(rng: np.random.Generator,
                    cfg: ScenarioGeneratorConfig = ScenarioGeneratorConfig()) -> AttackScenario:
    """Draw one scenario: 1..max_attacked PMUs, one random profile each."""
    n_attacked = int(rng.integers(cfg.min_attacked, cfg.max_attacked + 1))
    pmus = rng.choice(cfg.n_pmus, size=n_attacked, replace=False)
    weights = np.asarray(cfg.waveform_weights, dtype=float)
    weights = weights / weights.sum()
    profiles = []
    for pmu in sorted(int(p) for p in pmus):
        waveform = WAVEFORMS[int(rng.choice(len(WAVEFORMS), p=weights))]
        dur_range = cfg.pulse_duration_range if waveform == "pulse" else cfg.duration_range
        duration = float(rng.uniform(*dur_range))
        latest = max(cfg.start_margin, cfg.window - duration - cfg.start_margin)
        start = float(rng.uniform(cfg.start_margin, latest))
        end = min(start + duration, cfg.window)
        magnitude = float(rng.uniform(*cfg.magnitude_range))
        ramp_rate = float(rng.uniform(*cfg.ramp_rate_range)) if waveform == "ramp" else 0.0
        profiles.append(AttackProfile(pmu, waveform, start, end, magnitude, ramp_rate))
    return AttackScenario(tuple(profiles))


# ---------------------------------------------------------------------------
# Scenario files (`# nngsd-scenario v1`) and label CSV.
#
# One `profile =` line per profile:
#   profile = <pmu (1-based)> <waveform> <start> <end> <magnitude> [ramp_rate]

def save_scenario_config(scenario: AttackScenario, path: str | Path) -> None:
    items = []
    for p in scenario.profiles:
        fields = [str(p.pmu_index + 1), p.waveform, p.start, p.end, p.magnitude]
        if p.waveform == "ramp":
            fields.append(p.ramp_rate)
        items.append(("profile", fields))
    write_config(path, "scenario", items)


def load_scenario_config(path: str | Path) -> AttackScenario:
    doc = read_config(path, expected_kind="scenario")
    profiles = []
    for toks in doc.all_values("profile"):
        if not isinstance(toks[0], str):
            raise ConfigError(f"{path}: 'profile' must be a single line")
        if len(toks) not in (5, 6):
            raise ConfigError(
                f"{path}: profile needs 'pmu waveform start end magnitude [ramp_rate]', "
                f"got {toks!r}")
        try:
            pmu = int(toks[0])
            start, end, magnitude = (float(x) for x in toks[2:5])
            ramp_rate = float(toks[5]) if len(toks) == 6 else 0.0
        except ValueError:
            raise ConfigError(f"{path}: non-numeric profile field in {toks!r}") from None
        if pmu < 1:
            raise ConfigError(f"{path}: profile PMU numbers are 1-based, got {pmu}")
        profiles.append(AttackProfile(pmu - 1, toks[1], start, end, magnitude, ramp_rate))
    return AttackScenario(tuple(profiles))


def save_labels_csv(time_tags: np.ndarray, labels: np.ndarray, path: str | Path) -> None:
    cols = ",".join(f"y{j + 1}" for j in range(labels.shape[1]))
    lines = [f"t,{cols}"]
    for t, row in zip(time_tags, labels):
        lines.append(format(t, ".9g") + "," + ",".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_labels_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("t,y"):
        raise ConfigError(f"{path}: not a label CSV (expected 't,y1,...' header)")
    n = len(lines[0].split(",")) - 1
    tags, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n + 1:
            raise ConfigError(f"{path}:{lineno}: expected {n + 1} columns")
        tags.append(float(parts[0]))
        rows.append([int(p) for p in parts[1:]])
    return np.array(tags), np.array(rows, dtype=np.int64)

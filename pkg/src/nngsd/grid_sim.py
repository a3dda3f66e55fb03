"""Linear multi-machine grid simulator producing time-tagged PMU angle streams.

The plant is a block-structured continuous-time linear system: one state
block per generator subsystem, cross-coupling blocks between subsystems,
and one measurement row per PMU. Simulation uses the exact zero-order-hold
discretization (linear dynamics make exactness free) plus seeded Gaussian
process/measurement noise, so identical seeds reproduce trajectories
bit-for-bit.

The shipped default plant is a five-generator linearized swing model with
per-generator state [angle deviation (rad), speed deviation (rad/s)]:

    d(angle_i)/dt = speed_i
    d(speed_i)/dt = (omega_s / 2 H_i) * (u_i - D_i * speed_i
                      - sum_j K_ij * (angle_i - angle_j))

where H_i is inertia (s), D_i damping (pu), K a symmetric non-negative
synchronizing-coefficient matrix, and u_i a per-generator mechanical-power
input. Each PMU reports the angle state of its generator. All numeric
values live in a versioned config file (see ``load_model_config``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from .configio import ConfigDoc, ConfigError, parse_config, read_config, write_config

OMEGA_60HZ = 2.0 * np.pi * 60.0

# simulate() aborts once any state magnitude crosses this.
STATE_ABS_LIMIT = 1.0e6

_STABILITY_TOL = 1.0e-9


class BlockDimensionError(ValueError):
    """Block matrices of a grid model do not fit together."""


class SimulationDiverged(RuntimeError):
    """State magnitude exceeded the blow-up guard during simulation."""


def _freeze(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridModel:
    """Block matrices and noise levels of the coupled linear grid.

    ``a_blocks[i]`` is the square in-subsystem matrix, ``b_blocks[i]`` the
    input matrix, ``c_blocks[i]`` the measurement rows of subsystem i.
    ``h_blocks[(i, j)]`` couples subsystem j's state into subsystem i's
    dynamics; ``l_blocks[(i, j)]`` couples it into subsystem i's
    measurement. Missing coupling keys mean zero blocks. Indices are
    0-based.
    """

    a_blocks: tuple[np.ndarray, ...]
    b_blocks: tuple[np.ndarray, ...]
    c_blocks: tuple[np.ndarray, ...]
    h_blocks: Mapping[tuple[int, int], np.ndarray] = dataclasses.field(default_factory=dict)
    l_blocks: Mapping[tuple[int, int], np.ndarray] = dataclasses.field(default_factory=dict)
    process_noise_std: float = 0.0
    measurement_noise_std: float = 0.0
    nominal_frequency: float = OMEGA_60HZ

    def __post_init__(self):
        object.__setattr__(self, "a_blocks", tuple(_freeze(a) for a in self.a_blocks))
        object.__setattr__(self, "b_blocks", tuple(_freeze(b) for b in self.b_blocks))
        object.__setattr__(self, "c_blocks", tuple(_freeze(c) for c in self.c_blocks))
        object.__setattr__(self, "h_blocks",
                           {k: _freeze(v) for k, v in dict(self.h_blocks).items()})
        object.__setattr__(self, "l_blocks",
                           {k: _freeze(v) for k, v in dict(self.l_blocks).items()})
        if not self.a_blocks:
            raise BlockDimensionError("a grid model needs at least one subsystem")
        if len(self.b_blocks) != self.n_subsystems or len(self.c_blocks) != self.n_subsystems:
            raise BlockDimensionError(
                f"expected {self.n_subsystems} B and C blocks, got "
                f"{len(self.b_blocks)} and {len(self.c_blocks)}")
        if self.process_noise_std < 0 or self.measurement_noise_std < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if not np.isfinite(self.nominal_frequency) or self.nominal_frequency <= 0:
            raise ValueError("nominal_frequency must be a positive finite rad/s value")
        a_full, _, _ = assemble_full_system(self)
        max_real = float(np.max(np.linalg.eigvals(a_full).real))
        if max_real > _STABILITY_TOL:
            raise ValueError(
                f"assembled system is unstable: max eigenvalue real part {max_real:.3e}")

    @property
    def n_subsystems(self) -> int:
        return len(self.a_blocks)

    @property
    def state_dims(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.a_blocks)

    @property
    def n_states(self) -> int:
        return sum(self.state_dims)

    @property
    def n_outputs(self) -> int:
        return sum(c.shape[0] for c in self.c_blocks)


@dataclass(frozen=True)
class InputStep:
    """Piecewise-constant input breakpoint: u of `subsystem` becomes `value` at `time`."""

    subsystem: int
    time: float
    value: float


@dataclass(frozen=True)
class SimConfig:
    sample_rate: float = 50.0
    duration: float = 10.0
    seed: int = 0
    initial_state: np.ndarray | None = None
    input_schedule: tuple[InputStep, ...] = ()

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.initial_state is not None:
            object.__setattr__(self, "initial_state", _freeze(self.initial_state))
            if not np.all(np.isfinite(self.initial_state)):
                raise ValueError("initial_state must be finite")
        object.__setattr__(self, "input_schedule", tuple(self.input_schedule))
        per_sub: dict[int, float] = {}
        for step in self.input_schedule:
            if not (0.0 <= step.time <= self.duration):
                raise ValueError(f"input step at t={step.time} outside [0, {self.duration}]")
            prev = per_sub.get(step.subsystem)
            if prev is not None and step.time <= prev:
                raise ValueError(
                    f"input breakpoints for subsystem {step.subsystem} must be strictly increasing")
            per_sub[step.subsystem] = step.time


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled run: time tags (s), full states, PMU measurements (rad)."""

    time_tags: np.ndarray
    states: np.ndarray
    measurements: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "time_tags", _freeze(self.time_tags))
        object.__setattr__(self, "states", _freeze(self.states))
        object.__setattr__(self, "measurements", _freeze(self.measurements))
        n = len(self.time_tags)
        if self.states.shape[0] != n or self.measurements.shape[0] != n:
            raise ValueError("time_tags, states and measurements must have equal length")
        if n == 0:
            raise ValueError("empty trajectory")
        if n > 1:
            gaps = np.diff(self.time_tags)
            if np.min(gaps) <= 0:
                raise ValueError("time tags must be strictly increasing")
            if np.max(np.abs(gaps - gaps[0])) > 1.0e-9:
                raise ValueError("time tags must be uniformly spaced within 1e-9 s")

    @property
    def n_samples(self) -> int:
        return len(self.time_tags)

    @property
    def n_pmus(self) -> int:
        return self.measurements.shape[1]

    @property
    def sample_rate(self) -> float:
        if self.n_samples < 2:
            return float("nan")
        return 1.0 / float(self.time_tags[1] - self.time_tags[0])


def assemble_full_system(model: GridModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack subsystem blocks into full (A, B, C) matrices.

    Diagonal blocks of A are the per-subsystem matrices, off-diagonal
    block (i, j) is the dynamic coupling block; C is assembled the same
    way from measurement and measurement-coupling blocks. Raises
    BlockDimensionError naming the offending block indices.
    """
    dims = []
    for i, a in enumerate(model.a_blocks):
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise BlockDimensionError(f"A block {i} must be square, got shape {a.shape}")
        dims.append(a.shape[0])
    offsets = np.concatenate([[0], np.cumsum(dims)])
    n = int(offsets[-1])

    a_full = np.zeros((n, n))
    for i, a in enumerate(model.a_blocks):
        a_full[offsets[i]:offsets[i + 1], offsets[i]:offsets[i + 1]] = a
    for (i, j), h in model.h_blocks.items():
        if i == j or not (0 <= i < len(dims) and 0 <= j < len(dims)):
            raise BlockDimensionError(f"H block ({i}, {j}) has invalid subsystem indices")
        if h.shape != (dims[i], dims[j]):
            raise BlockDimensionError(
                f"H block ({i}, {j}) has shape {h.shape}, expected {(dims[i], dims[j])}")
        a_full[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = h

    in_dims = []
    for i, b in enumerate(model.b_blocks):
        if b.ndim != 2 or b.shape[0] != dims[i]:
            raise BlockDimensionError(
                f"B block {i} has shape {b.shape}, expected {dims[i]} rows")
        in_dims.append(b.shape[1])
    in_offsets = np.concatenate([[0], np.cumsum(in_dims)])
    b_full = np.zeros((n, int(in_offsets[-1])))
    for i, b in enumerate(model.b_blocks):
        b_full[offsets[i]:offsets[i + 1], in_offsets[i]:in_offsets[i + 1]] = b

    out_dims = []
    for i, c in enumerate(model.c_blocks):
        if c.ndim != 2 or c.shape[1] != dims[i]:
            raise BlockDimensionError(
                f"C block {i} has shape {c.shape}, expected {dims[i]} columns")
        out_dims.append(c.shape[0])
    out_offsets = np.concatenate([[0], np.cumsum(out_dims)])
    c_full = np.zeros((int(out_offsets[-1]), n))
    for i, c in enumerate(model.c_blocks):
        c_full[out_offsets[i]:out_offsets[i + 1], offsets[i]:offsets[i + 1]] = c
    for (i, j), l in model.l_blocks.items():
        if i == j or not (0 <= i < len(dims) and 0 <= j < len(dims)):
            raise BlockDimensionError(f"L block ({i}, {j}) has invalid subsystem indices")
        if l.shape != (out_dims[i], dims[j]):
            raise BlockDimensionError(
                f"L block ({i}, {j}) has shape {l.shape}, expected {(out_dims[i], dims[j])}")
        c_full[out_offsets[i]:out_offsets[i + 1], offsets[j]:offsets[j + 1]] = l

    return a_full, b_full, c_full


def discretize(a_full: np.ndarray, b_full: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization via the augmented matrix exponential.

    exp([[A, B], [0, 0]] * dt) = [[A_d, B_d], [0, I]] with
    A_d = exp(A dt) and B_d = (integral_0^dt exp(A s) ds) B.
    """
    a = np.asarray(a_full, dtype=float)
    b = np.asarray(b_full, dtype=float)
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("discretize requires finite input matrices")
    n = a.shape[0]
    m = b.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = a
    aug[:n, n:] = b
    phi = expm(aug * dt)
    return phi[:n, :n], phi[:n, n:]


def _input_trajectory(model: GridModel, cfg: SimConfig, time_tags: np.ndarray) -> np.ndarray:
    in_dims = [b.shape[1] for b in model.b_blocks]
    in_offsets = np.concatenate([[0], np.cumsum(in_dims)])
    u = np.zeros((len(time_tags), int(in_offsets[-1])))
    for step in sorted(cfg.input_schedule, key=lambda s: s.time):
        if not (0 <= step.subsystem < model.n_subsystems):
            raise ValueError(f"input step references unknown subsystem {step.subsystem}")
        lo, hi = in_offsets[step.subsystem], in_offsets[step.subsystem + 1]
        u[time_tags >= step.time, lo:hi] = step.value
    return u


def simulate(model: GridModel, cfg: SimConfig) -> Trajectory:
    """Run the discretized model: x[k+1] = A_d x[k] + B_d u[k] + w[k], z = C x + xi.

    Noise is zero-mean Gaussian at the model's configured standard
    deviations, drawn from a generator seeded by ``cfg.seed``; equal seeds
    and inputs give bit-identical trajectories.
    """
    a_full, b_full, c_full = assemble_full_system(model)
    dt = 1.0 / cfg.sample_rate
    a_d, b_d = discretize(a_full, b_full, dt)

    n_steps = int(round(cfg.duration * cfg.sample_rate))
    if n_steps < 1:
        raise ValueError("duration x sample_rate must give at least one sample")
    time_tags = np.arange(n_steps) / cfg.sample_rate

    if cfg.initial_state is None:
        x = np.zeros(model.n_states)
    else:
        x = np.array(cfg.initial_state, dtype=float)
        if x.shape != (model.n_states,):
            raise ValueError(
                f"initial_state has shape {x.shape}, model expects ({model.n_states},)")

    u = _input_trajectory(model, cfg, time_tags)
    rng = np.random.default_rng(cfg.seed)
    w = rng.standard_normal((n_steps - 1, model.n_states)) * model.process_noise_std
    xi = rng.standard_normal((n_steps, model.n_outputs)) * model.measurement_noise_std

    states = np.empty((n_steps, model.n_states))
    measurements = np.empty((n_steps, model.n_outputs))
    for k in range(n_steps):
        states[k] = x
        measurements[k] = c_full @ x + xi[k]
        if k + 1 < n_steps:
            x = a_d @ x + b_d @ u[k] + w[k]
            peak = float(np.max(np.abs(x)))
            if peak > STATE_ABS_LIMIT:
                raise SimulationDiverged(
                    f"state magnitude {peak:.3e} exceeds {STATE_ABS_LIMIT:.0e} "
                    f"at t={time_tags[k + 1]:.6g} s (step {k + 1})")
    return Trajectory(time_tags, states, measurements)


# ---------------------------------------------------------------------------
# Swing-model construction and model config files.

def swing_model(omega_s: float, inertia: np.ndarray, damping: np.ndarray,
                k_matrix: np.ndarray, process_noise_std: float = 0.0,
                measurement_noise_std: float = 0.0) -> GridModel:
    """Build the linearized swing-dynamics GridModel from physical parameters."""
    h = np.asarray(inertia, dtype=float)
    d = np.asarray(damping, dtype=float)
    k = np.asarray(k_matrix, dtype=float)
    n = len(h)
    if len(d) != n or k.shape != (n, n):
        raise ConfigError(
            f"inconsistent swing parameters: {n} inertias, {len(d)} dampings, K {k.shape}")
    if np.any(h <= 0):
        raise ConfigError("inertia values must be > 0")
    if np.any(d < 0):
        raise ConfigError("damping values must be >= 0")
    if np.max(np.abs(k - k.T)) > 1.0e-9:
        raise ConfigError("synchronizing-coefficient matrix must be symmetric")
    if np.any(k < 0):
        raise ConfigError("synchronizing coefficients must be >= 0")
    if np.any(np.abs(np.diag(k)) > 0):
        raise ConfigError("synchronizing-coefficient matrix must have a zero diagonal")

    gains = omega_s / (2.0 * h)
    a_blocks = []
    b_blocks = []
    c_blocks = []
    h_blocks = {}
    for i in range(n):
        coupling_sum = float(np.sum(k[i]) - k[i, i])
        a_blocks.append(np.array([[0.0, 1.0],
                                  [-gains[i] * coupling_sum, -gains[i] * d[i]]]))
        b_blocks.append(np.array([[0.0], [gains[i]]]))
        c_blocks.append(np.array([[1.0, 0.0]]))
        for j in range(n):
            if j != i and k[i, j] != 0.0:
                h_blocks[(i, j)] = np.array([[0.0, 0.0], [gains[i] * k[i, j], 0.0]])
    return GridModel(a_blocks=tuple(a_blocks), b_blocks=tuple(b_blocks),
                     c_blocks=tuple(c_blocks), h_blocks=h_blocks,
                     process_noise_std=process_noise_std,
                     measurement_noise_std=measurement_noise_std,
                     nominal_frequency=omega_s)


def model_from_config(doc: ConfigDoc) -> GridModel:
    return swing_model(
        omega_s=doc.float_("omega_s", OMEGA_60HZ),
        inertia=doc.floats("inertia_s"),
        damping=doc.floats("damping_pu"),
        k_matrix=doc.matrix("sync_coefficients"),
        process_noise_std=doc.float_("process_noise_std", 0.0),
        measurement_noise_std=doc.float_("measurement_noise_std", 0.0),
    )


def load_model_config(path: str | Path) -> GridModel:
    """Read a ``# nngsd-model v1`` file (see data/default_model.cfg for the schema)."""
    return model_from_config(read_config(path, expected_kind="model"))


def write_model_config(path: str | Path, omega_s: float, inertia, damping,
                       k_matrix, process_noise_std: float = 0.0,
                       measurement_noise_std: float = 0.0) -> None:
    write_config(path, "model", [
        ("omega_s", float(omega_s)),
        ("inertia_s", np.asarray(inertia, dtype=float)),
        ("damping_pu", np.asarray(damping, dtype=float)),
        ("sync_coefficients", np.asarray(k_matrix, dtype=float)),
        ("process_noise_std", float(process_noise_std)),
        ("measurement_noise_std", float(measurement_noise_std)),
    ])


def default_model(process_noise_std: float | None = None,
                  measurement_noise_std: float | None = None) -> GridModel:
    """Five-generator default plant loaded from the packaged config file."""
    text = resources.files("nngsd").joinpath("data/default_model.cfg").read_text()
    model = model_from_config(
        parse_config(text, expected_kind="model", source="data/default_model.cfg"))
    replacements = {}
    if process_noise_std is not None:
        replacements["process_noise_std"] = process_noise_std
    if measurement_noise_std is not None:
        replacements["measurement_noise_std"] = measurement_noise_std
    if replacements:
        model = dataclasses.replace(model, **replacements)
    return model


# ---------------------------------------------------------------------------
# Trajectory CSV: header `t,pmu1,...,pmuN`, 9 significant digits.

def save_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    cols = ",".join(f"pmu{j + 1}" for j in range(traj.n_pmus))
    lines = [f"t,{cols}"]
    for t, row in zip(traj.time_tags, traj.measurements):
        lines.append(format(t, ".9g") + "," + ",".join(format(v, ".9g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory_csv(path: str | Path) -> Trajectory:
    """Parse a trajectory CSV; states are not stored and come back as zeros."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("t,pmu"):
        raise ConfigError(f"{path}: not a trajectory CSV (expected 't,pmu1,...' header)")
    n_pmus = len(lines[0].split(",")) - 1
    data = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_pmus + 1:
            raise ConfigError(f"{path}:{lineno}: expected {n_pmus + 1} columns")
        try:
            data.append([float(p) for p in parts])
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: non-numeric value") from None
    arr = np.array(data, dtype=float)
    if arr.size == 0:
        raise ConfigError(f"{path}: trajectory CSV has no data rows")
    return Trajectory(arr[:, 0], np.zeros((arr.shape[0], 0)), arr[:, 1:])

"""Experiment drivers: scenario batches, detection tables, condition sweeps.

Each evaluation run simulates a batch of 10-second windows with random
initial operating points and random spoof scenarios, scores every sample
with the trained network, and reports two detection percentages per PMU:
the raw network output thresholded at a fixed 0.5, and the full decision
pipeline with its configured (typically validation-tuned) threshold.
Conditions cover normal operation, added measurement noise, and load
changes driven through the control input.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

from . import mlp
from .attack import (AttackScenario, ScenarioGeneratorConfig, random_scenario,
                     scenario_offsets, inject)
from .dataset import LabeledDataset, concat, preprocess
from .detector import (NormalizerConfig, frames_raw_matrix, frames_verdict_matrix,
                       run_pipeline)
from .grid_sim import GridModel, InputStep, SimConfig, assemble_full_system, simulate
from .plots import render_line_svg

CONDITIONS = ("normal", "noisy", "load_change", "noisy_load_change")

# Mid-window control-input steps used for the load-change conditions:
# two subsystems, 10-20% of the 1 pu nominal input magnitude.
DEFAULT_LOAD_STEPS = (InputStep(subsystem=0, time=5.0, value=0.15),
                      InputStep(subsystem=2, time=5.0, value=-0.10))

DEFAULT_ALPHA_GRID = np.linspace(0.02, 0.98, 49)


@dataclass(frozen=True)
class DataGenConfig:
    """How scenario windows are produced.

    Every window runs at a random steady operating point: a system loading
    level in ``+-dispatch_scale`` applied through a fixed alternating
    participation pattern, Gaussian per-generator dispatch jitter with
    standard deviation ``dispatch_jitter``, a rigid common angle offset,
    and a small random perturbation of the initial state. That benign
    spread is what the detector has to distinguish spoof offsets from.
    """

    sample_rate: float = 50.0
    dispatch_scale: float = 1.2
    dispatch_jitter: float = 0.30
    common_angle_max: float = 0.4
    init_angle_max: float = 0.10
    init_speed_max: float = 0.05
    attacks: ScenarioGeneratorConfig = ScenarioGeneratorConfig()

    @property
    def window(self) -> float:
        return self.attacks.window


@dataclass(frozen=True)
class ExperimentSpec:
    condition: str = "normal"
    noise_std: float = 0.1
    load_steps: tuple[InputStep, ...] = DEFAULT_LOAD_STEPS
    n_scenarios: int = 6
    seed: int = 0
    gen: DataGenConfig = DataGenConfig()
    attack_free: bool = False

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.gen.window <= 0:
            raise ValueError("window must be > 0")
        if self.n_scenarios < 1:
            raise ValueError("n_scenarios must be >= 1")


@dataclass(frozen=True, eq=False)
class EvalTable:
    """Two detection-percentage columns per PMU plus the overall row.

    Overall is the mean over all (sample, PMU) cells, not the mean of the
    per-PMU rows.
    """

    condition: str
    nn_per_pmu: np.ndarray
    nngsd_per_pmu: np.ndarray
    nn_overall: float
    nngsd_overall: float
    alpha: float

    def __post_init__(self):
        for arr in (self.nn_per_pmu, self.nngsd_per_pmu):
            if np.any(arr < 0) or np.any(arr > 100):
                raise ValueError("percentages must lie in [0, 100]")
        for v in (self.nn_overall, self.nngsd_overall):
            if not (0.0 <= v <= 100.0):
                raise ValueError("percentages must lie in [0, 100]")


def detection_percentage(verdicts: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-PMU and overall percent of samples where verdict equals label."""
    v = np.asarray(verdicts)
    y = np.asarray(labels)
    if v.size == 0:
        raise ValueError("detection_percentage needs at least one sample")
    if v.shape != y.shape:
        raise ValueError(f"verdicts {v.shape} and labels {y.shape} must align")
    match = (v == y)
    return 100.0 * match.mean(axis=0), 100.0 * float(match.mean())


def tune_alpha(raw_outputs: np.ndarray, labels: np.ndarray,
               grid: np.ndarray = DEFAULT_ALPHA_GRID) -> float:
    """Threshold maximizing cell accuracy on held-out outputs.

    Ties are broken toward 0.5 (then toward the smaller value) so the
    result is deterministic.
    """
    raw = np.asarray(raw_outputs, dtype=float)
    y = np.asarray(labels)
    accs = np.array([float(np.mean((raw >= a).astype(np.int64) == y)) for a in grid])
    best = float(np.max(accs))
    candidates = [float(a) for a, acc in zip(grid, accs) if acc == best]
    return min(candidates, key=lambda a: (abs(a - 0.5), a))


def _random_dispatch(model: GridModel, gen: DataGenConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """Constant per-generator input: loading level times an alternating
    participation pattern plus jitter, projected so the marginally stable
    common mode does not drift."""
    n = model.n_subsystems
    pattern = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(n)])
    level = rng.uniform(-gen.dispatch_scale, gen.dispatch_scale)
    jitter = rng.normal(0.0, gen.dispatch_jitter, size=n)
    u = level * pattern + jitter
    a_full, b_full, _ = assemble_full_system(model)
    null = null_space(a_full.T)
    if null.shape[1]:
        weights = null[:, 0] @ b_full
        denom = float(np.sum(weights))
        if abs(denom) > 1.0e-9:
            u = u - (float(weights @ u) / denom) * np.ones_like(u)
    return u


def generate_case(model: GridModel, gen: DataGenConfig, rng: np.random.Generator,
                  load_steps: Sequence[InputStep] = (),
                  attack_free: bool = False, tag: str = "case",
                  scenario: AttackScenario | None = None,
                  ) -> tuple[LabeledDataset, AttackScenario]:
    """One simulated window: random operating point, random attack, preprocessing.

    ``load_steps`` values are deltas on top of the window's dispatch
    input, applied at their breakpoint times.
    """
    dispatch = _random_dispatch(model, gen, rng)
    a_full, b_full, _ = assemble_full_system(model)
    x0 = np.linalg.lstsq(a_full, -b_full @ dispatch, rcond=None)[0]
    common = rng.uniform(-gen.common_angle_max, gen.common_angle_max)
    offset = 0
    for dim in model.state_dims:
        x0[offset] += common + rng.uniform(-gen.init_angle_max, gen.init_angle_max)
        if dim > 1:
            x0[offset + 1] += rng.uniform(-gen.init_speed_max, gen.init_speed_max)
        offset += dim
    if scenario is None:
        scenario = AttackScenario() if attack_free else random_scenario(rng, gen.attacks)
    sim_seed = int(rng.integers(2 ** 63 - 1))
    schedule = [InputStep(i, 0.0, float(dispatch[i])) for i in range(model.n_subsystems)]
    schedule += [InputStep(s.subsystem, s.time, float(dispatch[s.subsystem]) + s.value)
                 for s in load_steps]
    cfg = SimConfig(sample_rate=gen.sample_rate, duration=gen.window, seed=sim_seed,
                    initial_state=x0, input_schedule=tuple(schedule))
    spoofed, labels = inject(simulate(model, cfg), scenario)
    ds = preprocess(spoofed, labels,
                    provenance={"seed": str(sim_seed), "scenario": tag})
    return ds, scenario


def generate_training_matrix(model: GridModel, gen: DataGenConfig,
                             n_scenarios: int, seed: int,
                             samples_per_scenario: int | None = None) -> LabeledDataset:
    """Batch-generate the labeled training matrix from seeded random scenarios.

    ``samples_per_scenario`` keeps a uniform stride of each window's rows
    (None keeps every sample); many scenarios with few rows each give a
    more diverse matrix than few full windows for the same total size.
    """
    rng = np.random.default_rng(seed)
    parts = []
    for i in range(n_scenarios):
        ds = generate_case(model, gen, rng, tag=f"train{i}")[0]
        if samples_per_scenario is not None:
            if not (1 <= samples_per_scenario <= ds.n_rows):
                raise ValueError(
                    f"samples_per_scenario must be in [1, {ds.n_rows}], "
                    f"got {samples_per_scenario}")
            idx = np.arange(samples_per_scenario) * (ds.n_rows // samples_per_scenario)
            ds = LabeledDataset(ds.time_tags[idx], ds.features[idx], ds.labels[idx],
                                ds.provenance)
        parts.append(ds)
    ds = concat(parts) if len(parts) > 1 else parts[0]
    prov = dict(ds.provenance)
    prov["seed"] = str(seed)
    return LabeledDataset(ds.time_tags, ds.features, ds.labels, prov)


def _fmt_row(values, fmt: str) -> str:
    return ",".join(format(v, fmt) for v in values)


def save_table_csv(table: EvalTable, path: str | Path) -> None:
    lines = ["row,nn_output,nngsd"]
    for j, (a, b) in enumerate(zip(table.nn_per_pmu, table.nngsd_per_pmu)):
        lines.append(f"PMU{j + 1},{format(a, '.10g')},{format(b, '.10g')}")
    lines.append(f"Overall,{format(table.nn_overall, '.10g')},"
                 f"{format(table.nngsd_overall, '.10g')}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_table_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Parse back (nn_per_pmu, nngsd_per_pmu, nn_overall, nngsd_overall)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "row,nn_output,nngsd":
        raise ValueError(f"{path}: not a detection table CSV")
    nn, gs = [], []
    nn_overall = gs_overall = None
    for line in lines[1:]:
        name, a, b = line.split(",")
        if name == "Overall":
            nn_overall, gs_overall = float(a), float(b)
        else:
            nn.append(float(a))
            gs.append(float(b))
    if nn_overall is None:
        raise ValueError(f"{path}: missing Overall row")
    return np.array(nn), np.array(gs), nn_overall, gs_overall


_CONDITION_TITLES = {
    "normal": "normal operation",
    "noisy": "in the presence of noise",
    "load_change": "under load changing",
    "noisy_load_change": "under noise and load changing",
}


def render_table_text(table: EvalTable) -> str:
    lines = [f"Percentage of attack detection on PMUs ({_CONDITION_TITLES[table.condition]})",
             f"decision threshold alpha = {table.alpha:g}",
             "",
             f"{'':10s}{'NN output':>12s}{'NNGSD':>12s}"]
    for j, (a, b) in enumerate(zip(table.nn_per_pmu, table.nngsd_per_pmu)):
        lines.append(f"{'PMU' + str(j + 1):10s}{a:12.4f}{b:12.4f}")
    lines.append(f"{'Overall':10s}{table.nn_overall:12.4f}{table.nngsd_overall:12.4f}")
    return "\n".join(lines) + "\n"


def run_experiment(spec: ExperimentSpec, model: GridModel, net: mlp.MlpNetwork,
                   alpha: float, out_dir: str | Path | None = None,
                   write_svg: bool = False) -> EvalTable:
    """simulate -> inject -> preprocess -> pipeline -> score for one condition.

    When ``out_dir`` is given, writes table.csv/table.txt, the per-sample
    detections.csv trace, and attack_angles.csv with the injected spoof
    phases evaluated on the sample grid.
    """
    noisy = spec.condition in ("noisy", "noisy_load_change")
    loady = spec.condition in ("load_change", "noisy_load_change")
    run_model = model
    if noisy:
        run_model = dataclasses.replace(model, measurement_noise_std=spec.noise_std)
    load_steps = spec.load_steps if loady else ()

    rng = np.random.default_rng(spec.seed)
    ncfg = NormalizerConfig(alpha)
    raw_parts, nn_parts, nngsd_parts, label_parts = [], [], [], []
    trace_rows: list[str] = []
    theta_rows: list[str] = []
    svg_inputs = []
    for i in range(spec.n_scenarios):
        ds, scenario = generate_case(run_model, spec.gen, rng, load_steps=load_steps,
                                     attack_free=spec.attack_free, tag=f"s{i}")
        frames = run_pipeline(net, ds, ncfg)
        raw = frames_raw_matrix(frames)
        v_nngsd = frames_verdict_matrix(frames)
        v_nn = (raw >= 0.5).astype(np.int64)
        raw_parts.append(raw)
        nn_parts.append(v_nn)
        nngsd_parts.append(v_nngsd)
        label_parts.append(ds.labels)
        theta = scenario_offsets(scenario, ds.time_tags, ds.n_pmus)
        for t, th in zip(ds.time_tags, theta):
            theta_rows.append(f"{i}," + format(t, ".17g") + ","
                              + _fmt_row(th, ".17g"))
        for t, r, a_nn, a_gs, y in zip(ds.time_tags, raw, v_nn, v_nngsd, ds.labels):
            trace_rows.append(f"{i}," + format(t, ".9g") + ","
                              + _fmt_row(r, ".9g") + ","
                              + ",".join(str(int(v)) for v in a_nn) + ","
                              + ",".join(str(int(v)) for v in a_gs) + ","
                              + ",".join(str(int(v)) for v in y))
        if write_svg and i == 0:
            svg_inputs.append((ds, theta, raw, v_nngsd))

    labels = np.vstack(label_parts)
    nn_pmu, nn_overall = detection_percentage(np.vstack(nn_parts), labels)
    gs_pmu, gs_overall = detection_percentage(np.vstack(nngsd_parts), labels)
    table = EvalTable(condition=spec.condition, nn_per_pmu=nn_pmu, nngsd_per_pmu=gs_pmu,
                      nn_overall=nn_overall, nngsd_overall=gs_overall, alpha=alpha)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_table_csv(table, out / "table.csv")
        (out / "table.txt").write_text(render_table_text(table))
        n = labels.shape[1]
        head = ("scenario,t,"
                + ",".join(f"raw{j + 1}" for j in range(n)) + ","
                + ",".join(f"nn{j + 1}" for j in range(n)) + ","
                + ",".join(f"nngsd{j + 1}" for j in range(n)) + ","
                + ",".join(f"y{j + 1}" for j in range(n)))
        (out / "detections.csv").write_text("\n".join([head] + trace_rows) + "\n")
        theta_head = "scenario,t," + ",".join(f"theta{j + 1}" for j in range(n))
        (out / "attack_angles.csv").write_text("\n".join([theta_head] + theta_rows) + "\n")
        for ds, theta, raw, v_nngsd in svg_inputs:
            render_line_svg(out / "attack_angles.svg", ds.time_tags,
                            [(f"PMU{j + 1}", theta[:, j]) for j in range(n)],
                            title=f"Injected spoof phase ({spec.condition})",
                            y_label="angle [rad]")
            render_line_svg(out / "detector_outputs.svg", ds.time_tags,
                            [(f"PMU{j + 1}", raw[:, j]) for j in range(n)],
                            title=f"Raw detector outputs ({spec.condition})",
                            y_label="network output")
            render_line_svg(out / "verdicts.svg", ds.time_tags,
                            [(f"PMU{j + 1}", v_nngsd[:, j] * 0.9 + j * 0.02)
                             for j in range(n)],
                            title=f"Thresholded verdicts ({spec.condition})",
                            y_label="verdict")
    return table


def median_table(tables: Sequence[EvalTable]) -> EvalTable:
    """Element-wise median across per-seed tables of one condition."""
    if not tables:
        raise ValueError("median_table needs at least one table")
    cond = tables[0].condition
    if any(t.condition != cond for t in tables):
        raise ValueError("tables mix conditions")
    return EvalTable(
        condition=cond,
        nn_per_pmu=np.median(np.vstack([t.nn_per_pmu for t in tables]), axis=0),
        nngsd_per_pmu=np.median(np.vstack([t.nngsd_per_pmu for t in tables]), axis=0),
        nn_overall=float(np.median([t.nn_overall for t in tables])),
        nngsd_overall=float(np.median([t.nngsd_overall for t in tables])),
        alpha=tables[0].alpha,
    )


def run_eval_suite(model: GridModel, net: mlp.MlpNetwork, alpha: float,
                   conditions: Sequence[str], seeds: Sequence[int],
                   base_spec: ExperimentSpec = ExperimentSpec(),
                   out_dir: str | Path | None = None,
                   write_svg: bool = False) -> dict[str, dict]:
    """Run every condition over every seed; merge per-condition medians.

    Per-seed artifacts go to ``<out>/<condition>/seed<k>/``; the merged
    table lands next to them and a combined plain-text summary at the
    root. The merge step is deterministic and single-threaded.
    """
    results: dict[str, dict] = {}
    summary_parts = []
    for cond in conditions:
        tables = []
        for seed in seeds:
            spec = dataclasses.replace(base_spec, condition=cond, seed=int(seed))
            run_out = None
            if out_dir is not None:
                run_out = Path(out_dir) / cond / f"seed{seed}"
            tables.append(run_experiment(spec, model, net, alpha, out_dir=run_out,
                                         write_svg=write_svg))
        merged = median_table(tables)
        results[cond] = {"seeds": list(seeds), "tables": tables, "median": merged}
        summary_parts.append(render_table_text(merged))
        if out_dir is not None:
            save_table_csv(merged, Path(out_dir) / cond / "table_median.csv")
            (Path(out_dir) / cond / "table_median.txt").write_text(
                render_table_text(merged))
    if out_dir is not None:
        (Path(out_dir) / "summary.txt").write_text(
            f"median over seeds {','.join(str(s) for s in seeds)}\n\n"
            + "\n".join(summary_parts))
    return results

"""Command-line interface.

Subcommands cover the full pipeline: ``simulate`` a grid run, ``attack``
a trajectory with a spoof scenario, ``dataset`` to batch-generate the
labeled training matrix, ``train`` the detector, ``detect`` on new data,
``eval`` for the condition tables, and ``sweep-alpha`` for threshold
sensitivity. Every subcommand accepts ``--seed``, ``--config <file>`` and
``--out <dir>``; exit status is 0 on success and nonzero with a
diagnostic line on any error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import dataset as dataset_mod
from . import evaluate as eval_mod
from . import grid_sim
from . import mlp
from .configio import ConfigError, read_config, write_config
from .detector import NormalizerConfig, alarm_summary, frames_raw_matrix, \
    frames_verdict_matrix, run_pipeline, save_detection_report
from .grid_sim import InputStep, SimConfig, SimulationDiverged
from .mlp import TrainingDiverged


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model(config_path: str | None) -> grid_sim.GridModel:
    if config_path is None:
        return grid_sim.default_model()
    return grid_sim.load_model_config(config_path)


def _parse_steps(raw_steps: list[str]) -> tuple[InputStep, ...]:
    steps = []
    for raw in raw_steps:
        parts = raw.replace(",", " ").split()
        if len(parts) != 3:
            raise ConfigError(f"input step {raw!r} must be 'subsystem,time,value'")
        sub, time, value = int(parts[0]), float(parts[1]), float(parts[2])
        if sub < 1:
            raise ConfigError("input step subsystem numbers are 1-based")
        steps.append(InputStep(sub - 1, time, value))
    return tuple(steps)


def _derived_seeds(seed: int) -> tuple[int, int, int]:
    """(init, shuffle, split) seeds derived from one root seed."""
    state = np.random.SeedSequence(seed).generate_state(3, dtype=np.uint64)
    return int(state[0]), int(state[1]), int(state[2])


def cmd_simulate(args) -> int:
    model = _load_model(args.config)
    cfg = SimConfig(sample_rate=args.sample_rate, duration=args.duration,
                    seed=args.seed, input_schedule=_parse_steps(args.input_step))
    traj = grid_sim.simulate(model, cfg)
    out = _out_dir(args) / "trajectory.csv"
    grid_sim.save_trajectory_csv(traj, out)
    print(f"wrote {out} ({traj.n_samples} samples, {traj.n_pmus} PMUs)")
    return 0


def cmd_attack(args) -> int:
    if args.config is None:
        raise ConfigError("attack requires --config <scenario file>")
    scenario = attack_mod.load_scenario_config(args.config)
    traj = grid_sim.load_trajectory_csv(args.trajectory)
    spoofed, labels = attack_mod.inject(traj, scenario)
    out = _out_dir(args)
    grid_sim.save_trajectory_csv(spoofed, out / "spoofed.csv")
    attack_mod.save_labels_csv(spoofed.time_tags, labels, out / "labels.csv")
    print(f"wrote {out / 'spoofed.csv'} and {out / 'labels.csv'} "
          f"({len(scenario.profiles)} profiles)")
    return 0


def cmd_dataset(args) -> int:
    model = _load_model(args.config)
    gen = eval_mod.DataGenConfig(
        sample_rate=args.sample_rate,
        attacks=attack_mod.ScenarioGeneratorConfig(n_pmus=model.n_subsystems,
                                                   window=args.window))
    ds = eval_mod.generate_training_matrix(model, gen, args.scenarios, args.seed,
                                           samples_per_scenario=args.samples_per)
    out = _out_dir(args) / "dataset.csv"
    dataset_mod.save_dataset_csv(ds, out)
    print(f"wrote {out} ({ds.n_rows} rows, {ds.n_pmus} PMUs)")
    return 0


def _train_settings(config_path: str | None) -> dict:
    settings = {
        "layer_sizes": mlp.DEFAULT_LAYER_SIZES,
        "max_epochs": 200, "batch_size": 64, "learning_rate": 1.0e-3,
        "early_stop_patience": 20, "loss": "mse", "scale_inputs": False,
        "split_fractions": (0.70, 0.15, 0.15),
    }
    if config_path is not None:
        doc = read_config(config_path, expected_kind="train")
        settings["layer_sizes"] = tuple(
            int(v) for v in doc.floats("layer_sizes", settings["layer_sizes"]))
        settings["max_epochs"] = doc.int_("max_epochs", settings["max_epochs"])
        settings["batch_size"] = doc.int_("batch_size", settings["batch_size"])
        settings["learning_rate"] = doc.float_("learning_rate", settings["learning_rate"])
        settings["early_stop_patience"] = doc.int_("early_stop_patience",
                                                   settings["early_stop_patience"])
        settings["loss"] = doc.str_("loss", settings["loss"])
        settings["scale_inputs"] = bool(doc.int_("scale_inputs", 0))
        settings["split_fractions"] = tuple(
            doc.floats("split_fractions", settings["split_fractions"]))
    return settings


def cmd_train(args) -> int:
    if args.dataset is None:
        raise ConfigError("train requires --dataset <dataset CSV>")
    settings = _train_settings(args.config)
    ds = dataset_mod.load_dataset_csv(args.dataset)
    init_seed, shuffle_seed, split_seed = _derived_seeds(args.seed)
    fr = settings["split_fractions"]
    spec = dataset_mod.SplitSpec(fr[0], fr[1], fr[2], shuffle_seed=split_seed)
    train_ds, val_ds, test_ds = dataset_mod.split(ds, spec)

    net = mlp.init_network(settings["layer_sizes"], seed=init_seed)
    if settings["scale_inputs"]:
        net = mlp.fit_input_scaling(net, train_ds.features)
    cfg = mlp.TrainConfig(max_epochs=settings["max_epochs"],
                          batch_size=settings["batch_size"],
                          learning_rate=settings["learning_rate"],
                          early_stop_patience=settings["early_stop_patience"],
                          seed=shuffle_seed, loss=settings["loss"])
    net, report = mlp.train(net, (train_ds.features, train_ds.labels),
                            (val_ds.features, val_ds.labels), cfg,
                            test_data=(test_ds.features, test_ds.labels))
    alpha = eval_mod.tune_alpha(mlp.forward(net, val_ds.features), val_ds.labels)

    out = _out_dir(args)
    mlp.save_checkpoint(net, out / "checkpoint.txt")
    overall_acc = mlp.accuracy(net, ds.features, ds.labels)
    write_config(out / "train_report.txt", "train-report", [
        ("epochs_run", report.epochs_run),
        ("train_loss", report.train_loss),
        ("validation_loss", report.validation_loss),
        ("test_loss", report.test_loss),
        ("train_accuracy", report.train_accuracy),
        ("validation_accuracy", report.validation_accuracy),
        ("test_accuracy", report.test_accuracy),
        ("train_accuracy_all_outputs", report.train_accuracy_all_outputs),
        ("validation_accuracy_all_outputs", report.validation_accuracy_all_outputs),
        ("test_accuracy_all_outputs", report.test_accuracy_all_outputs),
        ("overall_accuracy", overall_acc),
        ("tuned_alpha", alpha),
        ("seed", args.seed),
    ])
    print(f"wrote {out / 'checkpoint.txt'} "
          f"(epochs={report.epochs_run}, overall accuracy={overall_acc:.4f}%, "
          f"tuned alpha={alpha:g})")
    return 0


def _load_data_any(path: str) -> dataset_mod.LabeledDataset:
    """Accept either a dataset CSV (with labels) or a plain trajectory CSV."""
    first = Path(path).read_text().splitlines()[:1]
    if first and first[0].startswith("# nngsd-dataset"):
        return dataset_mod.load_dataset_csv(path)
    traj = grid_sim.load_trajectory_csv(path)
    zeros = np.zeros_like(traj.measurements, dtype=np.int64)
    ds = dataset_mod.preprocess(traj, zeros)
    prov = dict(ds.provenance)
    prov["labels"] = "none"
    return dataset_mod.LabeledDataset(ds.time_tags, ds.features, ds.labels, prov)


def cmd_detect(args) -> int:
    if args.checkpoint is None or args.data is None:
        raise ConfigError("detect requires --checkpoint and --data")
    net = mlp.load_checkpoint(args.checkpoint)
    ds = _load_data_any(args.data)
    alpha = args.alpha
    if alpha is None and args.config is not None:
        alpha = read_config(args.config, expected_kind="eval").float_("alpha", 0.5)
    frames = run_pipeline(net, ds, NormalizerConfig(alpha if alpha is not None else 0.5))
    out = _out_dir(args)
    save_detection_report(frames, out / "report.csv")
    (out / "alarms.txt").write_text(alarm_summary(frames))
    if ds.provenance.get("labels") != "none":
        per_pmu, overall = eval_mod.detection_percentage(
            frames_verdict_matrix(frames), ds.labels)
        print("per-PMU verdict accuracy: "
              + " ".join(f"{v:.4f}" for v in per_pmu) + f" overall {overall:.4f}")
    print(f"wrote {out / 'report.csv'} and {out / 'alarms.txt'}")
    return 0


def _eval_settings(args) -> dict:
    settings = {
        "condition": "all", "noise_std": 0.1, "window": 10.0, "sample_rate": 50.0,
        "scenarios": 6, "seeds": (101, 102, 103, 104, 105), "alpha": "auto",
        "checkpoint": None, "model": None, "dataset": None,
        "load_steps": eval_mod.DEFAULT_LOAD_STEPS, "svg": False,
    }
    if args.config is not None:
        doc = read_config(args.config, expected_kind="eval")
        settings["condition"] = doc.str_("condition", settings["condition"])
        settings["noise_std"] = doc.float_("noise_std", settings["noise_std"])
        settings["window"] = doc.float_("window", settings["window"])
        settings["sample_rate"] = doc.float_("sample_rate", settings["sample_rate"])
        settings["scenarios"] = doc.int_("scenarios", settings["scenarios"])
        settings["alpha"] = doc.str_("alpha", str(settings["alpha"]))
        if doc.has("seeds"):
            settings["seeds"] = tuple(int(v) for v in doc.floats("seeds"))
        for key in ("checkpoint", "model", "dataset"):
            if doc.has(key):
                settings[key] = doc.str_(key)
        if doc.has("load_step"):
            raw = [" ".join(toks) for toks in doc.all_values("load_step")]
            settings["load_steps"] = _parse_steps(raw)
        settings["svg"] = bool(doc.int_("svg", 0))
    if args.condition is not None:
        settings["condition"] = args.condition
    if args.noise_std is not None:
        settings["noise_std"] = args.noise_std
    if args.scenarios is not None:
        settings["scenarios"] = args.scenarios
    if args.seeds is not None:
        settings["seeds"] = tuple(int(v) for v in args.seeds.split(","))
    if args.alpha is not None:
        settings["alpha"] = args.alpha
    if args.checkpoint is not None:
        settings["checkpoint"] = args.checkpoint
    if args.model is not None:
        settings["model"] = args.model
    if args.dataset is not None:
        settings["dataset"] = args.dataset
    if args.load_step:
        settings["load_steps"] = _parse_steps(args.load_step)
    if args.svg:
        settings["svg"] = True
    return settings


def _resolve_alpha(settings, split_seed_root: int) -> float:
    raw = str(settings["alpha"])
    if raw != "auto":
        return float(raw)
    if settings["dataset"] is None:
        raise ConfigError("--alpha auto needs --dataset to tune on its validation split")
    ds = dataset_mod.load_dataset_csv(settings["dataset"])
    _, _, split_seed = _derived_seeds(split_seed_root)
    _, val_ds, _ = dataset_mod.split(ds, dataset_mod.SplitSpec(shuffle_seed=split_seed))
    net = mlp.load_checkpoint(settings["checkpoint"])
    return eval_mod.tune_alpha(mlp.forward(net, val_ds.features), val_ds.labels)


def cmd_eval(args) -> int:
    settings = _eval_settings(args)
    if settings["checkpoint"] is None:
        raise ConfigError("eval requires a trained checkpoint (--checkpoint)")
    if not Path(settings["checkpoint"]).exists():
        raise ConfigError(f"missing checkpoint {settings['checkpoint']}")
    net = mlp.load_checkpoint(settings["checkpoint"])
    model = _load_model(settings["model"])
    alpha = _resolve_alpha(settings, args.seed)
    conditions = (eval_mod.CONDITIONS if settings["condition"] == "all"
                  else (settings["condition"],))
    for cond in conditions:
        if cond not in eval_mod.CONDITIONS:
            raise ConfigError(f"unknown condition {cond!r}")
    gen = eval_mod.DataGenConfig(
        sample_rate=settings["sample_rate"],
        attacks=attack_mod.ScenarioGeneratorConfig(n_pmus=model.n_subsystems,
                                                   window=settings["window"]))
    base = eval_mod.ExperimentSpec(condition=conditions[0],
                                   noise_std=settings["noise_std"],
                                   load_steps=settings["load_steps"],
                                   n_scenarios=settings["scenarios"], gen=gen)
    out = _out_dir(args)
    results = eval_mod.run_eval_suite(model, net, alpha, conditions,
                                      settings["seeds"], base_spec=base,
                                      out_dir=out, write_svg=settings["svg"])
    for cond in conditions:
        m = results[cond]["median"]
        print(f"{cond}: NN overall {m.nn_overall:.4f}%  "
              f"NNGSD overall {m.nngsd_overall:.4f}%  (alpha={alpha:g})")
    print(f"wrote {out / 'summary.txt'}")
    return 0


def cmd_sweep_alpha(args) -> int:
    if args.checkpoint is None or args.dataset is None:
        raise ConfigError("sweep-alpha requires --checkpoint and --dataset")
    net = mlp.load_checkpoint(args.checkpoint)
    ds = dataset_mod.load_dataset_csv(args.dataset)
    raw = mlp.forward(net, ds.features)
    grid = eval_mod.DEFAULT_ALPHA_GRID
    lines = ["alpha,accuracy"]
    best = (None, -1.0)
    for a in grid:
        acc = 100.0 * float(np.mean((raw >= a).astype(np.int64) == ds.labels))
        lines.append(f"{a:.10g},{acc:.10g}")
        if acc > best[1]:
            best = (float(a), acc)
    out = _out_dir(args) / "alpha_sweep.csv"
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out} (best alpha {best[0]:g} at {best[1]:.4f}%)")
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="nngsd",
        description="PMU grid simulation, spoof-phase attacks, and neural detection")
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def add(name, func, help_text):
        sub = subs.add_parser(name, help=help_text)
        sub.add_argument("--seed", type=int, default=0)
        sub.add_argument("--config", default=None, metavar="FILE")
        sub.add_argument("--out", default=".", metavar="DIR")
        sub.set_defaults(func=func)
        registry[name] = sub
        return sub

    sim = add("simulate", cmd_simulate, "simulate the grid and export a trajectory CSV")
    sim.add_argument("--duration", type=float, default=10.0)
    sim.add_argument("--sample-rate", type=float, default=50.0)
    sim.add_argument("--input-step", action="append", default=[],
                     metavar="SUB,TIME,VALUE")

    atk = add("attack", cmd_attack, "inject a spoof scenario into a trajectory")
    atk.add_argument("--trajectory", required=True, metavar="CSV")

    dst = add("dataset", cmd_dataset, "batch-generate the labeled training matrix")
    dst.add_argument("--scenarios", type=int, default=100)
    dst.add_argument("--samples-per", type=int, default=100)
    dst.add_argument("--sample-rate", type=float, default=50.0)
    dst.add_argument("--window", type=float, default=10.0)

    trn = add("train", cmd_train, "train the detector on a dataset CSV")
    trn.add_argument("--dataset", metavar="CSV")

    det = add("detect", cmd_detect, "run the decision pipeline on new data")
    det.add_argument("--checkpoint", metavar="FILE")
    det.add_argument("--data", metavar="CSV")
    det.add_argument("--alpha", type=float, default=None)

    ev = add("eval", cmd_eval, "reproduce the condition tables on held-out scenarios")
    ev.add_argument("--condition", default=None,
                    choices=eval_mod.CONDITIONS + ("all",))
    ev.add_argument("--checkpoint", metavar="FILE")
    ev.add_argument("--model", metavar="FILE")
    ev.add_argument("--dataset", metavar="CSV")
    ev.add_argument("--alpha", default=None, metavar="FLOAT|auto")
    ev.add_argument("--seeds", default=None, metavar="S1,S2,...")
    ev.add_argument("--scenarios", type=int, default=None)
    ev.add_argument("--noise-std", type=float, default=None)
    ev.add_argument("--load-step", action="append", default=[],
                    metavar="SUB,TIME,VALUE")
    ev.add_argument("--svg", action="store_true")

    swp = add("sweep-alpha", cmd_sweep_alpha, "threshold sensitivity table")
    swp.add_argument("--checkpoint", metavar="FILE")
    swp.add_argument("--dataset", metavar="CSV")

    return parser, registry


def main(argv=None) -> int:
    parser, registry = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        sub = registry.get(args.command)
        if sub is not None:
            print(sub.format_usage(), end="", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SimulationDiverged, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: simulate, decompose, losses, scaling, train, compare, counts.
A JSON config file supplies defaults; flags override it. All outputs land
under the output directory. Exit codes: 0 success, 2 invalid user input,
1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import calibrate, loopchip, losses, mesh, model, montecarlo


@dataclass
class RunConfig:
    """Everything one invocation needs, assembled from file plus flags."""

    model: model.SpinBosonParams = field(default_factory=lambda: model.SpinBosonParams(1.0, 1.0, 1.0))
    chip: loopchip.ChipConfig = field(default_factory=loopchip.ChipConfig)
    noise: mesh.MeshNoise = field(default_factory=mesh.MeshNoise)
    training: calibrate.TrainingConfig = field(default_factory=calibrate.TrainingConfig)
    counting: montecarlo.CountingConfig = field(default_factory=montecarlo.CountingConfig)
    platform: str = "SiN on-chip"
    n_steps: int = 3
    initial_channel: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not 0 <= self.initial_channel < self.model.dim:
            raise ValueError("initial_channel out of range for the model dimension")
        if self.model.dim != self.chip.dim:
            raise ValueError("model dimension and chip dimension disagree")


_SECTIONS = {
    "model": (model.SpinBosonParams, {"lambda": "lam"}),
    "chip": (loopchip.ChipConfig, {}),
    "noise": (mesh.MeshNoise, {}),
    "training": (calibrate.TrainingConfig, {}),
    "counting": (montecarlo.CountingConfig, {}),
}


def config_from_dict(doc: dict) -> RunConfig:
    kwargs = {}
    unknown = set(doc) - set(_SECTIONS) - {"platform", "n_steps", "initial_channel", "output_dir"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for section, (cls, renames) in _SECTIONS.items():
        if section in doc:
            payload = dict(doc[section])
            for wire, attr in renames.items():
                if wire in payload:
                    payload[attr] = payload.pop(wire)
            kwargs[section] = cls(**payload)
    for key in ("platform", "n_steps", "initial_channel", "output_dir"):
        if key in doc:
            kwargs[key] = doc[key]
    return RunConfig(**kwargs)


def config_to_dict(cfg: RunConfig) -> dict:
    doc = {}
    for section, (_, renames) in _SECTIONS.items():
        payload = asdict(getattr(cfg, section))
        for wire, attr in renames.items():
            payload[wire] = payload.pop(attr)
        doc[section] = payload
    doc["platform"] = cfg.platform
    doc["n_steps"] = cfg.n_steps
    doc["initial_channel"] = cfg.initial_channel
    doc["output_dir"] = cfg.output_dir
    return doc


def _load_config(args) -> RunConfig:
    doc = {}
    if args.config is not None:
        doc = json.loads(Path(args.config).read_text())
    cfg = config_from_dict(doc)
    if args.seed is not None:
        cfg = replace(cfg, noise=replace(cfg.noise, seed=args.seed),
                      counting=replace(cfg.counting, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, output_dir=str(args.out))
    overrides = {}
    for name in ("epsilon", "omega_hbar", "lam"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        cfg = replace(cfg, model=replace(cfg.model, **overrides))
    if getattr(args, "n_steps", None) is not None:
        cfg = replace(cfg, n_steps=args.n_steps)
    if getattr(args, "initial_channel", None) is not None:
        cfg = replace(cfg, initial_channel=args.initial_channel)
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_probs_csv(path: Path, probs: np.ndarray) -> None:
    import csv

    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "channel", "prob"])
        for n in range(probs.shape[0]):
            for l in range(probs.shape[1]):
                writer.writerow([n + 1, l, repr(float(probs[n, l]))])


def cmd_simulate(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    theory = model.evolve_exact(cfg.model, cfg.initial_channel, cfg.n_steps)
    _write_probs_csv(out / "theory.csv", theory)

    u = model.step_unitary(model.build_hamiltonian(cfg.model), cfg.model.dt)
    record = loopchip.run_loop(cfg.chip, u, cfg.initial_channel, cfg.n_steps)
    chip = loopchip.conditional_probabilities(record)
    _write_probs_csv(out / "chip.csv", chip)

    hists = montecarlo.sample_run(record, cfg.counting, cfg.chip.loop_delay_ps)
    windows = montecarlo.default_windows(cfg.n_steps, cfg.counting, cfg.chip.loop_delay_ps)
    est = montecarlo.estimate_probabilities(hists, windows, cfg.counting)
    with (out / "mc.csv").open("w", newline="") as fh:
        montecarlo.estimates_to_csv(est, fh)
    print(f"simulate: wrote theory.csv, chip.csv, mc.csv to {out}")
    return 0


def _read_unitary(path: Path) -> np.ndarray:
    doc = json.loads(path.read_text())
    if not isinstance(doc, dict) or "re" not in doc or "im" not in doc:
        raise ValueError("unitary file must be a JSON object with 're' and 'im' matrices")
    return np.asarray(doc["re"], dtype=float) + 1j * np.asarray(doc["im"], dtype=float)


def cmd_decompose(cfg: RunConfig, unitary_path) -> int:
    out = _outdir(cfg)
    if unitary_path is not None:
        u = _read_unitary(Path(unitary_path))
    else:
        u = model.step_unitary(model.build_hamiltonian(cfg.model), cfg.model.dt)
    plan = mesh.clements_decompose(u)
    (out / "plan.json").write_text(mesh.plan_to_json(plan))
    err = float(np.max(np.abs(mesh.mesh_forward(plan) - u)))
    report = {"dim": plan.dim, "cells": len(plan.cells), "max_roundtrip_error": err}
    (out / "decompose_report.json").write_text(json.dumps(report, indent=2))
    print(f"decompose: {plan.dim} modes, {len(plan.cells)} cells, "
          f"round-trip error {err:.3e}")
    if err > 1e-8:
        raise RuntimeError(f"plan does not reproduce the unitary: error {err:.3e}")
    return 0


def cmd_losses(cfg: RunConfig, platform_names, max_loops: int) -> int:
    out = _outdir(cfg)
    table = {p.name: p for p in losses.load_platforms()}
    if platform_names:
        missing = [n for n in platform_names if n not in table]
        if missing:
            raise ValueError(f"unknown platform(s): {missing}; have {sorted(table)}")
        chosen = [table[n] for n in platform_names]
    else:
        chosen = list(table.values())
    ratios = losses.optimal_splitters(max_loops) if max_loops >= 2 else (0.5, 0.5)
    budgets = losses.platform_comparison(chosen, cfg.chip, ratios, max_loops)
    with (out / "losses.csv").open("w", newline="") as fh:
        losses.comparison_to_csv(budgets, fh)
    for n in range(2, max_loops + 1):
        r_loop, r_end = losses.optimal_splitters(n)
        print(f"optimal splitters for n={n}: r_loop={r_loop:.6f}, r_end={r_end:.6f}")
    print(f"losses: wrote losses.csv to {out}")
    return 0


def cmd_scaling(cfg: RunConfig, modes, cell_length_cm: float) -> int:
    import csv

    out = _outdir(cfg)
    table = {p.name: p for p in losses.load_platforms()}
    if cfg.platform not in table:
        raise ValueError(f"unknown platform: {cfg.platform!r}; have {sorted(table)}")
    platform = table[cfg.platform]
    with (out / "scaling.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["modes", "loss_db"])
        for m in modes:
            writer.writerow([m, repr(losses.mode_scaling_loss(m, platform, cell_length_cm))])
    print(f"scaling: wrote scaling.csv to {out}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    u = model.step_unitary(model.build_hamiltonian(cfg.model), cfg.model.dt)
    plan = mesh.clements_decompose(u)
    target = calibrate.flatten_step_matrices(calibrate.theory_step_matrices(u, cfg.n_steps))
    result = calibrate.train(plan, cfg.noise, target, cfg.training,
                             replace(cfg.chip, lossless=True))
    (out / "trained_plan.json").write_text(mesh.plan_to_json(result.plan))
    with (out / "trace.csv").open("w", newline="") as fh:
        calibrate.trace_to_csv(result.trace, fh)
    status = "converged" if result.converged else "max_iters reached"
    print(f"train: initial loss {result.trace[0]:.6e}, final loss {result.trace[-1]:.6e}, "
          f"{len(result.trace) - 1} iterations ({status})")
    return 0


def cmd_compare(cfg: RunConfig, table_path, seeds: int) -> int:
    out = _outdir(cfg)
    table = calibrate.load_param_table(table_path)
    comparison = calibrate.compare_methods(table, cfg.noise, cfg.training,
                                           n_steps=cfg.n_steps, seeds=seeds,
                                           config=replace(cfg.chip, lossless=True))
    with (out / "errors.csv").open("w", newline="") as fh:
        calibrate.reports_to_csv(comparison, fh)
    wins, ties, lost = calibrate.win_stats(comparison)
    total = wins + ties + lost
    dec_all = [e for r in comparison.decomposition for e in r.per_step]
    tr_all = [e for r in comparison.trained for e in r.per_step]
    summary = {
        "pairs": total,
        "wins": wins,
        "ties": ties,
        "losses": lost,
        "median_error_decomposition": float(np.median(dec_all)),
        "median_error_trained": float(np.median(tr_all)),
        "non_converged_rows": list(comparison.non_converged),
    }
    if total == ties:
        summary["win_rate"] = None
        print("compare: win rate undefined (all pairs tie)")
    else:
        summary["win_rate"] = (wins + ties) / total
        print(f"compare: trained wins or ties {wins + ties}/{total} "
              f"({100.0 * (wins + ties) / total:.1f}%)")
    if comparison.non_converged:
        print(f"compare: rows not converged: {sorted(set(comparison.non_converged))}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"compare: wrote errors.csv, summary.json to {out}")
    return 0


def cmd_counts(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    u = model.step_unitary(model.build_hamiltonian(cfg.model), cfg.model.dt)
    record = loopchip.run_loop(cfg.chip, u, cfg.initial_channel, cfg.n_steps)
    hists = montecarlo.sample_run(record, cfg.counting, cfg.chip.loop_delay_ps)
    with (out / "histograms.csv").open("w", newline="") as fh:
        montecarlo.histograms_to_csv(hists, fh)
    windows = montecarlo.default_windows(cfg.n_steps, cfg.counting, cfg.chip.loop_delay_ps)
    est = montecarlo.estimate_probabilities(hists, windows, cfg.counting)
    with (out / "estimates.csv").open("w", newline="") as fh:
        montecarlo.estimates_to_csv(est, fh)
    ok, margin = montecarlo.peak_separation_check(hists, cfg.chip.loop_delay_ps,
                                                  cfg.counting.jitter_ps)
    print(f"counts: peak separation {'ok' if ok else 'MARGINAL'} (margin {margin:.1f} ps)")
    print(f"counts: wrote histograms.csv, estimates.csv to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopsim",
        description="Simulate and calibrate a recirculating-loop photonic processor.",
    )
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, help="override noise and counting seeds")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective config as JSON and exit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="exact evolution, chip distributions, counting run")
    for p in (p_sim,):
        p.add_argument("--epsilon", type=float)
        p.add_argument("--omega-hbar", dest="omega_hbar", type=float)
        p.add_argument("--lam", type=float)
    p_sim.add_argument("--n-steps", dest="n_steps", type=int)
    p_sim.add_argument("--initial-channel", dest="initial_channel", type=int)

    p_dec = sub.add_parser("decompose", help="compile a unitary into a mesh plan")
    p_dec.add_argument("--unitary", type=Path,
                       help="JSON file with 're' and 'im' matrices; default: model propagator")

    p_loss = sub.add_parser("losses", help="loss budgets across platforms")
    p_loss.add_argument("--platforms", nargs="*", default=None,
                        help="platform names (default: all bundled)")
    p_loss.add_argument("--max-loops", dest="max_loops", type=int, default=3)

    p_scale = sub.add_parser("scaling", help="single-pass loss vs mode count")
    p_scale.add_argument("--modes", type=int, nargs="+", default=[2, 4, 6, 8])
    p_scale.add_argument("--cell-length", dest="cell_length", type=float, default=0.5)

    p_train = sub.add_parser("train", help="train mesh phases against the model target")
    p_train.add_argument("--n-steps", dest="n_steps", type=int)

    p_cmp = sub.add_parser("compare", help="decomposition vs trained over the benchmark table")
    p_cmp.add_argument("--table", type=Path, help="parameter table CSV (default: bundled)")
    p_cmp.add_argument("--seeds", type=int, default=1,
                       help="noise realizations per parameter row")

    p_counts = sub.add_parser("counts", help="sample a counting run and recover probabilities")
    p_counts.add_argument("--n-steps", dest="n_steps", type=int)
    p_counts.add_argument("--initial-channel", dest="initial_channel", type=int)

    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _load_config(args)
    if args.dump_config:
        print(json.dumps(config_to_dict(cfg), indent=2))
        return 0
    if args.command == "simulate":
        return cmd_simulate(cfg)
    if args.command == "decompose":
        return cmd_decompose(cfg, args.unitary)
    if args.command == "losses":
        return cmd_losses(cfg, args.platforms, args.max_loops)
    if args.command == "scaling":
        return cmd_scaling(cfg, args.modes, args.cell_length)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "compare":
        return cmd_compare(cfg, args.table, args.seeds)
    if args.command == "counts":
        return cmd_counts(cfg)
    raise RuntimeError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

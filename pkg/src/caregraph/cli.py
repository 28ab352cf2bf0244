"""Command-line interface: stage-by-stage execution with on-disk artifacts.

Each subcommand loads its upstream artifacts from the output directory, runs
one pipeline stage, writes the stage outputs plus a manifest, and exits
nonzero on failure. `run-all` chains every stage in order.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd
import yaml

from . import artifacts, evalkit, pipeline
from .artifacts import StageTimer, write_manifest
from .simgen import GROUND_TRUTH_EDGES, sample_cohort


def load_config(args: argparse.Namespace) -> pipeline.RunConfig:
    if args.config:
        with open(args.config) as fh:
            config = pipeline.RunConfig.from_dict(yaml.safe_load(fh) or {})
    else:
        config = pipeline.RunConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    return config.seeded()


def _state(outdir: Path) -> pipeline.StateBundle:
    return pipeline.build_state(artifacts.load_cohort(outdir))


def cmd_simulate(args, config) -> None:
    outdir = Path(args.outdir)
    with StageTimer() as timer:
        bundle = sample_cohort(config.sim)
        artifacts.save_cohort(bundle, outdir)
    write_manifest(outdir, "simulate", config.to_dict(), [],
                   [artifacts.TRAJECTORIES, artifacts.PROFILES,
                    artifacts.GROUND_TRUTH], timer.elapsed)


def cmd_fit_population(args, config) -> None:
    outdir = Path(args.outdir)
    with StageTimer() as timer:
        state = _state(outdir)
        model, history, w0 = pipeline.fit_population(state, config.train)
        artifacts.save_population(model, history, w0, outdir)
    write_manifest(outdir, "fit-population", config.to_dict(),
                   [artifacts.TRAJECTORIES],
                   [artifacts.POPULATION_MODEL, artifacts.POPULATION_EDGES,
                    artifacts.LOSS_HISTORY], timer.elapsed)


def cmd_adapt(args, config) -> None:
    outdir = Path(args.outdir)
    with StageTimer() as timer:
        state = _state(outdir)
        _, w0 = artifacts.load_population(outdir)
        pgraphs = pipeline.adapt_cohort(state, w0, config.adapt,
                                        naive_threshold=config.naive_threshold,
                                        workers=config.workers)
        artifacts.save_patient_graphs(pgraphs, outdir)
    write_manifest(outdir, "adapt", config.to_dict(),
                   [artifacts.TRAJECTORIES, artifacts.POPULATION_EDGES],
                   [artifacts.PATIENT_GRAPH_DIR, artifacts.PATIENT_GRAPH_SUMMARY],
                   timer.elapsed)


def cmd_evolve(args, config) -> None:
    outdir = Path(args.outdir)
    with StageTimer() as timer:
        state = _state(outdir)
        pgraphs = artifacts.load_patient_graphs(outdir)
        sequences = pipeline.evolve_cohort(pgraphs, state, config.dyn,
                                           workers=config.workers)
        artifacts.save_sequences(sequences, outdir)
    write_manifest(outdir, "evolve", config.to_dict(),
                   [artifacts.PATIENT_GRAPH_DIR],
                   [artifacts.DYNAMIC_DIR, artifacts.DYNAMIC_INTERNAL_DIR],
                   timer.elapsed)


def cmd_latent(args, config) -> None:
    outdir = Path(args.outdir)
    with StageTimer() as timer:
        state = _state(outdir)
        sequences = artifacts.load_sequences(outdir)
        table, meta = pipeline.build_latent_table(state.raw, sequences,
                                                  config.latent)
        artifacts.save_latent(table, meta, outdir)
    write_manifest(outdir, "latent", config.to_dict(),
                   [artifacts.DYNAMIC_DIR],
                   [artifacts.LATENT_STATES, artifacts.CLUSTER_META],
                   timer.elapsed)


def cmd_counterfactual(args, config) -> None:
    outdir = Path(args.outdir)
    with StageTimer() as timer:
        state = _state(outdir)
        model, _ = artifacts.load_population(outdir)
        sequences = artifacts.load_sequences(outdir)
        latent_table, _ = artifacts.load_latent(outdir)
        estimates = pipeline.counterfactual_stage(state, model, sequences,
                                                  latent_table, config.intervene)
        artifacts._write_csv(estimates, outdir / artifacts.ESTIMATES)
    write_manifest(outdir, "counterfactual", config.to_dict(),
                   [artifacts.DYNAMIC_INTERNAL_DIR, artifacts.POPULATION_MODEL,
                    artifacts.LATENT_STATES],
                   [artifacts.ESTIMATES], timer.elapsed)


def cmd_recommend(args, config) -> None:
    outdir = Path(args.outdir)
    artifacts.require(outdir, [artifacts.ESTIMATES], "counterfactual")
    with StageTimer() as timer:
        sequences = artifacts.load_sequences(outdir)
        latent_table, _ = artifacts.load_latent(outdir)
        estimates = pd.read_csv(outdir / artifacts.ESTIMATES)
        recs = pipeline.recommend_stage(estimates, sequences, latent_table,
                                        config.intervene)
        artifacts._write_csv(recs, outdir / artifacts.RECOMMENDATIONS)
    write_manifest(outdir, "recommend", config.to_dict(),
                   [artifacts.ESTIMATES, artifacts.LATENT_STATES],
                   [artifacts.RECOMMENDATIONS], timer.elapsed)


def cmd_evaluate(args, config) -> None:
    outdir = Path(args.outdir)
    artifacts.require(outdir, [artifacts.ESTIMATES], "counterfactual")
    artifacts.require(outdir, [artifacts.RECOMMENDATIONS], "recommend")
    with StageTimer() as timer:
        bundle = artifacts.load_cohort(outdir)
        state = pipeline.build_state(bundle)
        _, w0 = artifacts.load_population(outdir)
        pgraphs = artifacts.load_patient_graphs(outdir)
        sequences = artifacts.load_sequences(outdir)
        latent_table, _ = artifacts.load_latent(outdir)
        estimates = pd.read_csv(outdir / artifacts.ESTIMATES)
        recs = pd.read_csv(outdir / artifacts.RECOMMENDATIONS)
        metrics = pipeline.evaluate_stage(bundle, state, w0, pgraphs, sequences,
                                          latent_table, estimates, recs, config)
        artifacts.save_metrics(metrics, outdir)
    write_manifest(outdir, "evaluate", config.to_dict(),
                   [artifacts.TRAJECTORIES, artifacts.POPULATION_EDGES,
                    artifacts.PATIENT_GRAPH_DIR, artifacts.DYNAMIC_INTERNAL_DIR,
                    artifacts.ESTIMATES, artifacts.RECOMMENDATIONS],
                   [artifacts.METRICS_JSON, artifacts.METRICS_TXT],
                   timer.elapsed)


def cmd_ablate(args, config) -> None:
    outdir = Path(args.outdir)
    with StageTimer() as timer:
        bundle = artifacts.load_cohort(outdir)
        table = evalkit.run_ablations(bundle, config)
        artifacts._write_csv(table, outdir / artifacts.ABLATIONS)
    write_manifest(outdir, "ablate", config.to_dict(),
                   [artifacts.TRAJECTORIES], [artifacts.ABLATIONS],
                   timer.elapsed)


def cmd_audit(args, config) -> None:
    import json

    outdir = Path(args.outdir)
    artifacts.require(outdir, [artifacts.ESTIMATES], "counterfactual")
    artifacts.require(outdir, [artifacts.RECOMMENDATIONS], "recommend")
    with StageTimer() as timer:
        w0 = artifacts.load_population(outdir)[1]
        pgraphs = artifacts.load_patient_graphs(outdir)
        sequences = artifacts.load_sequences(outdir)
        latent_table, _ = artifacts.load_latent(outdir)
        counts = {
            "population_edges": len(w0),
            "patient_graphs": len(pgraphs),
            "patients_with_dynamic_sequences": len(sequences),
            "latent_windows": len(latent_table),
            "counterfactual_rows": len(pd.read_csv(outdir / artifacts.ESTIMATES)),
            "recommendation_rows": len(pd.read_csv(outdir / artifacts.RECOMMENDATIONS)),
        }
        (outdir / artifacts.AUDIT).write_text(json.dumps(counts, indent=2))
        for name, count in counts.items():
            print(f"{name}: {count}")
    write_manifest(outdir, "audit", config.to_dict(), [],
                   [artifacts.AUDIT], timer.elapsed)


def cmd_run_all(args, config) -> None:
    for cmd in (cmd_simulate, cmd_fit_population, cmd_adapt, cmd_evolve,
                cmd_latent, cmd_counterfactual, cmd_recommend, cmd_evaluate,
                cmd_audit):
        cmd(args, config)


def cmd_report(args, config) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(args.outdir)
    metrics = artifacts.load_metrics(outdir)
    sequences = artifacts.load_sequences(outdir)
    rdir = outdir / "report"
    rdir.mkdir(parents=True, exist_ok=True)

    with StageTimer() as timer:
        lines = ["# Pipeline report", ""]
        for section in sorted(metrics):
            lines.append(f"## {section}")
            lines.append("")
            lines.append("| metric | value |")
            lines.append("|---|---|")
            for name, value in sorted(metrics[section].items()):
                lines.append(f"| {name} | {value:.4f} |")
            lines.append("")
        (rdir / "metrics.md").write_text("\n".join(lines))

        # mean internal weight trajectory per true edge across the cohort
        fig, ax = plt.subplots(figsize=(8, 5))
        for edge in GROUND_TRUTH_EDGES:
            trajs = [seq.weight_history[edge] for seq in sequences.values()
                     if edge in seq.weight_history]
            if not trajs:
                continue
            mean_traj = sum(trajs) / len(trajs)
            ax.plot(mean_traj, label=f"{edge[0]}->{edge[1]}")
        ax.set_xlabel("window")
        ax.set_ylabel("mean edge weight")
        ax.set_title("Dynamic edge weights (cohort mean)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(rdir / "edge_trajectories.png", dpi=120)
        plt.close(fig)

        loss_path = outdir / artifacts.LOSS_HISTORY
        if loss_path.exists():
            history = pd.read_csv(loss_path)
            fig, ax = plt.subplots(figsize=(7, 4))
            ax.plot(history["epoch"], history["total"])
            ax.set_xlabel("epoch")
            ax.set_ylabel("total loss")
            ax.set_title("Population graph training loss")
            fig.tight_layout()
            fig.savefig(rdir / "loss.png", dpi=120)
            plt.close(fig)
    write_manifest(outdir, "report", config.to_dict(),
                   [artifacts.METRICS_JSON], ["report"], timer.elapsed)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-population": cmd_fit_population,
    "adapt": cmd_adapt,
    "evolve": cmd_evolve,
    "latent": cmd_latent,
    "counterfactual": cmd_counterfactual,
    "recommend": cmd_recommend,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "audit": cmd_audit,
    "run-all": cmd_run_all,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caregraph",
        description="Personalized dynamic health-graph pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--outdir", required=True, help="artifact directory")
        p.add_argument("--config", default=None, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="global seed override")
        p.add_argument("--workers", type=int, default=None,
                       help="patient-level worker count")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        COMMANDS[args.command](args, config)
    except (FileNotFoundError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from occlusion_ae.data import (
    DatasetSplits,
    ShapeSpec,
    generate_dataset,
    generate_synthetic,
    io_pointcloud,
    load_checkpoint,
    load_dataset,
    write_dataset,
)
from occlusion_ae.framework.errors import ConfigError, OcclusionAEError
from occlusion_ae.framework.logger import ROOT_LOGGER, setup_logger
from occlusion_ae.framework.runner import StageRunner, print_summary
from occlusion_ae.geometry import chamfer_distance, fps, knn_group_centralize, normalize, occlude
from occlusion_ae.model import ModelWeights, forward_sample
from occlusion_ae.pipeline import (
    AblationRow,
    ablate as run_ablation,
    best_row,
    epoch_means,
    pretrain as run_pretrain,
    probe_datasets,
    write_probe_report,
)
from occlusion_ae.settings import RunConfig, load_run_config, write_resolved

app = typer.Typer(no_args_is_help=True, help="Occlusion auto-encoder for point clouds")
console = Console()
# typer may run on a bundled click; usage errors are the base of its BadParameter
UsageError = next(c for c in typer.BadParameter.__mro__ if c.__name__ == "UsageError")

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="key = value run file")
PROFILE_OPTION = typer.Option(None, "--profile", help="Config profile overlay (full, toy)")
SEED_OPTION = typer.Option(None, "--seed", help="Global seed (train.seed)")
SET_OPTION = typer.Option(None, "--set", help="Override a value: section.key=value (repeatable)")
VERBOSE_OPTION = typer.Option(False, "--verbose", "-v", help="Verbose output")


def resolve_config(out: Path, profile: Optional[str], config: Optional[Path], set_values: Optional[List[str]],
                   flags: Dict[str, Any], verbose: bool = False) -> RunConfig:
    """Load every config layer, apply flag overrides, echo resolved.cfg and set up logging"""
    overrides = list(set_values or [])
    overrides += [f"{key}={value}" for key, value in flags.items() if value is not None]
    run_config = load_run_config(profile=profile, config_file=config, overrides=overrides)
    write_resolved(run_config, out)
    level = "DEBUG" if verbose else run_config.logging.level
    log_file = out / run_config.logging.file if run_config.logging.file else None
    setup_logger(ROOT_LOGGER, log_file=log_file, level=level)
    return run_config


def load_splits(run_config: RunConfig, data: Optional[Path]) -> DatasetSplits:
    if data is not None:
        return load_dataset(data)
    return generate_dataset(run_config.data, run_config.model.n_points, seed=run_config.train.seed)


def load_weights(run_config: RunConfig, checkpoint: Optional[Path]) -> ModelWeights:
    template = ModelWeights.initialize(run_config.model, seed=run_config.train.seed)
    if checkpoint is None:
        return template
    return load_checkpoint(checkpoint, template=template).weights.astype(run_config.model.np_dtype)


def finish(runner: StageRunner, title: str, verbose: bool) -> None:
    """Print the stage summary and exit with the code of the first failure"""
    print_summary(runner.results, title, verbose)
    if runner.failed:
        raise typer.Exit(code=exit_code_for(runner.first_exception))


def exit_code_for(exc: Optional[BaseException]) -> int:
    if isinstance(exc, OcclusionAEError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 2
    if isinstance(exc, (ArithmeticError, FloatingPointError)):
        return 3
    return 1


@app.command("gen-data")
def gen_data(
        out: Path = typer.Option(Path("runs/data"), "--out", "-o", help="Output directory"),
        config: Optional[Path] = CONFIG_OPTION,
        profile: Optional[str] = PROFILE_OPTION,
        seed: Optional[int] = SEED_OPTION,
        set_values: Optional[List[str]] = SET_OPTION,
        verbose: bool = VERBOSE_OPTION,
):
    """Generate the synthetic benchmark: cloud files plus manifest.yaml"""
    run_config = resolve_config(out, profile, config, set_values, {"train.seed": seed}, verbose)
    runner = StageRunner(verbose=verbose)

    def generate(ctx):
        ctx["splits"] = generate_dataset(run_config.data, run_config.model.n_points, seed=run_config.train.seed)
        manifest = ctx["splits"].manifest
        return f"{len(manifest.entries)} clouds", {"classes": manifest.num_classes}

    def write(ctx):
        path = write_dataset(ctx["splits"], out, run_config.data.cloud_format)
        return f"Manifest written to {path}"

    runner.add_stage("Generate", generate).add_stage("Write", write)
    runner.run()
    finish(runner, "gen-data", verbose)


@app.command()
def pretrain(
        out: Path = typer.Option(Path("runs/pretrain"), "--out", "-o", help="Run directory"),
        data: Optional[Path] = typer.Option(None, "--data", help="manifest.yaml from gen-data (default: generate)"),
        epochs: Optional[int] = typer.Option(None, "--epochs", help="Override train.epochs"),
        ratio: Optional[float] = typer.Option(None, "--ratio", help="Override train.ratio"),
        val: bool = typer.Option(False, "--val/--no-val", help="Record a per-epoch loss on the test split"),
        config: Optional[Path] = CONFIG_OPTION,
        profile: Optional[str] = PROFILE_OPTION,
        seed: Optional[int] = SEED_OPTION,
        set_values: Optional[List[str]] = SET_OPTION,
        verbose: bool = VERBOSE_OPTION,
):
    """Self-supervised pretraining; writes checkpoints/ and metrics.csv"""
    flags = {"train.seed": seed, "train.epochs": epochs, "train.ratio": ratio}
    run_config = resolve_config(out, profile, config, set_values, flags, verbose)
    runner = StageRunner(verbose=verbose)

    def load(ctx):
        ctx["splits"] = load_splits(run_config, data)
        return f"{len(ctx['splits'].train)} training clouds"

    def train(ctx):
        splits = ctx["splits"]
        result = run_pretrain(splits.train, run_config.train, out / "checkpoints", run_config.model,
                              val_dataset=splits.test if val else None, metrics_path=out / "metrics.csv")
        means = epoch_means(result.records)
        metrics = {"steps": result.steps}
        if means:
            metrics["first_epoch_loss"] = means[min(means)]
            metrics["last_epoch_loss"] = means[max(means)]
        return f"Checkpoints in {out / 'checkpoints'}", metrics

    runner.add_stage("Load data", load).add_stage("Pretrain", train)
    runner.run()
    finish(runner, "pretrain", verbose)


@app.command()
def reconstruct(
        out: Path = typer.Option(Path("runs/reconstruct"), "--out", "-o", help="Output directory"),
        cloud: Optional[Path] = typer.Option(None, "--cloud", help="Input cloud (.xyz or .bin)"),
        category: str = typer.Option("sphere", "--category", help="Synthetic shape used when --cloud is absent"),
        checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Checkpoint (.oae)"),
        ratio: Optional[float] = typer.Option(None, "--ratio", help="Occlusion ratio (default train.ratio)"),
        strategy: Optional[str] = typer.Option(None, "--strategy", help="random or block"),
        config: Optional[Path] = CONFIG_OPTION,
        profile: Optional[str] = PROFILE_OPTION,
        seed: Optional[int] = SEED_OPTION,
        set_values: Optional[List[str]] = SET_OPTION,
        verbose: bool = VERBOSE_OPTION,
):
    """Occlude one cloud and export input/visible/predicted/target_occluded .xyz files"""
    flags = {"train.seed": seed, "train.ratio": ratio, "train.strategy": strategy}
    run_config = resolve_config(out, profile, config, set_values, flags, verbose)
    model_config, train_config = run_config.model, run_config.train
    if train_config.ratio <= 0.0:
        raise ConfigError("reconstruct needs --ratio > 0")
    runner = StageRunner(verbose=verbose)

    def load(ctx):
        if cloud is not None:
            ctx["cloud"] = io_pointcloud(cloud, "load")
        else:
            spec = ShapeSpec(category, n_points=model_config.n_points, jitter=run_config.data.jitter)
            ctx["cloud"] = generate_synthetic(spec, seed=train_config.seed)
        ctx["weights"] = load_weights(run_config, checkpoint)
        source = "initialized weights" if checkpoint is None else str(checkpoint)
        return f"{len(ctx['cloud'])} points, {source}"

    def predict(ctx):
        points = normalize(ctx["cloud"])
        patchset = knn_group_centralize(points, fps(points, model_config.groups, start=0),
                                        model_config.patch_size, model_config.centralize)
        mask = occlude(model_config.groups, train_config.ratio, train_config.strategy,
                       seeds=patchset.seeds, rng_seed=train_config.seed)
        predicted = forward_sample(patchset, mask, ctx["weights"], model_config).predicted.values
        ctx["outputs"] = {
            "input": points,
            "visible": patchset.absolute(mask.visible).reshape(-1, 3),
            "predicted": predicted,
            "target_occluded": patchset.absolute(mask.occluded).reshape(-1, 3),
        }
        cd = chamfer_distance(predicted.astype(np.float64), ctx["outputs"]["target_occluded"]).item()
        return f"{mask.num_occluded} of {mask.groups} patches occluded", {"chamfer": cd}

    def write(ctx):
        for name, points in ctx["outputs"].items():
            io_pointcloud(out / f"{name}.xyz", "save", cloud=points)
        counts = {name: len(points) for name, points in ctx["outputs"].items()}
        return f"Wrote {', '.join(f'{n}.xyz' for n in counts)}", counts

    runner.add_stage("Load", load).add_stage("Reconstruct", predict).add_stage("Write", write)
    runner.run()
    finish(runner, "reconstruct", verbose)


@app.command()
def probe(
        out: Path = typer.Option(Path("runs/probe"), "--out", "-o", help="Output directory"),
        checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Checkpoint (default: initialized)"),
        data: Optional[Path] = typer.Option(None, "--data", help="manifest.yaml from gen-data (default: generate)"),
        config: Optional[Path] = CONFIG_OPTION,
        profile: Optional[str] = PROFILE_OPTION,
        seed: Optional[int] = SEED_OPTION,
        set_values: Optional[List[str]] = SET_OPTION,
        verbose: bool = VERBOSE_OPTION,
):
    """Linear probe on frozen global features; writes probe.csv and probe.txt"""
    run_config = resolve_config(out, profile, config, set_values, {"train.seed": seed}, verbose)
    runner = StageRunner(verbose=verbose)

    def load(ctx):
        ctx["splits"] = load_splits(run_config, data)
        ctx["weights"] = load_weights(run_config, checkpoint)
        return f"{len(ctx['splits'].train)} train / {len(ctx['splits'].test)} test clouds"

    def evaluate(ctx):
        splits = ctx["splits"]
        report = probe_datasets(splits.train.clouds, splits.train.labels, splits.test.clouds, splits.test.labels,
                                ctx["weights"], run_config.model, run_config.probe, splits.train.classes,
                                run_config.train.workers)
        ctx["report"] = report
        write_probe_report(report, out / "probe.csv")
        return "Report written", {"train_accuracy": report.train_accuracy, "test_accuracy": report.test_accuracy}

    runner.add_stage("Load", load).add_stage("Probe", evaluate)
    runner.run()
    if "report" in runner.context:
        print_probe_report(runner.context["report"], out / "probe.txt")
    finish(runner, "probe", verbose)


def print_probe_report(report, text_path: Path) -> None:
    table = Table(title="Linear probe", show_header=True, header_style="bold blue")
    table.add_column("Class", style="cyan")
    table.add_column("Test accuracy", justify="right")
    table.add_column("Confusion row", style="dim")
    for i, (name, acc) in enumerate(report.per_class_accuracy().items()):
        table.add_row(name, f"{acc:.3f}", " ".join(str(int(c)) for c in report.confusion[i]))
    console.print(table)
    console.print(f"Train accuracy: [bold]{report.train_accuracy:.4f}[/]  "
                  f"Test accuracy: [bold]{report.test_accuracy:.4f}[/]")
    lines = [f"train_accuracy {report.train_accuracy!r}", f"test_accuracy {report.test_accuracy!r}",
             f"iterations {report.iterations}"]
    lines += [f"confusion {name} " + " ".join(str(int(c)) for c in report.confusion[i])
              for i, name in enumerate(report.classes)]
    text_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@app.command()
def ablate(
        axis: str = typer.Option(..., "--axis", help="ratio, strategy, loss, groups, patch_size or centralize"),
        values: str = typer.Option(..., "--values", help="Comma-separated values, e.g. 0,0.5,0.75"),
        out: Path = typer.Option(Path("runs/ablate"), "--out", "-o", help="Output directory"),
        data: Optional[Path] = typer.Option(None, "--data", help="manifest.yaml from gen-data (default: generate)"),
        epochs: Optional[int] = typer.Option(None, "--epochs", help="Override train.epochs"),
        config: Optional[Path] = CONFIG_OPTION,
        profile: Optional[str] = PROFILE_OPTION,
        seed: Optional[int] = SEED_OPTION,
        set_values: Optional[List[str]] = SET_OPTION,
        verbose: bool = VERBOSE_OPTION,
):
    """Pretrain + probe once per value of one axis; writes ablation_<axis>.csv"""
    flags = {"train.seed": seed, "train.epochs": epochs}
    run_config = resolve_config(out, profile, config, set_values, flags, verbose)
    value_list = [v.strip() for v in values.split(",") if v.strip()]
    runner = StageRunner(verbose=verbose)

    def load(ctx):
        ctx["splits"] = load_splits(run_config, data)
        return f"{len(ctx['splits'].train)} training clouds"

    def sweep(ctx):
        rows = run_ablation(run_config.model, run_config.train, axis, value_list, ctx["splits"], out,
                            run_config.probe)
        ctx["rows"] = rows
        best = best_row(rows)
        return f"{out / f'ablation_{axis}.csv'}", {"rows": len(rows), "best": best.value}

    runner.add_stage("Load data", load).add_stage("Ablate", sweep)
    runner.run()
    if "rows" in runner.context:
        print_ablation(runner.context["rows"])
    finish(runner, "ablate", verbose)


def print_ablation(rows: Sequence[AblationRow]) -> None:
    table = Table(title="Ablation", show_header=True, header_style="bold blue")
    for column in ("Axis", "Value", "Trained", "Final loss", "Train acc", "Test acc", "Note"):
        table.add_column(column)
    for row in rows:
        table.add_row(row.axis, str(row.value), "yes" if row.trained else "no", f"{row.final_loss:.5f}",
                      f"{row.train_accuracy:.3f}", f"{row.test_accuracy:.3f}", row.note)
    console.print(table)


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command line; returns the process exit code"""
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        result = app(args=args, prog_name="oae", standalone_mode=False)
    except UsageError as e:
        console.print(f"[red]Usage error:[/] {e.format_message()}")
        return 1
    except typer.Abort:
        return 1
    except OcclusionAEError as e:
        console.print(f"[red]{type(e).__name__}:[/] {e}")
        return e.exit_code
    except OSError as e:
        console.print(f"[red]I/O error:[/] {e}")
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(dispatch())

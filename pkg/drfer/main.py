#!/usr/bin/env python3
"""drfer - disentangled 3D facial expression recognition CLI.

Command-line interface for generating and preparing face point-cloud datasets,
training the three-stage model, and benchmarking it.
"""

import sys
from pathlib import Path

import click

from drfer import __version__
from drfer.config_schema import load_and_validate_config
from drfer.service import PipelineService, TrainRequest, TrainStage
from drfer.utils import setup_logger
from drfer.utils.runtime import configure_threads

DEFAULT_LOG_NAME = "drfer.jsonl"


def _ensure_env_loaded():
    """Lazily load environment variables when needed."""
    from dotenv import load_dotenv
    load_dotenv()


def _fail(e: Exception, debug: bool):
    click.echo(f"\n❌ Error: {str(e)}\n", err=True)
    if debug:
        raise
    sys.exit(1)


def _service(
    command: str,
    config_path: str,
    out: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
    json_logs: bool,
    debug: bool,
) -> PipelineService:
    """Load config, configure logging and threads, and build the service."""
    _ensure_env_loaded()
    cfg = load_and_validate_config(config_path, overrides, seed)
    out_dir = Path(out or Path("runs") / command)

    log_config = cfg.logging
    setup_logger(
        "drfer",
        log_file=log_config.log_file or str(out_dir / "logs" / DEFAULT_LOG_NAME),
        level="DEBUG" if debug else log_config.level,
        format_type=log_config.format,
        colored_console=log_config.colored_console,
        console_output=log_config.console_output,
        json_logs=json_logs,
    )
    configure_threads()
    click.echo(f"\n⚙️  {command}: seed {cfg.train.seed}, output {out_dir}\n")
    return PipelineService(cfg, out_dir)


_COMMON_OPTIONS = (
    click.option(
        "--config", "-c", "config_path", default="config.yaml",
        help="Path to configuration file (YAML, JSON or TOML)",
    ),
    click.option("--out", "-o", default=None, help="Output directory (default: runs/<command>)"),
    click.option("--seed", type=int, default=None, help="Seed (overrides train.seed)"),
    click.option(
        "--set", "overrides", multiple=True, metavar="KEY=VALUE",
        help="Override a config value, e.g. --set train.stage1.epochs=5 (repeatable)",
    ),
    click.option("--json-logs", is_flag=True, help="Output logs in JSON format to stdout"),
    click.option("--debug", is_flag=True, help="Debug logging; re-raise errors with traceback"),
)


def common_options(func):
    """Options shared by every subcommand."""
    for option in reversed(_COMMON_OPTIONS):
        func = option(func)
    return func


data_option = click.option(
    "--data", default=None, help="Dataset manifest.json (default: synthesise one under --out)"
)
checkpoint_option = click.option(
    "--checkpoint", required=True, help="Checkpoint (.pt) written by drfer train"
)


@click.group()
@click.version_option(version=__version__)
def cli():
    """drfer - disentangled 3D facial expression recognition.

    Train and evaluate an expression/identity disentangling point-cloud model.
    """
    pass


@cli.command()
@common_options
@click.option("--raw", is_flag=True, help="Also write raw, unregistered ASCII-XYZ scans")
def synth(config_path, out, seed, overrides, json_logs, debug, raw):
    """Generate the synthetic face dataset.

    Example:
        drfer synth --out data/synth --raw
    """
    try:
        service = _service("synth", config_path, out, seed, overrides, json_logs, debug)
        click.echo("🧪 Generating synthetic faces...")
        result = service.synth(raw=raw)
        click.echo(
            f"✅ {result.summary['samples']} samples + {result.summary['neutrals']} neutrals: "
            f"{result.summary['manifest']}"
        )
        if raw:
            click.echo(f"   Raw scans: {result.summary['raw_manifest']}")
        click.echo()
    except Exception as e:
        _fail(e, debug)


@cli.command()
@common_options
@click.option("--raw-manifest", required=True, help="raw_manifest.json listing the scans")
@click.option("--template", default=None, help="Template cloud (default: the one in the manifest)")
def prepare(config_path, out, seed, overrides, json_logs, debug, raw_manifest, template):
    """Register, resample and thin raw scans into a dataset."""
    try:
        service = _service("prepare", config_path, out, seed, overrides, json_logs, debug)
        click.echo("📐 Registering scans to the template...")
        result = service.prepare(raw_manifest, template)
        click.echo(f"✅ Dataset written: {result.summary['manifest']}\n")
    except Exception as e:
        _fail(e, debug)


@cli.command()
@common_options
@click.option(
    "--stage",
    type=click.Choice([s.value for s in TrainStage]),
    default="all",
    help="Stage to run; 2 and 3 resume from --checkpoint",
)
@click.option("--checkpoint", default=None, help="Checkpoint of the previous stage")
@data_option
def train(config_path, out, seed, overrides, json_logs, debug, stage, checkpoint, data):
    """Train stage 1, 2, 3 or all three in order.

    Example:
        drfer train --stage all --config configs/shrunk.yaml --out runs/a
    """
    try:
        from drfer.utils.summary import print_stage_reports

        request = TrainRequest(stage=stage, checkpoint=checkpoint, data=data)
        service = _service("train", config_path, out, seed, overrides, json_logs, debug)
        click.echo(f"🏋️  Training stage {stage}...")
        result, reports = service.train(request)
        print_stage_reports([r.to_dict() for r in reports])
        if "test_accuracy" in result.summary:
            click.echo(f"✅ Held-out accuracy: {100 * result.summary['test_accuracy']:.2f}%")
        click.echo(f"📦 Checkpoints in {Path(result.out_dir) / 'checkpoints'}\n")
    except Exception as e:
        _fail(e, debug)


@cli.command(name="eval")
@common_options
@checkpoint_option
@data_option
def eval_cmd(config_path, out, seed, overrides, json_logs, debug, checkpoint, data):
    """Score a checkpoint on its held-out subjects."""
    try:
        from drfer.utils.artifacts import read_json
        from drfer.utils.summary import print_eval_summary_table

        service = _service("eval", config_path, out, seed, overrides, json_logs, debug)
        result = service.evaluate(checkpoint, data)
        print_eval_summary_table({"holdout": read_json(Path(result.out_dir) / "eval.json")})
    except Exception as e:
        _fail(e, debug)


@cli.command()
@common_options
@click.option("--folds", type=int, default=None, help="Number of folds (overrides eval.folds)")
@click.option("--probes/--no-probes", default=None, help="Run identity-leakage probes per fold")
@data_option
def crossval(config_path, out, seed, overrides, json_logs, debug, folds, probes, data):
    """Subject-independent k-fold cross-validation."""
    try:
        from drfer.utils.summary import print_eval_summary_table

        service = _service("crossval", config_path, out, seed, overrides, json_logs, debug)
        click.echo("🔁 Cross-validating...")
        result = service.crossval(data, folds, probes)
        print_eval_summary_table(result.summary["per_stage"])
    except Exception as e:
        _fail(e, debug)


@cli.command(name="rotate-bench")
@common_options
@checkpoint_option
@click.option(
    "--angles", default=None,
    help="'default' (20,40,60,80) or a comma list of magnitudes in degrees",
)
@data_option
def rotate_bench(config_path, out, seed, overrides, json_logs, debug, checkpoint, angles, data):
    """Accuracy under pitch/yaw self-occlusion.

    Example:
        drfer rotate-bench --checkpoint runs/a/checkpoints/stage3.pt --angles default
    """
    try:
        from drfer.utils.summary import print_rotation_table

        service = _service("rotate-bench", config_path, out, seed, overrides, json_logs, debug)
        click.echo("🔄 Rendering rotated, self-occluded faces...")
        result = service.rotate_bench(checkpoint, angles, data)
        print_rotation_table(result.summary["curve"])
    except Exception as e:
        _fail(e, debug)


@cli.command()
@common_options
@checkpoint_option
@click.option("--baseline", default=None, help="Stage-1 checkpoint to compare against")
@data_option
def probe(config_path, out, seed, overrides, json_logs, debug, checkpoint, baseline, data):
    """Linear probes for identity leakage into the expression feature."""
    try:
        service = _service("probe", config_path, out, seed, overrides, json_logs, debug)
        result = service.probe(checkpoint, baseline, data)
        s = result.summary
        click.echo(f"✅ Expression probe: {100 * s['expression_from_exp_final']:.2f}%")
        click.echo(f"   Identity probe:   {100 * s['identity_from_exp_final']:.2f}%")
        if s["identity_from_exp_baseline"] is not None:
            baseline = s["identity_from_exp_baseline"]
            click.echo(f"   Identity probe (baseline): {100 * baseline:.2f}%")
        click.echo(f"   Chance: {100 * s['identity_chance']:.2f}%\n")
    except Exception as e:
        _fail(e, debug)


@cli.command()
@common_options
@checkpoint_option
@click.option(
    "--method", type=click.Choice(["linear", "tsne"]), default=None,
    help="2-D projection (overrides eval.embedding_method)",
)
@data_option
def embed(config_path, out, seed, overrides, json_logs, debug, checkpoint, method, data):
    """Export expression features and a 2-D embedding."""
    try:
        service = _service("embed", config_path, out, seed, overrides, json_logs, debug)
        result = service.embed(checkpoint, method, data)
        click.echo(
            f"✅ {result.summary['samples']} features projected ({result.summary['method']})\n"
        )
    except Exception as e:
        _fail(e, debug)


@cli.command()
@common_options
@click.option("--folds", type=int, default=None, help="Number of folds (overrides eval.folds)")
@data_option
def ablate(config_path, out, seed, overrides, json_logs, debug, folds, data):
    """Cross-validate every configuration of the ablation grid."""
    try:
        from drfer.utils.summary import print_eval_summary_table

        service = _service("ablate", config_path, out, seed, overrides, json_logs, debug)
        click.echo("🧩 Running the ablation grid...")
        result = service.ablate(data, folds)
        rows = {
            r["configuration"]: {
                "accuracy": r["accuracy_mean"],
                "accuracy_std": r["accuracy_std"],
                "per_fold": r["per_fold"],
            }
            for r in result.summary["rows"]
        }
        print_eval_summary_table(rows)
    except Exception as e:
        _fail(e, debug)


@cli.command()
@common_options
@click.option(
    "--results", required=True, help="Directory holding crossval/eval/rotation/probe JSON"
)
def report(config_path, out, seed, overrides, json_logs, debug, results):
    """Write results.json, summary.txt and plots from earlier runs."""
    try:
        service = _service("report", config_path, out, seed, overrides, json_logs, debug)
        result = service.report(results)
        click.echo(f"✅ Report from {', '.join(result.summary['inputs'])}:")
        for name in result.summary["files"]:
            click.echo(f"   {Path(result.out_dir) / name}")
        click.echo()
    except Exception as e:
        _fail(e, debug)


def main():
    """Main entry point for the drfer CLI tool."""
    cli()


if __name__ == "__main__":
    main()

"""Command-line interface.

Every subcommand reads an optional JSON config file and lets flags
override individual keys; the effective configuration lands in the run
directory's manifest. Exit codes: 0 success, 1 runtime failure, 2 bad
usage or configuration.
"""

from __future__ import annotations

import functools
import json

import click

from . import experiment
from .corpus import TASKS, DatasetRowError, DatasetSchemaError
from .experiment import ConfigError


def _common(fn):
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  default=None, help="JSON config file; flags override its keys.")
    @click.option("--dataset", type=click.Path(), default=None, help="Dataset CSV path.")
    @click.option("--out", type=click.Path(), default=None, help="Run directory.")
    @click.option("--task", type=click.Choice(TASKS), default=None)
    @click.option("--seed", type=int, default=None)
    @click.option("--jobs", type=int, default=None, help="Parallel fold workers.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def _resolve(config_path, **overrides) -> dict:
    try:
        return experiment.effective_config(experiment.load_config(config_path), overrides)
    except ConfigError as exc:
        raise click.UsageError(str(exc))


def _run(fn, *args):
    try:
        return fn(*args)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    except (DatasetSchemaError, DatasetRowError) as exc:
        raise click.ClickException(f"dataset error: {exc}")
    except FileNotFoundError as exc:
        raise click.ClickException(str(exc))


@click.group()
@click.version_option()
def main() -> None:
    """Conformal in-context learning toolkit."""


@main.command()
@_common
def ingest(config_path, **overrides) -> None:
    """Validate a dataset and print a per-task summary."""
    config = _resolve(config_path, **overrides)
    summary = _run(experiment.run_ingest, config)
    click.echo(json.dumps(summary, indent=2))


@main.command()
@_common
@click.option("--folds", type=int, default=None)
@click.option("--val-fraction", type=float, default=None)
@click.option("--stratify/--no-stratify", "stratify", default=None)
def split(config_path, **overrides) -> None:
    """Write a cross-validation split plan into the run directory."""
    config = _resolve(config_path, **overrides)
    plan = _run(experiment.run_split, config)
    click.echo(f"wrote {len(plan.folds)} folds for {plan.n_records} records "
               f"to {config['out']}/splits.json")


@main.command("grid-search")
@_common
@click.option("--classifier", type=click.Choice(["lr", "svm", "knn", "majority", "random"]),
              default=None)
@click.option("--vectorizer", type=click.Choice(["tfidf", "bow"]), default=None)
def grid_search_cmd(config_path, **overrides) -> None:
    """Score hyperparameter candidates on each fold's validation block."""
    config = _resolve(config_path, **overrides)
    summary = _run(experiment.run_grid_search, config)
    for fold in summary["folds"]:
        click.echo(f"fold {fold['fold']}: best {fold['best_params']} "
                   f"({summary['metric']} {fold['best_score']:.3f})")


@main.command()
@_common
@click.option("--classifier", type=click.Choice(["lr", "svm", "knn", "majority", "random"]),
              default=None)
@click.option("--vectorizer", type=click.Choice(["tfidf", "bow"]), default=None)
def train(config_path, **overrides) -> None:
    """Grid-search, train and evaluate one model per fold."""
    config = _resolve(config_path, **overrides)
    summary = _run(experiment.run_train, config)
    agg = summary["macro_f1"]
    click.echo(f"{summary['vectorizer']}-{summary['classifier']} on {summary['task']}: "
               f"macro-F1 mean {agg['mean']:.3f} max {agg['max']:.3f} "
               f"dev {agg['deviation']:.3f}")


@main.command()
@_common
@click.option("--alpha", type=float, default=None, help="Miscoverage budget.")
def calibrate(config_path, **overrides) -> None:
    """Fit per-fold conformal calibrators on the validation blocks."""
    config = _resolve(config_path, **overrides)
    summary = _run(experiment.run_calibrate, config)
    click.echo(f"alpha={summary['alpha']}: coverage mean "
               f"{summary['coverage']['mean']:.3f}, "
               f"mean set size {summary['mean_set_size']:.2f}")


@main.command("prompt-run")
@_common
@click.option("--strategy", type=click.Choice(["all", "sim", "max", "cicle"]), default=None)
@click.option("--k", type=int, default=None, help="Shot or class budget for sim and max.")
@click.option("--alpha", type=float, default=None)
@click.option("--backend", type=click.Choice(["perfect", "random-shot", "scripted", "http"]),
              default=None)
@click.option("--model", type=str, default=None, help="Completion model name for http.")
@click.option("--scripted-replies", "scripted_replies", type=click.Path(exists=True),
              default=None)
def prompt_run(config_path, **overrides) -> None:
    """Build and complete prompts for every test sample."""
    config = _resolve(config_path, **overrides)
    summary = _run(experiment.run_prompt, config)
    click.echo(f"{summary['strategy']}: macro-F1 mean {summary['macro_f1']['mean']:.3f}, "
               f"usage {summary['llm_usage'] * 100:.0f}%, "
               f"chars {summary['mean_prompt_chars']:.1f}, "
               f"failures {summary['failure_rate'] * 100:.1f}%")


@main.command("eval")
@_common
@click.option("--predictions", type=click.Path(exists=True, dir_okay=False), required=True,
              help="JSONL with gold/prediction label strings per line.")
def eval_cmd(config_path, predictions, **overrides) -> None:
    """Score a predictions file against the dataset's gold labels."""
    config = _resolve(config_path, **overrides)
    report = _run(experiment.run_eval, config, predictions)
    click.echo(json.dumps(report, indent=2))


@main.command()
@_common
def spans(config_path, **overrides) -> None:
    """Extract positive-weight token spans for each test record."""
    config = _resolve(config_path, **overrides)
    summary = _run(experiment.run_spans, config)
    click.echo(f"mean classes per informative token: "
               f"{summary['mean_classes_per_informative_token']:.2f}")


@main.command()
@_common
def report(config_path, **overrides) -> None:
    """Summarize every report found in the run directory."""
    config = _resolve(config_path, **overrides)
    click.echo(_run(experiment.run_report, config))


if __name__ == "__main__":
    main()

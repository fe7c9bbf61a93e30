import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import click
from pydantic import ValidationError

from right_reasons.config.config import DEFAULT_CONFIG_PATH, build_config, load_config_file
from right_reasons.errors.harness import ConfigError
from right_reasons.harness.experiments import DRIVERS
from right_reasons.harness.metadata import write_run_metadata
from right_reasons.shared.logging import BASE_LOGGER

logger = BASE_LOGGER.getChild("main")

# click parameter name -> dotted config keys it sets
OPTION_KEYS: dict[str, tuple[str, ...]] = {
    "dataset": ("dataset.name",),
    "n": ("dataset.n",),
    "test_n": ("dataset.test_n",),
    "seed": ("dataset.seed", "training.seed"),
    "train_fraction": ("dataset.train_fraction",),
    "mnist_dir": ("dataset.mnist_dir",),
    "iris_path": ("dataset.iris_path",),
    "cancer_path": ("dataset.cancer_path",),
    "corpus_dir": ("dataset.corpus_dir",),
    "subsample": ("dataset.subsample",),
    "strip_headers": ("dataset.strip_headers",),
    "output_dir": ("output_dir",),
    "annotation": ("annotation",),
    "annotated_rows": ("annotated_rows",),
    "lambda1": ("training.lambda1",),
    "lambda2": ("training.lambda2",),
    "epochs": ("training.epochs",),
    "batch_size": ("training.batch_size",),
    "learning_rate": ("training.adam.learning_rate",),
    "pin_annotated": ("training.pin_annotated",),
    "hidden_sizes": ("training.hidden_sizes",),
    "checkpoint": ("checkpoint",),
    "target": ("explain.target",),
    "class_index": ("explain.class_index",),
    "cutoff": ("explain.cutoff",),
    "examples": ("explain.examples",),
    "scheme": ("surrogate.scheme.kind",),
    "num_samples": ("surrogate.scheme.num_samples",),
    "kernel_width": ("surrogate.scheme.kernel_width",),
    "block_size": ("surrogate.scheme.block_size",),
    "k": ("surrogate.k",),
    "ridge": ("surrogate.ridge",),
    "instances": ("surrogate.instances",),
    "reseeds": ("surrogate.reseeds",),
    "fae_cutoff": ("fae.cutoff",),
    "lambda1_schedule": ("fae.lambda1_schedule",),
    "max_iterations": ("fae.max_iterations",),
    "accuracy_floor": ("fae.accuracy_floor",),
    "overlap_ceiling": ("fae.overlap_ceiling",),
    "grid": ("sweeps.lambda1_grid",),
    "trial_epochs": ("sweeps.trial_epochs",),
    "n_grid": ("sweeps.n_grid",),
    "variants": ("sweeps.mask_variants",),
    "annotated_counts": ("sweeps.annotated_counts",),
    "transition_grid": ("sweeps.transition_lambda1_grid",),
    "splits": ("sweeps.splits",),
    "resolution": ("sweeps.grid_resolution",),
    "repetitions": ("sweeps.repetitions",),
    "bench_instances": ("sweeps.bench_instances",),
    "sample_counts": ("sweeps.sample_counts",),
}

DATASET_NAMES = ["toy-color", "decoy-mnist", "mnist", "iris-cancer", "20ng", "toy-2d-two-class", "toy-2d-three-class"]
ANNOTATIONS = ["none", "full", "corners", "top-middle", "pro-rule1", "pro-rule2", "anti-rule1", "anti-rule2"]


def _split_list(cast: Callable[[str], Any]) -> Callable[[click.Context, click.Parameter, str | None], list[Any] | None]:
    def parse(_ctx: click.Context, param: click.Parameter, value: str | None) -> list[Any] | None:
        if value is None:
            return None
        try:
            return [cast(item.strip()) for item in value.split(",") if item.strip()]
        except ValueError as e:
            msg = f"expected a comma-separated list, got '{value}'"
            raise click.BadParameter(msg, param=param) from e

    return parse


def _apply(options: Sequence[Callable]) -> Callable:
    def decorate(function: Callable) -> Callable:
        for option in reversed(options):
            function = option(function)
        return function

    return decorate


dataset_options = _apply(
    [
        click.option("--dataset", type=click.Choice(DATASET_NAMES), default=None, help="Dataset to use"),
        click.option("--n", type=int, default=None, help="Training examples to generate (toy datasets)"),
        click.option("--test-n", type=int, default=None, help="Test examples to generate (toy datasets)"),
        click.option("--seed", type=int, default=None, help="Seed for data generation, splits and training"),
        click.option("--train-fraction", type=float, default=None, help="Training share for split datasets"),
        click.option("--mnist-dir", type=click.Path(path_type=Path), default=None, envvar="MNIST_DIR", help="Directory with MNIST IDX files"),
        click.option("--iris-path", type=click.Path(path_type=Path), default=None, help="UCI iris.data file"),
        click.option("--cancer-path", type=click.Path(path_type=Path), default=None, help="UCI wdbc.data file"),
        click.option("--corpus-dir", type=click.Path(path_type=Path), default=None, envvar="NEWSGROUPS_DIR", help="20 Newsgroups directory"),
        click.option("--subsample", type=int, default=None, help="Keep only this many MNIST training rows"),
        click.option("--strip-headers/--keep-headers", default=None, help="Strip newsgroup headers and quotes"),
        click.option("--output-dir", type=click.Path(path_type=Path), default=None, help="Directory for artifacts"),
        click.option("--annotation", type=click.Choice(ANNOTATIONS), default=None, help="Annotation matrix for training"),
        click.option("--annotated-rows", type=int, default=None, help="Keep annotations on only this many rows"),
    ]
)

training_options = _apply(
    [
        click.option("--lambda1", type=float, default=None, help="Weight of the input-gradient penalty"),
        click.option("--lambda2", type=float, default=None, help="Weight of the parameter penalty"),
        click.option("--epochs", type=int, default=None, help="Maximum training epochs"),
        click.option("--batch-size", type=int, default=None, help="Minibatch size"),
        click.option("--learning-rate", type=float, default=None, help="Adam step size"),
        click.option("--pin-annotated/--no-pin-annotated", default=None, help="Add annotated rows to every minibatch"),
        click.option("--hidden-sizes", type=str, default=None, callback=_split_list(int), help="Comma-separated hidden widths"),
    ]
)

checkpoint_option = click.option(
    "--checkpoint", type=click.Path(path_type=Path), default=None, help="Use this trained model instead of training one"
)

surrogate_options = _apply(
    [
        click.option("--scheme", type=click.Choice(["feature-mask", "block-mask"]), default=None, help="Perturbation units"),
        click.option("--num-samples", type=int, default=None, help="Perturbation samples per explanation"),
        click.option("--kernel-width", type=float, default=None, help="Proximity kernel width"),
        click.option("--block-size", type=int, default=None, help="Pixel block side for block-mask"),
        click.option("--k", type=int, default=None, help="Units kept by the local model"),
        click.option("--ridge", type=float, default=None, help="Ridge strength of local fits"),
    ]
)


@click.group()
@click.option("--debug", is_flag=True, default=False, envvar="DEBUG", help="Enable debug logging")
@click.option("--config-file", type=click.Path(path_type=Path), default=None, envvar="CONFIG_FILE", help="YAML file of dotted config keys")
@click.pass_context
def cli(ctx: click.Context, debug: bool, config_file: Path | None):
    """
    Train classifiers that are right for the right reasons, explain them, and run the
    reproduction experiments.

    Every driver writes its artifacts and a run-metadata.json to the output directory.
    """
    if debug:
        BASE_LOGGER.setLevel(logging.DEBUG)
    ctx.ensure_object(dict)
    ctx.obj["file_values"] = load_config_file(config_file or DEFAULT_CONFIG_PATH)


def _run(ctx: click.Context, experiment: str, options: dict[str, Any]) -> int:
    overrides: dict[str, Any] = {"experiment": experiment}
    for name, value in options.items():
        if value is None:
            continue
        for key in OPTION_KEYS[name]:
            overrides[key] = value
    config = build_config(ctx.obj["file_values"], overrides)
    config.output_dir.mkdir(parents=True, exist_ok=True)

    logger.info(f"Running {experiment} on '{config.dataset.name}', writing to {config.output_dir}")
    output = DRIVERS[experiment](config)
    metadata = write_run_metadata(config, ctx.obj.get("argv", []), output.files, output.metrics)
    logger.info(f"{experiment} finished: {len(output.files)} files, metadata in {metadata}")
    return 0


@cli.command("gen-data")
@dataset_options
@click.pass_context
def gen_data(ctx: click.Context, **options: Any) -> int:
    """Generate or load a dataset and store it in the columnar text format."""
    return _run(ctx, "gen-data", options)


@cli.command("train")
@dataset_options
@training_options
@click.pass_context
def train_command(ctx: click.Context, **options: Any) -> int:
    """Train a model and write model.json and history.csv."""
    return _run(ctx, "train", options)


@cli.command("explain")
@dataset_options
@training_options
@checkpoint_option
@click.option("--target", type=click.Choice(["sum-logprob", "predicted-prob", "class-prob"]), default=None, help="Explained scalar")
@click.option("--class-index", type=int, default=None, help="Class for the class-prob target")
@click.option("--cutoff", type=float, default=None, help="Mask cutoff c")
@click.option("--examples", type=int, default=None, help="Test rows to explain")
@click.pass_context
def explain_command(ctx: click.Context, **options: Any) -> int:
    """Write input-gradient explanations and masks for test rows."""
    return _run(ctx, "explain", options)


@cli.command("surrogate")
@dataset_options
@training_options
@checkpoint_option
@surrogate_options
@click.option("--instances", type=int, default=None, help="Test rows to explain")
@click.option("--reseeds", type=int, default=None, help="Reseeded runs for the stability measurement")
@click.pass_context
def surrogate_command(ctx: click.Context, **options: Any) -> int:
    """Compare local surrogate explanations with input gradients."""
    return _run(ctx, "surrogate", options)


@cli.command("fae")
@dataset_options
@training_options
@click.option("--cutoff", "fae_cutoff", type=float, default=None, help="Mask cutoff c")
@click.option("--lambda1-schedule", type=str, default=None, callback=_split_list(float), help="Comma-separated lambda1 per iteration")
@click.option("--max-iterations", type=int, default=None, help="Models to train at most")
@click.option("--accuracy-floor", type=float, default=None, help="Stop below this test accuracy")
@click.option("--overlap-ceiling", type=float, default=None, help="Stop when masks overlap more than this")
@click.pass_context
def fae_command(ctx: click.Context, **options: Any) -> int:
    """Run the find-another-explanation loop."""
    return _run(ctx, "fae", options)


@cli.command("bench")
@dataset_options
@training_options
@checkpoint_option
@surrogate_options
@click.option("--repetitions", type=int, default=None, help="Timing repetitions (at least 3)")
@click.option("--bench-instances", type=int, default=None, help="Instances timed")
@click.option("--sample-counts", type=str, default=None, callback=_split_list(int), help="Sample counts of the cost sweep")
@click.pass_context
def bench_command(ctx: click.Context, **options: Any) -> int:
    """Time surrogate and gradient explanations."""
    return _run(ctx, "bench", options)


@cli.command("lambda-sweep")
@dataset_options
@training_options
@click.option("--grid", type=str, default=None, callback=_split_list(float), help="Comma-separated lambda1 values")
@click.pass_context
def lambda_sweep_command(ctx: click.Context, **options: Any) -> int:
    """Train across a lambda1 grid and record loss terms and accuracy."""
    return _run(ctx, "lambda-sweep", options)


@cli.command("data-efficiency")
@dataset_options
@training_options
@click.option("--grid", type=str, default=None, callback=_split_list(float), help="lambda1 candidates for balancing")
@click.option("--n-grid", type=str, default=None, callback=_split_list(int), help="Comma-separated training sizes")
@click.option("--variants", type=str, default=None, callback=_split_list(str), help="Comma-separated annotation variants")
@click.option("--trial-epochs", type=int, default=None, help="Epochs per lambda1 trial")
@click.pass_context
def data_efficiency_command(ctx: click.Context, **options: Any) -> int:
    """Test accuracy against training size for each annotation variant."""
    return _run(ctx, "data-efficiency", options)


@cli.command("boundary-field")
@dataset_options
@training_options
@checkpoint_option
@click.option("--resolution", type=int, default=None, help="Grid points per axis")
@click.pass_context
def boundary_field_command(ctx: click.Context, **options: Any) -> int:
    """Probability and log-probability input gradients over a 2-D grid."""
    return _run(ctx, "boundary-field", options)


@cli.command("confound-report")
@dataset_options
@training_options
@click.option("--splits", type=int, default=None, help="Splits or seeds to average over")
@click.pass_context
def confound_report_command(ctx: click.Context, **options: Any) -> int:
    """Accuracy with and without the confound for A = 0 and full A."""
    return _run(ctx, "confound-report", options)


@cli.command("rule-transitions")
@dataset_options
@training_options
@click.option("--transition-grid", type=str, default=None, callback=_split_list(float), help="Comma-separated lambda1 values")
@click.option("--annotated-counts", type=str, default=None, callback=_split_list(int), help="Comma-separated annotated row counts")
@click.option("--cutoff", type=float, default=None, help="Mask cutoff c")
@click.option("--examples", type=int, default=None, help="Test rows whose masks are measured")
@click.pass_context
def rule_transitions_command(ctx: click.Context, **options: Any) -> int:
    """Corner and top-middle mask shares as annotations and lambda1 grow."""
    return _run(ctx, "rule-transitions", options)


def run(argv: Sequence[str] | None = None) -> int:
    """
    Runs the CLI and maps failures to exit codes.

    Returns:
        0 on success, 1 on a usage or configuration error, 2 when a driver fails.
    """
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        result = cli.main(args=args, prog_name="right-reasons", standalone_mode=False, obj={"argv": args})
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        return 1
    except (ConfigError, ValidationError):
        logger.exception("Configuration error")
        return 1
    except Exception:
        logger.exception("The experiment failed")
        return 2
    return result if isinstance(result, int) else 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

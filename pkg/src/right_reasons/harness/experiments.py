"""
Experiment drivers, one per CLI subcommand.

Every driver takes the resolved ExperimentConfig, writes its artifacts under
config.output_dir and returns the files and headline metrics for the run metadata.
"""

import math
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from right_reasons.config.config import ExperimentConfig
from right_reasons.datasets.schema import GridKind, TextKind
from right_reasons.datasets.storage import save_dataset
from right_reasons.datasets.toy_color import rule_shares
from right_reasons.errors.harness import ConfigError
from right_reasons.errors.surrogate import PerturbationSchemeError
from right_reasons.explain.explanations import ExplanationTarget, explain, mask_top
from right_reasons.explain.render import render
from right_reasons.fae.loop import FaeConfig, default_lambda1_schedule, ensemble_disagreement, run_fae
from right_reasons.harness import reports
from right_reasons.harness.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from right_reasons.harness.data import ExperimentData, annotations_for, load_experiment_data
from right_reasons.model.mlp import Params, accuracy, predict, predict_proba
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.surrogate.bench import bench, sample_sweep
from right_reasons.surrogate.local_model import explain_instance, sign_agreement, topk_jaccard, unit_scores
from right_reasons.surrogate.perturb import PerturbationScheme
from right_reasons.training.lambda_select import select_lambda1
from right_reasons.training.settings import RrrConfig
from right_reasons.training.trainer import TrainHistory, train

logger = BASE_LOGGER.getChild("experiments")

MIN_SWEEP_DECADES = 4
BOUNDARY_MARGIN = 0.5


class DriverOutput(BaseModel):
    files: list[Path] = Field(default_factory=list)
    metrics: dict[str, Any] = Field(default_factory=dict)


def history_rows(history: TrainHistory) -> list[dict[str, Any]]:
    """Epoch 0 is the initialization; epoch e > 0 is the state after e passes."""
    rows = [(0, history.initial, None, None)]
    rows += [(record.epoch + 1, record.loss, record.train_accuracy, record.held_out_accuracy) for record in history.records]
    return [
        {
            "epoch": epoch,
            "total": loss.total,
            "right_answers": loss.right_answers,
            "right_reasons": loss.right_reasons,
            "regular": loss.regular,
            "raw_right_reasons": loss.raw_right_reasons,
            "train_accuracy": train_accuracy,
            "test_accuracy": test_accuracy,
        }
        for epoch, loss, train_accuracy, test_accuracy in rows
    ]


def _accuracies(params: Params, data: ExperimentData) -> dict[str, float]:
    return {
        "train_accuracy": accuracy(params, data.train.X, data.train.labels),
        "test_accuracy": accuracy(params, data.test.X, data.test.labels),
    }


def _train_or_load(config: ExperimentConfig, data: ExperimentData, A: np.ndarray) -> tuple[Params, list[Path]]:
    """Loads config.checkpoint when given, otherwise trains and saves model.json."""
    if config.checkpoint is not None:
        params = load_checkpoint(config.checkpoint).to_params()
        if params.input_dim != data.train.n_features or params.output_dim != data.train.n_classes:
            msg = f"Checkpoint {config.checkpoint} has layers {params.layer_sizes}, dataset '{data.train.name}' needs {data.train.n_features} inputs"
            raise ConfigError(msg)
        return params, []
    params, history = train(config.training, data.train, A, held_out=data.test)
    path = config.output_dir / "model.json"
    metrics = {**_accuracies(params, data), "final_total_loss": history.final.total}
    save_checkpoint(Checkpoint.from_params(params, config.training, data.train.fingerprint(), metrics), path)
    history_path = reports.write_csv(config.output_dir / "history.csv", reports.HISTORY_COLUMNS, history_rows(history))
    return params, [path, history_path]


def _shares(data: ExperimentData, weights: np.ndarray) -> tuple[float | None, float | None]:
    return rule_shares(weights) if data.train.name == "toy-color" else (None, None)


def run_gen_data(config: ExperimentConfig) -> DriverOutput:
    data = load_experiment_data(config.dataset)
    A = annotations_for(data, config.annotation, config.annotated_rows, config.dataset.seed)
    train_path, test_path = config.output_dir / "train.csv", config.output_dir / "test.csv"
    save_dataset(data.train.with_annotations(A), train_path)
    save_dataset(data.test, test_path)
    return DriverOutput(
        files=[train_path, test_path],
        metrics={"train_rows": data.train.n_examples, "test_rows": data.test.n_examples, "fingerprint": data.train.fingerprint()},
    )


def run_train(config: ExperimentConfig) -> DriverOutput:
    data = load_experiment_data(config.dataset)
    A = annotations_for(data, config.annotation, config.annotated_rows, config.dataset.seed)
    params, files = _train_or_load(config.model_copy(update={"checkpoint": None}), data, A)
    return DriverOutput(files=files, metrics=_accuracies(params, data))


def run_explain(config: ExperimentConfig) -> DriverOutput:
    data = load_experiment_data(config.dataset)
    A = annotations_for(data, config.annotation, config.annotated_rows, config.dataset.seed)
    params, files = _train_or_load(config, data, A)
    settings = config.explain
    X = data.test.X[: settings.examples]

    explanations = explain(params, X, settings.target, settings.class_index)
    mask = mask_top(explanations, settings.cutoff)
    artifact_path = config.output_dir / "explanations.json"
    render(explanations, mask, data.test.kind, artifact_path, X=X)
    corner_share, top_middle_share = _shares(data, mask.bits)
    summary = {
        "target": explanations.target_label,
        "cutoff": settings.cutoff,
        "examples": X.shape[0],
        "mean_selected_fraction": mask.selected_fraction,
        "corner_share": corner_share,
        "top_middle_share": top_middle_share,
    }
    summary_path = reports.write_csv(config.output_dir / "explain_summary.csv", reports.EXPLAIN_SUMMARY_COLUMNS, [summary])
    return DriverOutput(files=[*files, artifact_path, summary_path], metrics=summary)


def _scheme_for(config: ExperimentConfig, data: ExperimentData) -> PerturbationScheme:
    scheme = config.surrogate.scheme
    kind = data.train.kind
    updates: dict[str, Any] = {}
    if isinstance(kind, GridKind) and scheme.grid is None:
        updates["grid"] = kind
    if isinstance(kind, TextKind) and "units" not in scheme.model_fields_set:
        updates["units"] = "nonzero"
    return scheme.model_copy(update=updates) if updates else scheme


def run_surrogate(config: ExperimentConfig) -> DriverOutput:
    data = load_experiment_data(config.dataset)
    A = annotations_for(data, config.annotation, config.annotated_rows, config.dataset.seed)
    params, files = _train_or_load(config, data, A)
    settings = config.surrogate
    scheme = _scheme_for(config, data)
    X = data.test.X[: settings.instances]

    def predict_fn(batch: np.ndarray) -> np.ndarray:
        return predict_proba(params, batch)

    gradients = explain(params, X, ExplanationTarget.PREDICTED_PROB).gradients
    weight_rows, fidelity_rows = [], []
    explainable: list[int] = []
    for example, row in enumerate(X):
        try:
            local = explain_instance(predict_fn, row, scheme, settings.k, config.training.seed + example, settings.ridge)
        except PerturbationSchemeError as e:
            # e.g. an empty document under units="nonzero"
            logger.warning(f"Skipping surrogate for example {example}: {e.message}")
            fidelity_rows.append(
                {
                    "example": example,
                    "predicted_class": int(np.argmax(predict_fn(row[None, :])[0])),
                    "joint_features": None,
                    "sign_agreement": None,
                    "surrogate_score": None,
                    "degenerate": True,
                }
            )
            continue
        explainable.append(example)
        scores = unit_scores(gradients[example], local.units)
        top_gradient = np.argsort(-np.abs(scores), kind="stable")[: settings.k]
        weight_rows += [
            {"example": example, "method": "surrogate", "rank": rank, "unit": feature.index, "weight": feature.weight}
            for rank, feature in enumerate(local.features)
        ]
        weight_rows += [
            {"example": example, "method": "gradient", "rank": rank, "unit": int(unit), "weight": float(scores[unit])}
            for rank, unit in enumerate(top_gradient)
        ]
        fidelity_rows.append(
            {
                "example": example,
                "predicted_class": local.predicted_class,
                "joint_features": len(local.selected_indices() & set(top_gradient.tolist())),
                "sign_agreement": sign_agreement(gradients[example], local),
                "surrogate_score": local.score,
                "degenerate": local.degenerate,
            }
        )

    stability = []
    if explainable:
        example = explainable[0]
        reseeded = [
            explain_instance(predict_fn, X[example], scheme, settings.k, config.training.seed + 1000 + run, settings.ridge)
            for run in range(settings.reseeds)
        ]
        first_units = reseeded[0].units
        # gradients are deterministic, so every rerun selects this same set
        scores = unit_scores(gradients[example], first_units)
        gradient_set = set(np.argsort(-np.abs(scores), kind="stable")[: settings.k].tolist())
        units = len(first_units)
        stability = [
            {
                "method": "surrogate",
                "runs": settings.reseeds,
                "units": units,
                "samples": scheme.num_samples,
                "mean_jaccard": topk_jaccard([local.selected_indices() for local in reseeded]),
            },
            {
                "method": "gradient",
                "runs": settings.reseeds,
                "units": units,
                "samples": 0,
                "mean_jaccard": topk_jaccard([gradient_set] * settings.reseeds),
            },
        ]
    else:
        logger.warning("No example has interpretable units; stability.csv is empty")

    agreements = [row["sign_agreement"] for row in fidelity_rows if row["sign_agreement"] is not None]
    files += [
        reports.write_csv(config.output_dir / "surrogate.csv", reports.SURROGATE_COLUMNS, weight_rows),
        reports.write_csv(config.output_dir / "fidelity.csv", reports.FIDELITY_COLUMNS, fidelity_rows),
        reports.write_csv(config.output_dir / "stability.csv", reports.STABILITY_COLUMNS, stability),
    ]
    return DriverOutput(
        files=files,
        metrics={
            "mean_sign_agreement": float(np.mean(agreements)) if agreements else None,
            "surrogate_jaccard": stability[0]["mean_jaccard"] if stability else None,
            "gradient_jaccard": stability[1]["mean_jaccard"] if stability else None,
            "skipped_examples": len(X) - len(explainable),
        },
    )


class IndexDocument(BaseModel):
    """fae/index.json: how the per-iteration checkpoints fit together."""

    format_version: int
    stop_reason: str
    cutoff: float
    lambda1_schedule: list[float]
    iterations: list[str]
    mean_test_disagreement: float


def run_fae_driver(config: ExperimentConfig) -> DriverOutput:
    data = load_experiment_data(config.dataset)
    fae = config.fae or FaeConfig()
    if "lambda1_schedule" not in fae.model_fields_set:
        fae = fae.model_copy(update={"lambda1_schedule": default_lambda1_schedule(data.train.name)})
    fae = fae.model_copy(update={"training": config.training})
    trace = run_fae(data.train, data.test, fae)

    rows, files = [], []
    directory = config.output_dir / "fae"
    for iteration in trace.iterations:
        corner_share, top_middle_share = _shares(data, iteration.mask)
        rows.append(
            {
                "iteration": iteration.index,
                "lambda1": iteration.lambda1,
                "train_accuracy": iteration.train_accuracy,
                "test_accuracy": iteration.test_accuracy,
                "mask_fraction": iteration.mask_fraction,
                "new_mask_fraction": iteration.new_mask_fraction,
                "annotated_fraction": float(iteration.annotations.mean()),
                "corner_share": corner_share,
                "top_middle_share": top_middle_share,
            }
        )
        path = directory / f"iteration-{iteration.index}.json"
        save_checkpoint(
            Checkpoint.from_params(
                iteration.params,
                fae.training.model_copy(update={"lambda1": iteration.lambda1}),
                data.train.fingerprint(),
                {"train_accuracy": iteration.train_accuracy, "test_accuracy": iteration.test_accuracy},
            ),
            path,
        )
        files.append(path)

    disagreement = ensemble_disagreement(trace.params, data.test.X) if len(trace.iterations) > 1 else np.zeros(data.test.n_examples)
    index = IndexDocument(
        format_version=1,
        stop_reason=trace.stop_reason,
        cutoff=trace.cutoff,
        lambda1_schedule=fae.lambda1_schedule,
        iterations=[str(path.relative_to(config.output_dir)) for path in files],
        mean_test_disagreement=float(disagreement.mean()),
    )
    index_path = directory / "index.json"
    index_path.write_text(index.model_dump_json(indent=2))
    files += [index_path, reports.write_csv(config.output_dir / "fae_trace.csv", reports.FAE_COLUMNS, rows)]
    return DriverOutput(files=files, metrics={"iterations": len(trace.iterations), "stop_reason": trace.stop_reason})


def run_bench(config: ExperimentConfig) -> DriverOutput:
    data = load_experiment_data(config.dataset)
    A = annotations_for(data, config.annotation, config.annotated_rows, config.dataset.seed)
    params, files = _train_or_load(config, data, A)
    sweeps = config.sweeps
    scheme = _scheme_for(config, data)
    X = data.test.X[: sweeps.bench_instances]

    result = bench(params, X, scheme, sweeps.repetitions, data.train.name, config.surrogate.k, config.training.seed)
    sweep = sample_sweep(params, X[0], scheme, sweeps.sample_counts, sweeps.repetitions, config.surrogate.k, config.training.seed)
    files += [
        reports.write_csv(config.output_dir / "bench.csv", reports.BENCH_COLUMNS, [row.model_dump() for row in result.rows]),
        reports.write_csv(
            config.output_dir / "sample_sweep.csv",
            reports.SAMPLE_SWEEP_COLUMNS,
            [
                {"samples": point.samples, "mean_s": point.mean_s, "fitted_s": sweep.intercept + sweep.slope * point.samples}
                for point in sweep.points
            ],
        ),
    ]
    return DriverOutput(files=files, metrics={"surrogate_to_gradient_ratio": result.ratio, "sample_sweep_r_squared": sweep.r_squared})


def _check_decades(grid: list[float]) -> None:
    positive = [value for value in grid if value > 0]
    if len(positive) < 2 or math.log10(max(positive) / min(positive)) < MIN_SWEEP_DECADES:  # noqa: PLR2004
        msg = f"The lambda1 sweep grid must span at least {MIN_SWEEP_DECADES} decades, got {grid}"
        raise ConfigError(msg)


def run_lambda_sweep(config: ExperimentConfig) -> DriverOutput:
    grid = config.sweeps.lambda1_grid
    _check_decades(grid)
    data = load_experiment_data(config.dataset)
    annotation = config.annotation if config.annotation != "none" else "full"
    A = annotations_for(data, annotation, config.annotated_rows, config.dataset.seed)

    rows = []
    for value in grid:
        params, history = train(config.training.model_copy(update={"lambda1": value}), data.train, A, held_out=data.test)
        rows.append(
            {
                "lambda1": value,
                "initial_right_answers": history.initial.right_answers,
                "initial_right_reasons": history.initial.right_reasons,
                "initial_ratio": history.initial.reasons_to_answers,
                "final_right_answers": history.final.right_answers,
                "final_right_reasons": history.final.right_reasons,
                "final_raw_right_reasons": history.final.raw_right_reasons,
                "final_ratio": history.final.reasons_to_answers,
                **_accuracies(params, data),
            }
        )
    selected, report = select_lambda1(data.train, A, grid, config.training, criterion="initial")
    best = max(rows, key=lambda row: row["test_accuracy"])
    path = reports.write_csv(config.output_dir / "lambda_sweep.csv", reports.LAMBDA_SWEEP_COLUMNS, rows)
    return DriverOutput(
        files=[path],
        metrics={"selected_lambda1": selected, "selection_fallback": report.fallback, "best_test_lambda1": best["lambda1"]},
    )


def run_data_efficiency(config: ExperimentConfig) -> DriverOutput:
    if config.dataset.name != "toy-color":
        msg = "data-efficiency runs on toy-color only"
        raise ConfigError(msg)
    sweeps = config.sweeps
    largest = max(sweeps.n_grid)
    data = load_experiment_data(config.dataset.model_copy(update={"n": max(largest, config.dataset.n)}))

    rows = []
    for variant in sweeps.mask_variants:
        for n in sweeps.n_grid:
            subset = data.train.subset(np.arange(n))
            sized = ExperimentData(train=subset, test=data.test)
            A = annotations_for(sized, variant)
            lambda1, fallback = 0.0, False
            if A.any():
                lambda1, report = select_lambda1(
                    subset, A, [value for value in sweeps.lambda1_grid if value > 0], config.training, sweeps.trial_epochs, "initial"
                )
                fallback = report.fallback
            params, _ = train(config.training.model_copy(update={"lambda1": lambda1}), subset, A)
            rows.append(
                {
                    "variant": variant,
                    "n": n,
                    "lambda1": lambda1,
                    "lambda1_fallback": fallback,
                    "train_accuracy": accuracy(params, subset.X, subset.labels),
                    "test_accuracy": accuracy(params, data.test.X, data.test.labels),
                }
            )
            logger.info(f"data-efficiency {variant} n={n}: test accuracy {rows[-1]['test_accuracy']:.4f}")
    path = reports.write_csv(config.output_dir / "data_efficiency.csv", reports.DATA_EFFICIENCY_COLUMNS, rows)
    return DriverOutput(files=[path], metrics={"rows": len(rows)})


def boundary_grid(X: np.ndarray, resolution: int) -> np.ndarray:
    """resolution^2 points covering the data's bounding box plus a margin, x1 varying fastest."""
    low, high = X.min(axis=0) - BOUNDARY_MARGIN, X.max(axis=0) + BOUNDARY_MARGIN
    first, second = np.meshgrid(np.linspace(low[0], high[0], resolution), np.linspace(low[1], high[1], resolution))
    return np.column_stack([first.ravel(), second.ravel()])


def run_boundary_field(config: ExperimentConfig) -> DriverOutput:
    data = load_experiment_data(config.dataset)
    if data.train.n_features != 2:  # noqa: PLR2004
        msg = f"boundary-field needs 2-D inputs, dataset '{data.train.name}' has {data.train.n_features}"
        raise ConfigError(msg)
    params, files = _train_or_load(config, data, np.zeros_like(data.train.X))
    points = boundary_grid(data.train.X, config.sweeps.grid_resolution)
    prob = explain(params, points, ExplanationTarget.PREDICTED_PROB).gradients
    logprob = explain(params, points, ExplanationTarget.SUM_LOGPROB).gradients
    classes = predict(params, points)
    rows = [
        {
            "x1": point[0],
            "x2": point[1],
            "predicted_class": int(label),
            "prob_grad_x1": p[0],
            "prob_grad_x2": p[1],
            "logprob_grad_x1": q[0],
            "logprob_grad_x2": q[1],
        }
        for point, label, p, q in zip(points, classes, prob, logprob, strict=True)
    ]
    files.append(reports.write_csv(config.output_dir / "boundary_field.csv", reports.BOUNDARY_FIELD_COLUMNS, rows))
    return DriverOutput(files=files, metrics={"points": len(rows), **_accuracies(params, data)})


def run_confound_report(config: ExperimentConfig) -> DriverOutput:
    sweeps = config.sweeps
    splits_data = config.dataset.name in ("iris-cancer", "20ng")
    base = load_experiment_data(config.dataset) if not splits_data else None

    rows = []
    for run in range(sweeps.splits):
        seed = config.dataset.seed + run
        data = base if base is not None else load_experiment_data(config.dataset.model_copy(update={"seed": seed}))
        if data.test_mask is None:
            msg = f"Dataset '{data.train.name}' has no confound annotation to report on"
            raise ConfigError(msg)
        without = data.test.X * (1.0 - data.test_mask)
        for variant in sweeps.confound_variants:
            A = annotations_for(data, "full" if variant == "full" else "none")
            training = config.training.model_copy(update={"seed": config.training.seed + run})
            params, _ = train(training, data.train, A)
            rows.append(
                {
                    "variant": variant,
                    "seed": seed,
                    "train_accuracy": accuracy(params, data.train.X, data.train.labels),
                    "test_accuracy": accuracy(params, data.test.X, data.test.labels),
                    "test_accuracy_without_confound": accuracy(params, without, data.test.labels),
                }
            )
        logger.info(f"confound-report run {run + 1}/{sweeps.splits} done")

    rows.sort(key=lambda row: (row["variant"], row["seed"]))
    summary = []
    for variant in sweeps.confound_variants:
        selected = [row for row in rows if row["variant"] == variant]
        for metric in ("train_accuracy", "test_accuracy", "test_accuracy_without_confound"):
            values = np.array([row[metric] for row in selected])
            summary.append({"variant": variant, "metric": metric, "mean": float(values.mean()), "std": float(values.std()), "runs": len(values)})
    files = [
        reports.write_csv(config.output_dir / "confound_report.csv", reports.CONFOUND_COLUMNS, rows),
        reports.write_csv(config.output_dir / "confound_summary.csv", reports.CONFOUND_SUMMARY_COLUMNS, summary),
    ]
    return DriverOutput(files=files, metrics={f"{row['variant']}.{row['metric']}": row["mean"] for row in summary})


def run_rule_transitions(config: ExperimentConfig) -> DriverOutput:
    if config.dataset.name != "toy-color":
        msg = "rule-transitions runs on toy-color only"
        raise ConfigError(msg)
    data = load_experiment_data(config.dataset)
    sweeps = config.sweeps
    X = data.test.X[: config.explain.examples]

    rows = []
    for lambda1 in sweeps.transition_lambda1_grid:
        for count in sweeps.annotated_counts:
            A = annotations_for(data, "corners", count, config.dataset.seed)
            training: RrrConfig = config.training.model_copy(update={"lambda1": lambda1})
            params, _ = train(training, data.train, A)
            mask = mask_top(explain(params, X), config.explain.cutoff)
            corner_share, top_middle_share = rule_shares(mask.bits)
            rows.append(
                {
                    "lambda1": lambda1,
                    "annotated": count,
                    "pinned": training.pin_annotated,
                    "corner_share": corner_share,
                    "top_middle_share": top_middle_share,
                    **_accuracies(params, data),
                }
            )
            logger.info(f"rule-transitions lambda1={lambda1:g} annotated={count}: corners {corner_share:.3f}, top-middle {top_middle_share:.3f}")
    path = reports.write_csv(config.output_dir / "rule_transitions.csv", reports.RULE_TRANSITION_COLUMNS, rows)
    return DriverOutput(files=[path], metrics={"rows": len(rows)})


DRIVERS: dict[str, Callable[[ExperimentConfig], DriverOutput]] = {
    "gen-data": run_gen_data,
    "train": run_train,
    "explain": run_explain,
    "surrogate": run_surrogate,
    "fae": run_fae_driver,
    "bench": run_bench,
    "lambda-sweep": run_lambda_sweep,
    "data-efficiency": run_data_efficiency,
    "boundary-field": run_boundary_field,
    "confound-report": run_confound_report,
    "rule-transitions": run_rule_transitions,
}

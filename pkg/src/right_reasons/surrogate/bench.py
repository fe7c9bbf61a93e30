"""Wall-clock cost of surrogate and input-gradient explanations of the same instances."""

import time
from collections.abc import Callable, Sequence

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field
from sklearn.linear_model import LinearRegression

from right_reasons.errors.surrogate import SurrogateError
from right_reasons.explain.explanations import ExplanationTarget, explain
from right_reasons.model.mlp import Params, predict_proba
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.surrogate.local_model import explain_instance
from right_reasons.surrogate.perturb import PerturbationScheme

logger = BASE_LOGGER.getChild("bench")

MIN_REPETITIONS = 3
DEFAULT_TOP_K = 6


class BenchRow(BaseModel):
    method: str = Field(..., description="'surrogate', 'gradient' or 'forward'.")
    dataset: str
    D: int = Field(..., description="Input dimension.")
    samples: int = Field(..., description="Perturbation samples per surrogate explanation (0 for the other methods).")
    mean_s: float = Field(..., description="Mean seconds per explanation.")
    std_s: float = Field(..., description="Standard deviation of seconds per explanation.")


class BenchResult(BaseModel):
    rows: list[BenchRow]

    def row(self, method: str) -> BenchRow:
        return next(row for row in self.rows if row.method == method)

    @property
    def ratio(self) -> float:
        """Mean surrogate time over mean gradient time."""
        return self.row("surrogate").mean_s / self.row("gradient").mean_s


class SweepPoint(BaseModel):
    samples: int
    mean_s: float


class SampleSweep(BaseModel):
    """Surrogate cost against sample count with a least-squares line."""

    points: list[SweepPoint]
    slope: float
    intercept: float
    r_squared: float


def _time(call: Callable[[], object]) -> float:
    start = time.perf_counter()
    call()
    return time.perf_counter() - start


def bench(
    params: Params,
    X: npt.ArrayLike,
    scheme: PerturbationScheme,
    repetitions: int,
    dataset_name: str,
    k: int = DEFAULT_TOP_K,
    seed: int = 0,
) -> BenchResult:
    """
    Times every instance of X once per repetition with each method.

    The forward method times a plain probability prediction, the yardstick for the
    gradient cost.

    Raises:
        SurrogateError: With fewer than 3 repetitions.
    """
    if repetitions < MIN_REPETITIONS:
        msg = f"Benchmarks need at least {MIN_REPETITIONS} repetitions, got {repetitions}"
        raise SurrogateError(msg)
    X = np.asarray(X, dtype=np.float64)

    def predict_fn(batch: np.ndarray) -> np.ndarray:
        return predict_proba(params, batch)

    timings: dict[str, list[float]] = {"surrogate": [], "gradient": [], "forward": []}
    for repetition in range(repetitions):
        for row in X:
            instance = row[None, :]
            timings["forward"].append(_time(lambda instance=instance: predict_proba(params, instance)))
            timings["gradient"].append(_time(lambda instance=instance: explain(params, instance, ExplanationTarget.PREDICTED_PROB)))
            timings["surrogate"].append(_time(lambda row=row: explain_instance(predict_fn, row, scheme, k, seed + repetition)))
        logger.debug(f"Benchmark repetition {repetition} done")

    rows = [
        BenchRow(
            method=method,
            dataset=dataset_name,
            D=X.shape[1],
            samples=scheme.num_samples if method == "surrogate" else 0,
            mean_s=float(np.mean(values)),
            std_s=float(np.std(values)),
        )
        for method, values in timings.items()
    ]
    result = BenchResult(rows=rows)
    logger.info(f"Surrogate explanations take {result.ratio:.1f}x as long as gradient explanations on '{dataset_name}'")
    return result


def sample_sweep(
    params: Params,
    x: npt.ArrayLike,
    scheme: PerturbationScheme,
    sample_counts: Sequence[int],
    repetitions: int = MIN_REPETITIONS,
    k: int = DEFAULT_TOP_K,
    seed: int = 0,
) -> SampleSweep:
    """Mean surrogate seconds per explanation at each sample count, with a linear fit."""

    def predict_fn(batch: np.ndarray) -> np.ndarray:
        return predict_proba(params, batch)

    points = []
    for count in sample_counts:
        sized = scheme.model_copy(update={"num_samples": int(count)})
        seconds = [_time(lambda sized=sized: explain_instance(predict_fn, x, sized, k, seed)) for _ in range(repetitions)]
        points.append(SweepPoint(samples=int(count), mean_s=float(np.mean(seconds))))

    counts = np.array([[point.samples] for point in points], dtype=np.float64)
    means = np.array([point.mean_s for point in points])
    line = LinearRegression().fit(counts, means)
    return SampleSweep(
        points=points, slope=float(line.coef_[0]), intercept=float(line.intercept_), r_squared=float(line.score(counts, means))
    )

from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal, Self

import yaml
from pydantic import BaseModel, Field, model_validator

from right_reasons.errors.harness import ConfigError
from right_reasons.explain.explanations import ExplanationTarget
from right_reasons.fae.loop import FaeConfig
from right_reasons.shared.logging import BASE_LOGGER
from right_reasons.surrogate.perturb import PerturbationScheme
from right_reasons.training.settings import RrrConfig

logger = BASE_LOGGER.getChild("config")

DEFAULT_CONFIG_PATH = Path(__file__).parent / "default.yaml"

DatasetName = Literal["toy-color", "decoy-mnist", "mnist", "iris-cancer", "20ng", "toy-2d-two-class", "toy-2d-three-class"]
AnnotationName = Literal["none", "full", "corners", "top-middle", "pro-rule1", "pro-rule2", "anti-rule1", "anti-rule2"]


class DatasetSpec(BaseModel):
    """Which dataset an experiment uses and where its sources live."""

    name: DatasetName = Field("toy-color", description="Dataset identifier.")
    n: int = Field(10000, ge=2, description="Training examples to generate (toy datasets).")
    test_n: int = Field(2000, ge=2, description="Test examples to generate (toy datasets).")
    seed: int = Field(0, description="Seed of the training-set generator and of splits.")
    test_seed: int | None = Field(None, description="Seed of the test-set generator (default: seed + 1).")
    train_fraction: float = Field(2 / 3, gt=0, lt=1, description="Training share for datasets that are split.")
    mnist_dir: Path | None = Field(None, description="Directory holding the four MNIST IDX files.")
    iris_path: Path | None = Field(None, description="UCI iris.data file (bundled copy when unset).")
    cancer_path: Path | None = Field(None, description="UCI wdbc.data file (bundled copy when unset).")
    corpus_dir: Path | None = Field(None, description="20 Newsgroups directory with one subdirectory per class.")
    subsample: int | None = Field(None, ge=1, description="Keep only this many MNIST training rows.")
    strip_headers: bool = Field(True, description="Strip newsgroup headers and quoted replies.")

    @property
    def resolved_test_seed(self) -> int:
        return self.seed + 1 if self.test_seed is None else self.test_seed


class ExplainSettings(BaseModel):
    target: ExplanationTarget = Field(ExplanationTarget.SUM_LOGPROB, description="Scalar whose input gradient is explained.")
    class_index: int | None = Field(None, description="Class for the class-prob target.")
    cutoff: float = Field(0.67, gt=0, le=1, description="Mask cutoff c.")
    examples: int = Field(1000, ge=1, description="Test rows to explain.")


class SurrogateSettings(BaseModel):
    scheme: PerturbationScheme = Field(default_factory=PerturbationScheme, description="Neighborhood sampling.")
    k: int = Field(6, ge=1, description="Units kept by the local model.")
    ridge: float = Field(1.0, ge=0, description="Ridge strength of the local fits.")
    instances: int = Field(50, ge=1, description="Test rows explained by the surrogate driver.")
    reseeds: int = Field(20, ge=1, description="Reseeded runs for the stability measurement.")


class SweepSettings(BaseModel):
    lambda1_grid: list[float] = Field(
        default_factory=lambda: [0.0, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6], description="lambda1 values of the lambda sweep."
    )
    trial_epochs: int = Field(8, ge=0, description="Epochs per lambda1 trial when balancing terms.")
    n_grid: list[int] = Field(default_factory=lambda: [25, 50, 100, 250, 1000, 2500, 10000], description="Training sizes of the data-efficiency sweep.")
    mask_variants: list[AnnotationName] = Field(
        default_factory=lambda: ["none", "anti-rule1", "anti-rule2", "pro-rule1", "pro-rule2"], description="Annotations compared by data efficiency."
    )
    annotated_counts: list[int] = Field(
        default_factory=lambda: [0, 50, 100, 500, 1000], description="Annotated row counts of the rule-transition sweep."
    )
    transition_lambda1_grid: list[float] = Field(
        default_factory=lambda: [0.0, 10.0, 100.0, 1e3, 1e4], description="lambda1 values of the rule-transition sweep."
    )
    confound_variants: list[Literal["zero", "full"]] = Field(default_factory=lambda: ["zero", "full"], description="A variants of the confound report.")
    splits: int = Field(50, ge=1, description="Splits or seeds averaged by the confound report.")
    grid_resolution: int = Field(50, ge=2, description="Points per axis of the boundary field.")
    repetitions: int = Field(3, ge=3, description="Benchmark repetitions.")
    bench_instances: int = Field(10, ge=1, description="Instances timed by the benchmark.")
    sample_counts: list[int] = Field(default_factory=lambda: [500, 1000, 2500, 5000], description="Sample counts of the surrogate cost sweep.")

    @model_validator(mode="after")
    def check_increasing(self) -> Self:
        for name in ("lambda1_grid", "n_grid", "transition_lambda1_grid"):
            values = getattr(self, name)
            if any(b <= a for a, b in zip(values, values[1:], strict=False)):
                msg = f"{name} must be strictly increasing, got {values}"
                raise ValueError(msg)
        return self


class ExperimentConfig(BaseModel):
    """The resolved configuration of one driver run."""

    experiment: str = Field("train", description="Subcommand being run.")
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    training: RrrConfig = Field(default_factory=RrrConfig)
    fae: FaeConfig | None = Field(None, description="FAE settings; the dataset's default schedule applies when unset.")
    annotation: AnnotationName = Field("none", description="Annotation matrix used for training.")
    annotated_rows: int | None = Field(None, ge=0, description="Keep annotations on only this many seeded rows.")
    explain: ExplainSettings = Field(default_factory=ExplainSettings)
    surrogate: SurrogateSettings = Field(default_factory=SurrogateSettings)
    sweeps: SweepSettings = Field(default_factory=SweepSettings)
    checkpoint: Path | None = Field(None, description="Trained model to explain instead of training a fresh one.")
    output_dir: Path = Field(Path("runs"), description="Directory receiving artifacts and run metadata.")


def flatten(values: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """{'a': {'b': 1}} -> {'a.b': 1}"""
    flat: dict[str, Any] = {}
    for key, value in values.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def unflatten(values: Mapping[str, Any]) -> dict[str, Any]:
    """{'a.b': 1} -> {'a': {'b': 1}}

    Raises:
        ConfigError: When a key is both a value and a section.
    """
    nested: dict[str, Any] = {}
    for dotted, value in values.items():
        *sections, leaf = dotted.split(".")
        target = nested
        for section in sections:
            target = target.setdefault(section, {})
            if not isinstance(target, dict):
                msg = f"Config key '{dotted}' conflicts with a value set at '{section}'"
                raise ConfigError(msg)
        if isinstance(target.get(leaf), dict):
            msg = f"Config key '{dotted}' conflicts with the section of the same name"
            raise ConfigError(msg)
        target[leaf] = value
    return nested


def load_config_file(path: Path) -> dict[str, Any]:
    """
    Reads a YAML file of dotted keys into a flat mapping.

    Raises:
        ConfigError: If the file is missing, unreadable or not a mapping.
    """
    if not path.is_file():
        msg = f"Config file {path} does not exist"
        raise ConfigError(msg)
    try:
        with path.open() as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        msg = f"Config file {path} is not valid YAML: {e}"
        raise ConfigError(msg) from e
    if not isinstance(data, Mapping):
        msg = f"Config file {path} must hold a mapping of dotted keys"
        raise ConfigError(msg)
    logger.debug(f"Loaded {len(data)} config entries from {path}")
    return flatten(data)


def build_config(file_values: Mapping[str, Any], overrides: Mapping[str, Any]) -> ExperimentConfig:
    """Merges flag overrides over file values (both flat and dotted) and validates the result."""
    merged = {**file_values, **{key: value for key, value in overrides.items() if value is not None}}
    return ExperimentConfig.model_validate(unflatten(merged))

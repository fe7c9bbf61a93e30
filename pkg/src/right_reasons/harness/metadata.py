import platform
from collections.abc import Sequence
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from right_reasons.config.config import ExperimentConfig

METADATA_FORMAT_VERSION = 1
METADATA_FILE = "run-metadata.json"
TRACKED_PACKAGES = ("right-reasons", "numpy", "scikit-learn", "pydantic", "click", "pyyaml")


class RunMetadata(BaseModel):
    """Everything needed to re-run a driver and identify what it wrote."""

    format_version: int = METADATA_FORMAT_VERSION
    subcommand: str
    argv: list[str] = Field(default_factory=list, description="Command-line arguments after the program name.")
    config: dict[str, Any] = Field(..., description="The fully resolved experiment configuration.")
    seeds: dict[str, int | None] = Field(default_factory=dict)
    versions: dict[str, str] = Field(default_factory=dict, description="Python and package versions.")
    files: list[str] = Field(default_factory=list, description="Artifacts written, relative to the output directory.")
    metrics: dict[str, Any] = Field(default_factory=dict, description="Headline numbers of the run.")


def package_versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for package in TRACKED_PACKAGES:
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def write_run_metadata(
    config: ExperimentConfig, argv: Sequence[str], files: Sequence[Path], metrics: dict[str, Any]
) -> Path:
    metadata = RunMetadata(
        subcommand=config.experiment,
        argv=list(argv),
        config=config.model_dump(mode="json"),
        seeds={
            "dataset": config.dataset.seed,
            "test_dataset": config.dataset.resolved_test_seed,
            "training": config.training.seed,
        },
        versions=package_versions(),
        files=sorted(str(path.relative_to(config.output_dir)) for path in files),
        metrics=metrics,
    )
    path = config.output_dir / METADATA_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(metadata.model_dump_json(indent=2))
    return path

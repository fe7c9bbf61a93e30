"""
Neighborhood sampling for local surrogate explanations.

An instance is split into interpretable units (single features, or square pixel blocks
for images). Each sample switches off a random subset of units by overwriting their
columns with the baseline value; the number switched off is uniform in 1..m.
"""

import math
from typing import Literal, Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from right_reasons.datasets.schema import GridKind
from right_reasons.errors.surrogate import PerturbationSchemeError

DEFAULT_NUM_SAMPLES = 5000
DEFAULT_BLOCK_SIZE = 4
KERNEL_WIDTH_FACTOR = 0.75


class PerturbationScheme(BaseModel):
    kind: Literal["feature-mask", "block-mask"] = Field("feature-mask", description="Which interpretable units are switched off.")
    num_samples: int = Field(DEFAULT_NUM_SAMPLES, ge=1, description="Samples drawn, including the unperturbed instance.")
    kernel_width: float | None = Field(None, gt=0, description="Proximity kernel width (default 0.75 * sqrt(m)).")
    block_size: int = Field(DEFAULT_BLOCK_SIZE, ge=1, description="Side of the square pixel blocks for block-mask.")
    grid: GridKind | None = Field(None, description="Image layout, required for block-mask.")
    units: Literal["all", "nonzero"] = Field("all", description="'nonzero' only perturbs units with a nonzero value, as for text.")
    baseline: float = Field(0.0, description="Value written into switched-off columns.")

    @model_validator(mode="after")
    def check_grid(self) -> Self:
        if self.kind == "block-mask" and self.grid is None:
            msg = "block-mask perturbation needs the image grid"
            raise ValueError(msg)
        return self

    def width_for(self, num_units: int) -> float:
        return self.kernel_width if self.kernel_width is not None else KERNEL_WIDTH_FACTOR * math.sqrt(num_units)


class Perturbation(BaseModel):
    """Perturbed samples with their presence codes and proximity weights."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray = Field(..., description="S x D model inputs; row 0 is the original instance.")
    codes: np.ndarray = Field(..., description="S x m presence codes, 1 where the unit is kept.")
    weights: np.ndarray = Field(..., description="exp(-d^2 / width^2) with d the number of switched-off units.")
    units: list[list[int]] = Field(..., description="Input columns belonging to each interpretable unit.")


def interpretable_units(x: np.ndarray, scheme: PerturbationScheme) -> list[list[int]]:
    """
    Column groups that are switched on and off together.

    Raises:
        PerturbationSchemeError: If the grid does not describe x or no unit remains.
    """
    if scheme.kind == "feature-mask":
        units = [[column] for column in range(x.size)]
    else:
        grid = scheme.grid
        if grid is None or grid.size != x.size:
            msg = f"Grid {grid} does not describe an instance with {x.size} columns"
            raise PerturbationSchemeError(msg)
        columns = np.arange(x.size).reshape(grid.height, grid.width, grid.channels)
        step = scheme.block_size
        units = [
            columns[top : top + step, left : left + step].ravel().tolist()
            for top in range(0, grid.height, step)
            for left in range(0, grid.width, step)
        ]
    if scheme.units == "nonzero":
        units = [unit for unit in units if np.any(x[unit] != 0)]
    if not units:
        msg = "The instance has no interpretable units to perturb"
        raise PerturbationSchemeError(msg)
    return units


def sample_codes(num_samples: int, num_units: int, rng: np.random.Generator) -> np.ndarray:
    """Presence codes with 1..m units switched off per row; row 0 keeps everything."""
    positions = rng.permuted(np.tile(np.arange(num_units), (num_samples, 1)), axis=1)
    disabled = rng.integers(1, num_units + 1, size=(num_samples, 1))
    codes = (positions >= disabled).astype(np.float64)
    codes[0] = 1.0
    return codes


def perturb(x: npt.ArrayLike, scheme: PerturbationScheme, seed: int) -> Perturbation:
    x = np.asarray(x, dtype=np.float64).ravel()
    units = interpretable_units(x, scheme)
    codes = sample_codes(scheme.num_samples, len(units), np.random.default_rng(seed))

    owner = np.full(x.size, -1)
    for index, unit in enumerate(units):
        owner[unit] = index
    covered = owner >= 0
    samples = np.tile(x, (scheme.num_samples, 1))
    switched_off = np.zeros(samples.shape, dtype=bool)
    switched_off[:, covered] = codes[:, owner[covered]] == 0
    samples[switched_off] = scheme.baseline

    distance = len(units) - codes.sum(axis=1)
    weights = np.exp(-(distance**2) / scheme.width_for(len(units)) ** 2)
    return Perturbation(samples=samples, codes=codes, weights=weights, units=units)

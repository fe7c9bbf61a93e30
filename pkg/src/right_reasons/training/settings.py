from pydantic import BaseModel, Field

from right_reasons.model.mlp import DEFAULT_HIDDEN_SIZES


class AdamSettings(BaseModel):
    """Step size and moment decay rates for Adam."""

    learning_rate: float = Field(1e-3, gt=0, description="Adam step size.")
    beta1: float = Field(0.9, gt=0, lt=1, description="Decay rate of the first-moment estimate.")
    beta2: float = Field(0.999, gt=0, lt=1, description="Decay rate of the second-moment estimate.")
    epsilon: float = Field(1e-8, gt=0, description="Denominator offset.")


class RrrConfig(BaseModel):
    """Everything needed to train one model with the right-reasons loss."""

    lambda1: float = Field(1000.0, ge=0, description="Weight of the squared masked input-gradient penalty.")
    lambda2: float = Field(1e-4, ge=0, description="Weight of the squared parameter norm.")
    batch_size: int = Field(256, ge=1, description="Rows per Adam minibatch (before pinned rows are added).")
    epochs: int = Field(64, ge=0, description="Maximum number of passes over the training set.")
    adam: AdamSettings = Field(default_factory=AdamSettings, description="Optimizer settings.")
    seed: int = Field(0, description="Seeds parameter initialization and minibatch shuffling.")
    pin_annotated: bool = Field(False, description="Add every row with a nonzero annotation to every minibatch.")
    hidden_sizes: list[int] = Field(default_factory=lambda: list(DEFAULT_HIDDEN_SIZES), description="Hidden layer widths.")
    early_stop_patience: int = Field(
        5, ge=0, description="Stop when accuracy and total loss move less than the tolerance over this many epochs (0 disables)."
    )
    early_stop_tolerance: float = Field(1e-4, ge=0, description="Change threshold used by the early-stop rule.")

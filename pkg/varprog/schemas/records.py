from pydantic import BaseModel, Field


class ElboEstimate(BaseModel):
    mean: float
    stderr: float
    n_samples: int = Field(..., ge=1)
    single_sample: bool = Field(
        False, description="Set when n_samples == 1 and stderr is undefined"
    )


class IterationRecord(BaseModel):
    iteration: int = Field(..., ge=0)
    cumulative_samples: int = Field(..., ge=0)
    elbo_mean: float
    elbo_stderr: float
    direction_norm: float = Field(
        ..., description="Norm of the estimated direction before normalization"
    )
    wallclock_s: float = 0.0
    halted: bool = Field(False, description="Set on the iteration whose direction was unusable")

    def csv_row(self) -> list[str]:
        return [
            str(self.iteration),
            str(self.cumulative_samples),
            format(self.elbo_mean, ".17g"),
            format(self.elbo_stderr, ".17g"),
            format(self.direction_norm, ".17g"),
            format(self.wallclock_s, ".17g"),
        ]

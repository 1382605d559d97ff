from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt


class Algorithm(str, Enum):
    sgd = "sgd"
    sgd_baseline = "sgd-baseline"
    enac = "enac"
    sogd = "sogd"


class OuterLoop(str, Enum):
    steepest = "steepest"
    cg = "cg"


class BaselineMode(str, Enum):
    component = "component"
    scalar = "scalar"


class ModelName(str, Enum):
    qmr = "qmr"
    lda = "lda"
    fig1 = "fig1"
    two_coin = "two-coin"
    gaussian_pair = "gaussian-pair"


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    algorithm: Algorithm = Algorithm.enac
    outer: OuterLoop = OuterLoop.steepest
    stepsize: float = Field(0.05, gt=0.0)
    rollouts: int = Field(10, ge=1)
    iterations: int = Field(500, ge=0)
    elbo_eval_samples: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    ridge: float = Field(1e-3, ge=0.0)
    restart_period: int = Field(20, ge=1)
    baseline_mode: BaselineMode = BaselineMode.component
    record_wallclock: bool = False


class RunSpec(BaseModel):
    """Fully resolved CLI invocation; written verbatim to the run manifest."""

    model: ModelName
    model_file: str | None = None
    data_seed: int = Field(0, ge=0)
    algorithms: list[Algorithm] = Field(
        default_factory=lambda: [Algorithm.sgd, Algorithm.enac, Algorithm.sogd], min_length=1
    )
    outer: OuterLoop = OuterLoop.steepest
    stepsize: float = Field(0.05, gt=0.0)
    rollouts: int = Field(10, ge=1)
    iterations: int = Field(500, ge=0)
    seeds: list[NonNegativeInt] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: str = "runs"
    ridge: float = Field(1e-3, ge=0.0)
    elbo_eval_samples: int = Field(100, ge=1)
    restart_period: int = Field(20, ge=1)
    baseline_mode: BaselineMode = BaselineMode.component
    marginals: int = Field(0, ge=0)
    resume: str | None = None
    record_wallclock: bool = False
    jobs: int = Field(1, ge=1)

    def optimizer_config(self, algorithm: Algorithm, seed: int) -> OptimizerConfig:
        return OptimizerConfig(
            algorithm=algorithm,
            outer=self.outer,
            stepsize=self.stepsize,
            rollouts=self.rollouts,
            iterations=self.iterations,
            elbo_eval_samples=self.elbo_eval_samples,
            seed=seed,
            ridge=self.ridge,
            restart_period=self.restart_period,
            baseline_mode=self.baseline_mode,
            record_wallclock=self.record_wallclock,
        )

    def run_name(self, algorithm: Algorithm, seed: int) -> str:
        return f"{self.model.value}_{algorithm.value}_{self.outer.value}_seed{seed}"

"""
Pydantic models for experiment configurations, run summaries and estimates.
"""
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.config import app_config, app_settings


class ExperimentKind(str, Enum):
    GAUSSIAN_MOMENTS = "gaussian_moments"
    DIMENSION_SWEEP = "dimension_sweep"
    GLOBAL_VS_LOCAL = "global_vs_local"
    REFRESH_COMPARISON = "refresh_comparison"
    POISSON_GMRF = "poisson_gmrf"
    LOGISTIC_BENCH = "logistic_bench"
    REDUCIBILITY = "reducibility"
    RADIAL_INVARIANCE = "radial_invariance"


class ModelName(str, Enum):
    ISOTROPIC_GAUSSIAN = "isotropic_gaussian"
    CHAIN_GMRF = "chain_gmrf"
    GRID_POISSON = "grid_poisson"
    LOGISTIC = "logistic"


class Implementation(str, Enum):
    GLOBAL = "global"
    QUEUE = "queue"
    THINNING = "thinning"


class SchemeName(str, Enum):
    GLOBAL_GAUSSIAN = "global_gaussian"
    RESTRICTED_SPHERE = "restricted_sphere"
    RESTRICTED_PARTIAL = "restricted_partial"
    LOCAL = "local"


class PathEstimate(BaseModel):
    """Time average of a path functional with its batch-means standard error."""
    value: float = Field(..., description="Path-integral estimate")
    horizon: float = Field(..., gt=0, description="Trajectory length T")
    standard_error: float = Field(..., ge=0, description="Batch-means standard error")


class ModelConfig(BaseModel):
    """Target model parameters."""
    model_config = ConfigDict(use_enum_values=False)

    name: ModelName = Field(ModelName.ISOTROPIC_GAUSSIAN, description="Target family")
    dimension: Optional[int] = Field(None, ge=1, description="Dimension d")
    precision: float = Field(2.0, gt=0, description="Isotropic Gaussian precision; 2 gives U = |x|^2")
    rho: Optional[float] = Field(None, gt=0, lt=1, description="Chain / grid pairwise precision")
    side: Optional[int] = Field(None, ge=2, description="Grid side length")
    num_data: Optional[int] = Field(None, ge=1, description="Number of logistic data")
    prior_variance: float = Field(1.0, gt=0, description="Logistic prior variance")
    data_path: Optional[str] = Field(None, description="Delimiter-separated logistic dataset")


class SamplerConfig(BaseModel):
    """Sampler parameters."""
    refresh_rate: float = Field(..., ge=0, description="Refreshment rate lambda_ref")
    scheme: SchemeName = Field(SchemeName.GLOBAL_GAUSSIAN, description="Refreshment scheme")
    alpha: Optional[float] = Field(None, gt=0, description="Partial refresh Beta alpha")
    beta: Optional[float] = Field(None, gt=0, description="Partial refresh Beta beta")
    strategy: str = Field("inversion", description="Global bounce-time strategy")
    implementation: Implementation = Field(Implementation.GLOBAL, description="global, queue or thinning")
    window: Optional[float] = Field(None, gt=0, description="Thinning bound window Delta")
    minibatch: int = Field(1, ge=1, description="Factors per thinning candidate")
    uniform_bound: bool = Field(False, description="Use one common bound for all factors")


class ExperimentConfig(BaseModel):
    """
    One experiment. Seed and config fully determine every output byte.
    """
    kind: ExperimentKind = Field(..., description="Experiment kind")
    model: ModelConfig = Field(default_factory=ModelConfig)
    sampler: SamplerConfig
    horizon: Optional[float] = Field(None, gt=0, description="Trajectory length T")
    events: Optional[int] = Field(None, ge=1, description="Event budget")
    replicates: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    output_dir: str = Field(app_config.OUTPUT_DIR, description="Root of the per-run output directories")
    mesh: Optional[float] = Field(None, gt=0, description="Discretization step delta")
    batches: int = Field(app_settings.DEFAULT_BATCH_COUNT, ge=2)
    probes: int = Field(10, ge=1, description="Probe coordinates for variance checks")
    dimensions: List[int] = Field(default_factory=lambda: [2, 4, 8, 16, 32])
    refresh_rates: List[float] = Field(default_factory=lambda: [0.1, 1.0, 10.0])
    schemes: List[SchemeName] = Field(default_factory=lambda: list(SchemeName))
    data_sizes: List[int] = Field(default_factory=lambda: [100, 1000, 10000])
    radial_orders: List[int] = Field(default_factory=lambda: [2, 3, 5])
    samples: int = Field(10000, ge=10, description="Radial invariance sample size")
    dump_events: bool = Field(False, description="Write per-event rows of replicate 0")

    def problems(self) -> List[str]:
        """Cross-field checks that the field types alone cannot express."""
        found = []
        sampler, model = self.sampler, self.model
        if sampler.scheme is SchemeName.RESTRICTED_PARTIAL and (sampler.alpha is None or sampler.beta is None):
            found.append("sampler: restricted_partial refreshment requires alpha and beta")
        needs_window = sampler.implementation is Implementation.THINNING or (
            sampler.implementation is Implementation.GLOBAL and sampler.strategy == "thinning"
        )
        if needs_window and sampler.window is None:
            found.append("sampler: thinning requires a window")
        if sampler.minibatch > 1 and not sampler.uniform_bound:
            found.append(
                "sampler: minibatch > 1 with heterogeneous bounds, the minibatch acceptance "
                "rule requires one common bound for all factors (set uniform_bound)"
            )
        if sampler.minibatch > 1 and sampler.implementation is not Implementation.THINNING:
            found.append("sampler: minibatches are only defined for the thinning implementation")
        if sampler.strategy not in ("inversion", "convex", "thinning"):
            found.append(f"sampler: unknown strategy {sampler.strategy!r}")
        if sampler.implementation is Implementation.GLOBAL:
            if self.kind is ExperimentKind.REFRESH_COMPARISON:
                if SchemeName.LOCAL in self.schemes:
                    found.append("schemes: local refreshment needs a local implementation (queue or thinning)")
            elif sampler.scheme is SchemeName.LOCAL:
                found.append("sampler: local refreshment needs a local implementation (queue or thinning)")
        if self.horizon is None and self.events is None and self.kind not in (
                ExperimentKind.RADIAL_INVARIANCE, ExperimentKind.REDUCIBILITY):
            found.append("horizon: either horizon or events must be given")
        finite_horizon_kinds = (ExperimentKind.GLOBAL_VS_LOCAL, ExperimentKind.REFRESH_COMPARISON,
                                ExperimentKind.POISSON_GMRF, ExperimentKind.LOGISTIC_BENCH)
        if self.kind in finite_horizon_kinds and self.horizon is None:
            found.append(f"horizon: {self.kind.value} runs local samplers, which need a finite horizon")

        factor_graph_kinds = (ExperimentKind.GLOBAL_VS_LOCAL, ExperimentKind.REFRESH_COMPARISON)
        if self.kind in factor_graph_kinds and model.name is not ModelName.CHAIN_GMRF:
            found.append(f"model: {self.kind.value} runs on a chain_gmrf model")
        if self.kind is ExperimentKind.POISSON_GMRF and model.name is not ModelName.GRID_POISSON:
            found.append("model: poisson_gmrf runs on a grid_poisson model")
        if self.kind is ExperimentKind.LOGISTIC_BENCH and model.name is not ModelName.LOGISTIC:
            found.append("model: logistic_bench runs on a logistic model")
        if model.name is ModelName.CHAIN_GMRF and (model.dimension is None or model.rho is None):
            found.append("model: chain_gmrf requires dimension and rho")
        if model.name is ModelName.CHAIN_GMRF and model.dimension is not None and model.dimension < 2:
            found.append("model: chain_gmrf requires dimension >= 2")
        if model.name is ModelName.GRID_POISSON and model.side is None:
            found.append("model: grid_poisson requires side")
        if model.name is ModelName.LOGISTIC and sampler.window is None:
            found.append("sampler: the logistic sampler requires a window")
        if self.kind is ExperimentKind.GAUSSIAN_MOMENTS and model.name is ModelName.ISOTROPIC_GAUSSIAN \
                and model.dimension is None:
            found.append("model: isotropic_gaussian requires dimension")
        if self.kind is ExperimentKind.DIMENSION_SWEEP and (len(self.dimensions) < 2 or min(self.dimensions) < 1):
            found.append("dimensions: the sweep needs at least two positive dimensions")
        if self.kind is ExperimentKind.RADIAL_INVARIANCE and any(k < 2 for k in self.radial_orders):
            found.append("radial_orders: invariant family orders must be >= 2")
        return found

    @model_validator(mode="after")
    def _cross_field(self) -> "ExperimentConfig":
        found = self.problems()
        if found:
            raise ValueError("; ".join(found))
        return self


class ReplicateResult(BaseModel):
    """Outcome of one replicate; tallies sum to ``total_events``."""
    replicate: int
    sampler: str = Field("", description="Sampler label within the experiment")
    estimates: Dict[str, float] = Field(default_factory=dict)
    standard_errors: Dict[str, float] = Field(default_factory=dict)
    ess: Dict[str, float] = Field(default_factory=dict)
    bounces: int = 0
    refreshes: int = 0
    rejections: int = 0
    windows: int = 0
    total_events: int = 0
    truncated: bool = False
    error: Optional[str] = None
    wall_seconds: float = Field(0.0, exclude=True, description="Not serialized: outputs stay byte-stable")

    @model_validator(mode="after")
    def _tallies_add_up(self) -> "ReplicateResult":
        tallied = self.bounces + self.refreshes + self.rejections + self.windows
        if tallied != self.total_events:
            raise ValueError(f"event tallies sum to {tallied}, total_events is {self.total_events}")
        return self


class RunSummary(BaseModel):
    """Summary of one experiment run."""
    kind: ExperimentKind
    seed: int
    replicates: List[ReplicateResult] = Field(default_factory=list)
    oracle: Dict[str, Any] = Field(default_factory=dict, description="Reference values computed by the runner")
    metrics: Dict[str, Any] = Field(default_factory=dict, description="Experiment-level results")
    failed_replicates: int = 0

    def record(self, result: ReplicateResult) -> None:
        self.replicates.append(result)
        if result.error is not None:
            self.failed_replicates += 1

"""Two-stage controller for auxiliary-task selection in multi-task training.

Stage 1 ranks candidate auxiliary tasks with a non-stationary
Beta-Bernoulli bandit driven by Thompson sampling; stage 2 tunes the
integer mixing ratio over the surviving tasks with Gaussian-process
optimization under a portfolio of acquisition functions.
"""

from __future__ import annotations

from .bandit import (
    BanditConfig,
    BetaArm,
    TaskSelection,
    beta_pdf,
    compute_reward,
    expected_utility,
    initial_arms,
    run_stage1,
    sample_utilities,
    select_arm,
    select_tasks,
    update_posterior,
    utility_density_table,
)
from .gp import GpModel, KernelParams, Posterior, build_gp, fit, matern_kernel, posterior_at
from .acquisition import (
    ACQUISITIONS,
    HedgeState,
    expected_improvement,
    hedge_probabilities,
    hedge_select,
    hedge_update,
    probability_of_improvement,
    upper_confidence_bound,
)
from .mixing import (
    EvaluationRecord,
    MixingRatio,
    Stage2Config,
    decode,
    encode,
    propose_next,
    ratio_cycle,
    run_stage2,
)
from .environments import PlantedBanditEnv, SharedParamMtlEnv, make_environment
from .pipeline import PipelineConfig, PipelineReport, run_pipeline, write_outputs
from .runlog import RunAborted, RunLog, canonical_dumps, derive_seed

__version__ = "0.1.0"

__all__ = [
    "ACQUISITIONS",
    "BanditConfig",
    "BetaArm",
    "EvaluationRecord",
    "GpModel",
    "HedgeState",
    "KernelParams",
    "MixingRatio",
    "PipelineConfig",
    "PipelineReport",
    "PlantedBanditEnv",
    "Posterior",
    "RunAborted",
    "RunLog",
    "SharedParamMtlEnv",
    "Stage2Config",
    "TaskSelection",
    "beta_pdf",
    "build_gp",
    "canonical_dumps",
    "compute_reward",
    "decode",
    "derive_seed",
    "encode",
    "expected_improvement",
    "expected_utility",
    "fit",
    "hedge_probabilities",
    "hedge_select",
    "hedge_update",
    "initial_arms",
    "make_environment",
    "matern_kernel",
    "posterior_at",
    "probability_of_improvement",
    "propose_next",
    "ratio_cycle",
    "run_pipeline",
    "run_stage1",
    "run_stage2",
    "sample_utilities",
    "select_arm",
    "select_tasks",
    "update_posterior",
    "upper_confidence_bound",
    "utility_density_table",
    "write_outputs",
]

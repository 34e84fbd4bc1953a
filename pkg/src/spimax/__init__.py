"""Simultaneous prediction intervals and max-type tests for mixed parameters
in block-diagonal linear mixed models."""

from .model import (
    FHM,
    NERM,
    VAR_FLOOR,
    BlockLmmData,
    ClusterBlock,
    MixedParameterSpec,
    VarianceComponents,
    cluster_mean_spec,
    eval_mixed_parameters,
    validate,
)
from .estimation import (
    FitResult,
    batch_eblup,
    cholesky_residuals,
    eb_random_effects,
    eblup,
    fit_gls_blup,
    g1,
    g1_general,
    g2,
    reml_fit,
    restricted_loglik,
)
from .maxstat import (
    SCALE_FLOOR,
    ContrastTest,
    CriticalValue,
    SimultaneousIntervals,
    build_spi,
    covers_all,
    max_abs_stat,
    single_step_test,
    step_down_test,
)
from .bootstrap import (
    BootstrapDraws,
    beran_critical_values,
    critical_value_bs,
    critical_value_contrast,
    parametric_bootstrap,
    stepdown_quantile_provider,
)
from .mc import (
    JointNormalModel,
    assemble_precision,
    build_joint_normal,
    critical_value_mc,
    loading_matrix,
)
from .analytic import (
    RidgeWeights,
    TubeConstants,
    bonferroni_cv,
    ridge_interval_scales,
    ridge_weights,
    tube_alpha_bound,
    tube_cv,
)
from .simulate import (
    ExperimentResult,
    ScenarioConfig,
    generate_scenario,
    run_fwer_experiment,
    run_power_experiment,
    run_spi_experiment,
)
from .cli import (
    export_area_csv,
    export_unit_csv,
    ingest_area_csv,
    ingest_unit_csv,
    log_shift_transform,
    replace_response,
    run_cli,
)
from . import errors

__version__ = "0.1.0"

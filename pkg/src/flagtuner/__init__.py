"""Black-box autotuning of runtime flag spaces.

Workflow: characterize the target with batch-mode active learning
(:mod:`~flagtuner.active_learning`), keep the flags that matter via lasso
(:mod:`~flagtuner.featsel`), then tune that subspace with Bayesian
optimization or simulated annealing (:mod:`~flagtuner.tuners`).  The
:mod:`~flagtuner.pipeline` module wires the phases together behind the
``flagtuner`` command-line tool.
"""

from .active_learning import (
    AlBudget,
    AlReport,
    AlResult,
    AlState,
    expected_model_change,
    run_al_loop,
    select_batch,
)
from .executor import (
    CommandExecutor,
    HeapSample,
    TargetNotFoundError,
    TargetSpec,
    TrialExecutor,
    TrialLog,
    TrialRecord,
    VirtualExecutor,
    VirtualTarget,
    aggregate_heap,
    heap_usage,
    parse_jstat_stream,
    run_trial,
    synthetic_eval,
)
from .featsel import (
    FlagSubset,
    LassoFit,
    fit_lasso,
    grid_search_lambda,
    lambda_max,
    select_flags,
)
from .flagspace import (
    BOOLEAN,
    CATEGORICAL,
    CONTINUOUS,
    INTEGER,
    Configuration,
    FlagSpace,
    FlagSpec,
    format_flag_dump,
    load_flag_file,
    parse_flag_dump,
    save_flag_file,
    unit_space,
)
from .linreg import (
    FeatureMap,
    LinearModel,
    ModelEnsemble,
    SgdHyper,
    bootstrap_ensemble,
    fit_sgd,
    load_model,
    poly_features,
    save_model,
)
from .surrogate import (
    MATERN52,
    SQEXP,
    Acquisition,
    GpFitError,
    GpSurrogate,
    expected_improvement,
    gp_fit,
    lhs,
    maximize_acquisition,
    sobol,
)
from .tuners import (
    ALGORITHMS,
    TrajectoryPoint,
    TuneTask,
    TuningReport,
    tune_bo,
    tune_bo_warm,
    tune_rbo,
    tune_sa,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

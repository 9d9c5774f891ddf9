"""fbmlab: fractional Brownian motion simulation, discretisation errors of
pathwise integrals with bounded-variation integrands, and local times."""

__version__ = "0.1.0"

from .fbm import (  # noqa: F401
    EmbeddingError,
    FbmPath,
    GridSpec,
    HurstIndex,
    fbm_covariance,
    fgn_autocovariance,
    sample_exact,
    sample_fft,
)
from .integrals import SignedMeasure, indicator_measure, sign_change_error  # noqa: F401
from .localtime import (  # noqa: F401
    binning_estimator,
    moment_oracle,
    sign_change_estimator,
)
from .harness import ExperimentPlan, RateReport, run_rate_experiment  # noqa: F401

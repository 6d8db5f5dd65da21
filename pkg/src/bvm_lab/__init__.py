"""Numerical laboratory for penalized maximum likelihood and Gaussian
posterior approximation.

The package fits penalized estimators for a few concrete model families,
computes the finite-sample quantities that control how close the penalized
fit and its posterior are to a Gaussian limit, and runs replicated
experiments that compare every bound against Monte Carlo oracles.  The
``bvm-lab`` script is the front door; the modules underneath are usable as
a library.
"""

__version__ = "0.1.0"

from .harness import (
    EXPERIMENTS,
    ConfigInvalid,
    ExperimentConfig,
    InsufficientData,
    ReportRow,
    RunResult,
    default_config,
    rate_fit,
    run,
)

__all__ = [
    "EXPERIMENTS",
    "ConfigInvalid",
    "ExperimentConfig",
    "InsufficientData",
    "ReportRow",
    "RunResult",
    "__version__",
    "default_config",
    "rate_fit",
    "run",
]

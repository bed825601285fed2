"""SMC² parameter estimation for state-space models.

An outer sequential Monte Carlo sampler over static parameters whose target
evaluations come from an inner common-random-number differentiable particle
filter returning the log-likelihood with its gradient and Hessian, enabling
random-walk, first-order (Langevin) and second-order (Hessian-preconditioned)
proposals with change-of-variables L-kernels.
"""

from .crn import CrnStreams
from .estimator import SMC2
from .pf import LogLikEstimate, run_pf
from .sampler import ProposalConfig, SmcSquaredResult, run_smc2

__version__ = "0.1.0"

__all__ = [
    "SMC2",
    "CrnStreams",
    "LogLikEstimate",
    "ProposalConfig",
    "SmcSquaredResult",
    "run_pf",
    "run_smc2",
    "__version__",
]

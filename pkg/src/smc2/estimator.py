"""Scikit-learn style estimator facade over the SMC² sampler.

``SMC2`` follows the sklearn estimator contract (all constructor arguments
stored verbatim, ``get_params``/``set_params``/``clone`` work, fitted state
in trailing-underscore attributes), so it composes with the wider ecosystem
while the algorithm itself lives in :mod:`smc2.sampler` and :mod:`smc2.pf`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .crn import CrnStreams
from .models import StateSpaceModel, make_model
from .pf import run_pf
from .sampler import ProposalConfig, run_smc2

__all__ = ["SMC2"]


class SMC2(BaseEstimator):
    """Posterior estimation of state-space model parameters via SMC².

    Parameters
    ----------
    model : str or StateSpaceModel, default="lgss"
        Bundled model name ("lgss", "sir") or a model instance.
    proposal : {"rw", "fo", "so"}, default="rw"
        Random walk, first-order (gradient) or second-order
        (Hessian-preconditioned) leapfrog proposal.
    epsilon : float, default=0.5
        Proposal step size.
    n_state_particles : int, default=500
        Particles in each inner particle filter (N_x).
    n_param_samples : int, default=32
        Parameter samples in the outer sampler (N).
    n_iterations : int, default=15
        Outer iterations including the prior-initialization one (K).
    prior : PriorSpec or None
        Defaults to the model's uniform box prior.
    master_seed : int, default=0
        Keys every random stream; equal seeds give bit-identical fits
        regardless of ``n_jobs``.
    n_jobs : int, default=1
        Worker processes for the per-sample target evaluations.

    Attributes
    ----------
    posterior_mean_ : (d,) recycled posterior mean estimate.
    samples_, sample_weights_ : final weighted population.
    ess_history_ : per-iteration effective sample size.
    fallback_counts_ : per-iteration SO->FO fallback counts.
    result_ : the full :class:`~smc2.sampler.SmcSquaredResult`.

    Examples
    --------
    >>> from smc2 import SMC2
    >>> from smc2.models import make_model
    >>> y = make_model("lgss").make_dataset([0.75, 1.0, 1.0], 100, seed=0).observations
    >>> est = SMC2(proposal="fo", epsilon=0.03, n_state_particles=200,
    ...            n_iterations=5).fit(y)
    >>> est.posterior_mean_.shape
    (3,)
    """

    def __init__(self, model="lgss", proposal="rw", epsilon=0.5,
                 n_state_particles=500, n_param_samples=32, n_iterations=15,
                 prior=None, master_seed=0, n_jobs=1):
        self.model = model
        self.proposal = proposal
        self.epsilon = epsilon
        self.n_state_particles = n_state_particles
        self.n_param_samples = n_param_samples
        self.n_iterations = n_iterations
        self.prior = prior
        self.master_seed = master_seed
        self.n_jobs = n_jobs

    def _build_model(self) -> StateSpaceModel:
        if isinstance(self.model, StateSpaceModel):
            return self.model
        return make_model(self.model)

    def _validate_observations(self, y) -> np.ndarray:
        y = check_array(y, ensure_2d=False, dtype=float)
        if y.ndim == 2 and y.shape[1] == 1:
            y = y[:, 0]
        if y.ndim != 1:
            raise ValueError("expected a 1-d observation sequence")
        if len(y) < 1:
            raise ValueError("observation sequence is empty")
        return y

    def fit(self, y, X=None):
        """Run the sampler on an observation sequence of shape (T,) or (T, 1)."""
        y = self._validate_observations(y)
        model = self._build_model()
        prior = self.prior if self.prior is not None else model.default_prior()
        config = ProposalConfig(self.proposal, float(self.epsilon))
        streams = CrnStreams(self.master_seed)
        result = run_smc2(
            model, y, prior, config,
            n_samples=int(self.n_param_samples),
            n_iterations=int(self.n_iterations),
            n_x=int(self.n_state_particles),
            streams=streams,
            n_jobs=int(self.n_jobs),
        )
        self.model_ = model
        self.prior_ = prior
        self.result_ = result
        self.posterior_mean_ = result.posterior_mean
        self.samples_ = result.population.theta
        self.sample_weights_ = np.exp(result.population.log_v)
        self.ess_history_ = list(result.ess_history)
        self.fallback_counts_ = list(result.fallback_counts)
        self.n_parameters_ = prior.dim
        return self

    def score(self, y, X=None) -> float:
        """PF log-likelihood of a sequence at the fitted posterior mean."""
        check_is_fitted(self, "posterior_mean_")
        y = self._validate_observations(y)
        streams = CrnStreams((int(self.master_seed), 1))
        est = run_pf(
            self.model_, self.posterior_mean_, y, streams,
            sample_id=0, n_x=int(self.n_state_particles), order=0,
        )
        return est.loglik

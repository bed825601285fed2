"""SMC sampler over static parameters with PF-estimated targets (SMC²).

N parameter samples are drawn from the prior and then moved K-1 times by a
random-walk (RW), first-order Langevin (FO), or Hessian-preconditioned
second-order (SO) proposal written in leapfrog form.  Every move is kept;
quality is controlled by the importance weight

    log v ← log v + [log π(θ_new) − log π(θ_old)] + [log L − log q]

where the L-kernel density comes from the change of variables through the
reversible leapfrog map: the forward density is the momentum density times
the inverse Jacobian |dθ_new/dp|⁻¹ (ε^d for FO, ε^d det H for SO, both
evaluated with the pre-move curvature) and the L-kernel evaluates the
negated outgoing momentum under the same construction.  RW is the symmetric
special case with log L − log q = 0 exactly.

log π(θ) = log prior + PF log-likelihood; the PF also supplies the gradient
G = ∇log π and negative Hessian −∇²log π at the evaluation order each
proposal needs (RW 0, FO 1, SO 2) in the same pass that prices the target.
When the negative Hessian fails the positive-definiteness test the SO move
falls back to FO (same step size) and the sample is flagged.

Population resampling is systematic at ESS < N/2; resampled samples copy the
parent's cached target value, gradient and Hessian (θ is unchanged).
Posterior estimates recycle every iteration's weighted population, weighted
by per-iteration ESS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from joblib import Parallel, delayed

from . import linalg
from .crn import CrnStreams
from .pf import DegenerateCloud, run_pf, normalize_log_weights, \
    effective_sample_size, systematic_resample_indices

__all__ = [
    "PF_ORDER",
    "ProposalConfig",
    "TargetValue",
    "Population",
    "Snapshot",
    "SmcSquaredResult",
    "DegeneratePopulation",
    "propose_rw",
    "propose_fo",
    "propose_so",
    "leapfrog_position",
    "init_population",
    "step",
    "recycled_estimate",
    "run_smc2",
]

PF_ORDER = {"rw": 0, "fo": 1, "so": 2}


class DegeneratePopulation(RuntimeError):
    """Every sample in the population has zero weight."""


@dataclass(frozen=True)
class ProposalConfig:
    kind: str        # "rw" | "fo" | "so"
    epsilon: float

    def __post_init__(self):
        if self.kind not in PF_ORDER:
            raise ValueError(f"unknown proposal kind {self.kind!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def pf_order(self) -> int:
        return PF_ORDER[self.kind]


@dataclass
class TargetValue:
    """Cached log π(θ) with its gradient and negative Hessian."""

    log_target: float
    grad: np.ndarray | None = None
    neg_hess: np.ndarray | None = None

    @property
    def alive(self) -> bool:
        return math.isfinite(self.log_target)


@dataclass
class Population:
    """Weighted parameter samples after iteration ``iteration``."""

    theta: np.ndarray                # (N, d)
    log_target: np.ndarray           # (N,)
    log_v: np.ndarray                # (N,), normalized log-weights
    grad: np.ndarray | None          # (N, d) for fo/so
    neg_hess: np.ndarray | None      # (N, d, d) for so
    iteration: int

    @property
    def n_samples(self) -> int:
        return self.theta.shape[0]


@dataclass
class Snapshot:
    """Pre-resampling (θ, weights, ESS) record of one iteration."""

    theta: np.ndarray
    weights: np.ndarray
    ess: float


@dataclass
class SmcSquaredResult:
    posterior_mean: np.ndarray
    population: Population
    snapshots: list
    ess_history: list
    fallback_counts: list = field(default_factory=list)
    resample_iterations: list = field(default_factory=list)

    @property
    def total_fallbacks(self) -> int:
        return int(sum(self.fallback_counts))


# -- target evaluation -------------------------------------------------------


def evaluate_target(model, prior, observations, streams, n_x, order,
                    sample_id, theta) -> TargetValue:
    """log π = log prior + PF log-likelihood, with PF grad / neg-Hessian.

    The uniform prior contributes zero gradient and Hessian inside its box;
    outside (or on a degenerate PF) the sample is dead: -inf target.
    """
    theta = np.asarray(theta, dtype=float)
    if not prior.contains(theta):
        return TargetValue(-np.inf)
    est = run_pf(model, theta, observations, streams, sample_id, n_x, order)
    if not est.alive:
        return TargetValue(-np.inf)
    return TargetValue(prior.logpdf(theta) + est.loglik, est.grad, est.neg_hess)


# -- proposals ---------------------------------------------------------------


def leapfrog_position(theta, grad, momentum, epsilon, precond=None):
    """θ_new of one leapfrog step; the map the CoV Jacobian refers to.

    With the gradient held fixed this is affine in the momentum, with
    Jacobian εI (or εH when preconditioned).
    """
    theta = np.asarray(theta, dtype=float)
    p_half = 0.5 * epsilon * np.asarray(grad, dtype=float) + np.asarray(momentum, dtype=float)
    if precond is None:
        return theta + epsilon * p_half, p_half
    return theta + epsilon * (precond @ p_half), p_half


def propose_rw(theta, epsilon, noise):
    """Symmetric Gaussian move; log_L - log_q == 0 exactly."""
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[0]
    theta_new = theta + epsilon * np.asarray(noise, dtype=float)
    cov = (epsilon * epsilon) * np.eye(d)
    log_q = linalg.mvn_logpdf(theta_new, theta, cov)
    log_l = linalg.mvn_logpdf(theta, theta_new, cov)
    return theta_new, log_q, log_l


def propose_fo(theta, grad, epsilon, noise, evaluate):
    """First-order (MALA-style) leapfrog move with CoV densities.

    ``evaluate`` prices the target at θ_new and returns the TargetValue whose
    gradient closes the trajectory; the forward/reverse Jacobian is ε^d.
    Returns (theta_new, target_new, log_q, log_l).
    """
    d = np.asarray(theta).shape[0]
    momentum = np.asarray(noise, dtype=float)
    theta_new, p_half = leapfrog_position(theta, grad, momentum, epsilon)
    target_new = evaluate(theta_new)
    if not target_new.alive:
        return theta_new, target_new, 0.0, 0.0
    p_out = 0.5 * epsilon * target_new.grad + p_half
    eye = np.eye(d)
    log_jac = d * math.log(epsilon)
    log_q = linalg.mvn_logpdf(momentum, np.zeros(d), eye) - log_jac
    log_l = linalg.mvn_logpdf(-p_out, np.zeros(d), eye) - log_jac
    return theta_new, target_new, log_q, log_l


def propose_so(theta, grad, neg_hess, epsilon, noise, evaluate):
    """Second-order move preconditioned by H = (−∇²log π)⁻¹.

    Momentum is drawn as chol(−∇²log π)·noise ~ N(0, H⁻¹); position update
    θ_new = θ + εH p_half; forward and reverse densities both use the
    pre-move curvature, with Jacobian |εH|.  A non-positive-definite
    curvature estimate falls back to the FO move at the same step size.
    Returns (theta_new, target_new, log_q, log_l, fallback_used).
    """
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[0]
    try:
        lower = linalg.cholesky(neg_hess)
    except linalg.NotPositiveDefinite:
        theta_new, target_new, log_q, log_l = propose_fo(
            theta, grad, epsilon, noise, evaluate
        )
        return theta_new, target_new, log_q, log_l, True

    momentum = linalg.mvn_sample(np.zeros(d), lower, noise)
    precond = linalg.inverse_spd(neg_hess)
    theta_new, p_half = leapfrog_position(theta, grad, momentum, epsilon, precond)
    target_new = evaluate(theta_new)
    if not target_new.alive:
        return theta_new, target_new, 0.0, 0.0, False
    p_out = 0.5 * epsilon * target_new.grad + p_half
    # |dθ_new/dp| = ε^d det H = ε^d / det(−∇²logπ)
    log_jac = d * math.log(epsilon) - linalg.log_det_spd(neg_hess)
    log_q = linalg.mvn_logpdf(momentum, np.zeros(d), neg_hess) - log_jac
    log_l = linalg.mvn_logpdf(-p_out, np.zeros(d), neg_hess) - log_jac
    return theta_new, target_new, log_q, log_l, False


# -- population mechanics ----------------------------------------------------


def _move_one(model, prior, observations, streams, n_x, config,
              sample_id, theta, log_target_old, grad, neg_hess, noise):
    """Propose, evaluate and weight one sample; pure given its arguments."""
    evaluate = partial(
        evaluate_target, model, prior, observations, streams, n_x,
        config.pf_order, sample_id,
    )
    fallback = False
    if config.kind == "rw":
        theta_new, log_q, log_l = propose_rw(theta, config.epsilon, noise)
        target_new = evaluate(theta_new)
    elif config.kind == "fo":
        theta_new, target_new, log_q, log_l = propose_fo(
            theta, grad, config.epsilon, noise, evaluate
        )
    else:
        theta_new, target_new, log_q, log_l, fallback = propose_so(
            theta, grad, neg_hess, config.epsilon, noise, evaluate
        )
    if target_new.alive:
        dlog_v = (target_new.log_target - log_target_old) + (log_l - log_q)
    else:
        dlog_v = -np.inf
    return theta_new, target_new, dlog_v, fallback


def _map_samples(tasks, n_jobs):
    if n_jobs == 1 or len(tasks) <= 1:
        return [fn(*args) for fn, args in tasks]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*args) for fn, args in tasks)


def _safe_log(weights):
    with np.errstate(divide="ignore"):
        return np.log(weights)


def init_population(model, prior, observations, streams: CrnStreams, n: int,
                    n_x: int, order: int, n_jobs: int = 1) -> tuple:
    """Draw θ_i from the prior; initial weights are the PF log-likelihoods.

    With the initial distribution equal to the prior, the π/q₁ weight of
    each sample reduces to its likelihood estimate.
    Returns (population, snapshot).
    """
    if n < 2:
        raise ValueError("need at least 2 parameter samples")
    d = prior.dim
    thetas = streams.prior_draws(n, prior.lows, prior.highs)
    tasks = [
        (evaluate_target,
         (model, prior, observations, streams, n_x, order, i, thetas[i]))
        for i in range(n)
    ]
    targets = _map_samples(tasks, n_jobs)

    log_target = np.array([t.log_target for t in targets])
    prior_const = prior.logpdf(thetas[0])
    log_v = np.where(np.isfinite(log_target), log_target - prior_const, -np.inf)
    grad = None
    neg_hess = None
    if order >= 1:
        grad = np.vstack(
            [t.grad if t.alive else np.zeros(d) for t in targets]
        )
    if order >= 2:
        neg_hess = np.stack(
            [t.neg_hess if t.alive else np.eye(d) for t in targets]
        )
    weights, _ = normalize_log_weights(log_v)
    pop = Population(
        theta=thetas,
        log_target=log_target,
        log_v=_safe_log(weights),
        grad=grad,
        neg_hess=neg_hess,
        iteration=1,
    )
    snap = Snapshot(thetas.copy(), weights, effective_sample_size(weights))
    return pop, snap


def step(population: Population, model, prior, observations,
         streams: CrnStreams, config: ProposalConfig, n_x: int,
         n_jobs: int = 1) -> tuple:
    """One sampler iteration: move, reweight, snapshot, maybe resample.

    Returns (new_population, snapshot, n_fallbacks, resampled).
    Dead samples (zero weight) are left in place and skipped; resampling
    eventually replaces them.
    """
    n, d = population.theta.shape
    k = population.iteration + 1
    noises = [streams.momentum(k, i, d) for i in range(n)]
    alive = np.isfinite(population.log_v) & np.isfinite(population.log_target)

    tasks = []
    alive_ids = []
    for i in range(n):
        if not alive[i]:
            continue
        alive_ids.append(i)
        tasks.append((
            _move_one,
            (model, prior, observations, streams, n_x, config, i,
             population.theta[i], population.log_target[i],
             None if population.grad is None else population.grad[i],
             None if population.neg_hess is None else population.neg_hess[i],
             noises[i]),
        ))
    moved = _map_samples(tasks, n_jobs)

    theta = population.theta.copy()
    log_target = population.log_target.copy()
    log_v = population.log_v.copy()
    grad = None if population.grad is None else population.grad.copy()
    neg_hess = None if population.neg_hess is None else population.neg_hess.copy()
    n_fallback = 0
    for i, (theta_new, target_new, dlog_v, fallback) in zip(alive_ids, moved):
        theta[i] = theta_new
        log_target[i] = target_new.log_target
        if grad is not None:
            grad[i] = target_new.grad if target_new.alive else 0.0
        if neg_hess is not None:
            neg_hess[i] = target_new.neg_hess if target_new.alive else np.eye(d)
        log_v[i] = log_v[i] + dlog_v
        n_fallback += int(fallback)

    try:
        weights, _ = normalize_log_weights(log_v)
    except DegenerateCloud as exc:
        raise DegeneratePopulation(
            f"population died at iteration {k}"
        ) from exc
    log_v = _safe_log(weights)
    ess = effective_sample_size(weights)
    snap = Snapshot(theta.copy(), weights, ess)

    resampled = False
    if ess < n / 2.0:
        u = streams.population_resample_u(k)
        idx = systematic_resample_indices(weights, n, u)
        theta = theta[idx]
        log_target = log_target[idx]
        if grad is not None:
            grad = grad[idx]
        if neg_hess is not None:
            neg_hess = neg_hess[idx]
        log_v = np.full(n, -math.log(n))
        resampled = True

    new_pop = Population(theta, log_target, log_v, grad, neg_hess, k)
    return new_pop, snap, n_fallback, resampled


def recycled_estimate(snapshots, f=None) -> np.ndarray:
    """Combine all iterations' weighted samples, ESS-weighted.

    E[f(θ)] ≈ Σ_k λ_k Σ_i w̃_{k,i} f(θ_{k,i}) with λ_k ∝ ESS_k, Σλ = 1;
    snapshots are taken before resampling.  Default f is the identity, so
    this returns the recycled posterior mean.
    """
    if not snapshots:
        raise ValueError("no snapshots to recycle")
    ess = np.array([s.ess for s in snapshots])
    lam = ess / ess.sum()
    total = None
    for weight, snap in zip(lam, snapshots):
        values = snap.theta if f is None else f(snap.theta)
        contrib = weight * (snap.weights @ values)
        total = contrib if total is None else total + contrib
    return total


def run_smc2(model, observations, prior, config: ProposalConfig, n_samples: int,
             n_iterations: int, n_x: int, streams: CrnStreams,
             n_jobs: int = 1) -> SmcSquaredResult:
    """Full SMC² run: prior init plus n_iterations - 1 proposal sweeps."""
    if n_iterations < 1:
        raise ValueError("need at least one iteration")
    pop, snap = init_population(
        model, prior, observations, streams, n_samples, n_x,
        config.pf_order, n_jobs,
    )
    snapshots = [snap]
    ess_history = [snap.ess]
    fallback_counts = [0]
    resample_iterations = []
    for _ in range(n_iterations - 1):
        pop, snap, n_fallback, resampled = step(
            pop, model, prior, observations, streams, config, n_x, n_jobs
        )
        snapshots.append(snap)
        ess_history.append(snap.ess)
        fallback_counts.append(n_fallback)
        if resampled:
            resample_iterations.append(pop.iteration)
    return SmcSquaredResult(
        posterior_mean=recycled_estimate(snapshots),
        population=pop,
        snapshots=snapshots,
        ess_history=ess_history,
        fallback_counts=fallback_counts,
        resample_iterations=resample_iterations,
    )

"""State-space model interface and shared model plumbing.

A model provides reparameterized state propagation on :class:`~smc2.jets.Jet`
states (so each particle carries dx/dθ and d²x/dθ² exactly), an incremental
log-weight with first/second derivatives, a uniform box prior, and forward
data simulation.  The particle filter only sees this interface.

The particle-filter state is a tuple of jets, one per state component.
"""

from __future__ import annotations

import csv
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..jets import Jet
from ..linalg import LOG_2PI

__all__ = [
    "PriorSpec",
    "Dataset",
    "StateSpaceModel",
    "gaussian_logpdf_channels",
    "select_state",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class PriorSpec:
    """Independent uniform box prior, one (lower, upper) pair per parameter."""

    lows: tuple
    highs: tuple

    def __post_init__(self):
        if len(self.lows) != len(self.highs):
            raise ValueError("lows/highs length mismatch")
        if not all(lo < hi for lo, hi in zip(self.lows, self.highs)):
            raise ValueError("prior requires lower < upper in every dimension")

    @property
    def dim(self) -> int:
        return len(self.lows)

    def contains(self, theta) -> bool:
        theta = np.asarray(theta)
        return bool(
            np.all(theta > np.asarray(self.lows)) and np.all(theta < np.asarray(self.highs))
        )

    def logpdf(self, theta) -> float:
        """Flat log-density inside the box, -inf outside.

        Gradient and Hessian are identically zero inside the support, so the
        sampler's posterior gradient/Hessian equal the likelihood's.
        """
        if not self.contains(theta):
            return -np.inf
        return -float(np.sum(np.log(np.asarray(self.highs) - np.asarray(self.lows))))


@dataclass
class Dataset:
    """Simulated observation record; regeneration from (seed, truth) is bit-exact."""

    model: str
    observations: np.ndarray
    true_theta: np.ndarray
    seed: int

    @property
    def t_steps(self) -> int:
        return len(self.observations)


class StateSpaceModel(ABC):
    """Interface consumed by the particle filter and the experiment harness."""

    name: str
    theta_names: tuple
    noise_dim: int
    integer_observations: bool = False

    @property
    def dim(self) -> int:
        return len(self.theta_names)

    @abstractmethod
    def default_truth(self) -> np.ndarray:
        """Parameter vector used for data generation unless overridden."""

    @abstractmethod
    def default_prior(self) -> PriorSpec:
        ...

    @abstractmethod
    def prepare(self, theta, order: int):
        """Precompute per-run parameter jets / coefficients for pf_step."""

    @abstractmethod
    def init_state(self, n: int, order: int) -> tuple:
        """Initial particle states with zero parameter derivatives."""

    @abstractmethod
    def propagate(self, ctx, state: tuple, noise) -> tuple:
        """One step of the prior dynamics x_t = f(x_{t-1}, θ) + scale(θ)·noise.

        Deterministic given (ctx, state, noise); jets carry the chain rule
        through both the map and the incoming state derivatives.
        """

    @abstractmethod
    def pf_step(self, ctx, state: tuple, y_t: float, noise) -> tuple:
        """Advance particles one step and return (new_state, log-weight jet)."""

    @abstractmethod
    def simulate(self, true_theta, t_steps: int, rng) -> np.ndarray:
        ...

    def make_dataset(self, true_theta, t_steps: int, seed: int) -> Dataset:
        rng = np.random.default_rng(seed)
        y = self.simulate(np.asarray(true_theta, dtype=float), t_steps, rng)
        return Dataset(self.name, y, np.asarray(true_theta, dtype=float), seed)


def select_state(state: tuple, idx) -> tuple:
    """Resampling gather: children copy the parent's full derivative state."""
    return tuple(jet.take(idx) for jet in state)


def gaussian_logpdf_channels(y: float, h: Jet, r: Jet) -> Jet:
    """log N(y; h(θ), R(θ)) with derivatives assembled through both channels.

    The gradient/Hessian combine the partials of the Gaussian log-density in
    the mean (h) and variance (R) with dh/dθ, d²h/dθ², dR/dθ, d²R/dθ² carried
    by the input jets:

        dL/dθ  = L_h h' + L_R R'
        d²L/dθ² = L_hh h'h'ᵀ + L_hR (h'R'ᵀ + R'h'ᵀ) + L_RR R'R'ᵀ
                  + L_h h'' + L_R R''
    """
    rv = r.v
    resid = y - h.v
    inv_r = 1.0 / rv
    value = -0.5 * (LOG_2PI + np.log(rv)) - 0.5 * resid * resid * inv_r
    if h.g is None or r.g is None:
        return Jet(value)

    l_h = resid * inv_r
    l_r = 0.5 * inv_r * (resid * l_h - 1.0)
    grad = l_h[..., None] * h.g + l_r[..., None] * r.g
    if h.h is None or r.h is None:
        return Jet(value, grad)

    l_hh = -inv_r
    l_hr = -l_h * inv_r
    l_rr = inv_r * (0.5 * inv_r - resid * resid * inv_r * inv_r)
    hg_outer = h.g[..., :, None] * h.g[..., None, :]
    rg = np.broadcast_to(r.g, h.g.shape) if r.g.shape != h.g.shape else r.g
    cross = h.g[..., :, None] * rg[..., None, :]
    rg_outer = rg[..., :, None] * rg[..., None, :]
    hess = (
        l_hh[..., None, None] * hg_outer
        + l_hr[..., None, None] * (cross + np.swapaxes(cross, -1, -2))
        + l_rr[..., None, None] * rg_outer
        + l_h[..., None, None] * h.h
        + l_r[..., None, None] * r.h
    )
    return Jet(value, grad, hess)


# -- dataset files: CSV with header ``t,y`` plus a JSON sidecar --------------


def dataset_paths(out_dir, model: str, seed: int):
    base = Path(out_dir) / f"{model}_seed{seed:04d}"
    return base.with_suffix(".csv"), base.with_suffix(".json")


def save_dataset(data: Dataset, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = dataset_paths(out_dir, data.model, data.seed)
    integer = np.issubdtype(data.observations.dtype, np.integer)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for t, y in enumerate(data.observations, start=1):
            writer.writerow([t, int(y) if integer else format(float(y), ".17g")])
    sidecar = {
        "model": data.model,
        "true_theta": [float(v) for v in data.true_theta],
        "T": int(data.t_steps),
        "seed": int(data.seed),
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path


def load_dataset(csv_path) -> Dataset:
    csv_path = Path(csv_path)
    with open(csv_path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    y = np.array([float(r["y"]) for r in rows])
    if meta["model"] == "sir":
        y = y.astype(np.int64)
    return Dataset(
        meta["model"], y, np.asarray(meta["true_theta"], dtype=float), int(meta["seed"])
    )

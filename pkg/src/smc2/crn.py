"""Keyed common-random-number streams.

Every random draw in the sampler and the particle filters comes from a
generator keyed by (master key, purpose, indices...).  The same key always
yields the same draws, bit-exactly, no matter in which order or on which
worker the consumer runs — that is what makes the particle-filter
log-likelihood a fixed, differentiable function of the parameters and the
whole experiment reproducible under any degree of parallelism.

Particle-filter streams are keyed by the sampler-sample slot (not by
iteration), so a given slot sees one fixed noise realization for every
target evaluation.  Proposal momenta are keyed by (iteration, slot) and
population resampling by iteration alone.
"""

from __future__ import annotations

import numpy as np

__all__ = ["CrnStreams"]

# Purpose tags; disjoint so e.g. proposal noise never aliases resampling draws.
_PRIOR = 1
_PF_PROPAGATION = 2
_PF_RESAMPLE = 3
_MOMENTUM = 4
_SMC_RESAMPLE = 5


class CrnStreams:
    """Factory of independent, reproducible random substreams.

    Parameters
    ----------
    key : int or tuple of ints
        Master key.  Experiment cells use (master_seed, data_seed).
    """

    def __init__(self, key):
        if isinstance(key, (int, np.integer)):
            key = (int(key),)
        self.key = tuple(int(k) for k in key)

    def generator(self, purpose: int, *indices: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.key + (purpose,) + tuple(indices))
        return np.random.Generator(np.random.PCG64(seq))

    # -- sampler-level streams -----------------------------------------

    def prior_draws(self, n: int, lows, highs) -> np.ndarray:
        """(n, d) uniform draws inside the prior box."""
        rng = self.generator(_PRIOR)
        return rng.uniform(lows, highs, size=(n, len(lows)))

    def momentum(self, iteration: int, sample_id: int, dim: int) -> np.ndarray:
        return self.generator(_MOMENTUM, iteration, sample_id).standard_normal(dim)

    def population_resample_u(self, iteration: int) -> float:
        return float(self.generator(_SMC_RESAMPLE, iteration).random())

    # -- particle-filter streams (fixed per sample slot) ----------------

    def pf_propagation(self, sample_id: int, t_steps: int, n_x: int, noise_dim: int) -> np.ndarray:
        """Standard-normal block of shape (T, n_x) or (T, n_x, noise_dim)."""
        shape = (t_steps, n_x) if noise_dim == 1 else (t_steps, n_x, noise_dim)
        return self.generator(_PF_PROPAGATION, sample_id).standard_normal(shape)

    def pf_resample_u(self, sample_id: int, t_steps: int) -> np.ndarray:
        """One uniform per timestep, consumed whether or not resampling fires."""
        return self.generator(_PF_RESAMPLE, sample_id).random(t_steps)

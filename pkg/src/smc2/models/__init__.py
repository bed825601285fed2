"""State-space models for SMC² parameter estimation."""

from .base import (
    Dataset,
    PriorSpec,
    StateSpaceModel,
    gaussian_logpdf_channels,
    load_dataset,
    save_dataset,
    select_state,
)
from .lgss import Lgss, kalman_loglik
from .sir import Sir, poisson_logpmf_channels

__all__ = [
    "Dataset",
    "PriorSpec",
    "StateSpaceModel",
    "Lgss",
    "Sir",
    "gaussian_logpdf_channels",
    "poisson_logpmf_channels",
    "kalman_loglik",
    "make_model",
    "select_state",
    "save_dataset",
    "load_dataset",
]

_REGISTRY = {"lgss": Lgss, "sir": Sir}


def make_model(name: str, **kwargs) -> StateSpaceModel:
    """Instantiate a bundled model by name ('lgss' or 'sir')."""
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(_REGISTRY)}") from None
    return cls(**kwargs)

"""Random-walk proposal scales tuned by Robbins-Monro during burn-in."""
from __future__ import annotations

import numpy as np

__all__ = ["AdaptiveScale"]


class AdaptiveScale:
    """
    Vector of log proposal scales nudged toward a target acceptance rate.

    ``update`` only moves the scales while ``active`` is true; the sampler
    switches it off at the end of burn-in so the retained chain is a
    time-homogeneous Markov chain.
    """

    def __init__(self, size: int, init: float = 0.5, target: float = 0.3, decay: float = 0.6):
        self.log_scale = np.full(size, np.log(init))
        self.target = target
        self.decay = decay
        self.active = True
        self.iteration = 0
        self.accepted = np.zeros(size)
        self.proposed = np.zeros(size)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def update(self, accepted) -> None:
        acc = np.asarray(accepted, dtype=float)
        self.accepted += acc
        self.proposed += 1
        if not self.active:
            return
        self.iteration += 1
        step = min(0.5, 5.0 / self.iteration**self.decay)
        self.log_scale += step * (acc - self.target)

    def freeze(self) -> None:
        self.active = False
        self.accepted[:] = 0
        self.proposed[:] = 0

    def acceptance_rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.accepted / self.proposed

    def state(self) -> dict:
        return {"log_scale": self.log_scale.tolist(), "active": self.active, "iteration": self.iteration}

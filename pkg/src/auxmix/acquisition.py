"""Acquisition functions over GP posteriors and their Hedge portfolio.

Three classic criteria (probability of improvement, expected improvement,
upper confidence bound) ranked per round by a multiplicative-weights
portfolio: each acquisition nominates a candidate, one nomination is chosen
with probability proportional to ``exp(eta * gain)``, and every gain is then
topped up with the posterior mean at its acquisition's nominee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .gp import GpModel, Posterior, posterior_at

PI = "pi"
EI = "ei"
UCB = "ucb"
ACQUISITIONS: tuple[str, ...] = (PI, EI, UCB)

DEFAULT_UCB_LAMBDA = 2.0


def probability_of_improvement(posterior: Posterior, best_so_far: float) -> float:
    """Probability the candidate beats the incumbent, ``Phi((mu - tau) / sigma)``.

    Degenerates to an indicator when the posterior is deterministic.
    """
    if posterior.std == 0.0:
        return 1.0 if posterior.mean > best_so_far else 0.0
    z = (posterior.mean - best_so_far) / posterior.std
    return float(norm.cdf(z))


def expected_improvement(posterior: Posterior, best_so_far: float) -> float:
    """Expected gain over the incumbent, ``sigma (z Phi(z) + phi(z))``.

    With a deterministic posterior this collapses to ``max(mu - tau, 0)``.
    """
    if posterior.std == 0.0:
        return max(posterior.mean - best_so_far, 0.0)
    z = (posterior.mean - best_so_far) / posterior.std
    return float(posterior.std * (z * norm.cdf(z) + norm.pdf(z)))


def upper_confidence_bound(posterior: Posterior, lam: float = DEFAULT_UCB_LAMBDA) -> float:
    """Optimistic score ``mu + lam * sigma``."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    return posterior.mean + lam * posterior.std


@dataclass(frozen=True)
class HedgeState:
    """Cumulative gains for the three-acquisition portfolio, in ACQUISITIONS order."""

    gains: tuple[float, float, float] = (0.0, 0.0, 0.0)
    eta: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.gains) != len(ACQUISITIONS):
            raise ValueError(f"expected {len(ACQUISITIONS)} gains, got {len(self.gains)}")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")


def hedge_probabilities(state: HedgeState) -> np.ndarray:
    """Selection distribution ``softmax(eta * gains)``.

    The max gain is subtracted before exponentiation, so the result is
    finite for any gain magnitudes and invariant to a common shift.
    """
    scaled = state.eta * np.asarray(state.gains, dtype=float)
    scaled -= np.max(scaled)
    w = np.exp(scaled)
    return w / np.sum(w)


def hedge_select(state: HedgeState, rng: np.random.Generator) -> str:
    """Draw one acquisition name according to the portfolio distribution."""
    p = hedge_probabilities(state)
    idx = int(rng.choice(len(ACQUISITIONS), p=p))
    return ACQUISITIONS[idx]


def hedge_update(
    state: HedgeState, nominees: Sequence[Sequence[float]], model: GpModel
) -> HedgeState:
    """Credit each acquisition with the posterior mean at its nominee.

    ``nominees`` holds one candidate point per acquisition, in ACQUISITIONS
    order, each in the model's input space.  All three gains move every
    round, whichever nomination was actually evaluated.
    """
    if len(nominees) != len(ACQUISITIONS):
        raise ValueError(f"expected {len(ACQUISITIONS)} nominees, got {len(nominees)}")
    gains = list(state.gains)
    for i, x in enumerate(nominees):
        gains[i] += posterior_at(model, x).mean
    return replace(state, gains=tuple(gains))

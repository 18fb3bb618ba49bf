"""Confidence weights for curriculum scoring.

Each sample's task loss is turned into a weight sigma by minimizing

    g(sigma) = (loss - tau) * sigma + lam * log(sigma)^2

over sigma in [SIGMA_MIN, SIGMA_MAX].  Samples easier than the threshold tau
get sigma > 1, harder ones sigma < 1, and very easy samples saturate the
upper clamp (g keeps decreasing in sigma once loss < tau - 2*lam/e, so the
clamp is the minimizer there).  Interior minimizers have the closed form
sigma = exp(-W((loss - tau) / (2*lam))) with W the principal Lambert branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import lambertw

from .util import NumericError

SIGMA_MIN = 1e-6
SIGMA_MAX = 1e6

_X_LO = math.log(SIGMA_MIN)
_X_HI = math.log(SIGMA_MAX)


@dataclass(frozen=True)
class SuperLossConfig:
    """Curriculum weighting parameters.

    tau: easy/hard threshold; None means "use log(num_classes)", resolved
    through :meth:`resolved`.  lam: regularization weight, must be positive.
    """

    tau: float | None = None
    lam: float = 1.0

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.tau is not None and not math.isfinite(self.tau):
            raise ValueError("tau must be finite")

    def resolved(self, num_classes: int) -> "SuperLossConfig":
        """Return a config with a concrete tau (default log of class count)."""
        if self.tau is not None:
            return self
        return replace(self, tau=math.log(num_classes))


def superloss_sigma(loss: float, cfg: SuperLossConfig) -> float:
    """Weight sigma minimizing g over the clamp interval, to |dsigma| <= 1e-8."""
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss!r}")
    if cfg.tau is None:
        raise ValueError("tau unresolved; call SuperLossConfig.resolved(num_classes)")
    return float(sigma_weights(np.array([loss]), cfg)[0])


def sigma_weights(losses: np.ndarray, cfg: SuperLossConfig) -> np.ndarray:
    """Vectorized sigma for an array of losses."""
    if cfg.tau is None:
        raise ValueError("tau unresolved; call SuperLossConfig.resolved(num_classes)")
    losses = np.asarray(losses, dtype=np.float64)
    if not np.all(np.isfinite(losses)):
        raise NumericError("non-finite loss in sigma_weights")
    a = losses - cfg.tau
    lam = cfg.lam

    # Interior critical point exists iff the Lambert argument is >= -1/e.
    arg = a / (2.0 * lam)
    has_interior = arg >= -1.0 / math.e
    safe_arg = np.where(has_interior, arg, 0.0)
    x_int = -lambertw(safe_arg).real
    x_int = _newton_polish(x_int, a, lam)
    x_int = np.clip(x_int, _X_LO, _X_HI)

    def g_of(x):
        return a * np.exp(x) + lam * x * x

    g_int = np.where(has_interior, g_of(x_int), np.inf)
    g_lo = g_of(np.full_like(a, _X_LO))
    g_hi = g_of(np.full_like(a, _X_HI))

    x_best = np.where(g_int <= g_lo, x_int, _X_LO)
    g_best = np.minimum(g_int, g_lo)
    x_best = np.where(g_hi < g_best, _X_HI, x_best)
    return np.exp(x_best)


def _newton_polish(x: np.ndarray, a: np.ndarray, lam: float) -> np.ndarray:
    """One guarded Newton step on g'(x) = a e^x + 2 lam x."""
    for _ in range(2):
        grad = a * np.exp(x) + 2.0 * lam * x
        hess = a * np.exp(x) + 2.0 * lam
        step = np.where(hess > 1e-12, grad / np.maximum(hess, 1e-12), 0.0)
        x = x - np.clip(step, -1.0, 1.0)
    return x

"""Scaling families for the deme lattice and their limit parameters.

A scaling family holds the five finite-n parameters (L demes per unit length,
M cells per deme, selection scale R, voter rate r, selection strength theta).
The three derived ratios alpha_n = r*M/L^2, beta_n = M/R, gamma_n = r/L are
what survive in the continuum limit; experiments either fix one family or walk
a ladder of families with the ratios pinned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ScalingFamily",
    "LimitParams",
    "DerivedRatios",
    "derived_ratios",
    "classify_regime",
    "sqrt_family",
    "deterministic_regime_family",
]

DEFAULT_REGIME_TOL = 1e-6


@dataclass(frozen=True)
class ScalingFamily:
    """Finite-n model parameters. Immutable; shareable across threads."""

    L: int
    M: int
    R: float
    r: float
    theta: float = 0.0

    def __post_init__(self):
        if self.L <= 0 or self.M <= 0:
            raise ValueError("L and M must be positive integers")
        if not (self.R > 0 and self.r > 0):
            raise ValueError("R and r must be positive")
        if self.theta < 0:
            raise ValueError("theta must be >= 0")

    @property
    def selection_rate(self):
        """Per directed neighbor pair: rate of selection events, theta/R."""
        return self.theta / self.R


@dataclass(frozen=True)
class LimitParams:
    """Continuum parameters (diffusion alpha, branching beta, noise gamma)."""

    alpha: float
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be >= 0")


@dataclass(frozen=True)
class DerivedRatios:
    alpha_n: float
    beta_n: float
    gamma_n: float


def derived_ratios(family):
    """The three limit-defining ratios of a family, exact arithmetic."""
    return DerivedRatios(
        alpha_n=family.r * family.M / family.L**2,
        beta_n=family.M / family.R,
        gamma_n=family.r / family.L,
    )


def classify_regime(ratios, tol=DEFAULT_REGIME_TOL):
    """'deterministic' iff gamma_n < tol, else 'stochastic'."""
    if not tol > 0:
        raise ValueError("tol must be > 0")
    return "deterministic" if ratios.gamma_n < tol else "stochastic"


def sqrt_family(n, theta=0.0):
    """L = M = R = r = sqrt(n); alpha_n = beta_n = gamma_n = 1 when n is a
    perfect square."""
    s = math.isqrt(n)
    if s * s != n:
        raise ValueError("n must be a perfect square")
    return ScalingFamily(L=s, M=s, R=float(s), r=float(s), theta=theta)


def deterministic_regime_family(n, a, b, alpha=1.0, beta=1.0, theta=0.0):
    """Family with r = n^(1/a), L = n^(1/b), M = ceil(alpha*n^(2/b-1/a)),
    R = M/beta, which pins alpha_n = alpha, beta_n = beta while
    gamma_n = n^(1/a-1/b) shrinks to 0.

    Requires b < a < 2b so that gamma_n -> 0 and L*R -> infinity.
    """
    if not (0 < b < a < 2 * b):
        raise ValueError("need b < a < 2b for the deterministic regime")
    r = n ** (1.0 / a)
    L = max(2, round(n ** (1.0 / b)))
    M = max(1, math.ceil(alpha * n ** (2.0 / b - 1.0 / a)))
    R = M / beta
    return ScalingFamily(L=L, M=M, R=R, r=r, theta=theta)

"""Heston-Hull-White hybrid model: parameters, payoffs, scheme settings.

The asset model couples Heston stochastic variance with a Hull-White short
rate under the risk-neutral measure:

    dS = R S dt + sqrt(V) S dW1
    dV = kappa (eta - V) dt + sigma1 sqrt(V) dW2
    dR = a (b(t) - R) dt + sigma2 dW3

with correlation factors rho12, rho13, rho23 between the Brownian drivers
and a time-dependent mean-reversion level b(t) = c1 - c2 exp(-c3 t).

Six reference parameter sets (cases A..F) are bundled.  Cases A-C satisfy
the Feller condition 2 kappa eta > sigma1^2, cases D-F violate it and have
long maturities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

__all__ = [
    "CaseId",
    "SchemeId",
    "OptionKind",
    "HHWParams",
    "OptionSpec",
    "case_params",
    "with_zero_cross_correlations",
    "mean_reversion",
    "gamma_measure",
    "feller_satisfied",
    "theta_default",
    "correlation_matrix",
]

#: eigenvalue floor used when checking positive semidefiniteness
PSD_TOL = 1e-12


class CaseId(Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"


class SchemeId(Enum):
    DO = "do"
    CS = "cs"
    MCS = "mcs"
    HV = "hv"


class OptionKind(Enum):
    VANILLA_CALL = "vanilla-call"
    UP_AND_OUT_CALL = "up-and-out-call"


@dataclass(frozen=True)
class HHWParams:
    """Constant parameters of the hybrid model.

    kappa, eta, sigma1 drive the variance process; a, c1, c2, c3, sigma2
    drive the short rate; rho12, rho13, rho23 are the driver correlations.
    sigma1, sigma2 and c2 may be zero (degenerate reductions used by
    validation oracles); the remaining rate/level parameters are strictly
    positive and c1 > c2.
    """

    kappa: float
    eta: float
    sigma1: float
    a: float
    c1: float
    c2: float
    c3: float
    sigma2: float
    rho12: float
    rho13: float
    rho23: float

    def __post_init__(self):
        for name in ("kappa", "eta", "a", "c1", "c3"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("sigma1", "sigma2", "c2"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.c1 <= self.c2:
            raise ValueError("c1 must exceed c2")
        for name in ("rho12", "rho13", "rho23"):
            if abs(getattr(self, name)) > 1.0:
                raise ValueError(f"{name} must lie in [-1, 1]")
        eigs = np.linalg.eigvalsh(correlation_matrix(self))
        if eigs.min() < -PSD_TOL:
            raise ValueError("correlation matrix is not positive semidefinite")


@dataclass(frozen=True)
class OptionSpec:
    """European option contract: strike K, maturity T, barrier B for
    up-and-out calls."""

    kind: OptionKind
    K: float
    T: float
    B: float | None = None

    def __post_init__(self):
        if self.K <= 0.0:
            raise ValueError("strike must be positive")
        if self.T <= 0.0:
            raise ValueError("maturity must be positive")
        if self.kind is OptionKind.UP_AND_OUT_CALL:
            if self.B is None or self.B <= self.K:
                raise ValueError("up-and-out call requires barrier B > K")
        elif self.B is not None:
            raise ValueError("barrier only applies to up-and-out calls")


def correlation_matrix(params: HHWParams) -> np.ndarray:
    """3x3 correlation matrix of the Brownian drivers (S, V, R order)."""
    return np.array(
        [
            [1.0, params.rho12, params.rho13],
            [params.rho12, 1.0, params.rho23],
            [params.rho13, params.rho23, 1.0],
        ]
    )


# Case library.  Correlations are the nonzero variants; use
# with_zero_cross_correlations() for the rho13 = rho23 = 0 counterparts.
_CASES: dict[CaseId, dict] = {
    CaseId.A: dict(kappa=3.0, eta=0.12, sigma1=0.04, a=0.2, c1=0.05, c2=0.01,
                   c3=1.0, sigma2=0.03, rho12=0.6, rho13=0.2, rho23=0.4, T=1.0),
    CaseId.B: dict(kappa=0.6067, eta=0.0707, sigma1=0.2928, a=0.05, c1=0.055,
                   c2=0.005, c3=4.0, sigma2=0.06, rho12=-0.7571, rho13=0.6,
                   rho23=-0.2, T=3.0),
    CaseId.C: dict(kappa=2.5, eta=0.06, sigma1=0.5, a=0.15, c1=0.101, c2=0.001,
                   c3=2.3, sigma2=0.1, rho12=-0.1, rho13=-0.3, rho23=0.2, T=0.25),
    CaseId.D: dict(kappa=0.5, eta=0.04, sigma1=1.0, a=0.08, c1=0.103, c2=0.003,
                   c3=1.0, sigma2=0.09, rho12=-0.9, rho13=0.6, rho23=-0.7, T=10.0),
    CaseId.E: dict(kappa=0.3, eta=0.04, sigma1=0.9, a=0.16, c1=0.055, c2=0.025,
                   c3=1.6, sigma2=0.03, rho12=-0.5, rho13=0.2, rho23=0.1, T=15.0),
    CaseId.F: dict(kappa=1.0, eta=0.09, sigma1=1.0, a=0.22, c1=0.074, c2=0.014,
                   c3=2.1, sigma2=0.07, rho12=-0.3, rho13=-0.5, rho23=-0.2, T=5.0),
}

STRIKE = 100.0


def case_params(case: CaseId) -> tuple[HHWParams, OptionSpec]:
    """Model parameters and the vanilla-call contract for one test case."""
    row = dict(_CASES[case])
    maturity = row.pop("T")
    params = HHWParams(**row)
    option = OptionSpec(kind=OptionKind.VANILLA_CALL, K=STRIKE, T=maturity)
    return params, option


def with_zero_cross_correlations(params: HHWParams) -> HHWParams:
    """Copy of ``params`` with rho13 = rho23 = 0 (semi-analytic regime)."""
    return replace(params, rho13=0.0, rho23=0.0)


def mean_reversion(params: HHWParams, tau: float) -> float:
    """Mean-reversion level b(tau) = c1 - c2 exp(-c3 tau) of the short rate."""
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    return params.c1 - params.c2 * math.exp(-params.c3 * tau)


def gamma_measure(params: HHWParams) -> float:
    """Largest absolute correlation, the mixed-derivative size measure."""
    return max(abs(params.rho12), abs(params.rho13), abs(params.rho23))


def feller_satisfied(params: HHWParams) -> bool:
    """True iff 2 kappa eta > sigma1^2 holds strictly."""
    return 2.0 * params.kappa * params.eta > params.sigma1**2


def theta_default(scheme: SchemeId, gamma: float) -> float:
    """Default implicitness parameter per scheme for a given gamma.

    Do: 2/3, CS: 1/2, MCS: max(1/3, (2/13)(2 gamma + 1)),
    HV: 1/2 + sqrt(3)/6.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if scheme is SchemeId.DO:
        return 2.0 / 3.0
    if scheme is SchemeId.CS:
        return 0.5
    if scheme is SchemeId.MCS:
        return max(1.0 / 3.0, (2.0 / 13.0) * (2.0 * gamma + 1.0))
    if scheme is SchemeId.HV:
        return 0.5 + math.sqrt(3.0) / 6.0
    raise ValueError(f"unknown scheme {scheme!r}")

"""ADI time stepping: Douglas, Craig-Sneyd, modified Craig-Sneyd and
Hundsdorfer-Verwer schemes.

All four schemes share the same first sweep: an explicit full-operator
predictor followed by implicit corrections in the s-, v- and r-directions.
CS, MCS and HV append a second explicit update plus a second implicit sweep.
The mixed-derivative part A0 is always explicit; the implicit matrices
(I - theta dt A1) and (I - theta dt A2) are factored once per (theta, dt)
pair and reused in every step, while (I - theta dt A3(t_n)) is refactored
each step because A3 carries the time dependence.

A system passed to the steppers needs the SplitOperator surface: attributes
``M``, methods ``apply_A0``, ``apply_dir(j, x)``, ``apply_dir3(t, x)``,
``apply_full(t, x)``, ``g_total(t)``, ``g3(t)``, ``factor_dir(j, scale)``
and ``factor_dir3(t, scale)`` (factors expose ``solve``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import SchemeId

__all__ = ["StepperConfig", "StepperState", "step_do", "step_cs", "step_mcs", "step_hv", "integrate"]

#: relative tolerance for the dt * N = T consistency check
_TIME_RTOL = 1e-12


@dataclass(frozen=True)
class StepperConfig:
    """Time-integration settings; ``damping`` replaces the first step by two
    Douglas(theta=1) substeps of half size."""

    scheme: SchemeId
    theta: float
    dt: float
    n_steps: int
    damping: bool = False

    def __post_init__(self):
        if self.theta <= 0.0:
            raise ValueError("theta must be positive")
        if self.n_steps < 1:
            raise ValueError("need at least one step")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


@dataclass
class StepperState:
    """Cached factorizations plus the running solution vector."""

    theta: float
    dt: float
    lu1: object = None
    lu2: object = None
    U: np.ndarray | None = None
    n: int = 0
    factor_counts: dict = field(default_factory=lambda: {1: 0, 2: 0, 3: 0})
    _lu3: object = None
    _lu3_t: float | None = None

    @classmethod
    def prepare(cls, split, theta: float, dt: float) -> "StepperState":
        state = cls(theta=theta, dt=dt)
        state.lu1 = split.factor_dir(1, theta * dt)
        state.lu2 = split.factor_dir(2, theta * dt)
        state.factor_counts[1] += 1
        state.factor_counts[2] += 1
        return state

    def lu3(self, split, t: float):
        if self._lu3 is None or self._lu3_t != t:
            self._lu3 = split.factor_dir3(t, self.theta * self.dt)
            self._lu3_t = t
            self.factor_counts[3] += 1
        return self._lu3


def _first_sweep(state: StepperState, sp, U, t_prev, t_next):
    """Common predictor-corrector sweep; returns stage pieces for reuse."""
    th_dt = state.theta * state.dt
    dt = state.dt
    A1U = sp.apply_dir(1, U)
    A2U = sp.apply_dir(2, U)
    A3U_prev = sp.apply_dir3(t_prev, U)
    AU_prev = sp.apply_A0(U) + A1U + A2U + A3U_prev
    dg = sp.g3(t_next) - sp.g3(t_prev)
    Y0 = U + dt * (AU_prev + sp.g_total(t_prev))
    Y = state.lu1.solve(Y0 - th_dt * A1U)
    Y = state.lu2.solve(Y - th_dt * A2U)
    Y3 = state.lu3(sp, t_next).solve(Y - th_dt * A3U_prev + th_dt * dg)
    return Y0, Y3, A1U, A2U, A3U_prev, AU_prev, dg


def step_do(state: StepperState, system, t_prev: float, t_next: float) -> np.ndarray:
    """One Douglas step from t_prev to t_next."""
    _, Y3, *_ = _first_sweep(state, system.split, state.U, t_prev, t_next)
    return Y3


def step_cs(state: StepperState, system, t_prev: float, t_next: float) -> np.ndarray:
    """One Craig-Sneyd step: Do sweep plus a half-weighted A0 re-update."""
    sp = system.split
    U = state.U
    th_dt = state.theta * state.dt
    Y0, Y3, A1U, A2U, A3U_prev, _, dg = _first_sweep(state, sp, U, t_prev, t_next)
    Yt = Y0 + 0.5 * state.dt * sp.apply_A0(Y3 - U)
    Yt = state.lu1.solve(Yt - th_dt * A1U)
    Yt = state.lu2.solve(Yt - th_dt * A2U)
    return state.lu3(sp, t_next).solve(Yt - th_dt * A3U_prev + th_dt * dg)


def step_mcs(state: StepperState, system, t_prev: float, t_next: float) -> np.ndarray:
    """One modified Craig-Sneyd step with the extra full-operator update."""
    sp = system.split
    U = state.U
    th = state.theta
    dt = state.dt
    th_dt = th * dt
    Y0, Y3, A1U, A2U, A3U_prev, AU_prev, dg = _first_sweep(state, sp, U, t_prev, t_next)
    AY3_next = sp.apply_A0(Y3) + sp.apply_dir(1, Y3) + sp.apply_dir(2, Y3) + sp.apply_dir3(t_next, Y3)
    Yh = Y0 + th_dt * sp.apply_A0(Y3 - U)
    Yt = Yh + (0.5 - th) * dt * (AY3_next - AU_prev + dg)
    Yt = state.lu1.solve(Yt - th_dt * A1U)
    Yt = state.lu2.solve(Yt - th_dt * A2U)
    return state.lu3(sp, t_next).solve(Yt - th_dt * A3U_prev + th_dt * dg)


def step_hv(state: StepperState, system, t_prev: float, t_next: float) -> np.ndarray:
    """One Hundsdorfer-Verwer step; the second sweep relaxes towards Y3."""
    sp = system.split
    U = state.U
    th_dt = state.theta * state.dt
    Y0, Y3, _, _, _, AU_prev, dg = _first_sweep(state, sp, U, t_prev, t_next)
    A1Y3 = sp.apply_dir(1, Y3)
    A2Y3 = sp.apply_dir(2, Y3)
    A3Y3_next = sp.apply_dir3(t_next, Y3)
    AY3_next = sp.apply_A0(Y3) + A1Y3 + A2Y3 + A3Y3_next
    Yt = Y0 + 0.5 * state.dt * (AY3_next - AU_prev + dg)
    Yt = state.lu1.solve(Yt - th_dt * A1Y3)
    Yt = state.lu2.solve(Yt - th_dt * A2Y3)
    return state.lu3(sp, t_next).solve(Yt - th_dt * A3Y3_next)


_STEPS = {
    SchemeId.DO: step_do,
    SchemeId.CS: step_cs,
    SchemeId.MCS: step_mcs,
    SchemeId.HV: step_hv,
}


def integrate(system, config: StepperConfig, stats: dict | None = None) -> np.ndarray:
    """March the semidiscrete system from the payoff to t = T.

    With damping on, the first step of size dt is replaced by two
    Douglas substeps of size dt/2 at theta = 1 (separate factorizations),
    after which the configured scheme proceeds from t = dt.
    """
    T = system.T
    dt, N = config.dt, config.n_steps
    if abs(dt * N - T) > _TIME_RTOL * max(1.0, abs(T)):
        raise ValueError("dt * n_steps must equal the maturity T")
    sp = system.split
    step = _STEPS[config.scheme]
    state = StepperState.prepare(sp, config.theta, dt)
    U = np.array(system.U0, dtype=float, copy=True)
    n_start = 1
    if config.damping:
        dstate = StepperState.prepare(sp, 1.0, dt / 2.0)
        dstate.U = U
        U = step_do(dstate, system, 0.0, dt / 2.0)
        dstate.U = U
        U = step_do(dstate, system, dt / 2.0, dt)
        for j in (1, 2, 3):
            state.factor_counts[j] += dstate.factor_counts[j]
        n_start = 2
    state.U = U
    for n in range(n_start, N + 1):
        U = step(state, system, (n - 1) * dt, n * dt)
        state.U = U
        state.n = n
    if stats is not None:
        stats.update({f"factor_dir{j}": state.factor_counts[j] for j in (1, 2, 3)})
    return U

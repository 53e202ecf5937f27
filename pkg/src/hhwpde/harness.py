"""Experiment driver: error metrics, convergence fits, oracles, CSV output.

Temporal errors compare a scheme run against a high-step-count reference
solution of the same semidiscrete system (so they isolate the time
discretization); spatial errors compare the finite-difference solution
against the semi-closed-form price, which requires rho13 = rho23 = 0.
Both are max-norm errors over the region of interest
(K/2, 3K/2) x (0, 1) x (0, 1/4), open intervals.
"""

from __future__ import annotations

import argparse
import math
import sys
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import adi, analytic, discretize
from . import grid as gridmod
from . import model as modelmod
from .model import CaseId, HHWParams, OptionKind, OptionSpec, SchemeId

__all__ = [
    "RegionOfInterest",
    "ErrorReport",
    "ConvergenceTable",
    "ReferenceCache",
    "fit_order",
    "temporal_error",
    "spatial_error",
    "uniform_comparison",
    "mc_oracle",
    "run_experiment",
    "build_grid_for",
    "solve_fd",
]

#: grid index (not interpolated) spot rates used for the barrier surfaces
SURFACE_RATES = {
    CaseId.A: 0.025,
    CaseId.B: 0.022,
    CaseId.C: 0.025,
    CaseId.D: 0.027,
    CaseId.E: 0.022,
    CaseId.F: 0.017,
}

DEFAULT_BARRIER = 120.0
DEFAULT_REF_STEPS_TEMPORAL = 4000
DEFAULT_REF_STEPS_SPATIAL = 200
DEFAULT_M_SWEEP = (10, 15, 20, 30, 40)


@dataclass(frozen=True)
class RegionOfInterest:
    """Open-box region over which max-norm errors are measured."""

    s_lo: float
    s_hi: float
    v_lo: float
    v_hi: float
    r_lo: float
    r_hi: float

    @classmethod
    def for_strike(cls, K: float) -> "RegionOfInterest":
        return cls(0.5 * K, 1.5 * K, 0.0, 1.0, 0.0, 0.25)

    def axis_indices(self, grid: gridmod.Grid3D):
        """Active-axis index arrays of the points strictly inside the box."""
        s_sel = np.nonzero((grid.s_active > self.s_lo) & (grid.s_active < self.s_hi))[0]
        v_sel = np.nonzero((grid.v_active > self.v_lo) & (grid.v_active < self.v_hi))[0]
        r_sel = np.nonzero((grid.r_active > self.r_lo) & (grid.r_active < self.r_hi))[0]
        return s_sel, v_sel, r_sel


@dataclass(frozen=True)
class ErrorReport:
    kind: str  # "spatial" | "temporal"
    resolution: float
    value: float
    point_of_max: tuple[int, int, int]

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError("error must be nonnegative")


@dataclass
class ConvergenceTable:
    """(resolution, error) rows; resolution is m (spatial) or dt (temporal)."""

    kind: str
    rows: list[tuple[float, float]] = field(default_factory=list)

    def add(self, resolution: float, error: float):
        self.rows.append((float(resolution), float(error)))
        self.rows.sort(key=lambda t: t[0])

    @property
    def fitted_order(self) -> float:
        return fit_order(self)

    @property
    def fit_residual(self) -> float:
        return _fit(self)[1]


def _fit(table: ConvergenceTable):
    if len(table.rows) < 3:
        raise ValueError("order fit needs at least 3 rows")
    res = np.array([r for r, _ in table.rows])
    err = np.array([e for _, e in table.rows])
    if np.any(err <= 0.0):
        raise ValueError("order fit needs strictly positive errors")
    h = res if table.kind == "temporal" else 1.0 / res
    coef, stats = np.polynomial.polynomial.polyfit(np.log(h), np.log(err), 1, full=True)
    resid = float(stats[0][0]) if len(stats[0]) else 0.0
    return float(coef[1]), resid


def fit_order(table: ConvergenceTable) -> float:
    """Least-squares slope of log(error) against log(h)."""
    return _fit(table)[0]


def build_grid_for(option: OptionSpec, params: HHWParams, m: int, uniform: bool = False) -> gridmod.Grid3D:
    """Production grid for an option: m1 = 2m, m2 = m3 = m, c = c1."""
    spec = gridmod.default_spec(option.K, option.T, params.c1, m, uniform=uniform)
    if option.kind is OptionKind.UP_AND_OUT_CALL:
        spec = gridmod.with_barrier(spec, option.B)
        mode = gridmod.GridMode.BARRIER
    else:
        mode = gridmod.GridMode.VANILLA
    return gridmod.build_grid(spec, mode)


def solve_fd(
    params: HHWParams,
    option: OptionSpec,
    m: int,
    scheme: SchemeId,
    n_steps: int,
    theta: float | None = None,
    damping: bool = False,
    uniform: bool = False,
    grid: gridmod.Grid3D | None = None,
    system: discretize.SemidiscreteSystem | None = None,
):
    """Assemble (unless given) and integrate; returns (system, U at T)."""
    if system is None:
        if grid is None:
            grid = build_grid_for(option, params, m, uniform=uniform)
        system = discretize.assemble(params, option, grid, option.T)
    if theta is None:
        theta = modelmod.theta_default(scheme, modelmod.gamma_measure(params))
    cfg = adi.StepperConfig(
        scheme=scheme, theta=theta, dt=option.T / n_steps, n_steps=n_steps, damping=damping
    )
    return system, adi.integrate(system, cfg)


class ReferenceCache:
    """Synchronized read-through store for reference solutions."""

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()
        self.compute_count = 0
        self.hits = 0

    def get_or_compute(self, key, fn):
        with self._lock:
            if key in self._store:
                self.hits += 1
                return self._store[key]
        value = fn()
        with self._lock:
            if key not in self._store:
                self._store[key] = value
                self.compute_count += 1
            else:
                self.hits += 1
        return self._store[key]


_default_cache = ReferenceCache()


def _reference_solution(system, option: OptionSpec, params: HHWParams, ref_steps: int):
    theta = modelmod.theta_default(SchemeId.MCS, modelmod.gamma_measure(params))
    cfg = adi.StepperConfig(
        scheme=SchemeId.MCS, theta=theta, dt=option.T / ref_steps, n_steps=ref_steps
    )
    return adi.integrate(system, cfg)


def _roi_max_error(diff: np.ndarray, grid: gridmod.Grid3D, roi: RegionOfInterest):
    s_sel, v_sel, r_sel = roi.axis_indices(grid)
    if len(s_sel) == 0 or len(v_sel) == 0 or len(r_sel) == 0:
        raise ValueError("region of interest holds no grid points")
    cube = np.abs(diff.reshape(grid.Kn, grid.J, grid.I))
    sub = cube[np.ix_(r_sel, v_sel, s_sel)]
    flat = int(np.argmax(sub))
    kk, jj, ii = np.unravel_index(flat, sub.shape)
    point = (int(s_sel[ii]) + 1, int(v_sel[jj]), int(r_sel[kk]))
    return float(sub.max()), point


def temporal_error(
    params: HHWParams,
    option: OptionSpec,
    scheme: SchemeId,
    theta: float | None,
    m: int,
    dt: float,
    damping: bool = False,
    ref_steps: int = DEFAULT_REF_STEPS_TEMPORAL,
    cache: ReferenceCache | None = None,
) -> ErrorReport:
    """Max-norm deviation from the exact semidiscrete solution at t = T."""
    n_steps = round(option.T / dt)
    if abs(n_steps * dt - option.T) > 1e-9 * option.T:
        raise ValueError("dt must divide the maturity")
    cache = cache if cache is not None else _default_cache
    grid = build_grid_for(option, params, m)
    system = discretize.assemble(params, option, grid, option.T)
    key = (params, option, m, ref_steps)
    U_ref = cache.get_or_compute(
        key, lambda: _reference_solution(system, option, params, ref_steps)
    )
    _, U = solve_fd(
        params, option, m, scheme, n_steps, theta=theta, damping=damping, system=system
    )
    err, point = _roi_max_error(U - U_ref, grid, RegionOfInterest.for_strike(option.K))
    return ErrorReport(kind="temporal", resolution=dt, value=err, point_of_max=point)


def _analytic_on_grid(params, option, grid, roi):
    s_sel, v_sel, r_sel = roi.axis_indices(grid)
    table = analytic.call_price_table(
        grid.s_active[s_sel],
        grid.v_active[v_sel],
        grid.r_active[r_sel],
        0.0,
        params,
        option.K,
        option.T,
    )
    return s_sel, v_sel, r_sel, table


def spatial_error(
    params: HHWParams,
    option: OptionSpec,
    m: int,
    ref_steps: int = DEFAULT_REF_STEPS_SPATIAL,
    uniform: bool = False,
    analytic_table=None,
) -> ErrorReport:
    """Max-norm deviation of the FD solution from the semi-analytic price."""
    if params.rho13 != 0.0 or params.rho23 != 0.0:
        raise ValueError("spatial error needs rho13 = rho23 = 0")
    if option.kind is not OptionKind.VANILLA_CALL:
        raise ValueError("spatial error is defined for vanilla calls")
    roi = RegionOfInterest.for_strike(option.K)
    grid = build_grid_for(option, params, m, uniform=uniform)
    _, U = solve_fd(params, option, m, SchemeId.MCS, ref_steps, grid=grid)
    if analytic_table is None:
        s_sel, v_sel, r_sel, table = _analytic_on_grid(params, option, grid, roi)
    else:
        s_sel, v_sel, r_sel, table = analytic_table
    cube = U.reshape(grid.Kn, grid.J, grid.I)
    fd = cube[np.ix_(r_sel, v_sel, s_sel)]
    diff = np.abs(fd - table.transpose(2, 1, 0))
    flat = int(np.argmax(diff))
    kk, jj, ii = np.unravel_index(flat, diff.shape)
    point = (int(s_sel[ii]) + 1, int(v_sel[jj]), int(r_sel[kk]))
    return ErrorReport(kind="spatial", resolution=float(m), value=float(diff.max()), point_of_max=point)


def uniform_comparison(
    params: HHWParams, option: OptionSpec, m: int, ref_steps: int = DEFAULT_REF_STEPS_SPATIAL
) -> tuple[ErrorReport, ErrorReport]:
    """Spatial error on the stretched grid versus the equidistant grid."""
    nonuni = spatial_error(params, option, m, ref_steps=ref_steps, uniform=False)
    uni = spatial_error(params, option, m, ref_steps=ref_steps, uniform=True)
    return nonuni, uni


def mc_oracle(
    params: HHWParams,
    option: OptionSpec,
    s: float,
    v: float,
    r: float,
    paths: int,
    steps: int,
    seed: int,
) -> tuple[float, float]:
    """Euler Monte Carlo estimate and standard error (test oracle).

    Full-truncation Euler for the variance, correlated increments from the
    Cholesky factor of the driver correlation matrix, pathwise discounting
    by the left-point integrated short rate, barrier monitored each step.
    """
    if paths < 1 or steps < 1:
        raise ValueError("paths and steps must be >= 1")
    corr = modelmod.correlation_matrix(params)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        eigval, eigvec = np.linalg.eigh(corr)
        if eigval.min() < -modelmod.PSD_TOL:
            raise ValueError("correlation matrix is not positive semidefinite")
        chol = eigvec @ np.diag(np.sqrt(np.maximum(eigval, 0.0)))
    rng = np.random.default_rng(seed)
    dt = option.T / steps
    sq_dt = math.sqrt(dt)
    S = np.full(paths, float(s))
    V = np.full(paths, float(v))
    R = np.full(paths, float(r))
    rate_int = np.zeros(paths)
    barrier = option.kind is OptionKind.UP_AND_OUT_CALL
    alive = np.ones(paths, dtype=bool)
    if barrier:
        alive &= S < option.B
    for n in range(steps):
        z = chol @ rng.standard_normal((3, paths))
        rate_int += R * dt
        vp = np.maximum(V, 0.0)
        sq_vp = np.sqrt(vp)
        S = S + R * S * dt + sq_vp * S * sq_dt * z[0]
        V = V + params.kappa * (params.eta - vp) * dt + params.sigma1 * sq_vp * sq_dt * z[1]
        b_now = modelmod.mean_reversion(params, n * dt)
        R = R + params.a * (b_now - R) * dt + params.sigma2 * sq_dt * z[2]
        if barrier:
            alive &= S < option.B
    payoff = np.maximum(S - option.K, 0.0)
    if barrier:
        payoff = np.where(alive, payoff, 0.0)
    disc = np.exp(-rate_int) * payoff
    est = float(disc.mean())
    se = float(disc.std(ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    return est, se


# ---------------------------------------------------------------------------
# CLI


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: str, header: list[str], rows: list[tuple]):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hhw-bench",
        description="Finite-difference benchmark runs for the hybrid model",
    )
    p.add_argument(
        "--experiment",
        required=True,
        choices=["spatial", "temporal", "price", "uniform-compare", "barrier-surface"],
    )
    p.add_argument("--case", required=True, choices=[c.value for c in CaseId])
    p.add_argument("--option", default="call", choices=["call", "uoc"])
    p.add_argument("--scheme", default="mcs", choices=[s.value for s in SchemeId])
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--m", type=int, default=25)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--dt-sweep", type=str, default=None, help="comma list of step sizes")
    p.add_argument("--m-sweep", type=str, default=None, help="comma list of m values")
    p.add_argument("--damping", default="off", choices=["on", "off"])
    p.add_argument("--zero-cross-corr", action="store_true")
    p.add_argument("--barrier", type=float, default=DEFAULT_BARRIER)
    p.add_argument("--ref-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)
    return p


def _resolve(args):
    case = CaseId(args.case)
    params, option = modelmod.case_params(case)
    if args.zero_cross_corr:
        params = modelmod.with_zero_cross_correlations(params)
    if args.option == "uoc":
        option = OptionSpec(
            kind=OptionKind.UP_AND_OUT_CALL, K=option.K, T=option.T, B=args.barrier
        )
    scheme = SchemeId(args.scheme)
    return case, params, option, scheme


def _dt_sweep(args, T: float) -> list[float]:
    if args.dt_sweep:
        dts = [float(tok) for tok in args.dt_sweep.split(",")]
    else:
        dts = [T / n for n in (10, 20, 40, 80, 160)]
    for dt in dts:
        n = round(T / dt)
        if n < 1 or abs(n * dt - T) > 1e-9 * T:
            raise SystemExit(f"dt {dt} does not divide the maturity {T}")
    return dts


def run_experiment(argv=None) -> int:
    """CLI entry: runs one named experiment and writes its CSV artifact."""
    args = _parser().parse_args(argv)
    t0 = time.perf_counter()
    case, params, option, scheme = _resolve(args)
    out = args.out or f"{args.experiment}-{case.value}.csv"
    order_txt = "-"

    if args.experiment == "temporal":
        ref_steps = args.ref_steps or DEFAULT_REF_STEPS_TEMPORAL
        cache = ReferenceCache()
        table = ConvergenceTable(kind="temporal")
        rows = []
        for dt in _dt_sweep(args, option.T):
            rep = temporal_error(
                params,
                option,
                scheme,
                args.theta,
                args.m,
                dt,
                damping=args.damping == "on",
                ref_steps=ref_steps,
                cache=cache,
            )
            rows.append((dt, rep.value))
            if rep.value > 0.0:
                table.add(dt, rep.value)
        _write_csv(out, ["dt", "error"], rows)
        if len(table.rows) >= 3:
            order_txt = f"{table.fitted_order:.3f}"

    elif args.experiment in ("spatial", "uniform-compare"):
        if not args.zero_cross_corr:
            raise SystemExit("spatial experiments require --zero-cross-corr")
        ref_steps = args.ref_steps or DEFAULT_REF_STEPS_SPATIAL
        if args.m_sweep:
            ms = [int(tok) for tok in args.m_sweep.split(",")]
        else:
            ms = list(DEFAULT_M_SWEEP)
        table = ConvergenceTable(kind="spatial")
        rows = []
        for m in ms:
            if args.experiment == "spatial":
                rep = spatial_error(params, option, m, ref_steps=ref_steps)
                rows.append((m, rep.value))
                table.add(m, rep.value)
            else:
                nonuni, uni = uniform_comparison(params, option, m, ref_steps=ref_steps)
                rows.append((m, nonuni.value, uni.value))
                table.add(m, nonuni.value)
        header = ["m", "error"] if args.experiment == "spatial" else ["m", "error_nonuniform", "error_uniform"]
        _write_csv(out, header, rows)
        if len(table.rows) >= 3:
            order_txt = f"{table.fitted_order:.3f}"

    elif args.experiment in ("price", "barrier-surface"):
        if args.experiment == "barrier-surface" and option.kind is not OptionKind.UP_AND_OUT_CALL:
            option = OptionSpec(
                kind=OptionKind.UP_AND_OUT_CALL, K=option.K, T=option.T, B=args.barrier
            )
        system, U = solve_fd(
            params,
            option,
            args.m,
            scheme,
            args.steps,
            theta=args.theta,
            damping=args.damping == "on",
        )
        g = system.grid
        cube = U.reshape(g.Kn, g.J, g.I)
        k_star = int(np.argmin(np.abs(g.r_active - SURFACE_RATES[case])))
        s_hi = option.B if option.kind is OptionKind.UP_AND_OUT_CALL else 3.0 * option.K
        s_sel = np.nonzero(g.s_active < s_hi)[0]
        v_sel = np.nonzero(g.v_active < 1.0)[0]
        rows = []
        for jj in v_sel:
            for ii in s_sel:
                rows.append(
                    (g.s_active[ii], g.v_active[jj], g.r_active[k_star], cube[k_star, jj, ii])
                )
        _write_csv(out, ["s", "v", "r", "value"], rows)

    wall = time.perf_counter() - t0
    print(f"{args.experiment} case={case.value} order={order_txt} wall={wall:.2f}s")
    return 0

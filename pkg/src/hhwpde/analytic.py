"""Semi-closed-form European call prices for the hybrid model.

Valid when the asset-rate and variance-rate correlations vanish
(rho13 = rho23 = 0).  The price has Black-Scholes shape,

    price(e^x, v, r, tau) = e^x P1 - K B(r, tau) P2,

with B the zero-coupon bond price and P1, P2 probabilities recovered by
Fourier inversion of two characteristic functions.  The exponents are
affine in v and r; the rate-level integral involving b(t) has an exact
closed form for b(t) = c1 - c2 exp(-c3 t).

The characteristic-function ratios are evaluated with the decaying
exponential exp(-d (T - tau)) so long maturities neither overflow nor
cross the log branch cut; a finiteness/continuity guard still rejects
pathological parameter sets.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from .model import HHWParams, OptionKind, OptionSpec

__all__ = [
    "bond_price",
    "b_integral",
    "char_fn",
    "probability",
    "call_price",
    "call_price_table",
    "QuadratureError",
    "IntegrandGuardError",
]

#: absolute tolerance of the Fourier inversion integrals
INVERSION_TOL = 1e-9
#: integrand tail must fall below this fraction of its peak before truncation
TAIL_RTOL = 1e-12
#: initial truncation point of the semi-infinite inversion integral
Y_CUT_START = 200.0


class QuadratureError(RuntimeError):
    """Quadrature failed to converge within its node budget."""


class IntegrandGuardError(RuntimeError):
    """Integrand failed the finiteness/continuity guard."""


def _require_semianalytic(params: HHWParams):
    if params.rho13 != 0.0 or params.rho23 != 0.0:
        raise ValueError("closed form requires rho13 = rho23 = 0")
    if params.sigma1 <= 0.0:
        raise ValueError("closed form requires sigma1 > 0")


def b_integral(tau: float, T: float, params: HHWParams) -> float:
    """Exact value of int_tau^T b(t) (1 - exp(-a (T - t))) dt."""
    if tau > T:
        raise ValueError("tau must not exceed T")
    a, c1, c2, c3 = params.a, params.c1, params.c2, params.c3
    delta = T - tau
    out = c1 * delta - c1 * (-math.expm1(-a * delta)) / a
    out -= (c2 / c3) * (math.exp(-c3 * tau) - math.exp(-c3 * T))
    z = (a - c3) * delta
    phi1 = math.expm1(z) / z if z != 0.0 else 1.0
    out += c2 * math.exp(-a * T + (a - c3) * tau) * delta * phi1
    return out


def _rate_variance_term(delta: float, a: float) -> float:
    return delta + (2.0 / a) * math.exp(-a * delta) - math.exp(-2.0 * a * delta) / (2.0 * a) - 3.0 / (2.0 * a)


def _c_exponent(r: float, tau: float, params: HHWParams, T: float) -> float:
    a = params.a
    delta = T - tau
    out = -(r / a) * (-math.expm1(-a * delta)) - b_integral(tau, T, params)
    out += params.sigma2**2 / (2.0 * a * a) * _rate_variance_term(delta, a)
    return out


def bond_price(r: float, tau: float, params: HHWParams, T: float) -> float:
    """Zero-coupon bond price at time tau paying 1 at T, short rate r."""
    if tau > T:
        raise ValueError("tau must not exceed T")
    return math.exp(_c_exponent(r, tau, params, T))


def _fgh(j: int, tau: float, y, params: HHWParams, T: float):
    """Exponent pieces (F, G, H) of characteristic function j at nodes y."""
    if j not in (1, 2):
        raise ValueError("branch index must be 1 or 2")
    y = np.asarray(y, dtype=complex)
    delta_j = 0.0 if j == 1 else 1.0
    gam = 0.5 if j == 1 else -0.5
    s1 = params.sigma1
    rho = params.rho12
    beta = params.kappa - rho * s1 if j == 1 else params.kappa
    dfin = T - tau
    iy = 1j * y
    bp = beta - rho * s1 * iy
    d = np.sqrt(bp * bp - s1 * s1 * (2j * gam * y - y * y))
    gm = (bp - d) / (bp + d)
    E = np.exp(-d * dfin)
    G = (bp - d) / s1**2 * (1.0 - E) / (1.0 - gm * E)
    F = (params.kappa * params.eta / s1**2) * (
        (bp - d) * dfin - 2.0 * np.log((1.0 - gm * E) / (1.0 - gm))
    )
    F = F + (iy - delta_j) * b_integral(tau, T, params)
    F = F + 0.5 * params.sigma2**2 * ((iy - delta_j) / params.a) ** 2 * _rate_variance_term(dfin, params.a)
    H = (iy - delta_j) / params.a * (-math.expm1(-params.a * dfin))
    return F, G, H


def char_fn(j: int, x: float, v: float, r: float, tau: float, y, params: HHWParams, T: float):
    """Characteristic function f_j at log-price x; y may be an array."""
    _require_semianalytic(params)
    if tau >= T:
        raise ValueError("tau must lie strictly before maturity")
    F, G, H = _fgh(j, tau, y, params, T)
    out = np.exp(F + G * v + H * r + 1j * np.asarray(y) * x)
    if j == 2:
        out = out * math.exp(-_c_exponent(r, tau, params, T))
    return out


def _tail_cut(j: int, x: float, v: float, r: float, tau: float, K: float, params: HHWParams, T: float) -> float:
    """Truncation point: grow until the integrand tail has decayed.

    Also runs the finiteness/continuity guard: along a probe grid the
    characteristic-function magnitude must stay within a factor 10 of the
    trend implied by its neighbors (smooth exponential decay passes, a
    branch-cut jump does not).
    """
    lnK = math.log(K)
    ycut = Y_CUT_START
    for _ in range(16):
        probe = np.geomspace(1e-3, ycut, 513)
        f = char_fn(j, x, v, r, tau, probe, params, T)
        mags = np.abs(f)
        if not np.all(np.isfinite(mags)):
            raise IntegrandGuardError("non-finite characteristic function value")
        floor = 1e-13 * mags.max()
        with np.errstate(divide="ignore"):
            lm = np.where(mags > 0.0, np.log(np.maximum(mags, 1e-300)), -np.inf)
        above = mags > floor
        triple = above[:-2] & above[1:-1] & above[2:]
        with np.errstate(invalid="ignore"):
            dev = np.abs(lm[1:-1] - 0.5 * (lm[:-2] + lm[2:]))
        if np.any(dev[triple] > math.log(10.0)):
            raise IntegrandGuardError("integrand magnitude jump between nodes")
        peak = np.abs((np.exp(-1j * probe * lnK) * f / (1j * probe)).real).max()
        if mags[-1] / probe[-1] <= TAIL_RTOL * peak:
            return ycut
        ycut *= 2.0
    raise IntegrandGuardError("integrand tail does not decay")


def probability(j: int, x: float, v: float, r: float, tau: float, K: float, params: HHWParams, T: float) -> float:
    """In-the-money probability P_j by Fourier inversion.

    P_j = 1/2 + (1/pi) int_0^inf Re[exp(-i y ln K) f_j / (i y)] dy, with the
    semi-infinite integral truncated once its tail is negligible and the
    remainder handled by adaptive quadrature to absolute tolerance 1e-9.
    """
    if K <= 0.0:
        raise ValueError("strike must be positive")
    lnK = math.log(K)
    ycut = _tail_cut(j, x, v, r, tau, K, params, T)

    def integrand(y):
        f = char_fn(j, x, v, r, tau, y, params, T)
        val = (np.exp(-1j * y * lnK) * f / (1j * y)).real
        if not np.isfinite(val):
            raise IntegrandGuardError("non-finite inversion integrand")
        return val

    res = quad(integrand, 0.0, ycut, epsabs=INVERSION_TOL, epsrel=1e-10, limit=500, full_output=1)
    if len(res) > 3:
        raise QuadratureError(str(res[3]))
    p = 0.5 + res[0] / math.pi
    if p < -1e-7 or p > 1.0 + 1e-7:
        raise QuadratureError(f"probability {p} outside [0, 1] beyond tolerance")
    return min(max(p, 0.0), 1.0)


def call_price(s: float, v: float, r: float, tau: float, params: HHWParams, option: OptionSpec, T: float | None = None) -> float:
    """European call price at spot s, variance v, short rate r, time tau."""
    _require_semianalytic(params)
    if option.kind is not OptionKind.VANILLA_CALL:
        raise ValueError("closed form covers vanilla calls only")
    if s <= 0.0:
        raise ValueError("spot must be positive")
    T = option.T if T is None else T
    x = math.log(s)
    p1 = probability(1, x, v, r, tau, option.K, params, T)
    p2 = probability(2, x, v, r, tau, option.K, params, T)
    price = s * p1 - option.K * bond_price(r, tau, params, T) * p2
    return max(price, 0.0)


def _table_nodes(ycut: float, n_panels: int, n_gl: int = 32):
    xg, wg = np.polynomial.legendre.leggauss(n_gl)
    edges = np.linspace(0.0, ycut, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    y = (mid[:, None] + half * xg[None, :]).ravel()
    w = np.broadcast_to(half * wg[None, :], (n_panels, n_gl)).ravel()
    return y, w


def _p_table(j, x, v, r, y, w, tau, params, K, T):
    F, G, H = _fgh(j, tau, y, params, T)
    C = np.exp(F - 1j * y * math.log(K)) * w / (1j * y)
    Ex = np.exp(1j * np.outer(x, y))
    Ev = np.exp(np.outer(v, G))
    Er = np.exp(np.outer(r, H))
    if j == 2:
        cexp = np.array([_c_exponent(rk, tau, params, T) for rk in r])
        Er = Er * np.exp(-cexp)[:, None]
    acc = np.einsum("in,jn,kn,n->ijk", Ex, Ev, Er, C, optimize=True)
    return 0.5 + acc.real / math.pi


def call_price_table(s_vals, v_vals, r_vals, tau, params: HHWParams, K: float, T: float, tol: float = 1e-8) -> np.ndarray:
    """Vectorized prices on the tensor grid s_vals x v_vals x r_vals.

    Uses composite Gauss-Legendre panels shared across all points, with the
    panel count doubled until the whole table is converged to ``tol``;
    cross-checked against the scalar quadrature path in the test suite.
    """
    _require_semianalytic(params)
    s_vals = np.asarray(s_vals, dtype=float)
    v_vals = np.asarray(v_vals, dtype=float)
    r_vals = np.asarray(r_vals, dtype=float)
    if np.any(s_vals <= 0.0):
        raise ValueError("spots must be positive")
    x = np.log(s_vals)
    ycut = max(
        _tail_cut(1, float(x.mean()), float(v_vals.min()), 0.0, tau, K, params, T),
        _tail_cut(2, float(x.mean()), float(v_vals.min()), 0.0, tau, K, params, T),
    )
    bond = np.array([bond_price(rk, tau, params, T) for rk in r_vals])

    def price_at(n_panels):
        y, w = _table_nodes(ycut, n_panels)
        p1 = _p_table(1, x, v_vals, r_vals, y, w, tau, params, K, T)
        p2 = _p_table(2, x, v_vals, r_vals, y, w, tau, params, K, T)
        for p in (p1, p2):
            if p.min() < -1e-5 or p.max() > 1.0 + 1e-5:
                raise QuadratureError("table probabilities escaped [0, 1]")
        p1 = np.clip(p1, 0.0, 1.0)
        p2 = np.clip(p2, 0.0, 1.0)
        return s_vals[:, None, None] * p1 - K * bond[None, None, :] * p2

    n_panels = max(16, int(math.ceil(ycut / 2.0)))
    prev = price_at(n_panels)
    for _ in range(4):
        n_panels *= 2
        cur = price_at(n_panels)
        if np.max(np.abs(cur - prev)) <= tol:
            return np.maximum(cur, 0.0)
        prev = cur
    raise QuadratureError("price table did not converge under panel refinement")

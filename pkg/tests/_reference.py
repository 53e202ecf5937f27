"""Independent reference implementations used as test oracles.

Everything here is written as plainly as possible (scalar loops, dense
matrices, textbook formulas) and deliberately avoids the production code
paths it is used to check.
"""

from __future__ import annotations

import math

import numpy as np

from hhwpde.grid import Grid3D, GridMode
from hhwpde.model import HHWParams, OptionKind, OptionSpec, mean_reversion


# -- finite-difference weights, recomputed from the width formulas ----------

def bwd_weights(dm, d0):
    return {
        -2: d0 / (dm * (dm + d0)),
        -1: (-dm - d0) / (dm * d0),
        0: (dm + 2 * d0) / (d0 * (dm + d0)),
    }


def ctr_weights(d0, dp):
    return {
        -1: -dp / (d0 * (d0 + dp)),
        0: (dp - d0) / (d0 * dp),
        1: d0 / (dp * (d0 + dp)),
    }


def fwd_weights(dp, dpp):
    return {
        0: (-2 * dp - dpp) / (dp * (dp + dpp)),
        1: (dp + dpp) / (dp * dpp),
        2: -dp / (dpp * (dp + dpp)),
    }


def snd_weights(d0, dp):
    return {
        -1: 2 / (d0 * (d0 + dp)),
        0: -2 / (d0 * dp),
        1: 2 / (dp * (d0 + dp)),
    }


def dense_operator(params: HHWParams, option: OptionSpec, grid: Grid3D, T: float, t: float):
    """Full matrix A(t) and vector g(t) assembled point by point."""
    barrier = option.kind is OptionKind.UP_AND_OUT_CALL
    m1, m2, m3 = grid.m1, grid.m2, grid.m3
    I, J, Kn = grid.I, grid.J, grid.Kn
    M = grid.M
    sp = grid.s_mesh.points
    vp = grid.v_mesh.points
    rp = grid.r_mesh.points
    ds = grid.s_mesh.widths
    dv = grid.v_mesh.widths
    dr = grid.r_mesh.widths
    b_now = mean_reversion(params, T - t)

    A = np.zeros((M, M))
    g = np.zeros(M)

    i_hi = m1 if not barrier else m1 - 1
    j_hi = m2 - 1 if not barrier else m2

    def lidx(i, j, k):
        return (k * J + j) * I + (i - 1)

    def bval(i, j, k):
        # boundary values of the eliminated Dirichlet rows
        if i == 0:
            return 0.0
        if barrier and i == m1:
            return 0.0
        if not barrier and j == m2:
            return sp[i]
        raise AssertionError("leg landed on an unexpected boundary")

    for k in range(Kn):
        for j in range(j_hi + 1):
            for i in range(1, i_hi + 1):
                row = lidx(i, j, k)

                def add(ii, jj, kk, w):
                    if w == 0.0:
                        return
                    inside = 1 <= ii <= i_hi and 0 <= jj <= j_hi and 0 <= kk <= m3
                    if inside:
                        A[row, lidx(ii, jj, kk)] += w
                    else:
                        g[row] += w * bval(ii, jj, kk)

                s_i, v_j, r_k = sp[i], vp[j], rp[k]

                # --- s-direction -------------------------------------
                if (not barrier) and i == m1:
                    # Neumann ds u = 1: advection becomes a constant,
                    # diffusion via virtual point with unit slope
                    g[row] += r_k * s_i
                    h = ds[m1 - 1]
                    cd = 0.5 * s_i**2 * v_j
                    add(i - 1, j, k, cd * 2 / h**2)
                    add(i, j, k, -cd * 2 / h**2)
                    g[row] += cd * 2 / h
                else:
                    cd = 0.5 * s_i**2 * v_j
                    for o, w in snd_weights(ds[i - 1], ds[i]).items():
                        add(i + o, j, k, cd * w)
                    ca = r_k * s_i
                    if barrier and r_k < 0.0 and i >= 2:
                        wmap = bwd_weights(ds[i - 2], ds[i - 1])
                    elif barrier and r_k >= 0.0 and i <= m1 - 2:
                        wmap = fwd_weights(ds[i], ds[i + 1])
                    else:
                        wmap = ctr_weights(ds[i - 1], ds[i])
                    for o, w in wmap.items():
                        add(i + o, j, k, ca * w)

                # --- v-direction -------------------------------------
                if j == 0:
                    # v = 0 inserted into the PDE: only the advection
                    # kappa * eta remains among the v-terms
                    for o, w in fwd_weights(dv[0], dv[1]).items():
                        add(i, j + o, k, params.kappa * params.eta * w)
                elif barrier and j == m2:
                    h = dv[m2 - 1]
                    cd = 0.5 * params.sigma1**2 * v_j
                    add(i, j - 1, k, cd * 2 / h**2)
                    add(i, j, k, -cd * 2 / h**2)
                else:
                    cd = 0.5 * params.sigma1**2 * v_j
                    for o, w in snd_weights(dv[j - 1], dv[j]).items():
                        add(i, j + o, k, cd * w)
                    ca = params.kappa * (params.eta - v_j)
                    if v_j > params.eta and j >= 2:
                        wmap = bwd_weights(dv[j - 2], dv[j - 1])
                    else:
                        wmap = ctr_weights(dv[j - 1], dv[j])
                    for o, w in wmap.items():
                        add(i, j + o, k, ca * w)

                # --- r-direction -------------------------------------
                cd = 0.5 * params.sigma2**2
                if k == 0:
                    h = dr[0]
                    add(i, j, 1, cd * 2 / h**2)
                    add(i, j, 0, -cd * 2 / h**2)
                elif k == m3:
                    h = dr[m3 - 1]
                    add(i, j, m3 - 1, cd * 2 / h**2)
                    add(i, j, m3, -cd * 2 / h**2)
                else:
                    for o, w in snd_weights(dr[k - 1], dr[k]).items():
                        add(i, j, k + o, cd * w)
                    ca = params.a * (b_now - r_k)
                    for o, w in ctr_weights(dr[k - 1], dr[k]).items():
                        add(i, j, k + o, ca * w)

                # --- mixed derivatives (central products) -------------
                s_mixed_ok = i <= m1 - 1  # dropped on the s-Neumann row
                if params.rho12 != 0.0 and s_mixed_ok and 1 <= j <= m2 - 1:
                    c = params.rho12 * params.sigma1 * s_i * v_j
                    ws = ctr_weights(ds[i - 1], ds[i])
                    wv = ctr_weights(dv[j - 1], dv[j])
                    for p, a_w in ws.items():
                        for q, b_w in wv.items():
                            add(i + p, j + q, k, c * a_w * b_w)
                if params.rho13 != 0.0 and s_mixed_ok and j >= 1 and 1 <= k <= m3 - 1:
                    c = params.rho13 * params.sigma2 * s_i * math.sqrt(v_j)
                    ws = ctr_weights(ds[i - 1], ds[i])
                    wr = ctr_weights(dr[k - 1], dr[k])
                    for p, a_w in ws.items():
                        for q, b_w in wr.items():
                            add(i + p, j, k + q, c * a_w * b_w)
                if params.rho23 != 0.0 and 1 <= j <= m2 - 1 and 1 <= k <= m3 - 1:
                    c = params.rho23 * params.sigma1 * params.sigma2 * math.sqrt(v_j)
                    wv = ctr_weights(dv[j - 1], dv[j])
                    wr = ctr_weights(dr[k - 1], dr[k])
                    for p, a_w in wv.items():
                        for q, b_w in wr.items():
                            add(i, j + p, k + q, c * a_w * b_w)

                # --- reaction ----------------------------------------
                A[row, row] += -r_k

    return A, g


# -- dense test system implementing the split-operator surface --------------

class DenseSplitSystem:
    """Small dense system with the SplitOperator duck type, for steppers."""

    def __init__(self, A0, A1, A2, A3_fn, g_const, g3_fn, U0, T):
        self.A0_mat = A0
        self.A_dir = {1: A1, 2: A2}
        self.A3_fn = A3_fn
        self.g_const_vec = g_const
        self.g3_fn = g3_fn
        self.U0 = U0
        self.T = T
        self.M = len(U0)
        self.split = self

    def apply_A0(self, x):
        return self.A0_mat @ x

    def apply_dir(self, j, x):
        return self.A_dir[j] @ x

    def apply_dir3(self, t, x):
        return self.A3_fn(t) @ x

    def apply_full(self, t, x):
        return self.apply_A0(x) + self.apply_dir(1, x) + self.apply_dir(2, x) + self.apply_dir3(t, x)

    def g3(self, t):
        return self.g3_fn(t)

    def g_total(self, t):
        return self.g_const_vec + self.g3_fn(t)

    class _DenseLU:
        def __init__(self, mat):
            self.mat = mat

        def solve(self, rhs):
            return np.linalg.solve(self.mat, rhs)

    def factor_dir(self, j, scale):
        return self._DenseLU(np.eye(self.M) - scale * self.A_dir[j])

    def factor_dir3(self, t, scale):
        return self._DenseLU(np.eye(self.M) - scale * self.A3_fn(t))


def random_dense_system(rng, M=12, time_dependent=True, with_A0=True, g3_nonzero=True, T=1.0):
    """Stable-ish random split system for stage-replay comparisons."""

    def stable():
        mat = 0.3 * rng.standard_normal((M, M))
        return mat - 1.2 * np.eye(M)

    A0 = 0.25 * rng.standard_normal((M, M)) if with_A0 else np.zeros((M, M))
    A1 = stable()
    A2 = stable()
    A3_base = stable()
    A3_mod = 0.2 * rng.standard_normal((M, M)) if time_dependent else np.zeros((M, M))

    def A3_fn(t):
        return A3_base + math.sin(1.3 * t) * A3_mod

    g_const = rng.standard_normal(M)
    g3_vec = rng.standard_normal(M) if g3_nonzero else np.zeros(M)

    def g3_fn(t):
        return math.cos(0.7 * t) * g3_vec if g3_nonzero else np.zeros(M)

    U0 = rng.standard_normal(M)
    return DenseSplitSystem(A0, A1, A2, A3_fn, g_const, g3_fn, U0, T)


# -- literal stage replays of the four schemes -------------------------------

def replay_step(scheme: str, sys: DenseSplitSystem, U, theta, dt, t_prev, t_next):
    """One step evaluated with dense solves, transcribed stage by stage."""
    Ident = np.eye(sys.M)
    A0 = sys.A0_mat
    A1 = sys.A_dir[1]
    A2 = sys.A_dir[2]
    A3p = sys.A3_fn(t_prev)
    A3n = sys.A3_fn(t_next)
    Ap = A0 + A1 + A2 + A3p
    An = A0 + A1 + A2 + A3n
    gp = sys.g_const_vec + sys.g3_fn(t_prev)
    dg = sys.g3_fn(t_next) - sys.g3_fn(t_prev)

    Y0 = U + dt * (Ap @ U + gp)
    Y1 = np.linalg.solve(Ident - theta * dt * A1, Y0 - theta * dt * (A1 @ U))
    Y2 = np.linalg.solve(Ident - theta * dt * A2, Y1 - theta * dt * (A2 @ U))
    Y3 = np.linalg.solve(Ident - theta * dt * A3n, Y2 - theta * dt * (A3p @ U) + theta * dt * dg)
    if scheme == "do":
        return Y3
    if scheme == "cs":
        Yt0 = Y0 + 0.5 * dt * (A0 @ (Y3 - U))
        Yt1 = np.linalg.solve(Ident - theta * dt * A1, Yt0 - theta * dt * (A1 @ U))
        Yt2 = np.linalg.solve(Ident - theta * dt * A2, Yt1 - theta * dt * (A2 @ U))
        return np.linalg.solve(Ident - theta * dt * A3n, Yt2 - theta * dt * (A3p @ U) + theta * dt * dg)
    if scheme == "mcs":
        Yh0 = Y0 + theta * dt * (A0 @ (Y3 - U))
        Yt0 = Yh0 + (0.5 - theta) * dt * (An @ Y3 - Ap @ U + dg)
        Yt1 = np.linalg.solve(Ident - theta * dt * A1, Yt0 - theta * dt * (A1 @ U))
        Yt2 = np.linalg.solve(Ident - theta * dt * A2, Yt1 - theta * dt * (A2 @ U))
        return np.linalg.solve(Ident - theta * dt * A3n, Yt2 - theta * dt * (A3p @ U) + theta * dt * dg)
    if scheme == "hv":
        Yt0 = Y0 + 0.5 * dt * (An @ Y3 - Ap @ U + dg)
        Yt1 = np.linalg.solve(Ident - theta * dt * A1, Yt0 - theta * dt * (A1 @ Y3))
        Yt2 = np.linalg.solve(Ident - theta * dt * A2, Yt1 - theta * dt * (A2 @ Y3))
        return np.linalg.solve(Ident - theta * dt * A3n, Yt2 - theta * dt * (A3n @ Y3))
    raise ValueError(scheme)


# -- independent Heston semi-closed form --------------------------------------

def heston_logprice_cf(u, x0, r0, T, kappa, eta, sigma, rho, v0):
    """Characteristic function of ln S_T under constant-rate Heston."""
    u = np.asarray(u, dtype=complex)
    xi = kappa - 1j * rho * sigma * u
    d = np.sqrt(xi * xi + sigma**2 * (1j * u + u * u))
    gg = (xi - d) / (xi + d)
    ee = np.exp(-d * T)
    cc = (
        1j * u * r0 * T
        + (kappa * eta / sigma**2) * ((xi - d) * T - 2.0 * np.log((1.0 - gg * ee) / (1.0 - gg)))
    )
    dd = (xi - d) / sigma**2 * (1.0 - ee) / (1.0 - gg * ee)
    return np.exp(cc + dd * v0 + 1j * u * x0)


def heston_call(s0, K, r0, T, kappa, eta, sigma, rho, v0):
    """Classic Heston call via the shifted-argument P1 representation."""
    from scipy.integrate import quad

    x0 = math.log(s0)
    lnK = math.log(K)
    fwd = s0 * math.exp(r0 * T)

    def p1_ig(u):
        val = heston_logprice_cf(u - 1j, x0, r0, T, kappa, eta, sigma, rho, v0)
        return (np.exp(-1j * u * lnK) * val / (1j * u * fwd)).real

    def p2_ig(u):
        val = heston_logprice_cf(u, x0, r0, T, kappa, eta, sigma, rho, v0)
        return (np.exp(-1j * u * lnK) * val / (1j * u)).real

    p1 = 0.5 + quad(p1_ig, 0.0, 400.0, epsabs=1e-10, limit=500)[0] / math.pi
    p2 = 0.5 + quad(p2_ig, 0.0, 400.0, epsabs=1e-10, limit=500)[0] / math.pi
    return s0 * p1 - K * math.exp(-r0 * T) * p2


def black_scholes_call(s0, K, r0, T, vol):
    from math import erf, exp, log, sqrt

    def ncdf(z):
        return 0.5 * (1.0 + erf(z / sqrt(2.0)))

    d1 = (log(s0 / K) + (r0 + 0.5 * vol * vol) * T) / (vol * sqrt(T))
    d2 = d1 - vol * sqrt(T)
    return s0 * ncdf(d1) - K * exp(-r0 * T) * ncdf(d2)

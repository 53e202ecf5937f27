"""Finite-difference semidiscretization of the pricing PDE.

Builds the stiff ODE system U'(t) = A(t) U(t) + g(t) on the active grid.
The operator splits into four parts: A0 collects every mixed-derivative
term, A1/A2/A3(t) collect the s-, v- and r-direction terms, and the -r u
reaction term is spread evenly (one third each) over A1, A2, A3.  Only A3
depends on time, through the advection coefficient a (b(T - t) - r).

Derivatives are replaced by second-order finite differences on nonuniform
meshes:

* central three-point formulas for first and second derivatives by default;
* a one-sided backward formula for the v-advection where v exceeds the
  long-run variance level (damps oscillations from advection towards the
  far Dirichlet boundary);
* a forward formula for the v-advection on the v = 0 boundary, where the
  PDE itself (with v = 0 inserted) is discretized;
* mixed derivatives as products of two central formulas (9-point stencils);
* Neumann boundaries via a virtual exterior point whose value comes from
  linear extrapolation with the prescribed slope;
* up-and-out mode replaces the s-advection by backward/forward one-sided
  formulas for r < 0 / r >= 0 and turns v = Vmax into a Neumann boundary;
  every boundary condition is then homogeneous and g vanishes.

Dirichlet rows are eliminated; stencil legs landing on them contribute
weight * boundary value to the matching g part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as _model
from .grid import Grid3D, GridMode
from .linalg import BandedMatrix, SparseOperator, band_factor
from .model import HHWParams, OptionKind, OptionSpec

__all__ = [
    "StencilCoeffs",
    "coeff_backward",
    "coeff_central",
    "coeff_forward",
    "coeff_second",
    "SplitOperator",
    "SemidiscreteSystem",
    "assemble",
    "initial_vector",
]

OFFSETS = (-2, -1, 0, 1, 2)
_KL = _KU = 2


@dataclass(frozen=True)
class StencilCoeffs:
    """Relative mesh offsets and matching finite-difference weights."""

    offsets: tuple[int, ...]
    weights: tuple[float, ...]


def _check_widths(*widths):
    for w in widths:
        if w <= 0.0:
            raise ValueError("mesh widths must be positive")


def coeff_backward(dx_im1: float, dx_i: float) -> StencilCoeffs:
    """Second-order backward first-derivative weights at offsets (-2,-1,0)."""
    _check_widths(dx_im1, dx_i)
    return StencilCoeffs(
        (-2, -1, 0),
        (
            dx_i / (dx_im1 * (dx_im1 + dx_i)),
            (-dx_im1 - dx_i) / (dx_im1 * dx_i),
            (dx_im1 + 2.0 * dx_i) / (dx_i * (dx_im1 + dx_i)),
        ),
    )


def coeff_central(dx_i: float, dx_ip1: float) -> StencilCoeffs:
    """Central first-derivative weights at offsets (-1, 0, 1)."""
    _check_widths(dx_i, dx_ip1)
    return StencilCoeffs(
        (-1, 0, 1),
        (
            -dx_ip1 / (dx_i * (dx_i + dx_ip1)),
            (dx_ip1 - dx_i) / (dx_i * dx_ip1),
            dx_i / (dx_ip1 * (dx_i + dx_ip1)),
        ),
    )


def coeff_forward(dx_ip1: float, dx_ip2: float) -> StencilCoeffs:
    """Second-order forward first-derivative weights at offsets (0, 1, 2)."""
    _check_widths(dx_ip1, dx_ip2)
    return StencilCoeffs(
        (0, 1, 2),
        (
            (-2.0 * dx_ip1 - dx_ip2) / (dx_ip1 * (dx_ip1 + dx_ip2)),
            (dx_ip1 + dx_ip2) / (dx_ip1 * dx_ip2),
            -dx_ip1 / (dx_ip2 * (dx_ip1 + dx_ip2)),
        ),
    )


def coeff_second(dx_i: float, dx_ip1: float) -> StencilCoeffs:
    """Central second-derivative weights at offsets (-1, 0, 1)."""
    _check_widths(dx_i, dx_ip1)
    return StencilCoeffs(
        (-1, 0, 1),
        (
            2.0 / (dx_i * (dx_i + dx_ip1)),
            -2.0 / (dx_i * dx_ip1),
            2.0 / (dx_ip1 * (dx_i + dx_ip1)),
        ),
    )


def _zero_diags(shape) -> dict[int, np.ndarray]:
    return {o: np.zeros(shape) for o in OFFSETS}


def _diag_matvec(diags: dict[int, np.ndarray], x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    batch = np.broadcast_shapes(*(d.shape[:-1] for d in diags.values()), x.shape[:-1])
    y = np.zeros(batch + (n,))
    for o, d in diags.items():
        if o >= 0:
            y[..., : n - o] += d[..., : n - o] * x[..., o:]
        else:
            y[..., -o:] += d[..., -o:] * x[..., : n + o]
    return y


class _LineSolver:
    """Banded LU of (I - scale * A_dir) applied line by line."""

    def __init__(self, lu, to_lines, from_lines):
        self._lu = lu
        self._to = to_lines
        self._from = from_lines

    def solve(self, vec: np.ndarray) -> np.ndarray:
        return self._from(self._lu.solve(self._to(vec)))


class SplitOperator:
    """The four split matrices plus boundary vectors of one grid/option pair.

    Direction operators are stored as per-line diagonals: shape (Kn, J, I)
    for the s-direction, (Kn, 1, J) for v (lines identical along i) and
    (Kn,) for r (every line identical).  A3(t) = static + b(T - t) * scale
    shares its sparsity across time.
    """

    def __init__(self, grid, params, T, d1, d2, d3_static, d3_bscale, A0, g0, g1, g2):
        self.grid = grid
        self.params = params
        self.T = float(T)
        self.I, self.J, self.Kn = grid.I, grid.J, grid.Kn
        self.M = grid.M
        self.d1 = d1
        self.d2 = d2
        self.d3_static = d3_static
        self.d3_bscale = d3_bscale
        self.A0 = A0
        self.g0 = g0
        self.g1 = g1
        self.g2 = g2
        self.g_const = g0 + g1 + g2
        self.g_const.setflags(write=False)
        self._g3 = np.zeros(self.M)
        self._g3.setflags(write=False)

    # -- boundary vectors ---------------------------------------------------
    def g3(self, t: float) -> np.ndarray:
        """Time-dependent boundary part; identically zero for both payoffs."""
        return self._g3

    def g_total(self, t: float) -> np.ndarray:
        return self.g_const + self.g3(t)

    # -- operator applications ----------------------------------------------
    def b_level(self, t: float) -> float:
        return _model.mean_reversion(self.params, self.T - t)

    def _d3(self, t: float) -> dict[int, np.ndarray]:
        b = self.b_level(t)
        return {o: self.d3_static[o] + b * self.d3_bscale[o] for o in OFFSETS}

    def apply_A0(self, x: np.ndarray) -> np.ndarray:
        return self.A0.apply(x)

    def apply_dir(self, j: int, x: np.ndarray) -> np.ndarray:
        x3 = x.reshape(self.Kn, self.J, self.I)
        if j == 1:
            return _diag_matvec(self.d1, x3).reshape(self.M)
        if j == 2:
            y = _diag_matvec(self.d2, x3.transpose(0, 2, 1))
            return y.transpose(0, 2, 1).reshape(self.M)
        raise ValueError("direction index must be 1 or 2")

    def apply_dir3(self, t: float, x: np.ndarray) -> np.ndarray:
        x3 = x.reshape(self.Kn, self.J, self.I)
        y = _diag_matvec(self._d3(t), x3.transpose(1, 2, 0))
        return y.transpose(2, 0, 1).reshape(self.M)

    def apply_full(self, t: float, x: np.ndarray) -> np.ndarray:
        """A(t) x as the sum of the four split applications."""
        return (
            self.apply_A0(x)
            + self.apply_dir(1, x)
            + self.apply_dir(2, x)
            + self.apply_dir3(t, x)
        )

    # -- implicit-stage factorizations ---------------------------------------
    def _shifted(self, diags: dict[int, np.ndarray], scale: float, batch_shape, n):
        out = {}
        for o in OFFSETS:
            d = -scale * np.broadcast_to(diags[o], batch_shape + (n,))
            if o == 0:
                d = d + 1.0
            out[o] = d
        return out

    def factor_dir(self, j: int, scale: float) -> _LineSolver:
        """LU of (I - scale * A_j) for j in {1, 2}, reusable across steps."""
        Kn, J, I = self.Kn, self.J, self.I
        if j == 1:
            sh = self._shifted(self.d1, scale, (Kn, J), I)
            lu = band_factor(BandedMatrix.from_diagonals(I, _KL, _KU, sh))
            return _LineSolver(
                lu,
                lambda x: x.reshape(Kn, J, I),
                lambda y: y.reshape(self.M),
            )
        if j == 2:
            sh = self._shifted(self.d2, scale, (Kn, 1), J)
            lu = band_factor(BandedMatrix.from_diagonals(J, _KL, _KU, sh))
            return _LineSolver(
                lu,
                lambda x: x.reshape(Kn, J, I).transpose(0, 2, 1),
                lambda y: y.transpose(0, 2, 1).reshape(self.M),
            )
        raise ValueError("direction index must be 1 or 2")

    def factor_dir3(self, t: float, scale: float) -> _LineSolver:
        Kn, J, I = self.Kn, self.J, self.I
        sh = self._shifted(self._d3(t), scale, (), Kn)
        lu = band_factor(BandedMatrix.from_diagonals(Kn, _KL, _KU, sh))
        return _LineSolver(
            lu,
            lambda x: x.reshape(Kn, J, I).transpose(1, 2, 0),
            lambda y: y.transpose(2, 0, 1).reshape(self.M),
        )

    # -- testing helpers ------------------------------------------------------
    def direction_csr(self, j: int, t: float | None = None):
        """Direction operator as an explicit sparse matrix (tests, small M)."""
        import scipy.sparse as sp

        Kn, J, I = self.Kn, self.J, self.I
        if j == 1:
            diags, stride, n, local = self.d1, 1, I, 2
        elif j == 2:
            diags, stride, n, local = self.d2, I, J, 1
        elif j == 3:
            diags, stride, n, local = self._d3(0.0 if t is None else t), I * J, Kn, 0
        else:
            raise ValueError("direction index must be 1, 2 or 3")
        kk, jj, ii = np.meshgrid(
            np.arange(Kn), np.arange(J), np.arange(I), indexing="ij"
        )
        loc = (kk, jj, ii)[local]
        l = (kk * J + jj) * I + ii
        rows, cols, vals = [], [], []
        for o in OFFSETS:
            d = np.broadcast_to(diags[o], (Kn, J, I))
            ok = (loc + o >= 0) & (loc + o < n) & (d != 0.0)
            rows.append(l[ok])
            cols.append(l[ok] + o * stride)
            vals.append(d[ok])
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.M, self.M),
        ).tocsr()


@dataclass(frozen=True)
class SemidiscreteSystem:
    """Split operator, payoff vector and the inputs they came from."""

    split: SplitOperator
    U0: np.ndarray
    grid: Grid3D
    option: OptionSpec
    params: HHWParams
    T: float


def initial_vector(option: OptionSpec, grid: Grid3D) -> np.ndarray:
    """Call payoff max(0, s - K) evaluated on the active grid points."""
    _check_mode(option, grid)
    payoff = np.maximum(0.0, grid.s_active - option.K)
    full = np.broadcast_to(payoff, (grid.Kn, grid.J, grid.I))
    return full.reshape(grid.M).copy()


def _check_mode(option: OptionSpec, grid: Grid3D):
    want = GridMode.VANILLA if option.kind is OptionKind.VANILLA_CALL else GridMode.BARRIER
    if grid.mode is not want:
        raise ValueError(f"grid mode {grid.mode} does not match option kind {option.kind}")
    if option.kind is OptionKind.UP_AND_OUT_CALL:
        if abs(grid.s_mesh.points[-1] - option.B) > 1e-9 * option.B:
            raise ValueError("barrier grid must truncate the s-domain at B")


def _s_tables(grid: Grid3D):
    """s-direction weight tables, coefficient factors s and s^2/2 included."""
    I = grid.I
    s = grid.s_active
    ds = grid.s_mesh.widths
    w2 = _zero_diags(I)
    adv = {}
    g_slope = 0.0
    if grid.mode is GridMode.VANILLA:
        wc = _zero_diags(I)
        for a in range(I - 1):
            c2 = coeff_second(ds[a], ds[a + 1])
            for o, w in zip(c2.offsets, c2.weights):
                w2[o][a] = 0.5 * s[a] ** 2 * w
            cc = coeff_central(ds[a], ds[a + 1])
            for o, w in zip(cc.offsets, cc.weights):
                wc[o][a] = s[a] * w
        # Neumann row at s = Smax: virtual point with unit slope; the slope
        # constant 2/h feeds g1, advection r*s*1 feeds g1 as well
        h = ds[I - 1]
        w2[-1][I - 1] = 0.5 * s[I - 1] ** 2 * (2.0 / h**2)
        w2[0][I - 1] = -0.5 * s[I - 1] ** 2 * (2.0 / h**2)
        g_slope = 2.0 / h
        adv["central"] = wc
    else:
        wb = _zero_diags(I)
        wf = _zero_diags(I)
        for a in range(I):
            c2 = coeff_second(ds[a], ds[a + 1])
            for o, w in zip(c2.offsets, c2.weights):
                w2[o][a] = 0.5 * s[a] ** 2 * w
            cb = coeff_backward(ds[a - 1], ds[a]) if a >= 1 else coeff_central(ds[a], ds[a + 1])
            for o, w in zip(cb.offsets, cb.weights):
                wb[o][a] = s[a] * w
            cf = coeff_forward(ds[a + 1], ds[a + 2]) if a <= I - 2 else coeff_central(ds[a], ds[a + 1])
            for o, w in zip(cf.offsets, cf.weights):
                wf[o][a] = s[a] * w
        adv["backward"] = wb
        adv["forward"] = wf
    return w2, adv, g_slope


def _v_tables(grid: Grid3D, params: HHWParams):
    """Combined v-direction diagonals and the Dirichlet fold weights."""
    J = grid.J
    v = grid.v_active
    dv = grid.v_mesh.widths
    m2 = grid.m2
    diags = _zero_diags(J)
    fold = np.zeros(J)

    def _place(j, coef, coeffs: StencilCoeffs):
        for o, w in zip(coeffs.offsets, coeffs.weights):
            if j + o <= J - 1:
                diags[o][j] += coef * w
            else:
                fold[j] += coef * w

    for j in range(J):
        if j == 0:
            # v = 0: PDE degenerates, only the advection kappa*eta survives
            # among the v-terms; one-sided forward difference
            _place(0, params.kappa * params.eta, coeff_forward(dv[0], dv[1]))
        elif grid.mode is GridMode.BARRIER and j == m2:
            # Neumann at v = Vmax: virtual point with zero slope
            h = dv[m2 - 1]
            cd = 0.5 * params.sigma1**2 * v[j]
            diags[-1][j] += cd * 2.0 / h**2
            diags[0][j] += -cd * 2.0 / h**2
        else:
            cd = 0.5 * params.sigma1**2 * v[j]
            _place(j, cd, coeff_second(dv[j - 1], dv[j]))
            ca = params.kappa * (params.eta - v[j])
            if v[j] > params.eta and j >= 2:
                _place(j, ca, coeff_backward(dv[j - 2], dv[j - 1]))
            else:
                _place(j, ca, coeff_central(dv[j - 1], dv[j]))
    return diags, fold


def _r_tables(grid: Grid3D, params: HHWParams):
    """Static r-direction diagonals and the b(T-t)-scaled advection part."""
    Kn = grid.Kn
    r = grid.r_active
    dr = grid.r_mesh.widths
    static = _zero_diags(Kn)
    bscale = _zero_diags(Kn)
    cd = 0.5 * params.sigma2**2
    for k in range(Kn):
        if k == 0:
            h = dr[0]
            static[1][0] += cd * 2.0 / h**2
            static[0][0] += -cd * 2.0 / h**2
        elif k == Kn - 1:
            h = dr[-1]
            static[-1][k] += cd * 2.0 / h**2
            static[0][k] += -cd * 2.0 / h**2
        else:
            c2 = coeff_second(dr[k - 1], dr[k])
            for o, w in zip(c2.offsets, c2.weights):
                static[o][k] += cd * w
            cc = coeff_central(dr[k - 1], dr[k])
            for o, w in zip(cc.offsets, cc.weights):
                static[o][k] += -params.a * r[k] * w
                bscale[o][k] += params.a * w
        static[0][k] += -r[k] / 3.0
    return static, bscale


def _assemble_mixed(grid: Grid3D, params: HHWParams):
    """Mixed-derivative operator A0 (9-point product stencils) and g0."""
    I, J, Kn = grid.I, grid.J, grid.Kn
    M = grid.M
    s, v, r = grid.s_active, grid.v_active, grid.r_active
    ds, dv, dr = grid.s_mesh.widths, grid.v_mesh.widths, grid.r_mesh.widths
    m2, m3 = grid.m2, grid.m3
    vanilla = grid.mode is GridMode.VANILLA

    bs = _zero_diags(I)
    a_central_hi = I - 2 if vanilla else I - 1
    for a in range(a_central_hi + 1):
        c = coeff_central(ds[a], ds[a + 1])
        for o, w in zip(c.offsets, c.weights):
            bs[o][a] = w
    bv = _zero_diags(J)
    for j in range(1, m2):
        c = coeff_central(dv[j - 1], dv[j])
        for o, w in zip(c.offsets, c.weights):
            bv[o][j] = w
    br = _zero_diags(Kn)
    for k in range(1, m3):
        c = coeff_central(dr[k - 1], dr[k])
        for o, w in zip(c.offsets, c.weights):
            br[o][k] = w

    rows_all, cols_all, vals_all = [], [], []
    g0 = np.zeros(M)

    def _legs_sv():
        aa = np.arange(0, a_central_hi + 1)
        jj = np.arange(1, (J - 1 if vanilla else J - 2) + 1)
        kk = np.arange(Kn)
        coef = params.rho12 * params.sigma1 * np.outer(v[jj], s[aa])  # (nj, na)
        for p in (-1, 0, 1):
            for q in (-1, 0, 1):
                w3 = (coef * np.outer(bv[q][jj], bs[p][aa]))[None, :, :]
                yield aa, jj, kk, aa + p, jj + q, kk, np.broadcast_to(
                    w3, (len(kk), len(jj), len(aa))
                )

    def _legs_sr():
        aa = np.arange(0, a_central_hi + 1)
        jj = np.arange(1, J)  # coefficient vanishes at j = 0
        kk = np.arange(1, Kn - 1)
        coef = params.rho13 * params.sigma2 * np.outer(np.sqrt(v[jj]), s[aa])
        for p in (-1, 0, 1):
            for w in (-1, 0, 1):
                w3 = (
                    coef[None, :, :]
                    * (br[w][kk])[:, None, None]
                    * (bs[p][aa])[None, None, :]
                )
                yield aa, jj, kk, aa + p, jj, kk + w, w3

    def _legs_vr():
        aa = np.arange(I)
        jj = np.arange(1, (J - 1 if vanilla else J - 2) + 1)
        kk = np.arange(1, Kn - 1)
        coef = params.rho23 * params.sigma1 * params.sigma2 * np.sqrt(v[jj])
        for q in (-1, 0, 1):
            for w in (-1, 0, 1):
                w2d = (coef * bv[q][jj])[None, :, None] * (br[w][kk])[:, None, None]
                yield aa, jj, kk, aa, jj + q, kk + w, np.broadcast_to(
                    w2d, (len(kk), len(jj), len(aa))
                )

    term_iters = []
    if params.rho12 != 0.0:
        term_iters.append(_legs_sv())
    if params.rho13 != 0.0:
        term_iters.append(_legs_sr())
    if params.rho23 != 0.0:
        term_iters.append(_legs_vr())

    for it in term_iters:
        for aa, jj, kk, a2, j2, k2, w3 in it:
            rows3 = (kk[:, None, None] * J + jj[None, :, None]) * I + aa[None, None, :]
            s_ok = (a2 >= 0) & (a2 <= I - 1)
            v_fold = j2 == J  # possible for vanilla only
            a2c = np.clip(a2, 0, I - 1)
            j2c = np.clip(j2, 0, J - 1)
            cols3 = (k2[:, None, None] * J + j2c[None, :, None]) * I + a2c[None, None, :]
            keep = s_ok[None, None, :] & ~v_fold[None, :, None] & (w3 != 0.0)
            rows_all.append(rows3[keep])
            cols_all.append(cols3[keep])
            vals_all.append(w3[keep])
            fold = s_ok[None, None, :] & v_fold[None, :, None] & (w3 != 0.0)
            if fold.any():
                # leg lands on the v = Vmax Dirichlet boundary where u = s
                bvals = np.broadcast_to(s[a2c][None, None, :], w3.shape)
                np.add.at(g0, rows3[fold], (w3 * bvals)[fold])

    if rows_all:
        A0 = SparseOperator(
            (M, M),
            np.concatenate(rows_all),
            np.concatenate(cols_all),
            np.concatenate(vals_all),
        )
    else:
        A0 = SparseOperator((M, M))
    return A0, g0


def assemble(params: HHWParams, option: OptionSpec, grid: Grid3D, T: float) -> SemidiscreteSystem:
    """Build the split semidiscrete system for one option on one grid."""
    _check_mode(option, grid)
    I, J, Kn = grid.I, grid.J, grid.Kn
    s, v, r = grid.s_active, grid.v_active, grid.r_active
    vanilla = grid.mode is GridMode.VANILLA

    w2s, adv_s, g_slope = _s_tables(grid)
    d2v, fold_v = _v_tables(grid, params)
    d3_static, d3_bscale = _r_tables(grid, params)

    # s-direction diagonals: 1/2 s^2 v * second diff + r s * first diff - r/3
    d1 = {}
    for o in OFFSETS:
        diff = v[None, :, None] * w2s[o][None, None, :]
        if vanilla:
            advec = r[:, None, None] * adv_s["central"][o][None, None, :]
        else:
            sel = np.where(
                (r < 0.0)[:, None],
                adv_s["backward"][o][None, :],
                adv_s["forward"][o][None, :],
            )
            advec = r[:, None, None] * sel[:, None, :]
        d1[o] = diff + advec
    d1[0] = d1[0] + (-r / 3.0)[:, None, None]
    d1[0] = np.broadcast_to(d1[0], (Kn, J, I)).copy()

    # v-direction diagonals: identical along i, reaction term varies with k
    d2 = {o: np.broadcast_to(d2v[o][None, None, :], (Kn, 1, J)).copy() for o in OFFSETS}
    d2[0] += (-r / 3.0)[:, None, None]

    A0, g0 = _assemble_mixed(grid, params)

    g1 = np.zeros((Kn, J, I))
    if vanilla:
        s_last = s[I - 1]
        g1[:, :, I - 1] = r[:, None] * s_last + (0.5 * s_last**2 * g_slope) * v[None, :]
    g2 = np.zeros((Kn, J, I))
    nz = np.nonzero(fold_v)[0]
    for j in nz:
        # boundary value u = s at v = Vmax
        g2[:, j, :] = fold_v[j] * s[None, :]

    split = SplitOperator(
        grid,
        params,
        T,
        d1,
        d2,
        d3_static,
        d3_bscale,
        A0,
        g0,
        g1.reshape(grid.M),
        g2.reshape(grid.M),
    )
    return SemidiscreteSystem(
        split=split,
        U0=initial_vector(option, grid),
        grid=grid,
        option=option,
        params=params,
        T=float(T),
    )

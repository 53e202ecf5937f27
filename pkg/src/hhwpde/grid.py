"""Spatial meshes for the three-factor pricing PDE.

Tensor-product meshes over [0, Smax] x [0, Vmax] x [-Rmax, Rmax].  The asset
mesh is uniform inside a window [Sleft, Sright] containing the strike and
sinh-stretched outside it; the variance mesh is sinh-concentrated near v = 0;
the rate mesh is sinh-concentrated around a target level c.  An equidistant
variant of all three is available for comparison runs.

Active grid points exclude the Dirichlet boundaries, which depend on the
option type: vanilla calls drop s = 0 and v = Vmax, up-and-out calls drop
s = 0 and s = Smax (the barrier).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "GridSpec",
    "Mesh1D",
    "Grid3D",
    "GridMode",
    "default_spec",
    "with_barrier",
    "build_s_mesh",
    "build_v_mesh",
    "build_r_mesh",
    "build_uniform_meshes",
    "build_grid",
    "smoothness_report",
]


class GridMode(Enum):
    VANILLA = "vanilla"
    BARRIER = "barrier"


@dataclass(frozen=True)
class GridSpec:
    """Mesh-generation parameters for the three spatial directions."""

    m1: int
    m2: int
    m3: int
    Smax: float
    Vmax: float
    Rmax: float
    d1: float
    d2: float
    d3: float
    Sleft: float
    Sright: float
    c: float
    uniform: bool = False

    def __post_init__(self):
        if min(self.m1, self.m2, self.m3) < 1:
            raise ValueError("interval counts must be >= 1")
        if not (0.0 <= self.Sleft < self.Sright <= self.Smax):
            raise ValueError("require 0 <= Sleft < Sright <= Smax")
        if min(self.d1, self.d2, self.d3) <= 0.0:
            raise ValueError("stretching parameters must be positive")
        if self.Rmax <= 0.0 or self.Vmax <= 0.0:
            raise ValueError("domain bounds must be positive")


@dataclass(frozen=True)
class Mesh1D:
    """Strictly increasing 1-D mesh with cached widths.

    ``widths[i-1] = points[i] - points[i-1]``.  ``dxi`` records the spacing
    of the underlying equidistant transform variable when applicable.
    """

    points: np.ndarray
    widths: np.ndarray
    dxi: float | None = None

    def __post_init__(self):
        if np.any(np.diff(self.points) <= 0.0):
            raise ValueError("mesh points must be strictly increasing")

    def __len__(self):
        return len(self.points)


def _mesh(points: np.ndarray, dxi: float | None) -> Mesh1D:
    points = np.asarray(points, dtype=float)
    return Mesh1D(points=points, widths=np.diff(points), dxi=dxi)


def default_spec(K: float, T: float, c1: float, m: int, uniform: bool = False) -> GridSpec:
    """Production mesh parameters for strike K and maturity T.

    Smax = 14 K, Vmax = 10, Rmax = 1, d1 = K/20, d2 = Vmax/500,
    d3 = Rmax/400, Sleft = max(1/2, exp(-T/4)) K, Sright = K, c = c1,
    m1 = 2m and m2 = m3 = m.
    """
    if K <= 0.0 or T <= 0.0:
        raise ValueError("K and T must be positive")
    Vmax = 10.0
    Rmax = 1.0
    # the 1/4 here is a fixed reference rate for sizing the uniform window,
    # not the model short rate
    Sleft = max(0.5, math.exp(-T / 4.0)) * K
    return GridSpec(
        m1=2 * m,
        m2=m,
        m3=m,
        Smax=14.0 * K,
        Vmax=Vmax,
        Rmax=Rmax,
        d1=K / 20.0,
        d2=Vmax / 500.0,
        d3=Rmax / 400.0,
        Sleft=Sleft,
        Sright=K,
        c=c1,
        uniform=uniform,
    )


def with_barrier(spec: GridSpec, B: float) -> GridSpec:
    """Spec with the asset domain truncated at the barrier level B."""
    if B <= spec.Sright:
        raise ValueError("barrier must exceed the uniform-window right edge")
    from dataclasses import replace

    return replace(spec, Smax=B)


def build_s_mesh(spec: GridSpec) -> Mesh1D:
    """Asset mesh: uniform on [Sleft, Sright], sinh-stretched outside."""
    if spec.uniform:
        raise ValueError("build_s_mesh requires a nonuniform spec")
    d1 = spec.d1
    xi_min = math.asinh(-spec.Sleft / d1)
    xi_int = (spec.Sright - spec.Sleft) / d1
    xi_max = xi_int + math.asinh((spec.Smax - spec.Sright) / d1)
    xi = np.linspace(xi_min, xi_max, spec.m1 + 1)
    points = np.where(
        xi < 0.0,
        spec.Sleft + d1 * np.sinh(xi),
        np.where(xi <= xi_int, spec.Sleft + d1 * xi, spec.Sright + d1 * np.sinh(xi - xi_int)),
    )
    # pin endpoints exactly; the sinh round-trip is only accurate to ~1 ulp
    points[0] = 0.0
    points[-1] = spec.Smax
    return _mesh(points, (xi_max - xi_min) / spec.m1)


def build_v_mesh(spec: GridSpec) -> Mesh1D:
    """Variance mesh v_j = d2 sinh(j * deta), concentrated near v = 0."""
    deta = math.asinh(spec.Vmax / spec.d2) / spec.m2
    eta = deta * np.arange(spec.m2 + 1)
    points = spec.d2 * np.sinh(eta)
    points[0] = 0.0
    points[-1] = spec.Vmax
    return _mesh(points, deta)


def build_r_mesh(spec: GridSpec) -> Mesh1D:
    """Rate mesh r_k = c + d3 sinh(zeta_k), concentrated near r = c."""
    lo = math.asinh((-spec.Rmax - spec.c) / spec.d3)
    hi = math.asinh((spec.Rmax - spec.c) / spec.d3)
    dzeta = (hi - lo) / spec.m3
    zeta = lo + dzeta * np.arange(spec.m3 + 1)
    points = spec.c + spec.d3 * np.sinh(zeta)
    points[0] = -spec.Rmax
    points[-1] = spec.Rmax
    return _mesh(points, dzeta)


def build_uniform_meshes(spec: GridSpec, mode: GridMode = GridMode.VANILLA) -> "Grid3D":
    """Equidistant meshes over the same domain, same active-set rules."""
    s = np.linspace(0.0, spec.Smax, spec.m1 + 1)
    v = np.linspace(0.0, spec.Vmax, spec.m2 + 1)
    r = np.linspace(-spec.Rmax, spec.Rmax, spec.m3 + 1)
    return Grid3D(
        s_mesh=_mesh(s, s[1] - s[0]),
        v_mesh=_mesh(v, v[1] - v[0]),
        r_mesh=_mesh(r, r[1] - r[0]),
        mode=mode,
    )


def build_grid(spec: GridSpec, mode: GridMode = GridMode.VANILLA) -> "Grid3D":
    """Build the full tensor grid, honoring the ``uniform`` flag."""
    if spec.uniform:
        return build_uniform_meshes(spec, mode)
    return Grid3D(
        s_mesh=build_s_mesh(spec),
        v_mesh=build_v_mesh(spec),
        r_mesh=build_r_mesh(spec),
        mode=mode,
    )


@dataclass(frozen=True)
class Grid3D:
    """Tensor grid plus the flattened index map over active points.

    Active points for vanilla mode are (i, j, k) with 1 <= i <= m1,
    0 <= j <= m2 - 1, 0 <= k <= m3; barrier mode uses 1 <= i <= m1 - 1,
    0 <= j <= m2, 0 <= k <= m3.  The linear index runs i fastest, then j,
    then k.
    """

    s_mesh: Mesh1D
    v_mesh: Mesh1D
    r_mesh: Mesh1D
    mode: GridMode

    @property
    def m1(self) -> int:
        return len(self.s_mesh) - 1

    @property
    def m2(self) -> int:
        return len(self.v_mesh) - 1

    @property
    def m3(self) -> int:
        return len(self.r_mesh) - 1

    @property
    def I(self) -> int:  # noqa: E743 - matches the i/j/k naming
        return self.m1 if self.mode is GridMode.VANILLA else self.m1 - 1

    @property
    def J(self) -> int:
        return self.m2 if self.mode is GridMode.VANILLA else self.m2 + 1

    @property
    def Kn(self) -> int:
        return self.m3 + 1

    @property
    def M(self) -> int:
        return self.I * self.J * self.Kn

    @property
    def s_active(self) -> np.ndarray:
        return self.s_mesh.points[1 : self.I + 1]

    @property
    def v_active(self) -> np.ndarray:
        return self.v_mesh.points[: self.J]

    @property
    def r_active(self) -> np.ndarray:
        return self.r_mesh.points[: self.Kn]

    def index_of(self, i, j, k):
        """Linear index of mesh point (i, j, k); accepts arrays."""
        i = np.asarray(i)
        j = np.asarray(j)
        k = np.asarray(k)
        if np.any(i < 1) or np.any(i > self.I):
            raise IndexError("i outside active range")
        if np.any(j < 0) or np.any(j >= self.J):
            raise IndexError("j outside active range")
        if np.any(k < 0) or np.any(k >= self.Kn):
            raise IndexError("k outside active range")
        out = (k * self.J + j) * self.I + (i - 1)
        return int(out) if out.ndim == 0 else out

    def point_of(self, l):
        """Inverse of ``index_of``: (i, j, k) of a linear index."""
        l = np.asarray(l)
        if np.any(l < 0) or np.any(l >= self.M):
            raise IndexError("linear index outside active set")
        i = l % self.I + 1
        rest = l // self.I
        j = rest % self.J
        k = rest // self.J
        if l.ndim == 0:
            return int(i), int(j), int(k)
        return i, j, k


def smoothness_report(mesh: Mesh1D, dxi: float) -> tuple[float, float, float]:
    """Empirical smoothness constants (C0, C1, C2) of a mesh.

    C0 and C1 bound widths / dxi from below and above; C2 bounds
    |width[i+1] - width[i]| / dxi^2.
    """
    if len(mesh) < 3:
        raise ValueError("smoothness report needs at least 3 points")
    w = mesh.widths
    c0 = float(w.min() / dxi)
    c1 = float(w.max() / dxi)
    c2 = float(np.abs(np.diff(w)).max() / dxi**2)
    return c0, c1, c2

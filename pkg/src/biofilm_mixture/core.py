"""Model parameters and the terrain-following grid with its nodal fields.

The grid maps the computational square ``(xi, s) in [0, L] x [0, 1]`` onto the
film region under a height profile by ``x = xi``, ``z = s * h(x)``.  Node
arrays are stored with shape ``(nx + 1, nz + 1)`` (column index first).  In
periodic mode the last column duplicates the first; solvers work on the
``nx`` unique columns ("dof" columns) and expand back with
:meth:`Grid.from_dof`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence, Union

import numpy as np


class BiofilmError(Exception):
    """Base class for simulator errors."""


class GridError(BiofilmError, ValueError):
    pass


class ParameterError(BiofilmError, ValueError):
    pass


class LateralMode(str, enum.Enum):
    PERIODIC = "periodic"
    TRACTION = "traction"


class BoundaryTag(enum.IntEnum):
    INTERIOR = 0
    BOTTOM = 1
    TOP = 2
    LATERAL_LEFT = 3
    LATERAL_RIGHT = 4


TractionSpec = Union[float, str]


def _vec2(v) -> tuple[float, float]:
    a = tuple(float(t) for t in v)
    if len(a) != 2:
        raise ParameterError(f"traction vector must have two components, got {v!r}")
    return a  # type: ignore[return-value]


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless model constants and boundary data.

    ``t_ext`` maps a boundary name (``"top"``, ``"left"``, ``"right"``) to a
    constant traction vector.  ``t_normal`` adds a normal load ``t_normal * n``
    on every traction node; the string ``"balanced"`` selects the
    equilibrium-consistent load ``-(p_b0 + Pi * phi_b) * n`` evaluated with the
    current biomass fraction on the boundary.
    """

    k_b: float = 1.0
    K_b: float = 1.0
    k_c: float = 1.0
    K_c: float = 1.0
    d: float = 10.0
    mu_b: float = 1.0
    Pi: float = 0.1
    xi_inf: float = 0.1
    phi_inf: float = 0.9
    g_inf: float = 0.5
    c0: float = 1.0
    p_b0: float = 0.0
    t_ext: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {"top": (0.0, 0.0), "left": (0.0, 0.0), "right": (0.0, 0.0)}
    )
    t_normal: TractionSpec = 0.0

    def __post_init__(self) -> None:
        for name in ("k_b", "K_b", "k_c", "K_c", "d", "mu_b", "Pi", "xi_inf", "c0"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0.0:
                raise ParameterError(f"{name} must be strictly positive, got {val!r}")
        if not 0.0 < self.phi_inf < 1.0:
            raise ParameterError(f"phi_inf must lie in (0,1), got {self.phi_inf!r}")
        if not 0.0 < self.g_inf <= 1.0:
            raise ParameterError(f"g_inf must lie in (0,1], got {self.g_inf!r}")
        if not np.isfinite(self.p_b0):
            raise ParameterError("p_b0 must be finite")
        full = {"top": (0.0, 0.0), "left": (0.0, 0.0), "right": (0.0, 0.0)}
        for key, vec in dict(self.t_ext).items():
            if key not in full:
                raise ParameterError(f"unknown traction boundary {key!r}")
            full[key] = _vec2(vec)
        object.__setattr__(self, "t_ext", full)
        if isinstance(self.t_normal, str):
            if self.t_normal != "balanced":
                raise ParameterError(f"t_normal must be a number or 'balanced', got {self.t_normal!r}")
        else:
            object.__setattr__(self, "t_normal", float(self.t_normal))

    @property
    def eta_inf(self) -> float:
        """Darcy coefficient of the liquid velocity, ``xi_inf / phi_inf``."""
        return self.xi_inf / self.phi_inf

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


def monod(c, K: float):
    """Monod saturation factor ``c / (c + K)``.

    Works elementwise on arrays.  Negative concentrations are rejected.
    """
    if K <= 0.0:
        raise ParameterError(f"half-saturation must be positive, got {K!r}")
    arr = np.asarray(c, dtype=float)
    if np.any(arr < 0.0):
        raise ParameterError("monod: negative concentration")
    out = arr / (arr + K)
    return float(out) if out.ndim == 0 else out


# -- 1D difference stencils ---------------------------------------------------


def first_derivative_1d(n: int, step: float, periodic: bool):
    """Second-order first-derivative matrix on ``n`` equispaced points."""
    import scipy.sparse as sp

    rows, cols, vals = [], [], []
    for i in range(n):
        if periodic or 0 < i < n - 1:
            rows += [i, i]
            cols += [(i - 1) % n, (i + 1) % n]
            vals += [-0.5 / step, 0.5 / step]
        elif i == 0:
            rows += [0, 0, 0]
            cols += [0, 1, 2]
            vals += [-1.5 / step, 2.0 / step, -0.5 / step]
        else:
            rows += [i, i, i]
            cols += [i, i - 1, i - 2]
            vals += [1.5 / step, -2.0 / step, 0.5 / step]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def second_derivative_1d(n: int, step: float, periodic: bool):
    """Second-order second-derivative matrix on ``n`` equispaced points."""
    import scipy.sparse as sp

    h2 = step * step
    rows, cols, vals = [], [], []
    for i in range(n):
        if periodic or 0 < i < n - 1:
            rows += [i, i, i]
            cols += [(i - 1) % n, i, (i + 1) % n]
            vals += [1.0 / h2, -2.0 / h2, 1.0 / h2]
        else:
            sgn = 1 if i == 0 else -1
            rows += [i] * 4
            cols += [i, i + sgn, i + 2 * sgn, i + 3 * sgn]
            vals += [2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# -- grid ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Grid:
    """Structured terrain-following grid under a height profile.

    Build instances with :func:`build_grid`.
    """

    L: float
    nx: int
    nz: int
    h: np.ndarray
    lateral: LateralMode
    h_min: float

    @property
    def periodic(self) -> bool:
        return self.lateral is LateralMode.PERIODIC

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.nz + 1)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.nz + 1)

    @property
    def ncol(self) -> int:
        """Number of independent columns."""
        return self.nx if self.periodic else self.nx + 1

    @property
    def n_dof(self) -> int:
        return self.ncol * (self.nz + 1)

    @property
    def dx(self) -> float:
        return self.L / self.nx

    @property
    def ds(self) -> float:
        return 1.0 / self.nz

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen(np.linspace(0.0, self.L, self.nx + 1))

    @cached_property
    def s(self) -> np.ndarray:
        return _frozen(np.linspace(0.0, 1.0, self.nz + 1))

    @cached_property
    def X(self) -> np.ndarray:
        return _frozen(np.repeat(self.x[:, None], self.nz + 1, axis=1))

    @cached_property
    def S(self) -> np.ndarray:
        return _frozen(np.repeat(self.s[None, :], self.nx + 1, axis=0))

    @cached_property
    def Z(self) -> np.ndarray:
        return _frozen(self.S * self.h[:, None])

    @cached_property
    def dhdx(self) -> np.ndarray:
        """Slope of the height profile per column."""
        return _frozen(self._column_op(first_derivative_1d))

    @cached_property
    def d2hdx2(self) -> np.ndarray:
        return _frozen(self._column_op(second_derivative_1d))

    def _column_op(self, builder) -> np.ndarray:
        n = self.ncol
        D = builder(n, self.dx, self.periodic)
        out = D @ self.h[:n]
        if self.periodic:
            out = np.append(out, out[0])
        return out

    @cached_property
    def dzds(self) -> np.ndarray:
        """Metric factor dz/ds at every node."""
        return _frozen(np.repeat(self.h[:, None], self.nz + 1, axis=1))

    @cached_property
    def tags(self) -> np.ndarray:
        t = np.zeros(self.shape, dtype=np.int8)
        if not self.periodic:
            t[0, :] = BoundaryTag.LATERAL_LEFT
            t[-1, :] = BoundaryTag.LATERAL_RIGHT
        t[:, -1] = BoundaryTag.TOP
        t[:, 0] = BoundaryTag.BOTTOM
        t.setflags(write=False)
        return t

    @cached_property
    def cell_areas(self) -> np.ndarray:
        """Areas of the mapped primal cells, shape ``(nx, nz)``."""
        hm = 0.5 * (self.h[:-1] + self.h[1:])
        areas = np.repeat((self.dx * self.ds * hm)[:, None], self.nz, axis=1)
        return _frozen(areas)

    @cached_property
    def fv(self):
        from .fv import FVGeometry

        return FVGeometry(self)

    @cached_property
    def ops(self):
        from .fv import FDOperators

        return FDOperators(self)

    @property
    def height(self) -> float:
        return float(np.max(self.h))

    @property
    def aspect_ratio(self) -> float:
        return self.height / self.L

    # -- dof mapping --

    def to_dof(self, arr) -> np.ndarray:
        a = np.asarray(arr, dtype=float)
        if a.shape != self.shape:
            raise GridError(f"field shape {a.shape} does not match grid {self.shape}")
        return a[: self.ncol].reshape(-1).copy()

    def from_dof(self, vec) -> np.ndarray:
        v = np.asarray(vec, dtype=float).reshape(self.ncol, self.nz + 1)
        if self.periodic:
            v = np.vstack([v, v[:1]])
        return v

    @property
    def node_volumes(self) -> np.ndarray:
        """Dual-cell areas on dof nodes."""
        return self.fv.volume

    def l2(self, arr) -> float:
        """Area-weighted discrete L2 norm of a nodal field."""
        a = self.to_dof(arr)
        return float(np.sqrt(np.sum(self.fv.volume * a * a)))

    def l2_masked(self, arr, mask) -> float:
        a = self.to_dof(arr)
        m = self.to_dof(np.asarray(mask, dtype=float)) > 0.5
        return float(np.sqrt(np.sum(self.fv.volume[m] * a[m] ** 2)))

    def integrate(self, arr) -> float:
        return float(np.sum(self.fv.volume * self.to_dof(arr)))

    def area(self) -> float:
        return float(np.sum(self.cell_areas))

    def boundary_normals(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normal at every boundary node (zeros elsewhere).

        Top corners use the top normal, bottom corners the bottom normal.
        """
        nxn = np.zeros(self.shape)
        nzn = np.zeros(self.shape)
        tags = self.tags
        left = tags == BoundaryTag.LATERAL_LEFT
        right = tags == BoundaryTag.LATERAL_RIGHT
        nxn[left] = -1.0
        nxn[right] = 1.0
        top = tags == BoundaryTag.TOP
        norm = np.sqrt(1.0 + self.dhdx**2)
        nxn[:, -1] = np.where(top[:, -1], -self.dhdx / norm, nxn[:, -1])
        nzn[:, -1] = np.where(top[:, -1], 1.0 / norm, nzn[:, -1])
        nzn[:, 0] = -1.0
        nxn[:, 0] = 0.0
        return nxn, nzn


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


def build_grid(
    L: float,
    h_profile: Union[Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]],
    nx: int,
    nz: int,
    lateral_mode: Union[LateralMode, str] = LateralMode.PERIODIC,
    h_min: float | None = None,
) -> Grid:
    """Build a terrain-following grid with ``(nx+1) x (nz+1)`` nodes.

    ``h_profile`` is either ``nx + 1`` column heights or a callable of ``x``.
    ``h_min`` defaults to ``1e-3 * max(h)``.
    """
    if nx < 4 or nz < 4:
        raise GridError(f"grid needs nx >= 4 and nz >= 4, got nx={nx}, nz={nz}")
    if not np.isfinite(L) or L <= 0.0:
        raise GridError(f"horizontal extent must be positive, got {L!r}")
    lateral = LateralMode(lateral_mode)
    x = np.linspace(0.0, L, nx + 1)
    h = np.asarray(h_profile(x) if callable(h_profile) else h_profile, dtype=float).copy()
    if h.shape != (nx + 1,):
        raise GridError(f"height profile needs {nx + 1} values, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise GridError("height profile contains non-finite values")
    if np.any(h <= 0.0):
        raise GridError("non-positive height in profile")
    if h_min is None:
        h_min = 1e-3 * float(np.max(h))
    if h_min <= 0.0:
        raise GridError("precursor floor h_min must be positive")
    if np.any(h < h_min * (1.0 - 1e-12)):
        raise GridError(f"height profile dips below the precursor floor h_min={h_min:g}")
    if lateral is LateralMode.PERIODIC:
        if abs(h[-1] - h[0]) > 1e-12 * max(1.0, abs(h[0])):
            raise GridError("periodic grid requires h(0) == h(L)")
        h[-1] = h[0]
    h.setflags(write=False)
    grid = Grid(L=float(L), nx=int(nx), nz=int(nz), h=h, lateral=lateral, h_min=float(h_min))
    if np.any(grid.cell_areas <= 0.0):
        raise GridError("degenerate cell with non-positive Jacobian")
    return grid


def regrid(grid: Grid, h_profile) -> Grid:
    """Rebuild ``grid`` under a new height profile, same resolution and mode."""
    return build_grid(grid.L, h_profile, grid.nx, grid.nz, grid.lateral, grid.h_min)


@dataclass(frozen=True)
class BoundaryClassification:
    """Per-node boundary tags and the boundary-condition masks derived from them."""

    tags: np.ndarray
    velocity_dirichlet: np.ndarray
    traction: np.ndarray
    pressure_dirichlet: np.ndarray
    nutrient_dirichlet: np.ndarray
    nutrient_neumann: np.ndarray
    periodic_pairs: tuple[tuple[int, int], ...]

    def count(self, tag: BoundaryTag) -> int:
        return int(np.sum(self.tags == tag))


def classify_boundary(grid: Grid) -> BoundaryClassification:
    tags = np.asarray(grid.tags)
    bottom = tags == BoundaryTag.BOTTOM
    boundary = tags != BoundaryTag.INTERIOR
    traction = boundary & ~bottom
    pairs: tuple[tuple[int, int], ...] = ()
    if grid.periodic:
        pairs = tuple((j, j) for j in range(grid.nz + 1))
    return BoundaryClassification(
        tags=tags,
        velocity_dirichlet=bottom,
        traction=traction,
        pressure_dirichlet=boundary,
        nutrient_dirichlet=bottom,
        nutrient_neumann=traction,
        periodic_pairs=pairs,
    )


# -- fields -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise BiofilmError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def min(self) -> float:
        return float(np.min(self.values))

    def max(self) -> float:
        return float(np.max(self.values))


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        for name in ("x", "z"):
            v = np.array(getattr(self, name), dtype=float)
            if v.shape != self.grid.shape:
                raise GridError(f"component {name} shape {v.shape} does not match grid")
            if not np.all(np.isfinite(v)):
                raise BiofilmError(f"component {name} contains non-finite values")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    @property
    def components(self) -> tuple[ScalarField, ScalarField]:
        return ScalarField(self.grid, self.x), ScalarField(self.grid, self.z)

    def norm_l2(self) -> float:
        return float(np.hypot(self.grid.l2(self.x), self.grid.l2(self.z)))

    def max_abs(self) -> float:
        return float(np.max(np.hypot(self.x, self.z)))

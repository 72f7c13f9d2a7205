"""Stationary liquid-fraction transport.

Solves ``-div(v_l phi) - eps * lap(phi) + a phi = a`` with zero diffusive
flux on the boundary.  Convection is discretised with conservative
first-order upwinding on the median-dual control volumes: with ``w = -v_l``
every face flux uses the value on the side the flux leaves.  When the sign
conditions ``div(v_l) <= 0`` and ``v_l . n <= 0`` hold, the matrix is an
M-matrix and the discrete solution lies in ``[0, 1]``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import BiofilmError, Grid, ModelParams, ParameterError, ScalarField, VectorField, monod
from .sparse import SparseSystem, solve

log = logging.getLogger(__name__)

BOUND_TOL = 1e-8


class InvariantBreach(BiofilmError):
    """A discrete invariant (bound, positivity, ...) is violated."""


class GrowthMode(str, enum.Enum):
    G_INF = "g_inf"
    MONOD = "monod"


@dataclass(frozen=True)
class SignReport:
    """Admissibility of a liquid velocity.

    ``max_div`` is the largest control-volume divergence over all nodes,
    ``max_div_interior`` the same restricted to interior nodes and ``max_vn``
    the largest nodal ``v_l . n`` on the boundary.
    """

    max_div: float
    max_div_interior: float
    max_vn: float
    tol: float

    @property
    def admissible(self) -> bool:
        return self.max_div <= self.tol and self.max_vn <= self.tol

    @property
    def violation(self) -> float:
        return max(self.max_div, self.max_vn, 0.0)


def check_sign_conditions(grid: Grid, v_l: VectorField, tol: float = 1e-10) -> SignReport:
    """Report the discrete sign conditions ``div(v_l) <= 0``, ``v_l . n <= 0``."""
    fv = grid.fv
    div = fv.divergence(grid.to_dof(v_l.x), grid.to_dof(v_l.z))
    interior = grid.to_dof((grid.tags == 0).astype(float)) > 0.5
    nx_, nz_ = grid.boundary_normals()
    vn = v_l.x * nx_ + v_l.z * nz_
    bmask = grid.tags != 0
    # the periodic seam carries no boundary tag of its own
    if grid.periodic:
        bmask = bmask & ((grid.tags == 1) | (grid.tags == 2))
    return SignReport(
        max_div=float(np.max(div)),
        max_div_interior=float(np.max(div[interior])) if np.any(interior) else float("-inf"),
        max_vn=float(np.max(vn[bmask])),
        tol=tol,
    )


def reaction_coefficient(grid: Grid, params: ModelParams, mode, c: Optional[np.ndarray] = None) -> np.ndarray:
    """Nodal reaction coefficient ``a`` for the two growth modes."""
    mode = GrowthMode(mode)
    if mode is GrowthMode.G_INF:
        return np.full(grid.shape, params.k_b * params.g_inf)
    if c is None:
        raise ParameterError("MONOD growth needs a concentration field")
    return params.k_b * monod(np.maximum(np.asarray(c, dtype=float), 0.0), params.K_b)


@dataclass(frozen=True, eq=False)
class TransportProblem:
    """Inputs of one stationary transport solve.

    ``source`` replaces the right-hand side ``a`` (used for manufactured
    solutions); it is integrated by nodal quadrature like ``a``.
    """

    grid: Grid
    v_l: VectorField
    a: ScalarField
    epsilon: float = 0.0
    mode: GrowthMode = GrowthMode.G_INF
    source: Optional[np.ndarray] = None
    inflow_value: float = 1.0

    def __post_init__(self) -> None:
        if self.epsilon < 0.0:
            raise ParameterError(f"epsilon must be non-negative, got {self.epsilon!r}")
        if self.a.min() <= 0.0:
            raise ParameterError(f"reaction coefficient must satisfy a >= a_min > 0, got min {self.a.min():g}")
        object.__setattr__(self, "mode", GrowthMode(self.mode))

    @property
    def a_min(self) -> float:
        return self.a.min()


def assemble_transport(problem: TransportProblem) -> SparseSystem:
    g = problem.grid
    fv = g.fv
    ux = -g.to_dof(problem.v_l.x)
    uz = -g.to_dof(problem.v_l.z)
    M, _ = fv.upwind_matrix(ux, uz)
    rhs_src = problem.a.values if problem.source is None else np.asarray(problem.source, dtype=float)
    rhs = fv.volume * g.to_dof(rhs_src)
    qb = fv.boundary_flux(ux, uz)
    out = np.maximum(qb, 0.0)
    inflow = np.minimum(qb, 0.0)
    n = g.n_dof
    diag = fv.volume * g.to_dof(problem.a.values)
    diag = diag + np.bincount(fv.boundary.owner, weights=out, minlength=n)
    rhs = rhs - problem.inflow_value * np.bincount(fv.boundary.owner, weights=inflow, minlength=n)
    if np.any(inflow < 0.0):
        log.warning("transport: %d boundary faces carry inflow, using exterior value %g",
                    int(np.sum(inflow < 0.0)), problem.inflow_value)
    A = M + sp.diags(diag)
    if problem.epsilon > 0.0:
        A = A + problem.epsilon * fv.diffusion_matrix()
    return SparseSystem(A.tocsr(), rhs)


def solve_phi(problem: TransportProblem, tol: float = 1e-10, check_bounds: bool = True) -> ScalarField:
    """Solve for the liquid fraction.

    With ``check_bounds`` the result is checked against ``[-1e-8, 1 + 1e-8]``
    when the velocity is admissible, and :class:`InvariantBreach` is raised on
    a violation.
    """
    g = problem.grid
    system = assemble_transport(problem)
    x, _ = solve(system, tol=tol)
    phi = g.from_dof(x)
    if check_bounds and problem.source is None:
        report = check_sign_conditions(g, problem.v_l)
        lo, hi = float(phi.min()), float(phi.max())
        if report.admissible and (lo < -BOUND_TOL or hi > 1.0 + BOUND_TOL):
            raise InvariantBreach(f"liquid fraction out of bounds: min {lo:.3e}, max {hi:.3e}")
        if not report.admissible:
            log.warning("transport: sign conditions violated (max div %.3e, max v.n %.3e)",
                        report.max_div, report.max_vn)
    return ScalarField(g, phi)


def phi_b_from_phi_l(phi_l: ScalarField) -> ScalarField:
    return ScalarField(phi_l.grid, 1.0 - phi_l.values)

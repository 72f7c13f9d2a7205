"""Velocity-pressure system for the biomass phase.

Unknowns ``(v_x, v_z, p)`` are collocated at the grid nodes and discretised
with second-order finite differences in physical coordinates::

    mu lap(v) + mu/3 grad(div v) - grad(p) = Pi grad(phi_b)
    div(xi grad p) - div(v) = 0

Boundary rows: ``v = 0`` on the bottom, the traction condition

    [mu (grad v + grad v^T) - (2 mu/3 div v + p + Pi phi_b) I] n = t_ext

on the top (and on the lateral columns in traction mode), and ``p = p_b0``
on every boundary node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import BiofilmError, BoundaryTag, Grid, GridError, ModelParams, ParameterError, ScalarField, VectorField
from .sparse import SolveReport, SparseSystem, solve

log = logging.getLogger(__name__)

_TAG_NAMES = {BoundaryTag.TOP: "top", BoundaryTag.LATERAL_LEFT: "left", BoundaryTag.LATERAL_RIGHT: "right"}


@dataclass(frozen=True, eq=False)
class StokesProblem:
    """Data of one velocity-pressure solve.

    Optional hooks for manufactured solutions: ``body_force`` adds nodal
    forcing ``(f_x, f_z, f_p)`` to the three interior equations,
    ``p_boundary`` replaces the boundary pressure and ``traction`` replaces
    the traction vector ``t_ext`` node by node.
    """

    grid: Grid
    phi_b: ScalarField
    params: ModelParams
    xi: Optional[ScalarField] = None
    body_force: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None
    p_boundary: Optional[np.ndarray] = None
    traction: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.phi_b.grid is not self.grid:
            raise GridError("phi_b lives on a different grid")
        if self.xi is not None and self.xi.min() <= 0.0:
            raise ParameterError("mobility xi must be strictly positive")
        lo, hi = self.phi_b.min(), self.phi_b.max()
        if lo < -1e-8 or hi > 1.0 + 1e-8:
            log.warning("stokes: phi_b outside [0,1] (min %.3e, max %.3e)", lo, hi)

    @property
    def xi_values(self) -> np.ndarray:
        if self.xi is None:
            return np.full(self.grid.shape, self.params.xi_inf)
        return self.xi.values


@dataclass(frozen=True, eq=False)
class StokesSolution:
    v_b: VectorField
    p: ScalarField
    diagnostics: dict = field(default_factory=dict)
    report: Optional[SolveReport] = None


def traction_data(grid: Grid, params: ModelParams, phi_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodal traction vector ``t_ext`` on every traction node (zero elsewhere)."""
    tx = np.zeros(grid.shape)
    tz = np.zeros(grid.shape)
    nxn, nzn = grid.boundary_normals()
    if params.t_normal == "balanced":
        tn = -(params.p_b0 + params.Pi * np.asarray(phi_b))
    else:
        tn = np.full(grid.shape, float(params.t_normal))
    for tag, name in _TAG_NAMES.items():
        m = grid.tags == tag
        vx, vz = params.t_ext[name]
        tx[m] = vx + tn[m] * nxn[m]
        tz[m] = vz + tn[m] * nzn[m]
    return tx, tz


def _masks(grid: Grid):
    tags = grid.to_dof(grid.tags.astype(float)).astype(int)
    bottom = tags == BoundaryTag.BOTTOM
    traction = (tags == BoundaryTag.TOP) | (tags == BoundaryTag.LATERAL_LEFT) | (tags == BoundaryTag.LATERAL_RIGHT)
    interior = ~(bottom | traction)
    return interior, bottom, traction


def _rows(mask: np.ndarray, M) -> sp.csr_matrix:
    return (sp.diags(mask.astype(float)) @ M).tocsr()


def _traction_blocks(grid: Grid, mu: float):
    """Traction operator rows ``sigma(v, p) n`` (without the Pi phi_b term)."""
    ops = grid.ops
    nxn, nzn = grid.boundary_normals()
    Nx = sp.diags(grid.to_dof(nxn))
    Nz = sp.diags(grid.to_dof(nzn))
    Dx, Dz = ops.Dx, ops.Dz
    lam = 2.0 * mu / 3.0
    Txx = mu * (2.0 * Nx @ Dx + Nz @ Dz) - lam * Nx @ Dx
    Txz = mu * Nz @ Dx - lam * Nx @ Dz
    Tzx = mu * Nx @ Dz - lam * Nz @ Dx
    Tzz = mu * (Nx @ Dx + 2.0 * Nz @ Dz) - lam * Nz @ Dz
    return Txx, Txz, Tzx, Tzz, -Nx, -Nz


def assemble_stokes(problem: StokesProblem) -> SparseSystem:
    """Block system over ``[v_x, v_z, p]`` on dof nodes."""
    g = problem.grid
    prm = problem.params
    ops = g.ops
    mu, Pi = prm.mu_b, prm.Pi
    n = g.n_dof
    interior, bottom, traction = _masks(g)
    bnd = bottom | traction
    I = sp.identity(n, format="csr")

    phib = g.to_dof(problem.phi_b.values)
    xi = g.to_dof(problem.xi_values)
    xi_x, xi_z = ops.Dx @ xi, ops.Dz @ xi

    # interior equations
    Axx = mu * ops.Lap + (mu / 3.0) * ops.Dxx
    Axz = (mu / 3.0) * ops.Dxz
    Azz = mu * ops.Lap + (mu / 3.0) * ops.Dzz
    P = sp.diags(xi) @ ops.Lap + sp.diags(xi_x) @ ops.Dx + sp.diags(xi_z) @ ops.Dz

    Txx, Txz, Tzx, Tzz, Tpx, Tpz = _traction_blocks(g, mu)

    row_x = sp.hstack([
        _rows(interior, Axx) + _rows(traction, Txx) + _rows(bottom, I),
        _rows(interior, Axz) + _rows(traction, Txz),
        _rows(interior, -ops.Dx) + _rows(traction, Tpx),
    ])
    row_z = sp.hstack([
        _rows(interior, Axz) + _rows(traction, Tzx),
        _rows(interior, Azz) + _rows(traction, Tzz) + _rows(bottom, I),
        _rows(interior, -ops.Dz) + _rows(traction, Tpz),
    ])
    row_p = sp.hstack([
        _rows(interior, -ops.Dx),
        _rows(interior, -ops.Dz),
        _rows(interior, P) + _rows(bnd, I),
    ])
    A = sp.vstack([row_x, row_z, row_p]).tocsr()

    fx = Pi * (ops.Dx @ phib)
    fz = Pi * (ops.Dz @ phib)
    fp = np.zeros(n)
    if problem.body_force is not None:
        bx, bz, bp = (g.to_dof(b) for b in problem.body_force)
        fx, fz, fp = fx + bx, fz + bz, fp + bp

    if problem.traction is not None:
        tx, tz = (g.to_dof(t) for t in problem.traction)
    else:
        tx, tz = (g.to_dof(t) for t in traction_data(g, prm, problem.phi_b.values))
    nxn, nzn = (g.to_dof(a) for a in g.boundary_normals())
    tx = tx + Pi * phib * nxn
    tz = tz + Pi * phib * nzn

    if problem.p_boundary is not None:
        pb = g.to_dof(problem.p_boundary)
    else:
        pb = np.full(n, prm.p_b0)

    bx = np.where(interior, fx, np.where(traction, tx, 0.0))
    bz = np.where(interior, fz, np.where(traction, tz, 0.0))
    bp = np.where(interior, fp, pb)
    return SparseSystem(A, np.concatenate([bx, bz, bp]))


def _split(grid: Grid, x: np.ndarray):
    n = grid.n_dof
    return grid.from_dof(x[:n]), grid.from_dof(x[n : 2 * n]), grid.from_dof(x[2 * n :])


def _h1(grid: Grid, f: np.ndarray) -> float:
    fx, fz = grid.ops.grad(f)
    return float(np.sqrt(grid.l2(f) ** 2 + grid.l2(fx) ** 2 + grid.l2(fz) ** 2))


def solve_stokes(problem: StokesProblem, tol: float = 1e-10) -> StokesSolution:
    g = problem.grid
    system = assemble_stokes(problem)
    x, report = solve(system, tol=tol)
    vx, vz, p = _split(g, x)
    interior, bottom, traction = _masks(g)
    r = system.matrix @ x - system.rhs
    n = g.n_dof
    rx, rz, rp = r[:n], r[n : 2 * n], r[2 * n :]
    diag = {
        "momentum_residual": float(np.linalg.norm(np.r_[rx[interior], rz[interior]])),
        "pressure_residual": float(np.linalg.norm(rp[interior])),
        "traction_residual": float(np.linalg.norm(np.r_[rx[traction], rz[traction]])),
        "linear_residual": report.residual,
    }
    v_b = VectorField(g, vx, vz)
    pf = ScalarField(g, p)
    if g.nx >= 6 and g.nz >= 6 and problem.body_force is None:
        diag["divergence_identity"] = divergence_identity_residual(v_b, pf, problem.phi_b, problem.params)
    return StokesSolution(v_b=v_b, p=pf, diagnostics=diag, report=report)


def liquid_velocity(
    v_b: VectorField,
    p: ScalarField,
    params: ModelParams,
    phi_l: Optional[ScalarField] = None,
    mobility: str = "constant",
) -> VectorField:
    """Darcy relation ``v_l = v_b - eta grad(p)``.

    ``mobility="constant"`` uses ``eta = xi_inf / phi_inf``.  With
    ``"variable"`` the mobility follows the liquid fraction,
    ``xi = xi_inf (phi_l/phi_inf)^2`` and ``eta = xi / phi_l``.
    """
    g = v_b.grid
    px, pz = g.ops.grad(p.values)
    eta = darcy_eta(params, phi_l, mobility)
    return VectorField(g, v_b.x - eta * px, v_b.z - eta * pz)


def darcy_eta(params: ModelParams, phi_l: Optional[ScalarField], mobility: str):
    if mobility == "constant":
        return params.eta_inf
    if mobility == "variable":
        if phi_l is None:
            raise ParameterError("variable mobility needs the liquid fraction")
        return params.xi_inf * phi_l.values / params.phi_inf**2
    raise ParameterError(f"unknown mobility {mobility!r}")


def mobility_field(params: ModelParams, phi_l: Optional[ScalarField], mobility: str) -> Optional[ScalarField]:
    """Pressure-equation coefficient ``xi`` (``None`` means the constant ``xi_inf``)."""
    if mobility == "constant":
        return None
    if mobility == "variable":
        if phi_l is None:
            raise ParameterError("variable mobility needs the liquid fraction")
        return ScalarField(phi_l.grid, params.xi_inf * (phi_l.values / params.phi_inf) ** 2)
    raise ParameterError(f"unknown mobility {mobility!r}")


def identity_mask(grid: Grid, margin: int = 2) -> np.ndarray:
    """Nodes at least ``margin`` nodes away from any non-periodic boundary."""
    m = np.zeros(grid.shape, dtype=bool)
    m[:, margin : grid.nz + 1 - margin] = True
    if not grid.periodic:
        m[:margin, :] = False
        m[grid.nx + 1 - margin :, :] = False
    return m


def divergence_identity_residual(
    v_b: VectorField, p: ScalarField, phi_b: ScalarField, params: ModelParams
) -> float:
    """L2 norm of ``(4 mu/3) lap(div v_b) - Pi lap(phi_b) - lap(p)`` away from the boundary."""
    g = v_b.grid
    if g.nx < 6 or g.nz < 6:
        raise GridError(f"divergence identity needs nx, nz >= 6, got nx={g.nx}, nz={g.nz}")
    ops = g.ops
    div = ops.Dx @ g.to_dof(v_b.x) + ops.Dz @ g.to_dof(v_b.z)
    res = (4.0 * params.mu_b / 3.0) * (ops.Lap @ div) - params.Pi * (ops.Lap @ g.to_dof(phi_b.values)) - ops.Lap @ g.to_dof(p.values)
    return g.l2_masked(g.from_dof(res), identity_mask(g))


def stability_ratio(problem: StokesProblem, sol: StokesSolution) -> float:
    """``(|v_b|_H1 + |p - p_b0|_H1) / (Pi |phi_b| + |t_ext| + |p_b0|)`` in discrete norms."""
    g = problem.grid
    prm = problem.params
    num = _h1(g, sol.v_b.x) + _h1(g, sol.v_b.z) + _h1(g, sol.p.values - prm.p_b0)
    tx, tz = traction_data(g, prm, problem.phi_b.values)
    tmask = (g.tags == BoundaryTag.TOP) | (g.tags == BoundaryTag.LATERAL_LEFT) | (g.tags == BoundaryTag.LATERAL_RIGHT)
    tnorm = float(np.sqrt(np.mean(tx[tmask] ** 2 + tz[tmask] ** 2)))
    den = prm.Pi * g.l2(problem.phi_b.values) + tnorm + abs(prm.p_b0) * np.sqrt(g.area())
    if den == 0.0:
        raise BiofilmError("stability ratio undefined for zero data")
    return num / den

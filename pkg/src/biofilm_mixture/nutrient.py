"""Nutrient concentration under convection-diffusion with Monod consumption.

Solves ``-d lap(c) + div(v_l c) = -k_c phi_b c/(c + K_c)`` with ``c = c0`` on
the bottom and zero diffusive flux elsewhere.  The nonlinearity is handled by
a Picard loop that freezes only the Monod denominator::

    -d lap(c_new) + div(v_l c_new) + a_m c_new = 0,   a_m = k_c phi_b / (max(c_old, 0) + K_c)

starting from ``c = c0``.  Each step is a linear finite-volume solve sharing
the upwind stencil of the transport solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .core import BiofilmError, BoundaryTag, Grid, ModelParams, ScalarField, VectorField
from .sparse import SparseSystem, solve
from .transport import InvariantBreach, check_sign_conditions

log = logging.getLogger(__name__)

POSITIVITY_TOL = 1e-8


class PicardError(BiofilmError):
    """Picard loop failed to reach its tolerance."""

    def __init__(self, message: str, last: np.ndarray, previous: np.ndarray, history: list[float]):
        super().__init__(message)
        self.last = last
        self.previous = previous
        self.history = history


@dataclass(frozen=True, eq=False)
class NutrientProblem:
    grid: Grid
    v_l: VectorField
    phi_b: ScalarField
    params: ModelParams
    picard_tol: float = 1e-10
    picard_max_iter: int = 50


@dataclass(frozen=True, eq=False)
class NutrientResult:
    c: ScalarField
    history: list = field(default_factory=list)
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)


def assemble_nutrient_step(
    grid: Grid,
    v_l: VectorField,
    a: np.ndarray,
    d: float,
    c_bottom,
    source: Optional[np.ndarray] = None,
) -> SparseSystem:
    """Linear system of ``-d lap(c) + div(v_l c) + a c = source``.

    Bottom rows are Dirichlet rows scaled by the replaced diagonal entry.  The
    convective flux through the remaining boundary uses the nodal value.
    """
    fv = grid.fv
    n = grid.n_dof
    ux, uz = grid.to_dof(v_l.x), grid.to_dof(v_l.z)
    M, _ = fv.upwind_matrix(ux, uz)
    qb = fv.boundary_flux(ux, uz)
    bdiag = np.bincount(fv.boundary.owner, weights=qb, minlength=n)
    A = d * fv.diffusion_matrix() + M + sp.diags(bdiag + fv.volume * grid.to_dof(a))
    rhs = np.zeros(n) if source is None else fv.volume * grid.to_dof(source)
    bottom = grid.to_dof((grid.tags == BoundaryTag.BOTTOM).astype(float)) > 0.5
    scale = np.abs(A.diagonal())
    scale = np.where(scale > 0.0, scale, fv.volume)
    keep = sp.diags((~bottom).astype(float))
    A = keep @ A + sp.diags(np.where(bottom, scale, 0.0))
    cb = np.broadcast_to(np.asarray(c_bottom, dtype=float), grid.shape)
    rhs = np.where(bottom, scale * grid.to_dof(cb), rhs)
    return SparseSystem(A.tocsr(), rhs)


def solve_linear_step(grid, v_l, a, d, c_bottom, source=None, tol=1e-10) -> np.ndarray:
    """Solve one frozen-coefficient step and return the nodal field."""
    x, _ = solve(assemble_nutrient_step(grid, v_l, a, d, c_bottom, source), tol=tol)
    return grid.from_dof(x)


def consumption_coefficient(params: ModelParams, phi_b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Frozen Monod coefficient; negative iterates are clipped in the denominator only."""
    return params.k_c * np.asarray(phi_b) / (np.maximum(c, 0.0) + params.K_c)


def solve_nutrient(problem: NutrientProblem) -> NutrientResult:
    g = problem.grid
    prm = problem.params
    c = np.full(g.shape, prm.c0)
    prev = c
    history: list[float] = []
    for m in range(1, problem.picard_max_iter + 1):
        a = consumption_coefficient(prm, problem.phi_b.values, c)
        prev, c = c, solve_linear_step(g, problem.v_l, a, prm.d, prm.c0)
        diff = g.l2(c - prev)
        history.append(diff)
        log.debug("picard %d: |dc| = %.3e", m, diff)
        if diff <= problem.picard_tol:
            break
    else:
        raise PicardError(
            f"Picard iteration did not converge in {problem.picard_max_iter} steps "
            f"(last difference {history[-1]:.3e})",
            last=c,
            previous=prev,
            history=history,
        )
    cmin = float(c.min())
    if cmin < -POSITIVITY_TOL:
        if check_sign_conditions(g, problem.v_l).admissible:
            raise InvariantBreach(f"negative nutrient concentration {cmin:.3e}")
        log.warning("nutrient: negative concentration %.3e under inadmissible velocity", cmin)
    vmax = problem.v_l.max_abs()
    diag = {"c_min": cmin, "c_max": float(c.max()), "vl_over_d": vmax / prm.d}
    return NutrientResult(c=ScalarField(g, c), history=history, iterations=len(history), diagnostics=diag)


def lower_bound_certificate(params: ModelParams, M: float, c_max: float) -> tuple[float, bool]:
    """Positivity bound ``c0 - k_c c_max M / (2 d K_c)`` and whether it applies.

    The bound holds when ``M < 2 d K_c c0 / (k_c c_max)``.
    """
    if c_max <= 0.0:
        raise ValueError("c_max must be positive")
    bound = params.c0 - params.k_c * c_max * M / (2.0 * params.d * params.K_c)
    applicable = M < 2.0 * params.d * params.K_c * params.c0 / (params.k_c * c_max)
    return bound, bool(applicable)

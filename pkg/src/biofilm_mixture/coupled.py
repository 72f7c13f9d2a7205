"""Outer fixed-point iteration for the quasi-stationary system.

One outer step, given ``phi_b`` and ``c`` from the previous step:

1. velocity-pressure solve with ``phi_b``  -> ``v_b, p``
2. Darcy relation                          -> ``v_l``
3. sign-condition check and policy
4. transport with growth ``a = k_b g``      -> ``phi_l``, ``phi_b`` (under-relaxed)
5. nutrient Picard solve                   -> ``c``

``g`` is the constant ``g_inf`` (``FROZEN_G``) or ``c/(c + K_b)`` evaluated
with the previous concentration (``MONOD_G``).  Convergence is measured on
successive differences of ``v_l``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import BiofilmError, Grid, ModelParams, ParameterError, ScalarField, VectorField, monod
from .nutrient import NutrientProblem, solve_nutrient
from .stokes import StokesProblem, liquid_velocity, mobility_field, solve_stokes
from .transport import SignReport, TransportProblem, check_sign_conditions, solve_phi

log = logging.getLogger(__name__)


class CoupledMode(str, enum.Enum):
    FROZEN_G = "frozen_g"
    MONOD_G = "monod_g"


class SignPolicy(str, enum.Enum):
    PROCEED = "proceed"
    FLAG = "flag"
    ABORT = "abort"


@dataclass(frozen=True)
class CoupledConfig:
    """Outer-loop settings.

    ``phi_init`` is the initial liquid fraction (``params.phi_inf`` when
    ``None``).  ``mobility`` selects the Darcy coefficient: ``"constant"``
    uses ``xi_inf`` and ``xi_inf/phi_inf``; ``"variable"`` lets both follow
    the liquid fraction (see :func:`~biofilm_mixture.stokes.liquid_velocity`).
    """

    mode: CoupledMode = CoupledMode.FROZEN_G
    outer_tol: float = 1e-8
    outer_max_iter: int = 50
    omega: float = 1.0
    phi_init: Optional[float] = None
    epsilon: float = 0.0
    sign_tol: float = 1e-8
    abort_factor: float = 100.0
    abort_on_sign: bool = True
    mobility: str = "constant"
    inner_tol: float = 1e-10
    picard_tol: float = 1e-10
    picard_max_iter: int = 50

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", CoupledMode(self.mode))
        if not 0.0 < self.omega <= 1.0:
            raise ParameterError(f"omega must lie in (0,1], got {self.omega!r}")
        for name in ("outer_tol", "sign_tol", "inner_tol", "picard_tol", "abort_factor"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be positive")
        if self.outer_max_iter < 1 or self.picard_max_iter < 1:
            raise ParameterError("iteration limits must be at least 1")
        if self.phi_init is not None and not 0.0 < self.phi_init <= 1.0:
            raise ParameterError(f"phi_init must lie in (0,1], got {self.phi_init!r}")
        if self.mobility not in ("constant", "variable"):
            raise ParameterError(f"mobility must be 'constant' or 'variable', got {self.mobility!r}")
        if self.epsilon < 0.0:
            raise ParameterError("epsilon must be non-negative")


@dataclass(eq=False)
class SolutionState:
    grid: Grid
    params: ModelParams
    v_b: VectorField
    v_l: VectorField
    p: ScalarField
    phi_l: ScalarField
    phi_b: ScalarField
    c: ScalarField
    history: list = field(default_factory=list)
    converged: bool = False
    status: str = "running"

    @property
    def iterations(self) -> int:
        return len(self.history)

    def dv_history(self) -> np.ndarray:
        return np.array([h["dv_l"] for h in self.history])


def equilibrium_state(grid: Grid, params: ModelParams) -> SolutionState:
    """The trivial state ``v = 0, p = p_b0, phi_l = 1, c = c0``."""
    return SolutionState(
        grid=grid,
        params=params,
        v_b=VectorField.zeros(grid),
        v_l=VectorField.zeros(grid),
        p=ScalarField.constant(grid, params.p_b0),
        phi_l=ScalarField.constant(grid, 1.0),
        phi_b=ScalarField.constant(grid, 0.0),
        c=ScalarField.constant(grid, params.c0),
        converged=True,
        status="converged",
    )


def sign_policy(report: SignReport, tol: Optional[float] = None, abort_factor: float = 100.0) -> SignPolicy:
    """Map a sign report to proceed / flag / abort."""
    tol = report.tol if tol is None else tol
    worst = max(report.max_div, report.max_vn)
    if worst > abort_factor * tol:
        return SignPolicy.ABORT
    if worst > tol:
        return SignPolicy.FLAG
    return SignPolicy.PROCEED


def incompressibility_residual(state: SolutionState) -> float:
    """Area-weighted L2 norm of the control-volume divergence of ``phi_l v_l + phi_b v_b``."""
    g = state.grid
    vx = state.phi_l.values * state.v_l.x + state.phi_b.values * state.v_b.x
    vz = state.phi_l.values * state.v_l.z + state.phi_b.values * state.v_b.z
    return g.l2(g.fv.divergence_nodes(vx, vz))


def _growth(params: ModelParams, mode: CoupledMode, c: np.ndarray, hook) -> np.ndarray:
    if hook is not None:
        return np.asarray(hook(c), dtype=float) * np.ones_like(c)
    if mode is CoupledMode.FROZEN_G:
        return np.full(c.shape, params.g_inf)
    return monod(np.maximum(c, 0.0), params.K_b)


def _vnorm(g: Grid, ux: np.ndarray, uz: np.ndarray) -> float:
    return float(np.hypot(g.l2(ux), g.l2(uz)))


def run_fixed_point(
    grid: Grid,
    params: ModelParams,
    config: CoupledConfig = CoupledConfig(),
    growth_factor: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SolutionState:
    """Run the outer iteration until ``|v_l^(l) - v_l^(l-1)| <= outer_tol``.

    ``growth_factor`` overrides the growth factor ``g(c)`` (test hook).
    Non-convergence returns the state with ``converged=False``; inner solver
    errors are re-raised with an ``iteration`` attribute.
    """
    phi_init = params.phi_inf if config.phi_init is None else config.phi_init
    phi_b = ScalarField.constant(grid, 1.0 - phi_init)
    phi_l = ScalarField.constant(grid, phi_init)
    c = ScalarField.constant(grid, params.c0)
    v_l_old = VectorField.zeros(grid)
    p_old = ScalarField.constant(grid, params.p_b0)
    state = equilibrium_state(grid, params)
    state.converged, state.status = False, "running"

    for it in range(1, config.outer_max_iter + 1):
        try:
            xi = mobility_field(params, phi_l, config.mobility)
            stokes = solve_stokes(StokesProblem(grid, phi_b, params, xi=xi), tol=config.inner_tol)
            v_l = liquid_velocity(stokes.v_b, stokes.p, params, phi_l, config.mobility)
            signs = check_sign_conditions(grid, v_l, config.sign_tol)
            policy = sign_policy(signs, config.sign_tol, config.abort_factor)
            dv = _vnorm(grid, v_l.x - v_l_old.x, v_l.z - v_l_old.z)
            record = {
                "iteration": it,
                "dv_l": dv,
                "dp": grid.l2(stokes.p.values - p_old.values),
                "max_div_vl": signs.max_div,
                "max_vn": signs.max_vn,
                "sign_policy": policy.value,
            }
            state.v_b, state.v_l, state.p = stokes.v_b, v_l, stokes.p
            if policy is SignPolicy.ABORT and config.abort_on_sign:
                record.update(dphi_l=float("nan"), phi_l_min=phi_l.min(), phi_l_max=phi_l.max(),
                              c_min=c.min(), c_max=c.max(), incompressibility=float("nan"))
                state.history.append(record)
                state.status = "aborted"
                log.error("outer %d: sign violation %.3e, aborting", it, signs.violation)
                break
            if policy is SignPolicy.FLAG:
                log.warning("outer %d: sign conditions flagged (max div %.3e, max v.n %.3e)",
                            it, signs.max_div, signs.max_vn)

            g = _growth(params, config.mode, c.values, growth_factor)
            a = ScalarField(grid, params.k_b * g)
            phi_new = solve_phi(TransportProblem(grid, v_l, a, config.epsilon), tol=config.inner_tol)
            phi_b_vals = config.omega * (1.0 - phi_new.values) + (1.0 - config.omega) * phi_b.values
            phi_b = ScalarField(grid, phi_b_vals)
            phi_l_next = ScalarField(grid, 1.0 - phi_b_vals)
            nut = solve_nutrient(NutrientProblem(grid, v_l, phi_b, params, config.picard_tol,
                                                 config.picard_max_iter))
        except BiofilmError as exc:
            exc.iteration = it  # type: ignore[attr-defined]
            exc.args = (f"outer iteration {it}: {exc}",) + exc.args[1:]
            raise

        record["dphi_l"] = grid.l2(phi_l_next.values - phi_l.values)
        phi_l, c = phi_l_next, nut.c
        state.phi_l, state.phi_b, state.c = phi_l, phi_b, c
        record.update(
            phi_l_min=phi_l.min(),
            phi_l_max=phi_l.max(),
            c_min=c.min(),
            c_max=c.max(),
            incompressibility=incompressibility_residual(state),
            picard_iterations=nut.iterations,
        )
        state.history.append(record)
        log.info("outer %d: |dv_l| = %.3e, |dphi_l| = %.3e", it, dv, record["dphi_l"])
        v_l_old, p_old = v_l, stokes.p
        if it >= 2 and dv <= config.outer_tol:
            state.converged, state.status = True, "converged"
            break
    else:
        state.status = "max_iter"
        log.warning("outer iteration did not converge in %d steps", config.outer_max_iter)
    return state


def contraction_ratios(state: SolutionState) -> np.ndarray:
    """``r_l = |dv_l^(l+1)| / |dv_l^(l)|`` for ``l = 1, 2, ...``."""
    dv = state.dv_history()
    with np.errstate(divide="ignore", invalid="ignore"):
        return dv[1:] / dv[:-1]


def iteration_diagnostics(state: SolutionState) -> dict:
    """Monitors of a computed state: incompressibility, signs, norm ratios."""
    if not state.history:
        raise BiofilmError("no completed iteration to diagnose")
    g = state.grid
    prm = state.params
    signs = check_sign_conditions(g, state.v_l)
    ops = g.ops

    def h1(f):
        fx, fz = ops.grad(f)
        return float(np.sqrt(g.l2(f) ** 2 + g.l2(fx) ** 2 + g.l2(fz) ** 2))

    gx, gz = ops.grad(state.phi_l.values)
    dvx_x, dvx_z = ops.grad(state.v_l.x)
    dvz_x, dvz_z = ops.grad(state.v_l.z)
    grad_vl_inf = float(np.max(np.abs(np.stack([dvx_x, dvx_z, dvz_x, dvz_z]))))
    a_min = prm.k_b * prm.g_inf
    dv = state.dv_history()
    return {
        "incompressibility": incompressibility_residual(state),
        "max_div_vl": signs.max_div,
        "max_vn": signs.max_vn,
        "admissible": signs.admissible,
        "vb_h1": h1(state.v_b.x) + h1(state.v_b.z),
        "p_h1": h1(state.p.values - prm.p_b0),
        "grad_phi_l_l2": float(np.hypot(g.l2(gx), g.l2(gz))),
        "c_h1": h1(state.c.values),
        "grad_vl_inf_over_a_min": grad_vl_inf / a_min,
        "aspect_ratio": g.aspect_ratio,
        "dv_history": dv.tolist(),
        "dv_growing": bool(dv.size >= 3 and dv[-1] > dv[-2] > dv[-3]),
        "phi_l_min": state.phi_l.min(),
        "phi_l_max": state.phi_l.max(),
        "c_min": state.c.min(),
        "converged": state.converged,
        "status": state.status,
    }

"""Free-surface evolution of the film height.

The slice height obeys the conservation law

    h_t + d/dx F = v_3(x, 0),     F(x) = integral_0^h v_1 dz,

advanced with explicit Euler.  Column fluxes use the trapezoid rule along
the mapped grid columns; face fluxes add first-order upwinding to the
centred average, with the advection speed ``(F_i + F_{i+1}) / (h_i + h_{i+1})``.
Between steps the quasi-stationary system is re-solved on a grid rebuilt
under the new height.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import BiofilmError, Grid, GridError, LateralMode, ModelParams, ParameterError, VectorField, build_grid
from .coupled import CoupledConfig, SolutionState, run_fixed_point

log = logging.getLogger(__name__)


class HeightClosure(str, enum.Enum):
    PERIODIC = "periodic"
    NEUMANN_ZERO = "neumann_zero"


class CFLError(BiofilmError):
    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


@dataclass(frozen=True, eq=False)
class HeightProfile:
    """Column heights at ``x_i = i L / nx`` (``nx + 1`` values) and a time stamp."""

    h: np.ndarray
    t: float = 0.0
    L: float = 1.0
    clipped_mass: float = 0.0

    def __post_init__(self) -> None:
        h = np.array(self.h, dtype=float)
        if h.ndim != 1 or h.size < 5:
            raise GridError("height profile needs at least 5 column values")
        if not np.all(np.isfinite(h)):
            raise BiofilmError("height profile contains non-finite values")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def nx(self) -> int:
        return self.h.size - 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.nx + 1)

    def mass(self, closure: HeightClosure = HeightClosure.PERIODIC) -> float:
        return float(np.sum(_cell_widths(self.nx, self.L / self.nx, HeightClosure(closure)) * _unique(self.h, closure)))


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    T_final: float
    cfl: float = 0.9
    closure: HeightClosure = HeightClosure.PERIODIC
    regrid_every: int = 1
    h_min: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "closure", HeightClosure(self.closure))
        if self.dt <= 0.0:
            raise ParameterError(f"dt must be positive, got {self.dt!r}")
        if self.T_final < 0.0:
            raise ParameterError("T_final must be non-negative")
        if not 0.0 < self.cfl <= 1.0:
            raise ParameterError(f"CFL factor must lie in (0,1], got {self.cfl!r}")
        if self.regrid_every != 1:
            raise ParameterError("only regridding every step is supported")

    @property
    def lateral_mode(self) -> LateralMode:
        return LateralMode.PERIODIC if self.closure is HeightClosure.PERIODIC else LateralMode.TRACTION


def _unique(h: np.ndarray, closure) -> np.ndarray:
    return h[:-1] if HeightClosure(closure) is HeightClosure.PERIODIC else h


def _cell_widths(nx: int, dx: float, closure: HeightClosure) -> np.ndarray:
    if closure is HeightClosure.PERIODIC:
        return np.full(nx, dx)
    w = np.full(nx + 1, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def column_flux(grid: Grid, v: VectorField, h: Optional[HeightProfile] = None) -> np.ndarray:
    """Trapezoid integral of ``v_1`` along every grid column."""
    if v.grid is not grid:
        raise GridError("velocity lives on a different grid")
    if h is not None and (h.h.shape != grid.h.shape or np.any(h.h != grid.h)):
        raise GridError("height profile does not match the grid")
    dz = grid.h * grid.ds
    return dz * (0.5 * v.x[:, 0] + v.x[:, 1:-1].sum(axis=1) + 0.5 * v.x[:, -1])


def bottom_normal_velocity(v: VectorField) -> np.ndarray:
    return np.array(v.z[:, 0])


def composite_velocity(state: SolutionState) -> VectorField:
    """``v = phi_l v_l + phi_b v_b``."""
    pl, pb = state.phi_l.values, state.phi_b.values
    return VectorField(
        state.grid,
        pl * state.v_l.x + pb * state.v_b.x,
        pl * state.v_l.z + pb * state.v_b.z,
    )


def face_fluxes(F: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Upwinded fluxes between consecutive entries of ``F`` (one fewer entry)."""
    s = h[:-1] + h[1:]
    u = (F[:-1] + F[1:]) / s
    return 0.5 * (F[:-1] + F[1:]) - 0.5 * np.abs(u) * (h[1:] - h[:-1])


def height_rate(F: np.ndarray, v3: np.ndarray, h: np.ndarray, dx: float, closure: HeightClosure) -> np.ndarray:
    """Conservative right-hand side ``-dF/dx + v_3`` on the independent columns."""
    closure = HeightClosure(closure)
    if closure is HeightClosure.PERIODIC:
        Fu, hu = F[:-1], h[:-1]
        Fe = np.append(Fu, Fu[0])
        he = np.append(hu, hu[0])
        flux = face_fluxes(Fe, he)  # flux[i] sits at i + 1/2
        return -(flux - np.roll(flux, 1)) / dx + v3[:-1]
    flux = face_fluxes(F, h)
    left = np.r_[F[0], flux]
    right = np.r_[flux, F[-1]]
    return -(right - left) / _cell_widths(h.size - 1, dx, closure) + v3


def height_rate_expanded(grid: Grid, v: VectorField) -> np.ndarray:
    """Chain-rule form ``-(v_1(h) h_x + integral d v_1/dx dz) + v_3(0)``.

    A non-conservative cross-check of :func:`height_rate`.
    """
    dv1dx, _ = grid.ops.grad(v.x)
    dz = grid.h * grid.ds
    inner = dz * (0.5 * dv1dx[:, 0] + dv1dx[:, 1:-1].sum(axis=1) + 0.5 * dv1dx[:, -1])
    return -(v.x[:, -1] * grid.dhdx + inner) + v.z[:, 0]


def advance_height(h: HeightProfile, v: VectorField, dt: float, config: EvolutionConfig) -> HeightProfile:
    """One explicit Euler step of the height equation on the grid of ``v``."""
    grid = v.grid
    if grid.nx != h.nx or abs(grid.L - h.L) > 1e-14 * h.L:
        raise GridError("velocity grid does not match the height profile")
    if not (np.all(np.isfinite(v.x)) and np.all(np.isfinite(v.z))):
        raise BiofilmError("velocity contains NaN")
    dx = grid.dx
    vmax = float(np.max(np.abs(v.x)))
    if vmax > 0.0 and dt * vmax / dx > config.cfl:
        sugg = config.cfl * dx / vmax
        raise CFLError(f"CFL violated: dt*max|v1|/dx = {dt * vmax / dx:.3g} > {config.cfl:g}; use dt <= {sugg:.3e}", sugg)
    F = column_flux(grid, v, h)
    v3 = bottom_normal_velocity(v)
    hu = _unique(h.h, config.closure)
    new = hu + dt * height_rate(F, v3, h.h, dx, config.closure)
    if not np.all(np.isfinite(new)):
        raise BiofilmError("height update produced non-finite values")
    h_min = grid.h_min if config.h_min is None else config.h_min
    low = new < h_min
    clipped = 0.0
    if np.any(low):
        w = _cell_widths(h.nx, dx, config.closure)
        clipped = float(np.sum((h_min - new[low]) * w[low]))
        log.warning("height floor: clipped %d columns, added mass %.3e", int(np.sum(low)), clipped)
        new = np.where(low, h_min, new)
    if config.closure is HeightClosure.PERIODIC:
        new = np.append(new, new[0])
    return HeightProfile(new, t=h.t + dt, L=h.L, clipped_mass=clipped)


@dataclass(eq=False)
class EvolutionResult:
    profiles: list = field(default_factory=list)
    states: list = field(default_factory=list)
    status: str = "running"
    error: Optional[str] = None
    failed_step: Optional[int] = None
    exception: Optional[BaseException] = None

    @property
    def completed(self) -> bool:
        return self.status == "completed"


VelocityHook = Callable[[Grid, float], VectorField]


def evolve(
    params: ModelParams,
    config: EvolutionConfig,
    initial: HeightProfile,
    nz: int,
    coupled: CoupledConfig = CoupledConfig(),
    velocity_hook: Optional[VelocityHook] = None,
    on_step: Optional[Callable[[int, HeightProfile, Optional[SolutionState]], None]] = None,
) -> EvolutionResult:
    """Alternate quasi-stationary solves and height updates until ``T_final``.

    ``velocity_hook(grid, t)`` replaces the solver and supplies the composite
    velocity directly.  Failures stop the loop and return the partial series.
    """
    h_min = config.h_min if config.h_min is not None else 1e-3 * float(np.max(initial.h))
    result = EvolutionResult(profiles=[initial])
    h = initial
    nsteps = int(np.ceil(config.T_final / config.dt - 1e-9))
    for k in range(1, nsteps + 1):
        dt = min(config.dt, config.T_final - h.t)
        try:
            grid = build_grid(h.L, h.h, h.nx, nz, config.lateral_mode, h_min=h_min)
            if velocity_hook is not None:
                v = velocity_hook(grid, h.t)
                state = None
            else:
                state = run_fixed_point(grid, params, coupled)
                if not state.converged:
                    result.status, result.failed_step = "inner_failure", k
                    result.error = f"step {k}: coupled iteration {state.status}"
                    result.states.append(state)
                    return result
                v = composite_velocity(state)
            h = advance_height(h, v, dt, config)
        except BiofilmError as exc:
            result.status, result.failed_step = "failed", k
            result.error = f"step {k}: {exc}"
            result.exception = exc
            log.error("evolution stopped at step %d: %s", k, exc)
            return result
        result.profiles.append(h)
        if state is not None:
            result.states.append(state)
        if on_step is not None:
            on_step(k, h, state)
    result.status = "completed"
    return result

"""Manufactured-solution convergence studies.

Each study derives the forcing of a smooth exact solution symbolically with
sympy.  Observed orders ``log2(e_k / e_{k+1})`` come from solves on nested
grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sym

from .core import ModelParams, ScalarField, VectorField, build_grid
from .nutrient import solve_linear_step
from .stokes import StokesProblem, divergence_identity_residual, solve_stokes
from .transport import TransportProblem, solve_phi

X, Z = sym.symbols("x z", real=True)


@dataclass
class ConvergenceTable:
    name: str
    levels: list = field(default_factory=list)  # (nx, nz)
    h: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def orders(self) -> list[float]:
        e = self.errors
        out = [float("nan")]
        for k in range(1, len(e)):
            ratio = self.h[k - 1] / self.h[k]
            out.append(float(np.log(e[k - 1] / e[k]) / np.log(ratio)))
        return out

    @property
    def min_order(self) -> float:
        return float(min(self.orders[1:]))

    def rows(self) -> list[tuple[int, float, float, float]]:
        return [(k, self.h[k], self.errors[k], self.orders[k]) for k in range(len(self.errors))]

    def to_csv(self) -> str:
        lines = ["level,h,error,order"]
        for k, hk, ek, ok in self.rows():
            lines.append(f"{k},{hk:.17g},{ek:.17g},{'' if np.isnan(ok) else format(ok, '.17g')}")
        return "\n".join(lines) + "\n"


def _fn(expr):
    f = sym.lambdify((X, Z), expr, "numpy")

    def call(x, z):
        return np.broadcast_to(np.asarray(f(x, z), dtype=float), np.shape(x)).copy()

    return call


def _grad(f):
    return sym.diff(f, X), sym.diff(f, Z)


def _lap(f):
    return sym.diff(f, X, 2) + sym.diff(f, Z, 2)


def _div(u, w):
    return sym.diff(u, X) + sym.diff(w, Z)


# -- transport ------------------------------------------------------------------


def transport_mms(levels: Sequence[tuple[int, int]] = ((16, 8), (32, 16), (64, 32)), alpha: float = 0.5,
                  H: float = 0.5, a0: float = 1.0) -> ConvergenceTable:
    """Upwind transport on a flat box with ``v = (-alpha x, -alpha z)``."""
    phi = 0.8 + 0.1 * sym.cos(sym.pi * Z / H)
    vx, vz = -alpha * X, -alpha * Z
    src = -_div(vx * phi, vz * phi) + a0 * phi
    f_phi, f_src = _fn(phi), _fn(src)
    tab = ConvergenceTable("transport")
    for nx, nz in levels:
        g = build_grid(1.0, np.full(nx + 1, H), nx, nz, "traction")
        v = VectorField(g, -alpha * g.X, -alpha * g.Z)
        prob = TransportProblem(g, v, ScalarField.constant(g, a0), source=f_src(g.X, g.Z))
        sol = solve_phi(prob, tol=1e-12)
        tab.levels.append((nx, nz))
        tab.h.append(g.dx)
        tab.errors.append(g.l2(sol.values - f_phi(g.X, g.Z)))
    return tab


# -- stokes ---------------------------------------------------------------------


def _stokes_exact(params: ModelParams, L: float):
    k = 2 * sym.pi / L
    vx = Z * sym.sin(k * X) * sym.cos(Z)
    vz = Z**2 * sym.cos(k * X)
    p = sym.cos(k * X) * sym.exp(Z) + Z
    phib = sym.Rational(1, 2) + sym.Rational(1, 4) * sym.sin(k * X) * sym.cos(2 * Z)
    return vx, vz, p, phib


def _stokes_problem(g, params, exprs):
    vx, vz, p, phib = exprs
    mu, Pi, xi = params.mu_b, params.Pi, params.xi_inf
    div = _div(vx, vz)
    gx_div, gz_div = _grad(div)
    px, pz = _grad(p)
    bx, bz = _grad(phib)
    fx = mu * _lap(vx) + mu / 3 * gx_div - px - Pi * bx
    fz = mu * _lap(vz) + mu / 3 * gz_div - pz - Pi * bz
    fp = xi * _lap(p) - div
    # stress minus the Pi phi_b term: the assembler adds Pi phi_b n itself
    lam = 2 * mu / 3 * div + p
    sxx = 2 * mu * sym.diff(vx, X) - lam
    szz = 2 * mu * sym.diff(vz, Z) - lam
    sxz = mu * (sym.diff(vx, Z) + sym.diff(vz, X))
    nxn, nzn = g.boundary_normals()
    Xg, Zg = g.X, g.Z
    SXX, SZZ, SXZ, PHB = (_fn(e)(Xg, Zg) for e in (sxx, szz, sxz, phib))
    tx = SXX * nxn + SXZ * nzn - Pi * PHB * nxn
    tz = SXZ * nxn + SZZ * nzn - Pi * PHB * nzn
    return StokesProblem(
        g,
        ScalarField(g, PHB),
        params,
        body_force=(_fn(fx)(Xg, Zg), _fn(fz)(Xg, Zg), _fn(fp)(Xg, Zg)),
        p_boundary=_fn(p)(Xg, Zg),
        traction=(tx, tz),
    )


def stokes_mms(levels: Sequence[tuple[int, int]] = ((16, 8), (32, 16), (64, 32)),
               params: ModelParams | None = None, lateral: str = "periodic"):
    """Velocity and pressure errors on a wavy film.

    Returns ``(pressure_table, velocity_table)``.
    """
    params = params or ModelParams(mu_b=1.0, Pi=0.5, xi_inf=0.2)
    L = 1.0
    exprs = _stokes_exact(params, L)
    fvx, fvz, fp = (_fn(e) for e in exprs[:3])
    tp, tv = ConvergenceTable("stokes_pressure"), ConvergenceTable("stokes_velocity")
    for nx, nz in levels:
        g = build_grid(L, lambda x: 0.5 + 0.1 * np.cos(2 * np.pi * x / L), nx, nz, lateral)
        sol = solve_stokes(_stokes_problem(g, params, exprs), tol=1e-9)
        ep = g.l2(sol.p.values - fp(g.X, g.Z))
        ev = np.hypot(g.l2(sol.v_b.x - fvx(g.X, g.Z)), g.l2(sol.v_b.z - fvz(g.X, g.Z)))
        for tab, e in ((tp, ep), (tv, ev)):
            tab.levels.append((nx, nz))
            tab.h.append(g.dx)
            tab.errors.append(float(e))
    return tp, tv


def divergence_identity_mms(levels: Sequence[tuple[int, int]] = ((16, 8), (32, 16), (64, 32)),
                            params: ModelParams | None = None) -> ConvergenceTable:
    """Identity residual on fields that satisfy the momentum balance exactly.

    With ``v = grad(psi)`` the balance reduces to ``(4 mu/3) grad(lap psi) =
    grad(p + Pi phi_b)``, which fixes ``phi_b`` from ``psi`` and ``p``.
    """
    params = params or ModelParams(mu_b=1.0, Pi=0.5)
    mu, Pi = params.mu_b, params.Pi
    k = 2 * sym.pi
    psi = sym.sin(k * X) * (Z**3 / 3) + Z**2 / 2
    p = sym.cos(k * X) * sym.exp(Z)
    vx, vz = _grad(psi)
    phib = (sym.Rational(4, 3) * mu * _lap(psi) - p) / Pi
    fvx, fvz, fp, fb = (_fn(e) for e in (vx, vz, p, phib))
    tab = ConvergenceTable("divergence_identity")
    for nx, nz in levels:
        g = build_grid(1.0, lambda x: 0.5 + 0.1 * np.cos(2 * np.pi * x), nx, nz, "periodic")
        v = VectorField(g, fvx(g.X, g.Z), fvz(g.X, g.Z))
        res = divergence_identity_residual(v, ScalarField(g, fp(g.X, g.Z)), ScalarField(g, fb(g.X, g.Z)), params)
        tab.levels.append((nx, nz))
        tab.h.append(g.dx)
        tab.errors.append(res)
    return tab


# -- nutrient -------------------------------------------------------------------


def nutrient_mms(levels: Sequence[tuple[int, int]] = ((16, 8), (32, 16), (64, 32)), d: float = 1.0,
                 c0: float = 1.0, H: float = 0.5, amp: float = 0.3) -> ConvergenceTable:
    """Linearised nutrient step with a frozen smooth coefficient and ``v_l = 0``.

    The exact field satisfies ``c = c0`` on the bottom and zero flux on the top.
    """
    L = 1.0
    k = 2 * sym.pi / L
    c = c0 + amp * sym.cos(k * X) * (Z**2 - 2 * H * Z) / H**2
    a = 1 + sym.Rational(1, 2) * sym.sin(k * X) * sym.cos(Z)
    src = -d * _lap(c) + a * c
    fc, fa, fs = _fn(c), _fn(a), _fn(src)
    tab = ConvergenceTable("nutrient")
    for nx, nz in levels:
        g = build_grid(L, np.full(nx + 1, H), nx, nz, "periodic")
        v = VectorField.zeros(g)
        sol = solve_linear_step(g, v, fa(g.X, g.Z), d, c0, source=fs(g.X, g.Z))
        tab.levels.append((nx, nz))
        tab.h.append(g.dx)
        tab.errors.append(g.l2(sol - fc(g.X, g.Z)))
    return tab

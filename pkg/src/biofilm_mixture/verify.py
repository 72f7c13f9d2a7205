"""Seeded property families and the invariant verification suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Grid, ModelParams, ScalarField, VectorField, build_grid
from .coupled import CoupledConfig, SignPolicy, run_fixed_point, sign_policy
from .interface import EvolutionConfig, HeightProfile, advance_height
from .nutrient import NutrientProblem, solve_nutrient
from .transport import TransportProblem, check_sign_conditions, solve_phi

log = logging.getLogger(__name__)


# -- reference coupled problem ------------------------------------------------

REFERENCE_PI = 0.1


def reference_params(Pi: float = REFERENCE_PI, **changes) -> ModelParams:
    """Parameters of the reference contracting problem.

    A uniform pulling normal load on a water-poor film (``phi_inf < 1/2``)
    keeps the liquid velocity admissible at every outer iterate.
    """
    base = dict(Pi=Pi, t_normal=0.1, p_b0=0.0, mu_b=1.0, xi_inf=0.1, phi_inf=0.4,
                k_b=1.0, g_inf=0.5, K_b=1.0, k_c=1.0, K_c=1.0, d=10.0, c0=1.0)
    base.update(changes)
    return ModelParams(**base)


def reference_grid(nx: int = 32, nz: int = 8, amp: float = 0.01) -> Grid:
    return build_grid(1.0, lambda x: 0.3 + amp * np.cos(2.0 * np.pi * x), nx, nz, "periodic")


def max_contraction_ratio(Pi: float, max_iter: int = 40, grid: Optional[Grid] = None) -> float:
    """Largest outer ratio ``r_l`` (``l >= 2``) on the reference problem.

    Returns ``inf`` when an inner solve fails.
    """
    from .coupled import contraction_ratios
    from .core import BiofilmError

    g = grid or reference_grid()
    cfg = CoupledConfig(outer_max_iter=max_iter, abort_on_sign=False)
    try:
        st = run_fixed_point(g, reference_params(Pi), cfg)
    except BiofilmError:
        return float("inf")
    r = contraction_ratios(st)[1:]
    return float(np.max(r)) if r.size else 0.0


def contraction_threshold(lo: float = REFERENCE_PI, hi: float = 0.3, tol: float = 2e-3,
                          max_iter: int = 40) -> float:
    """Bisect for the smallest ``Pi`` at which some ``r_l >= 1``.

    ``lo`` must contract and ``hi`` must not.
    """
    if max_contraction_ratio(lo, max_iter) >= 1.0:
        raise ValueError(f"reference problem does not contract at Pi = {lo}")
    if max_contraction_ratio(hi, max_iter) < 1.0:
        raise ValueError(f"contraction not lost at Pi = {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if max_contraction_ratio(mid, max_iter) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- random admissible velocity fields -----------------------------------------


@dataclass(frozen=True, eq=False)
class VelocitySample:
    grid: Grid
    v_l: VectorField
    a: ScalarField


def _concave_potential_velocity(grid: Grid, rng: np.random.Generator) -> VectorField:
    """Gradient of a random concave potential with inward-pointing boundary flux."""
    X, Zc = grid.X, grid.Z
    hmin = float(np.min(grid.h))
    A, B = rng.uniform(0.2, 2.0, 2)
    C, D = rng.uniform(0.0, 2.0, 2)
    x0, x1 = rng.uniform(0.0, grid.L, 2)
    z0, z1 = rng.uniform(0.0, hmin, 2)
    vx = -2 * A * (X - x0) - 4 * C * (X - x1) ** 3
    vz = -2 * B * (Zc - z0) - 4 * D * (Zc - z1) ** 3
    s = rng.uniform(0.1, 3.0)
    return VectorField(grid, s * vx, s * vz)


def _periodic_shear_velocity(grid: Grid, rng: np.random.Generator) -> VectorField:
    """``(sigma sin(k x + theta), -beta z)`` with ``beta`` large enough for admissibility."""
    k = 2.0 * np.pi * rng.integers(1, 3) / grid.L
    sigma = rng.uniform(0.05, 0.5)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    slope = float(np.max(np.abs(grid.dhdx))) / float(np.min(grid.h))
    beta = sigma * max(k, slope) * rng.uniform(1.2, 3.0)
    return VectorField(grid, sigma * np.sin(k * grid.X + theta), -beta * grid.Z)


def admissible_family(n: int, seed: int, max_tries: int = 20) -> list[VelocitySample]:
    """``n`` random (grid, v_l, a) triples passing the discrete sign check."""
    rng = np.random.default_rng(seed)
    out: list[VelocitySample] = []
    while len(out) < n:
        for _ in range(max_tries):
            nx = int(rng.choice([16, 24, 32]))
            nz = int(rng.choice([8, 12]))
            h0 = rng.uniform(0.2, 0.6)
            amp = rng.uniform(0.0, 0.2) * h0
            th = rng.uniform(0.0, 2.0 * np.pi)
            periodic = bool(rng.integers(0, 2))
            if periodic:
                g = build_grid(1.0, lambda x: h0 + amp * np.cos(2 * np.pi * x), nx, nz, "periodic")
                v = _periodic_shear_velocity(g, rng)
            else:
                g = build_grid(1.0, lambda x: h0 + amp * np.cos(2 * np.pi * x + th), nx, nz, "traction")
                v = _concave_potential_velocity(g, rng)
            if check_sign_conditions(g, v, tol=0.0).admissible:
                break
        else:
            raise RuntimeError("could not draw an admissible velocity field")
        a0 = rng.uniform(0.2, 2.0)
        a1 = rng.uniform(0.0, 0.5) * a0
        a = ScalarField(g, a0 + a1 * np.sin(2 * np.pi * g.X) * np.cos(3 * g.Z))
        out.append(VelocitySample(g, v, a))
    return out


# -- verification suite ----------------------------------------------------------


@dataclass
class PropertyResult:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    detail: str = ""


@dataclass
class VerifyReport:
    seed: int
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        out = []
        for r in self.results:
            meas = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.measured.items())
            out.append(f"{'PASS' if r.passed else 'FAIL'} {r.name} {meas} {r.detail}".rstrip())
        return out

    def rows(self) -> list[tuple]:
        return [(r.name, "pass" if r.passed else "fail", repr(r.measured), r.detail) for r in self.results]


def verify_maximum_principle(family: list[VelocitySample]) -> PropertyResult:
    lo, hi, vanish = np.inf, -np.inf, 0
    for s in family:
        phi = solve_phi(TransportProblem(s.grid, s.v_l, s.a), check_bounds=False).values
        lo, hi = min(lo, float(phi.min())), max(hi, float(phi.max()))
        vanish += int(np.sum(phi < 1e-6))
    ok = lo >= -1e-8 and hi <= 1.0 + 1e-8 and vanish == 0
    return PropertyResult("maximum_principle", ok, {"min_phi_l": lo, "max_phi_l": hi, "vanishing_nodes": vanish})


def nutrient_family(family: list[VelocitySample], seed: int) -> list[tuple[NutrientProblem, VectorField]]:
    """Nutrient problems on the velocity family, rescaled so that ``|v_l|_inf <= d``.

    Positivity is only expected for diffusion-dominated flow.
    """
    rng = np.random.default_rng(seed + 1)
    out = []
    for s in family:
        g = s.grid
        phib = ScalarField(g, rng.uniform(0.0, 1.0) * (0.5 + 0.5 * np.cos(np.pi * g.X) ** 2))
        prm = ModelParams(d=rng.uniform(1.0, 10.0), k_c=rng.uniform(0.5, 2.0), K_c=rng.uniform(0.5, 2.0))
        f = rng.uniform(0.1, 1.0) * prm.d / s.v_l.max_abs()
        v = VectorField(g, f * s.v_l.x, f * s.v_l.z)
        out.append((NutrientProblem(g, v, phib, prm), v))
    return out


def verify_nutrient_positivity(family: list[VelocitySample], seed: int) -> PropertyResult:
    lo = np.inf
    for prob, _ in nutrient_family(family, seed):
        c = solve_nutrient(prob).c
        lo = min(lo, c.min())
    return PropertyResult("nutrient_positivity", lo >= -1e-8, {"min_c": float(lo)})


def verify_equilibrium(params: ModelParams) -> PropertyResult:
    g = build_grid(1.0, np.full(17, 0.3), 16, 8, "periodic")
    prm = params.replace(t_normal="balanced")
    st = run_fixed_point(g, prm, CoupledConfig(phi_init=0.7, outer_tol=1e-10))
    err = max(
        st.v_b.max_abs(), st.v_l.max_abs(),
        float(np.max(np.abs(st.p.values - prm.p_b0))),
        float(np.max(np.abs(st.phi_l.values - 1.0))),
        float(np.max(np.abs(st.c.values - prm.c0))),
    )
    ok = st.converged and st.iterations <= 3 and err <= 1e-10
    return PropertyResult("equilibrium_fixed_point", ok, {"iterations": st.iterations, "max_error": err})


def verify_mass_conservation(seed: int, steps: int = 10) -> PropertyResult:
    rng = np.random.default_rng(seed + 2)
    nx = 32
    x = np.linspace(0.0, 1.0, nx + 1)
    h = HeightProfile(0.3 + 0.05 * np.cos(2 * np.pi * x) + 0.02 * np.sin(4 * np.pi * x))
    cfg = EvolutionConfig(dt=0.01, T_final=steps * 0.01)
    worst = 0.0
    for _ in range(steps):
        g = build_grid(1.0, h.h, nx, 8, "periodic")
        c1, c2 = rng.uniform(-0.5, 0.5, 2)
        vx = c1 + c2 * np.sin(2 * np.pi * g.X) * g.S
        vz = np.zeros(g.shape)
        vz[:, 0] = rng.uniform(-0.05, 0.05) * np.cos(2 * np.pi * g.x)
        v = VectorField(g, vx, vz)
        new = advance_height(h, v, cfg.dt, cfg)
        lhs = np.sum(new.h[:-1] - h.h[:-1]) * g.dx
        rhs = cfg.dt * np.sum(vz[:-1, 0]) * g.dx
        worst = max(worst, abs(lhs - rhs))
        h = new
    return PropertyResult("mass_conservation", worst <= 1e-12, {"max_defect": worst})


def verify_sign_policy(family: list[VelocitySample], inject: bool) -> PropertyResult:
    cases = [(s.grid, s.v_l) for s in family]
    g0 = family[0].grid
    cases.append((g0, VectorField.zeros(g0)))
    if inject:
        cases.append((g0, VectorField(g0, np.asarray(g0.X), np.zeros(g0.shape))))
    policies = [sign_policy(check_sign_conditions(g, v, 1e-8)) for g, v in cases]
    n_bad = sum(p is not SignPolicy.PROCEED for p in policies)
    # a velocity with div = +1 must be rejected outright
    probe = VectorField(g0, np.asarray(g0.X), np.zeros(g0.shape))
    abort_ok = sign_policy(check_sign_conditions(g0, probe, 1e-8)) is SignPolicy.ABORT
    return PropertyResult(
        "sign_policy", n_bad == 0 and abort_ok,
        {"cases": len(cases), "not_proceed": n_bad, "abort_on_div_plus_one": abort_ok},
    )


def run_verify(seed: int = 0, family_size: int = 50, inject_sign_violation: bool = False,
               params: Optional[ModelParams] = None) -> VerifyReport:
    params = params or ModelParams()
    family = admissible_family(family_size, seed)
    report = VerifyReport(seed=seed)
    report.results.append(verify_maximum_principle(family))
    report.results.append(verify_nutrient_positivity(family, seed))
    report.results.append(verify_equilibrium(params))
    report.results.append(verify_mass_conservation(seed))
    report.results.append(verify_sign_policy(family, inject_sign_violation))
    for line in report.lines():
        log.info(line)
    return report

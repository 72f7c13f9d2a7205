"""Acceptance criteria 1-12, one PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -v`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py`` to print them directly.
"""

import json

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from biofilm_mixture.cli import main as cli_main
from biofilm_mixture.core import ModelParams, ScalarField, VectorField, build_grid
from biofilm_mixture.coupled import (
    CoupledConfig,
    CoupledMode,
    contraction_ratios,
    incompressibility_residual,
    run_fixed_point,
)
from biofilm_mixture.interface import EvolutionConfig, HeightProfile, advance_height
from biofilm_mixture.mms import divergence_identity_mms, nutrient_mms, stokes_mms, transport_mms
from biofilm_mixture.nutrient import NutrientProblem, lower_bound_certificate, solve_nutrient
from biofilm_mixture.stokes import StokesProblem, divergence_identity_residual, solve_stokes
from biofilm_mixture.transport import TransportProblem, solve_phi
from biofilm_mixture.verify import (
    REFERENCE_PI,
    admissible_family,
    contraction_threshold,
    reference_grid,
    reference_params,
    verify_maximum_principle,
)

RESULTS: dict[int, str] = {}

# regression band for the contraction threshold of the reference problem
THRESHOLD_BAND = (0.17, 0.20)


def record(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_01_equilibrium_exactness():
    g = build_grid(1.0, lambda x: 0.3 + 0.02 * np.cos(2 * np.pi * x), 32, 8, "periodic")
    phibar, p_b0 = 0.3, 0.2
    prm = ModelParams(p_b0=p_b0, Pi=0.5, t_normal="balanced")
    st = run_fixed_point(g, prm, CoupledConfig(phi_init=1.0 - phibar, outer_tol=1e-10))
    err = max(
        st.v_b.max_abs(), st.v_l.max_abs(),
        float(np.max(np.abs(st.p.values - p_b0))),
        float(np.max(np.abs(st.phi_l.values - 1.0))),
        float(np.max(np.abs(st.c.values - prm.c0))),
    )
    dv = st.history[-1]["dv_l"]
    ok = st.converged and st.iterations <= 3 and dv <= 1e-10 and err <= 1e-10
    record(1, ok, f"iterations={st.iterations} last |dv_l|={dv:.2e} max field error={err:.2e}")


def test_02_transport_maximum_principle():
    fam = admissible_family(50, seed=0)
    res = verify_maximum_principle(fam)
    m = res.measured
    record(2, res.passed and len(fam) >= 50,
           f"{len(fam)} fields, phi_l in [{m['min_phi_l']:.4g}, {m['max_phi_l']:.4g}], vanishing={m['vanishing_nodes']}")


def test_03_transport_constant_state():
    g = build_grid(2.0, lambda x: 0.5 + 0.05 * np.cos(np.pi * x), 16, 8, "traction")
    alpha = 0.5
    v = VectorField(g, -alpha * g.X, -alpha * g.Z)
    phi = solve_phi(TransportProblem(g, v, ScalarField.constant(g, 1.0))).values
    err = float(np.max(np.abs(phi[1:-1, 1:-1] - 0.5)))
    record(3, err <= 1e-9, f"max interior |phi_l - 0.5| = {err:.2e}")


def test_04_mms_orders():
    tr = transport_mms()
    p_per, v_per = stokes_mms(lateral="periodic")
    p_tr, v_tr = stokes_mms(lateral="traction")
    nu = nutrient_mms()
    orders = {
        "transport": (tr.min_order, 0.9),
        "stokes_p_periodic": (p_per.min_order, 1.8),
        "stokes_v_periodic": (v_per.min_order, 1.0),
        "stokes_p_traction": (p_tr.min_order, 1.8),
        "stokes_v_traction": (v_tr.min_order, 1.0),
        "nutrient": (nu.min_order, 1.8),
    }
    ok = all(o >= f for o, f in orders.values()) and all(len(t.errors) >= 3 for t in (tr, p_per, p_tr, nu))
    record(4, ok, " ".join(f"{k}={o:.2f}" for k, (o, _) in orders.items()))


def test_05_nutrient_lower_bound():
    prm = ModelParams(d=1.0, k_c=1.0, K_c=1.0, c0=1.0)
    H = 0.5
    worst = []
    g = build_grid(1.0, np.full(5, H), 4, 64, "periodic")
    cases = [(g, VectorField.zeros(g), ScalarField.constant(g, 1.0))]
    b = build_grid(1.0, np.full(17, H), 16, 16, "traction")
    cases.append((b, VectorField(b, -0.3 * b.X, -0.2 * b.Z), ScalarField(b, 0.5 + 0.5 * np.cos(np.pi * b.X) ** 2)))
    ok = True
    for grid, v, phib in cases:
        c = solve_nutrient(NutrientProblem(grid, v, phib, prm)).c
        bound, applicable = lower_bound_certificate(prm, H, c.max())
        ok &= applicable and c.min() >= bound - 1e-6
        worst.append((c.min(), bound))
    base, _ = lower_bound_certificate(prm, H, prm.c0)
    ok &= base == pytest.approx(0.75)
    record(5, ok, " ".join(f"min c={m:.4f} >= bound {bd:.4f}" for m, bd in worst))


def test_06_nutrient_ode_oracle():
    prm = ModelParams(d=1.0, k_c=1.0, K_c=1.0, c0=1.0)
    H = 0.5
    g = build_grid(1.0, np.full(5, H), 4, 64, "periodic")
    c = solve_nutrient(NutrientProblem(g, VectorField.zeros(g), ScalarField.constant(g, 1.0), prm)).c.values

    def rhs(z, y):
        return [y[1], prm.k_c * y[0] / (y[0] + prm.K_c) / prm.d]

    def miss(slope):
        return solve_ivp(rhs, (0.0, H), [prm.c0, slope], rtol=1e-12, atol=1e-14).y[1, -1]

    slope = brentq(miss, -10.0, 10.0, xtol=1e-14)
    sol = solve_ivp(rhs, (0.0, H), [prm.c0, slope], rtol=1e-12, atol=1e-14, dense_output=True).sol
    err = float(np.max(np.abs(c - sol(g.Z[0])[0][None, :])))
    record(6, err <= 1e-4, f"max |c - c_shooting| = {err:.2e} on a 1x64 column")


def test_07_incompressibility_refinement():
    prm = reference_params()
    cfg = CoupledConfig(mobility="variable", abort_on_sign=False)
    res = []
    for nx, nz in ((32, 8), (64, 16)):
        g = build_grid(1.0, lambda x: 0.3 + 0.05 * np.cos(2 * np.pi * x), nx, nz, "periodic")
        st = run_fixed_point(g, prm, cfg)
        assert st.converged
        res.append(incompressibility_residual(st))
    ratio = res[0] / res[1]
    record(7, ratio >= 1.5, f"|div v| 32x8={res[0]:.3e} 64x16={res[1]:.3e} ratio={ratio:.2f}")


def test_08_divergence_identity():
    g = build_grid(1.0, lambda x: 0.3 + 0.03 * np.cos(2 * np.pi * x), 32, 8, "traction")
    prm = ModelParams(Pi=0.5, p_b0=0.3, t_normal=-(0.3 + 0.5 * 0.4))
    phib = ScalarField.constant(g, 0.4)
    sol = solve_stokes(StokesProblem(g, phib, prm))
    eq = divergence_identity_residual(sol.v_b, sol.p, phib, prm)
    tab = divergence_identity_mms()
    ok = eq <= 1e-10 and tab.min_order >= 1.0
    record(8, ok, f"equilibrium residual={eq:.2e} MMS order={tab.min_order:.2f}")


def test_09_height_equation():
    U, steps = 0.5, 100
    h0 = lambda s: 0.3 + 0.05 * np.cos(2 * np.pi * s)
    errs, scales = [], []
    for nx in (32, 64, 128):
        dx = 1.0 / nx
        dt = 0.5 * dx / U
        x = np.linspace(0.0, 1.0, nx + 1)
        h = HeightProfile(h0(x))
        cfg = EvolutionConfig(dt=dt, T_final=steps * dt)
        for _ in range(steps):
            g = build_grid(1.0, h.h, nx, 4, "periodic")
            h = advance_height(h, VectorField(g, np.full(g.shape, U), np.zeros(g.shape)), dt, cfg)
        errs.append(float(np.sqrt(dx * np.sum((h.h[:-1] - h0(x - U * h.t)[:-1]) ** 2))))
        scales.append(dx + dt)
    # periodic mass identity over a run with lateral shear and bottom inflow
    rng = np.random.default_rng(11)
    nx = 32
    x = np.linspace(0.0, 1.0, nx + 1)
    h = HeightProfile(0.3 + 0.05 * np.cos(2 * np.pi * x))
    cfg = EvolutionConfig(dt=0.01, T_final=0.2)
    defect = 0.0
    for _ in range(20):
        g = build_grid(1.0, h.h, nx, 8, "periodic")
        c1, c2, w = rng.uniform(-0.5, 0.5, 3)
        vz = np.zeros(g.shape)
        vz[:, 0] = 0.1 * w * np.cos(2 * np.pi * g.x)
        new = advance_height(h, VectorField(g, c1 + c2 * np.sin(2 * np.pi * g.X) * g.S, vz), cfg.dt, cfg)
        defect = max(defect, abs(np.sum(new.h[:-1] - h.h[:-1]) * g.dx - cfg.dt * np.sum(vz[:-1, 0]) * g.dx))
        h = new
    ok = all(e <= s for e, s in zip(errs, scales)) and errs[2] < errs[1] < errs[0] and defect <= 1e-12
    record(9, ok, f"translation L2 errors {', '.join(f'{e:.2e}' for e in errs)} (<= dx+dt) mass defect={defect:.1e}")


def test_10_mode_agreement():
    Kb = 1e4
    prm = reference_params(K_b=Kb, g_inf=1.0 / (1.0 + Kb), k_b=0.5 * (1.0 + Kb))
    g = reference_grid(32, 8)
    a = run_fixed_point(g, prm, CoupledConfig(mode=CoupledMode.FROZEN_G))
    b = run_fixed_point(g, prm, CoupledConfig(mode=CoupledMode.MONOD_G))
    diff = float(np.max(np.abs(a.phi_l.values - b.phi_l.values)))
    record(10, a.converged and b.converged and diff <= 1e-3, f"K_b={Kb:g} max |phi_l frozen - phi_l monod| = {diff:.2e}")


CONFIG = """\
[run]
seed = 7
formats = csv, vtk
[grid]
nx = 16
nz = 8
[params]
Pi = 0.1
t_normal = 0.1
phi_inf = 0.4
[evolution]
dt = 0.01
T_final = 0.02
[verify]
family_size = 6
"""


def test_11_determinism(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(CONFIG, encoding="utf-8")
    digests = {}
    for cmd in ("solve", "evolve", "verify"):
        man = []
        for rep in ("a", "b"):
            out = tmp_path / f"{cmd}_{rep}"
            assert cli_main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
            man.append((out / "manifest.json").read_bytes())
        digests[cmd] = man[0] == man[1] and len(json.loads(man[0])["files"]) > 0
    record(11, all(digests.values()), " ".join(f"{k}={'identical' if v else 'differs'}" for k, v in digests.items()))


def test_12_empirical_contraction():
    st = run_fixed_point(reference_grid(), reference_params(REFERENCE_PI))
    r = contraction_ratios(st)[1:]
    threshold = contraction_threshold()
    lo, hi = THRESHOLD_BAND
    ok = st.converged and r.size > 0 and bool(np.all(r < 1.0)) and lo <= threshold <= hi
    record(12, ok, f"Pi={REFERENCE_PI}: max r={r.max():.3f} over {r.size} ratios; contraction lost at Pi~{threshold:.4f}")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    failed = 0
    for t in tests:
        try:
            if "tmp_path" in t.__code__.co_varnames[: t.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    t(Path(d))
            else:
                t()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biofilm_mixture.core import BiofilmError, GridError, ModelParams, ParameterError, VectorField, build_grid
from biofilm_mixture.coupled import CoupledConfig
from biofilm_mixture.interface import (
    CFLError,
    EvolutionConfig,
    HeightClosure,
    HeightProfile,
    advance_height,
    column_flux,
    evolve,
    height_rate,
    height_rate_expanded,
)


def wavy(nx=32, nz=8, lateral="periodic"):
    return build_grid(1.0, lambda x: 0.3 + 0.05 * np.cos(2 * np.pi * x), nx, nz, lateral)


def test_column_flux_exact_for_constant_and_linear():
    g = wavy()
    assert np.allclose(column_flux(g, VectorField(g, np.full(g.shape, 0.7), np.zeros(g.shape))), 0.7 * g.h, rtol=1e-14)
    assert np.allclose(column_flux(g, VectorField(g, g.Z.copy(), np.zeros(g.shape))), 0.5 * g.h**2, rtol=1e-13)


def test_column_flux_second_order_in_nz():
    errs = []
    for nz in (8, 16, 32):
        g = wavy(16, nz)
        F = column_flux(g, VectorField(g, np.sin(5 * g.Z), np.zeros(g.shape)))
        errs.append(np.max(np.abs(F - (1 - np.cos(5 * g.h)) / 5)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_column_flux_rejects_mismatched_profile():
    g = wavy()
    with pytest.raises(GridError):
        column_flux(g, VectorField.zeros(g), HeightProfile(np.full(33, 0.2)))


def test_zero_velocity_keeps_height():
    g = wavy()
    h = HeightProfile(g.h)
    new = advance_height(h, VectorField.zeros(g), 0.1, EvolutionConfig(dt=0.1, T_final=1.0))
    assert np.array_equal(new.h, h.h) and new.t == pytest.approx(0.1)


@pytest.mark.parametrize("nx, bound", [(32, 0.145), (64, 0.036), (128, 0.009)])
def test_translation_against_characteristics(nx, bound):
    U, steps = 0.5, 100
    dx = 1.0 / nx
    dt = 0.5 * dx / U
    x = np.linspace(0.0, 1.0, nx + 1)
    h0 = lambda s: 0.3 + 0.05 * np.cos(2 * np.pi * s)
    h = HeightProfile(h0(x))
    cfg = EvolutionConfig(dt=dt, T_final=steps * dt)
    for _ in range(steps):
        g = build_grid(1.0, h.h, nx, 4, "periodic")
        h = advance_height(h, VectorField(g, np.full(g.shape, U), np.zeros(g.shape)), dt, cfg)
    err = np.sqrt(dx * np.sum((h.h[:-1] - h0(x - U * h.t)[:-1]) ** 2))
    assert err <= bound


@settings(max_examples=30, deadline=None)
@given(c1=st.floats(-0.5, 0.5), c2=st.floats(-0.5, 0.5), w=st.floats(-0.05, 0.05))
def test_periodic_mass_identity(c1, c2, w):
    g = wavy()
    v = VectorField(g, c1 + c2 * np.sin(2 * np.pi * g.X) * g.S, np.zeros(g.shape))
    vz = np.zeros(g.shape)
    vz[:, 0] = w * np.cos(2 * np.pi * g.x)
    v = VectorField(g, v.x, vz)
    h = HeightProfile(g.h)
    new = advance_height(h, v, 0.01, EvolutionConfig(dt=0.01, T_final=1.0))
    lhs = np.sum(new.h[:-1] - h.h[:-1]) * g.dx
    rhs = 0.01 * np.sum(vz[:-1, 0]) * g.dx
    assert abs(lhs - rhs) <= 1e-12


def test_neumann_closure_conserves_with_zero_end_flux():
    g = wavy(lateral="traction")
    vx = np.sin(np.pi * g.X) * g.S
    h = HeightProfile(g.h)
    cfg = EvolutionConfig(dt=0.01, T_final=1.0, closure="neumann_zero")
    new = advance_height(h, VectorField(g, vx, np.zeros(g.shape)), 0.01, cfg)
    assert new.mass(HeightClosure.NEUMANN_ZERO) == pytest.approx(h.mass(HeightClosure.NEUMANN_ZERO), abs=1e-14)


def test_conservative_rate_agrees_with_expanded_form():
    errs = []
    for nx in (32, 64, 128):
        g = wavy(nx, 16)
        v = VectorField(g, 0.2 + 0.1 * np.sin(2 * np.pi * g.X) * g.Z, np.zeros(g.shape))
        a = height_rate(column_flux(g, v), v.z[:, 0], np.asarray(g.h), g.dx, HeightClosure.PERIODIC)
        b = height_rate_expanded(g, v)[:-1]
        errs.append(np.max(np.abs(a - b)))
    assert errs[2] < errs[1] < errs[0]


def test_cfl_violation_suggests_step():
    g = wavy()
    with pytest.raises(CFLError) as info:
        advance_height(HeightProfile(g.h), VectorField(g, np.full(g.shape, 10.0), np.zeros(g.shape)),
                       0.1, EvolutionConfig(dt=0.1, T_final=1.0))
    assert info.value.suggested_dt == pytest.approx(0.9 * g.dx / 10.0)


def test_floor_clips_and_records_mass():
    g = wavy()
    vz = np.zeros(g.shape)
    vz[:, 0] = -100.0
    new = advance_height(HeightProfile(g.h), VectorField(g, np.zeros(g.shape), vz), 0.01,
                         EvolutionConfig(dt=0.01, T_final=1.0))
    assert np.all(new.h >= g.h_min) and new.clipped_mass > 0.0


def test_nan_velocity_rejected():
    g = wavy()
    with pytest.raises(BiofilmError):
        advance_height(HeightProfile(g.h), VectorField(g, np.full(g.shape, np.nan), np.zeros(g.shape)),
                       0.01, EvolutionConfig(dt=0.01, T_final=1.0))


def test_config_validation():
    with pytest.raises(ParameterError):
        EvolutionConfig(dt=0.0, T_final=1.0)
    with pytest.raises(ParameterError):
        EvolutionConfig(dt=0.1, T_final=1.0, cfl=1.5)


def test_evolve_equilibrium_keeps_height():
    x = np.linspace(0.0, 1.0, 17)
    h0 = HeightProfile(0.3 + 0.02 * np.cos(2 * np.pi * x))
    prm = ModelParams(p_b0=0.2, t_normal=-0.2)
    res = evolve(prm, EvolutionConfig(dt=0.05, T_final=0.15), h0, 8, CoupledConfig(phi_init=1.0))
    assert res.completed and len(res.profiles) == 4 and len(res.states) == 3
    for p in res.profiles:
        assert np.allclose(p.h, h0.h, atol=1e-12)


def test_evolve_with_velocity_hook_and_failure():
    x = np.linspace(0.0, 1.0, 17)
    h0 = HeightProfile(0.3 + 0.02 * np.cos(2 * np.pi * x))
    hook = lambda g, t: VectorField(g, np.full(g.shape, 0.5), np.zeros(g.shape))
    res = evolve(ModelParams(), EvolutionConfig(dt=0.02, T_final=0.1), h0, 4, velocity_hook=hook)
    assert res.completed and res.profiles[-1].t == pytest.approx(0.1)
    fast = lambda g, t: VectorField(g, np.full(g.shape, 50.0), np.zeros(g.shape))
    res = evolve(ModelParams(), EvolutionConfig(dt=0.02, T_final=0.1), h0, 4, velocity_hook=fast)
    assert res.status == "failed" and res.failed_step == 1 and isinstance(res.exception, CFLError)
    assert len(res.profiles) == 1

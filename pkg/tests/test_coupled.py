import numpy as np
import pytest

from biofilm_mixture.core import ModelParams, ParameterError, VectorField, build_grid
from biofilm_mixture.coupled import (
    CoupledConfig,
    CoupledMode,
    SignPolicy,
    contraction_ratios,
    incompressibility_residual,
    iteration_diagnostics,
    run_fixed_point,
    sign_policy,
)
from biofilm_mixture.nutrient import PicardError
from biofilm_mixture.transport import check_sign_conditions
from biofilm_mixture.verify import reference_grid, reference_params


@pytest.fixture(scope="module")
def reference_state():
    return run_fixed_point(reference_grid(), reference_params())


def test_trivial_fixed_point_in_two_iterations():
    g = build_grid(1.0, lambda x: 0.3 + 0.02 * np.cos(2 * np.pi * x), 16, 8, "periodic")
    prm = ModelParams(p_b0=0.4, t_normal=-0.4, k_b=3.0, g_inf=0.2)
    st = run_fixed_point(g, prm, CoupledConfig(phi_init=1.0, outer_tol=1e-10))
    assert st.converged and st.iterations <= 2
    assert st.history[-1]["dv_l"] <= 1e-10
    assert st.v_b.max_abs() <= 1e-10 and st.v_l.max_abs() <= 1e-10
    assert np.allclose(st.p.values, 0.4, atol=1e-10)
    assert np.allclose(st.phi_l.values, 1.0, atol=1e-10)
    assert np.allclose(st.c.values, 1.0, atol=1e-10)
    diag = iteration_diagnostics(st)
    assert diag["incompressibility"] <= 1e-10


def test_reference_problem_contracts(reference_state):
    st = reference_state
    assert st.converged
    r = contraction_ratios(st)[1:]
    assert np.all(r < 1.0)
    assert all(h["sign_policy"] == "proceed" for h in st.history)
    assert 0.0 < st.phi_l.min() <= st.phi_l.max() <= 1.0


def test_history_records(reference_state):
    keys = {"iteration", "dv_l", "dp", "dphi_l", "max_div_vl", "max_vn", "sign_policy",
            "phi_l_min", "phi_l_max", "c_min", "c_max", "incompressibility", "picard_iterations"}
    assert keys <= set(reference_state.history[0])
    assert [h["iteration"] for h in reference_state.history] == list(range(1, reference_state.iterations + 1))


def test_modes_agree_for_flat_monod():
    Kb = 1e4
    prm = reference_params(K_b=Kb, g_inf=1.0 / (1.0 + Kb), k_b=0.5 * (1.0 + Kb))
    g = reference_grid()
    a = run_fixed_point(g, prm, CoupledConfig(mode=CoupledMode.FROZEN_G))
    b = run_fixed_point(g, prm, CoupledConfig(mode=CoupledMode.MONOD_G))
    assert a.converged and b.converged
    assert np.max(np.abs(a.phi_l.values - b.phi_l.values)) <= 1e-3


def test_growth_factor_hook_matches_frozen_mode():
    g = reference_grid(16, 8)
    prm = reference_params()
    a = run_fixed_point(g, prm)
    b = run_fixed_point(g, prm, CoupledConfig(mode="monod_g"), growth_factor=lambda c: np.full(c.shape, prm.g_inf))
    assert np.max(np.abs(a.phi_l.values - b.phi_l.values)) <= 1e-12


def test_sign_policy_levels():
    g = reference_grid(16, 8)
    assert sign_policy(check_sign_conditions(g, VectorField.zeros(g))) is SignPolicy.PROCEED
    expanding = VectorField(g, np.asarray(g.X), np.zeros(g.shape))
    assert sign_policy(check_sign_conditions(g, expanding, 1e-8)) is SignPolicy.ABORT
    weak = VectorField(g, 1e-7 * np.asarray(g.X), np.zeros(g.shape))
    assert sign_policy(check_sign_conditions(g, weak, 1e-8)) is SignPolicy.FLAG


def test_large_Pi_aborts_on_sign_violation():
    st = run_fixed_point(reference_grid(), reference_params(0.2))
    assert st.status == "aborted" and not st.converged
    assert st.history[-1]["sign_policy"] == "abort"


def test_diverging_run_is_monitored():
    cfg = CoupledConfig(outer_max_iter=25, abort_on_sign=False)
    st = run_fixed_point(reference_grid(), reference_params(0.2), cfg)
    assert st.status == "max_iter"
    dv = st.dv_history()
    assert dv[-1] > dv[-2] > dv[-3]
    diag = iteration_diagnostics(st)
    assert diag["dv_growing"]
    assert np.max(contraction_ratios(st)[1:]) > 1.0


def test_inner_failure_carries_iteration():
    g = reference_grid(16, 8)
    prm = reference_params(d=0.05, k_c=5.0, K_c=0.05)
    with pytest.raises(PicardError) as info:
        run_fixed_point(g, prm, CoupledConfig(picard_max_iter=1))
    assert info.value.iteration == 1
    assert "outer iteration 1" in str(info.value)


def test_incompressibility_refines_with_variable_mobility():
    prm = reference_params()
    res = []
    for nx, nz in ((32, 8), (64, 16)):
        g = build_grid(1.0, lambda x: 0.3 + 0.05 * np.cos(2 * np.pi * x), nx, nz, "periodic")
        st = run_fixed_point(g, prm, CoupledConfig(mobility="variable", abort_on_sign=False))
        assert st.converged
        res.append(incompressibility_residual(st))
    assert res[0] / res[1] >= 1.5


@pytest.mark.parametrize("kw", [dict(omega=0.0), dict(omega=1.5), dict(outer_tol=0.0),
                                dict(outer_max_iter=0), dict(phi_init=0.0), dict(mobility="odd"),
                                dict(epsilon=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        CoupledConfig(**kw)

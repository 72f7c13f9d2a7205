import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from biofilm_mixture.core import ModelParams, ScalarField, VectorField, build_grid
from biofilm_mixture.mms import nutrient_mms
from biofilm_mixture.nutrient import (
    NutrientProblem,
    PicardError,
    assemble_nutrient_step,
    consumption_coefficient,
    lower_bound_certificate,
    solve_nutrient,
)


def column(nz=64, H=0.5):
    return build_grid(1.0, np.full(5, H), 4, nz, "periodic")


def shooting_oracle(prm, H):
    """Fine ODE solution of ``d c'' = k_c c/(c+K_c)``, ``c(0)=c0``, ``c'(H)=0``."""
    def rhs(z, y):
        return [y[1], prm.k_c * y[0] / (y[0] + prm.K_c) / prm.d]

    def miss(slope):
        return solve_ivp(rhs, (0.0, H), [prm.c0, slope], rtol=1e-12, atol=1e-14).y[1, -1]

    slope = brentq(miss, -10.0, 10.0, xtol=1e-14)
    return solve_ivp(rhs, (0.0, H), [prm.c0, slope], rtol=1e-12, atol=1e-14, dense_output=True).sol


def test_no_consumption_gives_bottom_value_in_one_step():
    g = build_grid(1.0, lambda x: 0.3 + 0.05 * np.cos(2 * np.pi * x), 16, 8, "periodic")
    res = solve_nutrient(NutrientProblem(g, VectorField.zeros(g), ScalarField.constant(g, 0.0), ModelParams(c0=2.0)))
    assert res.iterations == 1
    assert np.allclose(res.c.values, 2.0, atol=1e-12)


@pytest.mark.parametrize("d", [1.0, 0.2])
def test_column_matches_shooting_oracle(d):
    prm = ModelParams(d=d, k_c=1.0, K_c=1.0, c0=1.0)
    g = column()
    c = solve_nutrient(NutrientProblem(g, VectorField.zeros(g), ScalarField.constant(g, 1.0), prm)).c.values
    exact = shooting_oracle(prm, 0.5)(g.Z[0])[0]
    assert np.max(np.abs(c - exact[None, :])) <= 1e-4


def test_lower_bound_holds_on_column():
    prm = ModelParams(d=1.0, k_c=1.0, K_c=1.0, c0=1.0)
    g = column()
    c = solve_nutrient(NutrientProblem(g, VectorField.zeros(g), ScalarField.constant(g, 1.0), prm)).c
    bound, ok = lower_bound_certificate(prm, 0.5, c.max())
    assert ok and c.max() <= prm.c0 + 1e-12
    assert c.min() >= bound - 1e-6


def test_certificate_values():
    prm = ModelParams(d=1.0, k_c=1.0, K_c=1.0, c0=1.0)
    assert lower_bound_certificate(prm, 0.5, 1.0) == (pytest.approx(0.75), True)
    assert lower_bound_certificate(prm, 2.0, 1.0)[1] is False
    assert lower_bound_certificate(prm, 3.0, 1.0)[1] is False
    tiny = prm.replace(k_c=1e-12)
    assert lower_bound_certificate(tiny, 0.5, 1.0)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        lower_bound_certificate(prm, 0.5, 0.0)


def test_consumption_coefficient_clips_negative_iterates():
    prm = ModelParams(k_c=2.0, K_c=0.5)
    a = consumption_coefficient(prm, np.array([1.0, 1.0]), np.array([-1.0, 0.5]))
    assert np.allclose(a, [4.0, 2.0])


def test_bottom_rows_are_dirichlet():
    g = build_grid(1.0, np.full(9, 0.4), 8, 4, "traction")
    sysm = assemble_nutrient_step(g, VectorField.zeros(g), np.ones(g.shape), 1.0, 3.0)
    bottom = g.to_dof((g.tags == 1).astype(float)) > 0.5
    A = sysm.matrix.toarray()
    rows = A[bottom]
    assert np.count_nonzero(rows - np.diag(np.diag(A))[bottom]) == 0
    assert np.allclose(sysm.rhs[bottom] / A[bottom, bottom], 3.0)


def test_picard_history_decreases_and_failure_keeps_iterates():
    g = column(16)
    prm = ModelParams(d=0.05, k_c=5.0, K_c=0.05)
    res = solve_nutrient(NutrientProblem(g, VectorField.zeros(g), ScalarField.constant(g, 1.0), prm))
    assert res.history[-1] <= 1e-10
    with pytest.raises(PicardError) as info:
        solve_nutrient(NutrientProblem(g, VectorField.zeros(g), ScalarField.constant(g, 1.0), prm, picard_max_iter=2))
    err = info.value
    assert len(err.history) == 2 and err.last.shape == g.shape and err.previous.shape == g.shape


def test_positivity_with_contracting_flow():
    g = build_grid(1.0, lambda x: 0.4 + 0.03 * np.cos(2 * np.pi * x + 0.5), 16, 8, "traction")
    v = VectorField(g, -0.4 * g.X, -0.4 * g.Z)
    prm = ModelParams(d=1.0, k_c=2.0, K_c=0.5)
    res = solve_nutrient(NutrientProblem(g, v, ScalarField(g, 0.5 + 0.5 * np.sin(3 * g.X) ** 2), prm))
    assert res.c.min() > 0.0
    assert res.diagnostics["vl_over_d"] == pytest.approx(v.max_abs())


def test_nutrient_mms_order():
    assert nutrient_mms().min_order >= 1.8

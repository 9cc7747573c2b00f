import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavewell import classify
from wavewell.classify import (
    REGIMES,
    ExperimentPlan,
    Prediction,
    Recipe,
    initial_fields,
    predict,
    regime_of,
    run_experiment,
    verify_invariance,
    verify_zero_energy_bound,
    zero_energy_bound,
)
from wavewell.domain import Grid, WellContext, grad_norm_sq, lp_norm_pow
from wavewell.dynamics import State, simulate
from wavewell.errors import InputError
from wavewell.nonlinearity import ConditionParams, NonlinearitySpec

CUBIC = NonlinearitySpec.cubic()
P0 = ConditionParams()


@pytest.fixture(scope="module")
def grid():
    return Grid.interval(math.pi, 100)


def plan(grid, **kw):
    kw.setdefault("budget", 8)
    return ExperimentPlan(grid, kw.pop("spec", CUBIC), kw.pop("params", P0), **kw)


def test_recipes_reproducible(grid):
    r = Recipe(kind="random", amplitude=2.0)
    a, b = r.build(grid, 7, 0), r.build(grid, 7, 0)
    assert np.array_equal(a, b)
    assert np.max(np.abs(a)) == pytest.approx(2.0)
    assert not np.array_equal(a, r.build(grid, 7, 1))
    assert not np.array_equal(a, r.build(grid, 8, 0))
    two = Recipe(modes=(1, 2), weights=(1.0, 0.5)).build(grid, 0, 0)
    assert np.allclose(two, grid.eigenmode(1) + 0.5 * grid.eigenmode(2))
    with pytest.raises(InputError):
        Recipe(kind="spiral")
    with pytest.raises(InputError):
        Recipe(kind="u0").build(grid, 0, 0)


def test_predict_zero_data(grid):
    p = plan(grid, params=ConditionParams(sigma=0.01), u0=Recipe(kind="zero"))
    pred = predict(p)
    assert pred.E0 == pytest.approx(0.01 * math.pi, rel=1e-12)
    assert pred.I0 == 0
    assert pred.regime == "global"


def test_predict_small_and_large_data(grid):
    small = predict(plan(grid, u0=Recipe(amplitude=0.1)))
    assert small.I0 > 0 and small.E0 < math.pi / 6
    assert small.regime == "global"
    assert small.delta_window[0] < 1 < small.delta_window[1]
    big = predict(plan(grid, u0=Recipe(amplitude=10.0), u1=Recipe(kind="u0")))
    assert big.I0 < 0 and big.E0 < 0
    assert big.regime == "negative-energy-blowup" and big.predicts_blowup


def test_predict_determinism(grid):
    p = plan(grid, u0=Recipe(kind="random", amplitude=0.5), seed=3)
    first = predict(p).to_dict()
    classify._CACHE.clear()
    assert predict(p).to_dict() == first


def test_plan_digest(grid):
    a, b = plan(grid, u0=Recipe(amplitude=0.1)), plan(grid, u0=Recipe(amplitude=0.1))
    assert a.digest() == b.digest()
    assert a.digest() != plan(grid, u0=Recipe(amplitude=0.2)).digest()


@settings(max_examples=300, deadline=None)
@given(
    st.floats(-10, 10), st.floats(-10, 10), st.floats(0.01, 5), st.sampled_from([0.0, 1.0]),
    st.floats(-1, 1), st.booleans(),
)
def test_regime_table_total(E0, I0, d, G0, c, critical):
    regime, reason = regime_of(E0, I0, d, G0, c, critical)
    assert regime in REGIMES and reason


def test_regime_table_cells():
    d = 1.0
    assert regime_of(0.5, 0.1, d, 1.0, 0.0)[0] == "global"
    assert regime_of(0.5, -0.1, d, 1.0, 0.0)[0] == "blowup"
    assert regime_of(-0.5, -0.1, d, 1.0, 0.0)[0] == "negative-energy-blowup"
    assert regime_of(2.0, 0.1, d, 1.0, 0.0)[0] == "indeterminate"
    assert regime_of(d, 0.1, d, 1.0, 0.0)[0] == "indeterminate"
    assert regime_of(d, 0.1, d, 1.0, 0.0, critical=True)[0] == "global-critical"
    assert regime_of(d, -0.1, d, 1.0, 0.5, critical=True)[0] == "blowup-critical"
    assert regime_of(d, -0.1, d, 1.0, -0.5, critical=True)[0] == "indeterminate"


def test_linear_control_trivially_invariant(grid):
    rec = run_experiment(plan(grid, spec=NonlinearitySpec("zero"), u0=Recipe(amplitude=1.0), t_end=2.0))
    assert rec.prediction["regime"] == "global"
    assert rec.outcome == "confirmed"
    assert rec.diagnostics_summary["min_I"] > 0


def test_global_run_confirmed(grid):
    rec = run_experiment(plan(grid, u0=Recipe(amplitude=0.3), t_end=5.0))
    assert rec.outcome == "confirmed", rec.checks
    assert rec.invariance["ok"] and rec.invariance["initial_tags"] == ["W"] * 5
    assert rec.diagnostics_summary["sup_grad_norm_sq"] < rec.checks["norm_bound"]
    json.dumps(rec.to_dict())


def test_blowup_run_inside_window_is_V(grid):
    rec = run_experiment(plan(grid, u0=Recipe(amplitude=1.5), t_end=5.0))
    assert rec.prediction["regime"] == "blowup"
    assert rec.verdict["detected"]
    assert rec.invariance["initial_tags"] == ["V"] * 5 and rec.invariance["ok"]
    assert rec.outcome == "confirmed"


def test_zero_energy_bound_arithmetic():
    ctx = WellContext(1.0, 1.0, 1.0, 3 / 256, 0.25, 2.0, math.pi)
    assert zero_energy_bound(ctx, ConditionParams(gamma=8.0)) == pytest.approx((256 / 6) ** (1 / 6))
    assert zero_energy_bound(ctx, ConditionParams(gamma=8.0)) == pytest.approx(1.869, abs=1e-3)


def test_zero_energy_run(grid):
    u = grid.eigenmode(1)
    s = math.sqrt(2 * grad_norm_sq(grid, u) / lp_norm_pow(grid, u, 4))
    st0 = State.initial(grid, s * u, 0 * u)
    diag, v = simulate(grid, CUBIC, P0, st0, grid.spacing[0] / 4, 3.0)
    assert abs(diag.energy[0]) < 1e-12
    ctx = classify.plan_context(plan(grid))
    rep = verify_zero_energy_bound(diag, ctx, P0)
    assert rep["applicable"] and rep["ok"], rep
    other, _ = simulate(grid, CUBIC, P0, State.initial(grid, 0.1 * u, 0 * u), grid.spacing[0] / 4, 0.1)
    assert not verify_zero_energy_bound(other, ctx, P0)["applicable"]
    zero, _ = simulate(grid, CUBIC, P0, State.initial(grid, 0 * u, 0 * u), 0.01, 0.1)
    assert not verify_zero_energy_bound(zero, ctx, P0)["applicable"]


def test_invariance_not_applicable_without_window():
    pred = Prediction(1.0, 1.0, 0.5, "indeterminate", None, 1.0, 0.0, 1e-6)
    assert not verify_invariance(pred, None).applicable


def test_critical_inside(grid):
    p = plan(grid, critical="inside", u1=Recipe(kind="zero"), t_end=3.0)
    u0, _ = initial_fields(p)
    pred = predict(p, u0, np.zeros(grid.size))
    assert abs(pred.E0 - pred.d_estimate) <= pred.tol_d
    assert pred.regime == "global-critical"


def test_critical_outside(grid):
    p = plan(grid, critical="outside", u1=Recipe(amplitude=0.1))
    u0, u1 = initial_fields(p)
    pred = predict(p, u0, u1)
    assert abs(pred.E0 - pred.d_estimate) <= pred.tol_d
    assert pred.regime == "blowup-critical"


def test_critical_needs_independent_u1(grid):
    with pytest.raises(InputError):
        initial_fields(plan(grid, critical="inside", u1=Recipe(kind="u0")))
    with pytest.raises(InputError):
        plan(grid, critical="sideways")

import numpy as np
import pytest

from mpsynth.lp import LinearProgram, LPError, solve_lp, solve_lp_highs, to_lp_format
from oracles import certificate_ok, random_lp


def test_trivial_bounded():
    lp = LinearProgram()
    x = lp.add_variable("x")
    lp.add_constraint({x: 1}, "<=", 3)
    lp.set_objective({x: 1}, "max")
    res = solve_lp(lp)
    assert res.status == "optimal" and res.x[0] == pytest.approx(3) and res.objective == pytest.approx(3)


def test_trivial_unbounded_and_infeasible():
    lp = LinearProgram()
    x = lp.add_variable("x")
    lp.add_constraint({x: 1}, ">=", 0)
    lp.set_objective({x: 1}, "max")
    assert solve_lp(lp).status == "unbounded"
    lp2 = LinearProgram()
    y = lp2.add_variable("y")
    lp2.add_constraint({y: 1}, "<=", -1)
    lp2.set_objective({y: 1})
    assert solve_lp(lp2).status == "infeasible"


def test_bounds_and_free_variables():
    lp = LinearProgram()
    a = lp.add_variable("a", lb=None, ub=None)
    b = lp.add_variable("b", lb=-2, ub=5)
    c = lp.add_variable("c", lb=None, ub=4)
    lp.add_constraint({a: 1, b: 1}, "==", 1)
    lp.add_constraint({c: 1, a: -1}, ">=", -10)
    lp.set_objective({a: 1, c: 2}, "max")
    res = solve_lp(lp)
    assert res.optimal
    assert res.x == pytest.approx([3, -2, 4])
    assert lp.check(res.x) == []


def test_malformed():
    lp = LinearProgram()
    lp.add_variable()
    with pytest.raises(LPError):
        lp.add_constraint({3: 1.0}, "<=", 1)
    with pytest.raises(LPError):
        lp.add_constraint({0: 1.0}, "<>", 1)
    with pytest.raises(LPError):
        lp.add_variable(lb=2, ub=1)


@pytest.mark.parametrize("rule", ["bland", "dantzig"])
def test_random_lps_certificates(rule):
    rng = np.random.default_rng(11)
    n_opt = 0
    for _ in range(100):
        lp = random_lp(rng)
        res = solve_lp(lp, rule=rule)
        assert res.status in ("optimal", "unbounded")
        ref = solve_lp_highs(lp)
        assert res.status == ref.status
        if res.optimal:
            n_opt += 1
            assert lp.check(res.x) == []
            assert res.objective == pytest.approx(ref.objective, abs=1e-8)
            assert certificate_ok(lp, res)
    assert n_opt > 50


def test_degenerate_cycling_example():
    # Beale's example cycles under the textbook largest-coefficient rule
    lp = LinearProgram()
    x = lp.add_variables(4)
    lp.add_constraint(dict(zip(x, [0.25, -60, -0.04, 9])), "<=", 0)
    lp.add_constraint(dict(zip(x, [0.5, -90, -0.02, 3])), "<=", 0)
    lp.add_constraint({x[2]: 1}, "<=", 1)
    lp.set_objective(dict(zip(x, [0.75, -150, 0.02, -6])), "max")
    for rule in ("bland", "dantzig"):
        res = solve_lp(lp, rule=rule)
        assert res.optimal and res.objective == pytest.approx(0.05)


def test_lp_dump():
    lp = LinearProgram()
    x = lp.add_variable("x")
    y = lp.add_variable("y", lb=None)
    lp.add_constraint({x: 1, y: -2}, "<=", 4, name="r0")
    lp.set_objective({x: 1}, "max")
    text = to_lp_format(lp)
    assert text.startswith("Maximize") and "r0: x - 2 y <= 4" in text and "y free" in text

import math

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr

from packnlp.models import Instance, Solution, build_system
from packnlp.polish import (
    PRECISION,
    PolishRejectedError,
    polish,
    polish_bodies,
    polish_circles,
    to_double_down,
    to_double_up,
)
from packnlp.solver import SolverConfig, fill_auxiliary, multistart
from packnlp.verify import verify

from _support import FAMILY_CASES


def _circle_solution(centers, radii, n=None):
    inst = Instance("circle_square", len(radii))
    sys = build_system(inst)
    x = np.zeros(sys.n_vars)
    p = sys.layout.view(x, "pose")
    p[:] = centers
    x[sys.layout.slice("pose")] = p.reshape(-1)
    x[sys.layout.slice("r")] = radii
    return inst, Solution(inst, x, float(np.sum(radii)))


def _eight_cubes(scale=1.0):
    inst = Instance("platonic", 8, "cube", "cube")
    sys = build_system(inst)
    h = scale / math.sqrt(3)
    x = np.zeros(sys.n_vars)
    x[0] = 2.0 * scale
    p = sys.layout.view(x, "pose")
    p[:] = [[sx * h, sy * h, sz * h, 0, 0, 0] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    x[sys.layout.slice("pose")] = p.reshape(-1)
    fill_auxiliary(inst, sys, x)
    return inst, Solution(inst, x, float(x[0]))


# ------------------------------------------------------------------ rounding


def test_directed_rounding_brackets_value():
    with gmpy2.context(precision=PRECISION):
        for text in ("0.1", "1e-300", "2.5", "-0.7", "3.14159265358979323846264338327950288"):
            v = mpfr(text)
            up, down = to_double_up(v), to_double_down(v)
            assert mpfr(up) >= v and mpfr(down) <= v
            assert up == down or math.nextafter(down, math.inf) == up


def test_directed_rounding_exact_double():
    with gmpy2.context(precision=PRECISION):
        assert to_double_up(mpfr(0.5)) == 0.5 == to_double_down(mpfr(0.5))


# ------------------------------------------------------------------ circles


def test_two_circles_uniform_slack():
    """Walls and the pair each leave 1e-8: the pair limits the uniform growth to 5e-9."""
    slack = 1e-8
    r = 0.25 - 0.75 * slack
    x1 = r + slack
    x2 = x1 + 2 * r + slack
    inst, sol = _circle_solution([[x1, 0.5], [x2, 0.5]], [r, r])
    out, rep = polish_circles(inst, sol)
    assert rep.delta == pytest.approx(slack / 2, abs=1e-14)
    assert rep.delta <= slack / 2
    r_out = build_system(inst).layout.view(out.x, "r")
    assert np.all(r_out >= r + slack / 2 - 1e-14)
    # the pair is tight after phase 1, so phase 2 can only add margin-sized amounts
    assert max(rep.increments) <= 1e-14
    assert verify(inst, out).feasible
    assert out.objective > sol.objective


def test_tight_circles_gain_nothing():
    inst, sol = _circle_solution([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]], [0.25] * 4)
    out, rep = polish_circles(inst, sol)
    assert rep.delta == 0.0
    assert all(v == 0.0 for v in rep.increments)
    assert out.objective == sol.objective
    assert verify(inst, out).feasible


def test_phase_two_grows_smallest_first():
    # the small circle has room; the big one is tight against the walls
    inst, sol = _circle_solution([[0.35, 0.35], [0.85, 0.85]], [0.35, 0.1])
    out, rep = polish_circles(inst, sol)
    r = build_system(inst).layout.view(out.x, "r")
    assert rep.increments[1] > 0.04
    assert r[1] == pytest.approx(0.15, abs=1e-12)
    assert verify(inst, out).feasible


def test_overlapping_circles_rejected():
    inst, sol = _circle_solution([[0.3, 0.5], [0.6, 0.5]], [0.2, 0.2])
    with pytest.raises(PolishRejectedError):
        polish_circles(inst, sol)


# ------------------------------------------------------------------ bodies


def test_tight_cubes_fixed_point():
    inst, sol = _eight_cubes()
    out, rep = polish_bodies(inst, sol)
    assert rep.sigma == pytest.approx(1.0, abs=1e-13)
    assert 2.0 <= out.objective <= 2.0 * (1 + 1e-13)
    assert verify(inst, out).feasible


def test_angles_bit_identical():
    inst = Instance("polygon", 4, 3, 5)
    report = multistart(inst, SolverConfig(restarts=2, mode="sat_penalty", time_budget=600))
    sol = report.best
    out, _ = polish(inst, sol)
    lay = build_system(inst).layout
    assert np.array_equal(lay.view(out.x, "pose")[:, 2], lay.view(sol.x, "pose")[:, 2])


@pytest.mark.parametrize(
    "inst",
    [Instance("polygon", 4, 4, 6), Instance("platonic", 3, "tetrahedron", "cube")],
    ids=lambda i: i.key,
)
def test_epsilon_slack_needs_tiny_scale(inst):
    report = multistart(inst, SolverConfig(restarts=2, mode="sat_penalty", time_budget=600))
    out, rep = polish(inst, report.best)
    assert rep.sigma < 1 + 1e-7
    assert verify(inst, out).feasible
    assert abs(out.objective - report.best.objective) / report.best.objective < 1e-6


def test_grossly_infeasible_rejected():
    inst, sol = _eight_cubes()
    sys = build_system(inst)
    x = sol.x.copy()
    x[sys.layout.slice("pose")] *= 0.5
    with pytest.raises(PolishRejectedError):
        polish(inst, Solution(inst, x, sol.objective))


def test_sigma_limit_rejected_directly():
    inst, sol = _eight_cubes()
    sys = build_system(inst)
    x = sol.x.copy()
    x[sys.layout.slice("pose")] *= 0.4
    with pytest.raises(PolishRejectedError):
        polish_bodies(inst, Solution(inst, x, sol.objective))


# ------------------------------------------------------------------ every family


@pytest.mark.parametrize("family,n,m,l", FAMILY_CASES)
def test_polish_is_exact_and_idempotent(family, n, m, l):
    inst = Instance(family, n, m, l)
    report = multistart(inst, SolverConfig(restarts=2, seed=4, mode="sat_penalty", time_budget=600))
    raw = report.best
    once, rep = polish(inst, raw)
    assert rep.feasible
    assert verify(inst, once, tolerance=0.0).feasible
    assert once.meta["polished"]
    if inst.sense == "max":
        assert once.objective >= raw.objective
    else:
        # minimization: polishing may remove slack but never costs more than 1e-6
        assert once.objective <= raw.objective * (1 + 1e-6)
    twice, _ = polish(inst, once)
    assert abs(twice.objective - once.objective) <= 1e-12 * abs(once.objective)
    assert verify(inst, twice).feasible

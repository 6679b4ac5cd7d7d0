import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from perifide.errors import InvalidArgument
from perifide.quad import (DiscreteFunction, QuadratureRule, build_rule, integrate, pairing,
                           point_rule)

kinds = st.sampled_from(["midpoint", "trapezoidal", "chebyshev2"])
intervals = st.tuples(st.floats(-5, 5), st.floats(0.1, 10)).map(lambda p: (p[0], p[0] + p[1]))


def test_midpoint_nodes_and_weights():
    r = build_rule("midpoint", 4, (0, 1))
    assert np.allclose(r.nodes, [0.125, 0.375, 0.625, 0.875])
    assert np.allclose(r.weights, 0.25)


def test_trapezoid_has_half_weights_at_ends():
    r = build_rule("trapezoidal", 4, (0, 2))
    assert r.size == 5
    assert np.allclose(r.weights, [0.25, 0.5, 0.5, 0.5, 0.25])


def test_chebyshev2_is_two_point_gauss_per_cell():
    r = build_rule("chebyshev2", 1, (-1, 1))
    assert np.allclose(r.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)])
    assert np.allclose(r.weights, [1.0, 1.0])
    # exact for cubics on every cell
    r = build_rule("chebyshev2", 3, (0, 3))
    assert integrate(r, r.nodes ** 3) == pytest.approx(3 ** 4 / 4, rel=1e-14)


@given(kinds, st.integers(1, 60), intervals)
def test_weights_sum_to_measure(kind, n, interval):
    r = build_rule(kind, n, interval)
    assert r.weights.sum() == pytest.approx(interval[1] - interval[0], rel=1e-12)
    assert np.all(np.diff(r.nodes) > 0)
    assert r.nodes[0] >= interval[0] - 1e-12 and r.nodes[-1] <= interval[1] + 1e-12


@given(kinds, st.integers(1, 40), st.floats(0.1, 5))
def test_symmetric_interval_gives_symmetric_rule(kind, n, half):
    assert build_rule(kind, n, (-half, half)).is_symmetric


def test_offset_interval_is_not_symmetric():
    assert not build_rule("midpoint", 8, (0, 1)).is_symmetric


@given(kinds, st.integers(1, 30))
def test_linear_functions_integrated_exactly(kind, n):
    r = build_rule(kind, n, (-1.0, 2.0))
    assert integrate(r, 3 * r.nodes + 1) == pytest.approx(7.5, rel=1e-12)


@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6),
       st.lists(st.floats(-10, 10), min_size=6, max_size=6))
def test_pairing_is_symmetric_and_bilinear(u, v):
    r = build_rule("midpoint", 6, (0, 1))
    u, v = np.array(u), np.array(v)
    assert pairing(r, u, v) == pytest.approx(pairing(r, v, u))
    assert pairing(r, 2 * u + v, v) == pytest.approx(2 * pairing(r, u, v) + pairing(r, v, v),
                                                    abs=1e-9)


def _order(kind, ns):
    errs = [abs(integrate(build_rule(kind, n, (0, 1)), np.exp(build_rule(kind, n, (0, 1)).nodes))
                - (np.e - 1)) for n in ns]
    return np.polyfit(np.log(ns), np.log(errs), 1)[0]


@pytest.mark.parametrize("kind,expected", [("midpoint", 2), ("trapezoidal", 2), ("chebyshev2", 4)])
def test_convergence_order_on_exponential(kind, expected):
    assert -_order(kind, [4, 8, 16, 32]) == pytest.approx(expected, abs=0.1)


def test_invalid_arguments():
    with pytest.raises(InvalidArgument):
        build_rule("simpson", 4, (0, 1))
    with pytest.raises(InvalidArgument):
        build_rule("midpoint", 0, (0, 1))
    with pytest.raises(InvalidArgument):
        build_rule("midpoint", 4, (1, 1))
    r = build_rule("midpoint", 4, (0, 1))
    with pytest.raises(InvalidArgument):
        integrate(r, np.ones(5))


def test_rules_are_read_only():
    r = build_rule("midpoint", 4, (0, 1))
    with pytest.raises(ValueError):
        r.nodes[0] = 1.0


def test_serialization_round_trip():
    r = build_rule("chebyshev2", 7, (-1.5, 2.0))
    back = QuadratureRule.from_dict(json.loads(r.to_json()))
    assert back.same_as(r)
    assert QuadratureRule.from_dict(point_rule(0.5).to_dict()).nodes[0] == 0.5


def test_point_rule_is_unit_mass():
    r = point_rule()
    assert r.size == 1 and integrate(r, [3.0]) == 3.0


def test_discrete_function_arithmetic():
    r = build_rule("midpoint", 10, (0, 1))
    f = r.sample(lambda x: x)
    g = 2 * f + 1
    assert isinstance(g, DiscreteFunction)
    assert g.integral() == pytest.approx(2.0)
    assert (f * f).integral() == pytest.approx(pairing(r, f, f))
    assert f.pair(g) == pytest.approx(pairing(r, f.values, g.values))
    other = build_rule("midpoint", 10, (0, 2)).sample(lambda x: x)
    with pytest.raises(InvalidArgument):
        f + other
    with pytest.raises(InvalidArgument):
        DiscreteFunction(r, np.ones(3))

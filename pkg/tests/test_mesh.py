import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import shishkin_coords_mp
from shishkin_sdfem.mesh import (
    MeshParams,
    ProblemSpec,
    Region,
    build_mesh,
    mesh_from_json,
    region_of_point,
    transition_parameters,
)


def make(N, eps, b=(1.0, 1.0)):
    return build_mesh(MeshParams(N, ProblemSpec(eps, b)))


def test_transition_parameters_eps_branch():
    t = transition_parameters(MeshParams(8, ProblemSpec(0.01, (2.0, 2.0))))
    # 2 * 0.01 / 2 * ln 8, evaluated at 40 digits
    _, lam = shishkin_coords_mp(8, 0.01, 2.0)
    assert t.lambda_x == pytest.approx(0.020794415416798358, abs=1e-15)
    assert t.lambda_x == pytest.approx(lam, abs=1e-16)
    assert t.lambda_y == t.lambda_x
    assert not t.capped_x and t.assumption1


def test_transition_parameters_capped():
    t = transition_parameters(MeshParams(8, ProblemSpec(0.25, (1.0, 1.0))))
    assert t.lambda_x == t.lambda_y == 0.5
    assert t.capped_x and t.capped_y
    assert not t.assumption1


@given(st.sampled_from([4, 6, 8, 16, 64]), st.floats(1e-8, 1.0), st.floats(0.1, 5.0))
def test_equal_convection_gives_equal_lambdas(N, eps, b):
    t = transition_parameters(MeshParams(N, ProblemSpec(eps, (b, b))))
    assert t.lambda_x == t.lambda_y


def test_small_mesh_coordinates():
    # lambda_x = 0.25 needs 2 eps ln 4 = 0.25
    eps = 0.25 / (2 * math.log(4))
    m = make(4, eps)
    assert m.lambda_x == pytest.approx(0.25, abs=1e-15)
    np.testing.assert_allclose(m.x_coords, [0, 0.375, 0.75, 0.875, 1.0], atol=1e-15)
    assert m.H_x == pytest.approx(0.375)
    assert m.h_x == pytest.approx(0.125)


def test_fine_width_matches_eps_lnN_scale():
    N, eps = 8, 1e-3
    m = make(N, eps)
    assert m.h_x == pytest.approx(4 * eps * math.log(N) / N, rel=1e-14)


@pytest.mark.parametrize("N", [4, 8, 10, 32, 128])
def test_boundary_anchoring_and_two_widths(N):
    m = make(N, 1e-4, (1.0, 0.7))
    for c, H, h in ((m.x_coords, m.H_x, m.h_x), (m.y_coords, m.H_y, m.h_y)):
        assert c[0] == 0.0 and c[-1] == 1.0
        assert np.all(np.diff(c) > 0)
        w = np.diff(c)
        # widths are differences of coordinates near 1: a few ulps of 1.0
        np.testing.assert_allclose(w[: N // 2], H, rtol=0, atol=4e-16)
        np.testing.assert_allclose(w[N // 2:], h, rtol=0, atol=4e-16)
    assert abs(m.x_coords[N // 2] + m.lambda_x - 1) <= 1e-14


@pytest.mark.parametrize("N", [3, 7, 2, 0])
def test_rejects_bad_N(N):
    with pytest.raises(ValueError):
        MeshParams(N, ProblemSpec(1e-3, (1.0, 1.0)))


def test_rejects_bad_problem():
    with pytest.raises(ValueError):
        ProblemSpec(0.0, (1.0, 1.0))
    with pytest.raises(ValueError):
        ProblemSpec(1e-3, (1.0, 0.0))
    with pytest.raises(ValueError):
        ProblemSpec(1e-3, (1.0, 1.0), "nope")


def test_directions_orthonormal():
    s = ProblemSpec(1e-3, (3.0, 4.0))
    assert s.bnorm == 5.0
    np.testing.assert_allclose(s.beta, [0.6, 0.8])
    np.testing.assert_allclose(s.eta, [-0.8, 0.6])
    assert abs(s.beta @ s.eta) < 1e-16


def test_region_map_partition():
    N = 8
    m = make(N, 1e-3)
    rm = m.region_map()
    counts = {r: int(np.sum(rm == r)) for r in Region}
    assert counts == {r: (N // 2) ** 2 for r in Region}
    assert m.in_s.sum() == (N // 2) ** 2


def test_region_of_point():
    N = 8
    m = make(N, 1e-3)
    assert region_of_point(m, (0, 0)) is Region.S
    assert region_of_point(m, (1, 1)) is Region.XY
    mid = ((m.x_coords[N // 2 + 1] + m.x_coords[N // 2 + 2]) / 2, (m.y_coords[1] + m.y_coords[2]) / 2)
    assert region_of_point(m, mid) is Region.X
    # interface goes to the fine side
    assert region_of_point(m, (1 - m.lambda_x, 0.1)) is Region.X
    assert region_of_point(m, (0.1, 1 - m.lambda_y)) is Region.Y
    with pytest.raises(ValueError):
        region_of_point(m, (1.5, 0.2))


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([8, 16, 32, 64, 128]), st.floats(-9, 0), st.floats(1, 4), st.floats(1, 4))
def test_size_bounds_under_assumption1(N, log_eps, b1, b2):
    eps = 10 ** log_eps / N
    m = make(N, eps, (b1, b2))
    assert m.transition.assumption1 or m.transition.capped_x or m.transition.capped_y
    if m.transition.assumption1:
        assert 1 <= N * m.H_x <= 2 and 1 <= N * m.H_y <= 2
        scale = eps * math.log(N) / N
        # h = 4 eps ln N / (b_1 N) with b_1 in [1, 4]
        assert 1 - 1e-12 <= m.h_x / scale <= 4 + 1e-12


def test_json_roundtrip():
    m = make(16, 1e-4, (1.0, 2.0))
    d = json.loads(m.to_json())
    assert set(d) == {"N", "epsilon", "b", "lambda_x", "lambda_y", "x_coords", "y_coords"}
    m2 = mesh_from_json(m.to_json())
    np.testing.assert_array_equal(m2.x_coords, m.x_coords)
    d["x_coords"][3] += 1e-6
    with pytest.raises(ValueError):
        mesh_from_json(json.dumps(d))

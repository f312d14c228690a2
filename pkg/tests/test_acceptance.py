"""Acceptance criteria, one test per criterion.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section of the terminal summary: one PASS/FAIL line per criterion.
"""

import math

import numpy as np
import pytest

from oracles import DenseOracle, abs_linear_quad, gauss_solve, shishkin_coords_mp
from shishkin_sdfem.assembly import FormCoefficients, assemble, assemble_matrix
from shishkin_sdfem.greens import SchemeSolver, definition_residual, duality_gap, ring_maxima
from shishkin_sdfem.harness import ExperimentConfig, fit_loglog, load_calibration, run_green_suite
from shishkin_sdfem.mesh import MeshParams, ProblemSpec, build_mesh
from shishkin_sdfem.weights import (
    WeightParams,
    abs_linear_integral,
    coercivity_quantities,
    omega_eval,
)

CAL = load_calibration()
K_STAR = CAL["k_star"]
GRID_N = (16, 32, 64)
GRID_EPS = (1e-3, 1e-4, 1e-5)
SWEEP_N = (16, 32, 64, 128)


@pytest.fixture(scope="module")
def sweep():
    """Green-function suite at k* over N <= 128 and the three eps values."""
    rep = run_green_suite(ExperimentConfig(N=list(SWEEP_N), eps=list(GRID_EPS), k=[K_STAR]))
    assert rep.summary["failed_rows"] == 0
    return rep.rows


def _select(rows, eps, Ns):
    return sorted((r for r in rows if r["eps"] == eps and r["N"] in Ns), key=lambda r: r["N"])


@pytest.mark.criterion(1, "mesh coordinates match closed formulas")
def test_mesh_exactness():
    rng = np.random.default_rng(101)
    done = 0
    while done < 20:
        N = int(rng.choice([4, 8, 16, 32, 64, 128]))
        eps = 10 ** rng.uniform(-8, 0) / N
        b = tuple(rng.uniform(1, 4, 2))
        mesh = build_mesh(MeshParams(N, ProblemSpec(eps, b)))
        if not mesh.transition.assumption1:
            continue
        done += 1
        xs, lx = shishkin_coords_mp(N, eps, b[0])
        ys, ly = shishkin_coords_mp(N, eps, b[1])
        assert np.max(np.abs(mesh.x_coords - xs)) <= 1e-14
        assert np.max(np.abs(mesh.y_coords - ys)) <= 1e-14
        assert mesh.x_coords[N // 2] == 1 - mesh.lambda_x
        assert abs(mesh.lambda_x - lx) <= 1e-14 and abs(mesh.lambda_y - ly) <= 1e-14
        assert 1 <= N * mesh.H_x <= 2 and 1 <= N * mesh.H_y <= 2


@pytest.mark.criterion(2, "rotation identity of the diffusion block")
def test_rotation_identity():
    rng = np.random.default_rng(202)
    axes = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    coef = FormCoefficients(1.0, 1.0, 0.0, 0.0)
    for _ in range(5):
        b = tuple(rng.uniform(0.1, 4, 2))
        mesh = build_mesh(MeshParams(16, ProblemSpec(1e-3, b)))
        diff = assemble_matrix(mesh, coef) - assemble_matrix(mesh, coef, directions=axes)
        assert abs(diff).max() <= 1e-12


def _def_grid():
    return [(N, eps) for N in (8, 16, 32) for eps in (1e-2, 1e-4)]


@pytest.mark.criterion(3, "discrete Green function definition residual")
@pytest.mark.parametrize("N,eps", _def_grid())
def test_green_definition(N, eps):
    mesh = build_mesh(MeshParams(N, ProblemSpec(eps, (1.0, 1.0))))
    ss = SchemeSolver(mesh)
    for node in [(N // 4, N // 4), (3 * N // 4, N // 4), (N // 4, 3 * N // 4)]:
        assert definition_residual(ss.green(node), ss.system) <= 1e-8


@pytest.mark.criterion(4, "duality U(x*) = (f, G + delta b G_beta)")
@pytest.mark.parametrize("N,eps", _def_grid())
def test_duality(N, eps):
    mesh = build_mesh(MeshParams(N, ProblemSpec(eps, (1.0, 1.0), "poly")))
    ss = SchemeSolver(mesh)
    U = ss.solve().U
    for node in [(N // 4, N // 4), (3 * N // 4, N // 4), (N // 4, 3 * N // 4)]:
        u_star, functional = duality_gap(U, ss.green(node), mesh, ss.profile)
        assert abs(u_star - functional) <= 1e-8 * (1 + abs(u_star))


@pytest.mark.criterion(5, "weighted energy identity at quadrature order 5")
@pytest.mark.parametrize("k", [0.5, K_STAR, 8.0])
def test_weighted_identity(k):
    for N in GRID_N:
        for eps in GRID_EPS:
            mesh = build_mesh(MeshParams(N, ProblemSpec(eps, (1.0, 1.0))))
            ss = SchemeSolver(mesh)
            node = (N // 4, N // 4)
            G = ss.green(node).G
            co = coercivity_quantities(G, mesh, ss.profile, WeightParams.at_node(mesh, k, node), 5)
            assert abs(co.identity_residual) <= 1e-6 * co.norm_sq


@pytest.mark.criterion(6, "coercivity ratio at least 1/4 for the frozen k*")
def test_coercivity(sweep):
    assert 1 < K_STAR <= 64
    rows = [r for r in sweep if r["N"] in GRID_N]
    assert len(rows) == 9
    assert min(r["coercivity_ratio"] for r in rows) >= 0.25


@pytest.mark.criterion(7, "implied constant of the point-value estimate stays bounded")
def test_point_value_growth(sweep):
    for eps in GRID_EPS:
        C = [r["point_value_implied_C"] for r in _select(sweep, eps, SWEEP_N)]
        assert len(C) == 4 and all(math.isfinite(c) for c in C)
        # bounded means no monotone growth: not strictly increasing, last not a new maximum
        assert not all(C[i + 1] > C[i] for i in range(3))
        assert C[-1] <= max(C[:-1])


@pytest.mark.criterion(8, "interpolation error on the coarse region scales like N^-1/2")
def test_interpolation_scaling(sweep):
    for eps in GRID_EPS:
        rows = _select(sweep, eps, SWEEP_N)
        fit = fit_loglog([r["N"] for r in rows], [r["E_s"] / math.sqrt(r["norm_sq"]) for r in rows])
        assert -0.8 <= fit.slope <= -0.2, (eps, fit)
        assert fit.r2 >= 0.9, (eps, fit)


@pytest.mark.criterion(9, "|B(E,G)| at most one sixteenth of the weighted norm")
def test_interpolation_form_bound(sweep):
    rows = [r for r in sweep if r["N"] in GRID_N]
    assert len(rows) == 9
    assert max(r["interp_form_ratio"] for r in rows) <= 1 / 16


@pytest.mark.criterion(10, "ring maxima nonincreasing and M_4/M_1 <= 1e-2 (calibrated-then-frozen)")
def test_ring_decay():
    fix = CAL["ring_decay"]
    N, eps, ring = fix["N"], fix["eps"], fix["ring"]
    mesh = build_mesh(MeshParams(N, ProblemSpec(eps, (1.0, 1.0))))
    node = (N // 4, N // 4)
    G = SchemeSolver(mesh).green(node).G
    M = ring_maxima(G, mesh, WeightParams.at_node(mesh, K_STAR, node))
    present = [(m, v) for m, v in enumerate(M) if m >= 1 and v is not None]
    assert all(b[1] <= a[1] for a, b in zip(present, present[1:])), M
    assert len(M) > ring and M[ring] is not None, (
        f"ring {ring} contains no mesh node at k={K_STAR}; ring maxima {M}")
    assert M[ring] / M[1] <= fix["max_ratio_to_ring1"], M


@pytest.mark.criterion(11, "N = 4 system, solution and Green function match a dense oracle")
def test_dense_oracle():
    N, eps, b = 4, 0.05, (1.5, 0.5)
    mesh = build_mesh(MeshParams(N, ProblemSpec(eps, b, "poly")))
    system = assemble(mesh)
    one, x, y2 = (lambda t: 1.0), (lambda t: t), (lambda t: t * t)
    # 1 + x + 2 y^2 - x y
    oracle = DenseOracle(N, eps, b, [(1, one, one), (1, x, one), (2, one, y2), (-1, x, lambda t: t)])
    A_ref, r_ref = oracle.matrix(), oracle.rhs()
    A = system.matrix.toarray()
    assert np.max(np.abs(A - A_ref)) <= 1e-10
    assert np.max(np.abs(system.rhs - r_ref)) <= 1e-10
    ss = SchemeSolver(mesh, system=system)
    U = system.dofs.from_nodal(ss.solve().U)
    assert np.max(np.abs(U - gauss_solve(A_ref, r_ref))) <= 1e-10
    for p, node in enumerate(oracle.nodes):
        e = np.zeros(len(oracle.nodes))
        e[p] = 1.0
        G = system.dofs.from_nodal(ss.green(node).G)
        assert np.max(np.abs(G - gauss_solve(A_ref.T, e))) <= 1e-10


@pytest.mark.criterion(12, "exact integral of |linear| matches quadrature and the 1/4 lower bound")
def test_abs_linear_integral():
    rng = np.random.default_rng(1212)
    n = 100_000
    scale = 10 ** rng.uniform(-3, 3, n)
    f0, f1 = rng.standard_normal(n) * scale, rng.standard_normal(n) * scale
    # exercise exact zeros and equal values too
    f0[:100] = 0.0
    f1[100:200] = f0[100:200]
    H = 10 ** rng.uniform(-4, 0, n)
    got = abs_linear_integral(f0, f1, H)
    ref = np.array([abs_linear_quad(a, c, h) for a, c, h in zip(f0, f1, H)])
    assert np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))) <= 1e-10
    assert np.all(got >= 0.25 * np.maximum(np.abs(f0), np.abs(f1)) * H)


@pytest.mark.criterion(13, "weight gradient matches central finite differences")
def test_weight_gradient():
    rng = np.random.default_rng(1313)
    mesh = build_mesh(MeshParams(64, ProblemSpec(1e-3, (1.0, 0.7))))
    w = WeightParams.create(mesh, K_STAR, (0.3, 0.3))
    pts = rng.random((2, 100))
    _, grad = omega_eval(pts, w)
    h = 1e-6
    fd = np.empty_like(grad)
    for c in range(2):
        e = np.zeros((2, 1))
        e[c] = h
        fd[c] = (omega_eval(pts + e, w)[0] - omega_eval(pts - e, w)[0]) / (2 * h)
    err = np.linalg.norm(fd - grad, axis=0) / np.linalg.norm(grad, axis=0)
    assert np.max(err) <= 1e-6

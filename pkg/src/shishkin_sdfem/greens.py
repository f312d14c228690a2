"""Primal solves, discrete Green functions and their decay away from the anchor."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .assembly import (
    DEFAULT_ORDER,
    SparseSystem,
    StabilizationProfile,
    apply_form,
    assemble,
    element_corner_values,
    load_functional,
)
from .mesh import Region, ShishkinMesh
from .solver import DEFAULT_TOL, Factorization, SolveReport
from .weights import WeightParams, log_g, omega_sample


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    U: np.ndarray
    report: SolveReport


@dataclass(frozen=True, eq=False)
class GreenFunction:
    anchor: tuple[int, int]
    point: tuple[float, float]
    G: np.ndarray
    report: SolveReport


class SchemeSolver:
    """Assembled system plus one LU factorisation, reused for U and every G."""

    def __init__(self, mesh: ShishkinMesh, profile: StabilizationProfile | None = None,
                 order: int = DEFAULT_ORDER, system: SparseSystem | None = None):
        self.mesh = mesh
        self.profile = profile or StabilizationProfile.for_mesh(mesh)
        self.order = order
        self.system = system or assemble(mesh, self.profile, order)
        self._fact: Factorization | None = None

    @property
    def factorization(self) -> Factorization:
        if self._fact is None:
            self._fact = Factorization(self.system.matrix)
        return self._fact

    def solve(self, tol: float = DEFAULT_TOL) -> DiscreteSolution:
        rep = self.factorization.solve(self.system.rhs, tol=tol)
        return DiscreteSolution(self.system.dofs.to_nodal(rep.x), rep)

    def green(self, node: tuple[int, int], tol: float = DEFAULT_TOL) -> GreenFunction:
        dofs = self.system.dofs
        i, j = node
        if not (1 <= i <= self.mesh.N - 1 and 1 <= j <= self.mesh.N - 1):
            raise ValueError(f"anchor {node} is not an interior mesh node")
        e = np.zeros(dofs.n)
        e[dofs.index(i, j)] = 1.0
        rep = self.factorization.solve(e, tol=tol, transpose=True)
        return GreenFunction((i, j), (float(self.mesh.x_coords[i]), float(self.mesh.y_coords[j])),
                             dofs.to_nodal(rep.x), rep)


def solve_scheme(mesh: ShishkinMesh, profile: StabilizationProfile | None = None,
                 tol: float = DEFAULT_TOL) -> DiscreteSolution:
    return SchemeSolver(mesh, profile).solve(tol)


def discrete_green(mesh: ShishkinMesh, node: tuple[int, int],
                   profile: StabilizationProfile | None = None,
                   tol: float = DEFAULT_TOL) -> GreenFunction:
    """G with B(v, G) = v(x*) for all v in the discrete space: A^T g = e_{x*}."""
    return SchemeSolver(mesh, profile).green(node, tol)


def definition_residual(green: GreenFunction, system: SparseSystem) -> float:
    """max_p |B(phi_p, G) - phi_p(x*)| over interior basis functions."""
    g = system.dofs.from_nodal(green.G)
    e = np.zeros_like(g)
    e[system.dofs.index(*green.anchor)] = 1.0
    return float(np.max(np.abs(system.matrix.T @ g - e)))


def duality_gap(U: np.ndarray, green: GreenFunction, mesh: ShishkinMesh,
                profile: StabilizationProfile, order: int = DEFAULT_ORDER) -> tuple[float, float]:
    """(U(x*), (f, G + delta b G_beta)); equal for the exact discrete solves."""
    return float(U[green.anchor]), load_functional(green.G, mesh, profile, order)


def check_against_random_fields(green: GreenFunction, mesh: ShishkinMesh,
                                profile: StabilizationProfile, count: int = 10,
                                seed: int = 0) -> float:
    """max over random v of |B(v, G) - v(x*)| / (1 + |v(x*)|)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        v = np.zeros((mesh.N + 1, mesh.N + 1))
        v[1:-1, 1:-1] = rng.standard_normal((mesh.N - 1, mesh.N - 1))
        lhs = apply_form(v, green.G, mesh, profile)
        vx = v[green.anchor]
        worst = max(worst, abs(lhs - vx) / (1.0 + abs(vx)))
    return worst


# ---------------------------------------------------------------------------
# decay


@dataclass(frozen=True, eq=False)
class DecayProfile:
    rows: list[dict]
    ring_maxima: list[float | None]

    CSV_COLUMNS = ("i", "j", "x", "y", "s_beta", "s_eta", "region", "absG")

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.DictWriter(buf, fieldnames=self.CSV_COLUMNS, lineterminator="\n")
        wr.writeheader()
        for r in self.rows:
            wr.writerow({c: (f"{r[c]:.17g}" if isinstance(r[c], float) else r[c])
                         for c in self.CSV_COLUMNS})
        return buf.getvalue()


def ring_index(mesh: ShishkinMesh, w: WeightParams, X, Y) -> np.ndarray:
    """floor of max(|s_beta|, |s_eta|) / ln N."""
    sb, se = w.offsets(X, Y)
    return np.floor(np.maximum(np.abs(sb), np.abs(se)) / math.log(mesh.N)).astype(int)


def ring_maxima(G: np.ndarray, mesh: ShishkinMesh, w: WeightParams) -> list[float | None]:
    """M_m = max |G| over nodes in ring m; ``None`` for rings with no node."""
    X, Y = mesh.nodes()
    m = ring_index(mesh, w, X, Y)
    absG = np.abs(G)
    return [float(absG[m == r].max()) if np.any(m == r) else None for r in range(int(m.max()) + 1)]


def green_decay_profile(G: np.ndarray, mesh: ShishkinMesh, w: WeightParams) -> DecayProfile:
    X, Y = mesh.nodes()
    sb, se = w.offsets(X, Y)
    N = mesh.N
    regions = {(i, j): mesh.node_region(i, j) for i in range(N + 1) for j in range(N + 1)}
    rows = [
        {"i": i, "j": j, "x": float(X[i, j]), "y": float(Y[i, j]), "s_beta": float(sb[i, j]),
         "s_eta": float(se[i, j]), "region": regions[i, j].value, "absG": float(abs(G[i, j]))}
        for j in range(N + 1) for i in range(N + 1)
    ]
    return DecayProfile(rows, ring_maxima(G, mesh, w))


def exclusion_mask(mesh: ShishkinMesh, w: WeightParams, K: float) -> np.ndarray:
    """Elements that may contain a point with omega >= N^{-K}.

    Uses max_tau omega <= max_tau g(s_beta) * max_tau g(s_eta) g(-s_eta): the
    first factor peaks at the smallest corner s_beta, the second at the
    smallest |s_eta| (zero when the corners change sign). The mask is
    therefore a superset of the exact exclusion set.
    """
    X, Y = mesh.nodes()
    sb, se = w.offsets(X, Y)
    cb, ce = element_corner_values(sb), element_corner_values(se)
    sb_min = cb.min(axis=-1)
    crosses = (ce.min(axis=-1) <= 0) & (ce.max(axis=-1) >= 0)
    se_min = np.where(crosses, 0.0, np.abs(ce).min(axis=-1))
    log_upper = log_g(sb_min) + log_g(se_min) + log_g(-se_min)
    return log_upper >= -K * math.log(mesh.N)


def region_mask(mesh: ShishkinMesh, regions) -> np.ndarray:
    rm = mesh.region_map()
    wanted = set(regions)
    return np.vectorize(lambda r: r in wanted, otypes=[bool])(rm)


@dataclass(frozen=True)
class W1InfNorms:
    sup_abs: float | None
    sup_grad: float | None
    n_elements: int

    @property
    def empty(self) -> bool:
        return self.n_elements == 0


def w1inf_norms(G: np.ndarray, mesh: ShishkinMesh, regions=tuple(Region),
                excluded: np.ndarray | None = None) -> W1InfNorms:
    """sup |G| over element vertices and sup |grad G| over element samples.

    Only elements in ``regions`` and outside the ``excluded`` mask count. The
    gradient is sampled at the centre and corners; its squared length is a
    convex function on each element so the corners attain the maximum.
    """
    keep = region_mask(mesh, regions)
    if excluded is not None:
        keep &= ~excluded
    n = int(keep.sum())
    if n == 0:
        return W1InfNorms(None, None, 0)
    c = element_corner_values(G)
    sup_abs = float(np.abs(c[keep]).max())
    hx, hy = mesh.hx[:, None, None], mesh.hy[None, :, None]
    s = np.array([0.0, 1.0, 1.0, 0.0, 0.5])
    t = np.array([0.0, 0.0, 1.0, 1.0, 0.5])
    gx = ((1 - t) * (c[..., 1:2] - c[..., 0:1]) + t * (c[..., 2:3] - c[..., 3:4])) / hx
    gy = ((1 - s) * (c[..., 3:4] - c[..., 0:1]) + s * (c[..., 2:3] - c[..., 1:2])) / hy
    sup_grad = float(np.sqrt(gx * gx + gy * gy)[keep].max())
    return W1InfNorms(sup_abs, sup_grad, n)


def weight_at_nodes(mesh: ShishkinMesh, w: WeightParams) -> np.ndarray:
    X, Y = mesh.nodes()
    return omega_sample(X, Y, w).omega

"""Assembly of the streamline-diffusion form with crosswind diffusion.

For bilinear trial ``U`` and test ``v`` the form is

    B(U, v) = (eps + b^2 delta)(U_beta, v_beta) + epshat (U_eta, v_eta)
              - b (1 - delta)(U, v_beta) + (U, v)

with ``delta = 1/N`` and ``epshat = max(eps, N^{-3/2})`` on the coarse region
Omega_s and ``delta = 0``, ``epshat = eps`` elsewhere. Regions align with
elements, so every coefficient is element-constant.

A nodal field is a ``(N + 1, N + 1)`` array indexed ``[i, j]``. Members of the
discrete space vanish on the boundary; the linear system lives on the
``(N - 1)^2`` interior nodes, numbered x-fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import Region, ShishkinMesh
from .quadrature import CORNERS, ElementQuadrature, bilinear_basis, gauss_unit

DEFAULT_ORDER = 3


@dataclass(frozen=True, eq=False)
class StabilizationProfile:
    """Element-constant delta and epshat.

    With ``crosswind=False`` the extra crosswind diffusion is switched off
    (epshat = eps everywhere), which recovers the plain streamline-diffusion
    method.
    """

    N: int
    epsilon: float
    eps_tilde: float
    delta_s: float
    crosswind: bool
    in_s: np.ndarray

    @classmethod
    def for_mesh(cls, mesh: ShishkinMesh, crosswind: bool = True) -> "StabilizationProfile":
        N, eps = mesh.N, mesh.spec.epsilon
        return cls(N, eps, max(eps, N ** -1.5), 1.0 / N, crosswind, mesh.in_s)

    def delta_of_region(self, region: Region) -> float:
        return self.delta_s if region is Region.S else 0.0

    def epshat_of_region(self, region: Region) -> float:
        if region is Region.S and self.crosswind:
            return self.eps_tilde
        return self.epsilon

    @property
    def delta(self) -> np.ndarray:
        """(N, N) element values of delta."""
        return np.where(self.in_s, self.delta_s, 0.0)

    @property
    def epshat(self) -> np.ndarray:
        return np.where(self.in_s & self.crosswind, self.eps_tilde, self.epsilon)


@dataclass(frozen=True, eq=False)
class FormCoefficients:
    """Element coefficient arrays, each broadcastable to (N, N)."""

    streamline: np.ndarray  # eps + b^2 delta
    crosswind: np.ndarray  # epshat
    convection: np.ndarray  # b (1 - delta)
    mass: np.ndarray  # 1

    @classmethod
    def from_profile(cls, spec, profile: StabilizationProfile) -> "FormCoefficients":
        b, d = spec.bnorm, profile.delta
        return cls(spec.epsilon + b * b * d, profile.epshat, b * (1.0 - d), np.ones_like(d))


class DofMap:
    """Interior node (i, j), 1 <= i, j <= N-1  <->  equation p (x fastest)."""

    def __init__(self, N: int):
        self.N = N
        self.n = (N - 1) ** 2

    def index(self, i: int, j: int) -> int:
        if not (1 <= i <= self.N - 1 and 1 <= j <= self.N - 1):
            raise ValueError(f"node ({i}, {j}) is not an interior node")
        return (j - 1) * (self.N - 1) + (i - 1)

    def node(self, p: int) -> tuple[int, int]:
        j, i = divmod(p, self.N - 1)
        return i + 1, j + 1

    def to_nodal(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros((self.N + 1, self.N + 1))
        out[1:-1, 1:-1] = np.asarray(vec).reshape(self.N - 1, self.N - 1).T
        return out

    def from_nodal(self, values: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(np.asarray(values)[1:-1, 1:-1].T).ravel()

    def interior_full_ids(self) -> np.ndarray:
        """Full-grid ids (j*(N+1) + i) of the interior nodes, in dof order."""
        i = np.arange(1, self.N)
        return (i[:, None] * (self.N + 1) + i[None, :]).ravel()


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofs: DofMap

    def export_matrix_market(self, path) -> None:
        scipy.io.mmwrite(str(path), self.matrix, comment="streamline-diffusion system")


@dataclass(frozen=True, eq=False)
class QuadField:
    """A field sampled at element quadrature points: value and x/y derivatives."""

    val: np.ndarray
    dx: np.ndarray
    dy: np.ndarray

    def directional(self, d) -> np.ndarray:
        return d[0] * self.dx + d[1] * self.dy

    def __sub__(self, other: "QuadField") -> "QuadField":
        return QuadField(self.val - other.val, self.dx - other.dx, self.dy - other.dy)

    def __mul__(self, c: float) -> "QuadField":
        return QuadField(c * self.val, c * self.dx, c * self.dy)

    __rmul__ = __mul__


def element_corner_values(values: np.ndarray) -> np.ndarray:
    """(N, N, 4) corner values in SW, SE, NE, NW order."""
    v = np.asarray(values, float)
    return np.stack([v[:-1, :-1], v[1:, :-1], v[1:, 1:], v[:-1, 1:]], axis=-1)


def nodal_at_quad(values: np.ndarray, quad: ElementQuadrature) -> QuadField:
    c = element_corner_values(values)
    return QuadField(c @ quad.phi, (c @ quad.dphi_ds) / quad.hx, (c @ quad.dphi_dt) / quad.hy)


def element_matrices(hx, hy, coef: FormCoefficients, beta, eta, order: int = DEFAULT_ORDER):
    """Local 4x4 matrices M[..., a, c] = B(phi_c, phi_a) for every element.

    Rows are test functions, columns trial functions, both in SW, SE, NE, NW
    order. ``hx``, ``hy`` and the coefficient arrays broadcast together.
    """
    p, w = gauss_unit(order)
    S, T = np.meshgrid(p, p, indexing="ij")
    wq = np.outer(w, w).ravel()
    phi, ds, dt = bilinear_basis(S.ravel(), T.ravel())
    hx = np.asarray(hx, float)[..., None, None]
    hy = np.asarray(hy, float)[..., None, None]
    gx, gy = ds / hx, dt / hy  # (..., 4, nq)
    gb = beta[0] * gx + beta[1] * gy
    ge = eta[0] * gx + eta[1] * gy
    area_w = hx * hy * wq  # (..., 1, nq)

    def gram(a, c):
        return np.einsum("...aq,...cq->...ac", a * area_w, c)

    phi_b = np.broadcast_to(phi, gb.shape)
    ex = lambda c: np.asarray(c, float)[..., None, None]  # noqa: E731
    return (ex(coef.streamline) * gram(gb, gb) + ex(coef.crosswind) * gram(ge, ge)
            - ex(coef.convection) * gram(gb, phi_b) + ex(coef.mass) * gram(phi_b, phi_b))


def local_matrix(mesh: ShishkinMesh, element: tuple[int, int], profile: StabilizationProfile,
                 order: int = DEFAULT_ORDER) -> np.ndarray:
    i, j = element
    region = mesh.region(i, j)
    spec = mesh.spec
    d = profile.delta_of_region(region)
    coef = FormCoefficients(spec.epsilon + spec.bnorm ** 2 * d, profile.epshat_of_region(region),
                            spec.bnorm * (1.0 - d), 1.0)
    return element_matrices(mesh.hx[i], mesh.hy[j], coef, spec.beta, spec.eta, order)


def _element_full_ids(N: int) -> np.ndarray:
    """(N, N, 4) full-grid node ids of the element corners."""
    i = np.arange(N)[:, None]
    j = np.arange(N)[None, :]
    ids = [(j + dj) * (N + 1) + (i + di) for di, dj in CORNERS]
    return np.stack(np.broadcast_arrays(*ids), axis=-1)


def assemble_matrix(mesh: ShishkinMesh, coef: FormCoefficients, directions=None,
                    order: int = DEFAULT_ORDER) -> sp.csr_matrix:
    """Global interior matrix of the form with the given element coefficients.

    ``directions`` overrides the (beta, eta) pair used for the two diffusion
    terms; passing the coordinate axes gives the plain gradient form.
    """
    N = mesh.N
    beta, eta = directions if directions is not None else (mesh.spec.beta, mesh.spec.eta)
    hx = mesh.hx[:, None]
    hy = mesh.hy[None, :]
    Ke = element_matrices(hx, hy, coef, np.asarray(beta, float), np.asarray(eta, float), order)
    Ke = np.broadcast_to(Ke, (N, N, 4, 4))
    ids = _element_full_ids(N)
    rows = np.broadcast_to(ids[..., :, None], (N, N, 4, 4)).ravel()
    cols = np.broadcast_to(ids[..., None, :], (N, N, 4, 4)).ravel()
    n_full = (N + 1) ** 2
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n_full, n_full)).tocsr()
    keep = DofMap(N).interior_full_ids()
    A = A[keep][:, keep].tocsr()
    A.sort_indices()
    return A


def assemble_rhs(mesh: ShishkinMesh, profile: StabilizationProfile,
                 order: int = DEFAULT_ORDER) -> np.ndarray:
    """Load vector (f, phi_p + delta b (phi_p)_beta) over interior nodes."""
    spec, N = mesh.spec, mesh.N
    quad = ElementQuadrature.for_mesh(mesh, order)
    fq = spec.source(quad.X, quad.Y) * quad.weights  # (N, N, nq)
    beta = spec.beta
    gb = beta[0] * quad.dphi_ds[None, None] / quad.hx[..., None, :] \
        + beta[1] * quad.dphi_dt[None, None] / quad.hy[..., None, :]  # (N, N, 4, nq)
    test = quad.phi[None, None] + (spec.bnorm * profile.delta)[..., None, None] * gb
    local = np.einsum("ijaq,ijq->ija", test, fq)
    full = np.zeros((N + 1) ** 2)
    np.add.at(full, _element_full_ids(N).ravel(), local.ravel())
    return full[DofMap(N).interior_full_ids()]


def assemble(mesh: ShishkinMesh, profile: StabilizationProfile | None = None,
             order: int = DEFAULT_ORDER) -> SparseSystem:
    profile = profile or StabilizationProfile.for_mesh(mesh)
    coef = FormCoefficients.from_profile(mesh.spec, profile)
    return SparseSystem(assemble_matrix(mesh, coef, order=order),
                        assemble_rhs(mesh, profile, order), DofMap(mesh.N))


Field = Union[np.ndarray, QuadField]


def apply_form(w: Field, v: Field, mesh: ShishkinMesh, profile: StabilizationProfile,
               order: int = DEFAULT_ORDER, mask: np.ndarray | None = None) -> float:
    """B(w, v) by element quadrature.

    ``w`` and ``v`` are nodal arrays or ``QuadField`` samples at the points of
    ``ElementQuadrature.for_mesh(mesh, order)``. ``mask`` restricts the sum to
    a subset of elements.
    """
    quad = ElementQuadrature.for_mesh(mesh, order)
    wq = w if isinstance(w, QuadField) else nodal_at_quad(w, quad)
    vq = v if isinstance(v, QuadField) else nodal_at_quad(v, quad)
    coef = FormCoefficients.from_profile(mesh.spec, profile)
    beta, eta = mesh.spec.beta, mesh.spec.eta
    wb, vb = wq.directional(beta), vq.directional(beta)
    integrand = (coef.streamline[..., None] * wb * vb
                 + coef.crosswind[..., None] * wq.directional(eta) * vq.directional(eta)
                 - coef.convection[..., None] * wq.val * vb
                 + wq.val * vq.val)
    return quad.integrate(integrand, mask)


def load_functional(v: np.ndarray, mesh: ShishkinMesh, profile: StabilizationProfile,
                    order: int = DEFAULT_ORDER) -> float:
    """(f, v + delta b v_beta) for a nodal field v."""
    quad = ElementQuadrature.for_mesh(mesh, order)
    vq = nodal_at_quad(v, quad)
    spec = mesh.spec
    test = vq.val + (spec.bnorm * profile.delta)[..., None] * vq.directional(spec.beta)
    return quad.integrate(spec.source(quad.X, quad.Y) * test)


def directional_derivatives(v: np.ndarray, mesh: ShishkinMesh, element: tuple[int, int],
                            point: tuple[float, float]):
    """Exact (v_x, v_y, v_beta, v_eta) of the bilinear field at a local point.

    ``point`` holds reference coordinates (s, t) in [0, 1]^2.
    """
    i, j = element
    c = element_corner_values(v)[i, j]
    _, ds, dt = bilinear_basis(*point)
    vx = float(c @ ds) / mesh.hx[i]
    vy = float(c @ dt) / mesh.hy[j]
    beta, eta = mesh.spec.beta, mesh.spec.eta
    return vx, vy, beta[0] * vx + beta[1] * vy, eta[0] * vx + eta[1] * vy


def evaluate(v: np.ndarray, mesh: ShishkinMesh, x: float, y: float) -> float:
    """Point value of the piecewise bilinear nodal field."""
    i = min(max(int(np.searchsorted(mesh.x_coords, x, side="right")) - 1, 0), mesh.N - 1)
    j = min(max(int(np.searchsorted(mesh.y_coords, y, side="right")) - 1, 0), mesh.N - 1)
    s = (x - mesh.x_coords[i]) / mesh.hx[i]
    t = (y - mesh.y_coords[j]) / mesh.hy[j]
    phi, _, _ = bilinear_basis(s, t)
    return float(element_corner_values(v)[i, j] @ phi)

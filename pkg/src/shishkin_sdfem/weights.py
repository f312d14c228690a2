"""Anisotropic exponential weight around a mesh node and weighted quantities.

The weight is

    omega(x) = g(s_beta) g(s_eta) g(-s_eta),   g(r) = 2 / (1 + e^r),

with scaled offsets ``s_beta = (x - x*).beta / sigma_beta`` and
``s_eta = (x - x*).eta / sigma_eta``, ``sigma_beta = k ln(N) / N`` and
``sigma_eta = k sqrt(eps_tilde) ln(N)``. Everything is computed through
``log(omega)`` so that ``1/omega`` only overflows when it genuinely exceeds
the double range.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .assembly import (
    QuadField,
    StabilizationProfile,
    apply_form,
    evaluate,
    nodal_at_quad,
)
from .mesh import ShishkinMesh
from .quadrature import ElementQuadrature

WEIGHT_ORDER = 5
LOG2 = math.log(2.0)


class WeightOverflowError(ArithmeticError):
    pass


def g_eval(r):
    """g(r) = 2 / (1 + e^r), safe for any real r."""
    return 2.0 * expit(-np.asarray(r, float))


def g_prime(r):
    """g'(r) = -2 e^r / (1 + e^r)^2 written as -2 sigma(r) sigma(-r)."""
    r = np.asarray(r, float)
    return -2.0 * expit(r) * expit(-r)


def log_g(r):
    return LOG2 - np.logaddexp(0.0, np.asarray(r, float))


@dataclass(frozen=True)
class WeightParams:
    k: float
    x_star: tuple[float, float]
    sigma_beta: float
    sigma_eta: float
    eps_tilde: float
    beta: tuple[float, float]
    eta: tuple[float, float]

    @classmethod
    def create(cls, mesh: ShishkinMesh, k: float, x_star) -> "WeightParams":
        if not k > 0:
            raise ValueError(f"k must be positive, got {k}")
        N, eps = mesh.N, mesh.spec.epsilon
        eps_tilde = max(eps, N ** -1.5)
        lnN = math.log(N)
        return cls(float(k), (float(x_star[0]), float(x_star[1])), k * lnN / N,
                   k * math.sqrt(eps_tilde) * lnN, eps_tilde,
                   tuple(mesh.spec.beta.tolist()), tuple(mesh.spec.eta.tolist()))

    @classmethod
    def at_node(cls, mesh: ShishkinMesh, k: float, node) -> "WeightParams":
        i, j = node
        return cls.create(mesh, k, (mesh.x_coords[i], mesh.y_coords[j]))

    def offsets(self, X, Y):
        """Scaled (s_beta, s_eta) at points."""
        dx, dy = np.asarray(X, float) - self.x_star[0], np.asarray(Y, float) - self.x_star[1]
        return ((self.beta[0] * dx + self.beta[1] * dy) / self.sigma_beta,
                (self.eta[0] * dx + self.eta[1] * dy) / self.sigma_eta)


@dataclass(frozen=True, eq=False)
class OmegaSample:
    """Weight data at a set of points.

    ``d_beta``/``d_eta`` are derivatives of ``log(omega)``; derivatives of
    omega and of 1/omega follow by multiplying with ``omega`` or ``-inv``.
    """

    log_omega: np.ndarray
    d_beta: np.ndarray
    d_eta: np.ndarray
    beta: tuple[float, float]
    eta: tuple[float, float]

    @property
    def omega(self):
        return np.exp(self.log_omega)

    @property
    def inv(self):
        if np.max(-self.log_omega, initial=-np.inf) > 700.0:
            raise WeightOverflowError("1/omega exceeds the double range; increase k")
        return np.exp(-self.log_omega)

    @property
    def omega_beta(self):
        return self.omega * self.d_beta

    @property
    def omega_eta(self):
        return self.omega * self.d_eta

    @property
    def inv_beta(self):
        return -self.inv * self.d_beta

    @property
    def inv_eta(self):
        return -self.inv * self.d_eta

    def _to_xy(self, fb, fe):
        return (self.beta[0] * fb + self.eta[0] * fe, self.beta[1] * fb + self.eta[1] * fe)

    @property
    def grad(self):
        """(omega_x, omega_y)."""
        return self._to_xy(self.omega_beta, self.omega_eta)

    @property
    def inv_grad(self):
        return self._to_xy(self.inv_beta, self.inv_eta)


def omega_sample(X, Y, w: WeightParams) -> OmegaSample:
    sb, se = w.offsets(X, Y)
    log_omega = log_g(sb) + log_g(se) + log_g(-se)
    d_beta = -expit(sb) / w.sigma_beta
    d_eta = -np.tanh(0.5 * se) / w.sigma_eta
    return OmegaSample(log_omega, d_beta, d_eta, w.beta, w.eta)


def omega_eval(x, w: WeightParams):
    """omega and its gradient (omega_x, omega_y) at a point or point arrays."""
    smp = omega_sample(x[0], x[1], w)
    return smp.omega, np.stack(smp.grad)


@dataclass(frozen=True)
class NormBreakdown:
    streamline: float  # (eps + b^2 delta) ||omega^{-1/2} G_beta||^2
    crosswind: float  # epshat ||omega^{-1/2} G_eta||^2
    convective: float  # b/2 ||((1/omega)_beta)^{1/2} G||^2
    mass: float  # ||omega^{-1/2} G||^2

    @property
    def total(self) -> float:
        return self.streamline + self.crosswind + self.convective + self.mass

    def to_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


class _Weighted:
    """Quadrature samples of G and the weight, shared by several quantities."""

    def __init__(self, G, mesh: ShishkinMesh, profile: StabilizationProfile, w: WeightParams,
                 order: int):
        self.mesh, self.profile, self.w, self.order = mesh, profile, w, order
        self.quad = ElementQuadrature.for_mesh(mesh, order)
        self.G = np.asarray(G, float)
        self.Gq = nodal_at_quad(self.G, self.quad)
        self.om = omega_sample(self.quad.X, self.quad.Y, w)
        spec = mesh.spec
        self.beta, self.eta = spec.beta, spec.eta
        self.bnorm = spec.bnorm
        self.delta = profile.delta[..., None]
        self.streamline_coef = spec.epsilon + self.bnorm ** 2 * self.delta
        self.epshat = profile.epshat[..., None]
        self.G_beta = self.Gq.directional(self.beta)
        self.G_eta = self.Gq.directional(self.eta)
        self.inv = self.om.inv

    def integrate(self, values, mask=None):
        return self.quad.integrate(values, mask)

    def inv_times_G(self) -> QuadField:
        ix, iy = self.om.inv_grad
        g = self.Gq
        return QuadField(self.inv * g.val, ix * g.val + self.inv * g.dx,
                         iy * g.val + self.inv * g.dy)

    def interpolation_error(self) -> QuadField:
        """E = (1/omega) G - I[(1/omega) G] at quadrature points."""
        X, Y = self.mesh.nodes()
        nodal = omega_sample(X, Y, self.w).inv * self.G
        return self.inv_times_G() - nodal_at_quad(nodal, self.quad)

    def norm(self) -> NormBreakdown:
        inv_beta = self.om.inv_beta
        if np.any(inv_beta < 0):
            raise ArithmeticError("(1/omega)_beta negative at a quadrature point")
        return NormBreakdown(
            self.integrate(self.streamline_coef * self.inv * self.G_beta ** 2),
            self.integrate(self.epshat * self.inv * self.G_eta ** 2),
            self.integrate(0.5 * self.bnorm * inv_beta * self.Gq.val ** 2),
            self.integrate(self.inv * self.Gq.val ** 2),
        )


def weighted_norm(G, mesh: ShishkinMesh, profile: StabilizationProfile, w: WeightParams,
                  order: int = WEIGHT_ORDER) -> NormBreakdown:
    if order < 3:
        raise ValueError("weighted integrals need quadrature order >= 3")
    return _Weighted(G, mesh, profile, w, order).norm()


@dataclass(frozen=True)
class CoercivityQuantities:
    B_weighted: float  # B((1/omega) G, G)
    norm: NormBreakdown
    streamline_correction: float  # (eps + b^2 delta)(((1/omega)_beta G, G_beta)
    crosswind_correction: float  # epshat(((1/omega)_eta G, G_eta)
    delta_correction: float  # b delta((1/omega) G, G_beta)

    @property
    def norm_sq(self) -> float:
        return self.norm.total

    @property
    def identity_residual(self) -> float:
        """norm^2 - (B - corrections); zero up to quadrature error."""
        return self.norm_sq - (self.B_weighted - self.streamline_correction
                               - self.crosswind_correction - self.delta_correction)

    @property
    def ratio(self) -> float:
        return self.B_weighted / self.norm_sq if self.norm_sq > 0 else math.nan


def _coercivity(wd: _Weighted) -> CoercivityQuantities:
    q = wd.inv_times_G()
    B = apply_form(q, wd.G, wd.mesh, wd.profile, wd.order)
    g = wd.Gq.val
    return CoercivityQuantities(
        B, wd.norm(),
        wd.integrate(wd.streamline_coef * wd.om.inv_beta * g * wd.G_beta),
        wd.integrate(wd.epshat * wd.om.inv_eta * g * wd.G_eta),
        wd.integrate(wd.bnorm * wd.delta * wd.inv * g * wd.G_beta),
    )


def coercivity_quantities(G, mesh: ShishkinMesh, profile: StabilizationProfile,
                          w: WeightParams, order: int = WEIGHT_ORDER) -> CoercivityQuantities:
    return _coercivity(_Weighted(G, mesh, profile, w, order))


def bilinear_interpolant(field, mesh: ShishkinMesh) -> np.ndarray:
    """Nodal values of ``field``: a callable f(X, Y) or an (N+1, N+1) array."""
    if callable(field):
        X, Y = mesh.nodes()
        values = np.asarray(field(X, Y), float)
    else:
        values = np.array(field, float)
    if values.shape != (mesh.N + 1, mesh.N + 1):
        raise ValueError(f"expected nodal shape {(mesh.N + 1,) * 2}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("field is not finite at every node")
    return values


def elementwise_interp_error(u, grad_u, mesh: ShishkinMesh, order: int = 6):
    """Per-element L2 norms of u - u^I and of its x and y derivatives.

    ``u(X, Y)`` and ``grad_u(X, Y) -> (u_x, u_y)`` are vectorised callables.
    Returns three (N, N) arrays.
    """
    quad = ElementQuadrature.for_mesh(mesh, order)
    Iu = nodal_at_quad(bilinear_interpolant(u, mesh), quad)
    ux, uy = grad_u(quad.X, quad.Y)
    e = QuadField(u(quad.X, quad.Y), ux, uy) - Iu
    l2 = lambda v: np.sqrt(np.sum(v * v * quad.weights, axis=-1))  # noqa: E731
    return l2(e.val), l2(e.dx), l2(e.dy)


@dataclass(frozen=True)
class EstimateRecord:
    N: int
    epsilon: float
    k: float
    x_star: tuple[float, float]
    norm_sq: float
    B_weighted: float
    coercivity_ratio: float
    identity_residual: float
    weighted_G_at_xstar: float
    point_value_implied_C: float
    E_beta_s: float
    E_eta_s: float
    E_beta_rest: float
    E_eta_rest: float
    grad_interp_implied_C_s: float
    grad_interp_implied_C_rest: float
    E_s: float
    E_rest: float
    interp_implied_C_s: float
    interp_implied_C_rest: float
    B_E_G: float
    interp_form_ratio: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_star"] = list(self.x_star)
        return d


def estimate_quantities(G, mesh: ShishkinMesh, profile: StabilizationProfile, w: WeightParams,
                     order: int = WEIGHT_ORDER) -> EstimateRecord:
    """Left-hand sides of the weighted estimates and their implied constants.

    Implied constants divide each measured quantity by the corresponding
    right-hand side with C = 1 (see the field names of ``EstimateRecord``).
    """
    wd = _Weighted(G, mesh, profile, w, order)
    co = _coercivity(wd)
    N, eps, k = mesh.N, mesh.spec.epsilon, w.k
    lnN = math.log(N)
    nsq = co.norm_sq
    nrm = math.sqrt(nsq)

    xs = w.x_star
    g_star = abs(evaluate(wd.G, mesh, *xs) * float(omega_sample(xs[0], xs[1], w).inv))

    E = wd.interpolation_error()
    om = wd.om.omega
    s, rest = mesh.in_s, ~mesh.in_s

    def wnorm(v, mask):
        return math.sqrt(max(wd.integrate(om * v ** 2, mask), 0.0))

    Eb, Ee = E.directional(wd.beta), E.directional(wd.eta)
    res = dict(
        E_beta_s=wnorm(Eb, s), E_eta_s=wnorm(Ee, s),
        E_beta_rest=wnorm(Eb, rest), E_eta_rest=wnorm(Ee, rest),
        E_s=wnorm(E.val, s), E_rest=wnorm(E.val, rest),
    )
    B_EG = apply_form(E, wd.G, mesh, profile, order)

    def implied(value, rhs):
        return value / rhs if rhs > 0 else math.nan

    grad_s = max(res["E_beta_s"], res["E_eta_s"])
    grad_r = max(res["E_beta_rest"], res["E_eta_rest"])
    return EstimateRecord(
        N=N, epsilon=eps, k=k, x_star=xs, norm_sq=nsq, B_weighted=co.B_weighted,
        coercivity_ratio=co.ratio, identity_residual=co.identity_residual,
        weighted_G_at_xstar=g_star,
        point_value_implied_C=(g_star - nsq / 16.0) / (N * lnN),
        **res,
        grad_interp_implied_C_s=implied(grad_s, k ** -0.5 * N ** 0.5 * nrm),
        grad_interp_implied_C_rest=implied(grad_r, eps ** -0.5 * nrm / (k * lnN)),
        interp_implied_C_s=implied(res["E_s"], N ** -0.5 * nrm / k),
        interp_implied_C_rest=implied(res["E_rest"], eps ** 0.5 * nrm / k),
        B_E_G=B_EG,
        interp_form_ratio=implied(abs(B_EG), nsq),
    )


def inverse_beta_derivative_constant(mesh: ShishkinMesh, w: WeightParams, node,
                                     samples: int = 9) -> float:
    """max over the element south-west of ``node`` of ((1/omega)_beta)^{-1} / sigma_beta."""
    i, j = node
    s = np.linspace(0.0, 1.0, samples)
    X = mesh.x_coords[i - 1] + mesh.hx[i - 1] * s[:, None]
    Y = mesh.y_coords[j - 1] + mesh.hy[j - 1] * s[None, :]
    smp = omega_sample(*np.broadcast_arrays(X, Y), w)
    return float(np.max(1.0 / smp.inv_beta) / w.sigma_beta)


def abs_linear_integral(f0, f1, H):
    """Exact integral over [0, H] of |f0 (1 - t/H) + f1 t/H|.

    Same-sign endpoints give the trapezoid (|f0| + |f1|) H / 2; a sign change
    gives two triangles, (f0^2 + f1^2) H / (2 |f1 - f0|).
    """
    f0, f1, H = np.broadcast_arrays(*(np.asarray(a, float) for a in (f0, f1, H)))
    if np.any(H <= 0):
        raise ValueError("H must be positive")
    same = f0 * f1 >= 0
    denom = np.where(same, 1.0, np.abs(f1 - f0))
    out = np.where(same, 0.5 * (np.abs(f0) + np.abs(f1)) * H, 0.5 * (f0 * f0 + f1 * f1) * H / denom)
    return out if out.ndim else float(out)

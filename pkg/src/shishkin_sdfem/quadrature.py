"""Tensor Gauss-Legendre quadrature on the rectangles of a tensor mesh."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Corner order within an element: SW, SE, NE, NW.
CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))


@lru_cache(maxsize=None)
def gauss_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights mapped to [0, 1]."""
    xi, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (xi + 1.0), 0.5 * w


def bilinear_basis(s, t):
    """Values and reference derivatives of the four corner functions at (s, t).

    Returns arrays of shape ``(4, *s.shape)``.
    """
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    phi = np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
    dphi_ds = np.stack([-(1 - t), 1 - t, t, -t])
    dphi_dt = np.stack([-(1 - s), -s, s, 1 - s])
    return phi, dphi_ds, dphi_dt


@dataclass(frozen=True, eq=False)
class ElementQuadrature:
    """Quadrature points of every element, stored as ``(N, N, nq)`` arrays.

    ``weights`` already include the element area.
    """

    order: int
    s: np.ndarray
    t: np.ndarray
    phi: np.ndarray
    dphi_ds: np.ndarray
    dphi_dt: np.ndarray
    hx: np.ndarray  # (N, 1, 1)
    hy: np.ndarray  # (1, N, 1)
    X: np.ndarray
    Y: np.ndarray
    weights: np.ndarray

    @classmethod
    def for_mesh(cls, mesh, order: int = 3) -> "ElementQuadrature":
        if order < 1:
            raise ValueError("quadrature order must be >= 1")
        p, w = gauss_unit(order)
        S, T = np.meshgrid(p, p, indexing="ij")
        s, t = S.ravel(), T.ravel()
        wq = np.outer(w, w).ravel()
        phi, ds, dt = bilinear_basis(s, t)
        hx = np.diff(mesh.x_coords)[:, None, None]
        hy = np.diff(mesh.y_coords)[None, :, None]
        X = mesh.x_coords[:-1, None, None] + hx * s[None, None, :]
        Y = mesh.y_coords[None, :-1, None] + hy * t[None, None, :]
        X, Y = np.broadcast_arrays(X, Y)
        return cls(order, s, t, phi, ds, dt, hx, hy, np.ascontiguousarray(X),
                   np.ascontiguousarray(Y), hx * hy * wq[None, None, :])

    def integrate(self, values: np.ndarray, mask: np.ndarray | None = None) -> float:
        """Sum of ``values * weights``; ``mask`` selects elements (N, N)."""
        per_elem = np.sum(values * self.weights, axis=-1)
        if mask is not None:
            per_elem = per_elem[mask]
        return float(np.sum(per_elem))

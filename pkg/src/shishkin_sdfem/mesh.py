"""Shishkin meshes for -eps*Lap(u) + b.grad(u) + u = f on the unit square.

Element ``(i, j)`` (0-based) is the rectangle ``[x_i, x_{i+1}] x [y_j, y_{j+1}]``.
Nodes are indexed ``(i, j)`` with ``0 <= i, j <= N``; nodal arrays have shape
``(N + 1, N + 1)`` and are indexed ``[i, j]`` (x index first).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np


class Region(enum.Enum):
    S = "s"
    X = "x"
    Y = "y"
    XY = "xy"

    def __str__(self) -> str:
        return "Omega_" + self.value


SourceFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

BUILTIN_SOURCES: dict[str, SourceFn] = {
    "zero": lambda x, y: np.zeros(np.broadcast(x, y).shape),
    "one": lambda x, y: np.ones(np.broadcast(x, y).shape),
    # smooth, non-symmetric, strictly positive on the closed square
    "poly": lambda x, y: 1.0 + x + 2.0 * y * y - x * y,
}


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients of the model problem (reaction coefficient fixed to 1).

    ``f`` is either the name of a built-in source (see ``BUILTIN_SOURCES``)
    or a vectorised callable ``f(x, y)``.
    """

    epsilon: float
    b: tuple[float, float]
    f: Union[str, SourceFn] = "one"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        b1, b2 = (float(c) for c in self.b)
        if not (b1 > 0 and b2 > 0):
            raise ValueError(f"convection b must be componentwise positive, got {self.b}")
        object.__setattr__(self, "b", (b1, b2))
        if isinstance(self.f, str) and self.f not in BUILTIN_SOURCES:
            raise ValueError(f"unknown built-in source {self.f!r}")

    @property
    def bnorm(self) -> float:
        return math.hypot(*self.b)

    @property
    def beta(self) -> np.ndarray:
        """Unit streamline direction."""
        return np.array(self.b) / self.bnorm

    @property
    def eta(self) -> np.ndarray:
        """Unit crosswind direction, beta rotated by +90 degrees."""
        b1, b2 = self.b
        return np.array([-b2, b1]) / self.bnorm

    @property
    def source(self) -> SourceFn:
        return BUILTIN_SOURCES[self.f] if isinstance(self.f, str) else self.f

    @property
    def source_name(self) -> str:
        return self.f if isinstance(self.f, str) else getattr(self.f, "__name__", "callable")


@dataclass(frozen=True)
class MeshParams:
    N: int
    spec: ProblemSpec

    def __post_init__(self):
        # N = 4 is admitted as the smallest oracle-checkable mesh
        if int(self.N) != self.N or self.N % 2 or self.N < 4:
            raise ValueError(f"N must be an even integer >= 4, got {self.N}")
        object.__setattr__(self, "N", int(self.N))


@dataclass(frozen=True)
class TransitionInfo:
    lambda_x: float
    lambda_y: float
    # True when the min{...} was attained by the 1/2 branch
    capped_x: bool
    capped_y: bool
    eps_le_inv_N: bool

    @property
    def assumption1(self) -> bool:
        return self.eps_le_inv_N and not (self.capped_x or self.capped_y)


def transition_parameters(params: MeshParams) -> TransitionInfo:
    """lambda = min(1/2, 2 eps/b_i ln N) per axis, with Assumption-1 flags."""
    eps, N = params.spec.epsilon, params.N
    b1, b2 = params.spec.b
    tx = 2.0 * eps / b1 * math.log(N)
    ty = 2.0 * eps / b2 * math.log(N)
    return TransitionInfo(
        lambda_x=min(0.5, tx),
        lambda_y=min(0.5, ty),
        capped_x=tx >= 0.5,
        capped_y=ty >= 0.5,
        eps_le_inv_N=eps <= 1.0 / N,
    )


def shishkin_points(N: int, lam: float) -> np.ndarray:
    """Piecewise-uniform 1D points, each evaluated from its closed formula."""
    i = np.arange(N + 1, dtype=float)
    half = N // 2
    coarse = 2.0 * i * (1.0 - lam) / N
    fine = 1.0 - 2.0 * (N - i) * lam / N
    return np.where(np.arange(N + 1) <= half, coarse, fine)


@dataclass(frozen=True, eq=False)
class ShishkinMesh:
    params: MeshParams
    x_coords: np.ndarray
    y_coords: np.ndarray
    lambda_x: float
    lambda_y: float
    transition: TransitionInfo = field(repr=False)

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def spec(self) -> ProblemSpec:
        return self.params.spec

    @property
    def H_x(self) -> float:
        return (1.0 - self.lambda_x) / (self.N / 2)

    @property
    def h_x(self) -> float:
        return self.lambda_x / (self.N / 2)

    @property
    def H_y(self) -> float:
        return (1.0 - self.lambda_y) / (self.N / 2)

    @property
    def h_y(self) -> float:
        return self.lambda_y / (self.N / 2)

    @property
    def hx(self) -> np.ndarray:
        """Element widths, length N."""
        return np.diff(self.x_coords)

    @property
    def hy(self) -> np.ndarray:
        return np.diff(self.y_coords)

    @property
    def in_s(self) -> np.ndarray:
        """Boolean (N, N) mask of elements in Omega_s."""
        half = self.N // 2
        i = np.arange(self.N)
        return (i[:, None] < half) & (i[None, :] < half)

    def region(self, i: int, j: int) -> Region:
        """Region of 0-based element ``(i, j)``."""
        half = self.N // 2
        fx, fy = i >= half, j >= half
        return {(False, False): Region.S, (True, False): Region.X,
                (False, True): Region.Y, (True, True): Region.XY}[(fx, fy)]

    def region_map(self) -> np.ndarray:
        """(N, N) object array of Region tags."""
        out = np.empty((self.N, self.N), dtype=object)
        for i in range(self.N):
            for j in range(self.N):
                out[i, j] = self.region(i, j)
        return out

    def node_region(self, i: int, j: int) -> Region:
        return region_of_point(self, (self.x_coords[i], self.y_coords[j]))

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid arrays X, Y of shape (N+1, N+1) with [i, j] indexing."""
        return np.meshgrid(self.x_coords, self.y_coords, indexing="ij")

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "epsilon": self.spec.epsilon,
            "b": list(self.spec.b),
            "lambda_x": self.lambda_x,
            "lambda_y": self.lambda_y,
            "x_coords": self.x_coords.tolist(),
            "y_coords": self.y_coords.tolist(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def build_mesh(params: MeshParams) -> ShishkinMesh:
    t = transition_parameters(params)
    return ShishkinMesh(
        params=params,
        x_coords=shishkin_points(params.N, t.lambda_x),
        y_coords=shishkin_points(params.N, t.lambda_y),
        lambda_x=t.lambda_x,
        lambda_y=t.lambda_y,
        transition=t,
    )


def mesh_from_json(text: str, f: Union[str, SourceFn] = "one") -> ShishkinMesh:
    """Rebuild a mesh from a JSON dump; coordinates are recomputed and checked."""
    d = json.loads(text)
    mesh = build_mesh(MeshParams(int(d["N"]), ProblemSpec(d["epsilon"], tuple(d["b"]), f)))
    if not (np.allclose(mesh.x_coords, d["x_coords"], rtol=0, atol=1e-14)
            and np.allclose(mesh.y_coords, d["y_coords"], rtol=0, atol=1e-14)):
        raise ValueError("mesh dump coordinates disagree with the Shishkin formulas")
    return mesh


def region_of_point(mesh: ShishkinMesh, x) -> Region:
    """Closed-region membership; interface points go to the fine side."""
    px, py = float(x[0]), float(x[1])
    if not (0.0 <= px <= 1.0 and 0.0 <= py <= 1.0):
        raise ValueError(f"point {x!r} lies outside the unit square")
    fx = px >= 1.0 - mesh.lambda_x
    fy = py >= 1.0 - mesh.lambda_y
    return {(False, False): Region.S, (True, False): Region.X,
            (False, True): Region.Y, (True, True): Region.XY}[(fx, fy)]

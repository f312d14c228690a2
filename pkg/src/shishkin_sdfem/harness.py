"""Parameter sweeps over (N, eps, k): solves, Green functions, weighted estimates, decay.

Every sweep returns an ``ExperimentReport``: one row per run plus a summary
block. Rows never share state; a failing run is recorded with its error and
the sweep continues.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .assembly import StabilizationProfile
from .greens import (
    SchemeSolver,
    check_against_random_fields,
    definition_residual,
    duality_gap,
    exclusion_mask,
    ring_maxima,
    w1inf_norms,
)
from .mesh import MeshParams, ProblemSpec, Region, ShishkinMesh, build_mesh
from .solver import DEFAULT_TOL
from .weights import WEIGHT_ORDER, WeightParams, estimate_quantities

XSTAR_RULES = {
    "center-of-Ωs": lambda N: (N // 4, N // 4),
    "Ωx-node": lambda N: (3 * N // 4, N // 4),
    "Ωy-node": lambda N: (N // 4, 3 * N // 4),
}
# ASCII spellings for shells and config files
XSTAR_RULES.update({
    "center-of-Os": XSTAR_RULES["center-of-Ωs"],
    "Ox-node": XSTAR_RULES["Ωx-node"],
    "Oy-node": XSTAR_RULES["Ωy-node"],
})


class ConfigError(ValueError):
    pass


def resolve_xstar(rule: str, N: int) -> tuple[int, int]:
    if rule in XSTAR_RULES:
        return XSTAR_RULES[rule](N)
    try:
        i, j = (int(p) for p in rule.split(","))
    except ValueError:
        raise ConfigError(f"unknown x* rule {rule!r}") from None
    return i, j


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def _ints(text) -> list[int]:
    return [int(v) for v in _floats(text)]


@dataclass
class ExperimentConfig:
    N: list[int] = field(default_factory=lambda: [16, 32, 64])
    eps: list[float] = field(default_factory=lambda: [1e-3])
    b: tuple[float, float] = (1.0, 1.0)
    k: list[float] = field(default_factory=lambda: [2.0])
    xstar: str = "center-of-Ωs"
    f: str = "one"
    quad_order: int = WEIGHT_ORDER
    tol: float = DEFAULT_TOL
    seed: int = 0
    K: list[float] = field(default_factory=lambda: [1.0, 2.0])
    v: int = 2
    crosswind: bool = True
    allow_non_assumption1: bool = False
    out: str | None = None

    def __post_init__(self):
        for name in ("N", "eps", "k", "K"):
            if not getattr(self, name):
                raise ConfigError(f"{name} list must be nonempty")
        self.b = tuple(float(c) for c in self.b)
        if len(self.b) != 2:
            raise ConfigError("b needs two components")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Read an INI-style file; every key is optional.

        Sections: ``[problem]`` (eps, b, f, crosswind), ``[sweep]`` (N, k,
        xstar, v, allow_non_assumption1, and k_values for the exclusion
        exponents K), ``[numerics]`` (quad_order, tol, seed) and ``[output]``
        (out). List values are comma separated.
        """
        cp = configparser.ConfigParser()
        if not cp.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read config {path}")
        kw: dict = {}
        flat = {k: v for sec in cp.sections() for k, v in cp[sec].items()}
        parsers = {
            "n": ("N", _ints), "eps": ("eps", _floats), "b": ("b", lambda s: tuple(_floats(s))),
            "k": ("k", _floats), "xstar": ("xstar", str), "f": ("f", str),
            "quad_order": ("quad_order", int), "tol": ("tol", float), "seed": ("seed", int),
            "k_values": ("K", _floats), "v": ("v", int), "out": ("out", str),
            "crosswind": ("crosswind", lambda s: cp.BOOLEAN_STATES[s.lower()]),
            "allow_non_assumption1": ("allow_non_assumption1",
                                      lambda s: cp.BOOLEAN_STATES[s.lower()]),
        }
        for key, raw in flat.items():
            if key.lower() not in parsers:
                raise ConfigError(f"unknown config key {key!r}")
            name, conv = parsers[key.lower()]
            kw[name] = conv(raw)
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["b"] = list(self.b)
        return d


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    rows: list[dict]
    summary: dict

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "config": self.config, "summary": self.summary,
                           "rows": self.rows}, indent=2, default=_jsonable, allow_nan=True)

    def to_csv(self) -> str:
        cols: list[str] = []
        for r in self.rows:
            cols.extend(c for c in r if c not in cols)
        buf = io.StringIO()
        buf.write("# " + json.dumps({"kind": self.kind, "config": self.config},
                                    default=_jsonable, sort_keys=True) + "\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in self.rows:
            wr.writerow([_cell(r.get(c)) for c in cols])
        return buf.getvalue()

    def write(self, out: str | Path) -> tuple[Path, Path]:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out.with_suffix(".csv"), out.with_suffix(".json")
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        json_path.write_text(self.to_json(), encoding="utf-8")
        return csv_path, json_path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Region):
        return o.value
    raise TypeError(type(o))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (list, tuple)):
        return ";".join(str(_cell(x)) for x in v)
    return v


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n: int

    @property
    def reliable(self) -> bool:
        return self.n >= 3 and self.r2 >= 0.9

    def to_dict(self) -> dict:
        return {**asdict(self), "flagged": not self.reliable}


def fit_loglog(x, y) -> SlopeFit:
    """Least-squares line through (log x, log y) with its R^2."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r2, len(lx))


def make_mesh(cfg: ExperimentConfig, N: int, eps: float) -> ShishkinMesh:
    mesh = build_mesh(MeshParams(N, ProblemSpec(eps, cfg.b, cfg.f)))
    if not mesh.transition.assumption1 and not cfg.allow_non_assumption1:
        raise ConfigError(f"N={N}, eps={eps:g} violates eps <= 1/N with lambda in its eps "
                          "branch; pass allow_non_assumption1 to run anyway")
    return mesh


def _anchor(cfg, mesh: ShishkinMesh, require_outside_xy: bool) -> tuple[int, int]:
    node = resolve_xstar(cfg.xstar, mesh.N)
    i, j = node
    if not (1 <= i <= mesh.N - 1 and 1 <= j <= mesh.N - 1):
        raise ConfigError(f"x* {node} is not an interior node for N={mesh.N}")
    if require_outside_xy and mesh.node_region(i, j) is Region.XY:
        raise ConfigError(f"x* {node} lies in Omega_xy")
    return node


def _sweep(cfg, keys, fn) -> list[dict]:
    rows = []
    for key in keys:
        base = dict(key)
        t0 = time.perf_counter()
        try:
            out = fn(**base)
            rows.extend({**base, **r, "error": None} for r in out)
        except Exception as exc:  # recorded per row, sweep continues
            rows.append({**base, "error": f"{type(exc).__name__}: {exc}",
                         "wall_time": time.perf_counter() - t0})
    return rows


def run_solve(cfg: ExperimentConfig) -> ExperimentReport:
    def one(N, eps):
        mesh = make_mesh(cfg, N, eps)
        profile = StabilizationProfile.for_mesh(mesh, cfg.crosswind)
        ss = SchemeSolver(mesh, profile)
        sol = ss.solve(cfg.tol)
        A, r = ss.system.matrix, ss.system.rhs
        u = ss.system.dofs.from_nodal(sol.U)
        return [{
            "lambda_x": mesh.lambda_x, "lambda_y": mesh.lambda_y,
            "U_max": float(sol.U.max()), "U_min": float(sol.U.min()),
            "relative_residual": sol.report.residual,
            "galerkin_residual": float(np.max(np.abs(A @ u - r))),
            "solver": sol.report.method,
        }]

    keys = [{"N": N, "eps": e} for N in cfg.N for e in cfg.eps]
    return ExperimentReport("solve", cfg.to_dict(), _sweep(cfg, keys, one), {})


def _green_rows(cfg, N, eps):
    mesh = make_mesh(cfg, N, eps)
    profile = StabilizationProfile.for_mesh(mesh, cfg.crosswind)
    ss = SchemeSolver(mesh, profile)
    node = _anchor(cfg, mesh, require_outside_xy=True)
    green = ss.green(node, cfg.tol)
    sol = ss.solve(cfg.tol)
    u_star, functional = duality_gap(sol.U, green, mesh, profile)
    common = {
        "xstar_i": node[0], "xstar_j": node[1],
        "definition_residual": definition_residual(green, ss.system),
        "random_field_residual": check_against_random_fields(green, mesh, profile,
                                                             seed=cfg.seed),
        "duality_gap": abs(u_star - functional) / (1.0 + abs(u_star)),
        "solver": green.report.method, "solver_residual": green.report.residual,
    }
    return mesh, profile, green, common


def run_green_suite(cfg: ExperimentConfig) -> ExperimentReport:
    def one(N, eps):
        mesh, profile, green, common = _green_rows(cfg, N, eps)
        rows = []
        for k in cfg.k:
            w = WeightParams.at_node(mesh, k, green.anchor)
            rec = estimate_quantities(green.G, mesh, profile, w, cfg.quad_order)
            d = rec.to_dict()
            d.pop("N"), d.pop("epsilon")
            rows.append({**common, **d,
                         "ring_maxima": ring_maxima(green.G, mesh, w)})
        return rows

    keys = [{"N": N, "eps": e} for N in cfg.N for e in cfg.eps]
    rows = _sweep(cfg, keys, one)
    return ExperimentReport("verify", cfg.to_dict(), rows, green_suite_summary(rows))


def green_suite_summary(rows: list[dict]) -> dict:
    good = [r for r in rows if r.get("error") is None]
    fits = []
    for eps in sorted({r["eps"] for r in good}):
        for k in sorted({r["k"] for r in good}):
            sel = sorted((r for r in good if r["eps"] == eps and r["k"] == k),
                         key=lambda r: r["N"])
            if len(sel) < 2:
                continue
            Ns = np.array([r["N"] for r in sel], float)
            fit_norm = fit_loglog(Ns * np.log(Ns), [r["norm_sq"] for r in sel])
            fit_E = fit_loglog(Ns, [r["E_s"] / math.sqrt(r["norm_sq"]) for r in sel])
            fits.append({"eps": eps, "k": k, "norm_sq_vs_NlnN": fit_norm.to_dict(),
                         "E_s_over_norm_vs_N": fit_E.to_dict()})
    return {
        "k_star": empirical_k_star(good),
        "slopes": fits,
        "max_implied": {name: _nanmax(r.get(name) for r in good) for name in (
            "point_value_implied_C", "grad_interp_implied_C_s", "grad_interp_implied_C_rest",
            "interp_implied_C_s", "interp_implied_C_rest", "interp_form_ratio")},
        "failed_rows": len(rows) - len(good),
    }


def _nanmax(values):
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return max(vals) if vals else None


def empirical_k_star(rows: list[dict]) -> float | None:
    """Smallest swept k whose rows all satisfy B/||G||^2 >= 1/4 and |B(E,G)| <= ||G||^2/16."""
    for k in sorted({r["k"] for r in rows}):
        sel = [r for r in rows if r["k"] == k]
        if all(r["coercivity_ratio"] >= 0.25 and r["interp_form_ratio"] <= 1 / 16 for r in sel):
            return k
    return None


def run_decay(cfg: ExperimentConfig) -> ExperimentReport:
    sets = {"s": (Region.S,), "x_y": (Region.X, Region.Y), "xy": (Region.XY,)}

    def one(N, eps):
        mesh, profile, green, common = _green_rows(cfg, N, eps)
        rows = []
        for k in cfg.k:
            w = WeightParams.at_node(mesh, k, green.anchor)
            rings = ring_maxima(green.G, mesh, w)
            for K in sorted(cfg.K):
                excl = exclusion_mask(mesh, w, K)
                row = {**common, "k": k, "K": K, "excluded_elements": int(excl.sum()),
                       "ring_maxima": rings}
                for name, regs in sets.items():
                    nrm = w1inf_norms(green.G, mesh, regs, excl)
                    if nrm.empty:
                        row[f"{name}_status"] = "empty"
                        continue
                    row[f"{name}_status"] = "ok"
                    row[f"{name}_supG"] = nrm.sup_abs
                    row[f"{name}_eps_supgradG"] = eps * nrm.sup_grad
                    if name == "s":
                        val = max(nrm.sup_abs, nrm.sup_grad)
                        row["s_ratio"] = val / N ** -cfg.v
                    elif name == "x_y":
                        val = eps * nrm.sup_grad + nrm.sup_abs
                        row["x_y_ratio"] = val / N ** -cfg.v
                    else:
                        val = eps * nrm.sup_grad + nrm.sup_abs
                        row["xy_ratio"] = val / (eps ** -0.5 * N ** -cfg.v)
                rows.append(row)
        return rows

    keys = [{"N": N, "eps": e} for N in cfg.N for e in cfg.eps]
    rows = _sweep(cfg, keys, one)
    return ExperimentReport("decay", cfg.to_dict(), rows, {"v": cfg.v,
                                                           "failed_rows": sum(
                                                               r["error"] is not None
                                                               for r in rows)})


def load_calibration() -> dict:
    """The frozen calibration fixtures shipped with the package."""
    text = resources.files("shishkin_sdfem").joinpath("data/calibration.json").read_text("utf-8")
    return json.loads(text)


def calibrate(N=(16, 32, 64), eps=(1e-3, 1e-4, 1e-5), k_grid=(2, 4, 8, 16, 32, 64),
              b=(1.0, 1.0)) -> dict:
    """Sweep k over the coercivity and interpolation-form grid and return fixture data."""
    cfg = ExperimentConfig(N=list(N), eps=list(eps), k=list(k_grid), b=b)
    rep = run_green_suite(cfg)
    return {
        "k_grid": list(k_grid),
        "grid": {"N": list(N), "eps": list(eps), "b": list(b), "xstar": cfg.xstar},
        "k_star": rep.summary["k_star"],
        "min_coercivity_ratio": {str(k): min(r["coercivity_ratio"] for r in rep.rows
                                             if r["k"] == k) for k in k_grid},
        "max_interp_form_ratio": {str(k): max(r["interp_form_ratio"] for r in rep.rows if r["k"] == k)
                             for k in k_grid},
    }

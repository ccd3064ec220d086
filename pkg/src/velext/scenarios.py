"""Scenario configuration, the built-in catalogue and the batch runner.

Config grammar (INI, ``#`` or ``;`` comments, vectors as comma lists)::

    [scenario]
    name     = rotation
    horizon  = 1.0              # > 0
    solvers  = moc, grid, linear_transport
    seed     = 0

    [grid]
    lower = -1.25, -1.25        # box corners; 2 or 3 components
    upper =  1.25,  1.25
    h     = 0.0625

    [velocity]
    kind = rigid_rotation       # rigid_rotation | translation | shear | single_vortex | user_expression
    omega = 1.0                 # kind-specific parameters: omega, center, c, sigma, period,
                                # components (semicolon separated), lipschitz

    [surface]
    shape   = circle            # circle | sphere | ellipse
    center  = 0.4, 0.0
    radius  = 0.4               # ellipse: radii = a, b
    profile = sdf               # sdf | scaled_sdf
    factor  = 1.0               # scale for scaled_sdf

    [solver]
    cfl = 0.5
    outputs = 4
    dt = 1e-3                   # ODE step of the characteristic solver
    r_star = auto               # or a number in (0, 1)
    beta = 1.0                  # nmm_beta only
    reinit_time = 0.5           # pseudo-time per corrector pass
    tube_width = auto           # half-width of the diagnostic tube; auto = 3 h
    sandwich_factor = 2.0       # sandwich tolerance = factor * h * max|grad phi0|

Solvers: ``moc``, ``grid``, ``linear_transport``, ``nmm_full``, ``nmm_beta``,
``reinit_corrector``. Overrides use ``section.key=value``.
"""

from __future__ import annotations

import configparser
import json
import logging
import platform
import re
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DiagnosticsReport, check_sandwich, compute_envelopes
from .baselines import linear_transport, reinitialize, solve_nmm
from .grid import Grid, ScalarField, central_gradient, write_field, write_slice_csv
from .hjsolver import Regularizer, SolverConfig, solve_viscosity
from .interface import InterfaceMesh, distance_to_mesh, extract_interface, hausdorff
from .levelsets import Ball, Ellipse, clamp_to_box, sample_profile
from .characteristics import _rk4
from .tube import solve_tube
from .velocity import AnalyticFieldSpec, lipschitz_estimate

log = logging.getLogger(__name__)

SOLVERS = ("moc", "grid", "linear_transport", "nmm_full", "nmm_beta", "reinit_corrector")

BUILTIN = {
    "rotation": """
[scenario]
name = rotation
horizon = 1.0
solvers = moc, grid, linear_transport
[grid]
lower = -1.25, -1.25
upper = 1.25, 1.25
h = 0.0625
[velocity]
kind = rigid_rotation
omega = 1.0
center = 0.0, 0.0
[surface]
shape = circle
center = 0.4, 0.0
radius = 0.4
""",
    "translation": """
[scenario]
name = translation
horizon = 1.0
solvers = moc, grid, linear_transport
[grid]
lower = -1.25, -1.25
upper = 1.25, 1.25
h = 0.0625
[velocity]
kind = translation
c = 0.5, 0.0
[surface]
shape = circle
center = -0.4, 0.0
radius = 0.4
""",
    "shear": """
[scenario]
name = shear
horizon = 1.0
solvers = moc, grid, linear_transport
[grid]
lower = -1.5, -1.5
upper = 1.5, 1.5
h = 0.0625
[velocity]
kind = shear
sigma = 1.0
[surface]
shape = circle
center = 0.0, 0.0
radius = 0.5
""",
    "single-vortex": """
[scenario]
name = single-vortex
horizon = 0.5
solvers = moc, grid, linear_transport
[grid]
lower = 0.0, 0.0
upper = 1.0, 1.0
h = 0.015625
[velocity]
kind = single_vortex
period = 2.0
[surface]
shape = circle
center = 0.5, 0.75
radius = 0.15
""",
}


class ConfigError(ValueError):
    """Malformed or invalid scenario configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f"line {line}" + (f", column {column}" if column else "") + ": " if line else ""
        super().__init__(where + message)


@dataclass
class ScenarioConfig:
    name: str
    lower: tuple
    upper: tuple
    h: float
    velocity: AnalyticFieldSpec
    shape: str
    center: tuple
    radius: float | None
    radii: tuple | None
    profile: str
    factor: float
    solvers: tuple
    horizon: float
    cfl: float = 0.5
    outputs: int = 4
    dt: float = 1e-3
    r_star: float | None = None
    beta: float = 1.0
    reinit_time: float = 0.5
    tube_width: float | None = None
    sandwich_factor: float = 2.0
    seed: int = 0
    source: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def box(self):
        return np.asarray(self.lower, dtype=float), np.asarray(self.upper, dtype=float)

    def grid(self) -> Grid:
        return Grid.from_spacing(self.lower, self.upper, self.h)

    def build_profile(self):
        if self.shape == "ellipse":
            return Ellipse(self.center, self.radii)
        scale = self.factor if self.profile == "scaled_sdf" else 1.0
        return Ball(tuple(self.center), float(self.radius), float(scale))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d["velocity"] = {"kind": self.velocity.kind, "params": self.velocity.params}
        return d


def _line_index(text: str) -> dict:
    """``(section, key) -> line number`` for error reporting."""
    idx, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            idx[(section, None)] = n
        elif s and s[0] not in "#;" and "=" in s:
            idx[(section, s.split("=", 1)[0].strip().lower())] = n
    return idx


def _vector(text):
    return tuple(float(v) for v in text.split(","))


def parse_config(text: str, overrides=()) -> ScenarioConfig:
    """Parse and validate a scenario; ``overrides`` are ``section.key=value`` strings."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError(f"cannot parse: {exc.message.splitlines()[0]}", lineno, 1) from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], lineno) from None
    lines = _line_index(text)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        sec, k = key.strip().split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, k.strip(), value.strip())

    def get(sec, key, conv=str, default=None, required=False):
        if not cp.has_option(sec, key):
            if required:
                raise ConfigError(f"missing required key {sec}.{key}", lines.get((sec, None)))
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {sec}.{key}: {raw!r} ({exc})", lines.get((sec, key))) from None

    def fail(msg, sec, key=None):
        raise ConfigError(msg, lines.get((sec, key)) or lines.get((sec, None)))

    for sec in ("scenario", "grid", "velocity", "surface"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}]")

    lower = get("grid", "lower", _vector, required=True)
    upper = get("grid", "upper", _vector, required=True)
    if len(lower) != len(upper) or len(lower) not in (2, 3):
        fail("grid.lower and grid.upper need 2 or 3 matching components", "grid", "lower")
    if any(b <= a for a, b in zip(lower, upper)):
        fail("grid.upper must exceed grid.lower", "grid", "upper")
    h = get("grid", "h", float, required=True)
    if h <= 0:
        fail("h > 0 required", "grid", "h")

    kind = get("velocity", "kind", required=True).strip()
    if kind not in AnalyticFieldSpec.KINDS:
        fail(f"unknown velocity kind {kind!r}", "velocity", "kind")
    params = {}
    for key in ("omega", "sigma", "period", "lipschitz"):
        val = get("velocity", key, float)
        if val is not None:
            params[key] = val
    for key in ("center", "c"):
        val = get("velocity", key, _vector)
        if val is not None:
            params[key] = val
    if kind == "user_expression":
        comps = get("velocity", "components", required=True)
        params["components"] = [c.strip() for c in comps.split(";")]
        if len(params["components"]) != len(lower):
            fail("velocity.components needs one expression per dimension", "velocity", "components")
    spec = AnalyticFieldSpec(kind, params)
    try:
        spec.build(len(lower))
    except Exception as exc:  # sympy and parameter errors
        fail(f"cannot build velocity field: {exc}", "velocity", "kind")

    shape = get("surface", "shape", str, "circle").strip()
    if shape not in ("circle", "sphere", "ellipse"):
        fail(f"unknown surface shape {shape!r}", "surface", "shape")
    center = get("surface", "center", _vector, required=True)
    if len(center) != len(lower):
        fail("surface.center dimension differs from the grid", "surface", "center")
    radius = get("surface", "radius", float)
    radii = get("surface", "radii", _vector)
    if shape == "ellipse":
        if radii is None or len(radii) != 2 or min(radii) <= 0:
            fail("ellipse needs two positive radii", "surface", "radii")
        extent = np.asarray(radii)
    else:
        if radius is None or radius <= 0:
            fail("radius > 0 required", "surface", "radius")
        extent = np.full(len(lower), radius)
    profile = get("surface", "profile", str, "sdf").strip()
    if profile not in ("sdf", "scaled_sdf"):
        fail(f"unknown profile {profile!r}", "surface", "profile")
    factor = get("surface", "factor", float, 1.0)
    if factor <= 0:
        fail("factor > 0 required", "surface", "factor")
    c = np.asarray(center)
    margin = min((c - extent - np.asarray(lower)).min(), (np.asarray(upper) - c - extent).min())
    if margin < 5 * h:
        fail(f"initial surface must stay 5h = {5 * h:.4g} inside the box (margin {margin:.4g})", "surface", "center")

    horizon = get("scenario", "horizon", float, required=True)
    if not horizon > 0:
        fail("horizon > 0", "scenario", "horizon")
    solvers = tuple(s.strip() for s in get("scenario", "solvers", str, "moc, grid").split(",") if s.strip())
    if not solvers:
        fail("select at least one solver", "scenario", "solvers")
    for s in solvers:
        if s not in SOLVERS:
            fail(f"unknown solver {s!r}; choose from {', '.join(SOLVERS)}", "scenario", "solvers")
    if "moc" in solvers and shape == "ellipse":
        fail("the characteristic solver needs a circle or sphere profile", "scenario", "solvers")

    def opt_float(raw):
        return None if raw.strip().lower() == "auto" else float(raw)

    cfg = ScenarioConfig(
        name=get("scenario", "name", str, "scenario").strip(),
        lower=lower,
        upper=upper,
        h=h,
        velocity=spec,
        shape=shape,
        center=center,
        radius=radius,
        radii=radii,
        profile=profile,
        factor=factor,
        solvers=solvers,
        horizon=horizon,
        cfl=get("solver", "cfl", float, 0.5),
        outputs=get("solver", "outputs", int, 4),
        dt=get("solver", "dt", float, 1e-3),
        r_star=get("solver", "r_star", opt_float, None),
        beta=get("solver", "beta", float, 1.0),
        reinit_time=get("solver", "reinit_time", float, 0.5),
        tube_width=get("solver", "tube_width", opt_float, None),
        sandwich_factor=get("solver", "sandwich_factor", float, 2.0),
        seed=get("scenario", "seed", int, 0),
        source={s: dict(cp.items(s)) for s in cp.sections()},
    )
    if not 0 < cfg.cfl < 1:
        fail("cfl must lie in (0, 1)", "solver", "cfl")
    if cfg.outputs < 1:
        fail("outputs >= 1 required", "solver", "outputs")
    if not 0 < cfg.dt <= 1e-2:
        fail("dt must lie in (0, 1e-2]", "solver", "dt")
    if cfg.r_star is not None and not 0 < cfg.r_star < 1:
        fail("r_star must lie in (0, 1)", "solver", "r_star")
    if cfg.sandwich_factor < 0:
        fail("sandwich_factor >= 0 required", "solver", "sandwich_factor")
    if cfg.beta <= 0:
        fail("beta > 0 required", "solver", "beta")
    return cfg


def load_config(path_or_name: str, overrides=()) -> ScenarioConfig:
    p = Path(path_or_name)
    if p.is_file():
        return parse_config(p.read_text(), overrides)
    if path_or_name in BUILTIN:
        return parse_config(BUILTIN[path_or_name], overrides)
    raise ConfigError(f"no config file or built-in scenario named {path_or_name!r}")


# -- runner --------------------------------------------------------------------

def advect_points(v, points, t0: float, t1: float, dt: float = 1e-3) -> np.ndarray:
    """Marker particles carried by ``x' = v(t, x)`` with RK4."""
    x = np.asarray(points, dtype=float)
    if t1 == t0:
        return x.copy()
    n = max(1, int(np.ceil(abs(t1 - t0) / dt - 1e-12)))
    h = (t1 - t0) / n
    for k in range(n):
        x = _rk4(lambda s, y: v.eval(s, y), t0 + k * h, x, h)
    return x


def _marker_meshes(cfg, profile, v, times, spacing):
    if isinstance(profile, Ellipse):
        pts = profile.boundary_points(max(64, int(2 * np.pi * max(profile.radii) / (0.25 * spacing))))
    else:
        pts = profile.interface_points(0.25 * spacing)
    out, t_prev = [], 0.0
    for t in times:
        pts = advect_points(v, pts, t_prev, t, cfg.dt if cfg.dt <= 5e-3 else 5e-3)
        t_prev = t
        cells = None
        if cfg.dim == 2:
            m = len(pts)
            cells = np.column_stack([np.arange(m), (np.arange(m) + 1) % m])
        out.append(InterfaceMesh(float(t), pts.copy(), np.zeros_like(pts), None, cells))
    return out


@dataclass
class RunResult:
    status: int
    out_dir: Path
    manifest: dict


def _grad_target(cfg):
    return cfg.factor if cfg.profile == "scaled_sdf" else 1.0


def _field_diagnostics(name, fields, markers, grid, width, target, extra=None):
    rep = DiagnosticsReport(metadata={"solver": name})
    for k, (f, mk) in enumerate(zip(fields, markers)):
        tube = distance_to_mesh(mk, grid.nodes()) <= width
        g = central_gradient(f.values, grid.spacing)
        dev = np.abs(np.linalg.norm(g[tube], axis=-1) - target)
        mesh = extract_interface(f, with_curvature=False)
        values = {
            "tube_grad_dev_max": float(dev.max()) if dev.size else 0.0,
            "tube_grad_dev_mean": float(dev.mean()) if dev.size else 0.0,
            "hausdorff": hausdorff(mesh, mk) if not mesh.empty else float(grid.upper.max() - grid.origin.min()),
        }
        if extra is not None:
            values.update(extra(k))
        rep.add(f.t, **values)
    return rep


def run_scenario(cfg: ScenarioConfig, out_dir, check: bool = False) -> RunResult:
    """Run every selected solver, writing fields, meshes, diagnostics, a summary and a manifest.

    Returns status 0 on success, 1 on a solver error (artifacts so far are kept)
    and, when ``check`` is set, 2 if any acceptance check fails.
    """
    out = Path(out_dir)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    (out / "meshes").mkdir(exist_ok=True)
    manifest = {
        "config": cfg.to_dict(),
        "versions": {"velext": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "checks": {},
        "solvers": {},
    }
    try:
        import scipy

        manifest["versions"]["scipy"] = scipy.__version__
    except ImportError:  # pragma: no cover
        pass
    status = 0
    summary = []
    try:
        grid = cfg.grid()
        v = cfg.velocity.build(cfg.dim)
        profile = cfg.build_profile()
        target = _grad_target(cfg)
        width = cfg.tube_width or 3 * grid.h
        times = cfg.horizon * np.arange(cfg.outputs + 1) / cfg.outputs
        markers = _marker_meshes(cfg, profile, v, times, grid.h)
        for mk in markers:
            mk.to_csv(out / "meshes" / f"markers_t{mk.t:.4f}.csv")
        V0 = lipschitz_estimate(v, cfg.box, 4096, times=np.linspace(0, cfg.horizon, 5), seed=cfg.seed)
        clamped = clamp_to_box(profile, grid)
        phi0 = sample_profile(profile, grid, clamp=True)
        gmax = float(np.max(np.linalg.norm(central_gradient(phi0.values, grid.spacing), axis=-1)))
        manifest["V0"] = V0

        for name in cfg.solvers:
            t_start = time.perf_counter()
            log.info("running %s", name)
            if name == "moc":
                rep = _run_moc(cfg, profile, v, grid, markers, width, target, out)
                dev = max(rep.series["tube_grad_dev_max"])
                manifest["checks"]["moc_gradient_preservation"] = _check(dev, 1e-6)
            else:
                fields, extra = _run_field_solver(name, cfg, v, grid, phi0, profile, clamped, times, V0, gmax, manifest)
                for f in fields:
                    write_field(out / "fields" / f"{name}_t{f.t:.4f}.txt", f)
                    write_slice_csv(out / "fields" / f"{name}_t{f.t:.4f}.csv", f)
                    extract_interface(f).to_csv(out / "meshes" / f"{name}_t{f.t:.4f}.csv")
                rep = _field_diagnostics(name, fields, markers, grid, width, target, extra)
            rep.metadata.update(solver=name, scenario=cfg.name)
            rep.to_json(out / f"{name}_diagnostics.json")
            rep.to_csv(out / f"{name}_diagnostics.csv")
            row = {"solver": name, "t": rep.times[-1]}
            row.update({k: s[-1] for k, s in rep.series.items()})
            summary.append(row)
            # wall time lives only in the manifest so the CSV/JSON artifacts stay reproducible
            manifest["solvers"][name] = {"final": row, "seconds": round(time.perf_counter() - t_start, 3)}
    except Exception as exc:
        status = 1
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()
        log.error("run failed: %s", exc)
    _write_summary(out / "summary.csv", summary)
    failed = [k for k, c in manifest["checks"].items() if not c["passed"]]
    if status == 0 and check and failed:
        status = 2
    manifest["status"] = status
    manifest["failed_checks"] = failed
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
    return RunResult(status, out, manifest)


def _check(value, tolerance):
    return {"value": float(value), "tolerance": float(tolerance), "passed": bool(value <= tolerance)}


def _run_moc(cfg, profile, v, grid, markers, width, target, out):
    sol = solve_tube(profile, v, cfg.horizon, cfg.box, grid.h, dt=cfg.dt)
    rep = DiagnosticsReport(metadata={"legs": len(sol.legs), "t_star_first": sol.legs[0].bounds.t_star})
    nodes = grid.nodes().reshape(-1, cfg.dim)
    for mk in markers:
        t = mk.t
        gate = min(width, 0.5 * float(sol.eps_at(t)))
        sel = distance_to_mesh(mk, nodes) <= gate
        pts = nodes[sel]
        phi, grad, inside = sol.evaluate(t, pts)
        gdev = np.abs(np.linalg.norm(grad[inside], axis=-1) - target)
        mesh = sol.interface_mesh(t)
        mesh.to_csv(out / "meshes" / f"moc_t{t:.4f}.csv")
        data = np.column_stack([pts, phi, grad, inside])
        names = ["x", "y", "z"][: cfg.dim]
        np.savetxt(
            out / "fields" / f"moc_tube_t{t:.4f}.csv",
            data,
            delimiter=",",
            header=",".join(names + ["phi"] + ["g" + c for c in names] + ["inside"]),
            comments="",
            fmt="%.12g",
        )
        rep.add(
            t,
            tube_grad_dev_max=float(gdev.max()) if gdev.size else 0.0,
            tube_grad_dev_mean=float(gdev.mean()) if gdev.size else 0.0,
            hausdorff=hausdorff(mesh, mk),
            tube_coverage=float(inside.mean()) if inside.size else 0.0,
        )
    return rep


def _run_field_solver(name, cfg, v, grid, phi0, profile, clamped, times, V0, gmax, manifest):
    extra = None
    if name == "grid":
        reg = Regularizer(cfg.r_star) if cfg.r_star else Regularizer.from_gradient_bound(_grad_target(cfg))
        fields = solve_viscosity(phi0, v, reg, cfg.horizon, SolverConfig(cfg.cfl, cfg.horizon, cfg.outputs))
        envs = [compute_envelopes(clamped, v, f.t, grid, V0, dt=min(cfg.dt * 10, 1e-2)) for f in fields]
        sw = check_sandwich(fields, envs, cfg.sandwich_factor * grid.h * gmax)
        bmax = max(float(np.abs(f.values[grid.boundary_mask()]).max()) for f in fields)
        manifest["checks"]["grid_sandwich"] = _check(sw.worst, sw.tolerance)
        manifest["checks"]["grid_boundary_zero"] = _check(bmax, 0.0)

        def extra(k):
            return {"sandwich_lower": sw.lower[k], "sandwich_upper": sw.upper[k]}

    elif name == "linear_transport":
        fields = []
        for t in times:
            # pure transport reference: unclamped profile, backward paths may leave the box
            f, _ = linear_transport(profile, v, t, grid.nodes(), dt=cfg.dt)
            fields.append(ScalarField(grid, f, float(t)))
    elif name in ("nmm_full", "nmm_beta"):
        fields = solve_nmm(phi0, v, cfg.horizon, name, cfg.beta, SolverConfig(cfg.cfl, cfg.horizon, cfg.outputs))
    elif name == "reinit_corrector":
        fields = []
        for t in times:
            f, _ = linear_transport(profile, v, t, grid.nodes(), dt=cfg.dt)
            fields.append(reinitialize(ScalarField(grid, f, float(t)), cfg.reinit_time))
    else:  # pragma: no cover - validated in parse_config
        raise ValueError(name)
    return fields, extra


def _write_summary(path, rows):
    keys = ["solver", "t"] + sorted({k for r in rows for k in r} - {"solver", "t"})
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(str(r.get(k, "")) for k in keys) + "\n")

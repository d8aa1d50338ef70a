"""Configuration-driven case runner, comparison tool and mesh inspection.

Case files are INI-style (``[section]`` headers, ``key = value`` lines) and are
parsed with :mod:`configparser`.  Sections and keys::

    [case]      kind, domain, formulation
    [geometry]  a, c, R_inf, lengths
    [mesh]      divisions, core_divisions, convention, patch_thickness
    [material]  eps_r, mu_r            (scatterer or cavity filling)
    [wave]      k0, E0, propagation, polarization
    [pulse]     t0, r0, tau, k_hat, E_hat
    [source]    omega                  (cavity drive)
    [time]      dt, t_end, c
    [solver]    method, alpha, order
    [probes]    <name> = sweep <r> <theta|phi> <fixed> <start> <stop> <count>
                <name> = point <x> <y> <z> <E|dE/dt|E.t> [tx ty tz] [total]

Exit codes: 0 success, 1 tolerance exceeded, 2 usage or configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .assembly import AMPLITUDE, CONVENTIONAL, AssemblyError
from .dofmap import ConstraintConflictError
from .elements import DegenerateElementError
from .harmonic import (HarmonicProblem, ProbeError, Sweep, probe_line, read_probe_csv, solve_harmonic,
                       symmetry_plane_residual, write_probe_csv)
from .meshgen import (PEC, Mesh, MeshError, attach_thin_patch, check_mesh, gen_cuboid, gen_dielectric_sphere,
                      gen_ellipsoidal_shell, gen_spherical_shell, read_mesh, retag_plane, to_elements,
                      write_mesh)
from .model import (DEFAULT_CONSTANTS, HarmonicWaveSpec, Material, NeumannPulseSpec, PhysicalConstants,
                    plane_wave_field)
from .oracles import SeriesError, cavity_fields, oracle_sweep
from .sparsela import LinearSolveError
from .transient import (QUANTITIES, CavitySource, ProbeSpec, PulseSource, TransientProblem,
                        backward_derivative, read_series_csv, run, write_series_csv)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

CASE_KINDS = ("sphere_pec_harmonic", "ellipsoid_pec_harmonic", "sphere_dielectric_harmonic",
              "cavity_cube_transient", "sphere_pec_transient", "sphere_dielectric_transient")
DOMAINS = ("full", "symmetric_half", "symmetric_quarter")
CONFIG_DIR = Path(__file__).parent / "configs"


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

@dataclass
class ProbeDef:
    name: str
    sweep: Optional[Sweep] = None
    point: Optional[ProbeSpec] = None


@dataclass
class CaseConfig:
    kind: str
    domain: str = "full"
    formulation: str = CONVENTIONAL
    a: float = 1.0
    c: Optional[float] = None
    R_inf: Optional[float] = None
    lengths: tuple = (math.pi, math.pi, math.pi)
    divisions: tuple = ()
    core_divisions: Optional[int] = None
    convention: str = "elements"
    patch_thickness: Optional[float] = None
    eps_r: float = 1.0
    mu_r: float = 1.0
    k0: float = 1.0
    E0: float = 1.0
    propagation: tuple = (0.0, 0.0, 1.0)
    polarization: tuple = (1.0, 0.0, 0.0)
    t0: float = 25.99e-9
    r0: tuple = (0.0, 0.0, -1.2)
    tau: float = 5.25e-9
    k_hat: tuple = (0.0, 0.0, 1.0)
    E_hat: tuple = (1.0, 0.0, 0.0)
    omega: float = 3e8
    dt: float = 1e-9
    t_end: float = 4e-8
    c_light: Optional[float] = None
    solver: str = "direct"
    alpha: float = 1.0
    order: int = 3
    probes: list = field(default_factory=list)
    name: str = "case"

    # ------------------------------------------------------------ derived
    @property
    def harmonic(self) -> bool:
        return self.kind.endswith("_harmonic")

    @property
    def symmetric(self) -> bool:
        return self.domain != "full"

    @property
    def constants(self) -> PhysicalConstants:
        if self.c_light is None:
            return DEFAULT_CONSTANTS
        return PhysicalConstants.with_speed_of_light(self.c_light)

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def thickness(self) -> float:
        if self.patch_thickness is not None:
            return self.patch_thickness
        return 0.01 * (self.lengths[0] if self.kind == "cavity_cube_transient" else self.a)

    def planes(self) -> tuple:
        """Symmetry planes ``(axis, value)`` of the meshed domain."""
        if not self.symmetric:
            return ()
        if self.kind == "cavity_cube_transient":
            L = self.lengths
            planes = ((0, L[0] / 2), (2, L[2] / 2))
            return planes[:1] if self.domain == "symmetric_half" else planes
        return ((1, 0.0),)

    def validate(self) -> "CaseConfig":
        if self.kind not in CASE_KINDS:
            raise ConfigError(f"[case] kind: unknown case kind {self.kind!r}; expected one of {CASE_KINDS}")
        if self.domain not in DOMAINS:
            raise ConfigError(f"[case] domain: unknown domain {self.domain!r}; expected one of {DOMAINS}")
        if self.domain == "symmetric_quarter" and self.kind != "cavity_cube_transient":
            raise ConfigError("[case] domain: symmetric_quarter is only available for the cavity")
        if self.formulation not in (CONVENTIONAL, AMPLITUDE):
            raise ConfigError(f"[case] formulation: unknown formulation {self.formulation!r}")
        if self.formulation == AMPLITUDE and self.kind not in ("sphere_pec_harmonic", "ellipsoid_pec_harmonic"):
            raise ConfigError("[case] formulation: amplitude is valid only for exterior-domain harmonic cases")
        if self.symmetric and not (self.patch_thickness is None or self.patch_thickness > 0):
            raise ConfigError("[mesh] patch_thickness must be > 0 in symmetric domain modes")
        if self.convention not in ("elements", "intervals"):
            raise ConfigError(f"[mesh] convention: expected 'elements' or 'intervals', got {self.convention!r}")
        if len(self.divisions) != 3:
            raise ConfigError("[mesh] divisions needs three integers")
        if self.kind == "sphere_dielectric_harmonic" or self.kind == "sphere_dielectric_transient":
            if self.core_divisions is None or not 0 < self.core_divisions < self.divisions[0]:
                raise ConfigError("[mesh] core_divisions must lie strictly between 0 and the radial divisions")
            if self.eps_r == 1.0:
                log.warning("dielectric case with eps_r = 1 has no scatterer")
        if self.kind != "cavity_cube_transient":
            if self.R_inf is None or not self.R_inf > max(self.a, self.c or 0.0):
                raise ConfigError("[geometry] R_inf must exceed the scatterer size")
        if self.kind == "ellipsoid_pec_harmonic" and not (self.c or 0) > 0:
            raise ConfigError("[geometry] c (ellipsoid z semi-axis) is required")
        if not self.harmonic and not (self.dt > 0 and self.t_end >= 0):
            raise ConfigError("[time] dt must be positive and t_end non-negative")
        for p in self.probes:
            if self.harmonic and p.sweep is None:
                raise ConfigError(f"[probes] {p.name}: harmonic cases take sweep probes")
            if not self.harmonic and p.point is None:
                raise ConfigError(f"[probes] {p.name}: transient cases take point probes")
        return self


def _floats(text, n=None, where=""):
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{where}: expected {n} numbers, got {len(vals)}")
    return vals


def _probe(name, text) -> ProbeDef:
    where = f"[probes] {name}"
    tok = text.split()
    if not tok:
        raise ConfigError(f"{where}: empty probe definition")
    try:
        if tok[0] == "sweep":
            if len(tok) != 7 or tok[2] not in ("theta", "phi"):
                raise ConfigError(f"{where}: expected 'sweep <r> <theta|phi> <fixed> <start> <stop> <count>'")
            r, fixed, start, stop = (float(tok[i]) for i in (1, 3, 4, 5))
            return ProbeDef(name, sweep=Sweep(r, tok[2], fixed, start, stop, int(tok[6])))
        if tok[0] == "point":
            if len(tok) < 5 or tok[4] not in QUANTITIES:
                raise ConfigError(f"{where}: expected 'point <x> <y> <z> <{'|'.join(QUANTITIES)}> [tx ty tz] [total]'")
            total = tok[-1] == "total"
            rest = tok[5:-1] if total else tok[5:]
            direction = _floats(" ".join(rest), 3, where) if rest else None
            spec = ProbeSpec(_floats(" ".join(tok[1:4]), 3, where), tok[4], direction, total)
            return ProbeDef(name, point=spec)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: probe type must be 'sweep' or 'point'")


_SCALARS = {
    ("case", "kind"): ("kind", str), ("case", "domain"): ("domain", str),
    ("case", "formulation"): ("formulation", str),
    ("geometry", "a"): ("a", float), ("geometry", "c"): ("c", float), ("geometry", "r_inf"): ("R_inf", float),
    ("mesh", "core_divisions"): ("core_divisions", int), ("mesh", "convention"): ("convention", str),
    ("mesh", "patch_thickness"): ("patch_thickness", float),
    ("material", "eps_r"): ("eps_r", float), ("material", "mu_r"): ("mu_r", float),
    ("wave", "k0"): ("k0", float), ("wave", "e0"): ("E0", float),
    ("pulse", "t0"): ("t0", float), ("pulse", "tau"): ("tau", float),
    ("source", "omega"): ("omega", float),
    ("time", "dt"): ("dt", float), ("time", "t_end"): ("t_end", float), ("time", "c"): ("c_light", float),
    ("solver", "method"): ("solver", str), ("solver", "alpha"): ("alpha", float), ("solver", "order"): ("order", int),
}
_VECTORS = {
    ("geometry", "lengths"): "lengths", ("wave", "propagation"): "propagation",
    ("wave", "polarization"): "polarization", ("pulse", "r0"): "r0", ("pulse", "k_hat"): "k_hat",
    ("pulse", "e_hat"): "E_hat",
}


def parse_config(text: str, name: str = "case") -> CaseConfig:
    """Parse and validate a case description."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if not cp.has_option("case", "kind"):
        raise ConfigError("missing [case] kind")
    kw = {"name": name}
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            where = f"[{sec}] {key}"
            if sec == "probes":
                kw.setdefault("probes", []).append(_probe(key, raw))
            elif (sec, key) in _SCALARS:
                attr, typ = _SCALARS[sec, key]
                try:
                    kw[attr] = typ(raw.strip())
                except ValueError:
                    raise ConfigError(f"{where}: cannot read {raw!r} as {typ.__name__}") from None
            elif (sec, key) in _VECTORS:
                kw[_VECTORS[sec, key]] = _floats(raw, 3, where)
            elif (sec, key) == ("mesh", "divisions"):
                try:
                    kw["divisions"] = tuple(int(v) for v in raw.split())
                except ValueError:
                    raise ConfigError(f"{where}: divisions must be integers") from None
            else:
                raise ConfigError(f"{where}: unknown key")
    return CaseConfig(**kw).validate()


def resolve_config(path) -> Path:
    """A path on disk, or the name of a bundled config."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (CONFIG_DIR / p.name, CONFIG_DIR / (p.name + ".cfg")):
        if cand.exists():
            return cand
    raise ConfigError(f"config {path!s} not found (bundled: {', '.join(bundled_configs())})")


def bundled_configs() -> list:
    return sorted(p.name for p in CONFIG_DIR.glob("*.cfg"))


def load_config(path) -> CaseConfig:
    p = resolve_config(path)
    return parse_config(p.read_text(), p.stem)


# -------------------------------------------------------------------- mesh

def build_mesh(cfg: CaseConfig) -> Mesh:
    """Generate the case mesh, retag the symmetry planes and attach the thin patches."""
    n = [to_elements(d, cfg.convention) for d in cfg.divisions]
    span = "half" if cfg.symmetric else "full"
    if cfg.kind in ("sphere_pec_harmonic", "sphere_pec_transient"):
        mesh = gen_spherical_shell(cfg.a, cfg.R_inf, *n, span=span)
    elif cfg.kind == "ellipsoid_pec_harmonic":
        mesh = gen_ellipsoidal_shell(cfg.a, cfg.c, cfg.R_inf, *n, span=span)
    elif cfg.kind in ("sphere_dielectric_harmonic", "sphere_dielectric_transient"):
        core = to_elements(cfg.core_divisions, cfg.convention)
        mesh = gen_dielectric_sphere(cfg.a, cfg.R_inf, core, n[0] - core, n[1], n[2], span=span)
    else:
        L = np.array(cfg.lengths, dtype=float)
        for axis, _ in cfg.planes():
            L[axis] /= 2
        mesh = gen_cuboid(L, n)
    for axis, value in cfg.planes():
        mesh = retag_plane(mesh, axis, value)
        mesh = attach_thin_patch(mesh, axis, value, cfg.thickness())
    return mesh


def _materials(cfg: CaseConfig) -> dict:
    mat = Material(cfg.eps_r, cfg.mu_r)
    if cfg.kind == "cavity_cube_transient":
        return {0: mat}
    if "dielectric" in cfg.kind:
        return {1: mat}
    return {}


# --------------------------------------------------------------------- run

@dataclass
class RunReport:
    case: str
    kind: str
    domain: str
    equation_count: int
    element_count: int
    elements_by_kind: dict
    node_count: int
    wall_time_s: float
    residuals: dict
    outputs: list
    timings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _wave(cfg):
    return HarmonicWaveSpec(cfg.k0, cfg.E0, cfg.propagation, cfg.polarization, cfg.constants)


def _harmonic_field(cfg, points, E):
    """Match the oracle convention: total field inside a dielectric scatterer."""
    if cfg.kind != "sphere_dielectric_harmonic":
        return E
    inside = np.linalg.norm(points, axis=1) < cfg.a
    E = E.copy()
    E[inside] += plane_wave_field(_wave(cfg), points[inside])
    return E


def _series_outputs(outdir: Path, name: str, times, values, suffix="") -> list:
    values = np.asarray(values)
    paths = []
    if values.ndim == 1:
        p = outdir / f"{name}{suffix}.csv"
        write_series_csv(p, times, values)
        return [str(p)]
    for i, comp in enumerate("xyz"):
        p = outdir / f"{name}_{comp}{suffix}.csv"
        write_series_csv(p, times, values[:, i])
        paths.append(str(p))
    return paths


def run_case(cfg: CaseConfig, outdir) -> RunReport:
    """Mesh, constrain, solve, write probe CSVs and ``report.json``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    mesh = build_mesh(cfg)
    t_mesh = time.perf_counter() - t0
    planes = cfg.planes()
    mats = _materials(cfg)
    outputs, residuals = [], {}
    pec = PEC if mesh.facets_with(PEC) else None
    if cfg.harmonic:
        prob = HarmonicProblem(mesh, _wave(cfg), mats, cfg.formulation, cfg.alpha, planes, pec,
                               cfg.solver, cfg.order)
        sol = solve_harmonic(prob)
        free, timings = sol.free_count, dict(sol.timings)
        residuals["linear_relative"] = float(sol.report.residual_norm_relative)
        for axis, value in planes:
            residuals[f"symmetry_plane_{'xyz'[axis]}"] = float(symmetry_plane_residual(sol, axis, value))
        for p in cfg.probes:
            coords, E = probe_line(sol, p.sweep)
            path = outdir / f"{p.name}.csv"
            write_probe_csv(path, coords, _harmonic_field(cfg, p.sweep.points(), E))
            outputs.append(str(path))
    else:
        const = cfg.constants
        if cfg.kind == "cavity_cube_transient":
            source = CavitySource(cfg.omega, Material(cfg.eps_r, cfg.mu_r), const)
        else:
            source = PulseSource(NeumannPulseSpec(cfg.t0, cfg.r0, cfg.tau, cfg.k_hat, cfg.E_hat, const))
        prob = TransientProblem(mesh, source, mats, cfg.dt, cfg.steps, cfg.alpha, planes, pec,
                                homogeneous_pec=cfg.kind == "cavity_cube_transient", constants=const,
                                solver=cfg.solver, order=cfg.order)
        res = run(prob, [p.point for p in cfg.probes])
        free, timings = res.free_count, dict(res.timings)
        residuals["linear_relative"] = float(res.residual)
        for p, s in zip(cfg.probes, res.series):
            outputs += _series_outputs(outdir, p.name, s.times, s.values)
    timings["mesh"] = t_mesh
    report = RunReport(cfg.name, cfg.kind, cfg.domain, int(free), mesh.n_elements, mesh.element_counts(),
                       mesh.n_nodes, time.perf_counter() - t0, residuals, outputs, timings)
    (outdir / "report.json").write_text(report.to_json() + "\n")
    return report


def write_oracle(cfg: CaseConfig, outdir) -> list:
    """Analytic reference data at the case probes, named ``<probe>[_comp]_oracle.csv``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    if cfg.kind in ("sphere_pec_harmonic", "sphere_dielectric_harmonic"):
        kind = "mie" if cfg.kind == "sphere_pec_harmonic" else "stratton"
        if cfg.propagation != (0.0, 0.0, 1.0) or cfg.polarization != (1.0, 0.0, 0.0):
            raise ConfigError("series oracles assume propagation +z and x polarization")
        for p in cfg.probes:
            E = oracle_sweep(kind, p.sweep.coords(), p.sweep.points(), k0=cfg.k0, a=cfg.a, E0=cfg.E0,
                             eps1_r=cfg.eps_r, mu1_r=cfg.mu_r)
            path = outdir / f"{p.name}_oracle.csv"
            write_probe_csv(path, p.sweep.coords(), E)
            paths.append(str(path))
        return paths
    if cfg.kind == "cavity_cube_transient":
        times = cfg.dt * np.arange(cfg.steps + 1)
        mat = Material(cfg.eps_r, cfg.mu_r)
        for p in cfg.probes:
            spec = p.point
            E = np.array([cavity_fields(np.asarray(spec.point), t, cfg.omega, mat, cfg.constants).E
                          for t in times])
            if spec.quantity == "dE/dt":
                E = backward_derivative(times, E)
            elif spec.quantity == "E.t":
                E = E @ np.asarray(spec.direction, dtype=float)
            paths += _series_outputs(outdir, p.name, times, E, "_oracle")
        return paths
    raise ConfigError(f"no analytic oracle for case kind {cfg.kind!r}")


# ----------------------------------------------------------------- compare

def read_curve(path):
    """``(abscissa, values)`` from a probe-sweep or time-series CSV; values are ``(n, m)``."""
    with open(path) as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise ConfigError(f"{path}: empty file")
    if header and header[0] == "coord":
        x, E = read_probe_csv(path)
        return x, E
    if header == ["time_s", "value"]:
        t, v = read_series_csv(path)
        return t, v[:, None]
    raise ConfigError(f"{path}: unrecognised CSV header {header}")


def _interp(x_new, x, y):
    order = np.argsort(x)
    x, y = x[order], y[order]
    cols = [np.interp(x_new, x, y[:, j].real) + (1j * np.interp(x_new, x, y[:, j].imag)
                                                   if np.iscomplexobj(y) else 0.0)
            for j in range(y.shape[1])]
    return np.stack(cols, axis=1)


def compare_curves(xa, ya, xb, yb) -> dict:
    """Errors of curve ``a`` against reference ``b``.

    ``a`` is linearly interpolated onto the abscissae of ``b`` that fall inside its
    range.  ``linf`` is the largest componentwise deviation relative to the peak
    ``|b|`` (vector norm over components); ``l2`` is the relative Frobenius norm.
    """
    xa, xb = np.asarray(xa, dtype=float), np.asarray(xb, dtype=float)
    ya, yb = np.asarray(ya), np.asarray(yb)
    if ya.shape[1] != yb.shape[1]:
        raise ConfigError("curves have different numbers of components")
    if len(xa) == 0 or len(xb) == 0:
        raise ConfigError("empty curve")
    if xa.shape == xb.shape and np.allclose(xa, xb, rtol=0, atol=1e-12 * max(1.0, np.abs(xb).max())):
        ya_b, yb_in = ya, yb
    else:
        lo, hi = xa.min(), xa.max()
        span = max(hi - lo, abs(hi), 1e-300)
        keep = (xb >= lo - 1e-12 * span) & (xb <= hi + 1e-12 * span)
        if not keep.any():
            raise ConfigError(f"abscissa ranges are disjoint: [{lo}, {hi}] vs [{xb.min()}, {xb.max()}]")
        ya_b, yb_in = _interp(xb[keep], xa, ya), yb[keep]
    diff = ya_b - yb_in
    peak = float(np.linalg.norm(yb_in, axis=1).max())
    ref = float(np.linalg.norm(yb_in))
    per = (np.abs(diff).max(axis=0) / peak) if peak > 0 else np.full(diff.shape[1], np.inf)
    return {"linf": float(per.max()) if peak > 0 else float(np.abs(diff).max()),
            "linf_components": [float(v) for v in per],
            "l2": float(np.linalg.norm(diff) / ref) if ref > 0 else float(np.linalg.norm(diff)),
            "samples": int(len(yb_in)), "peak": peak}


# --------------------------------------------------------------------- main

def _summary(mesh: Mesh) -> dict:
    rep = check_mesh(mesh)
    return {"nodes": rep.nodes, "elements": rep.elements, "element_count": mesh.n_elements,
            "tags": rep.tags, "min_jacobian": rep.min_jacobian, "watertight": rep.watertight,
            "untagged_boundary_faces": rep.untagged_boundary, "duplicate_nodes": rep.duplicate_nodes,
            "valid": rep.valid}


def _cmd_mesh(args):
    cfg = load_config(args.config)
    mesh = build_mesh(cfg)
    if args.output:
        write_mesh(mesh, args.output)
    print(json.dumps(_summary(mesh), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_solve(args):
    cfg = load_config(args.config)
    out = args.output or f"{cfg.name}_out"
    rep = run_case(cfg, out)
    print(rep.to_json())
    return EXIT_OK


def _cmd_oracle(args):
    cfg = load_config(args.config)
    out = args.output or f"{cfg.name}_out"
    for p in write_oracle(cfg, out):
        print(p)
    return EXIT_OK


def _cmd_compare(args):
    xa, ya = read_curve(args.a)
    xb, yb = read_curve(args.b)
    m = compare_curves(xa, ya, xb, yb)
    m["tolerance"] = args.tol
    m["metric"] = args.metric
    print(json.dumps(m, indent=2, sort_keys=True))
    if args.tol is not None and m[args.metric] > args.tol:
        return EXIT_TOLERANCE
    return EXIT_OK


def _cmd_inspect(args):
    summary = _summary(read_mesh(args.mesh))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK if summary["valid"] else EXIT_TOLERANCE


def _cmd_list(args):
    for name in bundled_configs():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maxpatch", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("mesh", help="generate a case mesh and print its summary")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="write the mesh to this file")
    p.set_defaults(func=_cmd_mesh)
    p = sub.add_parser("solve", help="run a case and write probe CSVs plus report.json")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (default <config>_out)")
    p.set_defaults(func=_cmd_solve)
    p = sub.add_parser("oracle", help="write analytic reference CSVs at the case probes")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (default <config>_out)")
    p.set_defaults(func=_cmd_oracle)
    p = sub.add_parser("compare", help="error of curve A against reference curve B")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--tol", type=float, help="fail (exit 1) when the metric exceeds this")
    p.add_argument("--metric", choices=("linf", "l2"), default="linf")
    p.set_defaults(func=_cmd_compare)
    p = sub.add_parser("inspect", help="summarise and validate a mesh file")
    p.add_argument("mesh")
    p.set_defaults(func=_cmd_inspect)
    p = sub.add_parser("configs", help="list bundled case configs")
    p.set_defaults(func=_cmd_list)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LinearSolveError, SeriesError, DegenerateElementError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, MeshError, ProbeError, AssemblyError, ConstraintConflictError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

"""Time-harmonic driver: assemble, solve, reconstruct ``E = A + grad psi`` and sample probes."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import assembly
from .assembly import AMPLITUDE, CONVENTIONAL
from .dofmap import NSLOT, ConstraintSpec, DofMap, apply_pec, apply_symmetry_patch, build_dof_map
from .elements import map_physical, reference_center, reference_element, shape_gradients, shape_values, \
    inside_reference
from .meshgen import PEC, Mesh, MeshError, mirror_probe
from .model import HarmonicWaveSpec, Material, SphericalPoint, plane_wave_field
from .sparsela import Factorization, LinearSolveReport

log = logging.getLogger(__name__)


class ProbeError(ValueError):
    pass


# ---------------------------------------------------------------- point location

class PointLocator:
    """Find ``(element, xi)`` for physical points by centroid search + Newton inversion.

    Patch elements are searched last so points on a symmetry plane are evaluated
    from the main domain.
    """

    def __init__(self, mesh: Mesh, k: int = 12):
        self.mesh = mesh
        self.k = min(k, mesh.n_elements)
        cents = np.zeros((mesh.n_elements, 3))
        rad = np.zeros(mesh.n_elements)
        for kind, (ids, conn) in mesh.groups().items():
            g = mesh.nodes[conn]
            cents[ids] = map_physical(g, kind, reference_center(kind), check=False).x[:, 0]
            rad[ids] = np.linalg.norm(g - cents[ids][:, None], axis=-1).max(axis=1)
        self.centroids = cents
        self.radius = rad
        self.tree = cKDTree(cents)
        patch = mesh.node_sets.get("patch_volume")
        self.is_patch = np.zeros(mesh.n_elements, dtype=bool)
        if patch is not None and len(patch):
            pset = np.zeros(mesh.n_nodes, dtype=bool)
            pset[patch] = True
            self.is_patch = np.array([pset[c].all() for c in mesh.conn])

    def _newton(self, e, x, tol=1e-12, maxit=40):
        kind = self.mesh.kinds[e]
        geom = self.mesh.nodes[self.mesh.conn[e]]
        xi = reference_center(kind).copy()
        scale = max(self.radius[e], 1e-300)
        for _ in range(maxit):
            N = shape_values(kind, xi[None])[0]
            dN = shape_gradients(kind, xi[None])[0]
            r = N @ geom - x
            J = geom.T @ dN
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                return None
            xi = xi - step
            if np.abs(xi).max() > 10:
                return None
            if np.linalg.norm(r) < tol * scale and np.abs(step).max() < 1e-10:
                return xi
        return xi if np.linalg.norm(N @ geom - x) < 1e-8 * scale else None

    def locate(self, x, tol: float = 1e-8):
        x = np.asarray(x, dtype=float)
        _, cand = self.tree.query(x, k=self.k)
        cand = np.atleast_1d(cand)
        cand = sorted(cand, key=lambda e: (self.is_patch[e],))
        for e in cand:
            if np.linalg.norm(x - self.centroids[e]) > 1.5 * self.radius[e] + 1e-12:
                continue
            xi = self._newton(int(e), x)
            if xi is not None and inside_reference(self.mesh.kinds[e], xi, tol):
                return int(e), xi
        return None


# --------------------------------------------------------------------- solution

@dataclass
class HarmonicProblem:
    mesh: Mesh
    wave: HarmonicWaveSpec
    materials: dict = field(default_factory=dict)
    formulation: str = CONVENTIONAL
    alpha: float = 1.0
    symmetry: Sequence = ()                 # (axis, value) planes carrying thin patches
    pec_tag: Optional[str] = PEC
    solver: str = "direct"
    order: int = 3


@dataclass
class HarmonicSolution:
    mesh: Mesh
    dofmap: DofMap
    values: np.ndarray                      # (N, 4) Cartesian nodal (A, psi) or (Abar, psibar)
    formulation: str
    wave: HarmonicWaveSpec
    k: float
    symmetry: Sequence = ()
    report: Optional[LinearSolveReport] = None
    timings: dict = field(default_factory=dict)
    _locator: Optional[PointLocator] = None

    @property
    def free_count(self) -> int:
        return self.dofmap.free_count

    @property
    def locator(self) -> PointLocator:
        if self._locator is None:
            self._locator = PointLocator(self.mesh)
        return self._locator


def build_constraints(mesh: Mesh, symmetry=(), pec_tag=PEC, homogeneous=False) -> DofMap:
    cons = ConstraintSpec()
    if pec_tag is not None and mesh.facets_with(pec_tag):
        apply_pec(cons, mesh, pec_tag, homogeneous=homogeneous, planes=symmetry)
    if symmetry:
        apply_symmetry_patch(cons, mesh)
    if not cons.psi_values:
        for nid in gauge_nodes(mesh):
            cons.constrain_psi(nid, 0.0)
    return build_dof_map(mesh, cons)


def gauge_nodes(mesh: Mesh) -> list:
    """Four non-coplanar nodes that fix the affine gauge modes.

    ``(A, psi) = (b, -b.x - c)`` gives ``E = 0`` and lies exactly in the discrete
    space, so without any psi condition (no conductor, no patch) the system has a
    four-dimensional null space.  Setting ``psi = 0`` at four affinely independent
    nodes removes it without changing ``E``.
    """
    x = mesh.nodes
    cand = [int(np.argmax(x[:, 0])), int(np.argmax(x[:, 1])), int(np.argmax(x[:, 2])),
            int(np.argmin(x[:, 2])), int(np.argmin(x[:, 0])), int(np.argmin(x[:, 1]))]
    for combo in itertools.combinations(dict.fromkeys(cand), 4):
        if np.linalg.matrix_rank(x[list(combo[1:])] - x[combo[0]], tol=1e-9 * mesh.diameter()) == 3:
            return list(combo)
    raise MeshError("mesh nodes are coplanar; cannot fix the potential gauge")


def solve_harmonic(problem, dofmap: Optional[DofMap] = None) -> HarmonicSolution:
    """Assemble and solve one harmonic scattering problem.

    ``problem`` is a :class:`HarmonicProblem` or any object with a
    ``harmonic_problem()`` method (case configurations).
    """
    if not isinstance(problem, HarmonicProblem):
        problem = problem.harmonic_problem()
    t0 = time.perf_counter()
    mesh = problem.mesh
    dm = dofmap or build_constraints(mesh, problem.symmetry, problem.pec_tag)
    wave = problem.wave

    def incident(x):
        return plane_wave_field(wave, x)

    t1 = time.perf_counter()
    sys_ = assembly.assemble_harmonic(mesh, dm, problem.materials, wave.k0, problem.formulation,
                                      problem.alpha, incident, True, problem.order)
    t2 = time.perf_counter()
    x, rep = Factorization(sys_.K, problem.solver).solve(sys_.F)
    t3 = time.perf_counter()
    vals = dm.to_global(sys_.expand(x))
    log.info("harmonic solve: %d equations, residual %.2e, %.1fs", dm.free_count,
             rep.residual_norm_relative, t3 - t0)
    return HarmonicSolution(mesh, dm, vals, problem.formulation, wave, wave.k0, tuple(problem.symmetry),
                            rep, {"dofmap": t1 - t0, "assembly": t2 - t1, "solve": t3 - t2})


def _element_field(sol: HarmonicSolution, e: int, xi, with_curl=False):
    mesh = sol.mesh
    kind = mesh.kinds[e]
    conn = mesh.conn[e]
    m = map_physical(mesh.nodes[conn], kind, xi)
    N = shape_values(kind, xi[None])[0]
    G = m.grads[0]
    u = sol.values[conn]
    A = N @ u[:, :3]
    gpsi = G.T @ u[:, 3]
    curlA = np.sum(np.cross(G, u[:, :3]), axis=0) if with_curl else None
    if sol.formulation == CONVENTIONAL:
        return A + gpsi, curlA
    x = m.x[0]
    r = np.linalg.norm(x)
    f = np.exp(-1j * sol.k * r) / r
    g = -(1j * sol.k + 1.0 / r) * x / r
    psi = N @ u[:, 3]
    E = f * (A + gpsi + psi * g)
    if with_curl:
        curlA = f * (curlA + np.cross(g, A))
    return E, curlA


def mirror_into_domain(mesh: Mesh, symmetry, x):
    """Map ``x`` into the meshed side of each symmetry plane.

    Returns the mapped point and the accumulated sign flips of a polar vector.
    """
    signs = np.ones(3)
    x = np.asarray(x, dtype=float)
    lo, hi = mesh.nodes.min(0), mesh.nodes.max(0)
    for axis, value in symmetry:
        inside_side = 1.0 if hi[axis] - value > value - lo[axis] else -1.0
        if (x[axis] - value) * inside_side < 0:
            x, s = mirror_probe(x, axis, value)
            signs = signs * s
    return x, signs


def _mirror(sol, x):
    return mirror_into_domain(sol.mesh, sol.symmetry, x)


def point_basis(mesh: Mesh, locator: PointLocator, x):
    """``(conn, N, grad N)`` of the element containing ``x``; ``ProbeError`` outside the mesh."""
    hit = locator.locate(x)
    if hit is None:
        raise ProbeError(f"point {np.asarray(x).tolist()} is outside the mesh")
    e, xi = hit
    kind = mesh.kinds[e]
    conn = np.asarray(mesh.conn[e])
    m = map_physical(mesh.nodes[conn], kind, xi[None])
    return conn, shape_values(kind, xi[None])[0], m.grads[0]


def eval_E(sol: HarmonicSolution, x) -> np.ndarray:
    """Scattered (or radiated) field at a point, mirrored into a symmetric domain if needed."""
    xm, signs = _mirror(sol, x)
    hit = sol.locator.locate(xm)
    if hit is None:
        raise ProbeError(f"point {np.asarray(x).tolist()} is outside the mesh")
    E, _ = _element_field(sol, hit[0], hit[1])
    return E * signs


def eval_H(sol: HarmonicSolution, x, mu_r: float = 1.0) -> np.ndarray:
    """``H = i curl A / (omega mu)`` (``exp(+i omega t)``), with mirror sign handling."""
    xm, signs = _mirror(sol, x)
    hit = sol.locator.locate(xm)
    if hit is None:
        raise ProbeError(f"point {np.asarray(x).tolist()} is outside the mesh")
    _, curlA = _element_field(sol, hit[0], hit[1], with_curl=True)
    H = 1j * curlA / (sol.wave.omega * mu_r * sol.wave.constants.mu0)
    # H is a pseudovector: its mirror flips the two in-plane components
    return H * (-signs if np.any(signs < 0) else signs)


# ---------------------------------------------------------------------- probes

@dataclass(frozen=True)
class Sweep:
    """Spherical sweep: ``swept`` in {"theta", "phi"} over ``[start, stop]``, other coords fixed."""

    r: float
    swept: str
    fixed: float
    start: float
    stop: float
    count: int

    def coords(self) -> np.ndarray:
        if self.count < 1:
            raise ValueError("sweep needs at least one sample")
        return np.linspace(self.start, self.stop, self.count) if self.count > 1 else np.array([self.start])

    def points(self) -> np.ndarray:
        out = []
        for c in self.coords():
            th, ph = (c, self.fixed) if self.swept == "theta" else (self.fixed, c)
            out.append(SphericalPoint(self.r, th, ph).to_cartesian())
        return np.array(out)


def probe_line(sol, sweep: Sweep, evaluator=None):
    """Return ``(coords, E)`` along a sweep; ``evaluator`` defaults to :func:`eval_E`."""
    evaluator = evaluator or eval_E
    pts = sweep.points()
    return sweep.coords(), np.array([evaluator(sol, p) for p in pts])


def write_probe_csv(path, coords, E) -> None:
    from .oracles import write_field_csv
    write_field_csv(path, coords, E)


def read_probe_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "coord":
        raise ValueError(f"{path}: not a probe CSV")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r])
    if data.size == 0:
        return np.zeros(0), np.zeros((0, 3), dtype=complex)
    E = data[:, 1::2] + 1j * data[:, 2::2]
    return data[:, 0], E


def symmetry_plane_residual(sol: HarmonicSolution, axis: int = 1, value: float = 0.0, n: int = 400,
                            seed: int = 0):
    """``max |E.n|`` over ``max |E|`` at random points of the symmetry plane.

    Points are drawn on the plane faces of main-domain elements, so the patch layer
    itself is never sampled.
    """
    rng = np.random.default_rng(seed)
    mesh = sol.mesh
    loc = sol.locator
    tol = 1e-9 * mesh.diameter()
    faces = []
    for e in range(mesh.n_elements):
        if loc.is_patch[e]:
            continue
        geom = mesh.nodes[mesh.conn[e]]
        ref = reference_element(mesh.kinds[e])
        for locs, _ in ref.faces:
            fg = geom[list(locs)]
            # collapsed faces (a whole face mapped to the origin) lie on every plane
            if np.all(np.abs(fg[:, axis] - value) < tol) and np.ptp(fg, axis=0).max() > tol:
                faces.append((e, ref.node_local_coords[list(locs)]))
    if not faces:
        raise ProbeError(f"no element faces on the plane x[{axis}] = {value}")
    vals_n, vals = [], []
    for _ in range(n):
        e, xi_face = faces[rng.integers(len(faces))]
        xi = rng.dirichlet(np.ones(len(xi_face))) @ xi_face
        E, _ = _element_field(sol, e, xi)
        vals_n.append(abs(E[axis]))
        vals.append(np.linalg.norm(E))
    return float(max(vals_n) / max(vals))

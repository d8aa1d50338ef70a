"""Time-domain driver for the potential system.

The semi-discrete equations are

    M a + C v + K u = f(t),      v = du/dt,  a = dv/dt,

with ``u`` the nodal (A, psi) values, ``M`` the permittivity mass over
``A + grad psi``, ``K`` curl-curl plus gauge regularization and ``C`` the first-order
absorbing boundary term.  All rows carry a factor ``mu0``.  The electric field is
``E = -v_A - grad(psi_dot)``.  Steps use the implicit midpoint rule (Newmark with
``beta = 1/4, gamma = 1/2``), which conserves ``1/2 v'Mv + 1/2 u'Ku`` exactly when
``C = 0`` and ``f = 0``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import assembly
from .dofmap import NSLOT, DofMap
from .harmonic import PointLocator, build_constraints, mirror_into_domain, point_basis
from .meshgen import ABC, PEC, Mesh
from .model import (DEFAULT_CONSTANTS, Material, NeumannPulseSpec, PhysicalConstants, neumann_pulse,
                    neumann_pulse_integral)
from .oracles import cavity_fields
from .sparsela import Factorization

log = logging.getLogger(__name__)

QUANTITIES = ("E", "dE/dt", "E.t")


# ------------------------------------------------------------------ operators

@dataclass
class TransientBlocks:
    """``M``, ``C``, ``K`` rotated to the nodal frames of ``dofmap`` (all slots)."""

    M: sp.csr_matrix
    C: sp.csr_matrix
    K: sp.csr_matrix
    dofmap: DofMap

    def split(self, A):
        return assembly.split(A, self.dofmap)


def assemble_transient(mesh: Mesh, dofmap: DofMap, materials=None, alpha: float = 1.0,
                       constants: PhysicalConstants = DEFAULT_CONSTANTS, order: int = 3) -> TransientBlocks:
    mats = assembly.material_array(mesh, materials or {})
    c = constants.c
    # one pass per operator keeps peak memory at a single triplet buffer
    M = assembly.assemble_volume(mesh, lambda g, kind, ids: assembly.transient_blocks(
        g, kind, [mats[i] for i in ids], alpha, c, order, ids)[0], float, order)
    K = assembly.assemble_volume(mesh, lambda g, kind, ids: assembly.transient_blocks(
        g, kind, [mats[i] for i in ids], alpha, c, order, ids)[1], float, order)

    def face(g, kind, f, e):
        mat = mats[e]
        coef = math.sqrt(mat.eps_r * mat.mu_r) / (mat.mu_r * c)
        return coef * assembly.abc_pattern(g, kind, f)
    C = assembly.assemble_faces(mesh, ABC, face, float)
    rot = lambda A: assembly.rotate(A, dofmap)
    return TransientBlocks(rot(M), rot(C), rot(K), dofmap)


def cfl_estimate(mesh: Mesh, constants: PhysicalConstants = DEFAULT_CONSTANTS, materials=None) -> float:
    """Explicit-scheme time-step scale ``h_min / (c_max sqrt(3))``.

    ``h_min`` is the smallest distance between distinct nodes of one element, so
    the mid-side nodes of quadratic elements are counted.
    """
    mats = assembly.material_array(mesh, materials or {})
    h = np.inf
    for kind, (ids, conn) in mesh.groups().items():
        g = mesh.nodes[conn]
        d = np.linalg.norm(g[:, :, None] - g[:, None], axis=-1)
        d[d == 0.0] = np.inf
        h = min(h, d.min())
    vmax = constants.c / min(math.sqrt(m.eps_r * m.mu_r) for m in mats)
    return float(h / (vmax * math.sqrt(3.0)))


# -------------------------------------------------------------------- sources

class CavitySource:
    """Closed-form driven standing wave in the ``pi``-cube with conducting walls.

    The analytic pair satisfies ``eps A'' + curl(curl A / mu) = j`` with ``psi = 0``,
    so the load is ``mu0 * int j . (F + grad phi)``.
    """

    def __init__(self, omega: float, material: Material = Material(),
                 constants: PhysicalConstants = DEFAULT_CONSTANTS):
        self.omega = omega
        self.material = material
        self.constants = constants
        self._src = None

    def bind(self, mesh: Mesh, materials, order: int = 3):
        self._src = assembly.volume_source(mesh, order=order)
        return self

    def fields(self, x, t):
        return cavity_fields(x, t, self.omega, self.material, self.constants)

    def initial(self, x):
        """Nodal ``(A, dA/dt)`` at ``t = 0``; ``psi = 0`` so ``dA/dt = -E``."""
        f = self.fields(x, 0.0)
        return f.A, -f.E

    def load(self, t):
        j = self.fields(self._src.points, t).j
        return self.constants.mu0 * self._src.load(j)

    def lift(self, dofmap: DofMap, t):
        return None


class PulseSource:
    """Scattered-field excitation by a plane Neumann pulse.

    PEC surfaces get time-dependent tangential lifts ``A_t = int E_inc,t dt`` and
    dielectric regions a contrast load ``(eps_r - 1)/c^2 int dE_inc/dt . (F + grad phi)``.
    """

    def __init__(self, spec: NeumannPulseSpec):
        self.spec = spec
        self._src = None
        self._has_pec = False

    def bind(self, mesh: Mesh, materials, order: int = 3):
        mats = assembly.material_array(mesh, materials or {})
        contrast = np.array([m.eps_r - 1.0 for m in mats])
        if any(m.mu_r != 1.0 for m, c in zip(mats, contrast) if c != 0.0):
            raise assembly.AssemblyError("dielectric contrast source assumes mu_r = 1 inside the scatterer")
        ids = np.flatnonzero(contrast != 0.0)
        self._src = assembly.volume_source(mesh, ids, order, weights=contrast) if len(ids) else None
        self._has_pec = bool(mesh.facets_with(PEC))
        return self

    def initial(self, x):
        return None

    def incident(self, x, t):
        return neumann_pulse(self.spec, t, x)

    def load(self, t):
        if self._src is None:
            return None
        _, dE = neumann_pulse(self.spec, t, self._src.points)
        return self._src.load(dE) / self.spec.constants.c**2

    def lift(self, dofmap: DofMap, t):
        """Local-frame constrained ``(u, v)`` at time ``t``."""
        if not self._has_pec:
            return None
        s = self.spec
        u = dofmap.constrained_values(lambda x: -neumann_pulse_integral(s, t, x))
        v = dofmap.constrained_values(lambda x: -neumann_pulse(s, t, x)[0])
        return u, v


# ---------------------------------------------------------------------- state

@dataclass
class TransientState:
    """Nodal values at ``time`` in the local frames of the dof map, shape ``(N, 4)``.

    ``u`` holds (A, psi) and ``v`` their time derivatives (dA/dt, dpsi/dt).
    """

    time: float
    u: np.ndarray
    v: np.ndarray

    def cartesian(self, dofmap: DofMap):
        """``(A, psi, v, psi_dot)`` with Cartesian vector components."""
        U, V = dofmap.to_global(self.u), dofmap.to_global(self.v)
        return U[:, :3], U[:, 3], V[:, :3], V[:, 3]


def init_state(mesh: Mesh, dofmap: DofMap, source=None, t0: float = 0.0) -> TransientState:
    """Zero state, or the source's initial potentials sampled at the nodes."""
    u = np.zeros((mesh.n_nodes, NSLOT))
    v = np.zeros_like(u)
    init = source.initial(mesh.nodes) if source is not None else None
    if init is not None:
        u[:, :3], v[:, :3] = init
    u, v = dofmap.to_local(u), dofmap.to_local(v)
    if source is not None:
        lift = source.lift(dofmap, t0)
        if lift is not None:
            c = dofmap.constrained_index()
            u.reshape(-1)[c] = lift[0].reshape(-1)[c]
            v.reshape(-1)[c] = lift[1].reshape(-1)[c]
    return TransientState(t0, u, v)


def discrete_energy(state: TransientState, blocks: TransientBlocks) -> float:
    """``1/2 v'Mv + 1/2 u'Ku`` (all slots, local frames; rotation invariant)."""
    u, v = state.u.reshape(-1), state.v.reshape(-1)
    return float(0.5 * v @ (blocks.M @ v) + 0.5 * u @ (blocks.K @ u))


class MidpointStepper:
    """Implicit midpoint step with a factorization reused across steps.

    Free rows solve

        (2M/dt^2 + C/dt + K/2) u1 = (f0 + f1)/2 + 2M u0/dt^2 + 2M v0/dt + C u0/dt - K u0/2

    and ``v1 = 2 (u1 - u0)/dt - v0``.  Loads are averaged over the step ends
    (trapezoidal form).  Constrained slots take their lift values at both ends of
    the step and enter through the same relations.
    """

    def __init__(self, blocks: TransientBlocks, dt: float, source=None, solver: str = "direct"):
        if not dt > 0:
            raise ValueError("time step must be positive")
        self.blocks = blocks
        self.dt = dt
        self.source = source
        dm = blocks.dofmap
        self.f = dm.free_index()
        self.c = dm.constrained_index()
        self.Mff, self.Mfc = blocks.split(blocks.M)
        self.Cff, self.Cfc = blocks.split(blocks.C)
        self.Kff, self.Kfc = blocks.split(blocks.K)
        L = 2.0 / dt**2 * self.Mff + self.Cff / dt + 0.5 * self.Kff
        self.factor = Factorization(L.tocsc(), solver)
        self.last_report = None
        self._load_cache = (None, None)

    def _load(self, t):
        """Free-row load at ``t`` (local frames); the end-of-step value is reused."""
        if self._load_cache[0] == t:
            return self._load_cache[1]
        load = self.source.load(t) if self.source is not None else None
        if load is not None:
            load = self.blocks.dofmap.to_local(np.asarray(load).reshape(-1, NSLOT)).reshape(-1)[self.f]
        self._load_cache = (t, load)
        return load

    def step(self, state: TransientState) -> TransientState:
        dt, f, c = self.dt, self.f, self.c
        u0, v0 = state.u.reshape(-1), state.v.reshape(-1)
        t1 = state.time + dt
        u1, v1 = np.zeros_like(u0), np.zeros_like(v0)
        rhs = (2.0 / dt**2) * (self.Mff @ u0[f]) + (2.0 / dt) * (self.Mff @ v0[f]) \
            + (self.Cff @ u0[f]) / dt - 0.5 * (self.Kff @ u0[f])
        if self.source is not None:
            f0 = self._load(state.time)
            f1 = self._load(t1)
            if f0 is not None:
                rhs = rhs + 0.5 * (f0 + f1)
            lift = self.source.lift(self.blocks.dofmap, t1)
            if lift is not None:
                u1[c] = lift[0].reshape(-1)[c]
                v1[c] = lift[1].reshape(-1)[c]
        if len(c) and (np.any(u0[c]) or np.any(u1[c]) or np.any(v0[c]) or np.any(v1[c])):
            rhs = rhs - self.Mfc @ (v1[c] - v0[c]) / dt - 0.5 * (self.Cfc @ (v0[c] + v1[c])) \
                - 0.5 * (self.Kfc @ (u0[c] + u1[c]))
        x, self.last_report = self.factor.solve(rhs)
        u1[f] = x
        v1[f] = 2.0 * (x - u0[f]) / dt - v0[f]
        shape = state.u.shape
        return TransientState(t1, u1.reshape(shape), v1.reshape(shape))


# --------------------------------------------------------------------- probes

@dataclass
class ProbeSpec:
    point: tuple
    quantity: str = "E"
    direction: Optional[tuple] = None
    total: bool = False          # add the analytic incident field (pulse sources)

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown probe quantity {self.quantity!r}")
        if self.quantity == "E.t" and self.direction is None:
            raise ValueError("E.t probe needs a direction")


@dataclass
class ProbeSeries:
    """Samples of one probe; ``values`` is ``(n, 3)`` for E and dE/dt, ``(n,)`` for E.t."""

    spec: ProbeSpec
    times: np.ndarray
    values: np.ndarray

    def component(self, i: int) -> np.ndarray:
        return self.values if self.values.ndim == 1 else self.values[:, i]


class FieldProbe:
    """Linear map from local nodal velocities to ``E = -v_A - grad psi_dot`` at fixed points."""

    def __init__(self, mesh: Mesh, dofmap: DofMap, points, symmetry=(), locator=None):
        locator = locator or PointLocator(mesh)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rows, cols, vals = [], [], []
        for p, x in enumerate(pts):
            xm, signs = mirror_into_domain(mesh, symmetry, x)
            conn, N, G = point_basis(mesh, locator, xm)
            for d in range(3):
                r = 3 * p + d
                rows += [r] * (2 * len(conn))
                cols += list(NSLOT * conn + d) + list(NSLOT * conn + 3)
                vals += list(-signs[d] * N) + list(-signs[d] * G[:, d])
        P = sp.csr_matrix((vals, (rows, cols)), shape=(3 * len(pts), dofmap.total_slots))
        self.P = (P @ dofmap.rotation().T).tocsr()
        self.points = pts

    def __call__(self, state: TransientState) -> np.ndarray:
        return (self.P @ state.v.reshape(-1)).reshape(-1, 3)


def backward_derivative(times, values) -> np.ndarray:
    """Second-order backward differences on a uniform grid (first-order at the start)."""
    times = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    d = np.zeros_like(y)
    if len(times) < 2:
        return d
    dt = times[1] - times[0]
    d[1] = (y[1] - y[0]) / dt
    d[0] = d[1]
    if len(times) > 2:
        d[2:] = (3 * y[2:] - 4 * y[1:-1] + y[:-2]) / (2 * dt)
    return d


# ------------------------------------------------------------------------ run

@dataclass
class TransientProblem:
    mesh: Mesh
    source: object = None
    materials: dict = field(default_factory=dict)
    dt: float = 1e-9
    steps: int = 40
    alpha: float = 1.0
    symmetry: Sequence = ()
    pec_tag: Optional[str] = PEC
    homogeneous_pec: bool = False
    constants: PhysicalConstants = DEFAULT_CONSTANTS
    solver: str = "direct"
    order: int = 3


@dataclass
class TransientResult:
    series: list
    state: TransientState
    blocks: TransientBlocks
    free_count: int
    energy: np.ndarray
    timings: dict
    residual: float = 0.0           # worst relative linear residual over the steps


def run(problem, probes: Sequence[ProbeSpec] = (), dofmap: Optional[DofMap] = None,
        callback=None) -> TransientResult:
    """Integrate ``problem.steps`` steps and sample the probes after every step.

    ``problem`` is a :class:`TransientProblem` or provides ``transient_problem()``.
    ``callback(state)`` is called after each step.
    """
    if not isinstance(problem, TransientProblem):
        problem = problem.transient_problem()
    if problem.steps < 0:
        raise ValueError("step count must be non-negative")
    t0 = time.perf_counter()
    mesh = problem.mesh
    pec = problem.pec_tag if problem.pec_tag and mesh.facets_with(problem.pec_tag) else None
    dm = dofmap or build_constraints(mesh, problem.symmetry, pec, homogeneous=problem.homogeneous_pec)
    blocks = assemble_transient(mesh, dm, problem.materials, problem.alpha, problem.constants, problem.order)
    src = problem.source.bind(mesh, problem.materials, problem.order) if problem.source is not None else None
    t1 = time.perf_counter()
    stepper = MidpointStepper(blocks, problem.dt, src, problem.solver)
    state = init_state(mesh, dm, src)
    t2 = time.perf_counter()

    probe_op = FieldProbe(mesh, dm, [p.point for p in probes], problem.symmetry) if probes else None
    times = [state.time]
    samples = [probe_op(state)] if probe_op else []
    energy = [discrete_energy(state, blocks)]
    worst = 0.0
    for _ in range(problem.steps):
        state = stepper.step(state)
        worst = max(worst, stepper.last_report.residual_norm_relative)
        times.append(state.time)
        if probe_op:
            samples.append(probe_op(state))
        energy.append(discrete_energy(state, blocks))
        if callback is not None:
            callback(state)
    t3 = time.perf_counter()
    times = np.array(times)
    series = []
    if probe_op:
        E = np.array(samples)                                   # (steps+1, nprobe, 3)
        for i, p in enumerate(probes):
            Ei = E[:, i]
            if p.total and isinstance(src, PulseSource):
                Ei = Ei + np.array([src.incident(np.asarray(p.point), t)[0] for t in times])
            if p.quantity == "E":
                vals = Ei
            elif p.quantity == "dE/dt":
                vals = backward_derivative(times, Ei)
            else:
                d = np.asarray(p.direction, dtype=float)
                vals = Ei @ d
            series.append(ProbeSeries(p, times, vals))
    log.info("transient run: %d equations, %d steps, %.1fs", dm.free_count, problem.steps, t3 - t0)
    return TransientResult(series, state, blocks, dm.free_count, np.array(energy),
                           {"assembly": t1 - t0, "factor": t2 - t1, "steps": t3 - t2}, worst)


def write_series_csv(path, times, values) -> None:
    """``time_s,value`` rows for one scalar series."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "value"])
        for t, v in zip(times, values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_series_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["time_s", "value"]:
        raise ValueError(f"{path}: not a time-series CSV")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]]) if len(rows) > 1 else np.zeros((0, 2))
    return data[:, 0], data[:, 1]

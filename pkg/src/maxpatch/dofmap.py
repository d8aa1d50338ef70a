"""Equation numbering over the four nodal slots (Ax, Ay, Az, psi) and Dirichlet data.

Vector-potential constraints are stored as ``(node, direction, value)`` records.  A
node whose constrained directions are not coordinate axes (curved conductors) gets a
rotated local frame whose leading rows span the constrained directions, so every
constraint becomes a single-slot condition.  Global vectors are node-major with four
slots per node: ``index = 4 * node + slot``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .elements import face_measure, face_quadrature, map_physical, reference_element
from .meshgen import PEC, SYM_PATCH_OUTER, Mesh, MeshError, tag_axis

NSLOT = 4
PSI = 3
_DIR_TOL = 1e-8
_NORMAL_SPLIT = np.cos(np.deg2rad(20.0))


class ConstraintConflictError(ValueError):
    pass


@dataclass
class ConstraintSpec:
    """Collected Dirichlet conditions before numbering.

    ``a_records`` hold ``(node, unit direction, value)``; a value of ``None`` means
    the PEC lift ``-direction . E_inc(x_node)`` evaluated later from the incident
    field, so the same map serves harmonic and time-dependent data.
    """

    a_records: list = field(default_factory=list)
    psi_values: dict = field(default_factory=dict)

    def constrain_a(self, node: int, direction, value=0.0) -> None:
        d = np.asarray(direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("constraint direction must be non-zero")
        v = None if value is None else value / n
        self.a_records.append((int(node), d / n, v))

    def constrain_psi(self, node: int, value=0.0) -> None:
        node = int(node)
        old = self.psi_values.get(node)
        if old is not None and abs(old - value) > 1e-12 * (1.0 + abs(value)):
            raise ConstraintConflictError(f"psi at node {node}: {old} vs {value}")
        self.psi_values[node] = value


# -------------------------------------------------------------- constraint builders

def apply_symmetry_patch(constraints: ConstraintSpec, mesh: Mesh) -> ConstraintSpec:
    """``A.n = 0`` on every patch outer-face node and ``psi = 0`` on the patch volume."""
    outer = mesh.facets_with(SYM_PATCH_OUTER)
    vol = mesh.node_sets.get("patch_volume", np.zeros(0, dtype=int))
    if not outer or len(vol) == 0:
        raise MeshError("mesh has no thin patch (SYM_PATCH_OUTER facets / patch_volume set)")
    for e, f, tag in outer:
        n = np.zeros(3)
        n[tag_axis(tag)] = 1.0
        for nid in mesh.facet_nodes(e, f):
            constraints.constrain_a(nid, n, 0.0)
    for nid in vol:
        constraints.constrain_psi(nid, 0.0)
    return constraints


def _tangents(n):
    k = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = np.cross(e, n)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def node_normals(mesh: Mesh, tag: str, planes=()):
    """Outward unit normals of tagged facets, clustered per node.

    Returns ``{node: [normals]}``; normals from adjacent facets closer than 20 degrees
    are averaged, sharper folds (cube edges and corners) stay separate.  At nodes on
    one of the symmetry ``planes`` (``(axis, value)`` pairs) only one side of the
    surface is meshed, so the plane-normal component of each facet normal is dropped
    before averaging; otherwise the one-sided average tilts out of the plane.
    """
    raw = {}
    scale = mesh.diameter() if planes else 1.0
    for e, f, _ in mesh.facets_with(tag):
        kind = mesh.kinds[e]
        ref = reference_element(kind)
        loc = list(ref.faces[f][0])
        xi = ref.node_local_coords[loc]
        # pull the evaluation points slightly inside the face to avoid collapsed corners
        xi = xi + 1e-6 * (xi.mean(0) - xi)
        geom = mesh.nodes[mesh.conn[e]]
        m = map_physical(geom, kind, xi, check=False)
        normals, _ = face_measure(m.J, m.detJ, face_quadrature(kind, f).normal)
        for nid, nv in zip(np.asarray(mesh.conn[e])[loc], normals):
            for axis, value in planes:
                if abs(mesh.nodes[nid, axis] - value) < 1e-9 * scale and abs(nv[axis]) < 1 - 1e-6:
                    nv = nv.copy()
                    nv[axis] = 0.0
                    nv /= np.linalg.norm(nv)
            raw.setdefault(int(nid), []).append(nv)
    out = {}
    for nid, lst in raw.items():
        clusters = []
        for nv in lst:
            for c in clusters:
                if c[0] @ nv > _NORMAL_SPLIT:
                    c[1].append(nv)
                    break
            else:
                clusters.append((nv, [nv]))
        out[nid] = [np.mean(c[1], axis=0) / np.linalg.norm(np.mean(c[1], axis=0)) for c in clusters]
    return out


def apply_pec(constraints: ConstraintSpec, mesh: Mesh, surface_tag: str = PEC,
              homogeneous: bool = False, planes=()) -> ConstraintSpec:
    """Tangential ``A`` and ``psi`` constrained on a conductor.

    With ``homogeneous`` the tangential values are zero (cavities, radiation);
    otherwise they are the scattered-field lift ``-t . E_inc`` supplied when the
    constrained values are evaluated.
    """
    normals = node_normals(mesh, surface_tag, planes)
    if not normals:
        raise MeshError(f"no facets tagged {surface_tag}")
    val = 0.0 if homogeneous else None
    for nid in sorted(normals):
        for n in normals[nid]:
            for t in _tangents(n):
                constraints.constrain_a(nid, t, val)
        constraints.constrain_psi(nid, 0.0)
    return constraints


# --------------------------------------------------------------------- numbering

@dataclass
class DofMap:
    """Per-node slot table.  ``eq[node, slot]`` is the free equation index or -1."""

    eq: np.ndarray
    free_count: int
    frames: dict                    # node -> 3x3 rotation, rows = local axes
    node_xyz: np.ndarray
    # per constrained A slot: (node, local slot, direction matrix D, fixed values b or None)
    _a_groups: list
    _psi: dict

    @property
    def n_nodes(self) -> int:
        return len(self.eq)

    @property
    def total_slots(self) -> int:
        return NSLOT * self.n_nodes

    @property
    def constrained_count(self) -> int:
        return self.total_slots - self.free_count

    def free_index(self) -> np.ndarray:
        """Flat slot indices of the free equations, in equation order."""
        flat = self.eq.ravel()
        idx = np.flatnonzero(flat >= 0)
        return idx[np.argsort(flat[idx])]

    def constrained_index(self) -> np.ndarray:
        return np.flatnonzero(self.eq.ravel() < 0)

    def rotation(self) -> sp.csr_matrix:
        """Sparse ``T`` with ``u_local = T u_global`` (identity on unrotated nodes)."""
        n = self.total_slots
        rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.ones(n)]
        keep = np.ones(n, dtype=bool)
        for nid, R in self.frames.items():
            base = NSLOT * nid
            keep[base:base + 3] = False
            r, c = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
            rows.append(base + r.ravel())
            cols.append(base + c.ravel())
            vals.append(R.ravel())
        rows[0], cols[0], vals[0] = rows[0][keep], cols[0][keep], vals[0][keep]
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))

    def to_global(self, u_local: np.ndarray) -> np.ndarray:
        """Rotate ``(N, 4)`` local-frame values back to Cartesian components."""
        u = np.array(u_local, copy=True)
        for nid, R in self.frames.items():
            u[nid, :3] = R.T @ u_local[nid, :3]
        return u

    def to_local(self, u_global: np.ndarray) -> np.ndarray:
        u = np.array(u_global, copy=True)
        for nid, R in self.frames.items():
            u[nid, :3] = R @ u_global[nid, :3]
        return u

    def constrained_values(self, incident: Optional[Callable] = None, dtype=float) -> np.ndarray:
        """Local-frame Dirichlet values, ``(N, 4)``, zero on free slots.

        ``incident`` maps node coordinates ``(m, 3)`` to the incident field ``(m, 3)``;
        it feeds the scattered-field PEC lifts.  Without it those lifts are zero.
        """
        vals = np.zeros((self.n_nodes, NSLOT), dtype=dtype)
        if self._a_groups:
            nodes = np.array([g[0] for g in self._a_groups])
            if incident is not None:
                Einc = np.asarray(incident(self.node_xyz[nodes]))
                if np.iscomplexobj(Einc) and not np.issubdtype(dtype, np.complexfloating):
                    raise TypeError("complex incident field needs a complex dtype")
            for i, (nid, ncon, D, fixed, lifted) in enumerate(self._a_groups):
                b = np.array(fixed, dtype=dtype)
                if incident is not None and lifted.any():
                    b[lifted] = -(D[lifted] @ Einc[i])
                R = self.frames.get(nid)
                # least-squares solution of D a = b, then check consistency
                a = np.linalg.lstsq(D, b, rcond=None)[0]
                if np.linalg.norm(D @ a - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
                    raise ConstraintConflictError(f"inconsistent A constraints at node {nid}")
                loc = a if R is None else R @ a
                slots = self._constrained_slots(nid, ncon)
                vals[nid, slots] = loc[slots]
        for nid, v in self._psi.items():
            vals[nid, PSI] = v
        return vals

    def _constrained_slots(self, nid, ncon):
        return np.flatnonzero(self.eq[nid, :3] < 0)

    def expand(self, x_free: np.ndarray, lift: np.ndarray) -> np.ndarray:
        """Combine free-equation values and local Dirichlet values into ``(N, 4)`` local values."""
        u = np.array(lift, dtype=np.result_type(x_free, lift), copy=True)
        flat = u.reshape(-1)
        flat[self.free_index()] = x_free
        return u


def _axis_slot(d):
    k = int(np.argmax(np.abs(d)))
    return k if abs(abs(d[k]) - 1.0) < _DIR_TOL else None


def build_dof_map(mesh: Mesh, constraints: Optional[ConstraintSpec] = None) -> DofMap:
    """Number all unconstrained slots node by node (deterministic)."""
    constraints = constraints or ConstraintSpec()
    N = mesh.n_nodes
    per_node = {}
    for nid, d, v in constraints.a_records:
        if not 0 <= nid < N:
            raise IndexError(f"constraint on missing node {nid}")
        per_node.setdefault(nid, []).append((d, v))
    constrained = np.zeros((N, NSLOT), dtype=bool)
    frames = {}
    groups = []
    for nid in sorted(per_node):
        recs = per_node[nid]
        D = np.array([d for d, _ in recs])
        fixed = np.array([0.0 if v is None else v for _, v in recs], dtype=complex)
        lifted = np.array([v is None for _, v in recs])
        # identical directions with different explicit values conflict immediately
        for i in range(len(recs)):
            for j in range(i):
                if abs(abs(D[i] @ D[j]) - 1.0) < _DIR_TOL and not (lifted[i] or lifted[j]):
                    s = D[i] @ D[j]
                    if abs(fixed[i] - s * fixed[j]) > 1e-12 * (1.0 + abs(fixed[i])):
                        raise ConstraintConflictError(
                            f"node {nid}: conflicting values {fixed[j]} and {fixed[i]} on one direction")
        _, sv, Vt = np.linalg.svd(D)
        rank = int(np.sum(sv > _DIR_TOL * sv[0]))
        axes = [_axis_slot(d) for d in D]
        if rank == 3:
            constrained[nid, :3] = True
        elif all(a is not None for a in axes):
            constrained[nid, sorted(set(axes))] = True
        else:
            R = Vt.copy()
            if np.linalg.det(R) < 0:
                R[-1] *= -1.0
            frames[nid] = R
            constrained[nid, :rank] = True
        if not np.iscomplexobj(fixed) or not np.any(fixed.imag):
            fixed = fixed.real
        groups.append((nid, rank, D, fixed, lifted))
    for nid in constraints.psi_values:
        if not 0 <= nid < N:
            raise IndexError(f"constraint on missing node {nid}")
        constrained[nid, PSI] = True
    eq = np.full((N, NSLOT), -1, dtype=np.int64)
    free = ~constrained.ravel()
    eq.reshape(-1)[free] = np.arange(int(free.sum()))
    dm = DofMap(eq, int(free.sum()), frames, np.asarray(mesh.nodes, dtype=float), groups,
                dict(constraints.psi_values))
    # static consistency check of explicit values
    if not any(g[4].any() for g in groups):
        dm.constrained_values(dtype=complex)
    return dm

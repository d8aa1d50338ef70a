"""Structured quadratic meshes for the benchmark geometries and thin-patch synthesis.

Division counts passed to the generators are element counts.  Tables that quote
quadratic node intervals instead can be converted with :func:`to_elements`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .elements import (B27, W18, DegenerateElementError, map_physical, quadrature,
                       reference_center, reference_element)

PEC = "PEC"
ABC = "ABC"
DIELECTRIC_INTERFACE = "DIELECTRIC_INTERFACE"
SYMMETRY_PLANE = "SYMMETRY_PLANE"
SYM_PATCH_OUTER = "SYM_PATCH_OUTER"
AXES = "xyz"


def sym_patch_tag(axis: int) -> str:
    return f"{SYM_PATCH_OUTER}:{AXES[axis]}"


def tag_axis(tag: str):
    """Axis index carried by a ``SYM_PATCH_OUTER:<axis>`` tag, else ``None``."""
    if tag.startswith(SYM_PATCH_OUTER + ":"):
        return AXES.index(tag.split(":")[1])
    return None


class MeshError(ValueError):
    pass


def to_elements(n: int, convention: str = "elements") -> int:
    """Convert a table division count to an element count.

    ``"intervals"`` counts quadratic node intervals, so two intervals make one element.
    """
    if convention == "elements":
        return int(n)
    if convention == "intervals":
        if n % 2:
            raise MeshError(f"interval count {n} is odd; quadratic elements need pairs")
        return n // 2
    raise MeshError(f"unknown division convention {convention!r}")


@dataclass
class Mesh:
    nodes: np.ndarray
    kinds: list
    conn: list
    region: np.ndarray
    facets: list = field(default_factory=list)  # (element id, local face, tag)
    node_sets: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.conn)

    def groups(self):
        """``{kind: (element ids, connectivity array)}``."""
        out = {}
        for kind in (B27, W18):
            ids = np.array([i for i, k in enumerate(self.kinds) if k == kind], dtype=int)
            if len(ids):
                out[kind] = (ids, np.array([self.conn[i] for i in ids], dtype=int))
        return out

    def element_counts(self) -> dict:
        return {k: self.kinds.count(k) for k in (B27, W18) if self.kinds.count(k)}

    def tags(self) -> set:
        return {t for _, _, t in self.facets}

    def facets_with(self, tag_prefix: str):
        return [(e, f, t) for e, f, t in self.facets if t == tag_prefix or t.startswith(tag_prefix + ":")]

    def facet_nodes(self, e: int, f: int) -> np.ndarray:
        ref = reference_element(self.kinds[e])
        return np.asarray(self.conn[e])[list(ref.faces[f][0])]

    def tagged_nodes(self, tag_prefix: str) -> np.ndarray:
        ids = [self.facet_nodes(e, f) for e, f, _ in self.facets_with(tag_prefix)]
        return np.unique(np.concatenate(ids)) if ids else np.zeros(0, dtype=int)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.nodes.max(0) - self.nodes.min(0)))


# ----------------------------------------------------------------- face topology

def _distinct(ids):
    return tuple(sorted(set(int(i) for i in ids)))


def element_faces(mesh: Mesh):
    """Map distinct-node face key -> list of (element, local face).

    Faces collapsed to a point or a line (fewer than 6 distinct nodes) are skipped.
    """
    faces = {}
    for e, (kind, conn) in enumerate(zip(mesh.kinds, mesh.conn)):
        for f, (loc, _) in enumerate(reference_element(kind).faces):
            key = _distinct(np.asarray(conn)[list(loc)])
            if len(key) < 6:
                continue
            faces.setdefault(key, []).append((e, f))
    return faces


def boundary_faces(mesh: Mesh):
    return [v[0] for v in element_faces(mesh).values() if len(v) == 1]


def _flip_perm(kind):
    c = reference_element(kind).node_local_coords
    if kind == B27:
        target = c * np.array([1.0, 1.0, -1.0])
    else:
        target = c[:, [1, 0, 2]]
    return np.array([int(np.argmin(np.linalg.norm(c - t, axis=1))) for t in target])


def _orient(kind, conn, nodes):
    """Reorder connectivity so the Jacobian at the element centre is positive."""
    m = map_physical(nodes[conn], kind, reference_center(kind)[None], check=False)
    if m.detJ[0] < 0:
        return list(np.asarray(conn)[_flip_perm(kind)])
    return list(conn)


def _classify_boundary(mesh: Mesh, classify, skip=()):
    facets = []
    for e, f in boundary_faces(mesh):
        if (e, f) in skip:
            continue
        tag = classify(mesh.nodes[mesh.facet_nodes(e, f)])
        if tag is None:
            raise MeshError(f"boundary face {f} of element {e} lies on no known surface")
        facets.append((e, f, tag))
    return facets


def _interface_facets(mesh: Mesh, tag=DIELECTRIC_INTERFACE):
    out = []
    for pairs in element_faces(mesh).values():
        if len(pairs) == 2:
            (e1, f1), (e2, f2) = pairs
            if mesh.region[e1] != mesh.region[e2]:
                e, f = (e1, f1) if mesh.region[e1] < mesh.region[e2] else (e2, f2)
                out.append((e, f, tag))
    return out


# --------------------------------------------------------- spherical-type grids

def _spherical_structured(point, nlev, ntheta, nphi, span, region_of_layer, origin_level0=False):
    """Quadratic (r, theta, phi) grid with wedges on the polar axis.

    ``point(ir, theta, phi)`` gives coordinates of half-index radial level ``ir``.
    ``nlev`` is the number of radial element layers.
    """
    if nlev < 1 or ntheta < 2 or nphi < 1:
        raise MeshError("need nr >= 1, ntheta >= 2, nphi >= 1")
    if span not in ("full", "half"):
        raise MeshError(f"span must be 'full' or 'half', got {span!r}")
    if span == "full" and nphi < 3:
        raise MeshError("full span needs nphi >= 3")
    P = 2 * nphi if span == "full" else 2 * nphi + 1
    dphi = (2 * math.pi if span == "full" else math.pi) / (2 * nphi)
    dth = math.pi / (2 * ntheta)
    top = 2 * ntheta

    def key(ir, it, ip):
        if origin_level0 and ir == 0:
            return (0, 0, 0)
        if it == 0 or it == top:
            return (ir, it, 0)
        return (ir, it, ip % P if span == "full" else ip)

    elems = []  # (kind, keys, region)
    hexref = reference_element(B27).node_local_coords.astype(int)
    wref = reference_element(W18).node_local_coords
    tri_keys_n = {(0.0, 0.0): (0, 0), (1.0, 0.0): (2, 0), (0.0, 1.0): (2, 2),
                  (0.5, 0.0): (1, 0), (0.5, 0.5): (2, 1), (0.0, 0.5): (1, 2)}
    for ie in range(nlev):
        reg = region_of_layer(ie)
        for je in range(ntheta):
            for ke in range(nphi):
                if je == 0 or je == ntheta - 1:
                    south = je == ntheta - 1
                    ks = []
                    for xi, eta, z in wref:
                        dt, dp = tri_keys_n[(xi, eta)]
                        it = top - dt if south else dt
                        ks.append(key(2 * ie + 1 + int(z), it, 2 * ke + dp))
                    elems.append((W18, ks, reg))
                else:
                    ks = [key(2 * ie + 1 + a, 2 * je + 1 + b, 2 * ke + 1 + c) for a, b, c in hexref]
                    elems.append((B27, ks, reg))
    used = sorted({k for _, ks, _ in elems for k in ks})
    index = {k: i for i, k in enumerate(used)}
    nodes = np.array([point(ir, it * dth, ip * dphi) for ir, it, ip in used])
    kinds, conn, region = [], [], []
    for kind, ks, reg in elems:
        kinds.append(kind)
        conn.append(_orient(kind, [index[k] for k in ks], nodes))
        region.append(reg)
    return Mesh(nodes, kinds, conn, np.array(region, dtype=int))


def _unit_dir(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


def _finish_spherical(mesh: Mesh, inner, outer, span, inner_tag=PEC):
    tol = 1e-9 * mesh.diameter()

    def classify(xyz):
        if inner is not None and np.all(np.abs(inner(xyz)) < 1e-9):
            return inner_tag
        if np.all(np.abs(np.linalg.norm(xyz, axis=1) - outer) < tol):
            return ABC
        if span == "half" and np.all(np.abs(xyz[:, 1]) < tol):
            return SYMMETRY_PLANE
        return None

    mesh.facets = _classify_boundary(mesh, classify)
    if span == "half":
        mesh.nodes[np.abs(mesh.nodes[:, 1]) < tol, 1] = 0.0
        mesh.node_sets["symmetry_plane"] = mesh.tagged_nodes(SYMMETRY_PLANE)
    return mesh


def gen_spherical_shell(a, R_inf, nr, ntheta, nphi, span="full", inner_tag=PEC) -> Mesh:
    """Shell ``a <= r <= R_inf``; inner surface tagged ``inner_tag``, outer ``ABC``.

    The half span covers ``phi in [0, pi]`` (``y >= 0``).
    """
    if not R_inf > a > 0:
        raise MeshError("need R_inf > a > 0")
    nr = int(nr)

    def point(ir, th, ph):
        return (a + (R_inf - a) * ir / (2 * nr)) * _unit_dir(th, ph)

    mesh = _spherical_structured(point, nr, ntheta, nphi, span, lambda i: 0)
    return _finish_spherical(mesh, lambda x: np.linalg.norm(x, axis=1) / a - 1.0, R_inf, span, inner_tag)


def gen_ellipsoidal_shell(a, c, R_inf, nr, ntheta, nphi, span="full", inner_tag=PEC) -> Mesh:
    """Shell between the spheroid ``x^2/a^2 + y^2/a^2 + z^2/c^2 = 1`` and the sphere ``R_inf``.

    Radial grid lines blend linearly from the spheroid surface point to the sphere
    point with the same ``(theta, phi)``.
    """
    if not (a > 0 and c > 0):
        raise MeshError("semi-axes must be positive")
    if not R_inf > max(a, c):
        raise MeshError("R_inf must exceed max(a, c)")
    nr = int(nr)

    def point(ir, th, ph):
        s = ir / (2 * nr)
        u = _unit_dir(th, ph)
        inner = np.array([a * u[0], a * u[1], c * u[2]])
        return (1 - s) * inner + s * R_inf * u

    def level(x):
        return (x[:, 0] ** 2 + x[:, 1] ** 2) / a**2 + x[:, 2] ** 2 / c**2 - 1.0

    mesh = _spherical_structured(point, nr, ntheta, nphi, span, lambda i: 0)
    return _finish_spherical(mesh, level, R_inf, span, inner_tag)


def gen_dielectric_sphere(a, R_inf, nr_core, nr_shell, ntheta, nphi, span="full") -> Mesh:
    """Ball of radius ``R_inf`` containing a region-1 core ``r <= a``.

    Elements touching the centre are collapsed (repeated centre node); their
    Jacobian vanishes only on the collapsed face, never at quadrature points.
    """
    if not R_inf > a > 0:
        raise MeshError("need R_inf > a > 0")

    def radius(ir):
        if ir <= 2 * nr_core:
            return a * ir / (2 * nr_core)
        return a + (R_inf - a) * (ir - 2 * nr_core) / (2 * nr_shell)

    def point(ir, th, ph):
        return radius(ir) * _unit_dir(th, ph)

    mesh = _spherical_structured(point, nr_core + nr_shell, ntheta, nphi, span,
                                 lambda i: 1 if i < nr_core else 0, origin_level0=True)
    mesh = _finish_spherical(mesh, None, R_inf, span)
    mesh.facets += _interface_facets(mesh)
    return mesh


def gen_cuboid(lengths, divisions, origin=(0.0, 0.0, 0.0), tag=PEC) -> Mesh:
    """All-B27 box; every boundary face tagged ``tag`` (callers retag symmetry faces)."""
    L = np.asarray(lengths, dtype=float)
    n = [int(d) for d in divisions]
    if min(n) < 1:
        raise MeshError("divisions must be >= 1")
    o = np.asarray(origin, dtype=float)
    m = [2 * d + 1 for d in n]
    grid = np.stack(np.meshgrid(*[np.linspace(0, 1, mm) for mm in m], indexing="ij"), -1)
    nodes = (o + grid * L).reshape(-1, 3)

    def idx(i, j, k):
        return (i * m[1] + j) * m[2] + k

    hexref = reference_element(B27).node_local_coords.astype(int)
    conn = []
    for i in range(n[0]):
        for j in range(n[1]):
            for k in range(n[2]):
                conn.append([idx(2 * i + 1 + a, 2 * j + 1 + b, 2 * k + 1 + c) for a, b, c in hexref])
    mesh = Mesh(nodes, [B27] * len(conn), conn, np.zeros(len(conn), dtype=int))
    mesh.facets = [(e, f, tag) for e, f in boundary_faces(mesh)]
    return mesh


def retag_plane(mesh: Mesh, axis: int, value: float, tag: str = SYMMETRY_PLANE) -> Mesh:
    """Retag every boundary facet lying on the plane ``x[axis] == value``."""
    tol = 1e-9 * mesh.diameter()
    out = []
    for e, f, t in mesh.facets:
        xyz = mesh.nodes[mesh.facet_nodes(e, f)]
        out.append((e, f, tag if np.all(np.abs(xyz[:, axis] - value) < tol) else t))
    mesh.facets = out
    if tag == SYMMETRY_PLANE:
        mesh.node_sets["symmetry_plane"] = mesh.tagged_nodes(SYMMETRY_PLANE)
    return mesh


# ------------------------------------------------------------------ thin patch

def _face_param(kind, face, xi):
    """2D parameters of face nodes: quad faces -> (s, t) in [-1,1]^2, tri faces -> (xi, eta)."""
    if kind == B27:
        axis = face // 2
        return np.delete(xi, axis)
    if face in (0, 1):
        return xi[:2]
    if face == 2:
        return np.array([2 * xi[0] - 1, xi[2]])
    return np.array([2 * xi[1] - 1, xi[2]])  # faces 3 and 4


def attach_thin_patch(mesh: Mesh, axis: int, value: float, thickness: float, layers: int = 1,
                      region: int = 0) -> Mesh:
    """Extrude a thin element layer outward from the boundary faces on ``x[axis] == value``.

    Quadrilateral faces give B27 elements, triangles give W18.  The new face parallel
    to the plane is tagged ``SYM_PATCH_OUTER:<axis>``; side faces inherit the tag of
    the boundary facet that shares their base edge.  Original node indices and
    coordinates are left untouched.
    """
    if not thickness > 0:
        raise MeshError("patch thickness must be positive")
    tol = 1e-9 * mesh.diameter()
    tagmap = {(e, f): t for e, f, t in mesh.facets}
    plane_faces = []
    for e, f in boundary_faces(mesh):
        xyz = mesh.nodes[mesh.facet_nodes(e, f)]
        if np.all(np.abs(xyz[:, axis] - value) < tol):
            plane_faces.append((e, f))
    if not plane_faces:
        raise MeshError(f"no boundary faces on plane {AXES[axis]} = {value}")
    # outward direction from the interior
    e0, f0 = plane_faces[0]
    side = 1.0 if mesh.nodes[mesh.conn[e0]][:, axis].mean() < value else -1.0

    nodes = [mesh.nodes]
    new_index = {}
    nlay = 2 * layers

    def lifted(nid, lay):
        if lay == 0:
            return int(nid)
        k = (int(nid), lay)
        if k not in new_index:
            p = mesh.nodes[nid].copy()
            p[axis] = value + side * thickness * lay / nlay
            new_index[k] = mesh.n_nodes + len(new_index)
            nodes.append(p[None])
        return new_index[k]

    kinds = list(mesh.kinds)
    conn = [list(c) for c in mesh.conn]
    region_ids = list(mesh.region)
    new_elems = []
    for e, f in plane_faces:
        kind = mesh.kinds[e]
        ref = reference_element(kind)
        loc, shape = ref.faces[f]
        gids = np.asarray(mesh.conn[e])[list(loc)]
        params = [tuple(np.round(_face_param(kind, f, ref.node_local_coords[l]), 12)) for l in loc]
        pkind = B27 if shape == "quad" else W18
        pref = reference_element(pkind).node_local_coords
        lookup = {p: g for p, g in zip(params, gids)}
        for layer in range(layers):
            c = []
            for xi in pref:
                p2 = tuple(np.round(xi[:2], 12))
                lay = 2 * layer + 1 + int(round(xi[2]))
                c.append(lifted(lookup[p2], lay))
            new_elems.append((pkind, c, (e, f)))
    allnodes = np.vstack(nodes)
    first_new = len(conn)
    for pkind, c, _ in new_elems:
        kinds.append(pkind)
        conn.append(_orient(pkind, c, allnodes))
        region_ids.append(region)
    out = Mesh(allnodes, kinds, conn, np.array(region_ids, dtype=int),
               node_sets={k: v.copy() for k, v in mesh.node_sets.items()})

    # facets: keep old ones that are still on the boundary, tag the new ones
    bset = set(boundary_faces(out))
    covered = set(plane_faces)
    old = [(e, f, t) for e, f, t in mesh.facets if (e, f) not in covered]    # interfaces stay
    edge_tag = {}
    for (e, f), t in tagmap.items():
        if (e, f) in covered or (e, f) not in bset:
            continue
        ids = set(int(i) for i in mesh.facet_nodes(e, f))
        edge_tag[frozenset(ids)] = t
    plane_nodes = set()
    for e, f in plane_faces:
        plane_nodes.update(int(i) for i in mesh.facet_nodes(e, f))
    outer_tag = sym_patch_tag(axis)
    new = []
    outer_val = value + side * thickness
    for e, f in bset:
        if e < first_new:
            continue
        xyz = out.nodes[out.facet_nodes(e, f)]
        if np.all(np.abs(xyz[:, axis] - outer_val) < tol):
            new.append((e, f, outer_tag))
            continue
        base = {int(i) for i in out.facet_nodes(e, f)} & plane_nodes
        tag = None
        for ids, t in edge_tag.items():
            if base and base <= ids:
                tag = t
                break
        if tag is None:
            raise MeshError(f"cannot tag patch side face {f} of element {e}")
        new.append((e, f, tag))
    out.facets = old + sorted(new)
    key = f"patch_outer_face:{AXES[axis]}"
    out.node_sets[key] = out.tagged_nodes(outer_tag)
    # psi = 0 on the plane and the interior layer; the outer face only carries A.n = 0
    patch_nodes = (set(plane_nodes) | set(new_index.values())) - set(out.node_sets[key].tolist())
    prev = set(out.node_sets.get("patch_volume", np.zeros(0, dtype=int)).tolist())
    out.node_sets["patch_volume"] = np.array(sorted(prev | patch_nodes), dtype=int)
    outer_all = np.unique(np.concatenate([v for k, v in out.node_sets.items() if k.startswith("patch_outer_face:")]))
    out.node_sets["patch_outer_face"] = outer_all
    return out


# ------------------------------------------------------------------- utilities

def mirror_probe(x, axis: int = 1, value: float = 0.0):
    """Reflect ``x`` in the plane ``x[axis] == value``; return point and field sign flips."""
    x = np.array(x, dtype=float)
    x[..., axis] = 2 * value - x[..., axis]
    signs = np.ones(3)
    signs[axis] = -1.0
    return x, signs


@dataclass
class MeshReport:
    nodes: int
    elements: dict
    tags: dict
    min_jacobian: float
    watertight: bool
    untagged_boundary: int
    duplicate_nodes: int

    @property
    def valid(self) -> bool:
        return (self.min_jacobian > 0 and self.watertight and self.untagged_boundary == 0
                and self.duplicate_nodes == 0)


def check_mesh(mesh: Mesh, order: int = 3) -> MeshReport:
    """Jacobian positivity, face matching, boundary tag coverage and duplicate nodes."""
    for c in mesh.conn:
        if min(c) < 0 or max(c) >= mesh.n_nodes:
            raise MeshError("connectivity index out of range")
    jmin = math.inf
    for kind, (ids, conn) in mesh.groups().items():
        q = quadrature(kind, order)
        m = map_physical(mesh.nodes[conn], kind, q.points, element_ids=ids, check=False)
        jmin = min(jmin, float(m.detJ.min()))
    faces = element_faces(mesh)
    watertight = all(len(v) <= 2 for v in faces.values())
    tagged = {(e, f) for e, f, _ in mesh.facets}
    untagged = sum(1 for v in faces.values() if len(v) == 1 and v[0] not in tagged)
    pairs = cKDTree(mesh.nodes).query_pairs(1e-9 * mesh.diameter())
    tags = {}
    for _, _, t in mesh.facets:
        tags[t] = tags.get(t, 0) + 1
    return MeshReport(mesh.n_nodes, mesh.element_counts(), tags, jmin, watertight, untagged, len(pairs))


def validate(mesh: Mesh) -> Mesh:
    rep = check_mesh(mesh)
    if rep.min_jacobian <= 0:
        raise DegenerateElementError("?", rep.min_jacobian)
    if not rep.valid:
        raise MeshError(f"invalid mesh: {rep}")
    return mesh


# ------------------------------------------------------------------------- I/O

def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"NODES {mesh.n_nodes}\n")
        for i, p in enumerate(mesh.nodes):
            fh.write(f"{i} {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        fh.write(f"ELEMENTS {mesh.n_elements}\n")
        for i, (k, c, r) in enumerate(zip(mesh.kinds, mesh.conn, mesh.region)):
            fh.write(f"{i} {k} {int(r)} " + " ".join(str(int(v)) for v in c) + "\n")
        fh.write(f"FACETS {len(mesh.facets)}\n")
        for e, f, t in mesh.facets:
            fh.write(f"{e} {f} {t}\n")
        fh.write(f"SETS {len(mesh.node_sets)}\n")
        for name, ids in mesh.node_sets.items():
            fh.write(name + " " + " ".join(str(int(v)) for v in ids) + "\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    pos = 0

    def block(name):
        nonlocal pos
        if pos >= len(lines) or lines[pos][0] != name or len(lines[pos]) != 2:
            raise MeshError(f"{path}: expected '{name} <count>' at record {pos + 1}")
        n = int(lines[pos][1])
        rows = lines[pos + 1: pos + 1 + n]
        if len(rows) != n:
            raise MeshError(f"{path}: truncated {name} block")
        pos += n + 1
        return rows

    try:
        nodes = np.array([[float(v) for v in r[1:4]] for r in block("NODES")])
        er = block("ELEMENTS")
        kinds = [r[1] for r in er]
        region = np.array([int(r[2]) for r in er], dtype=int)
        conn = [[int(v) for v in r[3:]] for r in er]
        facets = [(int(r[0]), int(r[1]), r[2]) for r in block("FACETS")]
        sets = {r[0]: np.array([int(v) for v in r[1:]], dtype=int) for r in block("SETS")}
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: malformed record: {exc}") from exc
    for k, c in zip(kinds, conn):
        if k not in (B27, W18) or len(c) != reference_element(k).node_count:
            raise MeshError(f"{path}: bad element record {k} with {len(c)} nodes")
    return Mesh(nodes.reshape(-1, 3), kinds, conn, region, facets, sets)

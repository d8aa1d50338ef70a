"""Quadratic reference elements (27-node hexahedron, 18-node wedge), quadrature
and the isoparametric map.

All evaluation routines are vectorised: reference points are passed as arrays of
shape ``(q, 3)`` and element geometries as ``(n_elem, n_nodes, 3)``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

B27 = "B27"
W18 = "W18"
KINDS = (B27, W18)


class DegenerateElementError(ValueError):
    def __init__(self, element_id, detj):
        super().__init__(f"element {element_id}: non-positive Jacobian determinant {detj:.3e}")
        self.element_id = element_id


@dataclass(frozen=True)
class ReferenceElement:
    kind: str
    node_local_coords: np.ndarray
    faces: tuple  # per local face: (node indices, face shape "quad"/"tri")

    @property
    def node_count(self) -> int:
        return len(self.node_local_coords)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class FaceRule:
    """Quadrature on one face of a reference element.

    ``weights`` carry the reference face area measure and ``normal`` is the unit
    outward normal of the face in reference coordinates.
    """

    points: np.ndarray
    weights: np.ndarray
    normal: np.ndarray


def _b27_nodes():
    pts = list(itertools.product((-1.0, 0.0, 1.0), repeat=3))
    groups = {0: [], 1: [], 2: [], 3: []}
    for p in pts:
        groups[sum(1 for v in p if v == 0.0)].append(p)
    ordered = []
    for g in range(4):
        ordered.extend(sorted(groups[g], key=lambda p: (p[2], p[1], p[0])))
    return np.array(ordered)


_TRI_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_TRI_MIDS = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])


def _w18_nodes():
    out = []
    for z in (-1.0, 1.0):
        out.extend([(v[0], v[1], z) for v in _TRI_VERTS])
    for z in (-1.0, 1.0):
        out.extend([(m[0], m[1], z) for m in _TRI_MIDS])
    out.extend([(v[0], v[1], 0.0) for v in _TRI_VERTS])
    out.extend([(m[0], m[1], 0.0) for m in _TRI_MIDS])
    return np.array(out)


def _face_nodes(coords, mask):
    return tuple(int(i) for i in np.nonzero(mask)[0])


@functools.lru_cache(maxsize=None)
def reference_element(kind: str) -> ReferenceElement:
    if kind == B27:
        c = _b27_nodes()
        faces = []
        for axis in range(3):
            for side in (-1.0, 1.0):
                faces.append((_face_nodes(c, c[:, axis] == side), "quad"))
        return ReferenceElement(B27, c, tuple(faces))
    if kind == W18:
        c = _w18_nodes()
        faces = [
            (_face_nodes(c, c[:, 2] == -1.0), "tri"),
            (_face_nodes(c, c[:, 2] == 1.0), "tri"),
            (_face_nodes(c, c[:, 1] == 0.0), "quad"),
            (_face_nodes(c, np.isclose(c[:, 0] + c[:, 1], 1.0)), "quad"),
            (_face_nodes(c, c[:, 0] == 0.0), "quad"),
        ]
        return ReferenceElement(W18, c, tuple(faces))
    raise ValueError(f"unknown element kind {kind!r}")


# 1D quadratic Lagrange basis on nodes (-1, 0, 1)
def _lag(s):
    return np.stack([0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)], axis=-1)


def _dlag(s):
    return np.stack([s - 0.5, -2.0 * s, s + 0.5], axis=-1)


def _lag_index(v):
    return int(round(v)) + 1


def _tri_p2(xi, eta):
    l0 = 1.0 - xi - eta
    l1, l2 = xi, eta
    vals = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)
    dxi = np.stack([-(4 * l0 - 1), 4 * l1 - 1, np.zeros_like(xi),
                    4 * (l0 - l1), 4 * l2, -4 * l2], axis=-1)
    deta = np.stack([-(4 * l0 - 1), np.zeros_like(xi), 4 * l2 - 1,
                     -4 * l1, 4 * l1, 4 * (l0 - l2)], axis=-1)
    return vals, dxi, deta


def _tri_index(x, y):
    for i, v in enumerate(np.vstack([_TRI_VERTS, _TRI_MIDS])):
        if abs(v[0] - x) < 1e-12 and abs(v[1] - y) < 1e-12:
            return i
    raise AssertionError((x, y))


@functools.lru_cache(maxsize=None)
def _factor_table(kind):
    c = reference_element(kind).node_local_coords
    if kind == B27:
        return np.array([[_lag_index(v) for v in p] for p in c])
    return np.array([[_tri_index(p[0], p[1]), _lag_index(p[2])] for p in c])


def _as_points(xi):
    xi = np.asarray(xi, dtype=float)
    return xi.reshape(-1, 3), xi.shape[:-1]


def shape_values(kind: str, xi) -> np.ndarray:
    """Shape function values at reference point(s) ``xi``; shape ``(..., n_nodes)``."""
    pts, lead = _as_points(xi)
    t = _factor_table(kind)
    if kind == B27:
        L = [_lag(pts[:, a]) for a in range(3)]
        vals = L[0][:, t[:, 0]] * L[1][:, t[:, 1]] * L[2][:, t[:, 2]]
    else:
        tv, _, _ = _tri_p2(pts[:, 0], pts[:, 1])
        vals = tv[:, t[:, 0]] * _lag(pts[:, 2])[:, t[:, 1]]
    return vals.reshape(*lead, -1)


def shape_gradients(kind: str, xi) -> np.ndarray:
    """Reference-space gradients; shape ``(..., n_nodes, 3)``."""
    pts, lead = _as_points(xi)
    t = _factor_table(kind)
    if kind == B27:
        L = [_lag(pts[:, a]) for a in range(3)]
        D = [_dlag(pts[:, a]) for a in range(3)]
        l0, l1, l2 = (L[a][:, t[:, a]] for a in range(3))
        d0, d1, d2 = (D[a][:, t[:, a]] for a in range(3))
        g = np.stack([d0 * l1 * l2, l0 * d1 * l2, l0 * l1 * d2], axis=-1)
    else:
        tv, txi, teta = _tri_p2(pts[:, 0], pts[:, 1])
        lz = _lag(pts[:, 2])[:, t[:, 1]]
        dz = _dlag(pts[:, 2])[:, t[:, 1]]
        g = np.stack([txi[:, t[:, 0]] * lz, teta[:, t[:, 0]] * lz, tv[:, t[:, 0]] * dz], axis=-1)
    return g.reshape(*lead, -1, 3)


# ---------------------------------------------------------------- quadrature

SUPPORTED_ORDERS = range(1, 9)


def _gauss01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(order: int):
    """Points ``(m, 2)`` and weights on the reference triangle (area 1/2)."""
    if order == 2:
        p = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return p, np.full(3, 1 / 6)
    if order == 3:
        s15 = np.sqrt(15.0)
        a, b = (6 - s15) / 21, (6 + s15) / 21
        wa, wb = (155 - s15) / 2400, (155 + s15) / 2400
        p = np.array([[1 / 3, 1 / 3],
                      [a, a], [1 - 2 * a, a], [a, 1 - 2 * a],
                      [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]])
        return p, np.array([9 / 80, wa, wa, wa, wb, wb, wb])
    # collapsed (Duffy) Gauss rule, exact to degree 2n-1
    n = order
    u, wu = _gauss01(n)
    v, wv = roots_jacobi(n, 1.0, 0.0)
    v, wv = 0.5 * (v + 1.0), wv / 4.0
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    p = np.stack([(U * (1 - V)).ravel(), V.ravel()], axis=-1)
    return p, W.ravel()


@functools.lru_cache(maxsize=None)
def quadrature(kind: str, order: int = 3) -> QuadratureRule:
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported quadrature order {order}")
    x, w = roots_legendre(order)
    if kind == B27:
        P = np.array(list(itertools.product(x, x, x)))
        W = np.array([a * b * c for a, b, c in itertools.product(w, w, w)])
        return QuadratureRule(P, W)
    if kind == W18:
        tp, tw = triangle_rule(order)
        P = np.array([[p[0], p[1], z] for p in tp for z in x])
        W = np.array([a * b for a in tw for b in w])
        return QuadratureRule(P, W)
    raise ValueError(f"unknown element kind {kind!r}")


@functools.lru_cache(maxsize=None)
def face_quadrature(kind: str, face: int, order: int = 3) -> FaceRule:
    x, w = roots_legendre(order)
    if kind == B27:
        axis, side = divmod(face, 2)
        sval = -1.0 if side == 0 else 1.0
        others = [a for a in range(3) if a != axis]
        P = np.zeros((order * order, 3))
        P[:, axis] = sval
        S, T = np.meshgrid(x, x, indexing="ij")
        P[:, others[0]] = S.ravel()
        P[:, others[1]] = T.ravel()
        n = np.zeros(3)
        n[axis] = sval
        return FaceRule(P, np.outer(w, w).ravel(), n)
    if kind == W18:
        if face in (0, 1):
            tp, tw = triangle_rule(order)
            z = -1.0 if face == 0 else 1.0
            P = np.column_stack([tp, np.full(len(tp), z)])
            return FaceRule(P, tw, np.array([0.0, 0.0, z]))
        s, ws = _gauss01(order)
        S, Z = np.meshgrid(s, x, indexing="ij")
        S, Z = S.ravel(), Z.ravel()
        W = np.outer(ws, w).ravel()
        if face == 2:
            P = np.column_stack([S, np.zeros_like(S), Z])
            return FaceRule(P, W, np.array([0.0, -1.0, 0.0]))
        if face == 3:
            P = np.column_stack([1.0 - S, S, Z])
            return FaceRule(P, W * np.sqrt(2.0), np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0))
        if face == 4:
            P = np.column_stack([np.zeros_like(S), S, Z])
            return FaceRule(P, W, np.array([-1.0, 0.0, 0.0]))
    raise ValueError(f"no face {face} on {kind}")


def reference_volume(kind: str) -> float:
    return 8.0 if kind == B27 else 1.0


def inside_reference(kind: str, xi, tol: float = 1e-8) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if kind == B27:
        return np.all(np.abs(xi) <= 1.0 + tol, axis=-1)
    return ((xi[..., 0] >= -tol) & (xi[..., 1] >= -tol)
            & (xi[..., 0] + xi[..., 1] <= 1.0 + tol) & (np.abs(xi[..., 2]) <= 1.0 + tol))


def reference_center(kind: str) -> np.ndarray:
    return np.zeros(3) if kind == B27 else np.array([1 / 3, 1 / 3, 0.0])


# ------------------------------------------------------------ isoparametric map

@dataclass
class Mapped:
    """Isoparametric map evaluated for a batch of elements at reference points."""

    x: np.ndarray      # (E, q, 3)
    J: np.ndarray      # (E, q, 3, 3), J[a, b] = dx_a / dxi_b
    detJ: np.ndarray   # (E, q)
    grads: np.ndarray  # (E, q, n, 3) physical shape gradients


def map_physical(geom, kind: str, xi, element_ids=None, check: bool = True) -> Mapped:
    """Evaluate positions, Jacobians and physical gradients.

    ``geom`` is ``(n_nodes, 3)`` for a single element or ``(E, n_nodes, 3)``.
    """
    geom = np.asarray(geom, dtype=float)
    single = geom.ndim == 2
    if single:
        geom = geom[None]
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    N = shape_values(kind, xi)
    dN = shape_gradients(kind, xi)
    x = np.einsum("qn,ena->eqa", N, geom)
    J = np.einsum("qnb,ena->eqab", dN, geom)
    detJ = np.linalg.det(J)
    if check and np.any(detJ <= 0.0):
        e, q = np.argwhere(detJ <= 0.0)[0]
        eid = element_ids[e] if element_ids is not None else int(e)
        raise DegenerateElementError(eid, detJ[e, q])
    Jinv = np.linalg.inv(J)
    grads = np.einsum("eqba,qnb->eqna", Jinv, dN)
    if single:
        return Mapped(x[0], J[0], detJ[0], grads[0])
    return Mapped(x, J, detJ, grads)


def face_measure(J: np.ndarray, detJ: np.ndarray, ref_normal: np.ndarray):
    """Nanson's formula: returns outward unit normals and the area scale ``dS/dA``."""
    v = np.einsum("...ba,b->...a", np.linalg.inv(J), ref_normal)  # J^{-T} n_ref
    nv = np.linalg.norm(v, axis=-1)
    return v / nv[..., None], detJ * nv

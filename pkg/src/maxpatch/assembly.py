"""Element and global assembly of the potential-formulation block systems.

All equations are scaled by ``mu0`` so coefficients are O(1) in SI units.  The weak
form is symmetric Galerkin with test functions ``N_i e_d`` (A rows) and ``grad N_i``
(psi rows); the psi rows are the A equation tested with gradients, which is the weak
form of ``div(eps E) = 0``.  With ``E = A + grad psi``:

    a(E, F) = (1/mu_r) (curl A, curl F) + (alpha/mu_r) (div A, div F)[A rows only]
              - k0^2 eps_r (E, F) + i k0 sqrt(eps_r mu_r)/mu_r <n x E, n x F>_ABC

Element matrices are laid out node-major, ``row = 4 * local_node + slot`` with
slots ``(Ax, Ay, Az, psi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dofmap import NSLOT, DofMap
from .elements import (face_measure, face_quadrature, map_physical, quadrature, reference_element,
                       shape_values)
from .meshgen import ABC, Mesh
from .model import DEFAULT_CONSTANTS, VACUUM, Material
from .sparsela import assemble_from_triplets

CONVENTIONAL = "conventional"
AMPLITUDE = "amplitude"
_CHUNK = 128


class AssemblyError(ValueError):
    pass


# ------------------------------------------------------------------ kernels

def _amplitude_factors(x, k):
    """Trial/test gradient corrections for the ``exp(-ikr)/r`` factorisation."""
    r = np.linalg.norm(x, axis=-1)
    rhat = x / r[..., None]
    trial = -(1j * k + 1.0 / r)[..., None] * rhat      # grad f / f
    test = (1j * k - 1.0 / r)[..., None] * rhat        # grad conj(f) / conj(f)
    return trial, test, 1.0 / r**2


def _basis(kind, geoms, xi, w, formulation, k, ids=None):
    """Weighted values and (test, trial) gradients at quadrature points."""
    m = map_physical(geoms, kind, xi, element_ids=ids)
    N = shape_values(kind, xi)                                   # (q, n)
    N = np.broadcast_to(N, m.grads.shape[:-1])                   # (E, q, n)
    W = m.detJ * w                                               # (E, q)
    if formulation == CONVENTIONAL:
        return m, N, W, m.grads, m.grads
    if formulation != AMPLITUDE:
        raise AssemblyError(f"unknown formulation {formulation!r}")
    r_nodes = np.linalg.norm(geoms, axis=-1).min(axis=-1)
    if np.any(r_nodes <= 1e-12 * max(1.0, float(np.abs(geoms).max()))):
        raise AssemblyError("amplitude formulation needs elements away from the origin")
    gt, gs, rho = _amplitude_factors(m.x, k)
    Gt = m.grads + N[..., None] * gt[:, :, None, :]
    Gs = m.grads + N[..., None] * gs[:, :, None, :]
    return m, N, W * rho, Gs, Gt


def _pack(E, n, dtype):
    return np.zeros((E, n, NSLOT, n, NSLOT), dtype=dtype)


def _volume_blocks(N, W, Gs, Gt, c_curl, c_reg, c_mass, dtype):
    """Curl-curl + regularization on A and the eps-weighted mass over (A, grad psi).

    ``c_*`` are per-element coefficient arrays.
    """
    E, q, n = N.shape
    D = np.einsum("eq,eqia,eqjb->eijab", W, Gs, Gt)
    trD = np.einsum("eijaa->eij", D)
    M = np.einsum("eq,eqi,eqj->eij", W, N, N)
    B = np.einsum("eq,eqi,eqjb->eijb", W, N, Gt)                 # A row, psi column
    C = np.einsum("eq,eqia,eqj->eija", W, Gs, N)                 # psi row, A column
    K = _pack(E, n, dtype)
    eye = np.eye(3)
    cc = c_curl[:, None, None, None, None]
    K[:, :, :3, :, :3] += cc * (trD[:, :, None, :, None] * eye[None, None, :, None, :]
                                - np.transpose(D, (0, 1, 4, 2, 3)))
    K[:, :, :3, :, :3] += c_reg[:, None, None, None, None] * np.transpose(D, (0, 1, 3, 2, 4))
    cm = c_mass[:, None, None]
    K[:, :, :3, :, :3] += (cm * M)[:, :, None, :, None] * eye[None, None, :, None, :]
    K[:, :, :3, :, 3] += cm[..., None] * np.transpose(B, (0, 1, 3, 2))
    K[:, :, 3, :, :3] += cm[..., None] * C
    K[:, :, 3, :, 3] += cm * trD
    return K.reshape(E, n * NSLOT, n * NSLOT)


def _coeffs(materials, k0, alpha, mode):
    eps = np.array([m.eps_r for m in materials])
    mu = np.array([m.mu_r for m in materials])
    if mode == "harmonic":
        return 1.0 / mu, alpha / mu, -(k0**2) * eps + 0j
    return 1.0 / mu, alpha / mu, eps


def harmonic_blocks(geoms, kind, materials, k0, formulation=CONVENTIONAL, alpha=1.0, order=3,
                    ids=None):
    """Batched element matrices, ``(E, 4n, 4n)`` complex."""
    geoms = np.asarray(geoms, dtype=float)
    if formulation == AMPLITUDE and any(m != materials[0] for m in materials):
        raise AssemblyError("amplitude formulation needs a homogeneous exterior region")
    q = quadrature(kind, order)
    cc, cr, cm = _coeffs(materials, k0, alpha, "harmonic")
    k = k0 * np.sqrt(materials[0].eps_r * materials[0].mu_r)
    m, N, W, Gs, Gt = _basis(kind, geoms, q.points, q.weights, formulation, k, ids)
    return _volume_blocks(N, W, Gs, Gt, cc, cr, cm, complex)


def element_harmonic(geom, kind, material: Material = VACUUM, k0: float = 1.0,
                     formulation: str = CONVENTIONAL, alpha: float = 1.0, incident=None,
                     order: int = 3):
    """Element matrix and load of the harmonic system for one element.

    ``incident`` is an optional callable ``x -> E_inc(x)``; when given, the load is the
    dielectric contrast source ``k0^2 (eps_r - 1) int E_inc . F``.
    """
    K = harmonic_blocks(np.asarray(geom)[None], kind, [material], k0, formulation, alpha, order)[0]
    F = np.zeros(K.shape[0], dtype=complex)
    if incident is not None and material.eps_r != 1.0:
        if material.mu_r != 1.0:
            raise AssemblyError("dielectric contrast source assumes mu_r = 1")
        F = k0**2 * (material.eps_r - 1.0) * _element_source(geom, kind, incident, order)
    return K, F


def transient_blocks(geoms, kind, materials, alpha=1.0, c=None, order=3, ids=None):
    """Batched ``(M, K)`` with ``M = eps_r/c^2`` mass over (A, grad psi), ``K`` = curl + reg."""
    c = DEFAULT_CONSTANTS.c if c is None else c
    geoms = np.asarray(geoms, dtype=float)
    q = quadrature(kind, order)
    cc, cr, eps = _coeffs(materials, 0.0, alpha, "transient")
    m, N, W, Gs, Gt = _basis(kind, geoms, q.points, q.weights, CONVENTIONAL, 0.0, ids)
    zero = np.zeros(len(materials))
    M = _volume_blocks(N, W, Gs, Gt, zero, zero, eps / c**2, float)
    K = _volume_blocks(N, W, Gs, Gt, cc, cr, zero, float)
    return M, K


def element_transient(geom, kind, material: Material = VACUUM, alpha: float = 1.0, c=None,
                      order: int = 3):
    """Mass-like and stiffness-like element blocks (real, symmetric)."""
    M, K = transient_blocks(np.asarray(geom)[None], kind, [material], alpha, c, order)
    return M[0], K[0]


def abc_pattern(geom, kind, face, formulation=CONVENTIONAL, k=0.0, order=3):
    """``<n x E, n x F>`` over one element face, ``(4n, 4n)``; amplitude mode includes ``|f|^2``."""
    geom = np.asarray(geom, dtype=float)
    fr = face_quadrature(kind, face, order)
    m, N, W, Gs, Gt = _basis(kind, geom[None], fr.points, fr.weights, formulation, k)
    normals, dS = face_measure(m.J, m.detJ, fr.normal)
    W = W / m.detJ * dS                                           # swap volume for area measure
    P = np.eye(3) - normals[..., :, None] * normals[..., None, :]  # (1, q, 3, 3)
    PGs = np.einsum("eqab,eqib->eqia", P, Gs)
    PGt = np.einsum("eqab,eqjb->eqja", P, Gt)
    n = N.shape[-1]
    S = _pack(1, n, complex if formulation == AMPLITUDE else float)
    S[:, :, :3, :, :3] = np.einsum("eq,eqi,eqj,eqcd->eicjd", W, N, N, P)
    S[:, :, :3, :, 3] = np.einsum("eq,eqi,eqjd->eidj", W, N, PGt)
    S[:, :, 3, :, :3] = np.einsum("eq,eqic,eqj->eijc", W, PGs, N)
    S[:, :, 3, :, 3] = np.einsum("eq,eqia,eqja->eij", W, PGs, PGt)
    return S.reshape(n * NSLOT, n * NSLOT)


def element_abc(geom, kind, face, k0: float, material: Material = VACUUM,
                formulation: str = CONVENTIONAL, order: int = 3):
    """First-order absorbing boundary block ``i k/mu_r <n x E, n x F>`` (scaled by mu0)."""
    k = material.wavenumber(k0)
    coef = 1j * k / material.mu_r
    if k0 == 0.0:
        n = reference_element(kind).node_count * NSLOT
        return np.zeros((n, n), dtype=complex)
    return coef * abc_pattern(geom, kind, face, formulation, k, order)


# ---------------------------------------------------------------- sources

def _element_source(geom, kind, field_fn, order=3):
    q = quadrature(kind, order)
    m = map_physical(np.asarray(geom, dtype=float), kind, q.points)
    N = shape_values(kind, q.points)
    vals = np.asarray(field_fn(m.x))
    W = m.detJ * q.weights
    F = np.zeros((N.shape[1], NSLOT), dtype=np.result_type(vals, float))
    F[:, :3] = np.einsum("q,qi,qd->id", W, N, vals)
    F[:, 3] = np.einsum("q,qia,qa->i", W, m.grads, vals)
    return F.ravel()


@dataclass
class VolumeSource:
    """Linear map from field samples at quadrature points to a global load vector.

    ``load(F, q) = sum_w [F . N_i e_d] (A rows) + [F . grad N_i + q N_i] (psi rows)``
    over the selected elements; the result is in Cartesian (unrotated) slots.
    """

    points: np.ndarray            # (nq, 3)
    vec: sp.csr_matrix            # (4N, 3 nq)
    scal: sp.csr_matrix           # (4N, nq)

    def load(self, F=None, q=None):
        out = np.zeros(self.vec.shape[0], dtype=complex)
        if F is not None:
            out = out + self.vec @ np.asarray(F).reshape(-1)
        if q is not None:
            out = out + self.scal @ np.asarray(q).reshape(-1)
        if not np.iscomplexobj(F) and not np.iscomplexobj(q):
            out = out.real
        return out


def volume_source(mesh: Mesh, elements=None, order: int = 3, weights=None) -> VolumeSource:
    """Build the sampling operator over ``elements`` (all by default).

    ``weights`` optionally scales each element's contribution (e.g. material contrast).
    """
    elements = np.arange(mesh.n_elements) if elements is None else np.asarray(elements, dtype=int)
    wmap = np.ones(mesh.n_elements) if weights is None else np.asarray(weights, dtype=float)
    pts, vr, vc, vv, sr, sc, sv = [], [], [], [], [], [], []
    nq0 = 0
    for kind, (ids, conn) in mesh.groups().items():
        sel = np.isin(ids, elements)
        if not sel.any():
            continue
        ids, conn = ids[sel], conn[sel]
        q = quadrature(kind, order)
        m = map_physical(mesh.nodes[conn], kind, q.points, element_ids=ids)
        N = shape_values(kind, q.points)
        W = m.detJ * q.weights * wmap[ids][:, None]                          # (E, q)
        E, nq = W.shape
        n = N.shape[1]
        qidx = nq0 + np.arange(E * nq).reshape(E, nq)
        rowsA = NSLOT * conn[:, None, :, None] + np.arange(3)[None, None, None, :]      # (E,1,n,3)
        colsA = 3 * qidx[:, :, None, None] + np.arange(3)[None, None, None, :]         # (E,q,1,3)
        valA = (W[:, :, None] * N[None])[..., None] * np.ones(3)                       # (E,q,n,3)
        vr.append(np.broadcast_to(rowsA, valA.shape).ravel())
        vc.append(np.broadcast_to(colsA, valA.shape).ravel())
        vv.append(valA.ravel())
        rowsP = (NSLOT * conn + 3)[:, None, :, None]
        colsP = 3 * qidx[:, :, None, None] + np.arange(3)
        valP = W[:, :, None, None] * m.grads                                           # (E,q,n,3)
        vr.append(np.broadcast_to(rowsP, valP.shape).ravel())
        vc.append(np.broadcast_to(colsP, valP.shape).ravel())
        vv.append(valP.ravel())
        valS = W[:, :, None] * N[None]
        sr.append(np.broadcast_to((NSLOT * conn + 3)[:, None, :], valS.shape).ravel())
        sc.append(np.broadcast_to(qidx[:, :, None], valS.shape).ravel())
        sv.append(valS.ravel())
        pts.append(m.x.reshape(-1, 3))
        nq0 += E * nq
    ndof = NSLOT * mesh.n_nodes
    if not pts:
        return VolumeSource(np.zeros((0, 3)), sp.csr_matrix((ndof, 0)), sp.csr_matrix((ndof, 0)))
    vec = sp.csr_matrix((np.concatenate(vv), (np.concatenate(vr), np.concatenate(vc))), shape=(ndof, 3 * nq0))
    scal = sp.csr_matrix((np.concatenate(sv), (np.concatenate(sr), np.concatenate(sc))), shape=(ndof, nq0))
    return VolumeSource(np.vstack(pts), vec, scal)


def material_array(mesh: Mesh, materials: dict):
    try:
        return [materials.get(int(r), VACUUM) if isinstance(materials, dict) else materials[int(r)]
                for r in mesh.region]
    except (IndexError, KeyError) as exc:
        raise AssemblyError(f"no material for region {exc}") from exc


def scattering_source_dielectric(mesh: Mesh, materials: dict, incident, k0: float,
                                 order: int = 3) -> np.ndarray:
    """Global contrast load ``k0^2 (eps_r - 1) int E_inc . F`` (Cartesian slots).

    ``incident`` maps points ``(m, 3)`` to complex fields.
    """
    mats = material_array(mesh, materials)
    contrast = np.array([m.eps_r - 1.0 for m in mats])
    if any(m.mu_r != 1.0 for m, c in zip(mats, contrast) if c != 0.0):
        raise AssemblyError("dielectric contrast source assumes mu_r = 1 inside the scatterer")
    ids = np.flatnonzero(contrast != 0.0)
    out = np.zeros(NSLOT * mesh.n_nodes, dtype=complex)
    if len(ids) == 0:
        return out
    src = volume_source(mesh, ids, order, weights=contrast)
    return k0**2 * src.load(incident(src.points))


# ------------------------------------------------------------ global assembly

def _scatter(chunks, n_total, dtype, flush: int = 4_000_000):
    """Scatter-add ``(conn, blocks)`` chunks; triplets are merged in bounded batches."""
    A = sp.csr_matrix((n_total, n_total), dtype=dtype)
    rows, cols, vals, size = [], [], [], 0

    def merge():
        nonlocal A, rows, cols, vals, size
        if rows:
            A = A + assemble_from_triplets(n_total, np.concatenate(rows), np.concatenate(cols),
                                           np.concatenate(vals), dtype)
        rows, cols, vals, size = [], [], [], 0

    for conn, blocks in chunks:
        E, n = conn.shape
        dof = (NSLOT * conn[:, :, None] + np.arange(NSLOT)).reshape(E, n * NSLOT)
        rows.append(np.broadcast_to(dof[:, :, None], blocks.shape).ravel())
        cols.append(np.broadcast_to(dof[:, None, :], blocks.shape).ravel())
        vals.append(blocks.ravel())
        size += blocks.size
        if size >= flush:
            merge()
    merge()
    return A


def assemble_volume(mesh: Mesh, block_fn, dtype, order: int = 3):
    """Sum ``block_fn(geoms, kind, ids) -> (E, 4n, 4n)`` over all elements (fixed order)."""
    def chunks():
        for kind, (ids, conn) in mesh.groups().items():
            for s in range(0, len(ids), _CHUNK):
                sl = slice(s, s + _CHUNK)
                yield conn[sl], block_fn(mesh.nodes[conn[sl]], kind, ids[sl])
    return _scatter(chunks(), NSLOT * mesh.n_nodes, dtype)


def assemble_faces(mesh: Mesh, tag: str, face_fn, dtype):
    facets = mesh.facets_with(tag)

    def chunks():
        for e, f, _ in facets:
            conn = np.asarray(mesh.conn[e])[None]
            yield conn, face_fn(mesh.nodes[mesh.conn[e]], mesh.kinds[e], f, e)[None]
    return _scatter(chunks(), NSLOT * mesh.n_nodes, dtype)


@dataclass
class ReducedSystem:
    """Free-dof system ``K x = F`` after rotation and Dirichlet elimination."""

    K: sp.csr_matrix
    F: np.ndarray
    lift: np.ndarray                   # (N, 4) local constrained values
    dofmap: DofMap
    extra: dict = field(default_factory=dict)

    def expand(self, x):
        return self.dofmap.expand(x, self.lift)


def rotate(A: sp.spmatrix, dofmap: DofMap):
    if not dofmap.frames:
        return A.tocsr()
    T = dofmap.rotation()
    return (T @ A @ T.T).tocsr()


def split(A: sp.spmatrix, dofmap: DofMap):
    """Return ``(A_ff, A_fc)`` of a rotated global matrix."""
    f = dofmap.free_index()
    c = dofmap.constrained_index()
    A = A.tocsr()
    Af = A[f]
    return Af[:, f].tocsr(), Af[:, c].tocsr()


def reduce_system(K: sp.spmatrix, F: np.ndarray, dofmap: DofMap, lift: np.ndarray) -> ReducedSystem:
    """Rotate to nodal frames, eliminate constrained slots and fold them into the RHS."""
    if K.shape != (dofmap.total_slots,) * 2 or F.shape != (dofmap.total_slots,):
        raise AssemblyError(f"dimension mismatch: matrix {K.shape}, load {F.shape}, "
                            f"dofmap {dofmap.total_slots}")
    Kl = rotate(K, dofmap)
    Fl = dofmap.to_local(F.reshape(-1, NSLOT)).ravel()
    Kff, Kfc = split(Kl, dofmap)
    c = dofmap.constrained_index()
    rhs = Fl[dofmap.free_index()] - Kfc @ lift.reshape(-1)[c]
    return ReducedSystem(Kff, rhs, lift, dofmap)


def assemble_harmonic(mesh: Mesh, dofmap: DofMap, materials, k0: float,
                      formulation: str = CONVENTIONAL, alpha: float = 1.0, incident=None,
                      scattered: bool = True, order: int = 3) -> ReducedSystem:
    """Assemble and reduce the harmonic system over the free dofs.

    ``incident(x)`` supplies the plane wave used by PEC lifts and the dielectric
    contrast source.  Amplitude mode scales the PEC lift by ``1/f(x)``.
    """
    mats = material_array(mesh, materials)
    K = assemble_volume(mesh, lambda g, kind, ids: harmonic_blocks(
        g, kind, [mats[i] for i in ids], k0, formulation, alpha, order, ids), complex, order)

    def face(g, kind, f, e):
        return element_abc(g, kind, f, k0, mats[e], formulation, order)
    K = K + assemble_faces(mesh, ABC, face, complex)
    F = np.zeros(NSLOT * mesh.n_nodes, dtype=complex)
    lift_fn = None
    if incident is not None and scattered:
        F = F + scattering_source_dielectric(mesh, materials, incident, k0, order)
        if formulation == AMPLITUDE:
            def lift_fn(x):
                r = np.linalg.norm(x, axis=-1)
                return incident(x) * (r * np.exp(1j * k0 * r))[:, None]
        else:
            lift_fn = incident
    lift = dofmap.constrained_values(lift_fn, dtype=complex)
    sys_ = reduce_system(K, F, dofmap, lift)
    sys_.extra["K_global"] = K
    return sys_

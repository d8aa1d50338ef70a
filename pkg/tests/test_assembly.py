import numpy as np
import pytest

from maxpatch.assembly import (AMPLITUDE, CONVENTIONAL, AssemblyError, abc_pattern, assemble_harmonic,
                               assemble_volume, element_abc, element_harmonic, element_transient,
                               harmonic_blocks, reduce_system, volume_source)
from maxpatch.dofmap import ConstraintSpec, build_dof_map
from maxpatch.elements import B27, W18, map_physical, quadrature, reference_element, shape_values
from maxpatch.meshgen import boundary_faces, gen_cuboid, gen_spherical_shell
from maxpatch.model import VACUUM, Material
from maxpatch.sparsela import solve


def distorted(kind, seed=0):
    rng = np.random.default_rng(seed)
    g = reference_element(kind).node_local_coords.copy()
    return g + 0.05 * rng.normal(size=g.shape) + np.array([2.0, 1.0, 0.5])


@pytest.mark.parametrize("kind", [B27, W18])
def test_element_matrix_is_complex_symmetric(kind):
    K, F = element_harmonic(distorted(kind), kind, Material(2.0, 1.5), 1.3)
    n = reference_element(kind).node_count * 4
    assert K.shape == (n, n) and not F.any()
    assert np.abs(K - K.T).max() <= 1e-12 * np.abs(K).max()


@pytest.mark.parametrize("kind", [B27, W18])
def test_amplitude_transpose_reverses_wavenumber(kind):
    # test and trial gradients of the exp(-ikr)/r factorisation swap under k -> -k
    K, _ = element_harmonic(distorted(kind), kind, VACUUM, 1.3, AMPLITUDE)
    Km, _ = element_harmonic(distorted(kind), kind, VACUUM, -1.3, AMPLITUDE)
    assert np.abs(K.T - Km).max() <= 1e-12 * np.abs(K).max()
    assert np.abs(K - K.T).max() > 1e-6 * np.abs(K).max()


@pytest.mark.parametrize("kind", [B27, W18])
def test_transient_blocks(kind):
    M, K = element_transient(distorted(kind), kind, Material(3.0), c=3e8)
    assert np.allclose(M, M.T) and np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-10 * np.abs(K).max()
    # constant A and constant psi lie in the stiffness null space
    n = reference_element(kind).node_count
    u = np.zeros((n, 4))
    u[:, 0] = 1.0
    u[:, 3] = 2.0
    assert np.abs(K @ u.ravel()).max() <= 1e-10 * np.abs(K).max()
    # mass energy of a constant A equals eps_r/c^2 |A|^2 volume
    q = quadrature(kind, 3)
    vol = (map_physical(distorted(kind), kind, q.points).detJ * q.weights).sum()
    u[:, 3] = 0.0
    assert u.ravel() @ M @ u.ravel() == pytest.approx(3.0 / 9e16 * vol, rel=1e-10)


def test_abc_face_block():
    g = distorted(B27)
    S = abc_pattern(g, B27, 5)
    assert np.allclose(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= -1e-12
    assert not element_abc(g, B27, 5, 0.0).any()
    assert np.allclose(element_abc(g, B27, 5, 2.0), 2.0j * S)


def test_amplitude_rejects_origin_and_mixed_materials():
    g = reference_element(B27).node_local_coords
    with pytest.raises(AssemblyError):
        harmonic_blocks(g[None], B27, [VACUUM], 1.0, AMPLITUDE)
    with pytest.raises(AssemblyError):
        harmonic_blocks(np.stack([distorted(B27)] * 2), B27, [VACUUM, Material(2.0)], 1.0, AMPLITUDE)


def test_volume_source_matches_element_source():
    g = distorted(W18)
    f = lambda x: np.stack([x[:, 1], x[:, 0] ** 2, np.ones(len(x))], axis=-1)
    K, F = element_harmonic(g, W18, Material(2.0), 1.0, incident=f)
    m = gen_cuboid((1, 1, 1), (1, 1, 1))
    src = volume_source(m)
    assert src.vec.shape == (4 * m.n_nodes, 3 * len(src.points))
    # pure-function load on one hex: psi rows sum to the divergence theorem flux
    load = src.load(f(src.points)).reshape(-1, 4)
    assert abs(load[:, 3].sum()) <= 1e-12
    assert F.shape == (18 * 4,)


# ------------------------------------------------------- manufactured solution

K0 = 1.0


def exact(x):
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    A = np.stack([np.sin(Y) * np.sin(Z), np.sin(X) * np.sin(Z), np.sin(X) * np.sin(Y)], -1)
    psi = np.sin(X) * np.sin(Y) * np.sin(Z)
    g = np.stack([np.cos(X) * np.sin(Y) * np.sin(Z), np.sin(X) * np.cos(Y) * np.sin(Z),
                  np.sin(X) * np.sin(Y) * np.cos(Z)], -1)
    return A, psi, g


def mms_error(n):
    """Relative L2 error of (A, psi) for a divergence-free A on the unit cube.

    curl curl A = 2A and div A = 0, so the source is f = 2A - k0^2 (A + grad psi).
    """
    m = gen_cuboid((1, 1, 1), (n, n, n))
    bn = np.unique(np.concatenate([m.facet_nodes(e, f) for e, f in boundary_faces(m)]))
    A, psi, _ = exact(m.nodes)
    c = ConstraintSpec()
    for i in bn:
        for d in np.eye(3):
            c.constrain_a(i, d, float(A[i] @ d))
        c.constrain_psi(i, float(psi[i]))
    dm = build_dof_map(m, c)
    K = assemble_volume(m, lambda g, kind, ids: harmonic_blocks(g, kind, [VACUUM] * len(ids), K0), complex)
    src = volume_source(m)
    Aq, _, gq = exact(src.points)
    F = src.load(2 * Aq - K0**2 * (Aq + gq)).astype(complex)
    s = reduce_system(K, F, dm, dm.constrained_values(dtype=complex))
    x, _ = solve(s.K, s.F)
    U = dm.to_global(s.expand(x)).real
    q = quadrature(B27, 5)
    N = shape_values(B27, q.points)
    err = ref = 0.0
    for kind, (ids, conn) in m.groups().items():
        mp = map_physical(m.nodes[conn], kind, q.points)
        Uq = np.einsum("qn,enk->eqk", N, U[conn])
        Ae, pe, _ = exact(mp.x)
        W = mp.detJ * q.weights
        err += np.sum(W * (np.sum((Uq[..., :3] - Ae) ** 2, -1) + (Uq[..., 3] - pe) ** 2))
        ref += np.sum(W * (np.sum(Ae**2, -1) + pe**2))
    return np.sqrt(err / ref)


def test_manufactured_solution_convergence_order():
    e = np.array([mms_error(n) for n in (1, 2, 4)])
    rates = np.log2(e[:-1] / e[1:])
    assert rates.min() >= 2.8, rates


def test_harmonic_system_shape_on_shell():
    m = gen_spherical_shell(1.0, 2.0, 1, 3, 3)
    from maxpatch.dofmap import apply_pec
    dm = build_dof_map(m, apply_pec(ConstraintSpec(), m))
    inc = lambda x: np.exp(-1j * x[:, 2])[:, None] * np.array([1.0, 0, 0])
    s = assemble_harmonic(m, dm, {}, 1.0, incident=inc)
    assert s.K.shape == (dm.free_count, dm.free_count)
    assert abs(s.K - s.K.T).max() <= 1e-12 * abs(s.K).max()
    assert np.abs(s.F).max() > 0

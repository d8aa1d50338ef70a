import math

import numpy as np
import pytest

from maxpatch.meshgen import (ABC, B27, DIELECTRIC_INTERFACE, PEC, SYM_PATCH_OUTER, SYMMETRY_PLANE, W18,
                              MeshError, attach_thin_patch, boundary_faces, check_mesh, gen_cuboid,
                              gen_dielectric_sphere, gen_ellipsoidal_shell, gen_spherical_shell, mirror_probe,
                              read_mesh, retag_plane, sym_patch_tag, tag_axis, to_elements, validate, write_mesh)


def test_to_elements():
    assert to_elements(16, "intervals") == 8
    assert to_elements(16) == 16
    with pytest.raises(MeshError):
        to_elements(7, "intervals")
    with pytest.raises(MeshError):
        to_elements(4, "cells")


def test_shell_surfaces_and_tags():
    m = gen_spherical_shell(1.0, 3.0, 2, 3, 4)
    rep = check_mesh(m)
    assert rep.valid and rep.min_jacobian > 0
    assert m.tags() == {PEC, ABC}
    assert np.allclose(np.linalg.norm(m.nodes[m.tagged_nodes(PEC)], axis=1), 1.0, atol=1e-12)
    assert np.allclose(np.linalg.norm(m.nodes[m.tagged_nodes(ABC)], axis=1), 3.0, atol=1e-12)
    assert set(m.element_counts()) == {B27, W18}          # wedges at the poles
    assert m.n_elements == 2 * 3 * 4


def test_half_shell_has_symmetry_plane():
    m = gen_spherical_shell(1.0, 3.0, 2, 3, 2, span="half")
    assert np.all(m.nodes[:, 1] >= -1e-12)
    assert SYMMETRY_PLANE in m.tags()
    assert np.allclose(m.nodes[m.tagged_nodes(SYMMETRY_PLANE)][:, 1], 0.0, atol=1e-12)


def test_ellipsoid_inner_surface():
    m = gen_ellipsoidal_shell(1.0, 0.25, 2.5, 2, 4, 4)
    x = m.nodes[m.tagged_nodes(PEC)]
    lev = (x[:, 0] ** 2 + x[:, 1] ** 2) / 1.0 + x[:, 2] ** 2 / 0.25**2
    assert np.abs(lev - 1.0).max() <= 1e-10
    assert check_mesh(m).valid
    with pytest.raises(MeshError):
        gen_ellipsoidal_shell(1.0, 0.25, 0.9, 2, 4, 4)


def test_dielectric_sphere_regions_and_interface():
    m = gen_dielectric_sphere(0.5, 2.0, 2, 3, 4, 4)
    assert check_mesh(m).valid
    assert set(np.unique(m.region)) == {0, 1}
    x = m.nodes[m.tagged_nodes(DIELECTRIC_INTERFACE)]
    assert np.allclose(np.linalg.norm(x, axis=1), 0.5, atol=1e-12)
    assert PEC not in m.tags()


def test_cuboid_counts():
    m = gen_cuboid((math.pi,) * 3, (4, 4, 4))
    assert m.n_elements == 64 and m.n_nodes == 9**3
    assert len(m.facets) == 6 * 16 and m.tags() == {PEC}


def _quarter_cavity():
    m = gen_cuboid((math.pi / 2, math.pi, math.pi / 2), (2, 4, 2))
    for axis in (0, 2):
        m = retag_plane(m, axis, math.pi / 2)
        m = attach_thin_patch(m, axis, math.pi / 2, 0.01 * math.pi)
    return m


def test_quarter_cavity_has_36_elements():
    m = _quarter_cavity()
    assert m.n_elements == 36
    assert check_mesh(m).valid
    assert m.tags() == {PEC, sym_patch_tag(0), sym_patch_tag(2)}


def test_patch_synthesis_properties():
    base = gen_spherical_shell(1.0, 3.0, 2, 3, 2, span="half")
    base = retag_plane(base, 1, 0.0)
    nodes0 = base.nodes.copy()
    plane = base.node_sets["symmetry_plane"]
    t = 0.01
    m = attach_thin_patch(base, 1, 0.0, t)
    # original nodes are untouched and the patch adds two node layers
    assert np.array_equal(m.nodes[: len(nodes0)], nodes0)
    assert m.n_nodes - len(nodes0) == 2 * len(plane)
    outer = m.tagged_nodes(SYM_PATCH_OUTER)
    assert np.abs(np.abs(m.nodes[outer, 1]) - t).max() <= 1e-12
    assert tag_axis(sym_patch_tag(1)) == 1
    assert m.tags() == {PEC, ABC, sym_patch_tag(1)}
    vol = set(m.node_sets["patch_volume"].tolist())
    assert set(plane.tolist()) <= vol
    assert not vol & set(outer.tolist())
    assert check_mesh(m).valid
    with pytest.raises(MeshError):
        attach_thin_patch(base, 1, 0.0, 0.0)
    with pytest.raises(MeshError):
        attach_thin_patch(base, 0, 5.0, 0.01)


def test_patch_keeps_interface_facets():
    m = gen_dielectric_sphere(0.5, 2.0, 2, 2, 4, 2, span="half")
    n0 = len(m.facets_with(DIELECTRIC_INTERFACE))
    m = attach_thin_patch(retag_plane(m, 1, 0.0), 1, 0.0, 0.005)
    assert len(m.facets_with(DIELECTRIC_INTERFACE)) == n0 > 0


def test_mesh_roundtrip(tmp_path):
    m = _quarter_cavity()
    p = tmp_path / "q.mesh"
    write_mesh(m, p)
    r = read_mesh(p)
    assert np.array_equal(r.nodes, m.nodes) and r.kinds == m.kinds and r.facets == m.facets
    assert all(np.array_equal(r.node_sets[k], v) for k, v in m.node_sets.items())
    validate(r)


def test_read_mesh_errors(tmp_path):
    p = tmp_path / "empty.mesh"
    p.write_text("")
    with pytest.raises(MeshError):
        read_mesh(p)
    p.write_text("NODES 2\n0 0 0 0\n")
    with pytest.raises(MeshError):
        read_mesh(p)


def test_boundary_faces_of_single_hex():
    m = gen_cuboid((1, 1, 1), (1, 1, 1))
    assert len(boundary_faces(m)) == 6


def test_mirror_probe():
    x, s = mirror_probe([0.3, -1.0, 0.2], 1, 0.0)
    assert np.allclose(x, [0.3, 1.0, 0.2]) and np.allclose(s, [1, -1, 1])

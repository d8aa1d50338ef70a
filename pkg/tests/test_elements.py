import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxpatch.elements import (B27, W18, DegenerateElementError, face_measure, face_quadrature, inside_reference,
                               map_physical, quadrature, reference_element, reference_volume, shape_gradients,
                               shape_values, triangle_rule)

KINDS = (B27, W18)
coord = st.floats(-1.0, 1.0, allow_nan=False)


def ref_point(kind, a, b, c):
    """Map a point of the cube [-1, 1]^3 into the reference element."""
    if kind == B27:
        return np.array([a, b, c])
    u, v = (a + 1) / 2, (b + 1) / 2
    return np.array([u * (1 - v), v, c])          # collapsed square -> triangle


@pytest.mark.parametrize("kind", KINDS)
def test_kronecker_property(kind):
    ref = reference_element(kind)
    N = shape_values(kind, ref.node_local_coords)
    assert N.shape == (ref.node_count, ref.node_count)
    assert np.abs(N - np.eye(ref.node_count)).max() <= 1e-12


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=60, deadline=None)
@given(a=coord, b=coord, c=coord)
def test_partition_of_unity(kind, a, b, c):
    xi = ref_point(kind, a, b, c)
    assert abs(shape_values(kind, xi).sum() - 1.0) <= 1e-12
    assert np.abs(shape_gradients(kind, xi).sum(axis=0)).max() <= 1e-11


def _quadratic_monomials():
    return [e for e in itertools.product(range(3), repeat=3) if sum(e) <= 2]


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=40, deadline=None)
@given(a=coord, b=coord, c=coord, seed=st.integers(0, 2**31 - 1))
def test_quadratic_completeness(kind, a, b, c, seed):
    coef = np.random.default_rng(seed).normal(size=10)
    mons = _quadratic_monomials()

    def p(x):
        x = np.atleast_2d(x)
        return sum(k * np.prod(x ** np.array(e), axis=-1) for k, e in zip(coef, mons))

    nodes = reference_element(kind).node_local_coords
    xi = ref_point(kind, a, b, c)
    interp = shape_values(kind, xi) @ p(nodes)
    assert abs(interp - p(xi)[0]) <= 1e-10 * (1 + np.abs(coef).sum())


def test_b27_reproduces_triquadratics():
    nodes = reference_element(B27).node_local_coords
    f = lambda x: (x[..., 0] ** 2) * (x[..., 1] ** 2) * (x[..., 2] ** 2) + x[..., 0] * x[..., 1] ** 2
    xi = np.array([[0.3, -0.7, 0.11], [-0.95, 0.5, 0.5]])
    assert np.allclose(shape_values(B27, xi) @ f(nodes), f(xi), atol=1e-12)


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_gauss_exactness_b27(order):
    q = quadrature(B27, order)
    assert abs(q.weights.sum() - reference_volume(B27)) <= 1e-12
    d = 2 * order - 1
    for e in [(d, 0, 0), (0, d - 1, 0), (d - 1, d - 1, 2), (2, 0, d - 1)]:
        exact = np.prod([0.0 if k % 2 else 2.0 / (k + 1) for k in e])
        assert abs(q.weights @ np.prod(q.points ** np.array(e), axis=1) - exact) <= 1e-12


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_triangle_rule_exactness(order):
    from math import factorial
    p, w = triangle_rule(order)
    deg = {2: 2, 3: 5}.get(order, 2 * order - 1)
    for i in range(deg + 1):
        for j in range(deg + 1 - i):
            exact = factorial(i) * factorial(j) / factorial(i + j + 2)
            assert abs(w @ (p[:, 0] ** i * p[:, 1] ** j) - exact) <= 1e-13


def test_w18_volume_and_face_areas():
    assert abs(quadrature(W18, 3).weights.sum() - 1.0) <= 1e-13
    areas = [face_quadrature(W18, f, 3).weights.sum() for f in range(5)]
    assert np.allclose(areas, [0.5, 0.5, 2.0, 2 * np.sqrt(2.0), 2.0], atol=1e-13)
    assert np.allclose([face_quadrature(B27, f, 3).weights.sum() for f in range(6)], 4.0)


@pytest.mark.parametrize("kind", KINDS)
def test_face_nodes_lie_on_face(kind):
    ref = reference_element(kind)
    for f, (loc, shape) in enumerate(ref.faces):
        fr = face_quadrature(kind, f, 3)
        assert len(loc) == (9 if shape == "quad" else 6)
        # face nodes and face quadrature points share the face plane
        pts = np.vstack([ref.node_local_coords[list(loc)], fr.points])
        d = pts @ fr.normal
        assert np.ptp(d) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_affine_jacobian_positive_and_volume(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    S = np.diag(rng.uniform(0.5, 2.0, 3))
    A = Q @ S
    b = rng.normal(size=3)
    for kind in KINDS:
        geom = reference_element(kind).node_local_coords @ A.T + b
        q = quadrature(kind, 3)
        m = map_physical(geom, kind, q.points)
        assert np.all(m.detJ > 0)
        vol = (m.detJ * q.weights).sum()
        assert abs(vol - np.linalg.det(A) * reference_volume(kind)) <= 1e-10 * vol
        # gradients of the linear field x . g are exactly g
        g = rng.normal(size=3)
        grad = np.einsum("qna,n->qa", m.grads, geom @ g)
        assert np.allclose(grad, g, atol=1e-10)


def test_inverted_element_raises():
    geom = reference_element(B27).node_local_coords.copy()
    geom[:, 0] *= -1.0
    with pytest.raises(DegenerateElementError):
        map_physical(geom, B27, quadrature(B27, 2).points, element_ids=[7])


def test_face_measure_matches_reference_area():
    geom = 2.0 * reference_element(B27).node_local_coords
    fr = face_quadrature(B27, 1, 3)
    m = map_physical(geom, B27, fr.points)
    n, dS = face_measure(m.J, m.detJ, fr.normal)
    assert np.allclose(n, [1, 0, 0])
    assert abs((dS * fr.weights).sum() - 16.0) <= 1e-12


def test_inside_reference():
    assert inside_reference(W18, [0.2, 0.2, 0.0])
    assert not inside_reference(W18, [0.8, 0.3, 0.0])
    assert not inside_reference(B27, [0.0, 1.1, 0.0])


def test_unknown_kind_and_order():
    with pytest.raises(ValueError):
        quadrature("T10", 2)
    with pytest.raises(ValueError):
        quadrature(B27, 12)

import math

import numpy as np
import pytest

from maxpatch.harmonic import build_constraints
from maxpatch.meshgen import PEC, attach_thin_patch, gen_cuboid, gen_spherical_shell, retag_plane
from maxpatch.model import Material, NeumannPulseSpec, PhysicalConstants
from maxpatch.oracles import cavity_fields
from maxpatch.transient import (CavitySource, MidpointStepper, ProbeSpec, PulseSource, TransientProblem,
                                TransientState, assemble_transient, backward_derivative, cfl_estimate,
                                discrete_energy, init_state, read_series_csv, run, write_series_csv)

C3 = PhysicalConstants.with_speed_of_light(3e8)
PROBE = (1.1780, 0.3926, 0.7853)


def cavity_problem(n=2, steps=40, dt=1e-9):
    m = gen_cuboid((math.pi,) * 3, (n, n, n))
    return TransientProblem(m, CavitySource(3e8, constants=C3), dt=dt, steps=steps, homogeneous_pec=True,
                            constants=C3)


def test_cavity_tracks_closed_form():
    res = run(cavity_problem(3), [ProbeSpec(PROBE)])
    s = res.series[0]
    O = np.array([cavity_fields(np.array(PROBE), t, 3e8, Material(), C3).E for t in s.times])
    assert len(s.times) == 41 and s.times[-1] == pytest.approx(4e-8)
    err = np.abs(s.values - O).max(0) / np.abs(O).max(0)
    assert err.max() <= 0.15
    assert res.residual <= 1e-8


def test_source_free_energy_is_conserved():
    p = cavity_problem(2)
    dm = build_constraints(p.mesh, (), PEC, homogeneous=True)
    blocks = assemble_transient(p.mesh, dm, constants=C3)
    state = init_state(p.mesh, dm, CavitySource(3e8, constants=C3))
    dt = 50 * cfl_estimate(p.mesh, C3)
    st = MidpointStepper(blocks, dt)
    e0 = discrete_energy(state, blocks)
    for _ in range(100):
        state = st.step(state)
    assert abs(discrete_energy(state, blocks) - e0) <= 1e-10 * e0


def test_zero_source_stays_zero():
    res = run(cavity_problem(1, steps=3).__class__(gen_cuboid((1, 1, 1), (1, 1, 1)), None, steps=3,
                                                     homogeneous_pec=True), [ProbeSpec((0.5, 0.5, 0.5))])
    assert not np.any(res.series[0].values)


def test_cfl_scales_with_material():
    m = gen_cuboid((1, 1, 1), (2, 2, 2))
    a = cfl_estimate(m, C3)
    assert a == pytest.approx(0.25 / (3e8 * math.sqrt(3)))
    assert cfl_estimate(m, C3, {0: Material(4.0)}) == pytest.approx(2 * a)


def test_backward_derivative_exact_for_quadratics():
    t = np.linspace(0, 1, 11)
    d = backward_derivative(t, 3 * t**2 + t)
    assert np.allclose(d[2:], 6 * t[2:] + 1)


def test_probe_spec_validation():
    with pytest.raises(ValueError):
        ProbeSpec((0, 0, 0), "B")
    with pytest.raises(ValueError):
        ProbeSpec((0, 0, 0), "E.t")
    with pytest.raises(ValueError):
        run(cavity_problem(1, steps=-1))
    with pytest.raises(ValueError):
        MidpointStepper(None, 0.0)


def test_series_csv_roundtrip(tmp_path):
    t = np.linspace(0, 1e-8, 5)
    v = np.sin(t * 1e8)
    write_series_csv(tmp_path / "s.csv", t, v)
    t2, v2 = read_series_csv(tmp_path / "s.csv")
    assert np.array_equal(t, t2) and np.array_equal(v, v2)
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        read_series_csv(tmp_path / "bad.csv")


def test_pulse_on_small_half_sphere_mirrors():
    spec = NeumannPulseSpec(25.99e-9, (0, 0, -1.2), 5.25e-9, constants=C3)
    m = retag_plane(gen_spherical_shell(1.0, 2.5, 2, 4, 3, span="half"), 1, 0.0)
    m = attach_thin_patch(m, 1, 0.0, 0.01)
    p = TransientProblem(m, PulseSource(spec), dt=1e-9, steps=30, symmetry=((1, 0.0),), constants=C3)
    probes = [ProbeSpec((0.3, 1.2, -0.4), "E"), ProbeSpec((0.3, -1.2, -0.4), "E"),
              ProbeSpec((0.3, -1.2, -0.4), "E.t", (1, 0, 0), total=True)]
    res = run(p, probes)
    a, b, c = (s.values for s in res.series)
    assert np.abs(a).max() > 0
    assert np.allclose(b, a * [1, -1, 1])
    inc = np.array([PulseSource(spec).incident(np.array([0.3, -1.2, -0.4]), t)[0][0] for t in res.series[0].times])
    assert np.allclose(c, b[:, 0] + inc)


def test_affine_gauge_modes_are_null_and_get_pinned():
    from maxpatch.dofmap import ConstraintSpec, build_dof_map
    from maxpatch.harmonic import gauge_nodes
    from maxpatch.meshgen import gen_dielectric_sphere
    m = gen_dielectric_sphere(1.0, 2.5, 1, 2, 3, 4)
    blocks = assemble_transient(m, build_dof_map(m, ConstraintSpec()), {1: Material(4.0)}, constants=C3)
    b = np.array([0.3, -1.1, 0.7])
    u = np.zeros((m.n_nodes, 4))
    u[:, :3] = b
    u[:, 3] = -(m.nodes @ b) - 0.4                    # A + grad psi = 0
    for A in (blocks.M, blocks.C, blocks.K):
        assert np.abs(A @ u.reshape(-1)).max() <= 1e-9 * abs(A).max() * np.abs(u).max()
    g = gauge_nodes(m)
    assert len(set(g)) == 4
    assert np.linalg.matrix_rank(m.nodes[g[1:]] - m.nodes[g[0]]) == 3
    assert len(build_constraints(m, (), PEC).constrained_index()) == 4

import math

import numpy as np
import pytest

from westervelt.angles import AngleConfig
from westervelt.assembly import PhysParams, assemble_laplacian, assemble_mass
from westervelt.integrator import Trajectory, scheme_params
from westervelt.mesh import generate_channel, make_mesh, write_msh
from westervelt.scenarios import (
    ConfigError,
    Excitation,
    MeshSpec,
    Scenario,
    SourceSpec,
    Variant,
    build_mesh,
    energy_diagnostic,
    excitation_signal,
    gaussian_source,
    improvement,
    load_scenario,
    node_injection,
    parse_variant,
    pressure_field,
    relative_l2_error,
    restrict_reference,
    run_scenario,
    space_time_error,
    water,
)

from oracles import quad_moment2, simplex_quadrature

FREQ = 210e3
AMP = 0.01


def make_trajectory(times, psi, psi_dot):
    times = np.asarray(times, dtype=np.float64)
    return Trajectory(
        times=times,
        steps=np.arange(times.size, dtype=np.int64),
        psi=np.asarray(psi, dtype=np.float64),
        psi_dot=np.asarray(psi_dot, dtype=np.float64),
        iterations=np.zeros(max(times.size - 1, 0), dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# excitation


def test_excitation_zero_at_start():
    assert excitation_signal(0.0, AMP, FREQ) == (0.0, 0.0, 0.0)


def test_excitation_continuity_at_switch():
    # value and first derivative agree at t = 2/f to machine precision
    # (the one-ulp step of t moves sin(wt) by w*ulp, so bounds are a few
    # ulps of each derivative's natural scale); the signal is C^1 only:
    # the second derivative jumps by exactly 2*A*f*w, the surviving
    # ramp-slope term
    t = 2.0 / FREQ
    w = 2.0 * math.pi * FREQ
    below = excitation_signal(np.nextafter(t, 0.0), AMP, FREQ)
    at = excitation_signal(t, AMP, FREQ)
    assert abs(below[0] - at[0]) <= 1e-13 * AMP
    assert abs(below[1] - at[1]) <= 1e-13 * AMP * w
    assert below[2] - at[2] == pytest.approx(2.0 * AMP * FREQ * w, rel=1e-12)


def test_excitation_steady_branch():
    t = 3.7 / FREQ
    w = 2.0 * math.pi * FREQ
    g, gd, gdd = excitation_signal(t, AMP, FREQ)
    assert g == pytest.approx(AMP * math.sin(w * t), rel=1e-15)
    assert gd == pytest.approx(AMP * w * math.cos(w * t), rel=1e-15)
    assert gdd == pytest.approx(-AMP * w * w * math.sin(w * t), rel=1e-15)


@pytest.mark.parametrize("t_frac", [0.3, 0.9, 1.4, 1.99, 2.5, 4.0])
def test_excitation_derivatives_match_finite_differences(t_frac):
    t = t_frac / FREQ
    dt = 1e-4 / FREQ
    g = lambda s: excitation_signal(s, AMP, FREQ)[0]
    _, gd, gdd = excitation_signal(t, AMP, FREQ)
    fd1 = (g(t + dt) - g(t - dt)) / (2 * dt)
    fd2 = (g(t + dt) - 2 * g(t) + g(t - dt)) / dt**2
    assert gd == pytest.approx(fd1, rel=1e-6, abs=1e-9 * AMP * FREQ)
    assert gdd == pytest.approx(fd2, rel=1e-5, abs=1e-6 * AMP * FREQ**2)


def test_excitation_dataclass_is_callable():
    exc = Excitation(amplitude=AMP, frequency=FREQ)
    assert exc(1.0 / FREQ) == excitation_signal(1.0 / FREQ, AMP, FREQ)


# ---------------------------------------------------------------------------
# volume source


def two_bump_spec(amplitude=1e11):
    return SourceSpec(
        amplitude=amplitude,
        frequency=FREQ,
        centers=((0.02, 0.015), (0.01, 0.015)),
        weights=(1.0, -2.0 / 3.0),
        sigma_x=5e-4,
        sigma_y=5e-4,
    )


def test_gaussian_source_vanishes_with_sine():
    spec = two_bump_spec()
    t = 0.5 / FREQ  # sin(pi) = 0
    vals = gaussian_source(np.array([0.02, 0.01]), np.array([0.015, 0.015]), t, spec)
    assert np.allclose(vals, 0.0, atol=1e11 * 1e-12)


def test_gaussian_source_peaks():
    spec = two_bump_spec()
    t = 0.25 / FREQ  # sin peak
    s = math.sin(2.0 * math.pi * FREQ * t)
    at1 = gaussian_source(0.02, 0.015, t, spec)
    at2 = gaussian_source(0.01, 0.015, t, spec)
    # centers are 20 sigma apart, cross terms are exp(-400)
    assert at1 == pytest.approx(spec.amplitude * s, rel=1e-12)
    assert at2 == pytest.approx(-(2.0 / 3.0) * spec.amplitude * s, rel=1e-12)


def test_gaussian_source_decays():
    spec = two_bump_spec()
    t = 0.25 / FREQ
    off = gaussian_source(0.02 + 5e-4, 0.015, t, spec)
    at1 = gaussian_source(0.02, 0.015, t, spec)
    assert abs(off) == pytest.approx(abs(at1) * math.exp(-1.0), rel=1e-10)


def test_pressure_field():
    psi_dot = np.array([0.0, 0.01, -0.02])
    assert np.array_equal(pressure_field(psi_dot, 1000.0), np.array([0.0, 10.0, -20.0]))


# ---------------------------------------------------------------------------
# restriction


def test_restriction_is_identity_on_same_mesh():
    mesh = generate_channel(0.004, 0.006, 10.0, 0.002)
    vals = np.linspace(0.0, 1.0, mesh.num_nodes)
    assert np.array_equal(restrict_reference(vals, mesh, mesh), vals)


def test_restriction_extracts_channel_from_extended_channel():
    mesh = generate_channel(0.004, 0.006, 20.0, 0.001)
    ref = generate_channel(0.004, 0.006, 20.0, 0.001, extension=0.003)
    idx = node_injection(ref, mesh)
    assert np.array_equal(ref.nodes[idx], mesh.nodes)  # bitwise lattice match
    stack = np.vstack([ref.nodes[:, 0], ref.nodes[:, 1] ** 2])
    got = restrict_reference(stack, ref, mesh)
    assert np.array_equal(got[0], mesh.nodes[:, 0])
    assert np.array_equal(got[1], mesh.nodes[:, 1] ** 2)


def test_restriction_rejects_perturbed_node():
    mesh = generate_channel(0.004, 0.006, 0.0, 0.002)
    nodes = mesh.nodes.copy()
    nodes[5] += 1e-6
    moved = make_mesh(mesh.dim, nodes, mesh.elements, mesh.facets, mesh.facet_tags)
    ref = generate_channel(0.004, 0.006, 0.0, 0.002, extension=0.004)
    with pytest.raises(ValueError, match="node mismatch"):
        node_injection(ref, moved)


# ---------------------------------------------------------------------------
# error metrics


def two_triangle_square():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elements = np.array([[0, 1, 2], [0, 2, 3]])
    facets = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    tags = np.array([3, 3, 3, 3])
    return make_mesh(2, nodes, elements, facets, tags)


def exact_l2_norm(mesh, nodal):
    # piecewise-linear norm by high-order quadrature, independent of the
    # mass matrix under test
    pts, wts = simplex_quadrature(2)
    total = 0.0
    for tri in mesh.elements:
        coords = mesh.nodes[tri]
        e1, e2 = coords[1] - coords[0], coords[2] - coords[0]
        area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
        vals = nodal[tri]
        for bary, w in zip(pts, wts):
            total += w * area * float(bary @ vals) ** 2
    return math.sqrt(total)


def test_relative_l2_error_trivial_cases():
    mesh = two_triangle_square()
    mass = assemble_mass(mesh)
    b = np.array([1.0, 2.0, 0.5, -1.0])
    err, is_rel = relative_l2_error(b, b, mass)
    assert err == 0.0 and is_rel
    err, is_rel = relative_l2_error(2.0 * b, b, mass)
    assert is_rel
    assert err == pytest.approx(1.0, rel=1e-14)


def test_relative_l2_error_matches_exact_integration():
    mesh = two_triangle_square()
    mass = assemble_mass(mesh)
    a = mesh.nodes[:, 0] + 2.0 * mesh.nodes[:, 1]  # linear fields, exactly
    b = 1.0 + mesh.nodes[:, 0] - mesh.nodes[:, 1]  # represented by P1
    err, is_rel = relative_l2_error(a, b, mass)
    assert is_rel
    expected = exact_l2_norm(mesh, a - b) / exact_l2_norm(mesh, b)
    assert err == pytest.approx(expected, rel=1e-13)


def test_relative_l2_error_zero_reference():
    mesh = two_triangle_square()
    mass = assemble_mass(mesh)
    a = np.array([1.0, 0.0, 0.0, 0.0])
    err, is_rel = relative_l2_error(a, np.zeros(4), mass)
    assert not is_rel
    assert err == pytest.approx(exact_l2_norm(mesh, a), rel=1e-13)


def test_space_time_error_identical_trajectories():
    times = [0.0, 0.5, 1.0]
    psi = np.random.default_rng(3).normal(size=(3, 4))
    traj = make_trajectory(times, psi, 2.0 * psi)
    ref = make_trajectory(times, psi.copy(), 2.0 * psi)
    mass = assemble_mass(two_triangle_square())
    assert space_time_error(traj, ref, mass) == (0.0, 0.0)


def test_space_time_error_homogeneity():
    times = [0.0, 0.3, 0.6, 1.2]
    rng = np.random.default_rng(4)
    psi = rng.normal(size=(4, 4))
    pd = rng.normal(size=(4, 4))
    eps = 0.05
    traj = make_trajectory(times, (1 + eps) * psi, (1 + eps) * pd)
    ref = make_trajectory(times, psi, pd)
    mass = assemble_mass(two_triangle_square())
    e_psi, e_u = space_time_error(traj, ref, mass)
    assert e_psi == pytest.approx(eps, rel=1e-12)
    assert e_u == pytest.approx(eps, rel=1e-12)


def test_space_time_error_two_step_hand_case():
    # scalar norms: diff 1, 1, 2 and ref 0, 1, 1 on times 0, 1, 2;
    # trapezoid of squares: num = 1 + 2.5, den = 0.5 + 1
    mass = np.array([[1.0]])
    traj = make_trajectory([0.0, 1.0, 2.0], [[1.0], [2.0], [3.0]], [[0.0], [0.0], [0.0]])
    ref = make_trajectory([0.0, 1.0, 2.0], [[0.0], [1.0], [1.0]], [[0.0], [0.0], [0.0]])
    e_psi, e_u = space_time_error(traj, ref, mass)
    assert e_psi == pytest.approx(math.sqrt(3.5 / 1.5), rel=1e-14)
    assert e_u == 0.0


def test_space_time_error_sign_flip_invariance():
    times = [0.0, 1.0, 2.0]
    rng = np.random.default_rng(5)
    psi = rng.normal(size=(3, 4))
    ref_psi = rng.normal(size=(3, 4))
    mass = assemble_mass(two_triangle_square())
    a = make_trajectory(times, psi, psi)
    b = make_trajectory(times, ref_psi, ref_psi)
    flipped = space_time_error(
        make_trajectory(times, -psi, -psi), make_trajectory(times, -ref_psi, -ref_psi), mass
    )
    assert space_time_error(a, b, mass) == pytest.approx(flipped, rel=1e-14)


def test_space_time_error_grid_mismatch():
    mass = np.array([[1.0]])
    traj = make_trajectory([0.0, 1.0], [[1.0], [1.0]], [[0.0], [0.0]])
    ref = make_trajectory([0.0, 1.0, 2.0], [[1.0], [1.0], [1.0]], [[0.0], [0.0], [0.0]])
    with pytest.raises(ValueError, match="snapshot grids"):
        space_time_error(traj, ref, mass)


def test_improvement_arithmetic():
    assert improvement(0.05, 0.02) == pytest.approx(0.6, rel=1e-14)
    assert improvement(0.05, 0.05) == 0.0
    with pytest.raises(ValueError):
        improvement(0.0, 0.1)


# ---------------------------------------------------------------------------
# energy diagnostic


def test_energy_zero_state():
    mesh = two_triangle_square()
    mass, lap = assemble_mass(mesh), assemble_laplacian(mesh)
    assert energy_diagnostic(np.zeros(4), np.zeros(4), water(), mass, lap) == 0.0


def test_energy_constant_potential():
    mesh = two_triangle_square()
    mass, lap = assemble_mass(mesh), assemble_laplacian(mesh)
    e = energy_diagnostic(np.full(4, 3.0), np.zeros(4), water(), mass, lap)
    assert abs(e) < 1e-15


def test_energy_linear_reduction():
    # k = 0: E = (1/2)(||psi_t/c||_M^2 + psi' L psi)
    mesh = two_triangle_square()
    mass, lap = assemble_mass(mesh), assemble_laplacian(mesh)
    phys = PhysParams(c=1500.0, b=0.0, rho=1000.0, b_over_a=-2.0)
    rng = np.random.default_rng(6)
    psi, pd = rng.normal(size=4), rng.normal(size=4)
    expected = 0.5 * (float(pd @ (mass @ pd)) / phys.c**2 + float(psi @ (lap @ psi)))
    assert energy_diagnostic(psi, pd, phys, mass, lap) == pytest.approx(expected, rel=1e-14)


def test_energy_clamps_degenerate_weight():
    mesh = two_triangle_square()
    mass, lap = assemble_mass(mesh), assemble_laplacian(mesh)
    phys = water()
    huge = np.full(4, 2.0 / (phys.k * phys.c**2))  # radicand exactly zero
    e = energy_diagnostic(np.zeros(4), huge, phys, mass, lap)
    assert e == 0.0
    e = energy_diagnostic(np.zeros(4), 2.0 * huge, phys, mass, lap)  # negative radicand
    assert e == 0.0


# ---------------------------------------------------------------------------
# variants


def test_variant_labels():
    assert Variant(0.5).label == "abc05"
    assert Variant(0.0, adaptive=True).label == "abc0-adaptive"
    assert Variant(1.0, fixed_theta_deg=50.0).label == "abc1-fixed50"


def test_parse_variant_roundtrip():
    for text in ["abc0", "abc05", "abc1", "abc05-adaptive", "abc1-fixed20", "abc0-fixed37.5"]:
        assert parse_variant(text).label == text


def test_parse_variant_rejects_garbage():
    for bad in ["abc2", "abc05-slow", "abc05-fixedxx", "abc05-fixed120", ""]:
        with pytest.raises(ConfigError):
            parse_variant(bad)


# ---------------------------------------------------------------------------
# config loading


GOOD_TOML = """
name = "channel-smoke"

[mesh]
kind = "channel"
width = 0.004
length = 0.006
tilt_deg = 20.0
h = 0.001

[excitation]
amplitude = 0.01
frequency = 210e3

[time]
t_final = 9.52e-6
steps_per_period = 24

[abc]
sigma = 0.5
adaptive = true
"""


def write_scenario(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_scenario_defaults(tmp_path):
    sc = load_scenario(write_scenario(tmp_path, GOOD_TOML))
    assert sc.name == "channel-smoke"
    assert sc.mesh.kind == "channel"
    assert sc.phys == water()
    assert sc.variant == Variant(0.5, adaptive=True)
    assert sc.excitation == Excitation(0.01, 210e3)
    assert sc.source is None
    # 9.52e-6 s * 210 kHz = 1.9992 periods -> 48 steps at 24 per period
    assert sc.n_steps == 48
    assert sc.scheme == scheme_params(0.5)
    assert sc.extension == pytest.approx(1500.0 * 9.52e-6 / 2.0)
    assert sc.snapshot_stride == 1
    assert sc.angle_cfg == AngleConfig(p1=0.1, p2=0.5, reference_amplitude=0.01)


def test_load_scenario_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "absent.toml")


def test_load_scenario_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(write_scenario(tmp_path, "name = [unclosed"))


def test_load_scenario_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown keys"):
        load_scenario(write_scenario(tmp_path, GOOD_TOML + "\n[abc2]\nx = 1\n"))


def test_load_scenario_requires_one_forcing(tmp_path):
    extra = """
[source]
amplitude = 1e11
frequency = 210e3
centers = [[0.02, 0.015], [0.01, 0.015]]
weights = [1.0, -0.6666666666666666]
sigma_x = 5e-4
sigma_y = 5e-4
"""
    with pytest.raises(ConfigError, match="exactly one"):
        load_scenario(write_scenario(tmp_path, GOOD_TOML + extra))


def test_load_scenario_rejects_bad_sigma(tmp_path):
    text = GOOD_TOML.replace("sigma = 0.5", "sigma = 0.3")
    with pytest.raises(ConfigError, match="sigma"):
        load_scenario(write_scenario(tmp_path, text))


def test_load_scenario_steps_exclusive(tmp_path):
    text = GOOD_TOML.replace("steps_per_period = 24", "steps_per_period = 24\nn_steps = 100")
    with pytest.raises(ConfigError, match="exactly one of n_steps"):
        load_scenario(write_scenario(tmp_path, text))


def test_load_scenario_source_form(tmp_path):
    text = """
[mesh]
kind = "square"
side = 0.03
h = 0.003

[source]
amplitude = 1e11
frequency = 210e3
centers = [[0.02, 0.015], [0.01, 0.015]]
weights = [1.0, -0.6666666666666666]
sigma_x = 5e-4
sigma_y = 5e-4

[time]
t_final = 9.52e-6
n_steps = 20

[abc]
sigma = 0.5

[reference]
extension = 0.004

[output]
snapshot_stride = 5
"""
    sc = load_scenario(write_scenario(tmp_path, text))
    assert sc.excitation is None
    assert sc.source == two_bump_spec()
    assert sc.extension == 0.004
    assert sc.snapshot_stride == 5
    assert sc.angle_cfg.reference_amplitude is None  # running max fallback
    assert sc.n_steps == 20


def test_load_scenario_explicit_physics(tmp_path):
    text = GOOD_TOML + """
[physics]
c = 340.0
b = 0.0
rho = 1.2
b_over_a = -2.0
"""
    sc = load_scenario(write_scenario(tmp_path, text))
    assert sc.phys.c == 340.0
    assert sc.phys.k == 0.0


# ---------------------------------------------------------------------------
# scenario runs


def smoke_scenario(adaptive=True, n_steps=40, t_final=9.52e-6):
    return Scenario(
        name="smoke",
        mesh=MeshSpec(kind="channel", width=0.004, length=0.006, tilt_deg=20.0, h=5e-4),
        phys=water(),
        t_final=t_final,
        n_steps=n_steps,
        scheme=scheme_params(0.5),
        variant=Variant(0.5, adaptive=adaptive),
        angle_cfg=AngleConfig(reference_amplitude=AMP),
        excitation=Excitation(AMP, FREQ),
        extension=1500.0 * t_final / 2.0,
        snapshot_stride=2,
    )


def test_run_scenario_smoke():
    sc = smoke_scenario()
    result = run_scenario(sc)
    assert set(result.results) == {"abc05-adaptive"}
    rep = result.results["abc05-adaptive"].report
    assert rep.steps[0] == 0 and rep.steps[-1] == sc.n_steps
    assert np.all(rep.rel_err_psi >= 0.0)
    assert np.all(rep.err_psi >= 0.0)
    assert np.all(rep.energy >= 0.0)
    assert rep.e_psi >= 0.0 and math.isfinite(rep.e_psi)
    assert rep.e_u >= 0.0 and math.isfinite(rep.e_u)
    # before the wave reaches anything the reference is zero: guard reports 0
    assert rep.rel_err_psi[0] == 0.0
    # the truncated mesh nodes live inside the reference mesh
    assert result.ref_mesh.num_nodes > result.mesh.num_nodes


def test_run_scenario_error_nonzero_after_arrival():
    sc = smoke_scenario()
    rep = run_scenario(sc).results["abc05-adaptive"].report
    # wave reaches the absorbing edge within ~length/c and errors show up
    arrival = 0.006 / 1500.0
    late = rep.times > 2.0 * arrival
    assert late.any()
    assert rep.err_psi[late].max() > 0.0


def test_run_scenario_reference_reuse_and_multiple_variants():
    sc = smoke_scenario()
    base = run_scenario(sc, variants=[Variant(0.5)])
    again = run_scenario(
        sc,
        variants=[Variant(0.5), Variant(0.0, adaptive=True)],
        reference=base.reference,
        ref_mesh=base.ref_mesh,
    )
    assert set(again.results) == {"abc05", "abc0-adaptive"}
    a = base.results["abc05"].report
    b = again.results["abc05"].report
    assert np.array_equal(a.rel_err_psi, b.rel_err_psi)  # same reference, same run
    assert a.e_psi == b.e_psi


def test_run_scenario_deterministic():
    sc = smoke_scenario(n_steps=20)
    r1 = run_scenario(sc)
    r2 = run_scenario(sc)
    k = "abc05-adaptive"
    assert np.array_equal(r1.results[k].trajectory.psi, r2.results[k].trajectory.psi)
    assert r1.results[k].report.e_psi == r2.results[k].report.e_psi


def test_run_scenario_records_angles():
    sc = smoke_scenario(n_steps=20)
    result = run_scenario(sc, record_angles=True)
    snaps = result.results["abc05-adaptive"].trajectory.angle_snapshots
    assert snaps, "adaptive run should record angle snapshots"
    step, t, theta_deg, enabled = snaps[-1]
    assert theta_deg.shape == enabled.shape


def test_build_mesh_rejects_unknown_kind():
    with pytest.raises(ConfigError):
        build_mesh(MeshSpec(kind="torus"))


def test_scenario_guard_scales():
    sc = smoke_scenario()
    psi_scale, u_scale = sc.guard_scales()
    assert psi_scale == AMP
    assert u_scale == pytest.approx(1000.0 * 2.0 * math.pi * FREQ * AMP)


MSH_TOML = """
name = "msh-smoke"

[mesh]
kind = "msh"
path = "chan.msh"
reference_path = "chan_ref.msh"

[excitation]
amplitude = 0.01
frequency = 210e3

[time]
t_final = 9.52e-6
n_steps = 40

[abc]
sigma = 0.5
adaptive = true

[output]
snapshot_stride = 2
"""


def test_msh_scenario_matches_generated(tmp_path):
    # the generated meshes round-tripped through files must reproduce
    # the generated-kind run bit for bit, including the reference
    sc = smoke_scenario()
    (tmp_path / "chan.msh").write_text(write_msh(build_mesh(sc.mesh)))
    (tmp_path / "chan_ref.msh").write_text(write_msh(build_mesh(sc.mesh, sc.extension)))
    msh_sc = load_scenario(write_scenario(tmp_path, MSH_TOML))
    assert msh_sc.mesh.kind == "msh"
    assert msh_sc.extension == math.inf  # the reference file sets the extent
    got = run_scenario(msh_sc).results["abc05-adaptive"].report
    want = run_scenario(sc).results["abc05-adaptive"].report
    assert np.array_equal(got.err_psi, want.err_psi)
    assert np.array_equal(got.rel_err_u, want.rel_err_u)
    assert got.e_psi == want.e_psi and got.e_u == want.e_u
    assert want.e_psi > 0.0  # a self-comparison would be all zeros


def test_msh_scenario_rejects_reference_table(tmp_path):
    bad = MSH_TOML + '\n[reference]\nextension = "auto"\n'
    (tmp_path / "chan.msh").write_text("")
    (tmp_path / "chan_ref.msh").write_text("")
    with pytest.raises(ConfigError, match="reference_path"):
        load_scenario(write_scenario(tmp_path, bad))

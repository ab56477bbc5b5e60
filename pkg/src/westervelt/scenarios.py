"""Experiment harness: scenario configs, reference runs and error metrics.

A scenario couples a mesh recipe with physical parameters, a forcing
(either a ramped-sine excitation on the Dirichlet boundary or a sum of
Gaussian volume sources), time-stepping controls and an absorbing
boundary treatment.  Errors are measured against a second run on an
enlarged reference domain whose lattice contains every node of the
truncated domain, so restriction is a plain index copy and the reported
error isolates the boundary treatment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np
from scipy.spatial import cKDTree

from .angles import AngleConfig
from .assembly import PhysParams, assemble_laplacian, assemble_mass
from .integrator import Operators, SchemeParams, Trajectory, run, scheme_params
from .mesh import (
    Mesh,
    generate_channel,
    generate_plate_octant,
    generate_square,
    parse_msh,
)

# relative-error guard: report 0 while the reference norm is below this
# fraction of the forcing scale
GUARD_FRACTION = 1e-12


class ConfigError(ValueError):
    """Scenario file is missing, malformed or inconsistent."""


def water() -> PhysParams:
    """Sound speed, diffusivity, density and B/A of water."""
    return PhysParams(c=1500.0, b=6e-9, rho=1000.0, b_over_a=5.0)


# ---------------------------------------------------------------------------
# forcing


def excitation_signal(t: float, amplitude: float, frequency: float):
    """Ramped sine excitation and its first two time derivatives.

    g(t) = (f^2/4) t^2 A sin(wt) while t < 2/f and A sin(wt) afterwards;
    the ramp factor reaches exactly 1 at the switch, so the signal and
    its first derivative are continuous there.
    """
    w = 2.0 * math.pi * frequency
    s = math.sin(w * t)
    c = math.cos(w * t)
    if t < 2.0 / frequency:
        q = 0.25 * frequency * frequency
        r = q * t * t  # ramp factor, hits 1 at t = 2/f
        g = amplitude * r * s
        gd = amplitude * (2.0 * q * t * s + r * w * c)
        gdd = amplitude * (2.0 * q * s + 4.0 * q * t * w * c - r * w * w * s)
        return g, gd, gdd
    return amplitude * s, amplitude * w * c, -amplitude * w * w * s


@dataclass(frozen=True)
class Excitation:
    """Boundary signal; callable with t, usable as an integrator dirichlet_fn."""

    amplitude: float
    frequency: float

    def __call__(self, t: float):
        return excitation_signal(t, self.amplitude, self.frequency)


@dataclass(frozen=True)
class SourceSpec:
    """Sine-modulated sum of Gaussian bumps forcing the volume equation."""

    amplitude: float
    frequency: float
    centers: tuple
    weights: tuple
    sigma_x: float
    sigma_y: float


def gaussian_source(x, y, t: float, spec: SourceSpec):
    """Evaluate the volume source at points (x, y) and time t."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    bumps = np.zeros(np.broadcast(x, y).shape)
    for (cx, cy), weight in zip(spec.centers, spec.weights):
        bumps += weight * np.exp(
            -(((x - cx) / spec.sigma_x) ** 2) - ((y - cy) / spec.sigma_y) ** 2
        )
    return spec.amplitude * math.sin(2.0 * math.pi * spec.frequency * t) * bumps


def make_source(spec: SourceSpec):
    """Nodal source callback (nodes, t) -> values for the integrator."""

    def fn(nodes, t):
        return gaussian_source(nodes[:, 0], nodes[:, 1], t, spec)

    return fn


def pressure_field(psi_dot, rho: float) -> np.ndarray:
    """Acoustic pressure u = rho * psi_t."""
    return rho * np.asarray(psi_dot)


# ---------------------------------------------------------------------------
# restriction and error metrics


def node_injection(ref_mesh: Mesh, mesh: Mesh, tol: float = 1e-12) -> np.ndarray:
    """Index of every truncated-domain node inside the reference node array.

    Generated mesh pairs share a lattice, so each node must coincide
    with a reference node within tol; anything else is a node mismatch
    (arbitrary mesh pairs would need interpolation, which is out of
    scope here).
    """
    tree = cKDTree(ref_mesh.nodes)
    dist, idx = tree.query(mesh.nodes)
    bad = np.flatnonzero(dist > tol)
    if bad.size:
        head = ", ".join(str(int(i)) for i in bad[:10])
        raise ValueError(
            f"node mismatch: {bad.size} truncated-domain nodes have no "
            f"reference counterpart within {tol:g} (first ids: {head})"
        )
    return idx.astype(np.int64)


def restrict_reference(psi_ref, ref_mesh: Mesh, mesh: Mesh) -> np.ndarray:
    """Restrict reference nodal data to the truncated domain by node identity.

    Works on a single field or a stack of snapshots (last axis = nodes).
    """
    return np.asarray(psi_ref)[..., node_injection(ref_mesh, mesh)]


def mass_norm(v, mass) -> float:
    """L2(Omega) norm of a P1 field via its mass matrix."""
    v = np.asarray(v)
    return math.sqrt(max(float(v @ (mass @ v)), 0.0))


def relative_l2_error(a, b, mass):
    """Relative L2 distance of a from b: ||a - b||_M / ||b||_M.

    Returns (value, True); if b has zero norm the absolute norm of the
    difference is returned with flag False.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("fields have different lengths")
    num = mass_norm(a - b, mass)
    den = mass_norm(b, mass)
    if den > 0.0:
        return num / den, True
    return num, False


def _trapezoid(values, times) -> float:
    values = np.asarray(values, dtype=np.float64)
    dt = np.diff(np.asarray(times, dtype=np.float64))
    return float(np.sum(0.5 * dt * (values[1:] + values[:-1])))


def _snapshot_norms(fields, mass) -> np.ndarray:
    # squared M-norm of every row
    prod = (mass @ fields.T).T
    return np.sqrt(np.maximum(np.einsum("ij,ij->i", fields, prod), 0.0))


def space_time_error(traj: Trajectory, ref: Trajectory, mass, ref_map=None):
    """Relative space-time L2 errors (e_psi, e_u) of a run vs its reference.

    Time integrals of the squared spatial norms use the composite
    trapezoid over the shared snapshot grid.  The density factor of
    u = rho psi_t cancels in the ratio, so velocities are compared
    directly.
    """
    if traj.steps.shape != ref.steps.shape or not np.array_equal(traj.steps, ref.steps):
        raise ValueError("snapshot grids differ between run and reference")
    ref_psi = ref.psi if ref_map is None else ref.psi[:, ref_map]
    ref_pd = ref.psi_dot if ref_map is None else ref.psi_dot[:, ref_map]

    def ratio(a, b):
        num = _trapezoid(_snapshot_norms(a - b, mass) ** 2, traj.times)
        den = _trapezoid(_snapshot_norms(b, mass) ** 2, traj.times)
        if den > 0.0:
            return math.sqrt(num / den)
        return 0.0 if num == 0.0 else math.inf

    return ratio(traj.psi, ref_psi), ratio(traj.psi_dot, ref_pd)


def improvement(e_base: float, e_new: float) -> float:
    """Relative gain (e_base - e_new) / e_base as a fraction."""
    if e_base <= 0.0:
        raise ValueError("baseline error must be positive")
    return (e_base - e_new) / e_base


def energy_diagnostic(psi, psi_dot, phys: PhysParams, mass, laplacian) -> float:
    """Instantaneous energy 1/2 (||a0 psi_t||_M^2 + psi' L psi).

    The weight a0 = sqrt(1/c^2 - (k/2) psi_t) is evaluated nodally and
    clamped at zero where the radicand turns negative; with k = 0 it
    reduces to the linear wave energy.
    """
    psi = np.asarray(psi, dtype=np.float64)
    psi_dot = np.asarray(psi_dot, dtype=np.float64)
    radicand = 1.0 / phys.c**2 - 0.5 * phys.k * psi_dot
    weighted = np.sqrt(np.maximum(radicand, 0.0)) * psi_dot
    return 0.5 * (
        float(weighted @ (mass @ weighted)) + float(psi @ (laplacian @ psi))
    )


# ---------------------------------------------------------------------------
# scenario definition


@dataclass(frozen=True)
class MeshSpec:
    """Mesh recipe: one of the generators or an MSH file pair."""

    kind: str  # channel | square | plate | msh
    h: float = 0.0
    width: float = 0.0
    length: float = 0.0
    tilt_deg: float = 0.0
    side: float = 0.0
    hole_radius: float = 0.0
    path: str = ""
    reference_path: str = ""


def build_mesh(spec: MeshSpec, extension: float = 0.0) -> Mesh:
    """Build the truncated mesh (extension 0) or the reference mesh."""
    if spec.kind == "channel":
        return generate_channel(spec.width, spec.length, spec.tilt_deg, spec.h, extension)
    if spec.kind == "square":
        return generate_square(spec.side, spec.h, extension)
    if spec.kind == "plate":
        return generate_plate_octant(spec.side, spec.hole_radius, spec.h, extension)
    if spec.kind == "msh":
        path = spec.path if extension == 0.0 else spec.reference_path
        return parse_msh(Path(path).read_text())
    raise ConfigError(f"unknown mesh kind {spec.kind!r}")


@dataclass(frozen=True)
class Variant:
    """One absorbing boundary treatment: sigma choice times angle policy."""

    sigma: float
    adaptive: bool = False
    fixed_theta_deg: float = 0.0

    @property
    def label(self) -> str:
        names = {0.0: "abc0", 0.5: "abc05", 1.0: "abc1"}
        if self.sigma not in names:
            raise ValueError(f"sigma must be 0, 0.5 or 1, got {self.sigma}")
        base = names[self.sigma]
        if self.adaptive:
            return base + "-adaptive"
        if self.fixed_theta_deg != 0.0:
            return f"{base}-fixed{self.fixed_theta_deg:g}"
        return base


def parse_variant(text: str) -> Variant:
    """Parse a variant label: abc{0|05|1}, optionally -adaptive or -fixed<deg>."""
    sigmas = {"abc0": 0.0, "abc05": 0.5, "abc1": 1.0}
    head, sep, rest = text.partition("-")
    if head not in sigmas:
        raise ConfigError(f"unknown variant {text!r}: must start with abc0, abc05 or abc1")
    if not sep:
        return Variant(sigmas[head])
    if rest == "adaptive":
        return Variant(sigmas[head], adaptive=True)
    if rest.startswith("fixed"):
        try:
            deg = float(rest[len("fixed"):])
        except ValueError:
            raise ConfigError(f"bad fixed angle in variant {text!r}") from None
        if not 0.0 <= deg <= 90.0:
            raise ConfigError(f"fixed angle must lie in [0, 90] degrees, got {deg:g}")
        return Variant(sigmas[head], fixed_theta_deg=deg)
    raise ConfigError(f"unknown variant suffix {rest!r} in {text!r}")


@dataclass(frozen=True)
class Scenario:
    name: str
    mesh: MeshSpec
    phys: PhysParams
    t_final: float
    n_steps: int
    scheme: SchemeParams
    variant: Variant
    angle_cfg: AngleConfig
    excitation: Excitation | None = None
    source: SourceSpec | None = None
    extension: float = 0.0
    snapshot_stride: int = 1

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    @property
    def frequency(self) -> float:
        return self.excitation.frequency if self.excitation else self.source.frequency

    def guard_scales(self):
        """Forcing scale of psi and of u, setting the relative-error guard.

        A volume source of amplitude A (units of psi per time squared)
        drives a response of order A / omega^2.
        """
        omega = 2.0 * math.pi * self.frequency
        if self.excitation is not None:
            psi_scale = self.excitation.amplitude
        else:
            psi_scale = self.source.amplitude / omega**2
        return psi_scale, self.phys.rho * omega * psi_scale


# ---------------------------------------------------------------------------
# config files


def _check_keys(table: dict, where: str, required: set, optional: set = frozenset()):
    missing = required - table.keys()
    if missing:
        raise ConfigError(f"[{where}] missing keys: {', '.join(sorted(missing))}")
    unknown = table.keys() - required - optional
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {', '.join(sorted(unknown))}")


def _number(table: dict, where: str, key: str, positive: bool = False) -> float:
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{where}] {key} must be a number")
    if positive and value <= 0:
        raise ConfigError(f"[{where}] {key} must be positive")
    return float(value)


def _mesh_spec(table: dict) -> MeshSpec:
    kind = table.get("kind")
    per_kind = {
        "channel": {"width", "length", "tilt_deg", "h"},
        "square": {"side", "h"},
        "plate": {"side", "hole_radius", "h"},
        "msh": {"path", "reference_path"},
    }
    if kind not in per_kind:
        raise ConfigError(
            f"[mesh] kind must be one of {sorted(per_kind)}, got {kind!r}"
        )
    _check_keys(table, "mesh", {"kind"} | per_kind[kind])
    if kind == "msh":
        return MeshSpec(kind="msh", path=str(table["path"]), reference_path=str(table["reference_path"]))
    numbers = {k: _number(table, "mesh", k, positive=(k != "tilt_deg")) for k in per_kind[kind]}
    return MeshSpec(kind=kind, **numbers)


def load_scenario(path) -> Scenario:
    """Load and validate a scenario description from a TOML file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    try:
        cfg = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return scenario_from_dict(cfg, base_dir=path.parent)


def scenario_from_dict(cfg: dict, base_dir=None) -> Scenario:
    _check_keys(
        cfg,
        "scenario",
        {"mesh", "time", "abc"},
        {"name", "physics", "excitation", "source", "reference", "output"},
    )
    name = cfg.get("name", "scenario")
    if not isinstance(name, str):
        raise ConfigError("name must be a string")

    mesh = _mesh_spec(cfg["mesh"])
    if mesh.kind == "msh" and base_dir is not None:
        mesh = MeshSpec(
            kind="msh",
            path=str(Path(base_dir) / mesh.path),
            reference_path=str(Path(base_dir) / mesh.reference_path),
        )

    if "physics" in cfg:
        tab = cfg["physics"]
        _check_keys(tab, "physics", {"c", "b", "rho", "b_over_a"})
        phys = PhysParams(
            c=_number(tab, "physics", "c", positive=True),
            b=_number(tab, "physics", "b"),
            rho=_number(tab, "physics", "rho", positive=True),
            b_over_a=_number(tab, "physics", "b_over_a"),
        )
    else:
        phys = water()

    if ("excitation" in cfg) == ("source" in cfg):
        raise ConfigError("exactly one of [excitation] and [source] is required")
    excitation = source = None
    if "excitation" in cfg:
        tab = cfg["excitation"]
        _check_keys(tab, "excitation", {"amplitude", "frequency"})
        excitation = Excitation(
            amplitude=_number(tab, "excitation", "amplitude"),
            frequency=_number(tab, "excitation", "frequency", positive=True),
        )
    else:
        tab = cfg["source"]
        _check_keys(
            tab, "source", {"amplitude", "frequency", "centers", "weights", "sigma_x", "sigma_y"}
        )
        centers = tab["centers"]
        weights = tab["weights"]
        if not isinstance(centers, list) or not all(
            isinstance(c, list) and len(c) == 2 for c in centers
        ):
            raise ConfigError("[source] centers must be a list of [x, y] pairs")
        if not isinstance(weights, list) or len(weights) != len(centers):
            raise ConfigError("[source] weights must match centers in length")
        source = SourceSpec(
            amplitude=_number(tab, "source", "amplitude"),
            frequency=_number(tab, "source", "frequency", positive=True),
            centers=tuple((float(c[0]), float(c[1])) for c in centers),
            weights=tuple(float(w) for w in weights),
            sigma_x=_number(tab, "source", "sigma_x", positive=True),
            sigma_y=_number(tab, "source", "sigma_y", positive=True),
        )
    frequency = excitation.frequency if excitation else source.frequency

    tab = cfg["time"]
    _check_keys(
        tab,
        "time",
        {"t_final"},
        {"n_steps", "steps_per_period", "rho_inf", "tol", "kappa_max"},
    )
    t_final = _number(tab, "time", "t_final", positive=True)
    if ("n_steps" in tab) == ("steps_per_period" in tab):
        raise ConfigError("[time] needs exactly one of n_steps and steps_per_period")
    if "n_steps" in tab:
        n_steps = int(_number(tab, "time", "n_steps", positive=True))
    else:
        spp = _number(tab, "time", "steps_per_period", positive=True)
        n_steps = max(1, math.ceil(t_final * frequency * spp))
    scheme = scheme_params(
        rho_inf=_number(tab, "time", "rho_inf") if "rho_inf" in tab else 0.5,
        tol=_number(tab, "time", "tol", positive=True) if "tol" in tab else 1e-6,
        kappa_max=int(_number(tab, "time", "kappa_max", positive=True)) if "kappa_max" in tab else 100,
    )

    tab = cfg["abc"]
    _check_keys(
        tab,
        "abc",
        {"sigma"},
        {"adaptive", "fixed_theta_deg", "p1", "p2", "reference_amplitude"},
    )
    sigma = _number(tab, "abc", "sigma")
    if sigma not in (0.0, 0.5, 1.0):
        raise ConfigError("[abc] sigma must be 0, 0.5 or 1")
    adaptive = tab.get("adaptive", False)
    if not isinstance(adaptive, bool):
        raise ConfigError("[abc] adaptive must be a boolean")
    fixed_deg = _number(tab, "abc", "fixed_theta_deg") if "fixed_theta_deg" in tab else 0.0
    variant = Variant(sigma, adaptive=adaptive, fixed_theta_deg=fixed_deg)
    if "reference_amplitude" in tab:
        ref_amp = _number(tab, "abc", "reference_amplitude", positive=True)
    else:
        # the excitation amplitude when known a priori, else the running
        # interior maximum stands in
        ref_amp = excitation.amplitude if excitation else None
    angle_cfg = AngleConfig(
        p1=_number(tab, "abc", "p1", positive=True) if "p1" in tab else 0.1,
        p2=_number(tab, "abc", "p2", positive=True) if "p2" in tab else 0.5,
        reference_amplitude=ref_amp,
    )

    # for user meshes the reference extent lives in the file itself; any
    # nonzero value makes build_mesh pick reference_path
    extension = math.inf
    if mesh.kind != "msh":
        ext = cfg.get("reference", {}).get("extension", "auto")
        _check_keys(cfg.get("reference", {}), "reference", set(), {"extension"})
        if ext == "auto":
            # half a travel distance: nothing re-entering the truncated
            # part before t_final
            extension = phys.c * t_final / 2.0
        elif isinstance(ext, (int, float)) and not isinstance(ext, bool) and ext > 0:
            extension = float(ext)
        else:
            raise ConfigError('[reference] extension must be "auto" or a positive number')
    elif "reference" in cfg:
        raise ConfigError("[reference] does not apply to msh scenarios (use reference_path)")

    stride = 1
    if "output" in cfg:
        _check_keys(cfg["output"], "output", set(), {"snapshot_stride"})
        if "snapshot_stride" in cfg["output"]:
            stride = int(_number(cfg["output"], "output", "snapshot_stride", positive=True))

    return Scenario(
        name=name,
        mesh=mesh,
        phys=phys,
        t_final=t_final,
        n_steps=n_steps,
        scheme=scheme,
        variant=variant,
        angle_cfg=angle_cfg,
        excitation=excitation,
        source=source,
        extension=extension,
        snapshot_stride=stride,
    )


# ---------------------------------------------------------------------------
# runs


@dataclass
class ErrorReport:
    """Per-snapshot errors of one truncated-domain run plus aggregates.

    err_* and ref_* columns hold absolute L2(Omega) norms; rel_* are
    guarded ratios (0 while the reference field is still negligible).
    """

    steps: np.ndarray
    times: np.ndarray
    rel_err_psi: np.ndarray
    rel_err_u: np.ndarray
    energy: np.ndarray
    err_psi: np.ndarray
    ref_psi: np.ndarray
    err_u: np.ndarray
    ref_u: np.ndarray
    e_psi: float
    e_u: float


@dataclass
class VariantResult:
    variant: Variant
    trajectory: Trajectory
    report: ErrorReport


@dataclass
class ScenarioResult:
    scenario: Scenario
    mesh: Mesh
    ref_mesh: Mesh
    reference: Trajectory
    results: dict  # label -> VariantResult


def _guarded_ratio(err, ref, scale):
    # ref > 0 matters when the scale itself is zero (silent runs)
    out = np.zeros_like(err)
    ok = (ref > 0.0) & (ref >= GUARD_FRACTION * scale)
    np.divide(err, ref, out=out, where=ok)
    return out


def error_report(
    traj: Trajectory, reference: Trajectory, injection, mass, laplacian, scenario: Scenario
) -> ErrorReport:
    """Compare a truncated-domain run against the restricted reference."""
    if traj.steps.shape != reference.steps.shape or not np.array_equal(
        traj.steps, reference.steps
    ):
        raise ValueError("snapshot grids differ between run and reference")
    ref_psi = reference.psi[:, injection]
    ref_pd = reference.psi_dot[:, injection]
    rho = scenario.phys.rho

    err_psi = _snapshot_norms(traj.psi - ref_psi, mass)
    ref_psi_n = _snapshot_norms(ref_psi, mass)
    err_u = rho * _snapshot_norms(traj.psi_dot - ref_pd, mass)
    ref_u_n = rho * _snapshot_norms(ref_pd, mass)

    psi_scale, u_scale = scenario.guard_scales()
    rel_psi = _guarded_ratio(err_psi, ref_psi_n, psi_scale)
    rel_u = _guarded_ratio(err_u, ref_u_n, u_scale)

    energy = np.array(
        [
            energy_diagnostic(p, pd, scenario.phys, mass, laplacian)
            for p, pd in zip(traj.psi, traj.psi_dot)
        ]
    )

    def aggregate(err, ref):
        num = _trapezoid(err**2, traj.times)
        den = _trapezoid(ref**2, traj.times)
        if den > 0.0:
            return math.sqrt(num / den)
        return 0.0 if num == 0.0 else math.inf

    return ErrorReport(
        steps=traj.steps.copy(),
        times=traj.times.copy(),
        rel_err_psi=rel_psi,
        rel_err_u=rel_u,
        energy=energy,
        err_psi=err_psi,
        ref_psi=ref_psi_n,
        err_u=err_u,
        ref_u=ref_u_n,
        e_psi=aggregate(err_psi, ref_psi_n),
        e_u=aggregate(err_u, ref_u_n),
    )


def scenario_operators(
    scenario: Scenario, mesh: Mesh, variant: Variant | None = None, solve_opts=None
) -> Operators:
    """Integrator operators for a truncated (variant given) or reference run."""
    return Operators(
        mesh,
        scenario.phys,
        dt=scenario.dt,
        sigma=variant.sigma if variant else scenario.variant.sigma,
        dirichlet_fn=scenario.excitation,
        source_fn=make_source(scenario.source) if scenario.source else None,
        adaptive=bool(variant and variant.adaptive),
        fixed_theta=math.radians(variant.fixed_theta_deg) if variant else 0.0,
        solve_opts=solve_opts,
    )


def run_scenario(
    scenario: Scenario,
    variants=None,
    record_angles: bool = False,
    reference: Trajectory | None = None,
    ref_mesh: Mesh | None = None,
) -> ScenarioResult:
    """Run the reference once, then every variant on the truncated domain.

    A precomputed reference trajectory (with its mesh) can be passed in
    to amortize it across variant batches.
    """
    if variants is None:
        variants = [scenario.variant]
    mesh = build_mesh(scenario.mesh)
    if ref_mesh is None:
        ref_mesh = build_mesh(scenario.mesh, scenario.extension)
    injection = node_injection(ref_mesh, mesh)

    if reference is None:
        ref_ops = scenario_operators(scenario, ref_mesh)
        reference = run(
            ref_ops, scenario.scheme, scenario.n_steps, scenario.snapshot_stride
        )

    mass = assemble_mass(mesh)
    laplacian = assemble_laplacian(mesh)
    results = {}
    for variant in variants:
        ops = scenario_operators(scenario, mesh, variant)
        traj = run(
            ops,
            scenario.scheme,
            scenario.n_steps,
            scenario.snapshot_stride,
            angle_cfg=scenario.angle_cfg,
            record_angles=record_angles and variant.adaptive,
        )
        report = error_report(traj, reference, injection, mass, laplacian, scenario)
        results[variant.label] = VariantResult(variant, traj, report)
    return ScenarioResult(
        scenario=scenario, mesh=mesh, ref_mesh=ref_mesh, reference=reference, results=results
    )

"""Self-adaptive incidence angles for the absorbing boundary.

Each element adjacent to the absorbing boundary carries an incidence
angle theta, the angle between the local wave propagation direction and
the outward boundary normal.  The propagation direction is estimated
from the element gradient of the velocity potential at the previous
time step (for a progressive wave the gradient is anti-parallel to the
energy flux, so its direction suffices).

Two switches keep the estimate out of the noise:

* An element only starts computing once the potential on it exceeds the
  fraction ``p1`` of the reference amplitude (the excitation amplitude,
  or the running field maximum for volumetric sources).  Enabling is
  monotone.
* If the gradient magnitude falls below the fraction ``p2`` of the
  largest magnitude seen so far on that element (a node of the wave is
  passing), the previous angle is held.

Before any history exists the hold branch fires, so the angle stays at
zero rather than being computed from round-off noise.  Disabled
elements keep theta = 0, which reduces the boundary condition to its
normal-incidence form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import p1_gradients
from .mesh import BoundaryTag, Mesh, boundary_geometry


@dataclass
class AngleConfig:
    """Switch parameters of the adaptive angle computation.

    reference_amplitude None means track the running maximum of |psi|
    over the domain instead of a known excitation amplitude.

    exact_theta (degrees) replaces the gradient estimate with a known
    incidence angle on enabled elements; the amplitude switch still
    gates activation.  Control runs against a known geometry use this,
    production runs leave it None.
    """

    p1: float = 0.1
    p2: float = 0.5
    reference_amplitude: float | None = None
    exact_theta: float | None = None


class AngleField:
    """Per-element angle state on the absorbing-adjacent element layer."""

    def __init__(self, mesh: Mesh):
        ids, normals, measures, elems = boundary_geometry(mesh, BoundaryTag.ABSORBING)
        self.element_ids, inverse = np.unique(elems, return_inverse=True)
        m = self.element_ids.size
        # Measure-weighted mean facet normal per element (elements sitting in a
        # corner of the absorbing boundary own several facets).
        acc = np.zeros((m, mesh.dim))
        np.add.at(acc, inverse, normals * measures[:, None])
        nrm = np.linalg.norm(acc, axis=1, keepdims=True)
        self.normals = acc / np.where(nrm > 0.0, nrm, 1.0)
        self.theta = np.zeros(m)
        self.enabled = np.zeros(m, dtype=bool)
        self.grad_hist_max = np.full(m, np.inf)  # formal infinite pre-history
        self.amp_running = 0.0
        self._facet_pos = inverse  # absorbing facet -> position in element_ids
        # Per-step updates touch only the boundary layer; precomputing its
        # connectivity and shape-function gradients keeps the cost
        # independent of the interior element count.
        self._conn = mesh.elements[self.element_ids]
        grads, _ = p1_gradients(mesh)
        self._grads = grads[self.element_ids]

    def facet_theta(self, mesh: Mesh) -> np.ndarray:
        """Angle per absorbing facet, aligned with mesh.facet_ids(ABSORBING)."""
        return self.theta[self._facet_pos]

    def theta_degrees(self) -> np.ndarray:
        return np.degrees(self.theta)


def element_gradient(mesh: Mesh, coeffs, element_id: int) -> np.ndarray:
    """Gradient of the P1 field on one element (constant vector)."""
    return element_gradients(mesh, coeffs, np.array([element_id]))[0]


def element_gradients(mesh: Mesh, coeffs, element_ids) -> np.ndarray:
    grads, _ = p1_gradients(mesh)
    conn = mesh.elements[element_ids]
    return np.einsum("ead,ea->ed", grads[element_ids], np.asarray(coeffs)[conn])


def angle_from_gradient(grad, normal) -> float:
    """Incidence angle in [0, pi/2] between a gradient line and the normal.

    The gradient direction flips sign twice per wave period, so only the
    unsigned angle is meaningful.
    """
    g = np.asarray(grad, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    gn = float(np.linalg.norm(g))
    nn = float(np.linalg.norm(n))
    if gn == 0.0 or nn == 0.0:
        raise ValueError("zero gradient or normal has no incidence angle")
    return float(np.arccos(np.clip(abs(float(g @ n)) / (gn * nn), 0.0, 1.0)))


def update_angles(mesh: Mesh, psi_n, psi_prev, field: AngleField, cfg: AngleConfig) -> AngleField:
    """One angle update, called once per time step before assembly.

    psi_n is the newest accepted potential (amplitude switch), psi_prev
    the one before it (gradient estimate).  Updates the field in place.
    """
    amp = cfg.reference_amplitude
    if amp is None:
        cur = float(np.abs(psi_n).max()) if len(psi_n) else 0.0
        field.amp_running = max(field.amp_running, cur)
        amp = field.amp_running
    if field.element_ids.size == 0:
        return field
    local_max = np.abs(np.asarray(psi_n))[field._conn].max(axis=1)
    field.enabled |= local_max > cfg.p1 * amp

    act = np.nonzero(field.enabled)[0]
    if act.size == 0:
        return field
    if cfg.exact_theta is not None:
        field.theta[act] = math.radians(cfg.exact_theta)
        return field
    grads = np.einsum(
        "ead,ea->ed", field._grads[act], np.asarray(psi_prev)[field._conn[act]]
    )
    gn = np.linalg.norm(grads, axis=1)
    hold = gn <= cfg.p2 * field.grad_hist_max[act]
    compute = ~hold
    if np.any(compute):
        rows = act[compute]
        dots = np.abs(np.einsum("ed,ed->e", grads[compute], field.normals[rows]))
        field.theta[rows] = np.arccos(np.clip(dots / gn[compute], 0.0, 1.0))
    hist = field.grad_hist_max[act]
    field.grad_hist_max[act] = np.where(np.isinf(hist), gn, np.maximum(hist, gn))
    return field


def analytical_plate_angle(x, plate_side: float) -> np.ndarray:
    """Incidence angle along the straight outer edge of the plate octant.

    For a wave radiating from the plate center, the angle at edge
    position x (measured from the symmetry axis) against the edge normal
    is arccos((side/2) / sqrt(x^2 + (side/2)^2)).
    """
    half = plate_side / 2.0
    x = np.asarray(x, dtype=np.float64)
    return np.arccos(half / np.sqrt(x * x + half * half))

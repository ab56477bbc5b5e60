"""P1 finite element assembly for the velocity potential equation.

Assembles the operators of the semi-discrete system

    M psi_dd + c^2 L psi + b L psi_d - T[psi_dd, psi_d, .] + A(psi_d, theta) = F

where M is the mass matrix, L the Laplacian stiffness, T the third-order
coupling tensor of the quadratic nonlinearity, and A the absorbing
boundary load.  Element integrals of shape function products use the
closed-form simplex moments

    int N1^p N2^q N3^r ... dX = measure * dim! * p! q! r! ... / (p+q+r+...+dim)!

so mass, Laplacian and tensor blocks are exact.  Boundary integrals use
two-point Gauss quadrature on edges (a symmetric three-point rule on
triangle facets in 3D) with the angle held constant per facet.

All matrices share one CSR sparsity pattern (node adjacency through
elements), which lets the time integrator combine data arrays without
re-allocating structure.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import BoundaryTag, Mesh

#: radicand of the boundary root factor below this value counts as zero
DEGENERACY_CLAMP = 1e-14


class DegeneracyError(RuntimeError):
    """The absorbing-boundary root factor left its validity range."""


@dataclass(frozen=True)
class PhysParams:
    """Medium parameters.

    c: small-signal sound speed [m/s], b: diffusivity of sound [m^2/s],
    rho: mass density [kg/m^3], b_over_a: nonlinearity parameter B/A.
    """

    c: float
    b: float
    rho: float
    b_over_a: float

    def __post_init__(self):
        if self.c <= 0 or self.rho <= 0 or self.b < 0:
            raise ValueError("need c > 0, rho > 0, b >= 0")

    @property
    def delta(self) -> float:
        """Damping coefficient b / c^2 of the potential form."""
        return self.b / self.c**2

    @property
    def k(self) -> float:
        """Nonlinearity coefficient (B/A + 2) / c^2."""
        return (self.b_over_a + 2.0) / self.c**2


def shape_moment_matrix(dim: int) -> np.ndarray:
    """(1 + delta_ab) * dim! / (dim+2)!: int N_a N_b over a unit-measure simplex."""
    nen = dim + 1
    scale = math.factorial(dim) / math.factorial(dim + 2)
    return scale * (np.ones((nen, nen)) + np.eye(nen))


def shape_moment_tensor(dim: int) -> np.ndarray:
    """int N_a N_b N_c over a unit-measure simplex, from the factorial formula."""
    nen = dim + 1
    S = np.empty((nen, nen, nen))
    denom = math.factorial(dim + 3)
    for a in range(nen):
        for b in range(nen):
            for c in range(nen):
                p = np.bincount([a, b, c], minlength=nen)
                num = math.factorial(dim)
                for pi in p:
                    num *= math.factorial(int(pi))
                S[a, b, c] = num / denom
    return S


def p1_gradients(mesh: Mesh):
    """Constant shape function gradients per element.

    Returns (grads, measures) with grads of shape (n_elements, dim+1, dim).
    """
    d = mesh.dim
    p0 = mesh.nodes[mesh.elements[:, 0]]
    J = np.stack([mesh.nodes[mesh.elements[:, j]] - p0 for j in range(1, d + 1)], axis=1)
    Jinv = np.linalg.inv(J)  # rows of Jinv^T are the gradients of N_1..N_d
    grads = np.empty((mesh.num_elements, d + 1, d))
    grads[:, 1:, :] = Jinv.transpose(0, 2, 1)
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    det = np.linalg.det(J)
    return grads, det / math.factorial(d)


class ElementData:
    """Per-mesh assembly precompute: measures, gradients, shared CSR pattern."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        d = mesh.dim
        self.nen = d + 1
        self.grads, self.measures = p1_gradients(mesh)
        n = mesh.num_nodes
        elems = mesh.elements
        rows = np.repeat(elems, self.nen, axis=1).ravel()
        cols = np.tile(elems, (1, self.nen)).ravel()
        keys = rows.astype(np.int64) * n + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.pattern_keys = uniq
        self.pattern_rows = (uniq // n).astype(np.int64)
        self.indices = (uniq % n).astype(np.int64)
        counts = np.bincount(self.pattern_rows, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.scatter = inverse.reshape(mesh.num_elements, self.nen * self.nen)
        self.nnz = uniq.size
        Mhat = shape_moment_matrix(d)
        self.mass_data = self._scatter_local(self.measures[:, None, None] * Mhat)
        stiff_local = np.einsum("ead,ebd->eab", self.grads, self.grads)
        self.stiff_data = self._scatter_local(self.measures[:, None, None] * stiff_local)
        self.moment3 = shape_moment_tensor(d)

    def _scatter_local(self, local) -> np.ndarray:
        return np.bincount(self.scatter.ravel(), weights=local.ravel(), minlength=self.nnz)

    def csr(self, data) -> sp.csr_matrix:
        n = self.mesh.num_nodes
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def tensor_matrix_data(self, v, k: float) -> np.ndarray:
        """Data of W(v)_ia = k sum_b v_b int N_a N_b N_i, on the shared pattern."""
        V = v[self.mesh.elements]
        local = np.einsum("eb,abc->eac", V, self.moment3)
        local *= (k * self.measures)[:, None, None]
        return self._scatter_local(local)

    def pattern_positions(self, rows, cols) -> np.ndarray:
        """Positions of (row, col) entries inside the shared data array."""
        keys = np.asarray(rows, dtype=np.int64) * self.mesh.num_nodes + np.asarray(cols)
        pos = np.searchsorted(self.pattern_keys, keys)
        if np.any(pos >= self.nnz) or np.any(self.pattern_keys[pos] != keys):
            raise KeyError("entry outside the element sparsity pattern")
        return pos


_element_cache: "weakref.WeakKeyDictionary[Mesh, ElementData]" = weakref.WeakKeyDictionary()
_boundary_cache: "weakref.WeakKeyDictionary[Mesh, BoundaryData]" = weakref.WeakKeyDictionary()


def element_data(mesh: Mesh) -> ElementData:
    data = _element_cache.get(mesh)
    if data is None:
        data = _element_cache[mesh] = ElementData(mesh)
    return data


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Symmetric positive definite P1 mass matrix."""
    data = element_data(mesh)
    return data.csr(data.mass_data.copy())


def assemble_laplacian(mesh: Mesh) -> sp.csr_matrix:
    """Symmetric positive semi-definite stiffness of the Laplacian (kernel: constants)."""
    data = element_data(mesh)
    return data.csr(data.stiff_data.copy())


def tensor_action(mesh: Mesh, w, v, params: PhysParams) -> np.ndarray:
    """T_i[w, v] = k * sum_ab w_a v_b int N_a N_b N_i, for all i."""
    data = element_data(mesh)
    W = np.asarray(w)[mesh.elements]
    V = np.asarray(v)[mesh.elements]
    local = np.einsum("ea,eb,abc->ec", W, V, data.moment3)
    local *= (params.k * data.measures)[:, None]
    return np.bincount(
        mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.num_nodes
    )


def assemble_source(mesh: Mesh, source_fn, t: float) -> np.ndarray:
    """Load vector int f(x, t) N_i dx with f interpolated at the nodes."""
    f_nodes = np.asarray(source_fn(mesh.nodes, t), dtype=np.float64)
    if f_nodes.shape != (mesh.num_nodes,):
        raise ValueError("source_fn must return one value per node")
    data = element_data(mesh)
    return data.csr(data.mass_data) @ f_nodes


def dirichlet_rhs(matrices, g, g_dot, g_ddot, dirichlet_nodes) -> np.ndarray:
    """Right-hand side contribution of prescribed excitation values.

    matrices is the (M, K, C) triple.  The returned full-length vector
    holds -(M[:,D] g_ddot + K[:,D] g + C[:,D] g_dot) on non-Dirichlet
    rows and zero on Dirichlet rows, i.e. the effect of moving the known
    columns of the system to the right-hand side.
    """
    M, K, C = matrices
    n = M.shape[0]
    D = np.asarray(dirichlet_nodes, dtype=np.int64)
    pad_g = np.zeros(n)
    pad_gd = np.zeros(n)
    pad_gdd = np.zeros(n)
    pad_g[D] = g
    pad_gd[D] = g_dot
    pad_gdd[D] = g_ddot
    rhs = -(M @ pad_gdd + K @ pad_g + C @ pad_gd)
    rhs[D] = 0.0
    return rhs


# ---------------------------------------------------------------------------
# Absorbing boundary terms

def _facet_quadrature(dim: int):
    # Reference-facet rule: points as shape values (Q, dim), weights summing to 1.
    if dim == 2:
        xi = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
        N = np.column_stack([1.0 - xi, xi])
        w = np.array([0.5, 0.5])
    else:
        N = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])
        w = np.array([1.0, 1.0, 1.0]) / 3.0
    return N, w


class BoundaryData:
    """Precompute for the absorbing boundary: per-facet geometry and quadrature."""

    def __init__(self, mesh: Mesh):
        from .mesh import boundary_geometry

        self.mesh = mesh
        ids, normals, measures, elems = boundary_geometry(mesh, BoundaryTag.ABSORBING)
        self.facet_ids = ids
        self.normals = normals
        self.measures = measures
        self.elements = elems
        self.facet_nodes = mesh.facets[ids] if ids.size else np.empty((0, mesh.dim), np.int64)
        self.quad_N, self.quad_w = _facet_quadrature(mesh.dim)
        edata = element_data(mesh)
        nen = self.facet_nodes.shape[1]
        rows = np.repeat(self.facet_nodes, nen, axis=1).ravel()
        cols = np.tile(self.facet_nodes, (1, nen)).ravel()
        if ids.size:
            self.scatter = edata.pattern_positions(rows, cols).reshape(ids.size, nen * nen)
        else:
            self.scatter = np.empty((0, 0), dtype=np.int64)


def boundary_data(mesh: Mesh) -> BoundaryData:
    data = _boundary_cache.get(mesh)
    if data is None:
        data = _boundary_cache[mesh] = BoundaryData(mesh)
    return data


def _facet_cos(mesh: Mesh, bdata: BoundaryData, angle_field):
    """cos(theta) per absorbing facet from a scalar, per-facet array, or AngleField."""
    if hasattr(angle_field, "facet_theta"):
        theta = angle_field.facet_theta(mesh)
    else:
        theta = np.broadcast_to(np.asarray(angle_field, dtype=np.float64), bdata.facet_ids.shape)
    return np.cos(theta)


def _root_factor(psidot_q, sigma: float, k: float) -> np.ndarray:
    radicand = 1.0 - sigma * k * psidot_q
    if np.any(radicand <= 0.0):
        worst = float(radicand.min())
        raise DegeneracyError(
            f"ABC degeneracy: sigma*k*psi_t >= 1 (radicand {worst:.3e}); "
            "amplitude outside the validity range of the boundary condition"
        )
    out = np.sqrt(radicand)
    out[radicand < DEGENERACY_CLAMP] = 0.0
    return out


def assemble_abc_vector(mesh: Mesh, psi_dot, angle_field, sigma: float, params: PhysParams) -> np.ndarray:
    """Absorbing boundary load A_i = int_G c sqrt(1 - sigma k psi_t) psi_t cos(theta) N_i dS.

    angle_field gives the incidence angle theta in radians: a scalar, an
    array over absorbing facets, or an adaptive angle field object.
    """
    bdata = boundary_data(mesh)
    out = np.zeros(mesh.num_nodes)
    if bdata.facet_ids.size == 0:
        return out
    cos_t = _facet_cos(mesh, bdata, angle_field)
    vals = np.asarray(psi_dot)[bdata.facet_nodes]  # (F, nen)
    psidot_q = vals @ bdata.quad_N.T  # (F, Q)
    s = _root_factor(psidot_q, sigma, params.k)
    # A_local[f, i] = c cos_t measure sum_q w_q s psidot N_i(q)
    integrand = s * psidot_q * bdata.quad_w  # (F, Q)
    local = integrand @ bdata.quad_N  # (F, nen)
    local *= (params.c * cos_t * bdata.measures)[:, None]
    np.add.at(out, bdata.facet_nodes.ravel(), local.ravel())
    return out


def abc_matrix_data(mesh: Mesh, psi_dot_lag, angle_field, sigma: float, params: PhysParams) -> np.ndarray:
    """Boundary matrix B with B_ij = int_G c sqrt(1 - sigma k psi_t_lag) cos(theta) N_i N_j dS.

    Returned as a data array on the shared element CSR pattern, so that
    B @ v equals assemble_abc_vector(mesh, v, ...) when v is the same
    field the root factor was lagged at.
    """
    edata = element_data(mesh)
    bdata = boundary_data(mesh)
    data = np.zeros(edata.nnz)
    if bdata.facet_ids.size == 0:
        return data
    cos_t = _facet_cos(mesh, bdata, angle_field)
    vals = np.asarray(psi_dot_lag)[bdata.facet_nodes]
    psidot_q = vals @ bdata.quad_N.T
    s = _root_factor(psidot_q, sigma, params.k)
    # B_local[f, i, j] = c cos_t measure sum_q w_q s N_i(q) N_j(q)
    weighted = (s * bdata.quad_w)[:, :, None] * bdata.quad_N[None, :, :]  # (F, Q, nen)
    local = np.einsum("fqi,qj->fij", weighted, bdata.quad_N)
    local *= (params.c * cos_t * bdata.measures)[:, None, None]
    return np.bincount(bdata.scatter.ravel(), weights=local.ravel(), minlength=edata.nnz)


def assemble_abc_matrix(mesh: Mesh, psi_dot_lag, angle_field, sigma: float, params: PhysParams) -> sp.csr_matrix:
    """CSR form of the lagged-coefficient boundary matrix (see abc_matrix_data)."""
    return element_data(mesh).csr(abc_matrix_data(mesh, psi_dot_lag, angle_field, sigma, params))

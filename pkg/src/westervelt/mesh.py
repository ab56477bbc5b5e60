"""Simplicial meshes for acoustic domain simulations.

Meshes are P1 conforming triangulations (triangles in 2D, tetrahedra in
3D) with tagged boundary facets.  Three boundary roles exist: an
excitation boundary where the field is prescribed, an absorbing boundary
carrying the impedance-type condition, and homogeneous Neumann walls.

Structured generators cover the rectangular channel (optionally with a
tilted absorbing end), a square domain for volumetric-source runs, and a
plate octant with a circular excitation arc.  Each generator accepts an
``extension`` length; a positive value enlarges the domain past the
absorbing boundary on the same node lattice, producing the reference
domain whose node set contains the truncated domain's nodes exactly.

Unstructured meshes are read from Gmsh MSH 2.2 ASCII files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class MeshError(Exception):
    """Raised for malformed mesh files or invalid mesh data."""


class BoundaryTag(IntEnum):
    EXCITATION = 1
    ABSORBING = 2
    NEUMANN = 3


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable simplicial mesh with tagged boundary facets.

    Attributes
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    nodes : ndarray, shape (n_nodes, dim)
        Vertex coordinates.
    elements : ndarray, shape (n_elements, dim + 1)
        Vertex indices per simplex, positively oriented.
    facets : ndarray, shape (n_facets, dim)
        Vertex indices of boundary facets (edges in 2D, triangles in 3D).
    facet_tags : ndarray, shape (n_facets,)
        BoundaryTag value per facet.
    facet_elements : ndarray, shape (n_facets,)
        Index of the unique element adjacent to each facet.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    facet_elements: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    def facet_ids(self, tag) -> np.ndarray:
        """Indices of boundary facets carrying the given tag."""
        return np.nonzero(self.facet_tags == int(tag))[0]

    def tagged_nodes(self, tag) -> np.ndarray:
        """Sorted unique node indices lying on facets with the given tag."""
        ids = self.facet_ids(tag)
        if ids.size == 0:
            return np.empty(0, dtype=np.int64)
        return np.unique(self.facets[ids])

    def dirichlet_nodes(self) -> np.ndarray:
        return self.tagged_nodes(BoundaryTag.EXCITATION)


@dataclass(frozen=True)
class FacetGeom:
    normal: np.ndarray
    measure: float
    element: int


def _signed_measures(dim, nodes, elements):
    # Signed simplex measure: det of the edge matrix over dim factorial.
    p0 = nodes[elements[:, 0]]
    edges = np.stack([nodes[elements[:, j]] - p0 for j in range(1, dim + 1)], axis=-1)
    if dim == 2:
        det = edges[:, 0, 0] * edges[:, 1, 1] - edges[:, 0, 1] * edges[:, 1, 0]
    else:
        det = (
            edges[:, 0, 0] * (edges[:, 1, 1] * edges[:, 2, 2] - edges[:, 1, 2] * edges[:, 2, 1])
            - edges[:, 0, 1] * (edges[:, 1, 0] * edges[:, 2, 2] - edges[:, 1, 2] * edges[:, 2, 0])
            + edges[:, 0, 2] * (edges[:, 1, 0] * edges[:, 2, 1] - edges[:, 1, 1] * edges[:, 2, 0])
        )
    return det / math.factorial(dim)


def _element_faces(dim, elem):
    # Faces of one simplex as index tuples (edges of a triangle, triangles of a tet).
    if dim == 2:
        a, b, c = elem
        return ((a, b), (b, c), (c, a))
    a, b, c, d = elem
    return ((a, b, c), (a, b, d), (a, c, d), (b, c, d))


def make_mesh(dim, nodes, elements, facets, facet_tags) -> Mesh:
    """Validate raw arrays and build the mesh with facet adjacency.

    Checks index bounds, positive element orientation, facet tags, and
    that every boundary facet is the face of exactly one element.
    """
    if dim not in (2, 3):
        raise MeshError(f"unsupported dimension {dim}")
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    elements = np.ascontiguousarray(elements, dtype=np.int64)
    facets = np.ascontiguousarray(facets, dtype=np.int64)
    facet_tags = np.ascontiguousarray(facet_tags, dtype=np.int64)
    if nodes.ndim != 2 or nodes.shape[1] != dim:
        raise MeshError(f"nodes must have shape (n, {dim})")
    if elements.ndim != 2 or elements.shape[1] != dim + 1:
        raise MeshError(f"elements must have shape (n, {dim + 1})")
    if facets.ndim != 2 or facets.shape[1] != dim:
        raise MeshError(f"facets must have shape (n, {dim})")
    if facet_tags.shape != (facets.shape[0],):
        raise MeshError("facet_tags length must match facets")
    n = nodes.shape[0]
    if elements.size and (elements.min() < 0 or elements.max() >= n):
        raise MeshError("element node index out of range")
    if facets.size and (facets.min() < 0 or facets.max() >= n):
        raise MeshError("facet node index out of range")
    if elements.shape[0] == 0:
        raise MeshError("mesh has no elements")
    bad_tags = set(np.unique(facet_tags)) - {int(t) for t in BoundaryTag}
    if bad_tags:
        raise MeshError(f"unknown facet tags {sorted(bad_tags)}")

    signed = _signed_measures(dim, nodes, elements)
    if np.any(signed <= 0.0):
        k = int(np.argmin(signed))
        raise MeshError(
            f"element {k} has non-positive measure {signed[k]:.3e}; "
            "mesh must be positively oriented and non-degenerate"
        )

    # Boundary faces appear in exactly one element; interior faces in two.
    face_owner: dict = {}
    for e, elem in enumerate(elements):
        for face in _element_faces(dim, tuple(elem)):
            key = tuple(sorted(face))
            face_owner[key] = -1 if key in face_owner else e
    facet_elements = np.empty(facets.shape[0], dtype=np.int64)
    for f, facet in enumerate(facets):
        key = tuple(sorted(facet))
        owner = face_owner.get(key)
        if owner is None:
            raise MeshError(f"facet {f} is not a face of any element")
        if owner < 0:
            raise MeshError(f"facet {f} is shared by two elements (not on the boundary)")
        facet_elements[f] = owner

    for arr in (nodes, elements, facets, facet_tags, facet_elements):
        arr.setflags(write=False)
    return Mesh(dim, nodes, elements, facets, facet_tags, facet_elements)


def element_measure(mesh: Mesh, element_id: int) -> float:
    """Area (2D) or volume (3D) of one element."""
    signed = _signed_measures(mesh.dim, mesh.nodes, mesh.elements[element_id : element_id + 1])
    return float(signed[0])


def element_measures(mesh: Mesh) -> np.ndarray:
    """Measures of all elements at once."""
    return _signed_measures(mesh.dim, mesh.nodes, mesh.elements)


def facet_geometry(mesh: Mesh, facet_id: int) -> FacetGeom:
    """Outward unit normal, measure and adjacent element of a boundary facet."""
    facet = mesh.facets[facet_id]
    pts = mesh.nodes[facet]
    if mesh.dim == 2:
        t = pts[1] - pts[0]
        measure = float(np.hypot(t[0], t[1]))
        if measure == 0.0:
            raise MeshError(f"facet {facet_id} has zero length")
        normal = np.array([t[1], -t[0]]) / measure
    else:
        cr = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        nrm = float(np.linalg.norm(cr))
        if nrm == 0.0:
            raise MeshError(f"facet {facet_id} has zero area")
        measure = 0.5 * nrm
        normal = cr / nrm
    e = int(mesh.facet_elements[facet_id])
    centroid = mesh.nodes[mesh.elements[e]].mean(axis=0)
    if np.dot(normal, pts.mean(axis=0) - centroid) < 0.0:
        normal = -normal
    return FacetGeom(normal=normal, measure=measure, element=e)


def boundary_geometry(mesh: Mesh, tag):
    """Vectorized facet geometry for all facets with one tag.

    Returns (facet_ids, normals, measures, elements).
    """
    ids = mesh.facet_ids(tag)
    normals = np.empty((ids.size, mesh.dim))
    measures = np.empty(ids.size)
    elems = np.empty(ids.size, dtype=np.int64)
    for k, f in enumerate(ids):
        g = facet_geometry(mesh, int(f))
        normals[k] = g.normal
        measures[k] = g.measure
        elems[k] = g.element
    return ids, normals, measures, elems


# ---------------------------------------------------------------------------
# MSH 2.2 ASCII reader / writer

_MSH_NODE_COUNT = {1: 2, 2: 3, 4: 4}  # line, triangle, tetrahedron


def parse_msh(text: str, tag_map=None) -> Mesh:
    """Parse a Gmsh MSH 2.2 ASCII file.

    Parameters
    ----------
    text : str
        File contents.
    tag_map : dict, optional
        Maps the physical-group id of each boundary entity to a
        BoundaryTag value.  When omitted, physical ids must already be
        valid BoundaryTag values (1, 2, 3).

    Tetrahedra make the mesh 3D with triangles as boundary facets;
    otherwise triangles are the elements and lines the facets.
    """
    lines = text.splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise MeshError("unexpected end of MSH file")
        pos += 1
        return lines[pos - 1].strip()

    def expect(header):
        got = next_line()
        if got != header:
            raise MeshError(f"expected {header!r}, got {got!r}")

    expect("$MeshFormat")
    fmt = next_line().split()
    if not fmt or not fmt[0].startswith("2.2"):
        raise MeshError(f"unsupported MSH version {fmt[0] if fmt else '?'}; need 2.2 ASCII")
    if len(fmt) > 1 and fmt[1] != "0":
        raise MeshError("binary MSH files are not supported")
    expect("$EndMeshFormat")

    headline = next_line()
    if headline == "$PhysicalNames":
        count = int(next_line())
        for _ in range(count):
            next_line()
        expect("$EndPhysicalNames")
        headline = next_line()
    if headline != "$Nodes":
        raise MeshError(f"expected $Nodes, got {headline!r}")
    n_nodes = int(next_line())
    ids = np.empty(n_nodes, dtype=np.int64)
    coords = np.empty((n_nodes, 3))
    for i in range(n_nodes):
        parts = next_line().split()
        if len(parts) != 4:
            raise MeshError(f"malformed node line: {parts}")
        ids[i] = int(parts[0])
        coords[i] = [float(parts[1]), float(parts[2]), float(parts[3])]
    expect("$EndNodes")
    id_to_index = {int(v): i for i, v in enumerate(ids)}
    if len(id_to_index) != n_nodes:
        raise MeshError("duplicate node ids")

    expect("$Elements")
    n_entities = int(next_line())
    tris, tri_phys = [], []
    tets = []
    segs, seg_phys = [], []
    for _ in range(n_entities):
        parts = next_line().split()
        etype = int(parts[1])
        if etype not in _MSH_NODE_COUNT:
            raise MeshError(f"unsupported element type {etype}; only line/triangle/tetrahedron")
        ntags = int(parts[2])
        tags = [int(t) for t in parts[3 : 3 + ntags]]
        conn = [id_to_index[int(v)] for v in parts[3 + ntags :]]
        if len(conn) != _MSH_NODE_COUNT[etype]:
            raise MeshError(f"element has {len(conn)} nodes, expected {_MSH_NODE_COUNT[etype]}")
        phys = tags[0] if tags else 0
        if etype == 1:
            segs.append(conn)
            seg_phys.append(phys)
        elif etype == 2:
            tris.append(conn)
            tri_phys.append(phys)
        else:
            tets.append(conn)
    expect("$EndElements")

    def map_tag(phys):
        if tag_map is not None:
            try:
                return int(tag_map[phys])
            except KeyError:
                raise MeshError(f"physical group {phys} missing from tag map") from None
        if phys in (1, 2, 3):
            return phys
        raise MeshError(f"physical group {phys} is not a boundary tag and no tag map given")

    if tets:
        elements = np.asarray(tets, dtype=np.int64)
        facets = np.asarray(tris, dtype=np.int64).reshape(len(tris), 3)
        tags = np.asarray([map_tag(p) for p in tri_phys], dtype=np.int64)
        return make_mesh(3, coords, elements, facets, tags)
    if not tris:
        raise MeshError("no triangles or tetrahedra in file")
    nodes = coords[:, :2]
    scale = max(1.0, float(np.abs(coords[:, :2]).max()))
    if np.abs(coords[:, 2]).max() > 1e-9 * scale:
        raise MeshError("2D mesh has nodes off the z=0 plane")
    elements = np.asarray(tris, dtype=np.int64)
    facets = np.asarray(segs, dtype=np.int64).reshape(len(segs), 2)
    tags = np.asarray([map_tag(p) for p in seg_phys], dtype=np.int64)
    return make_mesh(2, nodes, elements, facets, tags)


def write_msh(mesh: Mesh) -> str:
    """Serialize a mesh as MSH 2.2 ASCII.

    Boundary facets carry their BoundaryTag as the physical id, so
    ``parse_msh(write_msh(mesh))`` reproduces connectivity, coordinates
    and tags exactly.
    """
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.num_nodes)]
    for i, p in enumerate(mesh.nodes):
        z = p[2] if mesh.dim == 3 else 0.0
        out.append(f"{i + 1} {p[0]:.17g} {p[1]:.17g} {z:.17g}")
    out.append("$EndNodes")
    out.append("$Elements")
    out.append(str(mesh.facets.shape[0] + mesh.num_elements))
    eid = 1
    ftype = 1 if mesh.dim == 2 else 2
    for facet, tag in zip(mesh.facets, mesh.facet_tags):
        conn = " ".join(str(v + 1) for v in facet)
        out.append(f"{eid} {ftype} 2 {tag} {tag} {conn}")
        eid += 1
    etype = 2 if mesh.dim == 2 else 4
    for elem in mesh.elements:
        conn = " ".join(str(v + 1) for v in elem)
        out.append(f"{eid} {etype} 2 0 0 {conn}")
        eid += 1
    out.append("$EndElements")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Structured generators

def _lattice_mesh(xcols, ycols, ny_main, n_ext, top_tag_main):
    """Triangulate a column lattice.

    xcols: (nx+1,) x per column.  ycols: (nx+1, nrows+1) y per column and
    row.  Rows above ny_main exist only when n_ext > 0; the top row is
    tagged NEUMANN in that case, top_tag_main otherwise.
    """
    nx = len(xcols) - 1
    nrows = ny_main + n_ext
    nid = lambda i, j: j * (nx + 1) + i
    nodes = np.empty(((nx + 1) * (nrows + 1), 2))
    for j in range(nrows + 1):
        for i in range(nx + 1):
            nodes[nid(i, j)] = (xcols[i], ycols[i, j])
    elements = []
    for j in range(nrows):
        for i in range(nx):
            a, b = nid(i, j), nid(i + 1, j)
            c, d = nid(i + 1, j + 1), nid(i, j + 1)
            elements.append((a, b, c))
            elements.append((a, c, d))
    facets, tags = [], []
    top_tag = BoundaryTag.NEUMANN if n_ext > 0 else top_tag_main
    for i in range(nx):
        facets.append((nid(i, 0), nid(i + 1, 0)))
        tags.append(BoundaryTag.EXCITATION)
        facets.append((nid(i, nrows), nid(i + 1, nrows)))
        tags.append(top_tag)
    for j in range(nrows):
        facets.append((nid(0, j), nid(0, j + 1)))
        tags.append(BoundaryTag.NEUMANN)
        facets.append((nid(nx, j), nid(nx, j + 1)))
        tags.append(BoundaryTag.NEUMANN)
    return make_mesh(2, nodes, np.asarray(elements), np.asarray(facets), np.asarray(tags))


def generate_channel(width, length, tilt_deg, h, extension=0.0) -> Mesh:
    """Structured channel mesh with a tilted absorbing end.

    The excitation boundary is the bottom edge y = 0.  The top edge is
    tilted by ``tilt_deg`` degrees against the horizontal and passes
    through (width/2, length), so ``length`` is the channel length along
    the center line.  Side walls are Neumann.

    The few rows just below the tilted edge follow it in vertical steps
    of dx*tan(tilt), so every triangle touching the absorbing edge has
    one horizontal and one vertical edge.  For a wave travelling along
    y such elements carry no spurious x-gradient, which keeps per
    element angle estimates on the boundary clean; dividing each column
    uniformly instead flattens the boundary triangles on the short side
    and pollutes the estimate by several degrees.

    With ``extension`` > 0 the lattice continues past the tilted edge by
    at least that distance (uniform row spacing h) and the far edge is
    tagged Neumann instead of absorbing; node positions of the truncated
    mesh are reproduced bitwise.
    """
    if width <= 0 or length <= 0 or h <= 0:
        raise MeshError("width, length and h must be positive")
    tan_t = math.tan(math.radians(tilt_deg))
    if length - (width / 2) * abs(tan_t) <= 0:
        raise MeshError("tilt too steep: absorbing edge would cross the excitation edge")
    nx = max(2, round(width / h))
    xcols = np.array([width * i / nx for i in range(nx + 1)])
    ytop = np.array([length + (width / 2 - x) * tan_t for x in xcols])
    # Staircase strip: step height matching the edge drop per column.
    # Skipped when the tilt is negligible; shrunk if the strip would eat
    # too much of the shortest column.
    s = (width / nx) * abs(tan_t)
    n_strip = 3 if s >= 0.05 * h else 0
    while n_strip > 0 and n_strip * s > 0.35 * ytop.min():
        n_strip -= 1
    depth = n_strip * s
    ny_bulk = max(2, math.ceil((ytop.max() - depth) / h))
    ny = ny_bulk + n_strip
    n_ext = math.ceil(extension / h) if extension > 0 else 0
    ycols = np.empty((nx + 1, ny + n_ext + 1))
    for i in range(nx + 1):
        base = ytop[i] - depth
        for j in range(ny_bulk + 1):
            ycols[i, j] = j * base / ny_bulk
        for k in range(1, n_strip + 1):
            ycols[i, ny_bulk + k] = ytop[i] - (n_strip - k) * s
        for k in range(1, n_ext + 1):
            ycols[i, ny + k] = ytop[i] + k * h
    return _lattice_mesh(xcols, ycols, ny, n_ext, BoundaryTag.ABSORBING)


def generate_square(side, h, extension=0.0) -> Mesh:
    """Square domain (0, side)^2 with fully absorbing boundary.

    Intended for volumetric-source runs: there is no excitation
    boundary.  With ``extension`` > 0 the lattice grows on all four
    sides by at least that distance and every boundary edge becomes
    Neumann; the inner node lattice is preserved bitwise.
    """
    if side <= 0 or h <= 0:
        raise MeshError("side and h must be positive")
    n = max(2, round(side / h))
    hx = side / n
    m = math.ceil(extension / hx) if extension > 0 else 0
    idx = range(-m, n + m + 1)
    coords = np.array([i * hx for i in idx])
    k = len(coords)
    nid = lambda i, j: j * k + i
    nodes = np.empty((k * k, 2))
    for j in range(k):
        for i in range(k):
            nodes[nid(i, j)] = (coords[i], coords[j])
    elements = []
    for j in range(k - 1):
        for i in range(k - 1):
            a, b = nid(i, j), nid(i + 1, j)
            c, d = nid(i + 1, j + 1), nid(i, j + 1)
            elements.append((a, b, c))
            elements.append((a, c, d))
    tag = BoundaryTag.NEUMANN if m > 0 else BoundaryTag.ABSORBING
    facets, tags = [], []
    for i in range(k - 1):
        facets.append((nid(i, 0), nid(i + 1, 0)))
        facets.append((nid(i, k - 1), nid(i + 1, k - 1)))
        facets.append((nid(0, i), nid(0, i + 1)))
        facets.append((nid(k - 1, i), nid(k - 1, i + 1)))
        tags.extend([tag] * 4)
    return make_mesh(2, nodes, np.asarray(elements), np.asarray(facets), np.asarray(tags))


def generate_plate_octant(side, hole_radius, h, extension=0.0) -> Mesh:
    """Octant of a square plate with a central circular hole.

    Models one half of a quarter plate: the wedge between the vertical
    symmetry axis (polar angle 90 degrees) and the diagonal (45 degrees).
    The hole arc of radius ``hole_radius`` is the excitation boundary;
    the straight outer edge y = side/2 is absorbing; both symmetry cuts
    are Neumann.  Nodes lie on rays through the origin, so a reference
    mesh built with ``extension`` > 0 (rays continued outward with step
    h, far boundary Neumann) contains the truncated node set bitwise.

    The node row just below the outer edge follows the boundary radii
    shifted by one ray, so every triangle owning an absorbing facet has
    an edge connecting two nodes of equal radius.  Waves radiating from
    the hole have equal phase on such an edge, which removes the
    spurious tangential component of the element gradient that a
    uniformly graded row would produce (same trick as the channel
    staircase).  Near the vertical axis the shift is capped to keep
    elements from degenerating; the boundary runs almost tangent to the
    wavefronts there, so no correction is needed.
    """
    half = side / 2.0
    if hole_radius <= 0 or hole_radius >= half:
        raise MeshError("hole radius must lie in (0, side/2)")
    if h <= 0:
        raise MeshError("h must be positive")
    ns = max(2, round(half / h))
    phi = np.array([math.pi / 2 - (math.pi / 4) * (s / ns) for s in range(ns + 1)])
    router = half / np.sin(phi)
    nt = max(2, math.ceil((router.max() - hole_radius) / h))
    n_ext = math.ceil(extension / h) if extension > 0 else 0
    top_shift = np.empty(ns + 1)
    for s in range(ns + 1):
        raw = router[s - 1] if s >= 1 else math.inf
        cap = router[s] - 0.35 * (router[s] - hole_radius) / nt
        top_shift[s] = min(raw, cap)
    nid = lambda s, t: t * (ns + 1) + s
    nodes = np.empty(((ns + 1) * (nt + n_ext + 1), 2))
    for t in range(nt + n_ext + 1):
        for s in range(ns + 1):
            if t < nt:
                rho = hole_radius + t * (top_shift[s] - hole_radius) / (nt - 1)
            elif t == nt:
                rho = router[s]
            else:
                rho = router[s] + (t - nt) * h
            nodes[nid(s, t)] = (rho * math.cos(phi[s]), rho * math.sin(phi[s]))
    elements = []
    for t in range(nt + n_ext):
        for s in range(ns):
            a, b = nid(s, t), nid(s + 1, t)
            c, d = nid(s + 1, t + 1), nid(s, t + 1)
            elements.append((a, b, d))
            elements.append((b, c, d))
    facets, tags = [], []
    outer_tag = BoundaryTag.NEUMANN if n_ext > 0 else BoundaryTag.ABSORBING
    trow = nt + n_ext
    for s in range(ns):
        facets.append((nid(s, 0), nid(s + 1, 0)))
        tags.append(BoundaryTag.EXCITATION)
        facets.append((nid(s, trow), nid(s + 1, trow)))
        tags.append(outer_tag)
    for t in range(trow):
        facets.append((nid(0, t), nid(0, t + 1)))
        tags.append(BoundaryTag.NEUMANN)
        facets.append((nid(ns, t), nid(ns, t + 1)))
        tags.append(BoundaryTag.NEUMANN)
    return make_mesh(2, nodes, np.asarray(elements), np.asarray(facets), np.asarray(tags))

"""Quadrilateral/hexahedral meshes: generators, perturbation, msh v2.2 I/O, cell mappings."""

import numpy as np

# Local vertex v of a cell sits at reference coordinates (bit_0(v), ..., bit_{d-1}(v))
# on the unit cell [0,1]^d: lexicographic ordering, x running fastest.  Local face
# 2*j + s is the side where reference coordinate j equals s.

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


class MeshError(Exception):
    pass


class MappingInversionError(MeshError):
    """Newton inversion of a cell mapping did not converge."""


def tensor_points(nodes, dim):
    """All dim-fold tensor combinations of 1D nodes, lexicographic with x fastest."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    idx = np.arange(n**dim)
    return np.column_stack([nodes[(idx // n**j) % n] for j in range(dim)])


def _vertex_bits(dim):
    v = np.arange(2**dim)
    return np.stack([(v >> j) & 1 for j in range(dim)], axis=1)


def corner_weights(dim, xhat):
    """Multilinear vertex weights at reference points, shape (npts, 2^dim)."""
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    bits = _vertex_bits(dim)
    terms = np.where(bits[None, :, :] == 1, xhat[:, None, :], 1.0 - xhat[:, None, :])
    return terms.prod(axis=2)


def corner_weight_gradients(dim, xhat):
    """Reference gradients of the multilinear vertex weights, shape (npts, 2^dim, dim)."""
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    bits = _vertex_bits(dim)
    terms = np.where(bits[None, :, :] == 1, xhat[:, None, :], 1.0 - xhat[:, None, :])
    sign = np.where(bits == 1, 1.0, -1.0)
    grads = np.empty((len(xhat), 2**dim, dim))
    for k in range(dim):
        others = [j for j in range(dim) if j != k]
        prod = terms[:, :, others].prod(axis=2) if others else np.ones((len(xhat), 2**dim))
        grads[:, :, k] = prod * sign[None, :, k]
    return grads


def face_vertex_indices(dim, face):
    """Local vertex indices of a cell face, ordered lexicographically."""
    j, s = face // 2, face % 2
    bits = _vertex_bits(dim)
    return np.where(bits[:, j] == s)[0]


def face_tangent_dims(dim, face):
    j = face // 2
    return [k for k in range(dim) if k != j]


def _face_arrays(cells, dim):
    """All (cell, local_face) pairs with their sorted vertex tuples."""
    n_faces = 2 * dim
    seq = []
    for f in range(n_faces):
        fv = cells[:, face_vertex_indices(dim, f)]
        seq.append(np.sort(fv, axis=1))
    faces = np.stack(seq, axis=1).reshape(-1, 2 ** (dim - 1))
    cell_idx = np.repeat(np.arange(len(cells)), n_faces)
    local_idx = np.tile(np.arange(n_faces), len(cells))
    return faces, cell_idx, local_idx


def topological_boundary(cells, dim):
    """(cell, local_face) pairs of faces that appear exactly once."""
    faces, cell_idx, local_idx = _face_arrays(cells, dim)
    _, inverse, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    single = counts[inverse] == 1
    return cell_idx[single], local_idx[single]


def boundary_faces_of(cells, dim, boundary_id=0):
    ci, li = topological_boundary(cells, dim)
    out = np.column_stack([ci, li, np.full(len(ci), boundary_id, dtype=np.int64)])
    return out.astype(np.int64)


class Mesh:
    """Conforming quad/hex mesh with multilinear (straight-sided) cells.

    Immutable after construction; the vertex/cell arrays are marked read-only.
    """

    def __init__(self, dim, vertices, cells, boundary_faces=None, level_id=0, validate=True):
        self.dim = int(dim)
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != self.dim:
            raise MeshError(f"vertices must have shape (n, {self.dim})")
        if self.cells.ndim != 2 or self.cells.shape[1] != 2**self.dim:
            raise MeshError(f"cells must have shape (n, {2 ** self.dim})")
        if boundary_faces is None:
            boundary_faces = boundary_faces_of(self.cells, self.dim)
        self.boundary_faces = np.ascontiguousarray(boundary_faces, dtype=np.int64).reshape(-1, 3)
        self.level_id = int(level_id)
        for a in (self.vertices, self.cells, self.boundary_faces):
            a.setflags(write=False)
        self._min_edge = None
        if validate:
            self.validate()

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def cell_vertex_coords(self, cells=None):
        if cells is None:
            return self.vertices[self.cells]
        return self.vertices[self.cells[cells]]

    def map_points(self, xhat, cells=None):
        """Forward multilinear map.  cells=None: (n_cells, npts, d); else per-point cells."""
        w = corner_weights(self.dim, xhat)
        if cells is None:
            return np.einsum("pv,cvd->cpd", w, self.cell_vertex_coords())
        return np.einsum("pv,pvd->pd", w, self.cell_vertex_coords(cells))

    def jacobians(self, xhat, cells=None):
        """Mapping Jacobians dF/dxhat.  cells=None: (n_cells, npts, d, d); else per-point."""
        g = corner_weight_gradients(self.dim, xhat)
        if cells is None:
            return np.einsum("pvb,cva->cpab", g, self.cell_vertex_coords())
        return np.einsum("pvb,pva->pab", g, self.cell_vertex_coords(cells))

    def cell_bounding_boxes(self):
        cv = self.cell_vertex_coords()
        return cv.min(axis=1), cv.max(axis=1)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def diameter(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def cell_diameters(self):
        cv = self.cell_vertex_coords()
        # max distance between the corner pairs across the cell diagonal bounds the diameter
        diff = cv[:, :, None, :] - cv[:, None, :, :]
        return np.sqrt((diff**2).sum(axis=3)).max(axis=(1, 2))

    def min_edge_length(self):
        if self._min_edge is None:
            cv = self.cell_vertex_coords()
            bits = _vertex_bits(self.dim)
            lmin = np.inf
            for j in range(self.dim):
                a = np.where(bits[:, j] == 0)[0]
                b = a + 2**j
                lmin = min(lmin, np.linalg.norm(cv[:, a] - cv[:, b], axis=2).min())
            self._min_edge = float(lmin)
        return self._min_edge

    def cell_centroids(self):
        return self.cell_vertex_coords().mean(axis=1)

    def mapping(self, cell):
        return CellMapping(self, cell)

    def boundary_ids(self):
        return np.unique(self.boundary_faces[:, 2])

    def validate(self):
        nv = self.n_vertices
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= nv):
            raise MeshError("cell vertex index out of range")
        for row in self.cells:
            if len(set(row.tolist())) != len(row):
                raise MeshError("cell references a repeated vertex")
        pts = tensor_points(_GAUSS2, self.dim)
        J = self.jacobians(pts)
        det = np.linalg.det(J)
        if det.size and det.min() <= 0.0:
            bad = np.where(det.min(axis=1) <= 0.0)[0]
            raise MeshError(f"non-positive Jacobian in cells {bad[:10].tolist()}")
        ci, li = topological_boundary(self.cells, self.dim)
        have = set(zip(self.boundary_faces[:, 0].tolist(), self.boundary_faces[:, 1].tolist()))
        want = set(zip(ci.tolist(), li.tolist()))
        if have != want:
            raise MeshError("boundary faces do not partition the topological boundary")
        if len(self.boundary_faces) != len(want):
            raise MeshError("duplicate boundary face entries")


class CellMapping:
    """Multilinear map F_K from the unit cell [0,1]^d onto one physical cell."""

    def __init__(self, mesh, cell):
        self.cell = int(cell)
        self.dim = mesh.dim
        self.degree = 1
        self.vertex_coords = mesh.vertices[mesh.cells[self.cell]]

    def map_to_real(self, xhat):
        w = corner_weights(self.dim, xhat)
        out = w @ self.vertex_coords
        return out[0] if np.asarray(xhat).ndim == 1 else out

    def jacobian(self, xhat):
        g = corner_weight_gradients(self.dim, xhat)
        out = np.einsum("pvb,va->pab", g, self.vertex_coords)
        return out[0] if np.asarray(xhat).ndim == 1 else out

    def diameter(self):
        cv = self.vertex_coords
        diff = cv[:, None, :] - cv[None, :, :]
        return float(np.sqrt((diff**2).sum(axis=2)).max())


def map_to_real(mapping, xhat):
    """Physical coordinates of reference point(s); extrapolates outside [0,1]^d."""
    return mapping.map_to_real(xhat)


def invert_mapping_batch(verts, x, tol, max_iter=30):
    """Damped Newton inverse of multilinear maps, vectorized over point/cell pairs.

    verts: (m, 2^d, d) cell corner coordinates, x: (m, d) physical targets,
    tol: scalar or (m,) residual tolerance.  Returns (xhat, converged, residual).
    The first Newton step from the cell center is exact for affine cells.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, dim = x.shape
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (m,))
    xhat = np.full((m, dim), 0.5)

    def forward(v, xh):
        return np.einsum("pv,pvd->pd", corner_weights(dim, xh), v)

    res = forward(verts, xhat) - x
    rnorm = np.linalg.norm(res, axis=1)
    converged = rnorm <= tol
    failed = np.zeros(m, dtype=bool)
    for _ in range(max_iter):
        active = ~(converged | failed)
        if not active.any():
            break
        ia = np.where(active)[0]
        g = corner_weight_gradients(dim, xhat[ia])
        J = np.einsum("pvb,pva->pab", g, verts[ia])
        det = np.linalg.det(J)
        scale = np.abs(J).max(axis=(1, 2)) ** dim + 1e-300
        sing = np.abs(det) < 1e-14 * scale
        if sing.any():
            failed[ia[sing]] = True
            ia = ia[~sing]
            if len(ia) == 0:
                continue
            J = J[~sing]
        step = np.linalg.solve(J, res[ia][:, :, None])[:, :, 0]
        new_x = xhat[ia] - step
        new_r = forward(verts[ia], new_x) - x[ia]
        new_n = np.linalg.norm(new_r, axis=1)
        # damping factor 0.5 while the residual grows
        for _ in range(8):
            worse = (new_n > rnorm[ia]) & (new_n > tol[ia])
            if not worse.any():
                break
            step[worse] *= 0.5
            new_x[worse] = xhat[ia[worse]] - step[worse]
            new_r[worse] = forward(verts[ia[worse]], new_x[worse]) - x[ia[worse]]
            new_n[worse] = np.linalg.norm(new_r[worse], axis=1)
        xhat[ia] = new_x
        res[ia] = new_r
        rnorm[ia] = new_n
        converged[ia] = new_n <= tol[ia]
    return xhat, converged, rnorm


def invert_mapping(mapping, x, tol=None, max_iter=30):
    """Reference coordinates of a physical point; may lie outside [0,1]^d.

    Default tolerance is 1e-12 times the cell diameter.  Raises
    MappingInversionError when Newton does not converge.
    """
    if tol is None:
        tol = 1e-12 * mapping.diameter()
    xhat, ok, rnorm = invert_mapping_batch(
        mapping.vertex_coords[None], np.atleast_2d(x), tol, max_iter
    )
    if not ok[0]:
        raise MappingInversionError(
            f"no convergence inverting cell {mapping.cell} at point {np.asarray(x)} "
            f"(residual {rnorm[0]:.3e})"
        )
    return xhat[0]


def _extent_axes(dim, extent, n):
    if np.isscalar(extent[0]):
        extent = [extent] * dim
    return [np.linspace(lo, hi, n + 1) for lo, hi in extent]


def _tensor_mesh(axes, keep=None, level_id=0, boundary_all_zero=False):
    """Structured mesh from per-axis coordinate arrays; keep masks tensor cells."""
    dim = len(axes)
    sizes = [len(a) for a in axes]
    grids = np.meshgrid(*axes, indexing="ij")
    # vertex id = i0 + n0*i1 + n0*n1*i2 so that x runs fastest
    vertices = np.column_stack([g.reshape(-1, order="F") for g in grids])
    strides = np.cumprod([1] + sizes[:-1])
    ncell = [s - 1 for s in sizes]
    cell_idx = np.indices(ncell).reshape(dim, -1).T  # (nc, d), index order (i0, i1, i2)
    if keep is not None:
        cell_idx = cell_idx[keep(cell_idx)]
    bits = _vertex_bits(dim)
    cells = ((cell_idx[:, None, :] + bits[None, :, :]) * strides).sum(axis=2)
    # deterministic lexicographic cell order, x fastest (lexsort: last key is primary)
    order = np.lexsort([cell_idx[:, k] for k in range(dim)])
    cells = cells[order]
    used = np.unique(cells)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = Mesh(dim, vertices[used], remap[cells], level_id=level_id)
    return mesh


def _assign_box_boundary_ids(mesh, extent):
    """Boundary id 2*j + s for the domain face where coordinate j equals lo/hi."""
    if np.isscalar(extent[0]):
        extent = [extent] * mesh.dim
    faces = mesh.boundary_faces.copy()
    for k, (cell, face, _) in enumerate(faces):
        fv = mesh.cells[cell][face_vertex_indices(mesh.dim, face)]
        coords = mesh.vertices[fv]
        for j in range(mesh.dim):
            lo, hi = extent[j]
            tol = 1e-12 * (hi - lo)
            if np.all(np.abs(coords[:, j] - lo) <= tol):
                faces[k, 2] = 2 * j
            elif np.all(np.abs(coords[:, j] - hi) <= tol):
                faces[k, 2] = 2 * j + 1
    return Mesh(mesh.dim, mesh.vertices, mesh.cells, faces, level_id=mesh.level_id)


def generate_hypercube(dim, extent=(-1.0, 1.0), n_refinements=0, level_id=0):
    """Structured mesh of 2^(dim*n_refinements) cells on a box, per-face boundary ids 2j+s."""
    if n_refinements < 0:
        raise ValueError("n_refinements must be >= 0")
    axes = _extent_axes(dim, extent, 2**n_refinements)
    mesh = _tensor_mesh(axes, level_id=level_id)
    return _assign_box_boundary_ids(mesh, extent)


def _graded_axis(n_refinements, corner_refine_rounds, corner_band):
    """Symmetric axis on [-1,1] with band-splitting toward 0."""
    t = np.linspace(-1.0, 1.0, 2 ** (n_refinements + 1) + 1)
    for _ in range(corner_refine_rounds):
        i0 = int(np.searchsorted(t, 0.0))
        right = t[i0 : min(i0 + corner_band + 1, len(t))]
        left = t[max(i0 - corner_band, 0) : i0 + 1]
        mids = np.concatenate([(left[:-1] + left[1:]) / 2, (right[:-1] + right[1:]) / 2])
        t = np.sort(np.concatenate([t, mids]))
    return t


def generate_lshape(dim, n_refinements=1, corner_refine_rounds=0, corner_band=2, level_id=0):
    """L-shaped (2D) / Fichera (3D) domain: [-1,1]^d minus the positive orthant.

    The base is the 3 (or 7) unit squares/cubes refined n_refinements times.
    Corner refinement splits the corner_band tensor intervals nearest the
    re-entrant corner at the origin, once per round, keeping the mesh
    conforming by construction.
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    t = _graded_axis(n_refinements, corner_refine_rounds, corner_band)
    axes = [t] * dim
    mids = (t[:-1] + t[1:]) / 2.0

    def keep(cell_idx):
        centers = np.column_stack([mids[cell_idx[:, j]] for j in range(dim)])
        return ~(centers > 0).all(axis=1)

    return _tensor_mesh(axes, keep=keep, level_id=level_id)


def generate_perturbed(base, amplitude, seed=0, level_id=None):
    """Copy of a mesh with interior vertices displaced by a smooth random field.

    Topology and boundary vertices are unchanged.  amplitude must stay below
    half the shortest edge; meshes that would invert a cell are rejected.
    """
    if level_id is None:
        level_id = base.level_id
    if amplitude == 0:
        return Mesh(base.dim, base.vertices, base.cells, base.boundary_faces, level_id)
    if not 0 <= amplitude < 0.5 * base.min_edge_length():
        raise ValueError("amplitude must satisfy 0 <= amplitude < 0.5 * min edge length")
    rng = np.random.default_rng(seed)
    lo, hi = base.bounding_box()
    span = np.where(hi > lo, hi - lo, 1.0)
    xi = (base.vertices - lo) / span  # normalized coordinates in [0,1]
    n_modes = 3
    disp = np.zeros_like(base.vertices)
    for _ in range(n_modes):
        amp = rng.standard_normal(base.dim)
        freq = rng.integers(1, 3, size=(base.dim, base.dim))
        phase = rng.uniform(0, 2 * np.pi, size=(base.dim, base.dim))
        for c in range(base.dim):
            disp[:, c] += amp[c] * np.prod(
                np.sin(np.pi * freq[c] * xi + phase[c]), axis=1
            )
    peak = np.abs(disp).max()
    if peak > 0:
        disp *= amplitude / peak
    boundary_vertices = set()
    for cell, face, _ in base.boundary_faces:
        boundary_vertices.update(base.cells[cell][face_vertex_indices(base.dim, face)].tolist())
    interior = np.ones(base.n_vertices, dtype=bool)
    interior[list(boundary_vertices)] = False
    vertices = base.vertices + disp * interior[:, None]
    try:
        return Mesh(base.dim, vertices, base.cells, base.boundary_faces, level_id)
    except MeshError as exc:
        raise ValueError(f"perturbation of amplitude {amplitude} inverts a cell: {exc}") from exc


# gmsh orders quad corners counter-clockwise and hex corners bottom-CCW/top-CCW;
# the permutation to/from lexicographic order is an involution.
_GMSH_PERM = {2: np.array([0, 1, 3, 2]), 3: np.array([0, 1, 3, 2, 4, 5, 7, 6])}
_CELL_TYPE = {2: 3, 3: 5}  # msh type: 3 = quad, 5 = hex
_FACE_TYPE = {2: 1, 3: 3}  # msh type: 1 = line, 3 = quad
_SUPPORTED_TYPES = {1: 2, 2: 3, 3: 4, 4: 4, 5: 8, 15: 1}  # type -> #nodes (parsing)


def write_msh(mesh, path):
    """Write a mesh as ASCII msh v2.2; boundary faces become tagged line/quad elements."""
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    for i, v in enumerate(mesh.vertices):
        coords = list(v) + [0.0] * (3 - mesh.dim)
        lines.append(f"{i + 1} " + " ".join(f"{c:.17g}" for c in coords))
    lines += ["$EndNodes", "$Elements"]
    n_elem = len(mesh.boundary_faces) + mesh.n_cells
    lines.append(str(n_elem))
    eid = 1
    ftype = _FACE_TYPE[mesh.dim]
    for cell, face, bid in mesh.boundary_faces:
        fv = mesh.cells[cell][face_vertex_indices(mesh.dim, face)]
        if mesh.dim == 3:
            fv = fv[[0, 1, 3, 2]]  # lexicographic -> CCW quad
        nodes = " ".join(str(v + 1) for v in fv)
        lines.append(f"{eid} {ftype} 2 {bid} {eid} {nodes}")
        eid += 1
    ctype = _CELL_TYPE[mesh.dim]
    perm = _GMSH_PERM[mesh.dim]
    for cell in mesh.cells:
        nodes = " ".join(str(v + 1) for v in cell[perm])
        lines.append(f"{eid} {ctype} 2 0 {eid} {nodes}")
        eid += 1
    lines.append("$EndElements")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_msh(path, level_id=0):
    """Read an ASCII msh v2.2 file with quad or hex cells; boundary ids from physical tags."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    sections = {}
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            j = i + 1
            body = []
            while j < len(tokens) and tokens[j].strip() != f"$End{name}":
                body.append(tokens[j])
                j += 1
            if j == len(tokens):
                raise MeshError(f"malformed section {name}: missing $End{name}")
            sections[name] = body
            i = j + 1
        else:
            i += 1
    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshError("malformed msh file: missing $Nodes or $Elements")

    node_lines = sections["Nodes"]
    try:
        n_nodes = int(node_lines[0])
        ids = np.empty(n_nodes, dtype=np.int64)
        coords = np.empty((n_nodes, 3))
        for k in range(n_nodes):
            parts = node_lines[1 + k].split()
            ids[k] = int(parts[0])
            coords[k] = [float(parts[1]), float(parts[2]), float(parts[3])]
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed $Nodes section: {exc}") from exc
    id_map = {int(i): k for k, i in enumerate(ids)}

    elem_lines = sections["Elements"]
    try:
        n_elem = int(elem_lines[0])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed $Elements section: {exc}") from exc
    elems = []
    for k in range(n_elem):
        parts = [int(t) for t in elem_lines[1 + k].split()]
        etype = parts[1]
        if etype not in _SUPPORTED_TYPES:
            raise MeshError(f"unsupported element type {etype}")
        n_tags = parts[2]
        tags = parts[3 : 3 + n_tags]
        nodes = parts[3 + n_tags :]
        if len(nodes) != _SUPPORTED_TYPES[etype]:
            raise MeshError(f"malformed element line: expected {_SUPPORTED_TYPES[etype]} nodes")
        elems.append((etype, tags[0] if tags else 0, [id_map[n] for n in nodes]))
    types = {e[0] for e in elems}
    if 2 in types or 4 in types:
        raise MeshError("unsupported element type: simplex elements are not handled")
    if 5 in types:
        dim = 3
    elif 3 in types:
        dim = 2
    else:
        raise MeshError("no quad or hex cells found")

    ctype, ftype = _CELL_TYPE[dim], _FACE_TYPE[dim]
    perm = _GMSH_PERM[dim]
    cells = np.array([e[2] for e in elems if e[0] == ctype], dtype=np.int64)[:, perm]
    vertices = coords[:, :dim]
    used = np.unique(cells)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices = vertices[used]
    cells = remap[cells]

    ci, li = topological_boundary(cells, dim)
    key_to_face = {}
    for c, l in zip(ci, li):
        fv = cells[c][face_vertex_indices(dim, l)]
        key_to_face[tuple(sorted(fv.tolist()))] = (c, l)
    face_ids = {k: 0 for k in key_to_face}
    for etype, tag, nodes in elems:
        if etype != ftype:
            continue
        key = tuple(sorted(remap[np.array(nodes)].tolist()))
        if -1 in key or key not in key_to_face:
            raise MeshError("boundary element does not match any boundary face")
        face_ids[key] = tag
    boundary = np.array(
        [[key_to_face[k][0], key_to_face[k][1], face_ids[k]] for k in key_to_face],
        dtype=np.int64,
    ).reshape(-1, 3)
    order = np.lexsort((boundary[:, 1], boundary[:, 0]))
    return Mesh(dim, vertices, cells, boundary[order], level_id=level_id)


def dump_csv(mesh, directory, prefix="mesh"):
    """Plain CSV dump of vertices and cells for debugging."""
    import os

    vp = os.path.join(directory, f"{prefix}_vertices.csv")
    cp = os.path.join(directory, f"{prefix}_cells.csv")
    with open(vp, "w") as fh:
        fh.write(",".join(f"x{j}" for j in range(mesh.dim)) + "\n")
        for v in mesh.vertices:
            fh.write(",".join(f"{c:.17g}" for c in v) + "\n")
    with open(cp, "w") as fh:
        fh.write(",".join(f"v{j}" for j in range(2**mesh.dim)) + "\n")
        for c in mesh.cells:
            fh.write(",".join(str(int(v)) for v in c) + "\n")
    return vp, cp


class PartitionLabels:
    """Per-cell owner ranks for a simulated distributed mesh."""

    def __init__(self, mesh, owner_rank, n_ranks):
        self.mesh = mesh
        self.owner_rank = np.ascontiguousarray(owner_rank, dtype=np.int64)
        self.n_ranks = int(n_ranks)
        if len(self.owner_rank) != mesh.n_cells:
            raise ValueError("one owner rank per cell required")
        if self.owner_rank.size and (
            self.owner_rank.min() < 0 or self.owner_rank.max() >= n_ranks
        ):
            raise ValueError("ranks must lie in [0, n_ranks)")

    def cells_per_rank(self):
        return np.bincount(self.owner_rank, minlength=self.n_ranks)

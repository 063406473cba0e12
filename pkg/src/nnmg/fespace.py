"""Continuous Lagrange Q^p spaces: DoF numbering, support points, 1D shapes, constraints."""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .mesh import face_vertex_indices, tensor_points


def gauss_legendre(n):
    """n-point Gauss-Legendre rule on [0,1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def gauss_lobatto(n):
    """n Gauss-Lobatto points on [0,1] (includes the endpoints)."""
    if n < 2:
        raise ValueError("need at least 2 points")
    nodes = np.linspace(0.0, 1.0, n)
    if n > 2:
        inner = np.polynomial.legendre.Legendre.basis(n - 1).deriv(1).roots()
        nodes[1:-1] = (inner + 1.0) / 2.0
    return nodes


class Shape1D:
    """1D Lagrange basis of degree p at Gauss-Lobatto nodes on [0,1]."""

    def __init__(self, p):
        if p < 1:
            raise ValueError("degree must be >= 1")
        self.p = p
        self.nodes = gauss_lobatto(p + 1)
        diff = self.nodes[:, None] - self.nodes[None, :]
        np.fill_diagonal(diff, 1.0)
        self._denom = diff.prod(axis=1)

    def values(self, t):
        """phi_i(t) for all i, shape (len(t), p+1); exact 0/1 at the nodes."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = self.p + 1
        M = t[:, None] - self.nodes[None, :]
        out = np.empty((len(t), n))
        for i in range(n):
            cols = [j for j in range(n) if j != i]
            out[:, i] = M[:, cols].prod(axis=1) / self._denom[i]
        return out

    def derivatives(self, t):
        """phi_i'(t) for all i, shape (len(t), p+1)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = self.p + 1
        M = t[:, None] - self.nodes[None, :]
        out = np.zeros((len(t), n))
        for i in range(n):
            for k in range(n):
                if k == i:
                    continue
                cols = [j for j in range(n) if j != i and j != k]
                term = M[:, cols].prod(axis=1) if cols else np.ones(len(t))
                out[:, i] += term
            out[:, i] /= self._denom[i]
        return out


def eval_shape_1d(p, t):
    """Values and derivatives of the degree-p 1D Lagrange basis at t."""
    s = Shape1D(p)
    return s.values(t), s.derivatives(t)


class DirichletConstraints:
    """Fixed-value constraints on a set of global DoFs."""

    def __init__(self, dofs=None, values=None):
        dofs = np.asarray([] if dofs is None else dofs, dtype=np.int64).ravel()
        values = np.asarray([] if values is None else values, dtype=float).ravel()
        order = np.argsort(dofs, kind="stable")
        self.dofs = dofs[order]
        self.values = values[order] if len(values) else np.zeros(len(dofs))
        if len(self.dofs) != len(self.values):
            raise ValueError("dofs and values must align")

    def __len__(self):
        return len(self.dofs)

    def mask(self, n_dofs):
        m = np.zeros(n_dofs, dtype=bool)
        m[self.dofs] = True
        return m

    def apply(self, u):
        """Set constrained entries to their boundary values (idempotent)."""
        u[self.dofs] = self.values
        return u

    def zero(self, u):
        u[self.dofs] = 0.0
        return u


class FESpace:
    """Scalar or vector Q^p space on a mesh; vector components interleaved fastest."""

    def __init__(self, mesh, degree, n_components, cell_dofs, support_points):
        self.mesh = mesh
        self.degree = int(degree)
        self.n_components = int(n_components)
        self.shape1d = Shape1D(degree)
        self.cell_dofs = cell_dofs  # scalar DoFs, (n_cells, (p+1)^d)
        self.support_points = support_points  # per scalar DoF, (n_scalar, d)
        self.n_scalar_dofs = len(support_points)
        self.n_dofs = self.n_scalar_dofs * self.n_components
        self.constraints = DirichletConstraints()
        self.reference_nodes = tensor_points(self.shape1d.nodes, mesh.dim)
        for a in (self.cell_dofs, self.support_points):
            a.setflags(write=False)

    @property
    def n_local_dofs(self):
        return (self.degree + 1) ** self.mesh.dim

    def cell_dofs_full(self):
        """Per-cell global DoFs including components, component fastest."""
        nc = self.n_components
        if nc == 1:
            return self.cell_dofs
        full = self.cell_dofs[:, :, None] * nc + np.arange(nc)[None, None, :]
        return full.reshape(len(self.cell_dofs), -1)

    def constrained_mask(self):
        return self.constraints.mask(self.n_dofs)


def build_space(mesh, degree, n_components=1):
    """Number global DoFs by geometric matching of per-cell Gauss-Lobatto points."""
    shape = Shape1D(degree)
    ref = tensor_points(shape.nodes, mesh.dim)
    pts = mesh.map_points(ref)  # (n_cells, nloc, d)
    n_cells, nloc, dim = pts.shape
    flat = pts.reshape(-1, dim)
    tol = 1e-10 * mesh.min_edge_length()
    tree = cKDTree(flat)
    pairs = tree.query_pairs(r=tol, output_type="ndarray")
    n = len(flat)
    if len(pairs):
        graph = csr_matrix(
            (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
        )
        n_comp, labels = connected_components(graph, directed=False)
    else:
        n_comp, labels = n, np.arange(n)
    # deterministic numbering by first occurrence in cell-major scan order
    first = np.full(n_comp, n, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(n))
    order = np.argsort(first, kind="stable")
    rank = np.empty(n_comp, dtype=np.int64)
    rank[order] = np.arange(n_comp)
    global_ids = rank[labels]
    support = flat[first[order]]
    return FESpace(mesh, degree, n_components, global_ids.reshape(n_cells, nloc), support)


def _face_local_dofs(degree, dim, face):
    """Local scalar DoF indices whose node sits on the given cell face."""
    n = degree + 1
    j, s = face // 2, face % 2
    idx = np.arange(n**dim)
    comp = (idx // n**j) % n
    return idx[comp == (0 if s == 0 else degree)]


def dirichlet_constraints(space, boundary_ids, g=0.0):
    """Constrain every DoF with a support point on a face carrying one of the ids.

    boundary_ids may be "all".  g is a constant or a callable of batched points
    returning values per point (and per component for vector spaces).
    """
    mesh = space.mesh
    if isinstance(boundary_ids, str) and boundary_ids == "all":
        wanted = set(mesh.boundary_ids().tolist())
    else:
        wanted = set(int(b) for b in np.atleast_1d(boundary_ids))
        known = set(mesh.boundary_ids().tolist())
        missing = wanted - known
        if missing:
            raise ValueError(f"boundary ids {sorted(missing)} not present on the mesh")
    scalar = []
    for cell, face, bid in mesh.boundary_faces:
        if bid in wanted:
            scalar.append(space.cell_dofs[cell][_face_local_dofs(space.degree, mesh.dim, face)])
    if not scalar:
        return DirichletConstraints()
    scalar = np.unique(np.concatenate(scalar))
    points = space.support_points[scalar]
    nc = space.n_components
    if callable(g):
        vals = np.asarray(g(points), dtype=float)
    else:
        vals = np.full((len(points), nc) if nc > 1 else len(points), float(g))
    if nc == 1:
        return DirichletConstraints(scalar, vals.reshape(len(scalar)))
    vals = np.broadcast_to(vals.reshape(len(scalar), -1), (len(scalar), nc))
    dofs = scalar[:, None] * nc + np.arange(nc)[None, :]
    return DirichletConstraints(dofs.ravel(), vals.ravel())


def interpolate(space, f):
    """Nodal interpolant: coefficients are f evaluated at the support points."""
    pts = space.support_points
    nc = space.n_components
    if callable(f):
        vals = np.asarray(f(pts), dtype=float)
    else:
        vals = np.full((len(pts), nc) if nc > 1 else len(pts), float(f))
    if nc == 1:
        return vals.reshape(space.n_scalar_dofs).copy()
    return np.broadcast_to(vals.reshape(len(pts), -1), (len(pts), nc)).ravel().copy()


def contract_points(tabs, vals, dim):
    """Per-point tensor contraction: tabs[j] (npts, n1d), vals (npts, n1d^dim)."""
    n1 = tabs[0].shape[1]
    arr = vals.reshape((len(vals),) + (n1,) * dim)
    for j in range(dim):
        arr = np.einsum("p...i,pi->p...", arr, tabs[j])
    return arr


def apply_axis(arr, M, axis):
    """Contract M (m, n) against one axis of length n; that axis gets length m."""
    moved = np.moveaxis(arr, axis, -1)
    return np.moveaxis(moved @ M.T, -1, axis)


def tensor_table(mats):
    """Full tensor-product table from per-dimension matrices, x fastest."""
    table = np.ones((1, 1))
    for m in mats:
        table = np.einsum("ql,QI->QqIl", table, m).reshape(
            m.shape[0] * table.shape[0], m.shape[1] * table.shape[1]
        )
    return table


def evaluate_field(space, u, cells, xhat):
    """Evaluate the FE field at reference points inside given cells.

    cells (npts,), xhat (npts, d); returns (npts,) or (npts, n_components).
    """
    cells = np.atleast_1d(np.asarray(cells, dtype=np.int64))
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    dim = space.mesh.dim
    tabs = [space.shape1d.values(xhat[:, j]) for j in range(dim)]
    nc = space.n_components
    gather = space.cell_dofs[cells]
    if nc == 1:
        return contract_points(tabs, u[gather], dim)
    umat = u.reshape(space.n_scalar_dofs, nc)
    out = np.empty((len(cells), nc))
    for c in range(nc):
        out[:, c] = contract_points(tabs, umat[:, c][gather], dim)
    return out


def l2_error(space, u, exact, n_quad=None):
    """L2 distance between a scalar FE field and a callable of batched points."""
    assert space.n_components == 1
    mesh = space.mesh
    dim = mesh.dim
    nq1 = n_quad or space.degree + 2
    q, w = gauss_legendre(nq1)
    qpts = tensor_points(q, dim)
    wq = tensor_points(w, dim).prod(axis=1)
    tabs = [space.shape1d.values(qpts[:, j]) for j in range(dim)]
    # full local value table by tensor product, lexicographic local order
    table = np.ones((len(qpts), 1))
    for j in range(dim):
        table = np.einsum("ql,qi->qil", table, tabs[j]).reshape(len(qpts), -1)
    uh = u[space.cell_dofs] @ table.T  # (n_cells, nq)
    xq = mesh.map_points(qpts)  # (n_cells, nq, d)
    det = np.linalg.det(mesh.jacobians(qpts))
    diff2 = (uh - exact(xq.reshape(-1, dim)).reshape(uh.shape)) ** 2
    return float(np.sqrt((diff2 * det * wq[None, :]).sum()))

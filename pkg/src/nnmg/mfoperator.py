"""Matrix-free Poisson and linear-elasticity operators plus assembled test oracles.

Level vectors are plain float64 numpy arrays.  Constrained DoFs follow the
homogeneous-operator convention: input entries are zeroed before the cell
loop and output entries copy the input (identity on the constrained
subspace), so the same operator serves CG and the V-cycle levels.
"""

import numpy as np
from scipy.sparse import coo_matrix

from .fespace import apply_axis as _apply_axis
from .fespace import gauss_legendre
from .fespace import tensor_table as _tensor_table
from .mesh import tensor_points


def lame_parameters(E, nu):
    """Lame constants (lambda, mu) from Young's modulus and Poisson ratio."""
    lam = E * nu / ((1 - 2 * nu) * (1 + nu))
    mu = E / (2 * (1 + nu))
    return lam, mu


class _OperatorBase:
    """Shared quadrature and geometry setup for the matrix-free operators."""

    def __init__(self, space):
        self.space = space
        mesh = space.mesh
        dim = mesh.dim
        p = space.degree
        q1, w1 = gauss_legendre(p + 1)
        self.qpoints = tensor_points(q1, dim)
        self.qweights = tensor_points(w1, dim).prod(axis=1)
        self._S = space.shape1d.values(q1)
        self._D = space.shape1d.derivatives(q1)
        J = mesh.jacobians(self.qpoints)  # (nc, nq, d, d)
        det = np.linalg.det(J)
        if det.min() <= 0:
            raise ValueError("mesh has non-positive Jacobians")
        scale = np.abs(J).max()
        affine = np.abs(J - J[:, :1]).max() <= 1e-13 * scale
        if affine:
            J, det = J[:, :1], det[:, :1]
        self._Jinv = np.linalg.inv(J)
        self._det = det
        self._diag = None

    @property
    def n_dofs(self):
        return self.space.n_dofs

    @property
    def constraints(self):
        return self.space.constraints

    def _axis(self, k):
        return 1 + (self.space.mesh.dim - 1 - k)

    def _gradients_hat(self, arr, dim):
        """Reference gradients at quadrature points via sum factorization."""
        nc = arr.shape[0]
        nq = len(self.qweights)
        extra = arr.shape[1 + dim :]
        ghat = np.empty((nc, nq) + extra + (dim,))
        for j in range(dim):
            t = arr
            for k in range(dim):
                t = _apply_axis(t, self._D if k == j else self._S, self._axis(k))
            ghat[..., j] = t.reshape((nc, nq) + extra)
        return ghat

    def _integrate_gradients(self, tref, dim, extra=()):
        """Transpose of _gradients_hat: accumulate test-function contributions."""
        nc = tref.shape[0]
        n1 = self.space.degree + 1
        nq1 = n1
        out = np.zeros((nc,) + (n1,) * dim + extra)
        for j in range(dim):
            t = tref[..., j].reshape((nc,) + (nq1,) * dim + extra)
            for k in range(dim):
                M = self._D if k == j else self._S
                t = _apply_axis(t, M.T, self._axis(k))
            out += t
        return out

    def _scatter(self, local, n_scalar):
        flat = self.space.cell_dofs.ravel()
        return np.bincount(flat, weights=local.ravel(), minlength=n_scalar)

    def diagonal(self):
        if self._diag is None:
            self._diag = self._compute_diagonal()
        return self._diag.copy()


class LaplaceOperator(_OperatorBase):
    """Matrix-free scalar Laplacian with Gauss-Legendre (p+1)^d quadrature."""

    def __init__(self, space):
        if space.n_components != 1:
            raise ValueError("LaplaceOperator is scalar; use ElasticityOperator")
        super().__init__(space)
        # G = J^-1 J^-T |det J|, one quadrature slot when the geometry is affine
        self._G = self._Jinv @ self._Jinv.transpose(0, 1, 3, 2) * self._det[..., None, None]

    def apply(self, u):
        space = self.space
        if u.shape != (self.n_dofs,):
            raise ValueError(f"expected vector of length {self.n_dofs}")
        dim = space.mesh.dim
        n1 = space.degree + 1
        uh = u.copy()
        uh[self.constraints.dofs] = 0.0
        arr = uh[space.cell_dofs].reshape((space.mesh.n_cells,) + (n1,) * dim)
        ghat = self._gradients_hat(arr, dim)
        tmp = (self._G @ ghat[..., None])[..., 0] * self.qweights[None, :, None]
        local = self._integrate_gradients(tmp, dim)
        v = self._scatter(local, space.n_scalar_dofs)
        v[self.constraints.dofs] = u[self.constraints.dofs]
        return v

    def _gradient_table(self):
        dim = self.space.mesh.dim
        gt = np.stack(
            [
                _tensor_table([self._D if k == j else self._S for k in range(dim)])
                for j in range(dim)
            ],
            axis=2,
        )
        return gt  # (nq, nloc, d)

    def _compute_diagonal(self):
        space = self.space
        gt = self._gradient_table()
        if self._G.shape[1] == 1:
            B = np.einsum("qla,qlb,q->lab", gt, gt, self.qweights)
            local = np.einsum("lab,cab->cl", B, self._G[:, 0])
        else:
            local = np.empty((space.mesh.n_cells, gt.shape[1]))
            for s in range(0, space.mesh.n_cells, 512):
                e = min(s + 512, space.mesh.n_cells)
                local[s:e] = np.einsum(
                    "qla,cqab,qlb,q->cl", gt, self._G[s:e], gt, self.qweights
                )
        d = self._scatter(local, space.n_scalar_dofs)
        d[self.constraints.dofs] = 1.0
        return d

    def _element_matrices(self, cells):
        gt = self._gradient_table()
        G = self._G if self._G.shape[1] > 1 else np.broadcast_to(
            self._G, (self.space.mesh.n_cells, len(self.qweights)) + self._G.shape[2:]
        )
        return np.einsum("qla,cqab,qmb,q->clm", gt, G[cells], gt, self.qweights)


class ElasticityOperator(_OperatorBase):
    """Matrix-free compressible linear elasticity, sigma = lam tr(eps) I + 2 mu eps."""

    def __init__(self, space, lam, mu):
        if space.n_components != space.mesh.dim:
            raise ValueError("elasticity needs one component per space dimension")
        super().__init__(space)
        self.lam = float(lam)
        self.mu = float(mu)
        self._dv = self._det * self.qweights[None, :]

    def apply(self, u):
        space = self.space
        if u.shape != (self.n_dofs,):
            raise ValueError(f"expected vector of length {self.n_dofs}")
        dim = space.mesh.dim
        nc = space.n_components
        n1 = space.degree + 1
        uh = u.copy()
        uh[self.constraints.dofs] = 0.0
        ucell = uh.reshape(space.n_scalar_dofs, nc)[space.cell_dofs]
        arr = ucell.reshape((space.mesh.n_cells,) + (n1,) * dim + (nc,))
        ghat = self._gradients_hat(arr, dim)  # (ncells, nq, ncomp, d)
        K = self._Jinv
        pg = ghat @ K  # physical gradient, pg[c,q,a,b] = d u_a / d x_b
        eps = 0.5 * (pg + pg.transpose(0, 1, 3, 2))
        tr = np.trace(eps, axis1=2, axis2=3)
        sig = 2.0 * self.mu * eps
        idx = np.arange(dim)
        sig[:, :, idx, idx] += self.lam * tr[:, :, None]
        tref = sig @ K.transpose(0, 1, 3, 2)
        tref *= self._dv[:, :, None, None]
        local = self._integrate_gradients(tref, dim, extra=(nc,))
        v = np.zeros_like(u)
        vmat = v.reshape(space.n_scalar_dofs, nc)
        flat = space.cell_dofs.ravel()
        locflat = local.reshape(space.mesh.n_cells, -1, nc)
        for c in range(nc):
            vmat[:, c] = np.bincount(
                flat, weights=locflat[:, :, c].ravel(), minlength=space.n_scalar_dofs
            )
        v[self.constraints.dofs] = u[self.constraints.dofs]
        return v

    def _physical_gradients(self, cells):
        dim = self.space.mesh.dim
        gt = np.stack(
            [
                _tensor_table([self._D if k == j else self._S for k in range(dim)])
                for j in range(dim)
            ],
            axis=2,
        )
        K = self._Jinv if self._Jinv.shape[1] > 1 else np.broadcast_to(
            self._Jinv,
            (self.space.mesh.n_cells, len(self.qweights)) + self._Jinv.shape[2:],
        )
        return np.einsum("qli,cqib->cqlb", gt, K[cells])

    def _compute_diagonal(self):
        space = self.space
        dim = space.mesh.dim
        nc_cells = space.mesh.n_cells
        nloc = space.n_local_dofs
        dv = np.broadcast_to(self._dv, (nc_cells, len(self.qweights)))
        diag = np.zeros(self.n_dofs)
        dmat = diag.reshape(space.n_scalar_dofs, space.n_components)
        for s in range(0, nc_cells, 256):
            e = min(s + 256, nc_cells)
            pg = self._physical_gradients(np.arange(s, e))
            norm2 = (pg**2).sum(axis=3)
            # diag entry for (node l, component a):
            # sum_q dv * ((lam + mu) * pg[l,a]^2 + mu * |pg[l]|^2)
            local = (self.lam + self.mu) * pg**2 + self.mu * norm2[..., None]
            local = np.einsum("cqla,cq->cla", local, dv[s:e])
            for a in range(space.n_components):
                np.add.at(dmat[:, a], space.cell_dofs[s:e].ravel(), local[:, :, a].ravel())
        diag[self.constraints.dofs] = 1.0
        return diag

    def _element_matrices(self, cells):
        dim = self.space.mesh.dim
        ncomp = self.space.n_components
        pg = self._physical_gradients(cells)
        dv = np.broadcast_to(self._dv, (self.space.mesh.n_cells, len(self.qweights)))[cells]
        lam_term = np.einsum("cqla,cqmb,cq->clamb", pg, pg, dv)
        mu_cross = lam_term.transpose(0, 1, 4, 3, 2)  # pg[l,b] pg[m,a]
        dots = np.einsum("cqli,cqmi,cq->clm", pg, pg, dv)
        elem = self.lam * lam_term + self.mu * mu_cross
        for a in range(ncomp):  # delta_ab term
            elem[:, :, a, :, a] += self.mu * dots
        nloc = self.space.n_local_dofs
        return elem.reshape(len(cells), nloc * ncomp, nloc * ncomp)


def assemble_oracle(op, max_dofs=50_000):
    """Explicit CSR assembly with the operator's quadrature; test oracle only."""
    if op.n_dofs > max_dofs:
        raise ValueError(f"assemble_oracle limited to {max_dofs} DoFs, got {op.n_dofs}")
    space = op.space
    full_dofs = space.cell_dofs_full()
    n = op.n_dofs
    cmask = space.constrained_mask()
    rows_acc, cols_acc, vals_acc = [], [], []
    chunk = max(1, 2**22 // max(1, full_dofs.shape[1] ** 2))
    for s in range(0, space.mesh.n_cells, chunk):
        e = min(s + chunk, space.mesh.n_cells)
        elem = op._element_matrices(np.arange(s, e))
        dofs = full_dofs[s:e]
        nl = dofs.shape[1]
        r = np.repeat(dofs, nl, axis=1).ravel()
        c = np.tile(dofs, (1, nl)).ravel()
        v = elem.ravel()
        keep = ~(cmask[r] | cmask[c])
        rows_acc.append(r[keep])
        cols_acc.append(c[keep])
        vals_acc.append(v[keep])
    cdofs = space.constraints.dofs
    rows_acc.append(cdofs)
    cols_acc.append(cdofs)
    vals_acc.append(np.ones(len(cdofs)))
    A = coo_matrix(
        (np.concatenate(vals_acc), (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(n, n),
    )
    return A.tocsr()


def compute_diagonal(op):
    """Exact operator diagonal; constrained entries are 1."""
    return op.diagonal()


def _face_quadrature(space, face):
    """Quadrature embedded on a cell face: reference points, tangent dims, weights."""
    mesh = space.mesh
    dim = mesh.dim
    j, s = face // 2, face % 2
    q1, w1 = gauss_legendre(space.degree + 1)
    if dim == 2:
        tpts = q1[:, None]
        wq = w1
    else:
        tpts = tensor_points(q1, 2)
        wq = tensor_points(w1, 2).prod(axis=1)
    ref = np.empty((len(tpts), dim))
    ref[:, j] = float(s)
    tdims = [k for k in range(dim) if k != j]
    for c, k in enumerate(tdims):
        ref[:, k] = tpts[:, c]
    return ref, tdims, wq


def assemble_rhs(space, f=None, neumann=None):
    """Load vector b_i = (f, phi_i) + (g, phi_i)_GammaN; constrained entries zeroed.

    f and the Neumann values are constants or callables of batched points;
    Neumann callables receive (points, outward_normals).  For vector spaces a
    traction ("normal", magnitude) applies magnitude times the outward normal.
    """
    mesh = space.mesh
    dim = mesh.dim
    ncomp = space.n_components
    p = space.degree
    b = np.zeros(space.n_dofs)
    bmat = b.reshape(space.n_scalar_dofs, ncomp)
    q1, w1 = gauss_legendre(p + 1)
    qpts = tensor_points(q1, dim)
    wq = tensor_points(w1, dim).prod(axis=1)
    S = space.shape1d.values(q1)

    if f is not None:
        det = np.linalg.det(mesh.jacobians(qpts))
        xq = mesh.map_points(qpts)
        if callable(f):
            fv = np.asarray(f(xq.reshape(-1, dim)), dtype=float).reshape(
                mesh.n_cells, len(qpts), -1
            )
        else:
            fv = np.full((mesh.n_cells, len(qpts), 1), float(f))
        if fv.shape[2] == 1 and ncomp > 1:
            fv = np.broadcast_to(fv, (mesh.n_cells, len(qpts), ncomp))
        scaled = fv * (det * wq[None, :])[:, :, None]
        n1 = p + 1
        t = scaled.reshape((mesh.n_cells,) + (n1,) * dim + (fv.shape[2],))
        for k in range(dim):
            t = _apply_axis(t, S.T, 1 + (dim - 1 - k))
        local = t.reshape(mesh.n_cells, -1, fv.shape[2])
        flat = space.cell_dofs.ravel()
        for c in range(ncomp):
            bmat[:, c] += np.bincount(
                flat, weights=local[:, :, min(c, fv.shape[2] - 1)].ravel(),
                minlength=space.n_scalar_dofs,
            )

    if neumann:
        known = set(mesh.boundary_ids().tolist())
        for bid in neumann:
            if bid not in known:
                raise ValueError(f"unknown boundary id {bid}")
        by_face = {}
        for cell, face, bid in mesh.boundary_faces:
            if bid in neumann:
                by_face.setdefault(int(face), {}).setdefault(int(bid), []).append(int(cell))
        for face, groups in by_face.items():
            ref, tdims, wf = _face_quadrature(space, face)
            j, s = face // 2, face % 2
            sign = -1.0 if s == 0 else 1.0
            tabs = [space.shape1d.values(ref[:, k]) for k in range(dim)]
            table = np.ones((len(ref), 1))
            for k in range(dim):
                table = np.einsum("ql,qi->qil", table, tabs[k]).reshape(len(ref), -1)
            for bid, cell_list in groups.items():
                cells = np.asarray(cell_list, dtype=np.int64)
                ref_rep = np.tile(ref, (len(cells), 1))
                cells_rep = np.repeat(cells, len(ref))
                J = mesh.jacobians(ref_rep, cells_rep).reshape(
                    len(cells), len(ref), dim, dim
                )
                if dim == 2:
                    tang = J[:, :, :, tdims[0]]
                    dA = np.linalg.norm(tang, axis=2)
                else:
                    dA = np.linalg.norm(
                        np.cross(J[:, :, :, tdims[0]], J[:, :, :, tdims[1]]), axis=2
                    )
                ej = np.zeros(dim)
                ej[j] = sign
                normal = np.linalg.solve(J.transpose(0, 1, 3, 2), np.broadcast_to(
                    ej, J.shape[:2] + (dim,)).copy()[..., None])[..., 0]
                normal /= np.linalg.norm(normal, axis=2)[:, :, None]
                xq = mesh.map_points(ref_rep, cells_rep).reshape(len(cells), len(ref), dim)
                g = neumann[bid]
                if isinstance(g, tuple) and g[0] == "normal":
                    gv = float(g[1]) * normal
                elif callable(g):
                    gv = np.asarray(
                        g(xq.reshape(-1, dim), normal.reshape(-1, dim)), dtype=float
                    ).reshape(len(cells), len(ref), -1)
                else:
                    gv = np.full((len(cells), len(ref), 1), float(g))
                if gv.ndim == 2:
                    gv = gv[:, :, None]
                weight = (dA * wf[None, :])[:, :, None]
                contrib = np.einsum("fqc,ql->flc", gv * weight, table)
                flat = space.cell_dofs[cells].ravel()
                for c in range(ncomp):
                    bmat[:, c] += np.bincount(
                        flat,
                        weights=contrib[:, :, min(c, gv.shape[2] - 1)].ravel(),
                        minlength=space.n_scalar_dofs,
                    )

    b[space.constraints.dofs] = 0.0
    return b


def rigid_body_modes(space):
    """Nullspace of the free-boundary elasticity form: translations and rotations."""
    dim = space.mesh.dim
    if space.n_components != dim:
        raise ValueError("rigid body modes need a vector space with dim components")
    pts = space.support_points
    ns = space.n_scalar_dofs
    modes = []
    for a in range(dim):
        m = np.zeros((ns, dim))
        m[:, a] = 1.0
        modes.append(m.ravel())
    if dim == 2:
        m = np.zeros((ns, 2))
        m[:, 0] = -pts[:, 1]
        m[:, 1] = pts[:, 0]
        modes.append(m.ravel())
    else:
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        for cols in [(0.0, z, -y), (-z, 0.0, x), (y, -x, 0.0)]:
            m = np.zeros((ns, 3))
            for c in range(3):
                m[:, c] = cols[c]
            modes.append(m.ravel())
    return modes

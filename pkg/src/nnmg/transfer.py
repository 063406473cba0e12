"""Two-level intergrid transfers: non-nested point evaluation, nested embedding,
and polynomial (p -> p-1) coarsening.  Restriction is the exact algebraic
transpose of prolongation in every variant.

Constrained DoFs are masked symmetrically on both sides (zeroed on input and
output), which keeps the transpose identity exact also on constrained
configurations; within the V-cycle coarse corrections carry zero constrained
entries anyway.
"""

import time

import numpy as np

from .fespace import apply_axis
from .geosearch import SearchConfig, build_tree, locate_points


class _TransferBase:
    """Masked component loop shared by all two-level transfers."""

    def __init__(self, coarse_space, fine_space):
        if coarse_space.n_components != fine_space.n_components:
            raise ValueError("component counts of the two levels must match")
        self.coarse_space = coarse_space
        self.fine_space = fine_space
        self._cdofs_c = coarse_space.constraints.dofs
        self._cdofs_f = fine_space.constraints.dofs
        self.timings = {"evaluate": 0.0, "gather_scatter": 0.0, "calls": 0}

    def prolongate(self, u_c):
        if u_c.shape != (self.coarse_space.n_dofs,):
            raise ValueError(f"expected coarse vector of length {self.coarse_space.n_dofs}")
        nc = self.coarse_space.n_components
        ut = u_c.copy()
        ut[self._cdofs_c] = 0.0
        out = np.zeros(self.fine_space.n_dofs)
        um = ut.reshape(self.coarse_space.n_scalar_dofs, nc)
        om = out.reshape(self.fine_space.n_scalar_dofs, nc)
        for c in range(nc):
            om[:, c] = self._prolongate_scalar(np.ascontiguousarray(um[:, c]))
        out[self._cdofs_f] = 0.0
        self.timings["calls"] += 1
        return out

    def restrict(self, r_f):
        if r_f.shape != (self.fine_space.n_dofs,):
            raise ValueError(f"expected fine vector of length {self.fine_space.n_dofs}")
        nc = self.fine_space.n_components
        rt = r_f.copy()
        rt[self._cdofs_f] = 0.0
        out = np.zeros(self.coarse_space.n_dofs)
        rm = rt.reshape(self.fine_space.n_scalar_dofs, nc)
        om = out.reshape(self.coarse_space.n_scalar_dofs, nc)
        for c in range(nc):
            om[:, c] = self._restrict_scalar(np.ascontiguousarray(rm[:, c]))
        out[self._cdofs_c] = 0.0
        return out


class TwoLevelTransferNonNested(_TransferBase):
    """Matrix-free transfer by evaluating coarse basis functions at the fine
    support points, with per-point tabulated 1D shape values (one array per
    direction).  No structure of size O(n_fine * n_coarse) is formed.
    """

    def __init__(self, coarse_space, fine_space, search=None):
        super().__init__(coarse_space, fine_space)
        search = search or SearchConfig()
        nc = fine_space.n_components
        dim = fine_space.mesh.dim
        fully = fine_space.constrained_mask().reshape(fine_space.n_scalar_dofs, nc).all(axis=1)
        self.point_dofs = np.where(~fully)[0]
        pts = fine_space.support_points[self.point_dofs]
        tree = build_tree(coarse_space.mesh, eps_box=search.eps_box)
        located = locate_points(
            tree, coarse_space.mesh, pts, eps_geo=search.eps_geo, eps_ref=search.eps_ref
        )
        self.located = located
        self.cells = located.cells
        self.xhat = located.xhat
        self.projected = located.projected
        # tabulated 1D values, one (npts, p+1) array per direction
        self.tabs = [coarse_space.shape1d.values(self.xhat[:, j]) for j in range(dim)]
        self.gather = coarse_space.cell_dofs[self.cells]

    def _prolongate_scalar(self, vals_c):
        dim = self.coarse_space.mesh.dim
        n1 = self.coarse_space.degree + 1
        t0 = time.perf_counter()
        u = vals_c[self.gather]
        t1 = time.perf_counter()
        arr = u.reshape((len(u),) + (n1,) * dim)
        for j in range(dim):
            arr = np.einsum("p...i,pi->p...", arr, self.tabs[j])
        t2 = time.perf_counter()
        out = np.zeros(self.fine_space.n_scalar_dofs)
        out[self.point_dofs] = arr
        t3 = time.perf_counter()
        self.timings["gather_scatter"] += (t1 - t0) + (t3 - t2)
        self.timings["evaluate"] += t2 - t1
        return out

    def _point_weights(self):
        npts = len(self.cells)
        W = np.ones((npts, 1))
        for j in range(self.coarse_space.mesh.dim):
            W = np.einsum("pl,pi->pil", W, self.tabs[j]).reshape(npts, -1)
        return W

    def _restrict_scalar(self, vals_f):
        t0 = time.perf_counter()
        v = vals_f[self.point_dofs]
        t1 = time.perf_counter()
        contrib = v[:, None] * self._point_weights()
        t2 = time.perf_counter()
        out = np.bincount(
            self.gather.ravel(), weights=contrib.ravel(),
            minlength=self.coarse_space.n_scalar_dofs,
        )
        t3 = time.perf_counter()
        self.timings["gather_scatter"] += (t1 - t0) + (t3 - t2)
        self.timings["evaluate"] += t2 - t1
        return out


class _CellwiseTransfer(_TransferBase):
    """Shared machinery for the nested and polynomial fast paths: per-cell
    tensor-product embedding with a claim mask making each fine DoF the
    responsibility of exactly one (cell, local slot), so the transpose is
    well defined without weighting.
    """

    def _init_claims(self):
        flat = self.fine_space.cell_dofs.ravel()
        first = np.unique(flat, return_index=True)[1]
        claim = np.zeros(flat.shape, dtype=bool)
        claim[first] = True
        self._claim_flat = claim
        self._claim = claim.reshape(self.fine_space.cell_dofs.shape)

    def _prolongate_scalar(self, vals_c):
        t0 = time.perf_counter()
        u = vals_c[self.coarse_space.cell_dofs[self._parents]]
        t1 = time.perf_counter()
        res = self._embed_cells(u)
        t2 = time.perf_counter()
        out = np.zeros(self.fine_space.n_scalar_dofs)
        flat = self.fine_space.cell_dofs.ravel()
        out[flat[self._claim_flat]] = res.reshape(-1)[self._claim_flat]
        t3 = time.perf_counter()
        self.timings["gather_scatter"] += (t1 - t0) + (t3 - t2)
        self.timings["evaluate"] += t2 - t1
        return out

    def _restrict_scalar(self, vals_f):
        t0 = time.perf_counter()
        r = vals_f[self.fine_space.cell_dofs] * self._claim
        t1 = time.perf_counter()
        contrib = self._embed_cells_transpose(r)
        t2 = time.perf_counter()
        out = np.bincount(
            self.coarse_space.cell_dofs[self._parents].ravel(),
            weights=contrib.ravel(),
            minlength=self.coarse_space.n_scalar_dofs,
        )
        t3 = time.perf_counter()
        self.timings["gather_scatter"] += (t1 - t0) + (t3 - t2)
        self.timings["evaluate"] += t2 - t1
        return out


class TwoLevelTransferNested(_CellwiseTransfer):
    """Classical injection for nested mesh pairs using per-cell sum
    factorization with the 1D child-embedding matrices.
    """

    def __init__(self, coarse_space, fine_space, search=None):
        super().__init__(coarse_space, fine_space)
        if coarse_space.degree != fine_space.degree:
            raise ValueError("nested mesh transfer keeps the polynomial degree")
        search = search or SearchConfig()
        mesh_f = fine_space.mesh
        dim = mesh_f.dim
        tree = build_tree(coarse_space.mesh, eps_box=search.eps_box)
        located = locate_points(tree, coarse_space.mesh, mesh_f.cell_centroids())
        self._parents = located.cells
        offsets = (located.xhat > 0.5).astype(np.int64)
        self._offcode = (offsets << np.arange(dim)[None, :]).sum(axis=1)
        nodes = fine_space.shape1d.nodes
        self._E = [coarse_space.shape1d.values((nodes + s) / 2.0) for s in (0, 1)]
        self._groups = [np.where(self._offcode == code)[0] for code in range(2**dim)]
        self._init_claims()

    def _embed_cells(self, u):
        dim = self.fine_space.mesh.dim
        n1 = self.fine_space.degree + 1
        arr = u.reshape((len(u),) + (n1,) * dim)
        res = np.empty_like(arr)
        for code, idx in enumerate(self._groups):
            if len(idx) == 0:
                continue
            sub = arr[idx]
            for k in range(dim):
                sub = apply_axis(sub, self._E[(code >> k) & 1], 1 + (dim - 1 - k))
            res[idx] = sub
        return res.reshape(len(u), -1)

    def _embed_cells_transpose(self, r):
        dim = self.fine_space.mesh.dim
        n1 = self.fine_space.degree + 1
        arr = r.reshape((len(r),) + (n1,) * dim)
        res = np.empty_like(arr)
        for code, idx in enumerate(self._groups):
            if len(idx) == 0:
                continue
            sub = arr[idx]
            for k in range(dim):
                sub = apply_axis(sub, self._E[(code >> k) & 1].T, 1 + (dim - 1 - k))
            res[idx] = sub
        return res.reshape(len(r), -1)


class TwoLevelTransferPolynomial(_CellwiseTransfer):
    """Embedding of Q^(p-1) into Q^p on a shared mesh via 1D interpolation."""

    def __init__(self, coarse_space, fine_space):
        super().__init__(coarse_space, fine_space)
        if coarse_space.mesh is not fine_space.mesh:
            raise ValueError("polynomial transfer levels share one mesh")
        if coarse_space.degree != fine_space.degree - 1:
            raise ValueError("polynomial coarsening lowers the degree by one")
        self._parents = np.arange(fine_space.mesh.n_cells)
        self._E = coarse_space.shape1d.values(fine_space.shape1d.nodes)
        self._init_claims()

    def _embed_cells(self, u):
        dim = self.fine_space.mesh.dim
        nc1 = self.coarse_space.degree + 1
        arr = u.reshape((len(u),) + (nc1,) * dim)
        for k in range(dim):
            arr = apply_axis(arr, self._E, 1 + (dim - 1 - k))
        return arr.reshape(len(u), -1)

    def _embed_cells_transpose(self, r):
        dim = self.fine_space.mesh.dim
        nf1 = self.fine_space.degree + 1
        arr = r.reshape((len(r),) + (nf1,) * dim)
        for k in range(dim):
            arr = apply_axis(arr, self._E.T, 1 + (dim - 1 - k))
        return arr.reshape(len(r), -1)


def setup_nonnested(coarse_space, fine_space, search=None):
    """Locate the fine support points in the coarse mesh and tabulate shapes."""
    return TwoLevelTransferNonNested(coarse_space, fine_space, search)


def setup_nested(coarse_space, fine_space, search=None):
    return TwoLevelTransferNested(coarse_space, fine_space, search)


def setup_polynomial(coarse_space, fine_space):
    """p -> p-1 transfer on a shared mesh; needs fine degree >= 2."""
    if fine_space.degree < 2:
        raise ValueError("polynomial coarsening needs degree >= 2")
    return TwoLevelTransferPolynomial(coarse_space, fine_space)

"""Two-phase point location: padded AABB tree, Newton fine check, box projection."""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .mesh import corner_weights, invert_mapping_batch


class GeosearchError(Exception):
    pass


@dataclass
class SearchConfig:
    """Tolerances for the two-phase search; None picks mesh-scaled defaults."""

    eps_box: float = None  # AABB padding, default 1e-6 * domain diameter
    eps_geo: float = None  # accepted forward-map residual, default 1e-8 * diameter
    eps_ref: float = 1e-10  # containment slack in reference coordinates


PointOwnership = namedtuple("PointOwnership", "point_index cell xhat owner_rank projected")


class AabbTree:
    """Balanced binary tree over padded cell bounding boxes (median split, longest axis)."""

    def __init__(self, mesh, eps_box=None, leaf_size=8):
        if mesh.n_cells == 0:
            raise ValueError("empty mesh")
        if eps_box is None:
            eps_box = 1e-6 * mesh.diameter()
        self.mesh = mesh
        self.eps_box = float(eps_box)
        lo, hi = mesh.cell_bounding_boxes()
        self.cell_lo = lo - eps_box
        self.cell_hi = hi + eps_box
        centers = (self.cell_lo + self.cell_hi) / 2
        n = mesh.n_cells
        self.perm = np.arange(n)
        node_lo, node_hi, node_left, node_right = [], [], [], []
        node_start, node_count = [], []
        # (start, count) ranges of self.perm; median split until <= leaf_size cells
        stack = [(0, n)]
        pending = {}
        order = []
        while stack:
            start, count = stack.pop()
            idx = len(node_lo)
            order.append((start, count, idx))
            sel = self.perm[start : start + count]
            blo = self.cell_lo[sel].min(axis=0)
            bhi = self.cell_hi[sel].max(axis=0)
            node_lo.append(blo)
            node_hi.append(bhi)
            pending[(start, count)] = idx
            if count <= leaf_size:
                node_left.append(-1)
                node_right.append(-1)
                node_start.append(start)
                node_count.append(count)
                continue
            axis = int(np.argmax(bhi - blo))
            local = np.argsort(centers[sel][:, axis], kind="stable")
            self.perm[start : start + count] = sel[local]
            half = count // 2
            node_left.append(None)
            node_right.append(None)
            node_start.append(-1)
            node_count.append(-1)
            # push right first so the left child is processed next (index idx+1)
            stack.append((start + half, count - half))
            stack.append((start, half))
        for start, count, idx in order:
            if node_left[idx] is None:
                half = count // 2
                node_left[idx] = pending[(start, half)]
                node_right[idx] = pending[(start + half, count - half)]
        self.node_lo = np.array(node_lo)
        self.node_hi = np.array(node_hi)
        self.node_left = np.array(node_left, dtype=np.int64)
        self.node_right = np.array(node_right, dtype=np.int64)
        self.node_start = np.array(node_start, dtype=np.int64)
        self.node_count = np.array(node_count, dtype=np.int64)

    @property
    def n_nodes(self):
        return len(self.node_lo)

    def query(self, point):
        """Sorted candidate cells whose padded box contains the point."""
        pts, cells = self.query_batch(np.atleast_2d(np.asarray(point, dtype=float)))
        return np.sort(cells)

    def query_batch(self, points):
        """All (point index, candidate cell) pairs, sorted by point then cell."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out_pts, out_cells = [], []
        stack = [(0, np.arange(len(points)))]
        while stack:
            node, idx = stack.pop()
            if len(idx) == 0:
                continue
            p = points[idx]
            inside = np.all((p >= self.node_lo[node]) & (p <= self.node_hi[node]), axis=1)
            idx = idx[inside]
            if len(idx) == 0:
                continue
            if self.node_left[node] < 0:
                start, count = self.node_start[node], self.node_count[node]
                p = points[idx]
                for cell in self.perm[start : start + count]:
                    hit = np.all(
                        (p >= self.cell_lo[cell]) & (p <= self.cell_hi[cell]), axis=1
                    )
                    if hit.any():
                        out_pts.append(idx[hit])
                        out_cells.append(np.full(int(hit.sum()), cell, dtype=np.int64))
            else:
                stack.append((self.node_left[node], idx))
                stack.append((self.node_right[node], idx))
        if not out_pts:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        pts = np.concatenate(out_pts)
        cells = np.concatenate(out_cells)
        order = np.lexsort((cells, pts))
        return pts[order], cells[order]


def build_tree(mesh, eps_box=None, leaf_size=8):
    return AabbTree(mesh, eps_box=eps_box, leaf_size=leaf_size)


def project_to_reference(xhat):
    """Euclidean projection onto the unit box (componentwise clamp)."""
    return np.clip(xhat, 0.0, 1.0)


class LocatedPoints:
    """Columnar ownership records for a batch of located points."""

    def __init__(self, points, cells, xhat, projected):
        self.points = points
        self.cells = cells
        self.xhat = xhat
        self.projected = projected
        self.owner_rank = np.full(len(cells), -1, dtype=np.int64)

    def __len__(self):
        return len(self.cells)

    def __getitem__(self, i):
        return PointOwnership(
            i, int(self.cells[i]), self.xhat[i], int(self.owner_rank[i]), bool(self.projected[i])
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def locate_points(tree, mesh, points, eps_geo=None, eps_ref=1e-10):
    """Find the owning cell and reference coordinates of each point.

    Candidates come from the padded AABB tree and are checked by mapping
    inversion; containment uses an eps_ref slack and ties go to the lowest
    cell index.  Points that no candidate contains are projected onto the
    reference cell of the candidate with the smallest physical distance and
    flagged.  Points with no converged candidate at all raise GeosearchError.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.isfinite(points).all():
        raise GeosearchError("points must be finite")
    if eps_geo is None:
        eps_geo = 1e-8 * mesh.diameter()
    npts, dim = points.shape
    pt_idx, cand_cells = tree.query_batch(points)
    missing = np.setdiff1d(np.arange(npts), pt_idx)
    if len(missing):
        raise GeosearchError(
            f"points outside padded domain: indices {missing[:5].tolist()}, "
            f"first point {points[missing[0]].tolist()}"
        )
    verts = mesh.vertices[mesh.cells[cand_cells]]
    diams = mesh.cell_diameters()[cand_cells]
    xh, conv, res = invert_mapping_batch(verts, points[pt_idx], 1e-12 * diams)

    inside = (
        conv
        & (res <= eps_geo)
        & np.all((xh >= -eps_ref) & (xh <= 1.0 + eps_ref), axis=1)
    )
    cells = np.full(npts, -1, dtype=np.int64)
    xhat = np.full((npts, dim), np.nan)
    projected = np.zeros(npts, dtype=bool)

    # pairs are sorted by (point, cell): the first inside hit is the lowest cell
    if inside.any():
        p_in = pt_idx[inside]
        first = np.unique(p_in, return_index=True)[1]
        sel = np.where(inside)[0][first]
        cells[pt_idx[sel]] = cand_cells[sel]
        xhat[pt_idx[sel]] = np.clip(xh[sel], 0.0, 1.0)

    left = cells == -1
    if left.any():
        usable = conv & left[pt_idx]
        bad = np.setdiff1d(np.where(left)[0], pt_idx[usable])
        if len(bad):
            raise GeosearchError(
                f"points outside padded domain: indices {bad[:5].tolist()}, "
                f"first point {points[bad[0]].tolist()}"
            )
        u = np.where(usable)[0]
        xp = project_to_reference(xh[u])
        w = np.einsum("pv,pvd->pd", corner_weights(dim, xp), verts[u])
        dist = np.linalg.norm(w - points[pt_idx[u]], axis=1)
        order = np.lexsort((cand_cells[u], dist, pt_idx[u]))
        uo = u[order]
        firsts = np.unique(pt_idx[uo], return_index=True)[1]
        sel = uo[firsts]
        cells[pt_idx[sel]] = cand_cells[sel]
        xhat[pt_idx[sel]] = project_to_reference(xh[sel])
        projected[pt_idx[sel]] = True

    return LocatedPoints(points, cells, xhat, projected)


@dataclass
class ExchangeStats:
    """Simulated communication volume of one search/transfer round."""

    n_points: int
    n_remote: int  # points whose requester rank differs from the owner rank
    n_rank_pairs: int  # distinct (requester, owner) pairs with traffic

    @property
    def remote_fraction(self):
        return self.n_remote / self.n_points if self.n_points else 0.0


def resolve_owner_ranks(located, partition, requester_ranks=None):
    """Fill owner ranks from the cell partition; report simulated exchange volume."""
    located.owner_rank[:] = partition.owner_rank[located.cells]
    if requester_ranks is None:
        return ExchangeStats(len(located), 0, 0)
    requester_ranks = np.asarray(requester_ranks, dtype=np.int64)
    remote = requester_ranks != located.owner_rank
    pairs = np.unique(
        np.column_stack([requester_ranks[remote], located.owner_rank[remote]]), axis=0
    )
    return ExchangeStats(len(located), int(remote.sum()), len(pairs))

"""Simulated k-way partitioning and multigrid partition-quality metrics:
serial/parallel workload, workload efficiency, vertical communication efficiency."""

from dataclasses import dataclass, field

import numpy as np

from .geosearch import build_tree, locate_points
from .mesh import PartitionLabels


def _morton_codes(points, lo, hi, bits=16):
    """Interleaved-bit codes of quantized coordinates along the Z-order curve."""
    span = np.where(hi > lo, hi - lo, 1.0)
    q = ((points - lo) / span * (2**bits - 1)).astype(np.uint64)
    dim = points.shape[1]
    codes = np.zeros(len(points), dtype=np.uint64)
    for b in range(bits):
        for j in range(dim):
            codes |= ((q[:, j] >> np.uint64(b)) & np.uint64(1)) << np.uint64(b * dim + j)
    return codes


def partition_morton(mesh, n_ranks):
    """Contiguous equal-count split of the cells along the Morton curve."""
    if n_ranks < 1:
        raise ValueError("n_ranks must be >= 1")
    if n_ranks > mesh.n_cells:
        raise ValueError(f"n_ranks ({n_ranks}) exceeds cell count ({mesh.n_cells})")
    lo, hi = mesh.bounding_box()
    codes = _morton_codes(mesh.cell_centroids(), lo, hi)
    order = np.lexsort((np.arange(mesh.n_cells), codes))
    owner = np.empty(mesh.n_cells, dtype=np.int64)
    # first (n mod r) ranks take one extra cell
    counts = np.full(n_ranks, mesh.n_cells // n_ranks, dtype=np.int64)
    counts[: mesh.n_cells % n_ranks] += 1
    owner[order] = np.repeat(np.arange(n_ranks), counts)
    return PartitionLabels(mesh, owner, n_ranks)


def partition_matching(mesh, fine_partition):
    """Assign each cell the rank of the fine cell containing its centroid."""
    tree = build_tree(fine_partition.mesh)
    located = locate_points(tree, fine_partition.mesh, mesh.cell_centroids())
    owner = fine_partition.owner_rank[located.cells]
    return PartitionLabels(mesh, owner, fine_partition.n_ranks)


def partition(mesh, n_ranks, policy="default", fine_partition=None):
    """Policy "default" is the Morton split; "matching" relabels from a fine partition."""
    if policy == "default":
        return partition_morton(mesh, n_ranks)
    if policy == "matching":
        if fine_partition is None:
            raise ValueError("matching policy needs fine_partition")
        return partition_matching(mesh, fine_partition)
    raise ValueError(f"unknown policy {policy!r}")


def dof_owner_cells(space):
    """Owning cell per scalar DoF: the lowest-indexed cell containing it."""
    flat = space.cell_dofs.ravel()
    first = np.unique(flat, return_index=True)[1]
    return first // space.cell_dofs.shape[1]


def vertical_efficiency(transfer, coarse_labels, fine_labels):
    """Share of transfer points whose fine-side owner rank matches the rank
    owning the located coarse cell."""
    owner_cell = dof_owner_cells(transfer.fine_space)
    requester = fine_labels.owner_rank[owner_cell[transfer.point_dofs]]
    owner = coarse_labels.owner_rank[transfer.cells]
    if len(requester) == 0:
        return 1.0
    return float((requester == owner).mean())


@dataclass
class PartitionStats:
    """Per-level load and per-pair overlap quality of a partitioned hierarchy."""

    n_ranks: int
    cells_per_level: list
    cells_per_level_rank: list  # one (n_ranks,) array per level
    serial_workload: int
    parallel_workload: int
    workload_efficiency: float
    vertical_efficiencies: list = field(default_factory=list)  # per level pair, may be empty

    def csv_rows(self):
        rows = []
        for l, (c, per_rank) in enumerate(zip(self.cells_per_level, self.cells_per_level_rank)):
            veff = self.vertical_efficiencies[l - 1] if 0 < l <= len(self.vertical_efficiencies) else ""
            rows.append(
                {
                    "level": l + 1,
                    "cells": int(c),
                    "max_rank_cells": int(per_rank.max()),
                    "wl": self.parallel_workload,
                    "wl_eff": self.workload_efficiency,
                    "v_eff": veff,
                }
            )
        return rows


def workload_stats(level_labels, transfers=None):
    """Serial/parallel workload and efficiencies of a labelled hierarchy.

    level_labels: PartitionLabels per level, coarse to fine.  transfers, when
    given (one per consecutive pair), add the vertical efficiencies.
    """
    if not level_labels:
        raise ValueError("need at least one level")
    n_ranks = level_labels[0].n_ranks
    if any(lab.n_ranks != n_ranks for lab in level_labels):
        raise ValueError("all levels must use the same rank count")
    per_rank = [lab.cells_per_rank() for lab in level_labels]
    cells = [lab.mesh.n_cells for lab in level_labels]
    ws = int(sum(cells))
    wp = int(sum(int(c.max()) for c in per_rank))
    eff = ws / (wp * n_ranks)
    veffs = []
    if transfers is not None:
        if len(transfers) != len(level_labels) - 1:
            raise ValueError("need one transfer per level pair")
        veffs = [
            vertical_efficiency(t, level_labels[i], level_labels[i + 1])
            for i, t in enumerate(transfers)
        ]
    return PartitionStats(
        n_ranks=n_ranks,
        cells_per_level=cells,
        cells_per_level_rank=per_rank,
        serial_workload=ws,
        parallel_workload=wp,
        workload_efficiency=eff,
        vertical_efficiencies=veffs,
    )

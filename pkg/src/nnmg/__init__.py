"""Matrix-free non-nested geometric multigrid for Lagrange elements on quad/hex meshes."""

from .mesh import (
    CellMapping,
    MappingInversionError,
    Mesh,
    MeshError,
    PartitionLabels,
    generate_hypercube,
    generate_lshape,
    generate_perturbed,
    invert_mapping,
    map_to_real,
    read_msh,
    write_msh,
)

__all__ = [
    "CellMapping",
    "MappingInversionError",
    "Mesh",
    "MeshError",
    "PartitionLabels",
    "generate_hypercube",
    "generate_lshape",
    "generate_perturbed",
    "invert_mapping",
    "map_to_real",
    "read_msh",
    "write_msh",
]

"""Voxel-walker topology: square cells with four edges and both diagonals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# edge name -> corner offsets (dx0, dy0, dx1, dy1) within the cell
EDGES = {
    "bottom": (0, 0, 1, 0),
    "top": (0, 1, 1, 1),
    "left": (0, 0, 0, 1),
    "right": (1, 0, 1, 1),
    "diag_up": (0, 0, 1, 1),
    "diag_down": (1, 0, 0, 1),
}


@dataclass(frozen=True)
class VoxelTopology:
    corners: tuple[tuple[int, int], ...]  # node id -> grid corner
    springs: tuple[tuple[int, int], ...]
    cell_springs: dict  # (cell, edge name) -> spring id

    @property
    def n_nodes(self) -> int:
        return len(self.corners)

    @property
    def n_springs(self) -> int:
        return len(self.springs)

    def positions(self, size: float, origin=(0.0, 0.0)) -> np.ndarray:
        return np.asarray(origin, dtype=float) + size * np.asarray(self.corners, dtype=float)


def build_voxels(cells) -> VoxelTopology:
    """Nodes and deduplicated springs for a list of (col, row) cells, in cell order."""
    corner_id: dict[tuple[int, int], int] = {}
    springs: list[tuple[int, int]] = []
    edge_id: dict[frozenset, int] = {}
    cell_springs = {}
    for cell in cells:
        c, r = int(cell[0]), int(cell[1])
        for name, (dx0, dy0, dx1, dy1) in EDGES.items():
            ends = []
            for corner in ((c + dx0, r + dy0), (c + dx1, r + dy1)):
                if corner not in corner_id:
                    corner_id[corner] = len(corner_id)
                ends.append(corner_id[corner])
            key = frozenset(ends)
            if key not in edge_id:
                edge_id[key] = len(springs)
                springs.append((ends[0], ends[1]))
            cell_springs[((c, r), name)] = edge_id[key]
    corners = tuple(sorted(corner_id, key=corner_id.get))
    return VoxelTopology(corners, tuple(springs), cell_springs)


def actuator_groups(topo: VoxelTopology, actuators) -> np.ndarray:
    """Per-spring actuator group index (-1 for passive springs)."""
    group = np.full(topo.n_springs, -1, dtype=int)
    for g, act in enumerate(actuators):
        cell = tuple(int(v) for v in act["voxel"])
        for name in act["springs"]:
            s = topo.cell_springs[(cell, name)]
            if group[s] != -1:
                raise ValueError(f"spring {s} assigned to two actuator groups")
            group[s] = g
    return group

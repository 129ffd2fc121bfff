"""Tile graphs over occupancy grids.

Occupied grid cells become nodes (row-major order); edges connect occupied
cells that touch in any of the 8 surrounding directions.  The symmetric
degree-normalized adjacency with self-loops is computed once at build time
and cached dense, which desk-scale node counts make cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError

# forward half of the 8-neighborhood; the other half is covered symmetrically
_FORWARD_OFFSETS = ((0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class FeatureGrid:
    """An occupancy grid plus one feature row per occupied cell."""

    rows: int
    cols: int
    occupancy: np.ndarray  # (rows, cols) bool
    features: np.ndarray   # (n_occupied, d) float, row-major occupied order

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ContractError("grid must have at least one row and column")
        if self.occupancy.shape != (self.rows, self.cols):
            raise DimensionError(
                f"occupancy shape {self.occupancy.shape} does not match "
                f"({self.rows}, {self.cols})")
        n = int(self.occupancy.sum())
        if n < 1:
            raise ContractError("grid has no occupied cells")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DimensionError(
                f"features shape {self.features.shape} does not match "
                f"{n} occupied cells")
        if not np.isfinite(self.features).all():
            raise ContractError("grid features contain non-finite values")


@dataclass
class TileGraph:
    """Graph view of a FeatureGrid with cached normalized adjacency."""

    node_features: np.ndarray          # (n, d) f64
    edges: list                        # [(i, j), ...] with i < j, no self loops
    node_positions: list               # [(row, col), ...] per node
    adj_tilde: np.ndarray              # A + I, dense (n, n)
    deg_tilde: np.ndarray              # row sums of adj_tilde, (n,)
    norm_adj: np.ndarray               # D^-1/2 (A + I) D^-1/2, dense (n, n)
    n_nodes: int = field(init=False)

    def __post_init__(self):
        self.n_nodes = self.node_features.shape[0]


def build_graph(grid):
    """Connect occupied cells under 8-adjacency and normalize the adjacency."""
    occ = grid.occupancy
    index = np.full((grid.rows, grid.cols), -1, dtype=np.intp)
    positions = list(zip(*np.nonzero(occ)))
    for i, (r, c) in enumerate(positions):
        index[r, c] = i

    edges = []
    for i, (r, c) in enumerate(positions):
        for dr, dc in _FORWARD_OFFSETS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < grid.rows and 0 <= cc < grid.cols and index[rr, cc] >= 0:
                j = index[rr, cc]
                edges.append((i, j) if i < j else (j, i))
    edges.sort()

    n = len(positions)
    adj_tilde = np.eye(n)
    for i, j in edges:
        adj_tilde[i, j] = 1.0
        adj_tilde[j, i] = 1.0
    deg = adj_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)  # deg >= 1 always (self-loop)
    norm_adj = adj_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]

    return TileGraph(
        node_features=np.ascontiguousarray(grid.features, dtype=np.float64),
        edges=edges,
        node_positions=[(int(r), int(c)) for r, c in positions],
        adj_tilde=adj_tilde,
        deg_tilde=deg,
        norm_adj=norm_adj,
    )


def normalized_adjacency(graph):
    """Return the cached symmetric degree-normalized adjacency with self-loops."""
    return graph.norm_adj

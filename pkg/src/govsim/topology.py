"""Grid networks, their subgroup partitions and governor communication cost.

Agents live on the cells of an ``R x R`` grid and are indexed row-major,
``index = row * R + col``.  A partition tiles the grid with ``n x n``
blocks anchored at the origin; every cell left uncovered by a full block
joins one remainder subgroup.  Each subgroup's governor sits at the
centroid of its members.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from govsim.errors import InvalidParameterError, UndefinedRatioError

Cell = tuple[int, int]
Neighborhood = Literal["von_neumann", "moore"]

_OFFSETS = {
    "von_neumann": ((-1, 0), (0, -1), (0, 1), (1, 0)),
    "moore": ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)),
}


def _adjacent(row: int, col: int, side: int, neighborhood: str) -> list[Cell]:
    out = []
    for dr, dc in _OFFSETS[neighborhood]:
        r, c = row + dr, col + dc
        if 0 <= r < side and 0 <= c < side:
            out.append((r, c))
    return out


@dataclass(frozen=True)
class GridTopology:
    side: int
    neighborhood: Neighborhood = "von_neumann"

    @property
    def size(self) -> int:
        return self.side * self.side

    @cached_property
    def cells(self) -> list[Cell]:
        return [(r, c) for r in range(self.side) for c in range(self.side)]

    def index(self, cell: Cell) -> int:
        return cell[0] * self.side + cell[1]

    def neighbors(self, cell: Cell) -> list[Cell]:
        return _adjacent(cell[0], cell[1], self.side, self.neighborhood)

    def edges(self) -> list[tuple[Cell, Cell]]:
        """Undirected neighbor pairs, each listed once."""
        return [(a, b) for a in self.cells for b in self.neighbors(a) if a < b]

    @cached_property
    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded ``(size, max_degree)`` index table and per-agent degree.

        Padding slots repeat the agent's first neighbor so that indexing a
        padded entry is always safe; callers draw a slot below the degree.
        """
        max_deg = len(_OFFSETS[self.neighborhood])
        table = np.zeros((self.size, max_deg), dtype=np.int64)
        degree = np.zeros(self.size, dtype=np.int64)
        for cell in self.cells:
            i = self.index(cell)
            nbrs = [self.index(c) for c in self.neighbors(cell)]
            degree[i] = len(nbrs)
            if nbrs:
                table[i, : len(nbrs)] = nbrs
                table[i, len(nbrs):] = nbrs[0]
            else:
                table[i, :] = i
        return table, degree


def build_grid(side: int, neighborhood: Neighborhood = "von_neumann") -> GridTopology:
    if not isinstance(side, (int, np.integer)) or side < 1:
        raise InvalidParameterError(f"grid side must be a positive integer, got {side!r}")
    if neighborhood not in _OFFSETS:
        raise InvalidParameterError(f"unknown neighborhood {neighborhood!r}")
    return GridTopology(int(side), neighborhood)


@dataclass(frozen=True)
class Subgroup:
    id: int
    members: frozenset[Cell]
    governor_position: tuple[float, float]
    is_remainder: bool = False

    def __len__(self) -> int:
        return len(self.members)


def _centroid(members) -> tuple[float, float]:
    arr = np.asarray(sorted(members), dtype=float)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean())


@dataclass(frozen=True)
class GridPartition:
    topology: GridTopology
    subgroup_size: int
    subgroups: tuple[Subgroup, ...]
    tiles_per_axis: int
    assignment: np.ndarray = field(repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.subgroup_size

    @property
    def num_groups(self) -> int:
        return len(self.subgroups)

    @property
    def has_remainder(self) -> bool:
        return bool(self.subgroups) and self.subgroups[-1].is_remainder

    def group_of(self, cell: Cell) -> Subgroup:
        return self.subgroups[int(self.assignment[self.topology.index(cell)])]

    @cached_property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_groups)

    @cached_property
    def peer_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Candidate imitation peers of every governor.

        Tile governors look at the tiles adjacent to theirs in the coarse
        grid of tiles.  The remainder governor may pick any tile governor.
        A lone tile next to a remainder pairs with the remainder.  Returns a
        padded ``(groups, width)`` table and a count per governor; a count
        of zero means the governor has no peer.
        """
        k = self.tiles_per_axis
        peers: list[list[int]] = []
        for g in self.subgroups:
            if g.is_remainder:
                peers.append(list(range(k * k)))
            else:
                tr, tc = divmod(g.id, k)
                found = [r * k + c for r, c in _adjacent(tr, tc, k, self.topology.neighborhood)]
                if not found and self.has_remainder:
                    found = [self.num_groups - 1]
                peers.append(found)
        width = max(1, max(len(p) for p in peers))
        table = np.zeros((self.num_groups, width), dtype=np.int64)
        count = np.zeros(self.num_groups, dtype=np.int64)
        for i, p in enumerate(peers):
            count[i] = len(p)
            if p:
                table[i, : len(p)] = p
                table[i, len(p):] = p[0]
            else:
                table[i, :] = i
        return table, count


def partition_grid(topology: GridTopology, n: int) -> GridPartition:
    side = topology.side
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= side:
        raise InvalidParameterError(f"subgroup size must lie in [1, {side}], got {n!r}")
    n = int(n)
    k = side // n
    assignment = np.full(topology.size, -1, dtype=np.int64)
    members: list[list[Cell]] = []
    for tr in range(k):
        for tc in range(k):
            block = [
                (r, c)
                for r in range(tr * n, (tr + 1) * n)
                for c in range(tc * n, (tc + 1) * n)
            ]
            for cell in block:
                assignment[topology.index(cell)] = len(members)
            members.append(block)
    leftover = [cell for cell in topology.cells if assignment[topology.index(cell)] < 0]
    if leftover:
        for cell in leftover:
            assignment[topology.index(cell)] = len(members)
        members.append(leftover)

    subgroups = tuple(
        Subgroup(
            id=i,
            members=frozenset(m),
            governor_position=_centroid(m),
            is_remainder=(i >= k * k),
        )
        for i, m in enumerate(members)
    )
    return GridPartition(topology, n, subgroups, k, assignment)


def communication_cost(partition: GridPartition) -> float:
    """Total Euclidean distance from every agent to its governor."""
    total = 0.0
    for g in partition.subgroups:
        cells = np.asarray(sorted(g.members), dtype=float)
        total += float(np.hypot(*(cells - np.asarray(g.governor_position)).T).sum())
    return total


def pom(partition: GridPartition, centralized_partition: GridPartition) -> float:
    """Price of Monarchy: communication cost relative to a single governor."""
    if partition.topology != centralized_partition.topology:
        raise InvalidParameterError("partitions must share a topology")
    if centralized_partition.n != centralized_partition.topology.side:
        raise InvalidParameterError("reference partition must be fully centralized (n = R)")
    denom = communication_cost(centralized_partition)
    if denom == 0.0:
        raise UndefinedRatioError("centralized communication cost is zero (R = 1)")
    return communication_cost(partition) / denom

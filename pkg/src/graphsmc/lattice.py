"""Square-lattice helpers: edges, node orderings, and chain block splits.

Node ids are row-major: id = r * cols + c.  The orderings implemented here
are the ones used by the bundled lattice models; all of them add one node
at a time.
"""

from __future__ import annotations

import numpy as np

from .graph import LatticeInfo

__all__ = [
    "grid_edges",
    "neighbours",
    "order_left_right",
    "order_diagonal",
    "order_spiral",
    "order_snake_columns",
    "order_random_neighbour",
    "double_spiral_blocks",
]


def grid_edges(rows: int, cols: int, periodic: bool = False) -> list[tuple[int, int]]:
    """Undirected nearest-neighbour edges of a rows x cols grid.

    With ``periodic=True`` the first and last row/column are connected.
    Wrap edges duplicating an existing bond (2-wide periodic lattices) are
    kept: they are physically distinct bonds.
    """
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            elif periodic and cols > 1:
                edges.append((i, r * cols))
            if r + 1 < rows:
                edges.append((i, i + cols))
            elif periodic and rows > 1:
                edges.append((i, c))
    return edges


def neighbours(rows, cols, periodic=False):
    """Adjacency sets keyed by node id."""
    adj = {i: set() for i in range(rows * cols)}
    for a, b in grid_edges(rows, cols, periodic):
        adj[a].add(b)
        adj[b].add(a)
    return adj


def order_left_right(lat: LatticeInfo) -> list[int]:
    """Row by row, each row left to right."""
    return list(range(lat.n_sites))


def order_diagonal(lat: LatticeInfo) -> list[int]:
    """Anti-diagonals from the top-left corner, each walked bottom-left to top-right."""
    order = []
    for d in range(lat.rows + lat.cols - 1):
        for c in range(lat.cols):
            r = d - c
            if 0 <= r < lat.rows:
                order.append(r * lat.cols + c)
    return order


def order_spiral(lat: LatticeInfo) -> list[int]:
    """Counterclockwise inward spiral starting at the top-right corner."""
    top, bottom, left, right = 0, lat.rows - 1, 0, lat.cols - 1
    order = []
    while top <= bottom and left <= right:
        for c in range(right, left - 1, -1):
            order.append(top * lat.cols + c)
        for r in range(top + 1, bottom + 1):
            order.append(r * lat.cols + left)
        if top < bottom:
            for c in range(left + 1, right + 1):
                order.append(bottom * lat.cols + c)
        if left < right:
            for r in range(bottom - 1, top, -1):
                order.append(r * lat.cols + right)
        top, bottom, left, right = top + 1, bottom - 1, left + 1, right - 1
    return order


def order_snake_columns(lat: LatticeInfo) -> list[int]:
    """Boustrophedon by columns: first column top-down, second bottom-up, ..."""
    order = []
    for c in range(lat.cols):
        rows = range(lat.rows) if c % 2 == 0 else range(lat.rows - 1, -1, -1)
        order.extend(r * lat.cols + c for r in rows)
    return order


def order_random_neighbour(lat: LatticeInfo, rng: np.random.Generator) -> list[int]:
    """First node uniform; each next node uniform among unvisited nodes
    with at least one visited neighbour (ties broken by the same draw)."""
    adj = neighbours(lat.rows, lat.cols, lat.periodic)
    n = lat.n_sites
    first = int(rng.integers(n))
    order = [first]
    visited = {first}
    frontier = set(adj[first])
    while len(order) < n:
        candidates = sorted(frontier)
        pick = candidates[int(rng.integers(len(candidates)))]
        order.append(pick)
        visited.add(pick)
        frontier.discard(pick)
        frontier.update(v for v in adj[pick] if v not in visited)
    return order


def double_spiral_blocks(rows: int, cols: int) -> tuple[list[int], list[int]]:
    """Split an even-sized grid into two interleaved spiral-arm chains.

    Both arms are induced paths in the (non-periodic) lattice: arm A starts
    at the top-left corner heading east, arm B is its 180-degree rotation
    starting at the bottom-right corner.  Each arm walks clockwise inward,
    turning with segment lengths n, n-2, n-2, n-4, n-4, ..., 2, 2.  Node
    order within each arm runs from the boundary toward the centre.
    """
    if rows != cols or rows % 2 != 0:
        raise ValueError("double spiral split requires a square grid of even size")
    n = rows

    def walk():
        path = [(0, 0)]
        r, c = 0, 0
        direction = 0  # 0=E, 1=S, 2=W, 3=N
        deltas = [(0, 1), (1, 0), (0, -1), (-1, 0)]
        segments = [n - 1]
        length = n - 2
        while length >= 2:
            segments.extend([length, length])
            length -= 2
        for seg in segments:
            dr, dc = deltas[direction]
            for _ in range(seg):
                r, c = r + dr, c + dc
                path.append((r, c))
            direction = (direction + 1) % 4
        return path

    arm_a = [r * cols + c for r, c in walk()]
    arm_b = [(n - 1 - r) * cols + (n - 1 - c) for r, c in walk()]
    if set(arm_a) & set(arm_b) or len(arm_a) + len(arm_b) != rows * cols:
        raise AssertionError("double spiral arms must partition the grid")
    return arm_a, arm_b

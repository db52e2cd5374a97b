"""Small discrete lattice MRFs used as enumerable test beds.

These are the models whose partition function is cheap to enumerate, which
makes them the reference targets for the statistical unbiasedness checks.
"""

from __future__ import annotations

import numpy as np

from ..graph import Discrete, FactorGraph, LatticeInfo, TableFactor
from ..lattice import grid_edges

__all__ = ["random_binary_mrf", "random_discrete_mrf"]


def random_binary_mrf(rows: int, cols: int, rng, coupling_scale=1.0, field_scale=1.0) -> FactorGraph:
    """Binary lattice MRF with uniform random couplings and fields.

    Spins s = 2 x - 1 in {-1, +1}; each edge contributes J_ij s_i s_j and
    each site h_i s_i to the log potential, with J, h ~ U(-scale, scale).
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    factors = []
    for i, j in grid_edges(rows, cols, periodic=False):
        coupling = rng.uniform(-coupling_scale, coupling_scale)
        factors.append(
            TableFactor((i, j), np.array([[coupling, -coupling], [-coupling, coupling]]))
        )
    for i in range(rows * cols):
        field = rng.uniform(-field_scale, field_scale)
        factors.append(TableFactor((i,), np.array([-field, field])))
    return FactorGraph(
        [Discrete(2)] * (rows * cols), factors, lattice=LatticeInfo(rows, cols, False)
    )


def random_discrete_mrf(rows: int, cols: int, rng, cardinality=2, scale=1.0) -> FactorGraph:
    """Lattice MRF with random dense log tables over a common cardinality."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    c = int(cardinality)
    factors = []
    for i, j in grid_edges(rows, cols, periodic=False):
        factors.append(TableFactor((i, j), rng.uniform(-scale, scale, size=(c, c))))
    for i in range(rows * cols):
        factors.append(TableFactor((i,), rng.uniform(-scale, scale, size=c)))
    return FactorGraph(
        [Discrete(c)] * (rows * cols), factors, lattice=LatticeInfo(rows, cols, False)
    )

"""Periodic deme lattice: W demes in a ring, M cells per deme.

Sites are encoded as flat ints site = deme*M + cell.  Interaction is only
between cells of adjacent demes: each cell has 2*M directed neighbor slots
(direction left/right times M cells of that deme).  On a W=2 ring both
directions reach the same deme; the two slots stay distinct so every cell
keeps exactly 2*M slots and rates are uniform in W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Torus"]


@dataclass(frozen=True)
class Torus:
    """Lattice geometry. W demes (periodic), M cells per deme."""

    W: int
    M: int

    def __post_init__(self):
        if self.W < 2:
            raise ValueError("need at least 2 demes")
        if self.M < 1:
            raise ValueError("need at least 1 cell per deme")

    @property
    def n_sites(self):
        return self.W * self.M

    @property
    def n_slots(self):
        """Directed (target cell, neighbor slot) pairs: W*M * 2M."""
        return self.W * self.M * 2 * self.M

    def site(self, deme, cell=0):
        return (deme % self.W) * self.M + cell

    def deme_of(self, site):
        return site // self.M

    def cell_of(self, site):
        return site % self.M

    def slot_tables(self):
        """(target_site, source_site) int32 arrays indexed by slot id.

        Slot id enumerates (target deme, target cell, direction, source cell)
        lexicographically; the encoding is fixed so event logs are stable
        across runs.
        """
        W, M = self.W, self.M
        tgt_deme, tgt_cell, direction, src_cell = np.meshgrid(
            np.arange(W), np.arange(M), np.arange(2), np.arange(M), indexing="ij"
        )
        src_deme = (tgt_deme + np.where(direction == 0, -1, 1)) % W
        tgt = (tgt_deme * M + tgt_cell).ravel().astype(np.int32)
        src = (src_deme * M + src_cell).ravel().astype(np.int32)
        return tgt, src

    def neighbor_site(self, site, direction, cell):
        """Site reached from `site` through slot (direction in {0,1}, cell)."""
        deme = site // self.M
        nd = (deme + (1 if direction else -1)) % self.W
        return nd * self.M + cell

    def positions(self, L):
        """Deme positions w in units of 1/L, as floats."""
        return np.arange(self.W) / float(L)

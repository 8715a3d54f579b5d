"""Rank bookkeeping: manifold dimension, core-entry budgets, known-entry layout.

A partially specified Tucker model splits the dimensions at index ``j``: the
first ``j`` dimensions are absorbed into the core tensor, and only the trailing
rank components ``r_{j+1}..r_d`` are prescribed.  The core's ``j``-unfolding has
``N_j = n_1 * ... * n_j`` rows and ``R = prod r_i`` columns; fixing the gauge
pins an identity block per trailing dimension inside that unfolding, which is
what :func:`canonical_structure` lays out and what :meth:`RankSpec.g` counts.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

from .core import Shape

__all__ = ["RankSpec", "StructureBlock", "ProperStructure", "manifold_dim", "core_dim", "canonical_structure"]


@dataclass(frozen=True)
class RankSpec:
    """Prescribed trailing rank components ``r_{j+1}..r_d`` with split index j."""

    j: int
    ranks: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.j < 1:
            raise ValueError("split index j must be >= 1")
        if not self.ranks:
            raise ValueError("at least one trailing rank component required")
        if any(int(r) < 1 for r in self.ranks):
            raise ValueError("rank components must be positive")
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))

    @property
    def order(self) -> int:
        """Tensor order d implied by j and the number of trailing ranks."""
        return self.j + len(self.ranks)

    @property
    def product(self) -> int:
        """R = prod of the trailing rank components."""
        p = 1
        for r in self.ranks:
            p *= r
        return p

    @property
    def sum_sq(self) -> int:
        return sum(r * r for r in self.ranks)

    @property
    def sum_ranks(self) -> int:
        return sum(self.ranks)

    @property
    def sorted_ranks(self) -> tuple[int, ...]:
        return tuple(sorted(self.ranks, reverse=True))

    def g(self, x: int) -> int:
        """Maximum number of known (gauge-pinned) core entries in any x rows
        of the core's j-unfolding.

        Evaluated over the descending-sorted ranks: filling rows block by
        block, a row taken from the block of size r contributes r entries.
        """
        if x < 0:
            raise ValueError("row count must be nonnegative")
        total = 0
        offset = 0
        for r in self.sorted_ranks:
            take = min(r, max(x - offset, 0))
            total += take * r
            offset += r
        return total

    def check_shape(self, shape: Shape) -> None:
        if shape.order != self.order:
            raise ValueError(
                f"rank spec implies order {self.order} but shape has order {shape.order}"
            )

    def tail_dims(self, shape: Shape) -> tuple[int, ...]:
        """Sizes n_{j+1}..n_d."""
        self.check_shape(shape)
        return shape.dims[self.j:]


def manifold_dim(shape: Shape, full_ranks: Sequence[int]) -> int:
    """Dimension of the manifold of tensors with the full Tucker rank vector."""
    ranks = tuple(int(r) for r in full_ranks)
    if len(ranks) != shape.order:
        raise ValueError("need one rank per dimension")
    prod = 1
    total = 0
    for n, r in zip(shape.dims, ranks):
        if r > n or r < 1:
            raise ValueError(f"rank {r} infeasible for dimension {n}")
        total += n * r - r * r
        prod *= r
    return total + prod


def core_dim(shape: Shape, spec: RankSpec) -> int:
    """Number of free core entries once the gauge block entries are pinned:
    N_j * R - sum r_i^2.  This is the witness size the finiteness certificate
    must reach."""
    spec.check_shape(shape)
    return shape.head_size(spec.j) * spec.product - spec.sum_sq


@dataclass(frozen=True)
class StructureBlock:
    """Identity block for one trailing dimension inside the core unfolding.

    ``rows[a-1]`` and ``cols[b-1]`` address the (a, b) entry of the block:
    ``rows`` are j-unfolding row indices, ``cols`` are core column coordinates
    ``(1, ..., 1, b, 1, ..., 1)`` with ``b`` in the slot of this dimension.
    """

    dim: int  # absolute dimension index i in j+1..d
    rows: tuple[int, ...]
    cols: tuple[tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class ProperStructure:
    shape: Shape
    spec: RankSpec
    blocks: tuple[StructureBlock, ...]

    def known_entries(self):
        """Yield (row, col-coordinate, value) for every pinned core entry."""
        for block in self.blocks:
            for a, row in enumerate(block.rows):
                for b, col in enumerate(block.cols):
                    yield row, col, (1.0 if a == b else 0.0)

    @property
    def known_count(self) -> int:
        return sum(b.size * b.size for b in self.blocks)


def canonical_structure(shape: Shape, spec: RankSpec) -> ProperStructure:
    """The fixed identity-block layout: block for dimension i occupies rows
    ``1 + sum_{s<i} r_s .. sum_{s<=i} r_s`` and the columns whose coordinate is
    1 everywhere except in slot i."""
    spec.check_shape(shape)
    n_rows = shape.head_size(spec.j)
    if n_rows < spec.sum_ranks:
        raise ValueError(
            f"cannot place {spec.sum_ranks} disjoint block rows in {n_rows} unfolding rows"
        )
    blocks = []
    offset = 0
    for slot, r in enumerate(spec.ranks):
        rows = tuple(range(offset + 1, offset + r + 1))
        cols = []
        for b in range(1, r + 1):
            col = [1] * len(spec.ranks)
            col[slot] = b
            cols.append(tuple(col))
        blocks.append(StructureBlock(dim=spec.j + 1 + slot, rows=rows, cols=tuple(cols)))
        offset += r
    return ProperStructure(shape=shape, spec=spec, blocks=tuple(blocks))

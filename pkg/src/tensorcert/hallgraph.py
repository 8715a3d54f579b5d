"""Bipartite expansion toolkit: matchings, expansion defect, and degree-thinned
spanning subgraphs that preserve a Hall-type expansion margin.

The central construction: given a graph on (T1, T2) in which every nonempty
S ⊆ T1 satisfies ``|N(S)| >= |S| + r``, produce a spanning subgraph where every
T1 node keeps exactly ``r + 1`` edges and the same expansion margin still
holds.  The recursive splitting strategy (peel off a tight set, or remove one
vertex) leaves the retained-edge choice for the removed vertex underdetermined,
so every construction is verified against the postconditions and falls back to
a complete backtracking search when the quick choice breaks the margin.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

__all__ = [
    "BipartiteGraph",
    "HallPreconditionError",
    "max_matching",
    "expansion_defect",
    "defect_at_least",
    "generalized_hall_subgraph",
    "lemma_match_subgraph",
    "lemma_omega_transform",
]

BRUTE_FORCE_GUARD = 20


class HallPreconditionError(ValueError):
    """An expansion precondition failed; carries a witness subset when known."""

    def __init__(self, message: str, witness: Optional[tuple[int, ...]] = None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class BipartiteGraph:
    """Adjacency from T1 nodes (1..size_t1) to T2 nodes (1..size_t2)."""

    size_t1: int
    size_t2: int
    adj: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.size_t1 < 1 or self.size_t2 < 1:
            raise ValueError("both node sets must be nonempty")
        if len(self.adj) != self.size_t1:
            raise ValueError("need one neighbor list per T1 node")
        cleaned = []
        for nbrs in self.adj:
            ns = tuple(sorted(set(int(v) for v in nbrs)))
            if ns and not (1 <= ns[0] and ns[-1] <= self.size_t2):
                raise ValueError("neighbor index out of range")
            cleaned.append(ns)
        object.__setattr__(self, "adj", tuple(cleaned))

    def masks(self) -> list[int]:
        return [_to_mask(nbrs) for nbrs in self.adj]


def _to_mask(neighbors: Iterable[int]) -> int:
    m = 0
    for v in neighbors:
        m |= 1 << (v - 1)
    return m


def _from_mask(mask: int) -> tuple[int, ...]:
    out = []
    v = 1
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return tuple(out)


# ---------------------------------------------------------------------------
# Matching


def _augment(adj: Sequence[Sequence[int]], match_t2: dict[int, int], u: int, visited: set[int]) -> bool:
    for v in adj[u]:
        if v in visited:
            continue
        visited.add(v)
        w = match_t2.get(v)
        if w is None or _augment(adj, match_t2, w, visited):
            match_t2[v] = u
            return True
    return False


def max_matching(g: BipartiteGraph) -> tuple[int, tuple[tuple[int, int], ...]]:
    """Maximum-cardinality matching via augmenting paths (deterministic order).

    Returns (size, pairs) with pairs as (t1, t2), sorted by t1.
    """
    match_t2: dict[int, int] = {}
    for u in range(g.size_t1):
        _augment(g.adj, match_t2, u, set())
    pairs = sorted((u + 1, v) for v, u in match_t2.items())
    return len(pairs), tuple(pairs)


# ---------------------------------------------------------------------------
# Expansion defect


def _defect_brute(masks: Sequence[int], limit: Optional[int] = None) -> tuple[int, tuple[int, ...]]:
    """Exact min over nonempty S of |N(S)| - |S|, by subset enumeration."""
    x = len(masks)
    if x > BRUTE_FORCE_GUARD:
        raise ValueError(f"brute-force defect limited to |T1| <= {BRUTE_FORCE_GUARD}")
    best = None
    best_set: tuple[int, ...] = ()
    # Union-of-neighborhoods DP over subset bitmasks of T1.
    union = [0] * (1 << x)
    for s in range(1, 1 << x):
        low = s & -s
        union[s] = union[s ^ low] | masks[low.bit_length() - 1]
        value = union[s].bit_count() - s.bit_count()
        if best is None or value < best:
            best = value
            best_set = tuple(i + 1 for i in range(x) if s >> i & 1)
            if limit is not None and best < limit:
                return best, best_set
    assert best is not None
    return best, best_set


def expansion_defect(g: BipartiteGraph) -> tuple[int, tuple[int, ...]]:
    """min over nonempty S ⊆ T1 of |N(S)| - |S|, with an argmin witness."""
    return _defect_brute(g.masks())


def _masks_defect_at_least(masks: Sequence[int], r: int) -> tuple[bool, Optional[tuple[int, ...]]]:
    """Matching-based exact test of |N(S)| >= |S| + r for all nonempty S.

    The base graph must admit a T1-saturating matching; then node u survives r
    clones of itself being matched iff no subset containing u is tighter than
    r.  Scales well past the brute-force guard.
    """
    if r < 0:
        raise ValueError("defect threshold must be nonnegative")
    adj = [_from_mask(m) for m in masks]
    x = len(adj)
    match_t2: dict[int, int] = {}
    for u in range(x):
        if not _augment(adj, match_t2, u, set()):
            return False, _hall_witness(adj, match_t2, u)
    if r == 0:
        return True, None
    for u in range(x):
        trial = dict(match_t2)
        for _ in range(r):
            if not _augment(adj, trial, u, set()):
                return False, _hall_witness(adj, trial, u)
    return True, None


def _hall_witness(adj: Sequence[Sequence[int]], match_t2: dict[int, int], u: int) -> tuple[int, ...]:
    """After a failed augment from u, the alternating-reachable T1 nodes form a
    set whose neighborhood is exactly the visited T2 nodes."""
    visited: set[int] = set()
    _augment(adj, dict(match_t2), u, visited)  # re-run on a copy to collect reachable T2
    nodes = {u}
    changed = True
    while changed:
        changed = False
        for v in visited:
            w = match_t2.get(v)
            if w is not None and w not in nodes:
                nodes.add(w)
                changed = True
    return tuple(sorted(n + 1 for n in nodes))


def defect_at_least(g: BipartiteGraph, r: int) -> tuple[bool, Optional[tuple[int, ...]]]:
    """Exact boolean test ``expansion_defect(g) >= r`` (r >= 0) with witness.

    Cross-checked against the brute-force enumeration in tests; preferred for
    graphs beyond the brute-force guard.
    """
    return _masks_defect_at_least(g.masks(), r)


# ---------------------------------------------------------------------------
# Degree-(r+1) spanning subgraph construction


class _ConstructFailed(Exception):
    pass


def _perfect_matching_into(adj_masks: Sequence[int], allowed_mask: int) -> Optional[list[int]]:
    """Match every T1 node to a distinct T2 node within allowed_mask; returns
    per-node matched T2 label (1-based) or None."""
    adj = [_from_mask(m & allowed_mask) for m in adj_masks]
    match_t2: dict[int, int] = {}
    for u in range(len(adj)):
        if not _augment(adj, match_t2, u, set()):
            return None
    out = [0] * len(adj)
    for v, u in match_t2.items():
        out[u] = v
    return out


def _lowest_bits(mask: int, k: int) -> int:
    out = 0
    while k > 0 and mask:
        low = mask & -mask
        out |= low
        mask ^= low
        k -= 1
    if k > 0:
        raise _ConstructFailed("node degree below r+1")
    return out


def _find_tight_set(masks: Sequence[int], r: int, within_mask: Optional[int] = None) -> Optional[tuple[int, ...]]:
    """Smallest (then lexicographically first) proper nonempty S ⊆ T1 with
    |N(S)| == |S| + r; neighborhoods optionally restricted to within_mask."""
    x = len(masks)
    for size in range(1, x):
        for combo in itertools.combinations(range(x), size):
            union = 0
            for i in combo:
                union |= masks[i] if within_mask is None else masks[i] & within_mask
            if union.bit_count() == size + r:
                return combo
    return None


def _construct(masks: list[int], r: int) -> list[int]:
    """Recursive peel: returns per-node retained-edge masks (degree r+1)."""
    x = len(masks)
    if x == 0:
        return []
    if x == 1:
        return [_lowest_bits(masks[0], r + 1)]
    tight = _find_tight_set(masks, r)
    if tight is not None:
        tight_set = set(tight)
        hull = 0
        for i in tight:
            hull |= masks[i]
        inner = _construct([masks[i] & hull for i in tight], r)
        rest = [i for i in range(x) if i not in tight_set]
        rest_masks = [masks[i] for i in rest]
        # Pin the complement onto fresh T2 nodes via a matching, then thin it
        # while keeping that matching inside the retained edges.
        matched = _perfect_matching_into(rest_masks, ~hull)
        if matched is None:
            raise _ConstructFailed("no matching outside the tight hull")
        s0_mask = _to_mask(matched)
        outer = _lemma_match(rest_masks, r, s0_mask)
        result = [0] * x
        for pos, i in enumerate(tight):
            result[i] = inner[pos]
        for pos, i in enumerate(rest):
            result[i] = outer[pos]
        return result
    # No proper tight set: drop the lowest-index vertex and recurse.  The
    # peeled vertex's edge choice is underdetermined (an arbitrary choice can
    # land inside a tight neighborhood of the recursed subgraph), so return it
    # the lexicographically first r+1 edges that restore the margin.
    rest = _construct(masks[1:], r)
    for combo in itertools.combinations(_from_mask(masks[0]), r + 1):
        cand = _to_mask(combo)
        ok, _ = _masks_defect_at_least([cand] + rest, r)
        if ok:
            return [cand] + rest
    raise _ConstructFailed("no edge choice for the peeled vertex keeps the margin")


def _lemma_match(masks: list[int], r: int, s0_mask: int) -> list[int]:
    """Variant that additionally threads a perfect matching into S0."""
    x = len(masks)
    if x == 0:
        return []
    if x == 1:
        anchored = masks[0] & s0_mask
        if not anchored:
            raise _ConstructFailed("no edge into S0")
        u0 = anchored & -anchored
        return [u0 | _lowest_bits(masks[0] & ~u0, r)]
    # Tightness here is measured against S0: |N(S) ∩ S0| == |S|.
    tight = None
    for size in range(1, x):
        found = None
        for combo in itertools.combinations(range(x), size):
            union = 0
            for i in combo:
                union |= masks[i] & s0_mask
            if union.bit_count() == size:
                found = combo
                break
        if found is not None:
            tight = found
            break
    if tight is not None:
        tight_set = set(tight)
        s0_inner = 0
        for i in tight:
            s0_inner |= masks[i] & s0_mask
        inner = _lemma_match([masks[i] for i in tight], r, s0_inner)
        rest = [i for i in range(x) if i not in tight_set]
        outer = _lemma_match([masks[i] for i in rest], r, s0_mask & ~s0_inner)
        result = [0] * x
        for pos, i in enumerate(tight):
            result[i] = inner[pos]
        for pos, i in enumerate(rest):
            result[i] = outer[pos]
        return result
    anchored = masks[0] & s0_mask
    if not anchored:
        raise _ConstructFailed("no edge into S0")
    # As in the plain construction, the peeled vertex's retained edges are
    # underdetermined; scan anchor nodes u0 (lowest first) and edge
    # combinations until the margin and the S0 matching both survive.
    for u0 in (1 << i for i in range(anchored.bit_length()) if anchored >> i & 1):
        try:
            rest = _lemma_match(masks[1:], r, s0_mask & ~u0)
        except _ConstructFailed:
            continue
        for combo in itertools.combinations(_from_mask(masks[0] & ~u0), r):
            own = u0 | _to_mask(combo)
            chosen = [own] + rest
            ok, _ = _masks_defect_at_least(chosen, r)
            if not ok:
                continue
            if _perfect_matching_into([c & s0_mask for c in chosen], s0_mask) is None:
                continue
            return chosen
    raise _ConstructFailed("no edge choice for the peeled vertex keeps the margin")


def _verify(masks: Sequence[int], chosen: Sequence[int], r: int, s0_mask: Optional[int]) -> bool:
    for m, c in zip(masks, chosen):
        if c & ~m or c.bit_count() != r + 1:
            return False
    ok, _ = _masks_defect_at_least(list(chosen), r)
    if not ok:
        return False
    if s0_mask is not None:
        restricted = [c & s0_mask for c in chosen]
        if _perfect_matching_into(restricted, s0_mask) is None:
            return False
    return True


def _backtrack(masks: list[int], r: int, s0_mask: Optional[int]) -> list[int]:
    """Complete search over per-node (r+1)-edge choices, pruning with the
    expansion (and S0-Hall) conditions over all decided subsets."""
    x = len(masks)
    if x > BRUTE_FORCE_GUARD:
        raise _ConstructFailed("instance too large for the complete fallback search")
    chosen: list[int] = []
    options = [
        [
            _to_mask(combo)
            for combo in itertools.combinations(_from_mask(m), r + 1)
        ]
        for m in masks
    ]

    def feasible_after(k: int) -> bool:
        # The decided prefix must already satisfy the margin (and S0-Hall)
        # over all of its subsets; checked via matchings, not enumeration.
        ok, _ = _masks_defect_at_least(chosen, r)
        if not ok:
            return False
        if s0_mask is not None:
            if _perfect_matching_into([c & s0_mask for c in chosen], s0_mask) is None:
                return False
        return True

    def rec(k: int) -> bool:
        if k == x:
            return True
        for cand in options[k]:
            chosen.append(cand)
            if feasible_after(k) and rec(k + 1):
                return True
            chosen.pop()
        return False

    if not rec(0):
        raise _ConstructFailed("no qualifying spanning subgraph exists")
    return chosen


def _thin(g: BipartiteGraph, r: int, s0: Optional[Sequence[int]]) -> BipartiteGraph:
    masks = g.masks()
    s0_mask = _to_mask(s0) if s0 is not None else None
    try:
        chosen = (
            _construct(list(masks), r) if s0_mask is None else _lemma_match(list(masks), r, s0_mask)
        )
        if not _verify(masks, chosen, r, s0_mask):
            raise _ConstructFailed("recursive construction missed the margin")
    except _ConstructFailed:
        chosen = _backtrack(list(masks), r, s0_mask)
        if not _verify(masks, chosen, r, s0_mask):  # pragma: no cover - safety net
            raise RuntimeError("fallback search produced an invalid subgraph")
    return BipartiteGraph(
        size_t1=g.size_t1, size_t2=g.size_t2, adj=tuple(_from_mask(c) for c in chosen)
    )


def generalized_hall_subgraph(g: BipartiteGraph, r: int) -> BipartiteGraph:
    """Spanning subgraph with every T1 degree exactly r+1 and expansion defect
    still >= r.  Requires size_t2 = size_t1 + r and defect(g) >= r."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if g.size_t2 != g.size_t1 + r:
        raise HallPreconditionError(
            f"need size_t2 = size_t1 + r, got {g.size_t2} != {g.size_t1} + {r}"
        )
    ok, witness = defect_at_least(g, r)
    if not ok:
        raise HallPreconditionError(f"expansion defect below {r}", witness=witness)
    return _thin(g, r, None)


def lemma_match_subgraph(g: BipartiteGraph, r: int, s0: Sequence[int]) -> BipartiteGraph:
    """As :func:`generalized_hall_subgraph` (sizes may differ), additionally
    containing a perfect matching between T1 and the given S0 ⊆ T2."""
    s0 = tuple(sorted(set(int(v) for v in s0)))
    if len(s0) != g.size_t1:
        raise HallPreconditionError("S0 must have exactly one node per T1 node")
    masks = g.masks()
    s0_mask = _to_mask(s0)
    if _perfect_matching_into([m & s0_mask for m in masks], s0_mask) is None:
        raise HallPreconditionError("some subset has too few S0-neighbors")
    ok, witness = defect_at_least(g, r)
    if not ok:
        raise HallPreconditionError(f"expansion defect below {r}", witness=witness)
    return _thin(g, r, s0)


def lemma_omega_transform(columns: Sequence[Iterable[int]], num_rows: int, r: int) -> list[frozenset[int]]:
    """Thin binary columns down to exactly r+1 ones per column while keeping
    the property that any t columns together touch at least t + r rows.

    `columns` are row-index sets over 1..num_rows, with len(columns) = num_rows - r.
    """
    cols = [tuple(sorted(set(c))) for c in columns]
    if len(cols) != num_rows - r:
        raise HallPreconditionError(
            f"expected {num_rows - r} columns for {num_rows} rows at margin {r}"
        )
    for c in cols:
        if len(c) < r + 1:
            raise HallPreconditionError("every column needs at least r+1 ones")
    g = BipartiteGraph(size_t1=len(cols), size_t2=num_rows, adj=tuple(cols))
    thinned = generalized_hall_subgraph(g, r)
    return [frozenset(nbrs) for nbrs in thinned.adj]

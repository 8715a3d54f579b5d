"""Sampling-pattern assumptions on the designated (factor-pinning) entries.

Each observed entry, viewed as a polynomial in the factor matrices, involves
exactly the factor columns indexed by its own trailing coordinates.  A family
of row sets ``S_{j+1}..S_d`` ("hull") therefore offers a variable budget of
``sum |S_i| * r_i``, and the entries it has to pay for are those whose *every*
trailing coordinate falls inside the corresponding ``S_i``.  The designated
selection is admissible when no hull is overdrawn; this is what makes the
factor matrices finitely determined once a generic core is fixed.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Coord, SamplingPattern, Shape, unfold_col, unfold_row
from .geometry import RankSpec

__all__ = [
    "HullSpec",
    "TSelection",
    "AssumptionError",
    "SelectionInfeasibleError",
    "SelectionNotFoundError",
    "HullGuardError",
    "minimal_hull",
    "hull_condition",
    "selection_pins_factors",
    "check_Aj",
    "check_Aj_plus",
    "check_Bj",
    "select_T_entries",
    "find_T_selection",
]

# Brute-force hull enumeration walks all subset combinations of the trailing
# dimensions; reject instances where that blows up.
HULL_SIZE_GUARD = 18


class AssumptionError(ValueError):
    """A structural precondition on the pattern/ranks is violated."""


class SelectionInfeasibleError(AssumptionError):
    """No admissible designated selection can exist for this pattern."""


class SelectionNotFoundError(AssumptionError):
    """Search for an admissible designated selection was exhausted."""


class HullGuardError(AssumptionError):
    """Instance too large for exhaustive hull enumeration."""


@dataclass(frozen=True)
class HullSpec:
    """Row sets S_{j+1}..S_d, one per trailing dimension."""

    j: int
    subsets: tuple[frozenset[int], ...]

    def contains(self, coord: Sequence[int]) -> bool:
        """True iff every trailing coordinate of `coord` lies in its row set."""
        tail = tuple(coord)[self.j:]
        return all(x in s for x, s in zip(tail, self.subsets))

    def budget(self, weights: Sequence[int]) -> int:
        return sum(len(s) * w for s, w in zip(self.subsets, weights))

    def count(self, coords: Iterable[Sequence[int]]) -> int:
        return sum(1 for c in coords if self.contains(c))


@dataclass(frozen=True)
class TSelection:
    """The designated observed entries that pin down the factor matrices."""

    entries: tuple[Coord, ...]
    mode: str  # "A" or "A+"

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(sorted(tuple(c) for c in self.entries)))
        if self.mode not in ("A", "A+"):
            raise ValueError("mode must be 'A' or 'A+'")


def minimal_hull(j: int, coords: Iterable[Sequence[int]]) -> HullSpec:
    """Smallest hull covering `coords`: S_i collects the values actually taken
    by the i-th coordinate."""
    coords = [tuple(c) for c in coords]
    if not coords:
        raise ValueError("minimal hull of an empty entry set is undefined")
    d = len(coords[0])
    subsets = []
    for i in range(j, d):
        subsets.append(frozenset(c[i] for c in coords))
    return HullSpec(j=j, subsets=tuple(subsets))


def _per_dim_weights(spec: RankSpec, plus: bool) -> tuple[int, ...]:
    return tuple(r + 1 for r in spec.ranks) if plus else spec.ranks


def _check_selection(
    shape: Shape,
    spec: RankSpec,
    entries: Sequence[Coord],
    plus: bool,
) -> tuple[bool, Optional[HullSpec]]:
    """Enumerate every hull and verify its entry count stays within budget."""
    tail_dims = spec.tail_dims(shape)
    if sum(tail_dims) > HULL_SIZE_GUARD:
        raise HullGuardError(
            f"hull enumeration over trailing dims {tail_dims} exceeds the size guard"
        )
    weights = _per_dim_weights(spec, plus)
    # Tail coordinate multiset is all that matters for the counts.
    tails = [tuple(c)[spec.j:] for c in entries]

    def subsets_of(n: int, allow_empty: bool):
        values = range(1, n + 1)
        low = 0 if allow_empty else 1
        for k in range(low, n + 1):
            for combo in itertools.combinations(values, k):
                yield frozenset(combo)

    per_dim = [list(subsets_of(n, plus)) for n in tail_dims]
    for chosen in itertools.product(*per_dim):
        budget = sum(len(s) * w for s, w in zip(chosen, weights))
        count = 0
        for tail in tails:
            if all(x in s for x, s in zip(tail, chosen)):
                count += 1
                if count > budget:
                    break
        if count > budget:
            return False, HullSpec(j=spec.j, subsets=tuple(chosen))
    return True, None


def hull_condition(
    shape: Shape, spec: RankSpec, entries: Sequence[Coord], plus: bool = False
) -> tuple[bool, Optional[HullSpec]]:
    """Pure counting screen: no hull may contain more of the given entries than
    its variable budget.  Necessary for the selection to pin the factors, and
    cheap, but not sufficient: it ignores that scaling one factor up and
    another down in compensation leaves every entry unchanged, and that a
    factor column reached through few distinct co-coordinates contributes
    fewer effective variables than its full height."""
    return _check_selection(shape, spec, entries, plus)


# Pinning is ultimately a generic-rank question, so the screen above is
# confirmed numerically on random instances; two draws guard against an
# unlucky non-generic point.
_PIN_PROBE_SEEDS = (0x5EED, 0xA11CE)
_PIN_RANK_TOL = 1e-8


def selection_pins_factors(shape: Shape, spec: RankSpec, entries: Sequence[Coord]) -> bool:
    """True when, for a generic fixed core, the polynomials of the given
    observed entries leave only finitely many factor tuples (up to the
    inherent compensating-scaling family of dimension d - j - 1).

    Decided by the rank of the entries' Jacobian with respect to all factor
    entries at a random generic point: the maximum attainable rank is
    ``sum n_i r_i - (d - j - 1)``, and the selection pins the factors exactly
    when it is attained.
    """
    spec.check_shape(shape)
    tail_dims = spec.tail_dims(shape)
    num_slots = len(spec.ranks)
    num_vars = sum(n * r for n, r in zip(tail_dims, spec.ranks))
    target = num_vars - (num_slots - 1)
    coords = [tuple(c) for c in entries]
    if len(coords) < target:
        return False
    # variable layout: (slot, k, col) in slot-major order
    offsets = []
    off = 0
    for r, n in zip(spec.ranks, tail_dims):
        offsets.append(off)
        off += r * n

    R = spec.product
    strides = []
    s = 1
    for r in spec.ranks:
        strides.append(s)
        s *= r
    rank_tuples = list(itertools.product(*(range(r) for r in spec.ranks)))

    best = 0
    for seed in _PIN_PROBE_SEEDS:
        rng = np.random.default_rng(seed)
        core = rng.standard_normal((shape.head_size(spec.j), R))
        factors = [rng.standard_normal((r, n)) for r, n in zip(spec.ranks, tail_dims)]
        jac = np.zeros((len(coords), num_vars))
        for row_i, x in enumerate(coords):
            head_row = unfold_row(shape, spec.j, x) - 1
            tail0 = [x[spec.j + s2] - 1 for s2 in range(num_slots)]
            for k in rank_tuples:
                flat = sum(ki * st for ki, st in zip(k, strides))
                c = core[head_row, flat]
                fs = [factors[s2][k[s2], tail0[s2]] for s2 in range(num_slots)]
                for s2 in range(num_slots):
                    coef = c * math.prod(fs[:s2] + fs[s2 + 1 :])
                    var = offsets[s2] + tail0[s2] * spec.ranks[s2] + k[s2]
                    jac[row_i, var] += coef
        sv = np.linalg.svd(jac, compute_uv=False)
        rank = int(np.sum(sv > _PIN_RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
        best = max(best, rank)
        if best >= target:
            return True
    return False


def _validate_selection(
    pattern: SamplingPattern, spec: RankSpec, selection: TSelection, plus: bool
) -> None:
    shape = pattern.shape
    spec.check_shape(shape)
    weights = _per_dim_weights(spec, plus)
    needed = sum(n * w for n, w in zip(spec.tail_dims(shape), weights))
    if len(selection.entries) != needed:
        raise AssumptionError(
            f"selection has {len(selection.entries)} entries, expected {needed}"
        )
    observed = set(pattern.observed)
    if any(c not in observed for c in selection.entries):
        raise AssumptionError("selection must be a subset of the observed entries")


def check_Aj(
    pattern: SamplingPattern, spec: RankSpec, selection: TSelection
) -> tuple[bool, Optional[HullSpec]]:
    """Admissibility of a designated selection of size ``sum n_i r_i``: the
    selection must pin the factor matrices to finitely many tuples for a
    generic core.

    The counting screen runs first and supplies the overdrawn-hull witness
    when it fails; when it passes, the generic-rank confirmation decides
    (in which case a False verdict carries no hull witness).
    """
    _validate_selection(pattern, spec, selection, plus=False)
    ok, witness = _check_selection(pattern.shape, spec, selection.entries, plus=False)
    if not ok:
        return False, witness
    return selection_pins_factors(pattern.shape, spec, selection.entries), None


def check_Aj_plus(
    pattern: SamplingPattern, spec: RankSpec, selection: TSelection
) -> tuple[bool, Optional[HullSpec]]:
    """Strengthened admissibility with per-dimension weight r_i + 1 (used for
    uniqueness): the larger selection must satisfy the weighted counting
    screen (row sets may also be empty, which is vacuously within budget) and
    still pin the factors in the generic-rank sense."""
    _validate_selection(pattern, spec, selection, plus=True)
    ok, witness = _check_selection(pattern.shape, spec, selection.entries, plus=True)
    if not ok:
        return False, witness
    return selection_pins_factors(pattern.shape, spec, selection.entries), None


def check_Bj(shape: Shape, spec: RankSpec) -> bool:
    """Row budget for the gauge blocks: N_j >= sum of trailing ranks."""
    spec.check_shape(shape)
    return shape.head_size(spec.j) >= spec.sum_ranks


def _selection_size(shape: Shape, spec: RankSpec, plus: bool) -> int:
    weights = _per_dim_weights(spec, plus)
    return sum(n * w for n, w in zip(spec.tail_dims(shape), weights))


def _columns_by_tail(pattern: SamplingPattern, j: int) -> dict[tuple[int, ...], list[Coord]]:
    by_tail: dict[tuple[int, ...], list[Coord]] = {}
    for coord in pattern.observed:
        by_tail.setdefault(coord[j:], []).append(coord)
    return by_tail


def _spread_candidate(
    pattern: SamplingPattern, spec: RankSpec, plus: bool, rng: random.Random
) -> Optional[tuple[Coord, ...]]:
    """One observed entry in each of `needed` distinct trailing columns."""
    shape = pattern.shape
    needed = _selection_size(shape, spec, plus)
    by_tail = _columns_by_tail(pattern, spec.j)
    if needed > len(by_tail):
        return None
    chosen_tails = rng.sample(sorted(by_tail), needed)
    return tuple(rng.choice(sorted(by_tail[t])) for t in chosen_tails)


def _greedy_candidate(
    pattern: SamplingPattern, spec: RankSpec, plus: bool, rng: Optional[random.Random]
) -> Optional[tuple[Coord, ...]]:
    """Greedy accumulation in (jittered) lexicographic order, keeping an entry
    whenever the counting screen still passes.  The order naturally packs
    several designated entries into the same trailing column, which downstream
    witness searches often need."""
    shape = pattern.shape
    needed = _selection_size(shape, spec, plus)
    entries = sorted(pattern.observed)
    if rng is not None:
        rng.shuffle(entries)
    chosen: list[Coord] = []
    for coord in entries:
        ok, _ = _check_selection(shape, spec, chosen + [coord], plus)
        if ok:
            chosen.append(coord)
            if len(chosen) == needed:
                return tuple(chosen)
    return None


def select_T_entries(
    pattern: SamplingPattern,
    spec: RankSpec,
    mode: str = "A",
    seed: int = 0,
    hint: Optional[TSelection] = None,
    max_attempts: int = 40,
) -> TSelection:
    """Pick an admissible designated selection.

    Candidates come from two generators — greedy lexicographic accumulation
    (concentrating entries in few trailing columns) and randomized spread
    (one entry per column) — and each is kept only when the full admissibility
    check passes.  A `hint` selection is verified and returned verbatim when
    it passes.
    """
    plus = mode == "A+"
    shape = pattern.shape
    spec.check_shape(shape)
    checker = check_Aj_plus if plus else check_Aj

    if hint is not None:
        ok, _ = checker(pattern, spec, hint)
        if ok:
            return hint
        raise SelectionNotFoundError("hinted selection fails the admissibility check")

    needed = _selection_size(shape, spec, plus)
    if needed > pattern.num_observed:
        raise SelectionInfeasibleError(
            f"selection needs {needed} entries but only {pattern.num_observed} are observed"
        )

    tried: set[tuple[Coord, ...]] = set()
    for attempt in range(max_attempts):
        rng = random.Random(seed * 1_000_003 + attempt)
        if attempt == 0 and seed == 0:
            candidate = _greedy_candidate(pattern, spec, plus, rng=None)
        elif attempt % 2 == 0:
            candidate = _greedy_candidate(pattern, spec, plus, rng)
        else:
            candidate = _spread_candidate(pattern, spec, plus, rng)
        if candidate is None:
            continue
        key = tuple(sorted(candidate))
        if key in tried:
            continue
        tried.add(key)
        selection = TSelection(entries=candidate, mode=mode)
        ok, _ = checker(pattern, spec, selection)
        if ok:
            return selection
    raise SelectionNotFoundError(
        f"no admissible selection found in {max_attempts} randomized attempts"
    )


def find_T_selection(
    pattern: SamplingPattern,
    spec: RankSpec,
    mode: str = "A",
    seed: int = 0,
    exhaustive_limit: int = 200_000,
) -> TSelection:
    """Randomized selection search with an exhaustive desk-scale fallback.

    When the randomized strategies run out of retries, fall back to scanning
    combinations of observed entries directly, provided the combination count
    stays under `exhaustive_limit`.
    """
    try:
        return select_T_entries(pattern, spec, mode=mode, seed=seed)
    except SelectionInfeasibleError:
        raise
    except SelectionNotFoundError:
        pass

    plus = mode == "A+"
    checker = check_Aj_plus if plus else check_Aj
    needed = _selection_size(pattern.shape, spec, plus)
    if math.comb(pattern.num_observed, needed) > exhaustive_limit:
        raise SelectionNotFoundError(
            "exhaustive selection search exceeds the desk-scale guard"
        )
    for combo in itertools.combinations(sorted(pattern.observed), needed):
        candidate = TSelection(entries=combo, mode=mode)
        ok, _ = checker(pattern, spec, candidate)
        if ok:
            return candidate
    raise SelectionNotFoundError("no admissible selection exists for this pattern")

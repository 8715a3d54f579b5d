"""Constraint-matrix assembly from a pattern and a designated selection."""
import pytest

from tensorcert.assumptions import TSelection
from tensorcert.constraint import build_constraint, m_count
from tensorcert.core import SamplingPattern, Shape, unfold_row
from tensorcert.geometry import RankSpec


def small_instance():
    """(3, 3, 3) with j=1: two populated subtensor columns, one designated
    entry in each."""
    pattern = SamplingPattern.from_coords(
        (3, 3, 3),
        [
            (1, 1, 1), (2, 1, 1), (3, 1, 1),   # subtensor (1, 1)
            (1, 2, 1), (2, 2, 1),              # subtensor (2, 1)
        ],
    )
    spec = RankSpec(j=1, ranks=(1, 1))
    selection = TSelection(entries=((1, 1, 1), (1, 2, 1)), mode="A")
    return pattern, spec, selection


class TestBuildConstraint:
    def test_column_per_remaining_entry(self):
        pattern, spec, selection = small_instance()
        cm = build_constraint(pattern, spec, selection)
        assert cm.num_rows == 3
        assert cm.num_columns == pattern.num_observed - len(selection.entries)

    def test_support_is_designated_rows_plus_own_row(self):
        pattern, spec, selection = small_instance()
        cm = build_constraint(pattern, spec, selection)
        shape = pattern.shape
        by_base = {}
        for col in cm.columns:
            by_base.setdefault(col.base, []).append(col)
        # designated entry (1,1,1) pins row 1 of subtensor (1,1); the two
        # remaining entries there contribute supports {1,2} and {1,3}.
        assert {frozenset(c.support) for c in by_base[(1, 1)]} == {
            frozenset({1, 2}),
            frozenset({1, 3}),
        }
        assert [c.free_row for c in sorted(by_base[(1, 1)], key=lambda c: c.free_row)] == [2, 3]
        # subtensor (2,1): designated (1,2,1) -> row 1, remaining (2,2,1).
        (col,) = by_base[(2, 1)]
        assert col.designated_rows == frozenset({1})
        assert col.free_row == unfold_row(shape, 1, (2, 2, 1)) == 2

    def test_columns_sorted_by_base_then_entry(self):
        pattern, spec, selection = small_instance()
        cm = build_constraint(pattern, spec, selection)
        keys = [(c.base, c.free_row) for c in cm.columns]
        assert keys == sorted(keys)

    def test_rebuild_is_identical(self):
        pattern, spec, selection = small_instance()
        a = build_constraint(pattern, spec, selection)
        b = build_constraint(pattern, spec, selection)
        assert a == b
        assert a.dump_json() == b.dump_json()

    def test_selection_outside_pattern_rejected(self):
        pattern, spec, _ = small_instance()
        bad = TSelection(entries=((3, 3, 3), (1, 2, 1)), mode="A")
        with pytest.raises(ValueError):
            build_constraint(pattern, spec, bad)

    def test_subtensor_with_no_designated_entries(self):
        pattern = SamplingPattern.from_coords((3, 3, 3), [(1, 1, 1), (2, 1, 2)])
        spec = RankSpec(j=1, ranks=(1, 1))
        cm = build_constraint(pattern, spec, TSelection(entries=((1, 1, 1),), mode="A"))
        (col,) = cm.columns
        assert col.designated_rows == frozenset()
        assert col.support == frozenset({2})


class TestDenseSupport:
    def test_matches_column_supports(self):
        pattern, spec, selection = small_instance()
        cm = build_constraint(pattern, spec, selection)
        dense = cm.dense_support()
        # one coordinate per (support row, column) incidence
        assert len(dense) == sum(len(c.support) for c in cm.columns)
        for head_and_col in dense:
            *head, z = head_and_col
            assert head[0] in cm.columns[z - 1].support


class TestMCount:
    def test_counts_distinct_rows(self):
        pattern, spec, selection = small_instance()
        cm = build_constraint(pattern, spec, selection)
        assert m_count(cm, []) == 0
        assert m_count(cm, [0]) == len(cm.columns[0].support)
        assert m_count(cm, range(cm.num_columns)) == 3  # rows 1, 2, 3 all touched

    def test_union_never_exceeds_sum(self):
        pattern, spec, selection = small_instance()
        cm = build_constraint(pattern, spec, selection)
        for i in range(cm.num_columns):
            for k in range(i + 1, cm.num_columns):
                assert m_count(cm, [i, k]) <= len(cm.columns[i].support) + len(
                    cm.columns[k].support
                )

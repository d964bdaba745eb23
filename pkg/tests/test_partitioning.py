import numpy as np
import pytest

from dcc_framework.exceptions import RejectedInputError
from problems.partitioning import (
    Partition,
    bell_number,
    count_partitions,
    default_decompose,
    enumerate_all,
    format_partition,
    is_refinement,
    parse_partition,
    refine,
    refinement_chain,
    singletons,
    validate,
)


def test_validate_disjoint_cover():
    report = validate(Partition(3, [[1, 2], [3]]))
    assert report.valid and not report.trivial


def test_validate_overlap():
    report = validate(Partition(3, [[1, 2], [2, 3]]))
    assert not report.valid
    assert "overlap" in report.diagnostics


def test_validate_not_covering():
    report = validate(Partition(3, [[1], [3]]))
    assert not report.valid
    assert "not covered" in report.diagnostics


def test_validate_flags_trivial_partition():
    report = validate(Partition(3, [[1, 2, 3]]))
    assert report.valid and report.trivial


def test_validate_out_of_range_never_raises():
    assert not validate(Partition(2, [[1], [2], [5]])).valid


def test_canonical_order_ignores_group_order():
    assert Partition(3, [[3], [2, 1]]) == Partition(3, [[1, 2], [3]])


def test_count_partitions_documented_values():
    assert count_partitions(25) == 4638590332229999352
    assert count_partitions(3) == 4
    assert count_partitions(2) == 1
    assert count_partitions(1) == 0


def test_bell_numbers():
    assert [bell_number(n) for n in range(1, 8)] == [1, 2, 5, 15, 52, 203, 877]


@pytest.mark.parametrize("n", [0, 65])
def test_count_partitions_range(n):
    with pytest.raises(RejectedInputError):
        count_partitions(n)


def test_count_partitions_is_exact_at_64():
    assert count_partitions(64) == bell_number(64) - 1
    assert count_partitions(64) > 2 ** 64


def test_refine_splits_one_group():
    refined = refine(Partition(3, [[1, 2], [3]]), 0, ([1], [2]))
    assert refined == Partition(3, [[1], [2], [3]])
    assert refined.m == 3


@pytest.mark.parametrize("split", [([1], [1, 2]), ([1], []), ([1], [3]), ([1],)])
def test_refine_rejects_bad_splits(split):
    with pytest.raises(RejectedInputError):
        refine(Partition(3, [[1, 2], [3]]), 0, split)


def test_refine_results_are_valid_refinements():
    p = Partition(6, [[1, 2, 3, 4], [5, 6]])
    refined = refine(p, 0, ([1, 4], [2, 3]))
    assert validate(refined).valid
    assert is_refinement(refined, p)
    assert not is_refinement(p, refined)


def test_refinement_chain_reaches_singletons():
    chain = refinement_chain(Partition(5, [[1, 2, 3], [4, 5]]))
    assert chain[-1] == singletons(5)
    assert [p.m for p in chain] == [2, 3, 4, 5]
    for coarse, fine in zip(chain, chain[1:]):
        assert is_refinement(fine, coarse)


def test_enumerate_three_gives_the_four_partitions():
    expected = {
        Partition(3, [[1], [2], [3]]),
        Partition(3, [[1, 2], [3]]),
        Partition(3, [[1, 3], [2]]),
        Partition(3, [[1], [2, 3]]),
    }
    found = enumerate_all(3)
    assert len(found) == 4
    assert set(found) == expected


def test_enumerate_two():
    assert enumerate_all(2) == [Partition(2, [[1], [2]])]


@pytest.mark.parametrize("n", range(1, 9))
def test_enumeration_matches_count(n):
    partitions = enumerate_all(n)
    assert len(partitions) == count_partitions(n)
    assert len(set(partitions)) == len(partitions)
    assert all(validate(p).valid and p.m >= 2 for p in partitions)


def test_enumerate_guard():
    with pytest.raises(RejectedInputError):
        enumerate_all(11)


def test_default_decompose_sizes():
    assert sorted(default_decompose(6, 3, seed=0).group_sizes()) == [2, 2, 2]
    assert sorted(default_decompose(7, 3, seed=0).group_sizes()) == [2, 2, 3]


def test_default_decompose_is_seeded():
    assert default_decompose(20, 4, seed=5) == default_decompose(20, 4, seed=5)
    assert validate(default_decompose(20, 4, seed=5)).valid


@pytest.mark.parametrize("k", [1, 8])
def test_default_decompose_rejects_bad_k(k):
    with pytest.raises(RejectedInputError):
        default_decompose(7, k, seed=0)


def test_indices_are_zero_based():
    p = Partition(4, [[2, 4], [1, 3]])
    assert np.array_equal(p.indices(0), [0, 2])
    assert np.array_equal(p.indices(1), [1, 3])


def test_literal_round_trip():
    p = parse_partition("[[1,2],[3]]")
    assert p == Partition(3, [[1, 2], [3]])
    assert format_partition(p) == "[[1,2],[3]]"


@pytest.mark.parametrize("literal", ["[[1,2],[3]", "[1,2]", "[]", '[["a"]]'])
def test_malformed_literals(literal):
    with pytest.raises(RejectedInputError):
        parse_partition(literal)

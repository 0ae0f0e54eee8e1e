"""Partition type, refinement lattice, thresholded components, enumeration."""

import numpy as np
import pytest

from blockshap.partition import (
    Partition,
    UnionFind,
    components_of_threshold,
    enumerate_partitions,
    meet,
    penalty,
    refines,
    same_group,
)


def random_partition(rng, p):
    labels = rng.integers(0, rng.integers(1, p + 1), size=p)
    return Partition.from_labels(labels)


def coarsen(rng, b):
    """Randomly merge groups of b, producing a partition it refines."""
    k = b.n_groups
    merge_into = rng.integers(0, max(1, k - 1), size=k)
    buckets = {}
    for gid, g in enumerate(b.groups):
        buckets.setdefault(int(merge_into[gid]), []).extend(g)
    return Partition.from_groups(b.p, buckets.values())


def refines_oracle(b, b2):
    """Definition-based check: every group of b2 is a union of groups of b."""
    fine = [set(g) for g in b.groups]
    for coarse in map(set, b2.groups):
        covered = set()
        for g in fine:
            if g <= coarse:
                covered |= g
            elif g & coarse:
                return False
        if covered != coarse:
            return False
    return True


class TestPartitionType:
    def test_canonical_construction(self):
        b = Partition.from_groups(5, [[4, 2], [0, 3], [1]])
        assert b.groups == ((0, 3), (1,), (2, 4))

    def test_rejects_overlap(self):
        with pytest.raises(ValueError):
            Partition(3, ((0, 1), (1, 2)))

    def test_rejects_gap(self):
        with pytest.raises(ValueError):
            Partition(4, ((0, 1), (3,)))

    def test_rejects_unsorted_group(self):
        with pytest.raises(ValueError):
            Partition(3, ((1, 0), (2,)))

    def test_rejects_non_canonical_order(self):
        with pytest.raises(ValueError):
            Partition(3, ((2,), (0, 1)))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Partition(3, ((0, 1), (2, 3)))

    def test_line_round_trip(self):
        b = Partition.from_groups(5, [[0, 1], [2, 3, 4]])
        assert b.to_line() == "1,2;3,4,5"
        assert Partition.from_line(b.to_line()) == b

    def test_from_line_rejects_bad_cover(self):
        with pytest.raises(ValueError):
            Partition.from_line("1,2;4")
        with pytest.raises(ValueError):
            Partition.from_line("1,2;;3")

    def test_labels(self):
        b = Partition.from_groups(4, [[0, 2], [1, 3]])
        assert list(b.labels) == [0, 1, 0, 1]


class TestRefines:
    def test_singletons_refine_everything(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = int(rng.integers(1, 9))
            assert refines(Partition.singletons(p), random_partition(rng, p))

    def test_reflexive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            b = random_partition(rng, int(rng.integers(1, 9)))
            assert refines(b, b)

    def test_negative_example(self):
        b = Partition.from_groups(3, [[0, 1], [2]])
        b2 = Partition.from_groups(3, [[0, 2], [1]])
        assert not refines(b, b2)
        assert not refines(b2, b)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            refines(Partition.singletons(3), Partition.singletons(4))

    def test_matches_definition_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            p = int(rng.integers(1, 9))
            b, b2 = random_partition(rng, p), random_partition(rng, p)
            assert refines(b, b2) == refines_oracle(b, b2)

    def test_antisymmetric(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = int(rng.integers(1, 9))
            b, b2 = random_partition(rng, p), random_partition(rng, p)
            if refines(b, b2) and refines(b2, b):
                assert b == b2

    def test_transitive_on_chains(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            p = int(rng.integers(2, 9))
            b = random_partition(rng, p)
            b2 = coarsen(rng, b)
            b3 = coarsen(rng, b2)
            assert refines(b, b2) and refines(b2, b3)
            assert refines(b, b3)


class TestMeet:
    def test_idempotent(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            b = random_partition(rng, int(rng.integers(1, 9)))
            assert meet(b, b) == b

    def test_finer_argument_absorbs(self):
        whole = Partition.one_block(3)
        split = Partition.from_groups(3, [[0, 1], [2]])
        assert meet(whole, split) == split

    def test_pairwise_intersections(self):
        a = Partition.from_groups(4, [[0, 1], [2, 3]])
        b = Partition.from_groups(4, [[0, 2], [1, 3]])
        assert meet(a, b) == Partition.singletons(4)

    def test_greatest_lower_bound_exhaustive(self):
        # over all pairs at p = 4 and p = 5: meet refines both, and any
        # partition refining both refines the meet
        for p in (4, 5):
            everything = list(enumerate_partitions(p))
            for a in everything:
                for b in everything:
                    m = meet(a, b)
                    assert refines(m, a) and refines(m, b)
                    for c in everything:
                        if refines(c, a) and refines(c, b):
                            assert refines(c, m)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            meet(Partition.singletons(3), Partition.singletons(4))


class TestSameGroup:
    def test_examples(self):
        b = Partition.from_groups(3, [[0, 1], [2]])
        assert same_group(b, (0, 1))
        assert not same_group(b, (0, 2))
        assert same_group(b, (0,))

    def test_out_of_range(self):
        b = Partition.singletons(3)
        with pytest.raises(ValueError):
            same_group(b, (0, 3))


class TestComponentsOfThreshold:
    def test_identity_gives_singletons(self):
        assert components_of_threshold(np.eye(5), 0.0) == Partition.singletons(5)

    def test_threshold_one_gives_singletons(self):
        rng = np.random.default_rng(6)
        a = rng.uniform(-0.99, 0.99, size=(6, 6))
        c = (a + a.T) / 2
        np.fill_diagonal(c, 1.0)
        assert components_of_threshold(c, 1.0) == Partition.singletons(6)

    def test_two_pair_graph(self):
        c = np.full((4, 4), 0.1)
        np.fill_diagonal(c, 1.0)
        c[0, 1] = c[1, 0] = 0.9
        c[2, 3] = c[3, 2] = 0.5
        got = components_of_threshold(c, 0.3)
        assert got == Partition.from_groups(4, [[0, 1], [2, 3]])

    def test_strict_edge_rule(self):
        c = np.eye(2)
        c[0, 1] = c[1, 0] = 0.5
        assert components_of_threshold(c, 0.5, strict=True) == Partition.singletons(2)
        assert components_of_threshold(c, 0.5, strict=False) == Partition.one_block(2)

    def test_rejects_asymmetric(self):
        c = np.eye(3)
        c[0, 1] = 0.5
        with pytest.raises(ValueError):
            components_of_threshold(c, 0.1)

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            components_of_threshold(np.eye(2), 1.5)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            p = int(rng.integers(2, 10))
            a = rng.uniform(-1, 1, size=(p, p))
            c = (a + a.T) / 2
            np.fill_diagonal(c, 1.0)
            lam1, lam2 = sorted(rng.uniform(0, 1, size=2))
            finer = components_of_threshold(c, lam2)
            coarser = components_of_threshold(c, lam1)
            assert refines(finer, coarser)

    def test_matches_union_find(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            p = int(rng.integers(2, 12))
            a = rng.uniform(-1, 1, size=(p, p))
            c = (a + a.T) / 2
            np.fill_diagonal(c, 1.0)
            lam = float(rng.uniform(0, 1))
            uf = UnionFind(p)
            for i in range(p):
                for j in range(i + 1, p):
                    if abs(c[i, j]) > lam:
                        uf.union(i, j)
            assert uf.partition() == components_of_threshold(c, lam)


def bell_numbers(limit):
    """Bell numbers via the recurrence B(n+1) = sum_k C(n,k) B(k)."""
    from math import comb

    bell = [1]
    for n in range(limit):
        bell.append(sum(comb(n, k) * bell[k] for k in range(n + 1)))
    return bell[1:]


class TestEnumeratePartitions:
    def test_p1(self):
        assert list(enumerate_partitions(1)) == [Partition.one_block(1)]

    def test_counts_match_bell_recurrence(self):
        expected = bell_numbers(7)
        for p in range(1, 8):
            got = list(enumerate_partitions(p))
            assert len(got) == expected[p - 1]
            assert len(set(got)) == len(got)

    def test_partitions_are_canonical(self):
        for b in enumerate_partitions(5):
            assert b == Partition.from_groups(5, b.groups)

    def test_guard(self):
        with pytest.raises(ValueError, match="Bell"):
            next(enumerate_partitions(11))


class TestPenalty:
    def test_extremes(self):
        for p in (1, 3, 7):
            assert penalty(Partition.singletons(p)) == p
            assert penalty(Partition.one_block(p)) == p * p

    def test_direct_sum(self):
        assert penalty(Partition.from_groups(5, [[0, 1], [2, 3, 4]])) == 13

    def test_merging_increases(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            p = int(rng.integers(2, 10))
            b = random_partition(rng, p)
            if b.n_groups < 2:
                continue
            i, j = rng.choice(b.n_groups, size=2, replace=False)
            merged_groups = [
                g for k, g in enumerate(b.groups) if k not in (i, j)
            ] + [b.groups[i] + b.groups[j]]
            merged = Partition.from_groups(p, merged_groups)
            gain = penalty(merged) - penalty(b)
            assert gain == 2 * len(b.groups[i]) * len(b.groups[j])
            assert gain > 0

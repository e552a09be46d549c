import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbibp.distributions import (
    BnbParams,
    DigammaParams,
    bnb_log_pmf,
    digamma_log_pmf,
)
from nbibp.numerics import RngStream, digamma_fn
from nbibp.structures import (
    CombStruct,
    FeatureArray,
    Hyperparams,
    array_from_json,
    array_to_json,
    from_array,
    left_order,
    log_pmf_array,
    log_pmf_struct,
    ordering_count,
    project,
    struct_from_json,
    struct_to_json,
    uniform_label,
)
from nbibp.validation import gof_chi_square


def columns_strategy(n):
    entry = st.integers(min_value=0, max_value=3)
    col = st.tuples(*([entry] * n)).filter(any)
    return st.lists(col, min_size=0, max_size=4).map(tuple)


arrays = st.integers(min_value=1, max_value=4).flatmap(
    lambda n: columns_strategy(n).map(lambda cols: FeatureArray(n, cols))
)


class TestContainers:
    def test_empty_seed(self):
        arr = FeatureArray(0, ())
        assert arr.kappa == 0

    def test_zero_column_rejected(self):
        with pytest.raises(ValueError):
            FeatureArray(2, ((0, 0),))
        with pytest.raises(ValueError):
            CombStruct(2, {(0, 0): 1})

    def test_negative_and_fractional_entries_rejected(self):
        with pytest.raises(ValueError):
            FeatureArray(1, ((-1,),))
        with pytest.raises(ValueError):
            FeatureArray(1, ((1.5,),))

    def test_struct_needs_positive_rows_and_multiplicities(self):
        with pytest.raises(ValueError):
            CombStruct(0, {})
        with pytest.raises(ValueError):
            CombStruct(1, {(1,): 0})

    def test_matrix_round_trip(self):
        arr = FeatureArray(2, ((1, 0), (0, 2), (3, 1)))
        assert FeatureArray.from_matrix(arr.to_matrix()) == arr
        assert arr.to_matrix().shape == (2, 3)
        assert arr.column_sums() == (1, 2, 4)

    def test_collapse_counts_duplicates(self):
        arr = FeatureArray(2, ((1, 0), (1, 0), (0, 2)))
        struct = from_array(arr)
        assert struct.counts == {(1, 0): 2, (0, 2): 1}
        assert struct.kappa == 3

    def test_left_order_sorts(self):
        arr = FeatureArray(2, ((1, 0), (0, 2), (1, 0)))
        assert left_order(arr).columns == ((0, 2), (1, 0), (1, 0))

    def test_ordering_count_small(self):
        struct = CombStruct(2, {(1, 0): 2, (0, 2): 1})
        assert ordering_count(struct) == pytest.approx(math.log(3.0), rel=1e-14)
        assert ordering_count(CombStruct(1, {(2,): 1})) == 0.0


class TestHyperparams:
    def test_validation(self):
        with pytest.raises(ValueError):
            Hyperparams(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            Hyperparams(1.0, -2.0, 1.0)
        with pytest.raises(ValueError):
            Hyperparams(1.0, 1.0, 1.0, fixed_atoms=(1.0,))
        ok = Hyperparams(1.0, 1.0, 1.0, fixed_atoms=(0.5, 0.25))
        assert ok.fixed_atoms == (0.5, 0.25)

    def test_fixed_atoms_block_pmfs(self):
        hp = Hyperparams(1.0, 1.0, 1.0, fixed_atoms=(0.5,))
        with pytest.raises(ValueError):
            log_pmf_struct(CombStruct(1, {(1,): 1}), hp)
        with pytest.raises(ValueError):
            log_pmf_array(FeatureArray(1, ((1,),)), hp)


class TestPmfFrozenValues:
    def test_single_unit_column(self):
        hp = Hyperparams(1.0, 1.0, 1.0)
        got = log_pmf_struct(CombStruct(1, {(1,): 1}), hp)
        assert got == pytest.approx(math.log(math.exp(-1.0) / 2.0), rel=1e-13)

    def test_single_double_column(self):
        hp = Hyperparams(1.0, 2.0, 1.0)
        got = log_pmf_array(FeatureArray(1, ((2,),)), hp)
        assert got == pytest.approx(math.log(math.exp(-1.0) / 6.0), rel=1e-13)

    def test_empty_structure(self):
        hp = Hyperparams(1.0, 1.0, 1.0)
        got = log_pmf_struct(CombStruct(2, {}), hp)
        # minus c T (psi(c + 2r) - psi(c)) = -(1 + 1/2)
        assert got == pytest.approx(-1.5, rel=1e-13)

    def test_struct_equals_array_plus_orderings(self):
        hp = Hyperparams(1.3, 0.8, 2.0)
        arr = FeatureArray(3, ((1, 0, 2), (1, 0, 2), (0, 1, 0)))
        struct = from_array(arr)
        lhs = log_pmf_struct(struct, hp)
        rhs = log_pmf_array(arr, hp) + ordering_count(struct)
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestPmfInvariances:
    HP = Hyperparams(1.5, 0.7, 1.2)

    @given(arrays)
    @settings(max_examples=60, deadline=None)
    def test_column_order_irrelevant(self, arr):
        base = log_pmf_array(arr, self.HP)
        flipped = FeatureArray(arr.n, arr.columns[::-1])
        assert log_pmf_array(flipped, self.HP) == pytest.approx(base, abs=1e-12)

    @given(arrays, st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_row_order_irrelevant(self, arr, rnd):
        perm = list(range(arr.n))
        rnd.shuffle(perm)
        permuted = FeatureArray(arr.n, tuple(tuple(col[i] for i in perm) for col in arr.columns))
        assert log_pmf_array(permuted, self.HP) == pytest.approx(
            log_pmf_array(arr, self.HP), abs=1e-12
        )

    @given(arrays)
    @settings(max_examples=60, deadline=None)
    def test_struct_array_relation(self, arr):
        struct = from_array(arr)
        assert log_pmf_struct(struct, self.HP) == pytest.approx(
            log_pmf_array(arr, self.HP) + ordering_count(struct), abs=1e-12
        )


class TestEnumerationOracles:
    def test_single_row_marked_poisson(self):
        # With one row, mass-z columns arrive as a thinned Poisson field:
        # P(multiset of size k, masses <= Z summed) = Pois(k; lam) q^k with
        # lam = c T (psi(c+r) - psi(c)) and q the head mass of the count law.
        r, c, T = 1.5, 2.0, 0.7
        hp = Hyperparams(r, c, T)
        lam = c * T * (digamma_fn(c + r) - digamma_fn(c))
        params = DigammaParams(r, c)
        zmax, kmax = 6, 4
        q = sum(math.exp(digamma_log_pmf(params, z)) for z in range(1, zmax + 1))
        for k in range(kmax + 1):
            total = 0.0
            for masses in itertools.combinations_with_replacement(range(1, zmax + 1), k):
                counts = {}
                for z in masses:
                    counts[(z,)] = counts.get((z,), 0) + 1
                total += math.exp(log_pmf_struct(CombStruct(1, counts), hp))
            want = math.exp(-lam) * lam**k / math.factorial(k) * q**k
            assert total == pytest.approx(want, rel=1e-12), k

    def test_two_row_path_sum(self):
        # Sequential-construction oracle: columns first seen in row 1 carry
        # the concentration-c count law and then grow by a (r, h1, c+r)
        # beta-mixed count; columns first seen in row 2 carry the
        # concentration-(c+r) count law; each round is a marked Poisson
        # multiset.  The struct determines each column's round, so its
        # probability is a single product of both rounds' multiset laws.
        r, c, T = 1.0, 2.0, 0.7
        hp = Hyperparams(r, c, T)
        lam1 = c * T * (digamma_fn(c + r) - digamma_fn(c))
        lam2 = c * T * (digamma_fn(c + 2 * r) - digamma_fn(c + r))
        cases = [
            {(1, 1): 1},
            {(2, 0): 1, (0, 1): 1},
            {(1, 0): 2, (0, 2): 1},
            {(1, 2): 1, (1, 0): 1, (0, 1): 2},
        ]
        for counts in cases:
            struct = CombStruct(2, counts)
            first = {h: m for h, m in counts.items() if h[0] > 0}
            second = {h: m for h, m in counts.items() if h[0] == 0}
            k1, k2 = sum(first.values()), sum(second.values())
            # Pois(k; lam) k!/prod m! prod pmf^m: the k! cancels, leaving
            # e^{-lam} lam^k prod (pmf^m / m!) per round.
            logp = -lam1 - lam2 + k1 * math.log(lam1) + k2 * math.log(lam2)
            for (h1, h2), m in first.items():
                one = digamma_log_pmf(DigammaParams(r, c), h1) + bnb_log_pmf(
                    BnbParams(r, float(h1), c + r), h2
                )
                logp += m * one - math.lgamma(m + 1)
            for (_, h2), m in second.items():
                logp += m * digamma_log_pmf(DigammaParams(r, c + r), h2) - math.lgamma(m + 1)
            assert log_pmf_struct(struct, hp) == pytest.approx(logp, abs=1e-12), counts


class TestProjection:
    def test_hand_examples(self):
        three = CombStruct(3, {(1, 0, 2): 1, (0, 1, 0): 2})
        assert project(three, 2) == CombStruct(2, {(1, 0): 1, (0, 1): 2})
        assert project(three, 1) == CombStruct(1, {(1,): 1})
        assert project(three, 3) == three

    def test_range_checks(self):
        one = CombStruct(1, {(1,): 1})
        for bad in (0, 2, 1.5):
            with pytest.raises(ValueError):
                project(one, bad)


class TestLabeling:
    def test_round_trip(self):
        struct = CombStruct(2, {(1, 0): 2, (0, 2): 1, (1, 1): 1})
        rng = RngStream(3, 0)
        for _ in range(20):
            arr = uniform_label(struct, rng)
            assert from_array(arr) == struct

    def test_orderings_uniform(self):
        struct = CombStruct(2, {(1, 0): 1, (0, 1): 1, (1, 1): 1})
        rng = RngStream(4, 0)
        reps = 6000
        seen = {}
        for _ in range(reps):
            key = uniform_label(struct, rng).columns
            seen[key] = seen.get(key, 0) + 1
        assert len(seen) == 6
        p, cells, _ = gof_chi_square(seen, lambda _: 1.0 / 6.0, reps)
        assert cells == 6
        assert p > 1e-3


class TestSerialization:
    def test_known_forms(self):
        arr = FeatureArray(2, ((1, 0), (0, 2)))
        assert array_to_json(arr) == '{"columns":[[1,0],[0,2]],"kind":"array","n":2}'
        struct = CombStruct(2, {(0, 2): 1, (1, 0): 2})
        text = struct_to_json(struct)
        assert struct_from_json(text) == struct

    @given(arrays)
    @settings(max_examples=60, deadline=None)
    def test_array_round_trip(self, arr):
        text = array_to_json(arr)
        again = array_from_json(text)
        assert again == arr
        assert array_to_json(again) == text

    @given(arrays)
    @settings(max_examples=60, deadline=None)
    def test_struct_round_trip(self, arr):
        struct = from_array(arr)
        text = struct_to_json(struct)
        again = struct_from_json(text)
        assert again == struct
        assert struct_to_json(again) == text

    def test_malformed_rejected(self):
        with pytest.raises((ValueError, KeyError)):
            array_from_json('{"kind":"struct","n":1,"counts":[]}')
        with pytest.raises(ValueError):
            array_from_json('{"kind":"array","n":2,"columns":[[0,0]]}')

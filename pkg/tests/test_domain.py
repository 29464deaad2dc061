"""Valuation math: tree validation, utility bands, payoffs, conversions."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parley.domain import (
    AttributeNode,
    DomainError,
    DuplicateNodeId,
    EmptyNonLeaf,
    IssueValuation,
    NonFunctionalAttribute,
    NonPositiveWeight,
    ProductSpec,
    derive_default_valuations,
    multiplier_product,
    payoff_bounds,
    price_at_utility,
    utility_band,
    validate_tree,
)

from conftest import flat_tree, leaf


def nf(*multipliers: float) -> list[NonFunctionalAttribute]:
    return [NonFunctionalAttribute(f"nf{i}", m) for i, m in enumerate(multipliers)]


class TestValidateTree:
    def test_single_leaf(self):
        assert validate_tree(leaf("a")) == ["a"]

    def test_flat_tree_depth_first_order(self):
        assert validate_tree(flat_tree("a", "b", "c")) == ["a", "b", "c"]

    def test_nested_tree_child_order(self):
        tree = AttributeNode("root", children=(
            AttributeNode("mid", children=(leaf("a"), leaf("b"))),
            leaf("c"),
        ))
        assert validate_tree(tree) == ["a", "b", "c"]

    def test_duplicate_node_id(self):
        tree = AttributeNode("root", children=(leaf("a"), leaf("a")))
        with pytest.raises(DuplicateNodeId):
            validate_tree(tree)

    def test_duplicate_across_levels(self):
        tree = AttributeNode("root", children=(leaf("root"),))
        with pytest.raises(DuplicateNodeId):
            validate_tree(tree)

    def test_empty_non_leaf(self):
        tree = AttributeNode("root", children=(AttributeNode("mid", children=()),))
        with pytest.raises(EmptyNonLeaf):
            validate_tree(tree)

    def test_non_positive_weight(self):
        with pytest.raises(NonPositiveWeight):
            validate_tree(flat_tree("a", weights={"a": 0.0}))


class TestValuationInvariants:
    def test_margin_below_actual_rejected(self):
        with pytest.raises(DomainError):
            IssueValuation("a", 100.0, 90.0)

    def test_negative_actual_rejected(self):
        with pytest.raises(DomainError):
            IssueValuation("a", -1.0, 10.0)

    def test_zero_weight_rejected(self):
        with pytest.raises(NonPositiveWeight):
            IssueValuation("a", 1.0, 2.0, weight=0.0)

    def test_non_positive_multiplier_rejected(self):
        with pytest.raises(DomainError):
            NonFunctionalAttribute("ease", 0.0)

    def test_product_valuations_must_cover_leaves(self):
        with pytest.raises(DomainError):
            ProductSpec("P", "P", flat_tree("a", "b"),
                        valuations={"a": IssueValuation("a", 1.0, 2.0)})


class TestUtilityBand:
    def test_empty_multipliers_identity(self):
        band = utility_band(IssueValuation("a", 100.0, 150.0), [])
        assert band.u_min == 100.0 and band.u_max == 150.0

    def test_two_multipliers(self):
        # oracle: direct product of the multipliers times each cost
        expected_min = 1.2 * 0.9 * 100.0
        expected_max = 1.2 * 0.9 * 150.0
        band = utility_band(IssueValuation("a", 100.0, 150.0), nf(1.2, 0.9))
        assert band.u_min == pytest.approx(expected_min, rel=1e-9)
        assert band.u_max == pytest.approx(expected_max, rel=1e-9)
        assert band.u_min == pytest.approx(108.0, rel=1e-9)
        assert band.u_max == pytest.approx(162.0, rel=1e-9)

    def test_zero_actual_cost(self):
        band = utility_band(IssueValuation("a", 0.0, 50.0), nf(2.0))
        assert band.u_min == 0.0
        assert band.u_max == pytest.approx(100.0, rel=1e-9)

    @given(
        actual=st.floats(0.0, 1e6),
        extra=st.floats(0.0, 1e6),
        mult=st.floats(0.1, 10.0),
        bump=st.floats(0.0, 5.0),
    )
    def test_monotone_in_costs_and_multipliers(self, actual, extra, mult, bump):
        low = utility_band(IssueValuation("a", actual, actual + extra), nf(mult))
        higher_cost = utility_band(
            IssueValuation("a", actual + bump, actual + extra + bump), nf(mult))
        higher_mult = utility_band(
            IssueValuation("a", actual, actual + extra), nf(mult + bump))
        assert higher_cost.u_min >= low.u_min and higher_cost.u_max >= low.u_max
        assert higher_mult.u_min >= low.u_min and higher_mult.u_max >= low.u_max


class TestPayoffBounds:
    def test_singleton(self):
        from parley.domain import UtilityBand

        assert payoff_bounds([UtilityBand(108.0, 162.0)]) == (108.0, 162.0)

    def test_two_bands_sum(self):
        from parley.domain import UtilityBand

        low, high = payoff_bounds([UtilityBand(108.0, 162.0), UtilityBand(50.0, 80.0)])
        assert low == pytest.approx(158.0, rel=1e-9)
        assert high == pytest.approx(242.0, rel=1e-9)

    def test_all_zero(self):
        from parley.domain import UtilityBand

        assert payoff_bounds([UtilityBand(0.0, 0.0)] * 3) == (0.0, 0.0)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            payoff_bounds([])

    @given(st.lists(st.tuples(st.floats(0, 1e6), st.floats(0, 1e6)), min_size=1,
                    max_size=8))
    def test_permutation_invariant_and_additive(self, pairs):
        from parley.domain import UtilityBand

        bands = [UtilityBand(min(a, b), max(a, b)) for a, b in pairs]
        low, high = payoff_bounds(bands)
        rng = random.Random(0)
        shuffled = bands[:]
        rng.shuffle(shuffled)
        low2, high2 = payoff_bounds(shuffled)
        assert low2 == pytest.approx(low, rel=1e-9, abs=1e-9)
        assert high2 == pytest.approx(high, rel=1e-9, abs=1e-9)
        # additivity over concatenation
        half = len(bands) // 2
        if half and len(bands) - half:
            l1, h1 = payoff_bounds(bands[:half])
            l2, h2 = payoff_bounds(bands[half:])
            assert l1 + l2 == pytest.approx(low, rel=1e-9, abs=1e-9)
            assert h1 + h2 == pytest.approx(high, rel=1e-9, abs=1e-9)


class TestPriceAtUtility:
    def test_inverse_of_band_example(self):
        assert price_at_utility(162.0, nf(1.2, 0.9)) == pytest.approx(150.0, rel=1e-9)

    def test_identity_with_no_multipliers(self):
        assert price_at_utility(100.0, []) == 100.0

    def test_zero_utility(self):
        assert price_at_utility(0.0, nf(2.0)) == 0.0

    def test_round_trip_with_band(self):
        valuation = IssueValuation("a", 37.5, 412.25)
        attrs = nf(1.7, 0.4, 2.2)
        band = utility_band(valuation, attrs)
        assert price_at_utility(band.u_max, attrs) == pytest.approx(
            valuation.cost_with_margin, rel=1e-9)
        assert price_at_utility(band.u_min, attrs) == pytest.approx(
            valuation.actual_cost, rel=1e-9)

    @given(
        actual=st.floats(0.0, 1e6),
        extra=st.floats(0.0, 1e6),
        mults=st.lists(st.floats(0.1, 5.0), max_size=4),
    )
    def test_round_trip_property(self, actual, extra, mults):
        valuation = IssueValuation("a", actual, actual + extra)
        attrs = nf(*mults)
        band = utility_band(valuation, attrs)
        back = price_at_utility(band.u_max, attrs)
        assert math.isclose(back, valuation.cost_with_margin,
                            rel_tol=1e-9, abs_tol=1e-9)


class TestDeriveDefaultValuations:
    def test_equal_division(self):
        # oracle: divide both totals by the attribute count
        result = derive_default_valuations(100.0, 200.0, ["a", "b"])
        for leaf_id in ("a", "b"):
            assert result[leaf_id].actual_cost == pytest.approx(50.0, rel=1e-9)
            assert result[leaf_id].cost_with_margin == pytest.approx(100.0, rel=1e-9)
            assert result[leaf_id].weight == 1.0

    def test_single_attribute_equal_bounds(self):
        result = derive_default_valuations(100.0, 100.0, ["a"])
        assert result["a"].actual_cost == 100.0
        assert result["a"].cost_with_margin == 100.0

    def test_zero_minimum(self):
        result = derive_default_valuations(0.0, 90.0, ["a", "b", "c"])
        for v in result.values():
            assert v.actual_cost == 0.0
            assert v.cost_with_margin == pytest.approx(30.0, rel=1e-9)

    def test_inverted_bounds_rejected(self):
        with pytest.raises(DomainError):
            derive_default_valuations(200.0, 100.0, ["a"])

    def test_no_leaves_rejected(self):
        with pytest.raises(DomainError):
            derive_default_valuations(0.0, 10.0, [])

    @given(total_min=st.floats(0, 1e6), extra=st.floats(0, 1e6),
           n=st.integers(1, 12))
    def test_sums_reproduce_totals(self, total_min, extra, n):
        total_max = total_min + extra
        result = derive_default_valuations(total_min, total_max,
                                           [f"l{i}" for i in range(n)])
        assert math.isclose(sum(v.actual_cost for v in result.values()),
                            total_min, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(sum(v.cost_with_margin for v in result.values()),
                            total_max, rel_tol=1e-9, abs_tol=1e-9)


def test_multiplier_product_empty_is_one():
    assert multiplier_product([]) == 1.0

"""Valuation math for negotiable products.

A product's negotiable issues are the leaves of a hierarchical attribute
tree.  Each party values a leaf with an actual cost (its floor) and a cost
with margin (its ceiling); the product-wide quality multipliers scale a
price into a utility.  Everything here is a pure function over immutable
values, so results can move freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence


class DomainError(ValueError):
    """Invalid attribute tree or valuation input."""


class DuplicateNodeId(DomainError):
    """The same node id occurs twice in one attribute tree."""


class EmptyNonLeaf(DomainError):
    """An internal node declares a child list but it is empty."""


class NonPositiveWeight(DomainError):
    """A leaf carries a zero or negative weight."""


@dataclass(frozen=True)
class AttributeNode:
    """Node of the issue hierarchy.

    A node with ``children is None`` is a leaf, i.e. a negotiable issue.
    An explicit empty child tuple marks a malformed internal node and is
    rejected by :func:`validate_tree`.
    """

    node_id: str
    name: str = ""
    children: tuple["AttributeNode", ...] | None = None
    weight: float = 1.0

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass(frozen=True)
class NonFunctionalAttribute:
    """Product-wide quality factor folded multiplicatively into every issue."""

    name: str
    multiplier: float

    def __post_init__(self) -> None:
        if self.multiplier <= 0:
            raise DomainError(
                f"non-functional attribute {self.name!r} needs a positive "
                f"multiplier, got {self.multiplier}"
            )


@dataclass(frozen=True)
class IssueValuation:
    """One party's pricing of a single issue.

    ``actual_cost`` is the floor (expenses incurred), ``cost_with_margin``
    the ceiling (floor plus profit), ``weight`` the issue's relative
    importance to this party.
    """

    leaf_id: str
    actual_cost: float
    cost_with_margin: float
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.actual_cost < 0:
            raise DomainError(f"{self.leaf_id}: actual_cost must be >= 0")
        if self.cost_with_margin < self.actual_cost:
            raise DomainError(
                f"{self.leaf_id}: cost_with_margin {self.cost_with_margin} "
                f"below actual_cost {self.actual_cost}"
            )
        if self.weight <= 0:
            raise NonPositiveWeight(f"{self.leaf_id}: weight {self.weight}")


@dataclass(frozen=True)
class UtilityBand:
    """Closed utility interval [u_min, u_max] for one issue."""

    u_min: float
    u_max: float

    def __post_init__(self) -> None:
        if self.u_min > self.u_max:
            raise DomainError(f"utility band inverted: {self.u_min} > {self.u_max}")

    @property
    def gap(self) -> float:
        return self.u_max - self.u_min

    def clamp(self, utility: float) -> float:
        return min(max(utility, self.u_min), self.u_max)


def validate_tree(root: AttributeNode) -> list[str]:
    """Return leaf ids in depth-first child order, rejecting malformed trees."""
    seen: set[str] = set()
    leaves: list[str] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.node_id in seen:
            raise DuplicateNodeId(node.node_id)
        seen.add(node.node_id)
        if node.is_leaf:
            if node.weight <= 0:
                raise NonPositiveWeight(f"{node.node_id}: weight {node.weight}")
            leaves.append(node.node_id)
        else:
            if not node.children:
                raise EmptyNonLeaf(node.node_id)
            stack.extend(reversed(node.children))
    return leaves


@dataclass
class ProductSpec:
    """A product, its issue tree, quality multipliers, and reference valuations."""

    product_id: str
    product_name: str
    tree: AttributeNode
    non_functional: tuple[NonFunctionalAttribute, ...] = ()
    valuations: dict[str, IssueValuation] = field(default_factory=dict)
    leaves: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        self.leaves = tuple(validate_tree(self.tree))
        if self.valuations and set(self.valuations) != set(self.leaves):
            raise DomainError(
                f"product {self.product_id}: valuations must cover exactly the "
                f"tree leaves {sorted(self.leaves)}, got {sorted(self.valuations)}"
            )


def multiplier_product(non_functional: Iterable[NonFunctionalAttribute]) -> float:
    """Product of all quality multipliers; 1.0 for the empty list."""
    out = 1.0
    for attribute in non_functional:
        out *= attribute.multiplier
    return out


def utility_band(
    valuation: IssueValuation,
    non_functional: Sequence[NonFunctionalAttribute] = (),
) -> UtilityBand:
    """Band between the scaled actual cost and the scaled cost with margin."""
    factor = multiplier_product(non_functional)
    return UtilityBand(factor * valuation.actual_cost, factor * valuation.cost_with_margin)


def payoff_bounds(bands: Iterable[UtilityBand]) -> tuple[float, float]:
    """Element-wise sums of band bounds: (minimum payoff, maximum payoff)."""
    bands = list(bands)
    if not bands:
        raise DomainError("payoff_bounds needs at least one band")
    return sum(b.u_min for b in bands), sum(b.u_max for b in bands)


def price_at_utility(
    utility: float,
    non_functional: Sequence[NonFunctionalAttribute] = (),
) -> float:
    """Invert the utility scaling: the price whose utility equals ``utility``."""
    factor = multiplier_product(non_functional)
    if factor <= 0:
        raise DomainError("multiplier product must be positive to invert")
    return utility / factor


def derive_default_valuations(
    total_min: float,
    total_max: float,
    leaf_ids: Sequence[str],
) -> dict[str, IssueValuation]:
    """Split overall cost bounds evenly across issues with uniform weight.

    Used for parties that only know their overall minimum and maximum cost.
    """
    if not leaf_ids:
        raise DomainError("at least one leaf required")
    if total_min > total_max:
        raise DomainError(f"total_min {total_min} exceeds total_max {total_max}")
    if total_min < 0:
        raise DomainError("total_min must be >= 0")
    n = len(leaf_ids)
    return {
        leaf: IssueValuation(leaf, total_min / n, total_max / n, 1.0)
        for leaf in leaf_ids
    }


def uniform_weights(leaf_ids: Sequence[str]) -> dict[str, float]:
    """The default weighting: every issue equally important."""
    return {leaf: 1.0 for leaf in leaf_ids}


__all__ = [
    "AttributeNode",
    "DomainError",
    "DuplicateNodeId",
    "EmptyNonLeaf",
    "IssueValuation",
    "NonFunctionalAttribute",
    "NonPositiveWeight",
    "ProductSpec",
    "UtilityBand",
    "derive_default_valuations",
    "multiplier_product",
    "payoff_bounds",
    "price_at_utility",
    "uniform_weights",
    "utility_band",
    "validate_tree",
]

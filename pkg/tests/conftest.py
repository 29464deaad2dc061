"""Shared builders and randomized scenario generators."""

from __future__ import annotations

import random

import pytest

from parley.domain import (
    AttributeNode,
    IssueValuation,
    NonFunctionalAttribute,
    ProductSpec,
)
from parley.repository import AgentRecord, Role
from parley.scenario import Scenario, scenario_from_dict


def leaf(node_id: str, weight: float = 1.0) -> AttributeNode:
    return AttributeNode(node_id=node_id, name=node_id, weight=weight)


def flat_tree(*leaf_ids: str, weights: dict[str, float] | None = None) -> AttributeNode:
    weights = weights or {}
    return AttributeNode(
        node_id="root",
        name="root",
        children=tuple(leaf(l, weights.get(l, 1.0)) for l in leaf_ids),
    )


def make_product(product_id: str = "P1", leaf_ids: tuple[str, ...] = ("price",),
                 multipliers: tuple[float, ...] = ()) -> ProductSpec:
    return ProductSpec(
        product_id=product_id,
        product_name=product_id,
        tree=flat_tree(*leaf_ids),
        non_functional=tuple(
            NonFunctionalAttribute(f"nf{i}", m) for i, m in enumerate(multipliers)
        ),
    )


def make_agent(agent_id: str, role: Role, allies: bool = False,
               priority: int = 0) -> AgentRecord:
    return AgentRecord(agent_id=agent_id, name=agent_id,
                       address=f"local:{agent_id}", role=role,
                       allies=allies, priority=priority)


def valuations_for(leaf_ids, floors, ceilings, weights=None):
    weights = weights or {}
    return {
        leaf: IssueValuation(leaf, floors[i], ceilings[i],
                             weights.get(leaf, 1.0))
        for i, leaf in enumerate(leaf_ids)
    }


def simple_scenario_doc(round_limit: int = 50, seed: int = 7) -> dict:
    """1 product, 1 seller, 1 buyer, overlapping bands."""
    return {
        "products": [
            {"product_id": "P1", "product_name": "Widget",
             "tree": {"node_id": "root", "children": [
                 {"node_id": "price", "weight": 1.0},
                 {"node_id": "support", "weight": 2.0}]},
             "non_functional": [{"name": "ease", "multiplier": 1.2}]},
        ],
        "agents": [
            {"agent_id": "S1", "role": "seller", "product_id": "P1",
             "valuations": {
                 "price": {"actual_cost": 100, "cost_with_margin": 150},
                 "support": {"actual_cost": 20, "cost_with_margin": 40}}},
            {"agent_id": "B1", "role": "buyer", "product_id": "P1",
             "total_min": 100, "total_max": 260},
        ],
        "config": {"round_limit": round_limit, "seed": seed, "max_parties": 8},
    }


@pytest.fixture
def simple_scenario() -> Scenario:
    return scenario_from_dict(simple_scenario_doc())


# -- randomized generators -------------------------------------------------------


def random_issue_pair(rng: random.Random, overlap: bool) -> tuple[tuple[float, float],
                                                                  tuple[float, float]]:
    """(seller (floor, ceiling), buyer (floor, ceiling)) price bands per issue.

    Buyer floors stay strictly positive: a zero target price is a fixed
    point of the multiplicative concession rule, so a zero-opening buyer
    can never raise its bid (and its zero bids freeze the seller's
    penalty too).
    """
    seller_floor = rng.uniform(5.0, 100.0)
    seller_ceiling = seller_floor + rng.uniform(5.0, 100.0)
    if overlap:
        buyer_ceiling = seller_floor + rng.uniform(1.0, 80.0)
    else:
        buyer_ceiling = max(0.5, seller_floor - rng.uniform(1.0, 30.0))
    buyer_floor = buyer_ceiling * rng.uniform(0.05, 0.9)
    return (seller_floor, seller_ceiling), (buyer_floor, buyer_ceiling)


def bilateral_scenario_doc(rng: random.Random, n_issues: int, overlap: bool,
                           round_limit: int = 200) -> dict:
    """One seller and one buyer over n issues, bands drawn per ``overlap``."""
    leaf_ids = [f"i{k}" for k in range(n_issues)]
    multipliers = [{"name": f"nf{k}", "multiplier": rng.uniform(0.8, 1.3)}
                   for k in range(rng.randint(0, 2))]
    seller_vals = {}
    buyer_vals = {}
    for leaf_id in leaf_ids:
        (s_floor, s_ceiling), (b_floor, b_ceiling) = random_issue_pair(rng, overlap)
        seller_vals[leaf_id] = {"actual_cost": s_floor, "cost_with_margin": s_ceiling,
                                "weight": rng.uniform(0.5, 4.0)}
        buyer_vals[leaf_id] = {"actual_cost": b_floor, "cost_with_margin": b_ceiling,
                               "weight": rng.uniform(0.5, 4.0)}
    return {
        "products": [{"product_id": "P", "product_name": "P",
                      "tree": {"node_id": "root",
                               "children": [{"node_id": l} for l in leaf_ids]},
                      "non_functional": multipliers}],
        "agents": [
            {"agent_id": "S", "role": "seller", "product_id": "P",
             "valuations": seller_vals},
            {"agent_id": "B", "role": "buyer", "product_id": "P",
             "valuations": buyer_vals},
        ],
        "config": {"round_limit": round_limit, "seed": rng.randrange(2**31),
                   "max_parties": 8},
    }


def multi_seller_scenario_doc(rng: random.Random, n_sellers: int,
                              round_limit: int = 120) -> dict:
    """One buyer against several sellers, all with overlapping bands."""
    n_issues = rng.randint(1, 3)
    leaf_ids = [f"i{k}" for k in range(n_issues)]
    buyer_vals = {}
    anchors = {}
    for leaf_id in leaf_ids:
        floor = rng.uniform(20.0, 60.0)
        ceiling = floor + rng.uniform(40.0, 120.0)
        buyer_vals[leaf_id] = {"actual_cost": floor, "cost_with_margin": ceiling}
        anchors[leaf_id] = ceiling
    agents = [{"agent_id": "B", "role": "buyer", "product_id": "P",
               "valuations": buyer_vals}]
    for s in range(n_sellers):
        vals = {}
        for leaf_id in leaf_ids:
            floor = rng.uniform(5.0, anchors[leaf_id] * 0.8)
            vals[leaf_id] = {"actual_cost": floor,
                             "cost_with_margin": floor + rng.uniform(10.0, 80.0)}
        agents.append({"agent_id": f"S{s}", "role": "seller", "product_id": "P",
                       "valuations": vals})
    return {
        "products": [{"product_id": "P", "product_name": "P",
                      "tree": {"node_id": "root",
                               "children": [{"node_id": l} for l in leaf_ids]}}],
        "agents": agents,
        "config": {"round_limit": round_limit, "seed": rng.randrange(2**31),
                   "max_parties": 16},
    }


def market_scenario_doc(rng: random.Random) -> dict:
    """Small mixed marketplace for determinism and replay checks."""
    n_products = rng.randint(1, 2)
    products = []
    agents = []
    for p in range(n_products):
        n_issues = rng.randint(1, 3)
        leaf_ids = [f"p{p}i{k}" for k in range(n_issues)]
        products.append({"product_id": f"P{p}", "product_name": f"P{p}",
                         "tree": {"node_id": f"root{p}",
                                  "children": [{"node_id": l} for l in leaf_ids]}})
        n_sellers = rng.randint(1, 2)
        n_buyers = rng.randint(1, 2)
        for s in range(n_sellers):
            vals = {}
            for leaf_id in leaf_ids:
                floor = rng.uniform(10.0, 80.0)
                vals[leaf_id] = {"actual_cost": floor,
                                 "cost_with_margin": floor + rng.uniform(10.0, 60.0)}
            agents.append({"agent_id": f"P{p}S{s}", "role": "seller",
                           "product_id": f"P{p}", "valuations": vals,
                           "validity": rng.randint(3, 8)})
        for b in range(n_buyers):
            total_min = rng.uniform(0.0, 40.0) * n_issues
            total_max = total_min + rng.uniform(60.0, 160.0) * n_issues
            agents.append({"agent_id": f"P{p}B{b}", "role": "buyer",
                           "product_id": f"P{p}",
                           "total_min": total_min, "total_max": total_max,
                           "validity": rng.randint(3, 8)})
    return {
        "products": products,
        "agents": agents,
        "config": {"round_limit": rng.choice([40, 60, 80]),
                   "seed": rng.randrange(2**31),
                   "max_parties": rng.choice([4, 6, 8]),
                   "queue_policy": rng.choice(["fcfs", "priority"])},
    }

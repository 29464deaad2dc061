"""Scenario files: the declarative input of a simulation run.

A scenario lists products (with their issue trees and quality
multipliers), agents (with valuations or just overall cost bounds), and
the run configuration.  Agents that give only total_min/total_max get
their valuations derived by equal division; missing weights default to
uniform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .domain import (
    DomainError,
    IssueValuation,
    NonFunctionalAttribute,
    ProductSpec,
    derive_default_valuations,
)
from .matcher import QueuePolicy
from .repository import AgentRecord, Role, tree_from_dict, tree_to_dict


class ScenarioError(Exception):
    pass


DEFAULT_AD_VALIDITY = 10


@dataclass
class AgentSetup:
    """One participant: registry record plus its private valuation inputs."""

    record: AgentRecord
    product_id: str
    valuations: dict[str, IssueValuation]
    validity: int = DEFAULT_AD_VALIDITY
    strategy: str = "linear"


@dataclass
class SimConfig:
    max_parties: int = 8
    queue_policy: QueuePolicy = QueuePolicy.FCFS
    round_limit: int = 50
    seed: int = 0
    max_internal_rounds: int = 64


@dataclass
class Scenario:
    products: list[ProductSpec]
    agents: list[AgentSetup]
    config: SimConfig = field(default_factory=SimConfig)

    def product(self, product_id: str) -> ProductSpec:
        for product in self.products:
            if product.product_id == product_id:
                return product
        raise ScenarioError(f"unknown product {product_id}")


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        products = [_product_from_dict(entry) for entry in data.get("products", [])]
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad product: {exc}") from exc
    if not products:
        raise ScenarioError("scenario needs at least one product")
    by_id = {p.product_id: p for p in products}
    if len(by_id) != len(products):
        raise ScenarioError("duplicate product ids")

    agents = []
    seen_agents: set[str] = set()
    for entry in data.get("agents", []):
        agent = _agent_from_dict(entry, by_id)
        if agent.record.agent_id in seen_agents:
            raise ScenarioError(f"duplicate agent id {agent.record.agent_id}")
        seen_agents.add(agent.record.agent_id)
        agents.append(agent)
    if not agents:
        raise ScenarioError("scenario needs at least one agent")

    config = _config_from_dict(data.get("config", {}))
    return Scenario(products=products, agents=agents, config=config)


def _product_from_dict(data: dict) -> ProductSpec:
    return ProductSpec(
        product_id=str(data["product_id"]),
        product_name=str(data.get("product_name", data["product_id"])),
        tree=tree_from_dict(data["tree"]),
        non_functional=tuple(
            NonFunctionalAttribute(str(a["name"]), float(a["multiplier"]))
            for a in data.get("non_functional", [])
        ),
    )


def _agent_from_dict(data: dict, products: dict[str, ProductSpec]) -> AgentSetup:
    try:
        agent_id = str(data["agent_id"])
        role = Role(str(data["role"]).lower())
        product_id = str(data["product_id"])
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"bad agent entry: {exc}") from exc
    if product_id not in products:
        raise ScenarioError(f"agent {agent_id} references unknown product {product_id}")
    product = products[product_id]

    record = AgentRecord(
        agent_id=agent_id,
        name=str(data.get("name", agent_id)),
        address=str(data.get("address", f"local:{agent_id}")),
        role=role,
        allies=bool(data.get("allies", False)),
        priority=int(data.get("priority", 0)),
    )

    weights = {str(k): float(v) for k, v in data.get("weights", {}).items()}
    raw_valuations = data.get("valuations")
    if raw_valuations is not None:
        valuations: dict[str, IssueValuation] = {}
        for leaf, entry in raw_valuations.items():
            if leaf not in product.leaves:
                raise ScenarioError(
                    f"agent {agent_id} values unknown issue {leaf} of {product_id}"
                )
            try:
                valuations[leaf] = IssueValuation(
                    leaf_id=leaf,
                    actual_cost=float(entry["actual_cost"]),
                    cost_with_margin=float(entry["cost_with_margin"]),
                    weight=float(entry.get("weight", weights.get(leaf, 1.0))),
                )
            except (DomainError, KeyError, TypeError, ValueError) as exc:
                raise ScenarioError(f"agent {agent_id}, issue {leaf}: {exc}") from exc
        missing = set(product.leaves) - set(valuations)
        if missing:
            raise ScenarioError(f"agent {agent_id} misses valuations for {sorted(missing)}")
    elif "total_min" in data and "total_max" in data:
        try:
            valuations = derive_default_valuations(
                float(data["total_min"]), float(data["total_max"]), product.leaves
            )
        except DomainError as exc:
            raise ScenarioError(f"agent {agent_id}: {exc}") from exc
        if weights:
            valuations = {
                leaf: replace(v, weight=weights.get(leaf, 1.0))
                for leaf, v in valuations.items()
            }
    else:
        raise ScenarioError(
            f"agent {agent_id} needs either valuations or total_min/total_max"
        )

    validity = int(data.get("validity", DEFAULT_AD_VALIDITY))
    if validity <= 0:
        raise ScenarioError(f"agent {agent_id}: validity must be > 0")
    return AgentSetup(
        record=record,
        product_id=product_id,
        valuations=valuations,
        validity=validity,
        strategy=str(data.get("strategy", "linear")),
    )


def _config_from_dict(data: dict) -> SimConfig:
    try:
        config = SimConfig(
            max_parties=int(data.get("max_parties", 8)),
            queue_policy=QueuePolicy(str(data.get("queue_policy", "fcfs")).lower()),
            round_limit=int(data.get("round_limit", 50)),
            seed=int(data.get("seed", 0)),
            max_internal_rounds=int(data.get("max_internal_rounds", 64)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad config: {exc}") from exc
    if config.max_parties <= 0:
        raise ScenarioError("max_parties must be positive")
    if config.round_limit < 0:
        raise ScenarioError("round_limit must be >= 0")
    return config


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "products": [
            {
                "product_id": p.product_id,
                "product_name": p.product_name,
                "tree": tree_to_dict(p.tree),
                "non_functional": [
                    {"name": a.name, "multiplier": a.multiplier}
                    for a in p.non_functional
                ],
            }
            for p in scenario.products
        ],
        "agents": [
            {
                "agent_id": a.record.agent_id,
                "name": a.record.name,
                "address": a.record.address,
                "role": a.record.role.value,
                "allies": a.record.allies,
                "priority": a.record.priority,
                "product_id": a.product_id,
                "validity": a.validity,
                "strategy": a.strategy,
                "valuations": {
                    leaf: {
                        "actual_cost": v.actual_cost,
                        "cost_with_margin": v.cost_with_margin,
                        "weight": v.weight,
                    }
                    for leaf, v in a.valuations.items()
                },
            }
            for a in scenario.agents
        ],
        "config": {
            "max_parties": scenario.config.max_parties,
            "queue_policy": scenario.config.queue_policy.value,
            "round_limit": scenario.config.round_limit,
            "seed": scenario.config.seed,
            "max_internal_rounds": scenario.config.max_internal_rounds,
        },
    }


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON in {path}: {exc}") from exc
    return scenario_from_dict(data)


def apply_overrides(
    scenario: Scenario,
    seed: int | None = None,
    max_parties: int | None = None,
    queue_policy: str | None = None,
    round_limit: int | None = None,
) -> Scenario:
    config = scenario.config
    if seed is not None:
        config = replace(config, seed=seed)
    if max_parties is not None:
        if max_parties <= 0:
            raise ScenarioError("max_parties must be positive")
        config = replace(config, max_parties=max_parties)
    if queue_policy is not None:
        try:
            config = replace(config, queue_policy=QueuePolicy(queue_policy.lower()))
        except ValueError as exc:
            raise ScenarioError(f"unknown queue policy {queue_policy}") from exc
    if round_limit is not None:
        if round_limit < 0:
            raise ScenarioError("round_limit must be >= 0")
        config = replace(config, round_limit=round_limit)
    return Scenario(products=scenario.products, agents=scenario.agents, config=config)


__all__ = [
    "AgentSetup",
    "DEFAULT_AD_VALIDITY",
    "Scenario",
    "ScenarioError",
    "SimConfig",
    "apply_overrides",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
]

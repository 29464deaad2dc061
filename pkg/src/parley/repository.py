"""Advertisement repository: the marketplace's five tables.

Agents, products, per-product attributes, advertisements with validity
counters, and ongoing negotiations.  Validity is logical time: each tick
ages every live advertisement by one unit and removes the dead ones.
Every mutation is recorded on an append-only event list so a run can be
audited or persisted; a snapshot serializes all tables to one JSON
document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

from .domain import (
    AttributeNode,
    IssueValuation,
    NonFunctionalAttribute,
    ProductSpec,
)


class RepositoryError(Exception):
    pass


class DuplicateAgent(RepositoryError):
    pass


class DuplicateProduct(RepositoryError):
    pass


class DuplicateAd(RepositoryError):
    pass


class UnknownAgent(RepositoryError):
    pass


class UnknownProduct(RepositoryError):
    pass


class ZeroValidity(RepositoryError):
    pass


class RestoreError(RepositoryError):
    pass


class Role(str, Enum):
    BUYER = "buyer"
    SELLER = "seller"


@dataclass(frozen=True)
class AgentRecord:
    agent_id: str
    name: str
    address: str
    role: Role
    allies: bool = False
    priority: int = 0


@dataclass(frozen=True)
class Advertisement:
    ad_id: str
    product_id: str
    agent_id: str
    validity_counter: int


@dataclass
class OngoingNegotiationEntry:
    negotiation_id: str
    product_id: str
    agent_ids: tuple[str, ...]
    offers_generated: int = 0


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    payload: dict


class Repository:
    """In-memory table store with a single-writer mutation contract.

    Queries return copies, safe to hand to concurrent readers; all
    mutations must come from one logical writer (the harness scheduler).
    """

    def __init__(self) -> None:
        self._agents: dict[str, AgentRecord] = {}
        self._products: dict[str, ProductSpec] = {}
        self._ads: dict[str, Advertisement] = {}
        self._archive: list[tuple[str, Advertisement]] = []  # (reason, ad)
        self._ongoing: dict[str, OngoingNegotiationEntry] = {}
        self._events: list[Event] = []
        self._seq = 0

    # -- event log ---------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> None:
        self._seq += 1
        self._events.append(Event(self._seq, kind, payload))

    @property
    def events(self) -> tuple[Event, ...]:
        return tuple(self._events)

    # -- agents ------------------------------------------------------------

    def register_agent(self, record: AgentRecord) -> str:
        if record.agent_id in self._agents:
            raise DuplicateAgent(record.agent_id)
        self._agents[record.agent_id] = record
        self._emit("agent_registered", {"agent_id": record.agent_id, "role": record.role.value})
        return record.agent_id

    def get_agent(self, agent_id: str) -> AgentRecord:
        try:
            return self._agents[agent_id]
        except KeyError:
            raise UnknownAgent(agent_id) from None

    def agents(self) -> list[AgentRecord]:
        return list(self._agents.values())

    # -- products ----------------------------------------------------------

    def register_product(self, product: ProductSpec) -> str:
        if product.product_id in self._products:
            raise DuplicateProduct(product.product_id)
        self._products[product.product_id] = product
        self._emit("product_registered", {"product_id": product.product_id})
        return product.product_id

    def get_product(self, product_id: str) -> ProductSpec:
        try:
            return self._products[product_id]
        except KeyError:
            raise UnknownProduct(product_id) from None

    def products(self) -> list[ProductSpec]:
        return list(self._products.values())

    # -- advertisements ----------------------------------------------------

    def submit_advertisement(self, ad: Advertisement) -> str:
        if ad.ad_id in self._ads:
            raise DuplicateAd(ad.ad_id)
        if ad.agent_id not in self._agents:
            raise UnknownAgent(ad.agent_id)
        if ad.product_id not in self._products:
            raise UnknownProduct(ad.product_id)
        if ad.validity_counter <= 0:
            raise ZeroValidity(f"{ad.ad_id}: validity_counter must be > 0")
        self._ads[ad.ad_id] = ad
        self._emit("ad_submitted", {"ad_id": ad.ad_id, "product_id": ad.product_id,
                                    "agent_id": ad.agent_id, "validity": ad.validity_counter})
        return ad.ad_id

    def live_ads(self) -> list[Advertisement]:
        return list(self._ads.values())

    def get_ad(self, ad_id: str) -> Advertisement | None:
        return self._ads.get(ad_id)

    def tick(self, frozen_agents: Iterable[str] = ()) -> list[str]:
        """Age every live ad by one tick; return the ids of expired ads.

        Ads of ``frozen_agents`` (parties parked in the waiting queue) do
        not age, so queue pressure cannot silently kill them.
        """
        frozen = set(frozen_agents)
        expired: list[str] = []
        for ad_id, ad in list(self._ads.items()):
            if ad.agent_id in frozen:
                continue
            aged = replace(ad, validity_counter=ad.validity_counter - 1)
            if aged.validity_counter <= 0:
                del self._ads[ad_id]
                self._archive.append(("expired", aged))
                expired.append(ad_id)
            else:
                self._ads[ad_id] = aged
        if expired:
            self._emit("ads_expired", {"ad_ids": expired})
        return expired

    def consume_ads(self, ad_ids: Iterable[str]) -> None:
        """Remove ads that entered a negotiation from the live set (archived)."""
        consumed = []
        for ad_id in ad_ids:
            ad = self._ads.pop(ad_id, None)
            if ad is not None:
                self._archive.append(("consumed", ad))
                consumed.append(ad_id)
        if consumed:
            self._emit("ads_consumed", {"ad_ids": consumed})

    def find_matches(self, product_id: str) -> tuple[list[Advertisement], list[Advertisement]]:
        """Partition the product's live ads into (buyer ads, seller ads).

        Order within each side is submission order.
        """
        buyers: list[Advertisement] = []
        sellers: list[Advertisement] = []
        for ad in self._ads.values():
            if ad.product_id != product_id:
                continue
            role = self.get_agent(ad.agent_id).role
            (buyers if role is Role.BUYER else sellers).append(ad)
        return buyers, sellers

    # -- ongoing negotiations -----------------------------------------------

    def record_ongoing(self, entry: OngoingNegotiationEntry) -> None:
        if len(entry.agent_ids) < 2:
            raise RepositoryError("ongoing negotiation needs at least two agents")
        self._ongoing[entry.negotiation_id] = entry
        self._emit("negotiation_opened", {"negotiation_id": entry.negotiation_id,
                                          "product_id": entry.product_id,
                                          "agents": list(entry.agent_ids)})

    def lookup_ongoing(self, product_id: str) -> OngoingNegotiationEntry | None:
        for entry in self._ongoing.values():
            if entry.product_id == product_id:
                return entry
        return None

    def join_ongoing(self, negotiation_id: str, agent_id: str) -> None:
        entry = self._ongoing[negotiation_id]
        if agent_id not in entry.agent_ids:
            entry.agent_ids = entry.agent_ids + (agent_id,)
            self._emit("negotiation_joined", {"negotiation_id": negotiation_id,
                                              "agent_id": agent_id})

    def bump_offers(self, negotiation_id: str, count: int = 1) -> None:
        entry = self._ongoing.get(negotiation_id)
        if entry is not None:
            entry.offers_generated += count

    def close_ongoing(self, negotiation_id: str) -> None:
        entry = self._ongoing.pop(negotiation_id, None)
        if entry is not None:
            self._emit("negotiation_closed", {"negotiation_id": negotiation_id,
                                              "offers_generated": entry.offers_generated})

    def ongoing(self) -> list[OngoingNegotiationEntry]:
        return list(self._ongoing.values())

    # -- persistence ---------------------------------------------------------

    def snapshot(self) -> dict:
        """All five tables plus the archive, as one JSON-ready document."""
        return {
            "format": "repository-snapshot",
            "version": 1,
            "agents": [_agent_to_dict(a) for a in self._agents.values()],
            "products": [_product_to_dict(p) for p in self._products.values()],
            "attributes": [
                {"product_id": p.product_id, "leaf_id": leaf,
                 "weight": _leaf_weight(p.tree, leaf)}
                for p in self._products.values()
                for leaf in p.leaves
            ],
            "advertisements": [_ad_to_dict(a) for a in self._ads.values()],
            "ongoing": [
                {"negotiation_id": e.negotiation_id, "product_id": e.product_id,
                 "agent_ids": list(e.agent_ids), "offers_generated": e.offers_generated}
                for e in self._ongoing.values()
            ],
            "archive": [{"reason": reason, "ad": _ad_to_dict(ad)}
                        for reason, ad in self._archive],
            "seq": self._seq,
        }

    def save_snapshot(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def restore(cls, path: str | Path) -> "Repository":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise RestoreError(f"cannot read snapshot {path}: {exc}") from exc
        return cls.from_snapshot(data)

    @classmethod
    def from_snapshot(cls, data: dict) -> "Repository":
        if not isinstance(data, dict) or data.get("format") != "repository-snapshot":
            raise RestoreError("not a repository snapshot")
        repo = cls()
        try:
            for entry in data["products"]:
                repo._products[entry["product_id"]] = _product_from_dict(entry)
            for entry in data["agents"]:
                repo._agents[entry["agent_id"]] = _agent_from_dict(entry)
            for entry in data["advertisements"]:
                repo._ads[entry["ad_id"]] = _ad_from_dict(entry)
            for entry in data["ongoing"]:
                repo._ongoing[entry["negotiation_id"]] = OngoingNegotiationEntry(
                    negotiation_id=entry["negotiation_id"],
                    product_id=entry["product_id"],
                    agent_ids=tuple(entry["agent_ids"]),
                    offers_generated=entry["offers_generated"],
                )
            repo._archive = [(item["reason"], _ad_from_dict(item["ad"]))
                             for item in data.get("archive", [])]
            repo._seq = data.get("seq", 0)
        except (KeyError, TypeError, ValueError) as exc:
            raise RestoreError(f"malformed snapshot: {exc}") from exc
        for ad in repo._ads.values():
            if ad.agent_id not in repo._agents or ad.product_id not in repo._products:
                raise RestoreError(f"dangling reference in ad {ad.ad_id}")
        return repo


# -- serialization helpers ----------------------------------------------------


def _agent_to_dict(record: AgentRecord) -> dict:
    return {"agent_id": record.agent_id, "name": record.name, "address": record.address,
            "role": record.role.value, "allies": record.allies, "priority": record.priority}


def _agent_from_dict(data: dict) -> AgentRecord:
    return AgentRecord(agent_id=data["agent_id"], name=data["name"],
                       address=data["address"], role=Role(data["role"]),
                       allies=bool(data["allies"]), priority=int(data["priority"]))


def _ad_to_dict(ad: Advertisement) -> dict:
    return {"ad_id": ad.ad_id, "product_id": ad.product_id,
            "agent_id": ad.agent_id, "validity_counter": ad.validity_counter}


def _ad_from_dict(data: dict) -> Advertisement:
    return Advertisement(ad_id=data["ad_id"], product_id=data["product_id"],
                         agent_id=data["agent_id"],
                         validity_counter=int(data["validity_counter"]))


def tree_to_dict(node: AttributeNode) -> dict:
    out: dict = {"node_id": node.node_id, "name": node.name}
    if node.is_leaf:
        out["weight"] = node.weight
    else:
        out["children"] = [tree_to_dict(child) for child in node.children or ()]
    return out


def tree_from_dict(data: dict) -> AttributeNode:
    children = data.get("children")
    return AttributeNode(
        node_id=data["node_id"],
        name=data.get("name", ""),
        children=None if children is None else tuple(tree_from_dict(c) for c in children),
        weight=float(data.get("weight", 1.0)),
    )


def _product_to_dict(product: ProductSpec) -> dict:
    return {
        "product_id": product.product_id,
        "product_name": product.product_name,
        "tree": tree_to_dict(product.tree),
        "non_functional": [{"name": a.name, "multiplier": a.multiplier}
                           for a in product.non_functional],
        "valuations": {leaf: {"actual_cost": v.actual_cost,
                              "cost_with_margin": v.cost_with_margin,
                              "weight": v.weight}
                       for leaf, v in product.valuations.items()},
    }


def _product_from_dict(data: dict) -> ProductSpec:
    return ProductSpec(
        product_id=data["product_id"],
        product_name=data["product_name"],
        tree=tree_from_dict(data["tree"]),
        non_functional=tuple(NonFunctionalAttribute(a["name"], float(a["multiplier"]))
                             for a in data.get("non_functional", [])),
        valuations={leaf: IssueValuation(leaf, float(v["actual_cost"]),
                                         float(v["cost_with_margin"]),
                                         float(v.get("weight", 1.0)))
                    for leaf, v in data.get("valuations", {}).items()},
    )


def _leaf_weight(tree: AttributeNode, leaf_id: str) -> float:
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.node_id == leaf_id and node.is_leaf:
            return node.weight
        stack.extend(node.children or ())
    return 1.0


__all__ = [
    "Advertisement",
    "AgentRecord",
    "DuplicateAd",
    "DuplicateAgent",
    "DuplicateProduct",
    "Event",
    "OngoingNegotiationEntry",
    "Repository",
    "RepositoryError",
    "RestoreError",
    "Role",
    "UnknownAgent",
    "UnknownProduct",
    "ZeroValidity",
    "tree_from_dict",
    "tree_to_dict",
]

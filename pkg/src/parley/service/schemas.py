"""Request/response models for the marketplace HTTP API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthOut(BaseModel):
    status: Literal["ok"] = "ok"
    agents: int
    products: int
    live_ads: int
    history_records: int


class TreeNodeIn(BaseModel):
    node_id: str
    name: str = ""
    children: Optional[list["TreeNodeIn"]] = None
    weight: float = 1.0


class NonFunctionalIn(BaseModel):
    name: str
    multiplier: float = Field(gt=0)


class ProductIn(BaseModel):
    product_id: str
    product_name: str = ""
    tree: TreeNodeIn
    non_functional: list[NonFunctionalIn] = Field(default_factory=list)


class ProductOut(BaseModel):
    product_id: str
    product_name: str
    leaves: list[str]


class AgentIn(BaseModel):
    agent_id: str
    name: str = ""
    address: str = ""
    role: Literal["buyer", "seller"]
    allies: bool = False
    priority: int = Field(default=0, ge=0)


class AgentOut(BaseModel):
    agent_id: str
    name: str
    address: str
    role: str
    allies: bool
    priority: int


class AdvertisementIn(BaseModel):
    ad_id: str
    product_id: str
    agent_id: str
    validity_counter: int


class AdvertisementOut(BaseModel):
    ad_id: str
    product_id: str
    agent_id: str
    validity_counter: int


class TickOut(BaseModel):
    expired: list[str]


class MatchesOut(BaseModel):
    product_id: str
    buyers: list[AdvertisementOut]
    sellers: list[AdvertisementOut]


class AllyGroupsOut(BaseModel):
    product_id: str
    groups: list[list[str]]


class RunIn(BaseModel):
    scenario: dict
    seed: Optional[int] = None
    max_parties: Optional[int] = None
    queue_policy: Optional[Literal["fcfs", "priority"]] = None
    round_limit: Optional[int] = None


class RunOut(BaseModel):
    report: dict
    transcript: list[str]


class ReplayIn(BaseModel):
    transcript: str = Field(description="full transcript file content (jsonl)")


class ReplayOut(BaseModel):
    match: bool
    first_divergence: Optional[int] = None
    detail: str


class WeightsOut(BaseModel):
    product_id: str
    weights: dict[str, float]


__all__ = [
    "AdvertisementIn",
    "AdvertisementOut",
    "AgentIn",
    "AgentOut",
    "AllyGroupsOut",
    "HealthOut",
    "MatchesOut",
    "NonFunctionalIn",
    "ProductIn",
    "ProductOut",
    "ReplayIn",
    "ReplayOut",
    "RunIn",
    "RunOut",
    "TickOut",
    "TreeNodeIn",
    "WeightsOut",
]

"""FastAPI marketplace service wrapping the core package.

The service holds one in-memory marketplace (repository plus history
store).  Agents register and advertise over HTTP, ticks advance logical
time, and whole scenario runs execute server-side with their outcomes
merged into the service's history so weight suggestion improves run over
run.  Negotiation traffic itself stays on the newline-delimited JSON
socket protocol; this API is the control plane.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import history as history_mod
from ..domain import DomainError, NonFunctionalAttribute, ProductSpec
from ..matcher import detect_allies
from ..repository import (
    Advertisement,
    AgentRecord,
    DuplicateAd,
    DuplicateAgent,
    DuplicateProduct,
    Repository,
    Role,
    UnknownAgent,
    UnknownProduct,
    ZeroValidity,
    tree_from_dict,
)
from ..scenario import ScenarioError, apply_overrides, scenario_from_dict
from ..simulation import run_scenario, verify_transcript
from . import schemas


class MarketplaceState:
    def __init__(self) -> None:
        self.repo = Repository()
        self.history = history_mod.HistoryStore()


def create_app(state: MarketplaceState | None = None) -> FastAPI:
    app = FastAPI(title="parley marketplace", version="0.1.0")
    app.state.market = state or MarketplaceState()

    def market() -> MarketplaceState:
        return app.state.market

    @app.get("/health", response_model=schemas.HealthOut)
    def health() -> schemas.HealthOut:
        m = market()
        return schemas.HealthOut(
            agents=len(m.repo.agents()),
            products=len(m.repo.products()),
            live_ads=len(m.repo.live_ads()),
            history_records=len(m.history),
        )

    @app.post("/agents", response_model=schemas.AgentOut, status_code=201)
    def register_agent(body: schemas.AgentIn) -> schemas.AgentOut:
        record = AgentRecord(
            agent_id=body.agent_id,
            name=body.name or body.agent_id,
            address=body.address or f"api:{body.agent_id}",
            role=Role(body.role),
            allies=body.allies,
            priority=body.priority,
        )
        try:
            market().repo.register_agent(record)
        except DuplicateAgent as exc:
            raise HTTPException(status_code=409, detail=f"duplicate agent: {exc}")
        return _agent_out(record)

    @app.get("/agents/{agent_id}", response_model=schemas.AgentOut)
    def get_agent(agent_id: str) -> schemas.AgentOut:
        try:
            record = market().repo.get_agent(agent_id)
        except UnknownAgent:
            raise HTTPException(status_code=404, detail=f"no agent {agent_id}")
        return _agent_out(record)

    @app.post("/products", response_model=schemas.ProductOut, status_code=201)
    def register_product(body: schemas.ProductIn) -> schemas.ProductOut:
        try:
            product = ProductSpec(
                product_id=body.product_id,
                product_name=body.product_name or body.product_id,
                tree=tree_from_dict(body.tree.model_dump()),
                non_functional=tuple(
                    NonFunctionalAttribute(a.name, a.multiplier)
                    for a in body.non_functional
                ),
            )
            market().repo.register_product(product)
        except DomainError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except DuplicateProduct as exc:
            raise HTTPException(status_code=409, detail=f"duplicate product: {exc}")
        return schemas.ProductOut(
            product_id=product.product_id,
            product_name=product.product_name,
            leaves=list(product.leaves),
        )

    @app.post("/advertisements", response_model=schemas.AdvertisementOut, status_code=201)
    def submit_advertisement(body: schemas.AdvertisementIn) -> schemas.AdvertisementOut:
        ad = Advertisement(ad_id=body.ad_id, product_id=body.product_id,
                           agent_id=body.agent_id,
                           validity_counter=body.validity_counter)
        try:
            market().repo.submit_advertisement(ad)
        except (UnknownAgent, UnknownProduct) as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ZeroValidity as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except DuplicateAd as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return _ad_out(ad)

    @app.post("/tick", response_model=schemas.TickOut)
    def tick() -> schemas.TickOut:
        return schemas.TickOut(expired=market().repo.tick())

    @app.get("/products/{product_id}/matches", response_model=schemas.MatchesOut)
    def matches(product_id: str) -> schemas.MatchesOut:
        m = market()
        try:
            m.repo.get_product(product_id)
        except UnknownProduct:
            raise HTTPException(status_code=404, detail=f"no product {product_id}")
        buyers, sellers = m.repo.find_matches(product_id)
        return schemas.MatchesOut(
            product_id=product_id,
            buyers=[_ad_out(ad) for ad in buyers],
            sellers=[_ad_out(ad) for ad in sellers],
        )

    @app.get("/products/{product_id}/allies", response_model=schemas.AllyGroupsOut)
    def allies(product_id: str) -> schemas.AllyGroupsOut:
        groups = detect_allies(market().repo, product_id)
        return schemas.AllyGroupsOut(product_id=product_id,
                                     groups=[list(g) for g in groups])

    @app.get("/products/{product_id}/weights", response_model=schemas.WeightsOut)
    def suggest_weights(product_id: str, leaves: str = "") -> schemas.WeightsOut:
        m = market()
        leaf_ids = [leaf for leaf in leaves.split(",") if leaf]
        if not leaf_ids:
            try:
                leaf_ids = list(m.repo.get_product(product_id).leaves)
            except UnknownProduct:
                raise HTTPException(status_code=404, detail=f"no product {product_id}")
        return schemas.WeightsOut(
            product_id=product_id,
            weights=m.history.suggest_weights(product_id, leaf_ids),
        )

    @app.post("/runs", response_model=schemas.RunOut)
    def run(body: schemas.RunIn) -> schemas.RunOut:
        try:
            scenario = scenario_from_dict(body.scenario)
            scenario = apply_overrides(scenario, seed=body.seed,
                                       max_parties=body.max_parties,
                                       queue_policy=body.queue_policy,
                                       round_limit=body.round_limit)
            result = run_scenario(scenario)
        except ScenarioError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        m = market()
        for product in scenario.products:
            try:
                m.repo.register_product(product)
            except DuplicateProduct:
                pass
        for record in result.history.records():
            try:
                m.history.append(record)
            except history_mod.DuplicateRecord:
                pass  # same scenario re-run; first record wins
        return schemas.RunOut(report=result.report,
                              transcript=result.transcript_lines)

    @app.post("/replay", response_model=schemas.ReplayOut)
    def replay(body: schemas.ReplayIn) -> schemas.ReplayOut:
        with tempfile.NamedTemporaryFile("w", suffix=".jsonl", delete=False) as handle:
            handle.write(body.transcript)
            path = Path(handle.name)
        try:
            match, index, detail = verify_transcript(path)
        except ScenarioError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        finally:
            path.unlink(missing_ok=True)
        return schemas.ReplayOut(match=match, first_divergence=index, detail=detail)

    return app


def _agent_out(record: AgentRecord) -> schemas.AgentOut:
    return schemas.AgentOut(agent_id=record.agent_id, name=record.name,
                            address=record.address, role=record.role.value,
                            allies=record.allies, priority=record.priority)


def _ad_out(ad: Advertisement) -> schemas.AdvertisementOut:
    return schemas.AdvertisementOut(ad_id=ad.ad_id, product_id=ad.product_id,
                                    agent_id=ad.agent_id,
                                    validity_counter=ad.validity_counter)


app = create_app()

__all__ = ["MarketplaceState", "app", "create_app"]

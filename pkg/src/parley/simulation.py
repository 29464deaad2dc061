"""Deterministic end-to-end runs: register, advertise, match, ally,
negotiate, finalize, record.

The scheduler advances in logical steps.  Each step may form alliances,
spawn markets for matchable products, deliver exactly one message per
active bilateral exchange, close finished markets, and finally age every
live advertisement by one validity tick.  Nothing reads the wall clock,
so a scenario plus its seed fully determine every emitted byte.

Each agent's negotiation behavior sits behind a small responder object;
the default responder drives the in-process engine, and the wire layer
substitutes one that forwards messages over a socket.  The orchestrator
itself only watches the message stream: it tracks rounds, acceptance, and
sealed prices mechanically, which is what keeps in-process and networked
runs observationally identical.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import engine
from .alliance import (
    InternalDeadlock,
    MemberProposal,
    composite_record,
    distribute_outcome,
    form_composite,
    negotiate_terms,
)
from .domain import IssueValuation, ProductSpec
from .engine import (
    FinalizeDecision,
    Message,
    MessageKind,
    StrategyRegistry,
    apply_closing,
    initial_offer,
    open_session,
    step_round,
)
from .history import Failure, HistoryRecord, HistoryStore, Success
from .matcher import Admitted, AdmissionController, Queued, detect_allies, scan
from .repository import (
    Advertisement,
    AgentRecord,
    OngoingNegotiationEntry,
    Repository,
    Role,
)
from .scenario import Scenario, ScenarioError

MAX_STEPS = 100_000


def encode_line(obj: dict) -> str:
    """Canonical one-line JSON; identical bytes for identical values."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class BilateralSpec:
    negotiation_id: str
    group_id: str
    product_id: str
    buyer_id: str
    seller_id: str
    round_limit: int


@dataclass(frozen=True)
class FinalizeCandidate:
    """What a responder needs to pick its best temporarily-agreed peer."""

    negotiation_id: str
    peer_id: str
    total: float
    round: int


@dataclass
class AgentProfile:
    record: AgentRecord
    product_id: str
    valuations: dict[str, IssueValuation]
    validity: int
    strategy_name: str = "linear"
    alliance_terms: object | None = None  # AllianceTerms for composites

    @property
    def agent_id(self) -> str:
        return self.record.agent_id

    @property
    def weights(self) -> dict[str, float]:
        return {leaf: v.weight for leaf, v in self.valuations.items()}


class LocalResponder:
    """In-process negotiation behavior for one agent: the engine itself."""

    def __init__(self, profile: AgentProfile, registry: StrategyRegistry,
                 mapper: Callable = map) -> None:
        self.profile = profile
        self.registry = registry
        self.mapper = mapper
        self.sessions: dict[str, engine.NegotiationSession] = {}

    def open_bilateral(self, spec: BilateralSpec, product: ProductSpec) -> None:
        role = self.profile.record.role
        peer = spec.seller_id if role is Role.BUYER else spec.buyer_id
        self.sessions[spec.negotiation_id] = open_session(
            negotiation_id=spec.negotiation_id,
            product=product,
            self_id=self.profile.agent_id,
            self_role=role,
            peer_id=peer,
            valuations=self.profile.valuations,
            round_limit=spec.round_limit,
            strategy=self.registry.for_agent(self.profile.agent_id),
        )

    def make_initial_offer(self, negotiation_id: str) -> Message:
        return initial_offer(self.sessions[negotiation_id])

    def respond(self, message: Message) -> Message | None:
        result = step_round(self.sessions[message.negotiation_id], message,
                            mapper=self.mapper)
        return result.reply

    def close(self, message: Message) -> Message | None:
        return apply_closing(self.sessions[message.negotiation_id], message)

    def decide_finalize(self, candidates: list[FinalizeCandidate]) -> FinalizeDecision:
        return engine.finalize([self.sessions[c.negotiation_id] for c in candidates])

    def make_decline(self, negotiation_id: str, round_hint: int = 0) -> Message:
        session = self.sessions[negotiation_id]
        session.status = engine.SessionStatus.DECLINED
        return Message(MessageKind.DECLINE, negotiation_id,
                       self.profile.agent_id, session.round)

    def state_digest(self, negotiation_id: str):
        session = self.sessions.get(negotiation_id)
        if session is None:
            return None
        return (
            session.round,
            session.peer_round,
            session.status.value,
            tuple(sorted(session.sealed_prices().items())),
            tuple(sorted((leaf, state.u_target)
                         for leaf, state in session.per_issue.items())),
        )

    def finish(self) -> None:
        pass


@dataclass
class BilateralLedger:
    """The orchestrator's mechanical view of one bilateral exchange."""

    spec: BilateralSpec
    pending: tuple[str, Message] | None = None  # (target agent, message)
    done: bool = False
    status: str = "active"  # active|temp_agreed|finalized|declined|aborted
    accepted: bool = False
    final_prices: dict[str, float] | None = None
    reason: str | None = None
    last_payload: dict[str, dict[str, float]] = field(default_factory=dict)
    rounds: dict[str, int] = field(default_factory=dict)
    messages: list[Message] = field(default_factory=list)

    def other(self, agent_id: str) -> str:
        return (self.spec.seller_id if agent_id == self.spec.buyer_id
                else self.spec.buyer_id)

    def observe(self, message: Message) -> None:
        self.messages.append(message)
        self.rounds[message.sender] = message.round
        if message.kind in (MessageKind.OFFER, MessageKind.COUNTER_OFFER):
            assert isinstance(message.payload, dict)
            self.last_payload[message.sender] = dict(message.payload)
        elif message.kind is MessageKind.ACCEPT:
            peer = self.other(message.sender)
            self.accepted = True
            self.status = "temp_agreed"
            self.final_prices = dict(self.last_payload.get(peer, {}))
        elif message.kind is MessageKind.WITHDRAW:
            self.status = "aborted"
            self.reason = (engine.ROUND_LIMIT_REASON
                           if message.round >= self.spec.round_limit
                           else "withdrawn")

    def total(self) -> float:
        return sum((self.final_prices or {}).values())

    def rounds_used(self) -> int:
        return max(self.rounds.values(), default=0)


@dataclass
class MarketGroup:
    group_id: str
    product_id: str
    buyers: list[str]
    sellers: list[str]
    bilateral_ids: list[str] = field(default_factory=list)
    closed: bool = False

    @property
    def members(self) -> list[str]:
        return self.buyers + self.sellers


@dataclass
class RunResult:
    scenario: Scenario
    report: dict
    transcript_lines: list[str]
    history: HistoryStore
    repo: Repository
    trace: list | None = None


class Simulation:
    """One seeded scenario run.  Construct, then call :meth:`run` once."""

    def __init__(
        self,
        scenario: Scenario,
        mode: str = "sequential",
        remote_responders: dict[str, object] | None = None,
        registry: StrategyRegistry | None = None,
        trace: bool = False,
    ) -> None:
        if mode not in ("sequential", "threaded"):
            raise ValueError(f"unknown mode {mode!r}")
        self.scenario = scenario
        self.config = scenario.config
        self.mode = mode
        self.rng = random.Random(scenario.config.seed)
        self.repo = Repository()
        self.admission = AdmissionController(capacity=self.config.max_parties,
                                             policy=self.config.queue_policy)
        self.history = HistoryStore()
        self.registry = registry or StrategyRegistry()
        self.remote = dict(remote_responders or {})
        self.profiles: dict[str, AgentProfile] = {}
        self.responders: dict[str, object] = {}
        self.transcript: list[Message] = []
        self.ledgers: dict[str, BilateralLedger] = {}
        self.groups: list[MarketGroup] = []
        self.queue_events: list[dict] = []
        self.alliance_events: list[dict] = []
        self.expired_ads: list[str] = []
        self.payouts: dict[str, dict[str, float]] = {}
        self._ad_agents: dict[str, str] = {}
        self._attempted_alliances: set[frozenset] = set()
        self._group_seq = 0
        self._ticks = 0
        self._pools: list = []
        self._mapper: Callable = map          # per-issue work inside a session
        self._session_mapper: Callable = map  # one step per bilateral per tick
        self.trace_enabled = trace
        self.trace: list = []

    # -- lifecycle ---------------------------------------------------------

    def run(self) -> RunResult:
        if self.mode == "threaded":
            from concurrent.futures import ThreadPoolExecutor

            # Separate pools per level: a session task fans out issue tasks,
            # and nesting both levels on one pool can exhaust its workers.
            issue_pool = ThreadPoolExecutor(max_workers=4)
            session_pool = ThreadPoolExecutor(max_workers=4)
            self._pools = [issue_pool, session_pool]
            self._mapper = lambda fn, items: list(issue_pool.map(fn, list(items)))
            self._session_mapper = lambda fn, items: list(
                session_pool.map(fn, list(items)))
        try:
            self._setup()
            steps = 0
            while True:
                steps += 1
                if steps > MAX_STEPS:
                    raise RuntimeError("scheduler failed to make progress")
                self._alliance_phase()
                self._spawn_phase()
                self._advance_phase()
                self._closing_phase()
                self._release_idle()
                if self.repo.live_ads():
                    expired = self.repo.tick(self.admission.frozen_agents())
                    self._ticks += 1
                    self.expired_ads.extend(expired)
                if (not self._active_ledgers() and not self.repo.live_ads()
                        and len(self.admission.queue) == 0):
                    break
            return self._result()
        finally:
            for responder in self.responders.values():
                responder.finish()
            for pool in self._pools:
                pool.shutdown(wait=True)

    def _setup(self) -> None:
        for product in self.scenario.products:
            self.repo.register_product(product)
        for setup in self.scenario.agents:
            record = setup.record
            self.repo.register_agent(record)
            profile = AgentProfile(record=record, product_id=setup.product_id,
                                   valuations=dict(setup.valuations),
                                   validity=setup.validity,
                                   strategy_name=setup.strategy)
            self.profiles[record.agent_id] = profile
            if setup.strategy != "linear":
                try:
                    self.registry.select(record.agent_id, setup.strategy)
                except engine.UnknownStrategy as exc:
                    raise ScenarioError(
                        f"agent {record.agent_id}: unknown strategy {exc}"
                    ) from exc
            self.responders[record.agent_id] = self.remote.get(
                record.agent_id
            ) or LocalResponder(profile, self.registry, mapper=self._mapper)
            outcome = self.admission.admit(record.agent_id, record.priority)
            if isinstance(outcome, Queued):
                self.queue_events.append({"event": "queued",
                                          "agent_id": record.agent_id,
                                          "position": outcome.position})
            else:
                self.queue_events.append({"event": "admitted",
                                          "agent_id": record.agent_id})
            self._submit_ad(record.agent_id, setup.product_id, setup.validity)

    def _submit_ad(self, agent_id: str, product_id: str, validity: int) -> str:
        ad_id = f"ad:{agent_id}"
        self.repo.submit_advertisement(Advertisement(
            ad_id=ad_id, product_id=product_id, agent_id=agent_id,
            validity_counter=validity))
        self._ad_agents[ad_id] = agent_id
        return ad_id

    # -- phases ------------------------------------------------------------

    def _alliance_phase(self) -> None:
        for product in sorted(self.scenario.products, key=lambda p: p.product_id):
            groups = detect_allies(self.repo, product.product_id,
                                   eligible=set(self.admission.admitted))
            for member_ids in groups:
                key = frozenset(member_ids)
                if key in self._attempted_alliances:
                    continue
                self._attempted_alliances.add(key)
                self._form_alliance(product, member_ids)

    def _form_alliance(self, product: ProductSpec, member_ids: tuple[str, ...]) -> None:
        proposals = [
            MemberProposal(record=self.profiles[agent_id].record,
                           valuations=self.profiles[agent_id].valuations,
                           weights=self.profiles[agent_id].weights)
            for agent_id in member_ids
        ]
        try:
            terms = negotiate_terms(proposals, self.config.max_internal_rounds,
                                    product.non_functional)
        except InternalDeadlock as exc:
            event = {"event": "alliance_deadlocked", "product_id": product.product_id,
                     "members": list(member_ids), "detail": str(exc)}
            self.alliance_events.append(event)
            self.history.log_alliance_event(event)
            return

        composite = form_composite(proposals, terms)
        record = composite_record(composite)
        self.repo.register_agent(record)
        member_ads = [f"ad:{agent_id}" for agent_id in member_ids]
        self.repo.consume_ads(member_ads)
        for agent_id in member_ids:
            self.admission.admitted.discard(agent_id)
        result = self.admission.admit(record.agent_id, record.priority)
        assert isinstance(result, Admitted)
        while True:
            promoted = self.admission.release_slot()
            if promoted is None:
                break
            self.queue_events.append({"event": "admitted", "agent_id": promoted})

        validity = max(self.profiles[a].validity for a in member_ids)
        profile = AgentProfile(record=record, product_id=product.product_id,
                               valuations=composite.valuations, validity=validity,
                               alliance_terms=terms)
        self.profiles[record.agent_id] = profile
        self.responders[record.agent_id] = LocalResponder(profile, self.registry,
                                                          mapper=self._mapper)
        self._submit_ad(record.agent_id, product.product_id, validity)
        event = {"event": "alliance_formed", "product_id": product.product_id,
                 "members": list(member_ids), "composite_id": record.agent_id,
                 "weights": terms.weights}
        self.alliance_events.append(event)
        self.history.log_alliance_event(event)

    def _spawn_phase(self) -> None:
        spawns = scan(self.repo, eligible=set(self.admission.admitted))
        for spawn in spawns:
            self._group_seq += 1
            group = MarketGroup(
                group_id=f"mkt{self._group_seq:03d}",
                product_id=spawn.product_id,
                buyers=[self._ad_agents[ad] for ad in spawn.buyer_ad_ids],
                sellers=[self._ad_agents[ad] for ad in spawn.seller_ad_ids],
            )
            self.groups.append(group)
            self.repo.record_ongoing(OngoingNegotiationEntry(
                negotiation_id=group.group_id, product_id=group.product_id,
                agent_ids=tuple(group.members)))
            for buyer in group.buyers:
                for seller in group.sellers:
                    self._open_bilateral(group, buyer, seller)
        self._dynamic_join()

    def _dynamic_join(self) -> None:
        """Late arrivals for a product with a live market join it directly."""
        for ad in list(self.repo.live_ads()):
            if ad.agent_id not in self.admission.admitted:
                continue
            group = next((g for g in self.groups
                          if g.product_id == ad.product_id and not g.closed), None)
            if group is None:
                continue
            record = self.repo.get_agent(ad.agent_id)
            counterparts = (group.sellers if record.role is Role.BUYER
                            else group.buyers)
            if not counterparts:
                continue
            self.repo.consume_ads([ad.ad_id])
            self.repo.join_ongoing(group.group_id, ad.agent_id)
            if record.role is Role.BUYER:
                group.buyers.append(ad.agent_id)
                for seller in counterparts:
                    self._open_bilateral(group, ad.agent_id, seller)
            else:
                group.sellers.append(ad.agent_id)
                for buyer in counterparts:
                    self._open_bilateral(group, buyer, ad.agent_id)

    def _open_bilateral(self, group: MarketGroup, buyer: str, seller: str) -> None:
        spec = BilateralSpec(
            negotiation_id=f"{group.group_id}:{buyer}~{seller}",
            group_id=group.group_id,
            product_id=group.product_id,
            buyer_id=buyer,
            seller_id=seller,
            round_limit=self.config.round_limit,
        )
        product = self.scenario.product(group.product_id)
        self.responders[buyer].open_bilateral(spec, product)
        self.responders[seller].open_bilateral(spec, product)
        ledger = BilateralLedger(spec=spec)
        self.ledgers[spec.negotiation_id] = ledger
        group.bilateral_ids.append(spec.negotiation_id)
        opening = self.responders[seller].make_initial_offer(spec.negotiation_id)
        self._emit(ledger, opening)
        ledger.pending = (buyer, opening)

    def _advance_phase(self) -> None:
        active = [self.ledgers[nid] for nid in sorted(self.ledgers)
                  if self.ledgers[nid].pending is not None and not self.ledgers[nid].done]

        def compute(ledger: BilateralLedger) -> Message | None:
            target, message = ledger.pending  # type: ignore[misc]
            return self.responders[target].respond(message)

        replies = self._session_mapper(compute, active)
        for ledger, reply in zip(active, replies):
            ledger.pending = None
            if reply is None:
                ledger.done = True
                if ledger.status == "active":
                    ledger.status = "aborted"
                    ledger.reason = ledger.reason or engine.ROUND_LIMIT_REASON
                continue
            self._emit(ledger, reply)
            ledger.pending = (ledger.other(reply.sender), reply)
        if self.trace_enabled:
            self._capture_trace()

    def _capture_trace(self) -> None:
        snapshot = []
        for nid in sorted(self.ledgers):
            ledger = self.ledgers[nid]
            digests = []
            for agent in (ledger.spec.buyer_id, ledger.spec.seller_id):
                responder = self.responders[agent]
                digest = getattr(responder, "state_digest", lambda _nid: None)(nid)
                digests.append(digest)
            snapshot.append((nid, ledger.status, tuple(digests)))
        self.trace.append(tuple(snapshot))

    def _closing_phase(self) -> None:
        for group in self.groups:
            if group.closed:
                continue
            ledgers = [self.ledgers[nid] for nid in group.bilateral_ids]
            if not ledgers or not all(led.done for led in ledgers):
                continue
            self._close_group(group, ledgers)

    def _close_group(self, group: MarketGroup, ledgers: list[BilateralLedger]) -> None:
        committed: set[str] = set()
        for agent_id in sorted(set(group.members)):
            if agent_id in committed:
                continue
            eligible = [
                led for led in ledgers
                if led.status == "temp_agreed"
                and agent_id in (led.spec.buyer_id, led.spec.seller_id)
                and led.other(agent_id) not in committed
            ]
            if not eligible:
                continue
            candidates = [FinalizeCandidate(negotiation_id=led.spec.negotiation_id,
                                            peer_id=led.other(agent_id),
                                            total=led.total(),
                                            round=led.rounds.get(agent_id, 0))
                          for led in eligible]
            decision = self.responders[agent_id].decide_finalize(candidates)
            chosen = decision.chosen_peer
            committed.add(agent_id)
            committed.add(chosen)

            chosen_ledger = next(led for led in eligible if led.other(agent_id) == chosen)
            self._emit(chosen_ledger, decision.finalize_message)
            ack = self.responders[chosen].close(decision.finalize_message)
            if ack is not None:
                self._emit(chosen_ledger, ack)
            chosen_ledger.status = "finalized"
            self._record_payout(chosen_ledger)

            for decline in decision.decline_messages:
                ledger = self.ledgers[decline.negotiation_id]
                self._emit(ledger, decline)
                self.responders[ledger.other(decline.sender)].close(decline)
                ledger.status = "declined"
            # The chosen peer walks away from its other open agreements too.
            for ledger in ledgers:
                if (ledger.status == "temp_agreed"
                        and chosen in (ledger.spec.buyer_id, ledger.spec.seller_id)):
                    decline = self.responders[chosen].make_decline(
                        ledger.spec.negotiation_id, ledger.rounds.get(chosen, 0))
                    self._emit(ledger, decline)
                    self.responders[ledger.other(chosen)].close(decline)
                    ledger.status = "declined"

        for ledger in ledgers:
            self._record_history(group, ledger)
        self.repo.close_ongoing(group.group_id)
        group.closed = True
        for member in dict.fromkeys(group.members):
            promoted = self.admission.release(member)
            self.queue_events.append({"event": "released", "agent_id": member})
            if promoted is not None:
                self.queue_events.append({"event": "admitted", "agent_id": promoted})

    def _record_payout(self, ledger: BilateralLedger) -> None:
        if not ledger.final_prices:
            return
        for agent_id in (ledger.spec.buyer_id, ledger.spec.seller_id):
            terms = self.profiles[agent_id].alliance_terms
            if terms is not None:
                self.payouts[agent_id] = distribute_outcome(terms, ledger.final_prices)

    def _record_history(self, group: MarketGroup, ledger: BilateralLedger) -> None:
        spec = ledger.spec
        if ledger.status == "finalized":
            outcome = Success(final_prices=dict(ledger.final_prices or {}),
                              total=ledger.total())
        elif ledger.status == "declined":
            outcome = Failure(reason="declined")
        else:
            outcome = Failure(reason=ledger.reason or "aborted")
        seller_profile = self.profiles[spec.seller_id]
        self.history.append(HistoryRecord(
            negotiation_id=spec.negotiation_id,
            product_id=spec.product_id,
            participants=(spec.buyer_id, spec.seller_id),
            transcript=tuple(ledger.messages),
            outcome=outcome,
            weights_used=seller_profile.weights,
            timestamp_seq=len(self.transcript),
        ))

    def _release_idle(self) -> None:
        """Admitted agents with nothing live leave the floor so the queue drains."""
        advertised = {ad.agent_id for ad in self.repo.live_ads()}
        busy: set[str] = set()
        for group in self.groups:
            if not group.closed:
                busy.update(group.members)
        for agent_id in sorted(self.admission.admitted):
            if agent_id in advertised or agent_id in busy:
                continue
            promoted = self.admission.release(agent_id)
            self.queue_events.append({"event": "released", "agent_id": agent_id})
            if promoted is not None:
                self.queue_events.append({"event": "admitted", "agent_id": promoted})
        # Belt and braces: fill any still-free slots from the queue.
        while True:
            promoted = self.admission.release_slot()
            if promoted is None:
                break
            self.queue_events.append({"event": "admitted", "agent_id": promoted})

    def _active_ledgers(self) -> list[BilateralLedger]:
        return [led for led in self.ledgers.values() if not led.done]

    def _emit(self, ledger: BilateralLedger, message: Message) -> None:
        self.transcript.append(message)
        ledger.observe(message)
        if message.kind in (MessageKind.OFFER, MessageKind.COUNTER_OFFER):
            self.repo.bump_offers(ledger.spec.group_id)

    # -- outputs -------------------------------------------------------------

    def _result(self) -> RunResult:
        from .scenario import scenario_to_dict

        negotiations = []
        for nid in sorted(self.ledgers):
            ledger = self.ledgers[nid]
            entry = {
                "negotiation_id": nid,
                "product_id": ledger.spec.product_id,
                "buyer": ledger.spec.buyer_id,
                "seller": ledger.spec.seller_id,
                "status": ledger.status,
                "rounds_used": ledger.rounds_used(),
                "messages": len(ledger.messages),
            }
            if ledger.status == "finalized":
                entry["final_prices"] = ledger.final_prices
                entry["total"] = ledger.total()
            elif ledger.status == "declined":
                entry["reason"] = "declined"
                entry["tentative_total"] = ledger.total()
            else:
                entry["reason"] = ledger.reason
            negotiations.append(entry)

        statuses = Counter(entry["status"] for entry in negotiations)
        report = {
            "format": "run-report",
            "version": 1,
            "seed": self.config.seed,
            "negotiations": negotiations,
            "queue_events": self.queue_events,
            "alliance_events": self.alliance_events,
            "payouts": self.payouts,
            "expired_ads": self.expired_ads,
            "stats": {
                "agreements": statuses.get("finalized", 0),
                "declined": statuses.get("declined", 0),
                "aborted": statuses.get("aborted", 0),
                "messages": len(self.transcript),
                "ticks": self._ticks,
            },
        }

        header = {"kind": "header", "format": "transcript", "version": 1,
                  "seed": self.config.seed,
                  "scenario": scenario_to_dict(self.scenario)}
        lines = [encode_line(header)]
        lines.extend(encode_line(m.to_wire()) for m in self.transcript)
        return RunResult(scenario=self.scenario, report=report,
                         transcript_lines=lines, history=self.history,
                         repo=self.repo, trace=self.trace if self.trace_enabled else None)


def run_scenario(
    scenario: Scenario,
    mode: str = "sequential",
    remote_responders: dict[str, object] | None = None,
    registry: StrategyRegistry | None = None,
    trace: bool = False,
) -> RunResult:
    return Simulation(scenario, mode=mode, remote_responders=remote_responders,
                      registry=registry, trace=trace).run()


def write_artifacts(result: RunResult, out_dir: str | Path) -> dict[str, Path]:
    """Write transcript, report, history, events, and snapshot files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "transcript": out / "transcript.jsonl",
        "report": out / "report.json",
        "history": out / "history.jsonl",
        "events": out / "events.jsonl",
        "snapshot": out / "snapshot.json",
    }
    paths["transcript"].write_text("\n".join(result.transcript_lines) + "\n")
    paths["report"].write_text(json.dumps(result.report, sort_keys=True, indent=2) + "\n")
    result.history.save(paths["history"])
    event_lines = [encode_line({"seq": e.seq, "kind": e.kind, "payload": e.payload})
                   for e in result.repo.events]
    paths["events"].write_text("\n".join(event_lines) + ("\n" if event_lines else ""))
    result.repo.save_snapshot(paths["snapshot"])
    return paths


def verify_transcript(path: str | Path) -> tuple[bool, int | None, str]:
    """Re-run the embedded scenario and diff the message stream.

    Returns (match, first divergent message index, detail).
    """
    from .scenario import scenario_from_dict

    lines = Path(path).read_text().splitlines()
    if not lines:
        return False, None, "empty transcript"
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        return False, None, f"bad header: {exc}"
    if header.get("kind") != "header" or header.get("format") != "transcript":
        return False, None, "missing transcript header"
    try:
        scenario = scenario_from_dict(header["scenario"])
    except (KeyError, ScenarioError) as exc:
        raise ScenarioError(f"transcript header: {exc}") from exc

    result = run_scenario(scenario)
    expected = result.transcript_lines[1:]
    recorded = [line for line in lines[1:] if line.strip()]
    for index, (want, got) in enumerate(zip(expected, recorded)):
        if want != got:
            return False, index, f"message {index} diverges"
    if len(expected) != len(recorded):
        index = min(len(expected), len(recorded))
        return False, index, (f"length mismatch: expected {len(expected)} messages, "
                              f"found {len(recorded)}")
    return True, None, "transcripts match"


__all__ = [
    "AgentProfile",
    "BilateralLedger",
    "BilateralSpec",
    "LocalResponder",
    "MarketGroup",
    "RunResult",
    "Simulation",
    "encode_line",
    "run_scenario",
    "verify_transcript",
    "write_artifacts",
]

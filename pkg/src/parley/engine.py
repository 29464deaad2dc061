"""Negotiation state machine.

A session is one agent's view of a bilateral exchange with one peer over
all issues of a product.  Sellers open at their ceiling, buyers at their
floor, and both sides walk a per-issue target utility toward the other:

    u_new = u_old * (1 - penalty * t / w)        (seller; buyer mirrors up)

with t the sender's round counter and w the issue weight.  The penalty is
re-derived every round so the remaining utility gap is spread over the
remaining rounds:

    penalty = (sum of unaccepted gaps / rounds remaining) / sum(x_i / w_i)

where x_i is the peer's offered price for unaccepted issue i.  Acceptable
issues are sealed at the offered price and repeat unchanged in every later
message; once all issues are sealed the session is temporarily agreed, and
the best temporarily-agreed peer wins the deal at finalize time.

Per-issue evaluation and counter-price generation are pure and may run in
any concurrent mapper; the penalty derivation and the round advance form
the synchronization barrier of each round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

from .domain import (
    IssueValuation,
    ProductSpec,
    UtilityBand,
    price_at_utility,
    utility_band,
)
from .repository import Role


class EngineError(Exception):
    pass


class DegenerateOffer(EngineError):
    """Every unaccepted offered price is zero; no penalty can be derived."""


class DuplicateStrategy(EngineError):
    pass


class UnknownStrategy(EngineError):
    pass


class ProtocolViolation(EngineError):
    """A message breaks the exchange rules (round order, sealed price, kind)."""


class MessageKind(str, Enum):
    OFFER = "offer"
    COUNTER_OFFER = "counter_offer"
    ACCEPT = "accept"
    FINALIZE = "finalize"
    DECLINE = "decline"
    WITHDRAW = "withdraw"


@dataclass(frozen=True)
class Message:
    """One of the six inter-agent primitives.

    ``payload`` carries leaf->price for offers and counter-offers, the
    accepted leaf ids for accept, and nothing for the closing kinds.
    """

    kind: MessageKind
    negotiation_id: str
    sender: str
    round: int
    payload: dict[str, float] | tuple[str, ...] | None = None

    def to_wire(self) -> dict:
        payload: dict | list | None
        if isinstance(self.payload, tuple):
            payload = list(self.payload)
        else:
            payload = self.payload
        return {
            "kind": self.kind.value,
            "negotiation_id": self.negotiation_id,
            "sender": self.sender,
            "round": self.round,
            "payload": payload,
        }

    @classmethod
    def from_wire(cls, data: Mapping) -> "Message":
        try:
            kind = MessageKind(data["kind"])
        except (KeyError, ValueError):
            raise ProtocolViolation(f"unknown message kind: {data.get('kind')!r}") from None
        try:
            negotiation_id = data["negotiation_id"]
            sender = data["sender"]
            round_ = int(data["round"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"malformed message: {exc}") from None
        raw = data.get("payload")
        payload: dict[str, float] | tuple[str, ...] | None
        if kind in (MessageKind.OFFER, MessageKind.COUNTER_OFFER):
            if not isinstance(raw, Mapping):
                raise ProtocolViolation(f"{kind.value} needs a price map payload")
            payload = {str(k): float(v) for k, v in raw.items()}
        elif kind is MessageKind.ACCEPT:
            if not isinstance(raw, (list, tuple)):
                raise ProtocolViolation("accept needs a list of leaf ids")
            payload = tuple(str(v) for v in raw)
        else:
            payload = None
        return cls(kind=kind, negotiation_id=negotiation_id, sender=sender,
                   round=round_, payload=payload)


class SessionStatus(str, Enum):
    ACTIVE = "active"
    TEMP_AGREED = "temp_agreed"
    FINALIZED = "finalized"
    DECLINED = "declined"
    ABORTED = "aborted"
    WITHDRAWN = "withdrawn"


ROUND_LIMIT_REASON = "round_limit"
PEER_WITHDREW_REASON = "peer_withdrew"


# -- strategies ---------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    """Pluggable concession logic.

    ``decay`` is the seller-direction rule (u_old, penalty, t, w) -> u_new;
    buyers mirror it upward as 2*u_old - decay(...).  ``initial_utility``
    picks the opening target; ``accepts`` may override the default
    floor/ceiling acceptance test (return None to fall through).
    """

    name: str
    decay: Callable[[float, float, int, float], float]
    initial_utility: Callable[[UtilityBand, Role], float]
    accepts: Callable[[float, float, float, Role], bool | None] | None = None


def linear_decay(u_old: float, penalty: float, t: int, w: float) -> float:
    return u_old * (1.0 - penalty * t / w)


def _default_initial(band: UtilityBand, role: Role) -> float:
    return band.u_max if role is Role.SELLER else band.u_min


LINEAR_STRATEGY = Strategy(name="linear", decay=linear_decay,
                           initial_utility=_default_initial)


class StrategyRegistry:
    """Named strategies plus per-agent selection; linear is built in."""

    def __init__(self) -> None:
        self._strategies: dict[str, Strategy] = {LINEAR_STRATEGY.name: LINEAR_STRATEGY}
        self._selection: dict[str, str] = {}

    def register(self, name: str, strategy: Strategy) -> None:
        if name in self._strategies:
            raise DuplicateStrategy(name)
        self._strategies[name] = strategy

    def get(self, name: str) -> Strategy:
        try:
            return self._strategies[name]
        except KeyError:
            raise UnknownStrategy(name) from None

    def select(self, agent_id: str, name: str) -> None:
        if name not in self._strategies:
            raise UnknownStrategy(name)
        self._selection[agent_id] = name

    def for_agent(self, agent_id: str) -> Strategy:
        return self._strategies[self._selection.get(agent_id, LINEAR_STRATEGY.name)]


# -- sessions -----------------------------------------------------------------


@dataclass(frozen=True)
class IssueBounds:
    """Per-issue constants of one side: weight, band, and price limits."""

    leaf_id: str
    weight: float
    band: UtilityBand
    floor_price: float
    ceiling_price: float


@dataclass
class ConcessionState:
    leaf_id: str
    u_target: float
    penalty: float = 0.0
    accepted: bool = False
    sealed_price: float | None = None
    degenerate: bool = False


@dataclass
class NegotiationSession:
    """One agent's coordinator state for one peer."""

    negotiation_id: str
    product: ProductSpec
    self_id: str
    self_role: Role
    peer_id: str
    round_limit: int
    per_issue: dict[str, ConcessionState]
    bounds: dict[str, IssueBounds]
    strategy: Strategy = LINEAR_STRATEGY
    round: int = 0
    peer_round: int = -1
    status: SessionStatus = SessionStatus.ACTIVE
    abort_reason: str | None = None
    last_peer_offer: dict[str, float] = field(default_factory=dict)
    last_sent: dict[str, float] = field(default_factory=dict)

    @property
    def leaf_ids(self) -> tuple[str, ...]:
        return tuple(self.per_issue)

    def unsealed(self) -> list[str]:
        return [leaf for leaf, state in self.per_issue.items() if not state.accepted]

    def sealed_prices(self) -> dict[str, float]:
        return {leaf: state.sealed_price
                for leaf, state in self.per_issue.items()
                if state.sealed_price is not None}

    def sealed_total(self) -> float:
        return sum(self.sealed_prices().values())


def open_session(
    negotiation_id: str,
    product: ProductSpec,
    self_id: str,
    self_role: Role,
    peer_id: str,
    valuations: Mapping[str, IssueValuation],
    round_limit: int,
    strategy: Strategy = LINEAR_STRATEGY,
) -> NegotiationSession:
    """Build a session from one side's private valuations."""
    if set(valuations) != set(product.leaves):
        raise EngineError(
            f"valuations must cover the product's issues {sorted(product.leaves)}"
        )
    if round_limit < 0:
        raise EngineError("round_limit must be >= 0")
    bounds: dict[str, IssueBounds] = {}
    per_issue: dict[str, ConcessionState] = {}
    for leaf in product.leaves:
        valuation = valuations[leaf]
        band = utility_band(valuation, product.non_functional)
        # Floor and ceiling straight from the valuation: algebraically equal
        # to price_at_utility of the band ends, without the float round trip.
        bounds[leaf] = IssueBounds(
            leaf_id=leaf,
            weight=valuation.weight,
            band=band,
            floor_price=valuation.actual_cost,
            ceiling_price=valuation.cost_with_margin,
        )
        per_issue[leaf] = ConcessionState(
            leaf_id=leaf,
            u_target=strategy.initial_utility(band, self_role),
        )
    return NegotiationSession(
        negotiation_id=negotiation_id,
        product=product,
        self_id=self_id,
        self_role=self_role,
        peer_id=peer_id,
        round_limit=round_limit,
        per_issue=per_issue,
        bounds=bounds,
        strategy=strategy,
    )


# -- concession math ----------------------------------------------------------


def decay_utility(
    u_old: float,
    penalty: float,
    t: int,
    w: float,
    band: UtilityBand | None = None,
) -> float:
    """Linear utility decrease; clamped into the band when one is given."""
    if w <= 0:
        raise EngineError("weight must be positive")
    if t < 0:
        raise EngineError("round counter must be >= 0")
    raw = linear_decay(u_old, penalty, t, w)
    return band.clamp(raw) if band is not None else raw


def derive_lambda(
    unaccepted: Sequence[tuple[float, float, UtilityBand]],
    rounds_remaining: int,
) -> float:
    """Penalty that spreads the open utility gap over the remaining rounds.

    ``unaccepted`` lists (offered price, weight, own band) per open issue.
    Solves  sum(x_i * penalty / w_i) = sum(gap_i) / rounds_remaining.
    """
    if not unaccepted:
        raise EngineError("at least one unaccepted issue required")
    if rounds_remaining < 1:
        raise EngineError("rounds_remaining must be >= 1")
    weighted = 0.0
    gap = 0.0
    for price, weight, band in unaccepted:
        if weight <= 0:
            raise EngineError("weight must be positive")
        weighted += price / weight
        gap += band.gap
    if weighted <= 0:
        raise DegenerateOffer("all unaccepted offered prices are zero")
    return (gap / rounds_remaining) / weighted


def _acceptable(session: NegotiationSession, leaf: str, price: float) -> bool:
    bound = session.bounds[leaf]
    if session.strategy.accepts is not None:
        verdict = session.strategy.accepts(
            price, bound.floor_price, bound.ceiling_price, session.self_role
        )
        if verdict is not None:
            return verdict
    if session.self_role is Role.SELLER:
        return price >= bound.floor_price
    return price <= bound.ceiling_price


# -- message generation and handling -------------------------------------------


def initial_offer(session: NegotiationSession) -> Message:
    """Opening offer at round 0: the strategy's starting target per issue."""
    if session.status is not SessionStatus.ACTIVE:
        raise EngineError(f"session {session.negotiation_id} is {session.status.value}")
    if session.round != 0 or session.last_sent:
        raise EngineError("initial offer only at round 0")
    if not session.per_issue:
        raise EngineError("no issues to offer on")
    prices = {
        leaf: price_at_utility(state.u_target, session.product.non_functional)
        for leaf, state in session.per_issue.items()
    }
    session.last_sent = dict(prices)
    return Message(MessageKind.OFFER, session.negotiation_id, session.self_id, 0, prices)


def evaluate_offer(
    session: NegotiationSession,
    offer: Mapping[str, float],
    mapper: Callable = map,
) -> dict[str, bool]:
    """Per-issue verdicts on the peer's prices; acceptable issues seal.

    Each issue is judged only on its own price, so verdicts may be computed
    concurrently; sealing is committed at the barrier afterwards.
    """
    unknown = set(offer) - set(session.per_issue)
    if unknown:
        raise ProtocolViolation(f"offer prices unknown issues: {sorted(unknown)}")
    session.last_peer_offer.update(offer)

    def judge(leaf: str) -> tuple[str, bool]:
        price = offer[leaf]
        state = session.per_issue[leaf]
        if state.accepted:
            return leaf, True
        return leaf, _acceptable(session, leaf, price)

    verdicts = dict(mapper(judge, [leaf for leaf in session.per_issue if leaf in offer]))
    for leaf, accepted in verdicts.items():
        state = session.per_issue[leaf]
        if accepted and not state.accepted:
            state.accepted = True
            state.sealed_price = offer[leaf]
    return verdicts


def counter_offer(
    session: NegotiationSession,
    verdicts: Mapping[str, bool],
    mapper: Callable = map,
) -> Message:
    """Advance one round: decay the rejected issues and restate the sealed.

    The penalty is derived once over all still-open issues (the round
    barrier) and then applied per issue, mirrored upward for buyers.
    """
    if session.status is not SessionStatus.ACTIVE:
        raise EngineError(f"session {session.negotiation_id} is {session.status.value}")
    open_leaves = [leaf for leaf in session.per_issue if not session.per_issue[leaf].accepted]
    if not open_leaves:
        raise EngineError("all issues sealed; finalize instead of countering")
    if session.round >= session.round_limit:
        raise EngineError("round limit reached")

    rounds_remaining = session.round_limit - session.round
    t = session.round + 1
    unaccepted = [
        (session.last_peer_offer.get(leaf, 0.0), session.bounds[leaf].weight,
         session.bounds[leaf].band)
        for leaf in open_leaves
    ]
    degenerate = False
    try:
        penalty = derive_lambda(unaccepted, rounds_remaining)
    except DegenerateOffer:
        penalty = 0.0
        degenerate = True

    def concede(leaf: str) -> tuple[str, float]:
        state = session.per_issue[leaf]
        bound = session.bounds[leaf]
        decayed = session.strategy.decay(state.u_target, penalty, t, bound.weight)
        if session.self_role is Role.BUYER:
            decayed = 2.0 * state.u_target - decayed
        return leaf, bound.band.clamp(decayed)

    targets = dict(mapper(concede, open_leaves))
    for leaf, target in targets.items():
        state = session.per_issue[leaf]
        state.penalty = penalty
        state.degenerate = degenerate
        state.u_target = target

    payload: dict[str, float] = {}
    for leaf, state in session.per_issue.items():
        if state.accepted:
            payload[leaf] = state.sealed_price  # type: ignore[assignment]
        else:
            payload[leaf] = price_at_utility(state.u_target, session.product.non_functional)
    session.round = t
    session.last_sent = dict(payload)
    return Message(MessageKind.COUNTER_OFFER, session.negotiation_id,
                   session.self_id, t, payload)


@dataclass(frozen=True)
class StepResult:
    outcome: str  # "continue" | "agreement" | "aborted"
    reply: Message | None = None
    final_prices: dict[str, float] | None = None
    reason: str | None = None


def step_round(
    session: NegotiationSession,
    incoming: Message,
    mapper: Callable = map,
) -> StepResult:
    """Apply one incoming message and produce the session's reaction."""
    if session.status is not SessionStatus.ACTIVE:
        raise EngineError(f"session {session.negotiation_id} is {session.status.value}")
    if incoming.negotiation_id != session.negotiation_id:
        raise ProtocolViolation("message for a different negotiation")
    if incoming.sender != session.peer_id:
        raise ProtocolViolation(f"unexpected sender {incoming.sender}")

    if incoming.kind in (MessageKind.OFFER, MessageKind.COUNTER_OFFER):
        if incoming.kind is MessageKind.OFFER and incoming.round != 0:
            raise ProtocolViolation("offer only at round 0")
        if incoming.round <= session.peer_round:
            raise ProtocolViolation(
                f"peer round went backwards: {incoming.round} after {session.peer_round}"
            )
        session.peer_round = incoming.round
        assert isinstance(incoming.payload, dict)
        verdicts = evaluate_offer(session, incoming.payload, mapper=mapper)
        if not session.unsealed():
            session.status = SessionStatus.TEMP_AGREED
            reply = Message(MessageKind.ACCEPT, session.negotiation_id,
                            session.self_id, session.round, tuple(session.per_issue))
            return StepResult("agreement", reply=reply,
                              final_prices=session.sealed_prices())
        if session.round >= session.round_limit:
            session.status = SessionStatus.ABORTED
            session.abort_reason = ROUND_LIMIT_REASON
            reply = Message(MessageKind.WITHDRAW, session.negotiation_id,
                            session.self_id, session.round)
            return StepResult("aborted", reply=reply, reason=ROUND_LIMIT_REASON)
        reply = counter_offer(session, verdicts, mapper=mapper)
        return StepResult("continue", reply=reply)

    if incoming.kind is MessageKind.ACCEPT:
        # Peer accepted our last offer: seal the open issues at our prices.
        for leaf in session.unsealed():
            state = session.per_issue[leaf]
            state.accepted = True
            state.sealed_price = session.last_sent[leaf]
        session.status = SessionStatus.TEMP_AGREED
        return StepResult("agreement", final_prices=session.sealed_prices())

    if incoming.kind is MessageKind.WITHDRAW:
        session.status = SessionStatus.ABORTED
        session.abort_reason = (
            ROUND_LIMIT_REASON if incoming.round >= session.round_limit
            else PEER_WITHDREW_REASON
        )
        return StepResult("aborted", reason=session.abort_reason)

    raise ProtocolViolation(f"{incoming.kind.value} is not valid while active")


# -- finalize across peers ------------------------------------------------------


@dataclass(frozen=True)
class FinalizeDecision:
    chosen_peer: str
    finalize_message: Message
    decline_messages: tuple[Message, ...]
    totals: dict[str, float]


def best_peer(role: Role, totals: Mapping[str, float]) -> str:
    """Most favorable peer: minimum total for buyers, maximum for sellers.

    Ties go to the lowest peer agent id.
    """
    if not totals:
        raise EngineError("no peers to choose from")
    better = min if role is Role.BUYER else max
    best_total = better(totals.values())
    return sorted(peer for peer, total in totals.items() if total == best_total)[0]


def finalize(sessions: Sequence[NegotiationSession]) -> FinalizeDecision:
    """Commit to the best temporarily-agreed peer and decline the rest."""
    agreed = [s for s in sessions if s.status is SessionStatus.TEMP_AGREED]
    if not agreed:
        raise EngineError("no temporarily agreed session to finalize")
    self_ids = {s.self_id for s in agreed}
    if len(self_ids) != 1:
        raise EngineError("finalize mixes sessions of different agents")
    role = agreed[0].self_role
    totals = {s.peer_id: s.sealed_total() for s in agreed}
    chosen = best_peer(role, totals)

    finalize_msg: Message | None = None
    declines: list[Message] = []
    for session in agreed:
        if session.peer_id == chosen:
            session.status = SessionStatus.FINALIZED
            finalize_msg = Message(MessageKind.FINALIZE, session.negotiation_id,
                                   session.self_id, session.round)
        else:
            session.status = SessionStatus.DECLINED
            declines.append(Message(MessageKind.DECLINE, session.negotiation_id,
                                    session.self_id, session.round))
    assert finalize_msg is not None
    return FinalizeDecision(chosen_peer=chosen, finalize_message=finalize_msg,
                            decline_messages=tuple(declines), totals=totals)


def apply_closing(session: NegotiationSession, incoming: Message) -> Message | None:
    """Handle a finalize or decline arriving at a temporarily-agreed session.

    A finalize is acknowledged with a finalize back (the two parties
    exchange them); a decline gets no reply.
    """
    if incoming.kind is MessageKind.FINALIZE:
        if session.status not in (SessionStatus.TEMP_AGREED, SessionStatus.FINALIZED):
            raise ProtocolViolation("finalize for a session not temporarily agreed")
        already = session.status is SessionStatus.FINALIZED
        session.status = SessionStatus.FINALIZED
        if already:
            return None
        return Message(MessageKind.FINALIZE, session.negotiation_id,
                       session.self_id, session.round)
    if incoming.kind is MessageKind.DECLINE:
        session.status = SessionStatus.DECLINED
        return None
    raise ProtocolViolation(f"{incoming.kind.value} is not a closing message")


# -- transcript application (mechanical replay) ---------------------------------


@dataclass
class TranscriptState:
    """Outcome reconstructed by replaying a transcript's messages."""

    negotiation_id: str
    participants: tuple[str, ...]
    status: str = "active"  # active|temp_agreed|finalized|declined|aborted
    final_prices: dict[str, float] | None = None
    reason: str | None = None
    rounds: dict[str, int] = field(default_factory=dict)
    messages: int = 0


class ReplayViolation(EngineError):
    """The transcript is inconsistent with the exchange rules."""


def apply_transcript(transcript: Sequence[Message]) -> TranscriptState:
    """Mechanically re-run a message sequence and reconstruct its outcome.

    Enforces the protocol invariants (offer first at round 0, rounds
    strictly increasing per sender, sealed prices stable forever) and
    derives the final prices from the offer the accept answered.
    """
    if not transcript:
        raise ReplayViolation("empty transcript")
    first = transcript[0]
    if first.kind is not MessageKind.OFFER or first.round != 0:
        raise ReplayViolation("transcript must begin with an offer at round 0")
    negotiation_id = first.negotiation_id

    last_offer: dict[str, dict[str, float]] = {}
    last_round: dict[str, int] = {}
    sealed: dict[str, float] = {}
    state = TranscriptState(negotiation_id=negotiation_id, participants=())
    senders: list[str] = []
    accepted = False

    for message in transcript:
        if message.negotiation_id != negotiation_id:
            raise ReplayViolation("transcript mixes negotiations")
        if message.sender not in senders:
            senders.append(message.sender)
        state.messages += 1
        state.rounds[message.sender] = message.round

        if message.kind in (MessageKind.OFFER, MessageKind.COUNTER_OFFER):
            if accepted:
                raise ReplayViolation("offer after acceptance")
            prev = last_round.get(message.sender)
            if prev is not None and message.round <= prev:
                raise ReplayViolation(
                    f"{message.sender} round {message.round} after {prev}"
                )
            last_round[message.sender] = message.round
            assert isinstance(message.payload, dict)
            for leaf, price in message.payload.items():
                if leaf in sealed and price != sealed[leaf]:
                    raise ReplayViolation(
                        f"sealed price for {leaf} changed: {sealed[leaf]} -> {price}"
                    )
            # A sender repeating the peer's standing price has accepted it.
            others = [s for s in senders if s != message.sender]
            peer_offer = last_offer.get(others[0], {}) if others else {}
            for leaf, price in message.payload.items():
                if leaf not in sealed and peer_offer.get(leaf) == price:
                    sealed[leaf] = price
            last_offer[message.sender] = dict(message.payload)

        elif message.kind is MessageKind.ACCEPT:
            others = [s for s in senders if s != message.sender]
            if not others or others[0] not in last_offer:
                raise ReplayViolation("accept with no standing offer")
            offer = last_offer[others[0]]
            assert isinstance(message.payload, tuple)
            missing = [leaf for leaf in message.payload if leaf not in offer]
            if missing:
                raise ReplayViolation(f"accept covers unknown issues {missing}")
            for leaf, price in offer.items():
                if leaf in sealed and sealed[leaf] != price:
                    raise ReplayViolation(f"accepted price for {leaf} conflicts with seal")
                sealed[leaf] = price
            accepted = True
            state.status = "temp_agreed"
            state.final_prices = dict(sealed)

        elif message.kind is MessageKind.WITHDRAW:
            state.status = "aborted"
            state.reason = ROUND_LIMIT_REASON
        elif message.kind is MessageKind.FINALIZE:
            if not accepted:
                raise ReplayViolation("finalize before acceptance")
            state.status = "finalized"
        elif message.kind is MessageKind.DECLINE:
            if not accepted:
                raise ReplayViolation("decline before acceptance")
            state.status = "declined"

    state.participants = tuple(senders)
    return state


__all__ = [
    "ConcessionState",
    "DegenerateOffer",
    "DuplicateStrategy",
    "EngineError",
    "FinalizeDecision",
    "IssueBounds",
    "LINEAR_STRATEGY",
    "Message",
    "MessageKind",
    "NegotiationSession",
    "PEER_WITHDREW_REASON",
    "ProtocolViolation",
    "ROUND_LIMIT_REASON",
    "ReplayViolation",
    "SessionStatus",
    "StepResult",
    "Strategy",
    "StrategyRegistry",
    "TranscriptState",
    "UnknownStrategy",
    "apply_closing",
    "apply_transcript",
    "best_peer",
    "counter_offer",
    "decay_utility",
    "derive_lambda",
    "evaluate_offer",
    "finalize",
    "initial_offer",
    "linear_decay",
    "open_session",
    "step_round",
]

"""Alliance engine: same-role agents pooling into one composite negotiator.

Before a group can act as one party its members settle two things between
themselves: the weight of each issue and how each issue's cost (and
revenue) is shared.  Weight agreement uses midpoint convergence: every
round each member moves halfway toward the group mean, so proposals
contract geometrically onto the mean and the agreed value always lies in
the hull of the original proposals.  Cost shares default to each member's
fraction of the group's maximum payoff.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import (
    IssueValuation,
    NonFunctionalAttribute,
    payoff_bounds,
    utility_band,
)
from .repository import AgentRecord, Role

REL_AGREEMENT_GAP = 1e-6


class AllianceError(Exception):
    pass


class InternalDeadlock(AllianceError):
    """The members could not close their weight gap within the round budget."""


@dataclass(frozen=True)
class MemberProposal:
    """One member's opening position: its valuations and proposed weights."""

    record: AgentRecord
    valuations: dict[str, IssueValuation]
    weights: dict[str, float]


@dataclass(frozen=True)
class AllianceTerms:
    member_ids: tuple[str, ...]
    weights: dict[str, float]
    cost_shares: dict[str, dict[str, float]]  # member -> leaf -> fraction


@dataclass(frozen=True)
class CompositeAgent:
    agent_id: str
    members: tuple[AgentRecord, ...]
    terms: AllianceTerms
    role: Role
    valuations: dict[str, IssueValuation]


def _check_members(proposals: list[MemberProposal]) -> tuple[Role, list[str]]:
    if len(proposals) < 2:
        raise AllianceError("an alliance needs at least two members")
    role = proposals[0].record.role
    leaves = sorted(proposals[0].valuations)
    for proposal in proposals[1:]:
        if proposal.record.role is not role:
            raise AllianceError("alliance members must share a role")
        if sorted(proposal.valuations) != leaves:
            raise AllianceError("alliance members must value the same issues")
    return role, leaves


def negotiate_terms(
    proposals: list[MemberProposal],
    max_internal_rounds: int,
    non_functional: tuple[NonFunctionalAttribute, ...] = (),
) -> AllianceTerms:
    """Settle per-issue weights and cost shares among the members.

    Raises InternalDeadlock if the relative weight gap on any issue is
    still >= 1e-6 after ``max_internal_rounds`` rounds; callers then let
    the members proceed solo.
    """
    _, leaves = _check_members(proposals)

    positions = {leaf: [p.weights.get(leaf, 1.0) for p in proposals] for leaf in leaves}
    agreed: dict[str, float] = {}
    for leaf, values in positions.items():
        mean = sum(values) / len(values)
        rounds = 0
        while True:
            spread = max(values) - min(values)
            scale = max(abs(mean), 1e-12)
            if spread / scale < REL_AGREEMENT_GAP:
                break
            if rounds >= max_internal_rounds:
                raise InternalDeadlock(
                    f"issue {leaf}: weight gap {spread:.3g} after {rounds} rounds"
                )
            values = [(v + mean) / 2 for v in values]
            rounds += 1
        agreed[leaf] = mean

    # Shares proportional to each member's maximum payoff; equal split when
    # every member's payoff is zero.
    payoffs = []
    for proposal in proposals:
        bands = [utility_band(v, non_functional) for v in proposal.valuations.values()]
        payoffs.append(payoff_bounds(bands)[1])
    total = sum(payoffs)
    if total > 0:
        fractions = [p / total for p in payoffs]
    else:
        fractions = [1.0 / len(proposals)] * len(proposals)

    member_ids = tuple(p.record.agent_id for p in proposals)
    cost_shares = {
        member_id: {leaf: fraction for leaf in leaves}
        for member_id, fraction in zip(member_ids, fractions)
    }
    return AllianceTerms(member_ids=member_ids, weights=agreed, cost_shares=cost_shares)


def composite_agent_id(member_ids: tuple[str, ...]) -> str:
    return "ally:" + "+".join(sorted(member_ids))


def form_composite(
    proposals: list[MemberProposal],
    terms: AllianceTerms,
    agent_id: str | None = None,
) -> CompositeAgent:
    """Fuse the members into one agent valued at their summed costs.

    Per-issue floors add up, so the composite can never be pushed below
    any member's own floor.
    """
    role, leaves = _check_members(proposals)
    composite_id = agent_id or composite_agent_id(terms.member_ids)
    valuations: dict[str, IssueValuation] = {}
    for leaf in leaves:
        actual = sum(p.valuations[leaf].actual_cost for p in proposals)
        margin = sum(p.valuations[leaf].cost_with_margin for p in proposals)
        valuations[leaf] = IssueValuation(leaf, actual, margin, terms.weights[leaf])
    return CompositeAgent(
        agent_id=composite_id,
        members=tuple(p.record for p in proposals),
        terms=terms,
        role=role,
        valuations=valuations,
    )


def composite_record(composite: CompositeAgent) -> AgentRecord:
    """The registry row for a composite; allies stays off to bar re-allying."""
    return AgentRecord(
        agent_id=composite.agent_id,
        name="alliance of " + ", ".join(m.name or m.agent_id for m in composite.members),
        address="composite:" + composite.agent_id,
        role=composite.role,
        allies=False,
        priority=max(m.priority for m in composite.members),
    )


def distribute_outcome(
    terms: AllianceTerms,
    final_prices: dict[str, float],
) -> dict[str, float]:
    """Split the deal's per-issue prices among members by their cost shares."""
    payouts: dict[str, float] = {}
    for member_id in terms.member_ids:
        shares = terms.cost_shares[member_id]
        payouts[member_id] = sum(
            shares.get(leaf, 0.0) * price for leaf, price in final_prices.items()
        )
    return payouts


__all__ = [
    "AllianceError",
    "AllianceTerms",
    "CompositeAgent",
    "InternalDeadlock",
    "MemberProposal",
    "composite_agent_id",
    "composite_record",
    "distribute_outcome",
    "form_composite",
    "negotiate_terms",
]

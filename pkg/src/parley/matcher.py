"""Condition checker and admission control.

Scans the repository for products with at least one buyer and one seller
and spawns a market per such product.  A system-wide party capacity keeps
the marketplace from overloading: agents beyond it wait in a queue drained
first-come-first-serve or by priority.  Same-role advertisers that raised
their allies flag are grouped for the alliance engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .repository import Repository, Role


class MatcherError(Exception):
    pass


@dataclass(frozen=True)
class MarketSpawn:
    """A product ready to trade: the consumed buyer and seller ads."""

    product_id: str
    buyer_ad_ids: tuple[str, ...]
    seller_ad_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.buyer_ad_ids or not self.seller_ad_ids:
            raise MatcherError("a market needs at least one buyer and one seller")


class QueuePolicy(str, Enum):
    FCFS = "fcfs"
    PRIORITY = "priority"


@dataclass(frozen=True)
class Admitted:
    agent_id: str


@dataclass(frozen=True)
class Queued:
    agent_id: str
    position: int


@dataclass(frozen=True)
class QueueEntry:
    agent_id: str
    arrival_seq: int
    priority: int


class WaitingQueue:
    """Ordered holding area for agents beyond capacity.

    FCFS orders by arrival; priority orders by descending priority with
    arrival as the tie-break.
    """

    def __init__(self, policy: QueuePolicy = QueuePolicy.FCFS) -> None:
        self.policy = policy
        self._entries: list[QueueEntry] = []

    def _key(self, entry: QueueEntry) -> tuple:
        if self.policy is QueuePolicy.PRIORITY:
            return (-entry.priority, entry.arrival_seq)
        return (entry.arrival_seq,)

    def push(self, agent_id: str, arrival_seq: int, priority: int = 0) -> int:
        if any(e.agent_id == agent_id for e in self._entries):
            raise MatcherError(f"agent {agent_id} already queued")
        entry = QueueEntry(agent_id, arrival_seq, priority)
        self._entries.append(entry)
        self._entries.sort(key=self._key)
        return self._entries.index(entry)

    def pop(self) -> str | None:
        if not self._entries:
            return None
        return self._entries.pop(0).agent_id

    def remove(self, agent_id: str) -> bool:
        for i, entry in enumerate(self._entries):
            if entry.agent_id == agent_id:
                del self._entries[i]
                return True
        return False

    def members(self) -> tuple[str, ...]:
        return tuple(e.agent_id for e in self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, agent_id: str) -> bool:
        return any(e.agent_id == agent_id for e in self._entries)


@dataclass
class AdmissionController:
    """Linearizable admit/release gate over a bounded set of active parties."""

    capacity: int
    policy: QueuePolicy = QueuePolicy.FCFS
    admitted: set[str] = field(default_factory=set)
    queue: WaitingQueue = field(init=False)
    _arrivals: int = 0

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise MatcherError("capacity must be positive")
        self.queue = WaitingQueue(self.policy)

    def admit(self, agent_id: str, priority: int = 0) -> Admitted | Queued:
        if agent_id in self.admitted or agent_id in self.queue:
            raise MatcherError(f"agent {agent_id} already present")
        self._arrivals += 1
        if len(self.admitted) < self.capacity:
            self.admitted.add(agent_id)
            return Admitted(agent_id)
        position = self.queue.push(agent_id, self._arrivals, priority)
        return Queued(agent_id, position)

    def release(self, agent_id: str) -> str | None:
        """Free the departing agent's slot and promote the queue head, if any."""
        self.admitted.discard(agent_id)
        self.queue.remove(agent_id)
        return self.release_slot()

    def release_slot(self) -> str | None:
        """Admit the policy-determined head of the queue into a free slot."""
        if len(self.admitted) >= self.capacity:
            return None
        head = self.queue.pop()
        if head is not None:
            self.admitted.add(head)
        return head

    def frozen_agents(self) -> tuple[str, ...]:
        return self.queue.members()


def scan(repo: Repository, eligible: set[str] | None = None) -> list[MarketSpawn]:
    """Spawn one market per product with both roles among eligible advertisers.

    Consumed ads leave the live set, so no ad can appear in two spawns.
    Products are visited in sorted id order for determinism.
    """
    spawns: list[MarketSpawn] = []
    product_ids = sorted({ad.product_id for ad in repo.live_ads()})
    for product_id in product_ids:
        buyers, sellers = repo.find_matches(product_id)
        if eligible is not None:
            buyers = [ad for ad in buyers if ad.agent_id in eligible]
            sellers = [ad for ad in sellers if ad.agent_id in eligible]
        if buyers and sellers:
            spawn = MarketSpawn(
                product_id=product_id,
                buyer_ad_ids=tuple(ad.ad_id for ad in buyers),
                seller_ad_ids=tuple(ad.ad_id for ad in sellers),
            )
            repo.consume_ads(spawn.buyer_ad_ids + spawn.seller_ad_ids)
            spawns.append(spawn)
    return spawns


def detect_allies(
    repo: Repository,
    product_id: str,
    eligible: set[str] | None = None,
) -> list[tuple[str, ...]]:
    """Groups of two or more same-role advertisers with the allies flag raised."""
    groups: list[tuple[str, ...]] = []
    for role in (Role.BUYER, Role.SELLER):
        members: list[str] = []
        for ad in repo.live_ads():
            if ad.product_id != product_id:
                continue
            if eligible is not None and ad.agent_id not in eligible:
                continue
            record = repo.get_agent(ad.agent_id)
            if record.role is role and record.allies and ad.agent_id not in members:
                members.append(ad.agent_id)
        if len(members) >= 2:
            groups.append(tuple(members))
    return groups


__all__ = [
    "Admitted",
    "AdmissionController",
    "MarketSpawn",
    "MatcherError",
    "QueueEntry",
    "QueuePolicy",
    "Queued",
    "WaitingQueue",
    "detect_allies",
    "scan",
]

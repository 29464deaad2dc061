"""parley: agent marketplace with concurrent multi-issue negotiation.

Core pieces: the valuation math (:mod:`parley.domain`), the advertisement
repository (:mod:`parley.repository`), matchmaking and admission control
(:mod:`parley.matcher`), alliances (:mod:`parley.alliance`), the
negotiation engine (:mod:`parley.engine`), the history store
(:mod:`parley.history`), and the deterministic simulation harness
(:mod:`parley.simulation`, :mod:`parley.wire`).
"""

from .domain import (
    AttributeNode,
    IssueValuation,
    NonFunctionalAttribute,
    ProductSpec,
    UtilityBand,
    derive_default_valuations,
    payoff_bounds,
    price_at_utility,
    utility_band,
    validate_tree,
)
from .engine import (
    Message,
    MessageKind,
    NegotiationSession,
    SessionStatus,
    Strategy,
    StrategyRegistry,
    derive_lambda,
    finalize,
    initial_offer,
    open_session,
    step_round,
)
from .history import HistoryRecord, HistoryStore, replay
from .matcher import AdmissionController, QueuePolicy, WaitingQueue, detect_allies, scan
from .repository import Advertisement, AgentRecord, Repository, Role
from .scenario import Scenario, load_scenario, scenario_from_dict
from .simulation import run_scenario, verify_transcript, write_artifacts

__version__ = "0.1.0"

__all__ = [
    "AdmissionController",
    "Advertisement",
    "AgentRecord",
    "AttributeNode",
    "HistoryRecord",
    "HistoryStore",
    "IssueValuation",
    "Message",
    "MessageKind",
    "NegotiationSession",
    "NonFunctionalAttribute",
    "ProductSpec",
    "QueuePolicy",
    "Repository",
    "Role",
    "Scenario",
    "SessionStatus",
    "Strategy",
    "StrategyRegistry",
    "UtilityBand",
    "WaitingQueue",
    "derive_default_valuations",
    "derive_lambda",
    "detect_allies",
    "finalize",
    "initial_offer",
    "load_scenario",
    "open_session",
    "payoff_bounds",
    "price_at_utility",
    "replay",
    "run_scenario",
    "scan",
    "scenario_from_dict",
    "step_round",
    "utility_band",
    "validate_tree",
    "verify_transcript",
    "write_artifacts",
    "__version__",
]

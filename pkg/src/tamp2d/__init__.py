"""tamp2d: task-and-motion planning over 2D geometric domains.

Symbolic skeletons come from top-k planning over an action+stream language;
concrete motion values are bound by a single extended decision tree with a
skeleton bandit at its root and progressive-widening UCT below.
"""

from .expand import ExpansionResult, optimistic_expand
from .geometry import (
    BACKENDS,
    EnvironmentBackend,
    EnvState,
    StreamSample,
    TransitionOutcome,
    make_backend,
    register_backend,
)
from .model import (
    ActionSchema,
    GroundOperator,
    Literal,
    Obj,
    PlanTrace,
    Problem,
    State,
    StreamSchema,
    TraceStep,
    lit,
)
from .parser import (
    ParseError,
    emit_plan_trace,
    parse_domain,
    parse_problem,
)
from .skeleton import Skeleton, layerize, top_k_skeletons
from .topk import SymbolicPlan, TopKResult, top_k
from .tree import (
    ExtendedTree,
    RewardParams,
    SearchConfig,
    VirtualClock,
    WallClock,
    etamp,
    etamp_with_tree,
    extended_tree_search,
    pw_test,
    reward,
    select_child,
)

__version__ = "0.1.0"

__all__ = [
    "ActionSchema", "BACKENDS", "EnvState", "EnvironmentBackend",
    "ExpansionResult", "ExtendedTree", "GroundOperator", "Literal", "Obj",
    "ParseError", "PlanTrace", "Problem", "RewardParams", "SearchConfig",
    "Skeleton", "State", "StreamSample", "StreamSchema", "SymbolicPlan",
    "TopKResult", "TraceStep", "TransitionOutcome", "VirtualClock",
    "WallClock", "emit_plan_trace", "etamp", "etamp_with_tree",
    "extended_tree_search", "layerize", "lit", "make_backend",
    "optimistic_expand", "parse_domain", "parse_problem", "pw_test",
    "register_backend", "reward", "select_child", "top_k",
    "top_k_skeletons",
]

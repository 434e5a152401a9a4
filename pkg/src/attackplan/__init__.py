"""Attack planning as POMDP solving, with the four-level network decomposition."""

from .errors import (
    AttackPlanError,
    CapExceededError,
    ImpossibleObservationError,
    InvalidInputError,
    ModelError,
    SimulationError,
)
from .network import Firewall, LogicalNetwork, Subnetwork, biconnected_components, clean_up, cut_vertices, decompose
from .pomdp import PolicyNode, PomdpModel, belief_update, brute_force_value, evaluate_policy, solve_exact
from .updates import MachineBelief, ProgramChain, SnapshotConfig, UpdateModel, build_initial_belief, propagate_chain
from .machine import ActionSpec, MachinePomdpRequest, ProgramSpec, create_machine_pomdp, merge_indistinguishable_states

__version__ = "0.1.0"

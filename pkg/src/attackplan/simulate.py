"""Monte Carlo evaluation of single-machine and network policies.

Outcomes are deterministic given the hidden configuration, so a run is
fully determined by the start states drawn from the initial belief.
Paired comparisons reuse the same draws for both policies.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._kernels import run_policy
from .baseline import GlobalProblem
from .errors import InvalidInputError, SimulationError
from .network import EMPTY_FIREWALL
from .planner import AttackPolicy, assemble_policy
from .pomdp import PolicyNode, PomdpModel

__all__ = [
    "SimulationReport",
    "simulate_policy_mc",
    "NetworkEnv",
    "sample_start_states",
    "run_attack_policy",
    "run_global_policy",
    "simulate_attack_policy",
    "simulate_global_policy",
    "paired_simulation",
]

Z95 = 1.96


@dataclass(frozen=True)
class SimulationReport:
    runs: int
    mean: float
    std: float
    half_width: float
    seed: int | None

    @classmethod
    def from_totals(cls, totals, seed=None):
        totals = np.asarray(totals, dtype=float)
        n = len(totals)
        std = float(totals.std(ddof=1)) if n > 1 else 0.0
        return cls(n, float(totals.mean()), std, Z95 * std / math.sqrt(n), seed)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_runs(n):
    if int(n) != n or n < 1:
        raise InvalidInputError(f"number of runs must be a positive integer, got {n!r}", "runs")
    return int(n)


def simulate_policy_mc(model: PomdpModel, policy: PolicyNode, n: int = 2000, seed=None) -> SimulationReport:
    """Sample ``n`` start states from b0 and execute ``policy`` on each."""
    n = _check_runs(n)
    rng = np.random.default_rng(seed)
    b0 = model.b0 / model.b0.sum()
    starts = rng.choice(len(b0), size=n, p=b0)
    try:
        node_action, node_child = policy.flatten(model)
    except KeyError as exc:
        raise SimulationError(f"policy uses a name unknown to the model: {exc.args[0]!r}") from None
    totals, _ = run_policy(model.next_state, model.observation, model.reward, node_action, node_child, starts)
    return SimulationReport.from_totals(totals, seed)


# -- network level ---------------------------------------------------------


class NetworkEnv:
    """True state of every reachable machine, with firewall checks on each action."""

    def __init__(self, scenario, problem: GlobalProblem | None = None):
        self.problem = problem or GlobalProblem(scenario)
        p = self.problem
        self.action_index = [{a.name: k for k, a in enumerate(proc.actions)} for proc in p.procs]
        self.state = np.zeros(len(p.machines), dtype=np.int64)
        self.total = 0.0

    def reset(self, states):
        self.state = np.array(states, dtype=np.int64)
        self.total = 0.0

    def controlled(self):
        p = self.problem
        return [i for i, proc in enumerate(p.procs) if self.state[i] == proc.controlled]

    def controlled_subnets(self):
        return self.problem.controlled_subnets(self.controlled())

    def is_controlled(self, m) -> bool:
        i = self.problem.index.get(m)
        return i is not None and self.state[i] == self.problem.procs[i].controlled

    def firewall(self, m):
        i = self.problem.index.get(m)
        if i is None:
            return None
        return self.problem.firewall(i, self.controlled_subnets())

    def act(self, m, action) -> str:
        """Play ``action`` (name or index) on machine ``m``; returns the observation."""
        p = self.problem
        i = p.index.get(m)
        if i is None:
            raise SimulationError(f"machine {m!r} is not reachable from the attacker")
        proc = p.procs[i]
        a = action if isinstance(action, (int, np.integer)) else self.action_index[i].get(action)
        if a is None:
            raise SimulationError(f"machine {m!r} has no action {action!r}")
        fw = p.firewall(i, self.controlled_subnets())
        if fw is None:
            raise SimulationError(f"machine {m!r} is not reachable yet")
        if not proc.usable(a, fw):
            raise SimulationError(f"action {proc.actions[a].name!r} on {m!r} is blocked by the firewall")
        t, obs, ok = proc.step[a][self.state[i]]
        spec = proc.actions[a]
        self.total += spec.time_cost + spec.detect_cost + (p.values[i] if ok else 0.0)
        self.state[i] = t
        return obs


def sample_start_states(problem: GlobalProblem, n, rng) -> np.ndarray:
    """Independent draws of every machine's local start state, shape ``(n, machines)``."""
    out = np.zeros((n, len(problem.machines)), dtype=np.int64)
    for i, proc in enumerate(problem.procs):
        b0 = proc.b0 / proc.b0.sum()
        out[:, i] = rng.choice(len(b0), size=n, p=b0)
    return out


def _run_machine(env: NetworkEnv, m, node: PolicyNode):
    while not node.is_leaf:
        obs = env.act(m, node.action)
        node = node.children.get(obs)
        if node is None:
            return


def run_attack_policy(env: NetworkEnv, policy: AttackPolicy, schedule=None) -> float:
    """Execute the 4AL plan once from the env's current state.

    Components run root-down and only when their parent subnet is held.
    A path stops at the first subnet it fails to enter.  A machine that was
    already attacked earlier in the run is not attacked again, and counts as
    a failed entry.
    """
    schedule = schedule if schedule is not None else assemble_policy(policy)
    root = policy.tree.network.root
    attempted = set()
    for _, parent, paths in schedule:
        if parent != root and parent not in env.controlled_subnets():
            continue
        for path in paths:
            for step in path.steps:
                if step.subnet in env.controlled_subnets():
                    continue
                m = step.first
                if m is None or m in attempted:
                    break
                attempted.add(m)
                _run_machine(env, m, policy.machine_policy(m, step.firewall, step.reward))
                if not env.is_controlled(m):
                    break
                for other, r in step.residual:
                    if other in attempted or env.is_controlled(other):
                        continue
                    attempted.add(other)
                    _run_machine(env, other, policy.machine_policy(other, EMPTY_FIREWALL, r))
    return env.total


def run_global_policy(env: NetworkEnv, solver) -> float:
    """Execute the exact global policy once, re-deciding after every observation."""
    p = solver.p
    supports, avail = solver.root()
    while True:
        move = solver.decide(supports, avail)
        if move is None:
            return env.total
        i, a = move
        obs = env.act(p.machines[i], a)
        supports, avail = solver.step(supports, avail, i, a, obs)


def _simulate(scenario, runner, n, seed, problem=None, starts=None):
    n = _check_runs(n)
    problem = problem or GlobalProblem(scenario)
    if starts is None:
        starts = sample_start_states(problem, n, np.random.default_rng(seed))
    env = NetworkEnv(scenario, problem)
    totals = np.zeros(len(starts))
    for k, row in enumerate(starts):
        env.reset(row)
        totals[k] = runner(env)
    return totals


def simulate_attack_policy(scenario, policy: AttackPolicy, n=2000, seed=None) -> SimulationReport:
    schedule = assemble_policy(policy)
    totals = _simulate(scenario, lambda env: run_attack_policy(env, policy, schedule), n, seed)
    return SimulationReport.from_totals(totals, seed)


def simulate_global_policy(scenario, solver, n=2000, seed=None) -> SimulationReport:
    totals = _simulate(scenario, lambda env: run_global_policy(env, solver), n, seed, solver.p)
    return SimulationReport.from_totals(totals, seed)


def paired_simulation(scenario, policy: AttackPolicy, solver, n=2000, seed=None):
    """Run both policies on the same start states.

    Returns ``(report_4al, report_global, per_run_difference)`` where the
    difference is global minus 4AL.
    """
    n = _check_runs(n)
    problem = solver.p
    starts = sample_start_states(problem, n, np.random.default_rng(seed))
    schedule = assemble_policy(policy)
    a = _simulate(scenario, lambda env: run_attack_policy(env, policy, schedule), n, seed, problem, starts)
    g = _simulate(scenario, lambda env: run_global_policy(env, solver), n, seed, problem, starts)
    return SimulationReport.from_totals(a, seed), SimulationReport.from_totals(g, seed), g - a

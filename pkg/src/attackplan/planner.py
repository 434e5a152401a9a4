"""Four-level attack planning (4AL).

Level 1 walks the rooted component tree bottom-up and passes each
component's value to the subnet it hangs from as a pivoting reward.
Level 2 picks, inside a component, the best simple attack path to each
rewarded subnet.  Level 3 chooses which machine of a subnet to break into
first.  Level 4 solves the single-machine POMDP and caches the result.

Every level only adds values of policies that can actually be executed
one after another, so the total never exceeds the optimum of the global
model.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .errors import CapExceededError
from .machine import MachinePomdpRequest, create_machine_pomdp
from .network import EMPTY_FIREWALL, ComponentTree, Firewall, decompose
from .pomdp import PolicyNode, solve_exact, terminate_policy

__all__ = [
    "Level4Cache",
    "SubnetAttack",
    "AttackPath",
    "ComponentPlan",
    "AttackPolicy",
    "level1",
    "level2",
    "level3",
    "level4",
    "plan",
    "assemble_policy",
    "report",
]

log = logging.getLogger(__name__)

KEY_DIGITS = 9
MAX_PATHS = 10**6


def _rkey(r):
    return round(float(r), KEY_DIGITS)


class Level4Cache:
    """Memo of single-machine solves keyed by (machine, firewall, reward).

    A second table keyed by the machine's local model and the usable
    action set lets identical machines share one solve.
    """

    def __init__(self, scenario, max_nodes=None):
        self.scenario = scenario
        self.max_nodes = max_nodes
        self.table = {}
        self._solved = {}
        self._profiles = {}
        self.calls = 0
        self.hits = 0
        self.solves = 0

    def _profile(self, m):
        prof = self._profiles.get(m)
        if prof is None:
            proc = self.scenario.process(m)
            prof = (proc.actions, proc.states, proc.b0.tobytes(),
                    tuple(sorted((p, self.scenario.programs[p]) for p in proc.programs)))
            self._profiles[m] = prof
        return prof

    def get(self, m, firewall: Firewall, reward: float):
        self.calls += 1
        key = (m, firewall, _rkey(reward))
        hit = self.table.get(key)
        if hit is not None:
            self.hits += 1
            return hit
        proc = self.scenario.process(m)
        usable = tuple(a for a in range(len(proc.actions)) if proc.usable(a, firewall))
        shared = (self._profile(m), usable, key[2])
        out = self._solved.get(shared)
        if out is None:
            if reward <= 0 or not usable:
                out = (0.0, terminate_policy())
            else:
                req = MachinePomdpRequest(m, firewall, float(reward), self.scenario.belief(m))
                model = create_machine_pomdp(req, proc.actions, self.scenario.programs, process=proc)
                out = solve_exact(model, self.max_nodes)
                self.solves += 1
            self._solved[shared] = out
        self.table[key] = out
        return out

    def stats(self) -> dict:
        return {
            "calls": self.calls,
            "hits": self.hits,
            "distinct_keys": len(self.table),
            "solves": self.solves,
        }


def level4(m, firewall, reward, cache: Level4Cache) -> float:
    return cache.get(m, firewall, reward)[0]


@dataclass
class SubnetAttack:
    """Level-3 decision: break into ``first`` through ``firewall`` for reward ``reward``,
    then take the other machines through the empty firewall."""

    subnet: str
    firewall: Firewall
    first: str | None
    reward: float
    value: float
    residual: list = field(default_factory=list)


@dataclass
class AttackPath:
    target: str
    vertices: tuple
    firewalls: tuple
    steps: list
    value: float


@dataclass
class ComponentPlan:
    index: int
    parent: str | None
    members: frozenset
    paths: list
    value: float


@dataclass
class AttackPolicy:
    tree: ComponentTree
    components: dict
    pivot_rewards: dict
    value: float
    cache: Level4Cache

    def machine_policy(self, m, firewall, reward) -> PolicyNode:
        return self.cache.get(m, firewall, reward)[1]


def level3(scenario, subnet, firewall, pr, path_reward, rewards, cache) -> SubnetAttack:
    """Best first machine for entering ``subnet`` through ``firewall``.

    ``rewards`` holds the (possibly already claimed, hence zeroed) machine
    values used for this evaluation.
    """
    machines = scenario.network.subnets[subnet].machines
    if not machines:
        return SubnetAttack(subnet, firewall, None, 0.0, 0.0)
    inside = {m: level4(m, EMPTY_FIREWALL, rewards[m], cache) for m in machines}
    best = None
    for m in machines:
        rest = sum(v for o, v in inside.items() if o != m)
        R = rewards[m] + pr + path_reward + rest
        v = level4(m, firewall, R, cache)
        if best is None or v > best.value + 1e-12:
            residual = sorted((o for o in machines if o != m), key=lambda o: (-inside[o], o))
            best = SubnetAttack(subnet, firewall, m, R,
                                v, [(o, rewards[o]) for o in residual])
    return best


def _simple_paths(net, component, entries, target, cap):
    """Entry-to-target simple paths inside ``component``, depth first."""
    out = []
    for start in sorted(entries):
        stack = [(start, (start,))]
        while stack:
            v, path = stack.pop()
            if v == target:
                out.append(path)
                if len(out) > cap:
                    raise CapExceededError(f"more than {cap} attack paths to {target!r}")
                continue
            for w in reversed(net.successors(v)):
                if w in component and w not in path:
                    stack.append((w, path + (w,)))
    return out


def level2(scenario, tree: ComponentTree, index, pr, rewards, cache, max_paths=MAX_PATHS) -> ComponentPlan:
    """Greedy sum of best attack paths to every rewarded subnet of a component.

    Targets are taken by decreasing ``r(N) + pr(N)`` (ties by name).  The
    vertices of a chosen path have their rewards claimed, so each reward
    counts at most once.  A target whose best path is worth nothing only
    gives up its own reward.
    """
    net = tree.network
    comp = tree.components[index]
    parent = tree.parent[index]
    entries = tree.entries[index]
    pr = dict(pr)

    def own(n):
        return sum(rewards[m] for m in net.subnets[n].machines)

    total = 0.0
    paths = []
    while True:
        todo = [n for n in comp if own(n) > 0 or pr.get(n, 0.0) > 0]
        if not todo:
            break
        target = min(todo, key=lambda n: (-(own(n) + pr.get(n, 0.0)), n))
        best = None
        for path in _simple_paths(net, comp, entries, target, max_paths):
            fws = (net.firewall(parent, path[0]),) + tuple(
                net.firewall(a, b) for a, b in zip(path, path[1:])
            )
            R = 0.0
            steps = []
            for n, fw in zip(reversed(path), reversed(fws)):
                step = level3(scenario, n, fw, pr.get(n, 0.0), R, rewards, cache)
                steps.append(step)
                R = step.value
            if best is None or R > best.value + 1e-12:
                best = AttackPath(target, path, fws, steps[::-1], R)
        if best is None or best.value <= 0.0:
            log.debug("component %d: target %s not worth attacking", index, target)
            claimed = (target,)
        else:
            total += best.value
            paths.append(best)
            claimed = best.vertices
        for n in claimed:
            pr[n] = 0.0
            for m in net.subnets[n].machines:
                rewards[m] = 0.0
    return ComponentPlan(index, parent, comp, paths, total)


def level1(scenario, cache=None, max_paths=MAX_PATHS):
    """Value of attacking the whole network from the attacker root.

    Returns ``(value, AttackPolicy)``.
    """
    cache = cache or Level4Cache(scenario)
    tree = decompose(scenario.network)
    net = tree.network
    pr = {n: 0.0 for n in net.subnets}
    rewards = {m: scenario.value(m) for m in net.machines}
    plans = {}
    for i in reversed(tree.order[1:]):
        plan_i = level2(scenario, tree, i, pr, rewards, cache, max_paths)
        plans[i] = plan_i
        pr[tree.parent[i]] += plan_i.value
    value = pr[net.root]
    return value, AttackPolicy(tree, plans, pr, value, cache)


def plan(scenario, max_nodes=None, max_paths=MAX_PATHS):
    """Run 4AL and return the assembled :class:`AttackPolicy`."""
    cache = Level4Cache(scenario, max_nodes)
    return level1(scenario, cache, max_paths)[1]


def assemble_policy(policy: AttackPolicy):
    """Executable schedule: components root-down, paths in chosen order.

    Each entry is ``(component index, parent subnet, [AttackPath, ...])``;
    a component runs only if its parent subnet ended up controlled.
    """
    return [
        (i, policy.tree.parent[i], policy.components[i].paths)
        for i in policy.tree.order[1:]
        if i in policy.components
    ]


def _fw(f):
    return sorted(f.blocked_ports)


def report(policy: AttackPolicy, elapsed=None) -> dict:
    comps = []
    for i in policy.tree.order[1:]:
        cp = policy.components[i]
        comps.append({
            "index": i,
            "parent": cp.parent,
            "subnets": sorted(cp.members),
            "value": cp.value,
            "paths": [
                {
                    "target": p.target,
                    "vertices": list(p.vertices),
                    "firewalls": [_fw(f) for f in p.firewalls],
                    "value": p.value,
                    "steps": [
                        {
                            "subnet": s.subnet,
                            "first_machine": s.first,
                            "reward": s.reward,
                            "value": s.value,
                            "residual": [m for m, _ in s.residual],
                        }
                        for s in p.steps
                    ],
                }
                for p in cp.paths
            ],
        })
    out = {
        "value": policy.value,
        "components": comps,
        "pivot_rewards": {k: v for k, v in sorted(policy.pivot_rewards.items())},
        "cache": policy.cache.stats(),
    }
    if elapsed is not None:
        out["seconds"] = elapsed
    return out


def timed_plan(scenario, **kw):
    t0 = time.perf_counter()
    pol = plan(scenario, **kw)
    return pol, time.perf_counter() - t0

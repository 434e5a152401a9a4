"""Explicit finite POMDPs with deterministic per-state outcomes.

Every (state, action) pair has exactly one successor and one observation,
so a belief is a weighted set of states and the belief tree under a
no-repeat action discipline is finite.  ``solve_exact`` searches that tree
with memoisation; ``brute_force_value`` is an unmemoised reference used by
the tests.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError, ImpossibleObservationError, InvalidInputError, ModelError

__all__ = [
    "PomdpModel",
    "PolicyNode",
    "TERMINATE",
    "TERMINAL",
    "initial_belief",
    "belief_update",
    "solve_exact",
    "brute_force_value",
    "evaluate_policy",
    "dump_model",
    "load_model",
]

TERMINATE = "terminate"
TERMINAL = "terminal"
NONE_OBS = "none"
PRUNE = 1e-12
TIE = 1e-12


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """Deterministic-outcome POMDP stored as dense (action, state) tables.

    Rewards decompose as ``exploit_reward[a, s] + time_cost[a] +
    detect_cost[a]``; the terminate action and the terminal state earn
    nothing.
    """

    states: tuple
    actions: tuple
    observations: tuple
    next_state: np.ndarray
    observation: np.ndarray
    exploit_reward: np.ndarray
    time_cost: np.ndarray
    detect_cost: np.ndarray
    b0: np.ndarray
    controlled: frozenset = frozenset()
    terminal: int = field(default=-1)
    terminate: int = field(default=-1)
    strict_rewards: bool = True

    def __post_init__(self):
        states, actions, obs = tuple(self.states), tuple(self.actions), tuple(self.observations)
        for kind, names in (("state", states), ("action", actions), ("observation", obs)):
            if len(set(names)) != len(names):
                raise ModelError(f"duplicate {kind} names")
            for n in names:
                if not n or any(ch.isspace() for ch in n):
                    raise ModelError(f"{kind} name {n!r} must be non-empty without whitespace")
        nS, nA = len(states), len(actions)
        terminal = self.terminal if self.terminal >= 0 else states.index(TERMINAL)
        terminate = self.terminate if self.terminate >= 0 else actions.index(TERMINATE)
        ns = np.array(self.next_state, dtype=np.int64)
        ob = np.array(self.observation, dtype=np.int64)
        re = np.array(self.exploit_reward, dtype=float)
        rt = np.array(self.time_cost, dtype=float)
        rd = np.array(self.detect_cost, dtype=float)
        b0 = np.array(self.b0, dtype=float)
        controlled = frozenset(int(s) for s in self.controlled)
        for arr in (ns, ob, re, rt, rd, b0):
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "next_state", ns)
        object.__setattr__(self, "observation", ob)
        object.__setattr__(self, "exploit_reward", re)
        object.__setattr__(self, "time_cost", rt)
        object.__setattr__(self, "detect_cost", rd)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "controlled", controlled)
        object.__setattr__(self, "terminal", terminal)
        object.__setattr__(self, "terminate", terminate)
        self._validate(nS, nA)
        reward = re + rt[:, None] + rd[:, None]
        reward[terminate, :] = 0.0
        reward[:, terminal] = 0.0
        reward.setflags(write=False)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "_s_index", {n: i for i, n in enumerate(states)})
        object.__setattr__(self, "_a_index", {n: i for i, n in enumerate(actions)})
        object.__setattr__(self, "_o_index", {n: i for i, n in enumerate(obs)})

    def _validate(self, nS, nA):
        ns, ob, re = self.next_state, self.observation, self.exploit_reward
        if ns.shape != (nA, nS) or ob.shape != (nA, nS) or re.shape != (nA, nS):
            raise ModelError("transition/observation/reward tables must be (actions, states)")
        if self.time_cost.shape != (nA,) or self.detect_cost.shape != (nA,):
            raise ModelError("cost vectors must have one entry per action")
        if self.b0.shape != (nS,):
            raise ModelError("b0 must have one entry per state")
        if ns.min(initial=0) < 0 or ns.max(initial=0) >= nS:
            raise ModelError("next state out of range")
        if ob.min(initial=0) < 0 or ob.max(initial=0) >= len(self.observations):
            raise ModelError("observation out of range")
        if (ns[self.terminate] != self.terminal).any():
            raise ModelError("terminate must lead to the terminal state from every state")
        if (ns[:, self.terminal] != self.terminal).any():
            raise ModelError("terminal state must be absorbing")
        if (self.time_cost > 0).any() or (self.detect_cost > 0).any():
            raise ModelError("time and detection costs must be <= 0")
        if self.time_cost[self.terminate] != 0 or self.detect_cost[self.terminate] != 0:
            raise ModelError("terminate must be free")
        if (re < 0).any():
            raise ModelError("exploit rewards must be >= 0")
        if self.terminal in self.controlled:
            raise ModelError("terminal state cannot be controlled")
        if self.strict_rewards:
            ctrl = np.zeros(nS, dtype=bool)
            ctrl[list(self.controlled)] = True
            entering = ~ctrl[None, :] & ctrl[ns]
            if ((re > 0) & ~entering).any():
                raise ModelError("exploit reward only on transitions entering a controlled state")
        elif (re[self.terminate] != 0).any() or (re[:, self.terminal] != 0).any():
            raise ModelError("terminate and the terminal state carry no exploit reward")
        if (self.b0 < 0).any() or abs(self.b0.sum() - 1.0) > 1e-9:
            raise ModelError("b0 must be a probability distribution")

    # name <-> index helpers
    def s(self, name) -> int:
        return self._s_index[name]

    def a(self, name) -> int:
        return self._a_index[name]

    def o(self, name) -> int:
        return self._o_index[name]

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return len(self.actions)

    def fingerprint(self) -> bytes:
        """Content key: equal for models with identical tables and names."""
        buf = io.StringIO()
        dump_model(self, buf)
        return buf.getvalue().encode()


# -- beliefs ---------------------------------------------------------------


def initial_belief(model: PomdpModel) -> dict:
    return {model.states[i]: float(p) for i, p in enumerate(model.b0) if p > PRUNE}


def belief_update(b: dict, action, observation, model: PomdpModel) -> dict:
    """Bayes filter for deterministic outcomes: keep, move, renormalise."""
    a = model.a(action)
    o = model.o(observation)
    out = {}
    for name, p in b.items():
        s = model.s(name)
        if model.observation[a, s] != o:
            continue
        nxt = model.states[model.next_state[a, s]]
        out[nxt] = out.get(nxt, 0.0) + p
    total = sum(out.values())
    if total <= PRUNE:
        raise ImpossibleObservationError(f"observation {observation!r} has zero probability after {action!r}")
    return {k: v / total for k, v in out.items() if v / total > PRUNE}


def observation_probabilities(b: dict, action, model: PomdpModel) -> dict:
    a = model.a(action)
    out = {}
    for name, p in b.items():
        o = model.observations[model.observation[a, model.s(name)]]
        out[o] = out.get(o, 0.0) + p
    return out


# -- policies --------------------------------------------------------------


@dataclass
class PolicyNode:
    """Observation-contingent plan.  A leaf plays terminate."""

    action: str
    children: dict = field(default_factory=dict)

    @property
    def is_leaf(self):
        return self.action == TERMINATE

    def walk(self):
        yield self
        for child in self.children.values():
            yield from child.walk()

    def size(self):
        return sum(1 for _ in self.walk())

    def respects_no_repeat(self, seen=frozenset()) -> bool:
        if self.is_leaf:
            return True
        if self.action in seen:
            return False
        seen = seen | {self.action}
        return all(c.respects_no_repeat(seen) for c in self.children.values())

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"action": TERMINATE}
        return {
            "action": self.action,
            "children": {o: c.to_dict() for o, c in sorted(self.children.items())},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["action"], {o: cls.from_dict(c) for o, c in data.get("children", {}).items()})

    def flatten(self, model: PomdpModel):
        """Arrays ``(node_action, node_child)`` for the simulation kernels.

        Terminate leaves get action ``-1``; missing children map to ``-1``.
        """
        nodes = []
        index = {}

        def visit(node):
            index[id(node)] = len(nodes)
            nodes.append(node)
            for o in sorted(node.children):
                visit(node.children[o])

        visit(self)
        node_action = np.full(len(nodes), -1, dtype=np.int64)
        node_child = np.full((len(nodes), len(model.observations)), -1, dtype=np.int64)
        for i, node in enumerate(nodes):
            if node.is_leaf:
                continue
            node_action[i] = model.a(node.action)
            for o, child in node.children.items():
                node_child[i, model.o(o)] = index[id(child)]
        return node_action, node_child


def terminate_policy() -> PolicyNode:
    return PolicyNode(TERMINATE)


# -- exact solver ----------------------------------------------------------


class _ExactSolver:
    def __init__(self, model: PomdpModel, max_nodes=None):
        self.m = model
        self.ns = model.next_state.tolist()
        self.ob = model.observation.tolist()
        self.rw = model.reward.tolist()
        order = sorted(range(model.n_actions), key=lambda a: model.actions[a])
        self.order = [a for a in order if a != model.terminate]
        self.memo = {}
        self.max_nodes = max_nodes

    def useless(self, a, support):
        ns, ob = self.ns[a], self.ob[a]
        o0 = ob[support[0][0]]
        for s, _ in support:
            if ns[s] != s or ob[s] != o0:
                return False
        return True

    def live_actions(self, support, avail):
        """Drop actions that stay uninformative self-loops forever.

        Such an action is a self-loop with a single observation on every
        state reachable from the support; playing it can only cost.
        """
        closure = {s for s, _ in support}
        todo = list(closure)
        while todo:
            s = todo.pop()
            for a in avail:
                t = self.ns[a][s]
                if t not in closure:
                    closure.add(t)
                    todo.append(t)
        live = []
        for a in avail:
            ns, ob = self.ns[a], self.ob[a]
            it = iter(closure)
            o0 = ob[next(it)]
            if all(ns[s] == s for s in closure) and all(ob[s] == o0 for s in closure):
                continue
            live.append(a)
        return frozenset(live)

    def expand(self, a, support):
        ns, ob, rw = self.ns[a], self.ob[a], self.rw[a]
        imm = 0.0
        groups = {}
        for s, w in support:
            imm += w * rw[s]
            g = groups.setdefault(ob[s], {})
            t = ns[s]
            g[t] = g.get(t, 0.0) + w
        children = []
        for o in sorted(groups):
            g = groups[o]
            children.append((o, tuple(sorted((t, w) for t, w in g.items() if w > PRUNE))))
        return imm, children

    def value(self, support, avail):
        """Unnormalised optimal value of the node (mass-weighted)."""
        live = self.live_actions(support, avail)
        key = (support, live)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[0]
        if self.max_nodes is not None and len(self.memo) >= self.max_nodes:
            raise CapExceededError(f"exact search exceeded {self.max_nodes} belief nodes")
        best, best_a = 0.0, self.m.terminate
        for a in self.order:
            if a not in live or self.useless(a, support):
                continue
            imm, children = self.expand(a, support)
            rest = live - {a}
            q = imm
            for _, child in children:
                if child:
                    q += self.value(child, rest)
            if q > best + TIE:
                best, best_a = q, a
        self.memo[key] = (best, best_a)
        return best

    def policy(self, support, avail):
        live = self.live_actions(support, avail)
        _, a = self.memo[(support, live)]
        if a == self.m.terminate:
            return PolicyNode(TERMINATE)
        node = PolicyNode(self.m.actions[a])
        _, children = self.expand(a, support)
        rest = live - {a}
        for o, child in children:
            if child:
                self.value(child, rest)
                node.children[self.m.observations[o]] = self.policy(child, rest)
        return node


def _root_support(model):
    return tuple((i, float(p)) for i, p in enumerate(model.b0) if p > PRUNE)


def solve_exact(model: PomdpModel, max_nodes=None):
    """Optimal expected total reward from b0 over no-repeat policies.

    Returns ``(value, PolicyNode)``.  Ties between actions go to the
    lexicographically smallest name; an action must beat terminate strictly.
    """
    solver = _ExactSolver(model, max_nodes)
    support = _root_support(model)
    avail = frozenset(solver.order)
    total = sum(w for _, w in support)
    v = solver.value(support, avail)
    return v / total, solver.policy(support, avail)


def brute_force_value(model: PomdpModel, max_actions=7) -> float:
    """Exhaustive search over every observation-contingent no-repeat plan.

    No memoisation, no pruning; works on normalised conditional beliefs.
    """
    acts = [a for a in range(model.n_actions) if a != model.terminate]
    if len(acts) > max_actions:
        raise CapExceededError(f"brute force refuses {len(acts)} actions (limit {max_actions})")
    ns, ob, rw = model.next_state, model.observation, model.reward

    def best(particles, avail):
        v = 0.0
        for a in avail:
            imm = sum(p * rw[a, s] for s, p in particles)
            split = {}
            for s, p in particles:
                split.setdefault(int(ob[a, s]), []).append((int(ns[a, s]), p))
            q = imm
            for group in split.values():
                po = sum(p for _, p in group)
                q += po * best([(s, p / po) for s, p in group], avail - {a})
            v = max(v, q)
        return v

    particles = [(s, float(p)) for s, p in enumerate(model.b0) if p > 0]
    return best(particles, frozenset(acts))


def evaluate_policy(model: PomdpModel, policy: PolicyNode) -> float:
    """Exact expected total reward of ``policy`` from b0.

    Each start state determines a single path; an observation with no
    child ends the run as if terminate were played.
    """
    total = 0.0
    for s0, p in enumerate(model.b0):
        if p <= 0:
            continue
        s, node, acc = s0, policy, 0.0
        while not node.is_leaf:
            a = model.a(node.action)
            acc += model.reward[a, s]
            o = model.observations[model.observation[a, s]]
            s = int(model.next_state[a, s])
            node = node.children.get(o)
            if node is None:
                break
        total += p * acc
    return total


# -- flat text format ------------------------------------------------------

_HEADER = "# attackplan-pomdp 1"


def dump_model(model: PomdpModel, fh):
    """Write the flat explicit format; floats use repr so reading is exact."""
    w = fh.write
    w(_HEADER + "\n")
    w("states " + " ".join(model.states) + "\n")
    w("actions " + " ".join(model.actions) + "\n")
    w("observations " + " ".join(model.observations) + "\n")
    w(f"terminal {model.states[model.terminal]}\n")
    w(f"terminate {model.actions[model.terminate]}\n")
    w("controlled " + " ".join(model.states[s] for s in sorted(model.controlled)) + "\n")
    w(f"rewards {'strict' if model.strict_rewards else 'loose'}\n")
    for a, name in enumerate(model.actions):
        w(f"cost {name} {float(model.time_cost[a])!r} {float(model.detect_cost[a])!r}\n")
    for a, name in enumerate(model.actions):
        for s, sname in enumerate(model.states):
            w(
                f"T {name} {sname} {model.states[model.next_state[a, s]]} "
                f"{model.observations[model.observation[a, s]]} "
                f"{float(model.exploit_reward[a, s])!r}\n"
            )
    for s, sname in enumerate(model.states):
        w(f"b0 {sname} {float(model.b0[s])!r}\n")


def load_model(fh) -> PomdpModel:
    lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _HEADER:
        raise InvalidInputError("not an attackplan POMDP dump (bad header)", "line 1")
    head = {}
    costs, trans, b0 = {}, [], {}
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        parts = ln.split()
        tag = parts[0]
        try:
            if tag in ("states", "actions", "observations", "controlled"):
                head[tag] = parts[1:]
            elif tag in ("terminal", "terminate", "rewards"):
                head[tag] = parts[1]
            elif tag == "cost":
                costs[parts[1]] = (float(parts[2]), float(parts[3]))
            elif tag == "T":
                trans.append((parts[1], parts[2], parts[3], parts[4], float(parts[5])))
            elif tag == "b0":
                b0[parts[1]] = float(parts[2])
            else:
                raise InvalidInputError(f"unknown record {tag!r}", f"line {lineno}")
        except InvalidInputError:
            raise
        except (IndexError, ValueError):
            raise InvalidInputError("malformed record", f"line {lineno}") from None
    try:
        return _build_loaded(head, costs, trans, b0)
    except KeyError as exc:
        raise InvalidInputError(f"missing or unknown name {exc.args[0]!r}", "model") from None


def _build_loaded(head, costs, trans, b0):
    states, actions, obs = head["states"], head["actions"], head["observations"]
    si = {n: i for i, n in enumerate(states)}
    ai = {n: i for i, n in enumerate(actions)}
    oi = {n: i for i, n in enumerate(obs)}
    nS, nA = len(states), len(actions)
    ns = np.zeros((nA, nS), dtype=np.int64)
    ob = np.zeros((nA, nS), dtype=np.int64)
    re = np.zeros((nA, nS))
    for a, s, t, o, r in trans:
        ns[ai[a], si[s]] = si[t]
        ob[ai[a], si[s]] = oi[o]
        re[ai[a], si[s]] = r
    return PomdpModel(
        states=states,
        actions=actions,
        observations=obs,
        next_state=ns,
        observation=ob,
        exploit_reward=re,
        time_cost=np.array([costs[a][0] for a in actions]),
        detect_cost=np.array([costs[a][1] for a in actions]),
        b0=np.array([b0.get(s, 0.0) for s in states]),
        controlled=frozenset(si[s] for s in head.get("controlled", [])),
        terminal=si[head["terminal"]],
        terminate=ai[head["terminate"]],
        strict_rewards=head.get("rewards", "strict") == "strict",
    )

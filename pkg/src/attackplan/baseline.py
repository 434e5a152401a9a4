"""Exact global attack POMDP for small networks.

The global state is one local state per machine.  A machine can be
attacked once its subnet is reached: through the empty firewall if its
own subnet is controlled, otherwise through the intersection of the
firewalls on edges from controlled subnets.  Machines start independent
and every observation concerns a single machine, so the belief stays a
product of per-machine beliefs.  :class:`GlobalSolver` searches that
factored belief tree exactly; :func:`create_global_pomdp` spells out the
flat model for cross-checking on tiny instances.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import CapExceededError
from .network import EMPTY_FIREWALL, Firewall
from .pomdp import NONE_OBS, PRUNE, TERMINAL, TERMINATE, TIE, PomdpModel

__all__ = [
    "GlobalProblem",
    "GlobalSolver",
    "create_global_pomdp",
    "solve_global",
    "DEFAULT_STATE_CAP",
]

DEFAULT_STATE_CAP = 10**5
DEFAULT_NODE_CAP = 2 * 10**6


class GlobalProblem:
    """Machines reachable from the root with their local dynamics and values."""

    def __init__(self, scenario):
        net = scenario.network
        self.scenario = scenario
        self.net = net
        reach = net.reachable_from_root()
        self.machines = tuple(m for m in net.machines if net.subnet_of(m) in reach)
        self.subnet = {m: net.subnet_of(m) for m in self.machines}
        self.procs = [scenario.process(m) for m in self.machines]
        self.values = [scenario.value(m) for m in self.machines]
        self.index = {m: i for i, m in enumerate(self.machines)}
        # every subnet reachable (in the graph) from each subnet, itself included
        self.downstream = {}
        for n in net.subnets:
            seen, todo = {n}, [n]
            while todo:
                v = todo.pop()
                for w in net.successors(v):
                    if w not in seen:
                        seen.add(w)
                        todo.append(w)
            self.downstream[n] = frozenset(seen)

    def controlled_subnets(self, controlled) -> frozenset:
        return frozenset([self.net.root]) | frozenset(self.subnet[self.machines[i]] for i in controlled)

    def firewall(self, i, csubs):
        """Effective firewall in front of machine ``i``; ``None`` when unreached."""
        n = self.subnet[self.machines[i]]
        if n in csubs:
            return EMPTY_FIREWALL
        fw = None
        for p in self.net.predecessors(n):
            if p in csubs:
                f = self.net.firewall(p, n)
                fw = f if fw is None else fw.intersect(f)
        return fw

    def state_count(self) -> int:
        return 1 + int(np.prod([len(p.states) for p in self.procs], dtype=object)) if self.procs else 1


class GlobalSolver:
    """Exact search over factored beliefs with no-repeat actions.

    Per machine the key holds the unnormalised support and the live
    actions; machines that can no longer matter (no value of their own and
    nothing valuable downstream, or their subnet already controlled) are
    collapsed, which does not change any value.
    """

    def __init__(self, problem: GlobalProblem, max_nodes=DEFAULT_NODE_CAP):
        self.p = problem
        self.max_nodes = max_nodes
        self.memo = {}
        self._live_memo = {}
        self._single_memo = {}
        n = len(problem.machines)
        self.ns = [[[row[s][0] for s in range(len(proc.states))] for row in proc.step] for proc in problem.procs]
        self.ob = [[[row[s][1] for s in range(len(proc.states))] for row in proc.step] for proc in problem.procs]
        self.ok = [[[row[s][2] for s in range(len(proc.states))] for row in proc.step] for proc in problem.procs]
        self.cost = [[a.time_cost + a.detect_cost for a in proc.actions] for proc in problem.procs]
        self.order = [
            sorted(range(len(proc.actions)), key=lambda a, proc=proc: proc.actions[a].name)
            for proc in problem.procs
        ]
        self.n = n

    # -- per-machine helpers
    def _controlled(self, i, support):
        return len(support) == 1 and support[0][0] == self.p.procs[i].controlled

    def _live(self, i, support, avail):
        key = (i, support, avail)
        hit = self._live_memo.get(key)
        if hit is None:
            hit = self._live_memo[key] = self._live_uncached(i, support, avail)
        return hit

    def _live_uncached(self, i, support, avail):
        ns, ob = self.ns[i], self.ob[i]
        closure = {s for s, _ in support}
        todo = list(closure)
        while todo:
            s = todo.pop()
            for a in avail:
                t = ns[a][s]
                if t not in closure:
                    closure.add(t)
                    todo.append(t)
        live = []
        for a in avail:
            o0 = ob[a][next(iter(closure))]
            if all(ns[a][s] == s and ob[a][s] == o0 for s in closure):
                continue
            live.append(a)
        return frozenset(live)

    def _canon(self, supports, avail):
        """Drop dead actions and collapse machines that cannot matter any more."""
        p = self.p
        controlled = [i for i in range(self.n) if self._controlled(i, supports[i])]
        csubs = p.controlled_subnets(controlled)
        live = [self._live(i, supports[i], avail[i]) if avail[i] else frozenset() for i in range(self.n)]
        # targets whose access can still improve; an empty firewall is already the best
        target_subnets = {}
        for i in range(self.n):
            if p.values[i] > 0 and live[i] and p.firewall(i, csubs) != EMPTY_FIREWALL:
                target_subnets.setdefault(p.subnet[p.machines[i]], set()).add(i)
        out_s, out_a = [], []
        for i in range(self.n):
            if live[i] and p.values[i] <= 0:
                n = p.subnet[p.machines[i]]
                useful = n not in csubs and any(
                    sub in p.downstream[n] and js - {i} for sub, js in target_subnets.items()
                )
                if not useful:
                    live[i] = frozenset()
            if i in controlled:
                # controlled machines stay visible: they shape reachability
                out_s.append(((p.procs[i].controlled, 1.0),))
            elif live[i]:
                out_s.append(supports[i])
            else:
                out_s.append(())
            out_a.append(live[i])
        return tuple(out_s), tuple(out_a)

    def _expand(self, i, a, support):
        ns, ob, ok = self.ns[i][a], self.ob[i][a], self.ok[i][a]
        cost = self.cost[i][a]
        r = self.p.values[i]
        imm = 0.0
        groups = {}
        for s, w in support:
            imm += w * (cost + (r if ok[s] else 0.0))
            g = groups.setdefault(ob[s], {})
            t = ns[s]
            g[t] = g.get(t, 0.0) + w
        children = []
        for o in sorted(groups):
            g = groups[o]
            children.append((o, tuple(sorted((t, w) for t, w in g.items() if w > PRUNE))))
        return imm, children

    def _moves(self, supports, avail):
        p = self.p
        controlled = [i for i in range(self.n) if self._controlled(i, supports[i])]
        csubs = p.controlled_subnets(controlled)
        for i in range(self.n):
            if not avail[i]:
                continue
            fw = p.firewall(i, csubs)
            if fw is None:
                continue
            proc = p.procs[i]
            sup = supports[i]
            for a in self.order[i]:
                if a not in avail[i] or not proc.usable(a, fw):
                    continue
                ns, ob = self.ns[i][a], self.ob[i][a]
                o0 = ob[sup[0][0]]
                if all(ns[s] == s and ob[s] == o0 for s, _ in sup):
                    continue
                yield i, a

    def _independent(self, supports, avail, csubs):
        """True when controlling any live machine changes no other live machine's access."""
        p = self.p
        live = [i for i in range(self.n) if avail[i]]
        open_ = {i for i in live if p.firewall(i, csubs) == EMPTY_FIREWALL}
        for i in live:
            n = p.subnet[p.machines[i]]
            if n in csubs:
                continue
            touched = {n} | set(p.net.successors(n))
            for j in live:
                if j != i and j not in open_:
                    nj = p.subnet[p.machines[j]]
                    if nj in touched and nj not in csubs:
                        return False
        return True

    def _single(self, i, support, avail, fw):
        """Value and best action of machine ``i`` alone behind a fixed firewall."""
        proc = self.p.procs[i]
        usable = frozenset(a for a in avail if proc.usable(a, fw))
        live = self._live(i, support, usable) if usable else frozenset()
        key = (i, support, live)
        hit = self._single_memo.get(key)
        if hit is not None:
            return hit
        best, best_a = 0.0, None
        mass = sum(w for _, w in support)
        for a in self.order[i]:
            if a not in live:
                continue
            ns, ob = self.ns[i][a], self.ob[i][a]
            o0 = ob[support[0][0]]
            if all(ns[s] == s and ob[s] == o0 for s, _ in support):
                continue
            imm, children = self._expand(i, a, support)
            q = imm / mass
            rest = live - {a}
            for _, child in children:
                if child:
                    q += sum(w for _, w in child) / mass * self._single(i, child, rest, fw)[0]
            if q > best + TIE:
                best, best_a = q, a
        self._single_memo[key] = (best, best_a)
        return best, best_a

    def value(self, supports, avail):
        key = self._canon(supports, avail)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[0]
        if self.max_nodes is not None and len(self.memo) >= self.max_nodes:
            raise CapExceededError(f"global search exceeded {self.max_nodes} belief nodes")
        supports, avail = key
        controlled = [i for i in range(self.n) if self._controlled(i, supports[i])]
        csubs = self.p.controlled_subnets(controlled)
        if self._independent(supports, avail, csubs):
            # no interaction left: the optimum is the sum of the machines' own optima
            total, move = 0.0, None
            for i in range(self.n):
                if not avail[i]:
                    continue
                fw = self.p.firewall(i, csubs)
                if fw is None:
                    continue
                v, a = self._single(i, supports[i], avail[i], fw)
                total += v
                if move is None and a is not None:
                    move = (i, a)
            self.memo[key] = (total, move)
            return total
        best, best_move = 0.0, None
        for i, a in self._moves(supports, avail):
            sup = supports[i]
            mass = sum(w for _, w in sup)
            imm, children = self._expand(i, a, sup)
            rest = avail[i] - {a}
            q = imm / mass
            for _, child in children:
                if not child:
                    continue
                cm = sum(w for _, w in child)
                sub_s = supports[:i] + (child,) + supports[i + 1:]
                sub_a = avail[:i] + (rest,) + avail[i + 1:]
                q += cm / mass * self.value(sub_s, sub_a)
            if q > best + TIE:
                best, best_move = q, (i, a)
        self.memo[key] = (best, best_move)
        return best

    def root(self):
        supports = tuple(
            tuple((s, float(w)) for s, w in enumerate(proc.b0) if w > PRUNE) for proc in self.p.procs
        )
        avail = tuple(frozenset(range(len(proc.actions))) for proc in self.p.procs)
        return supports, avail

    def solve(self) -> float:
        return self.value(*self.root())

    def decide(self, supports, avail):
        """Best ``(machine index, action index)`` at a node, or ``None`` for terminate."""
        key = self._canon(supports, avail)
        if key not in self.memo:
            self.value(supports, avail)
        return self.memo[key][1]

    def step(self, supports, avail, i, a, obs):
        """Successor node after playing ``a`` on machine ``i`` and seeing ``obs``."""
        sup = supports[i]
        ns, ob = self.ns[i][a], self.ob[i][a]
        g = {}
        for s, w in sup:
            if ob[s] == obs:
                t = ns[s]
                g[t] = g.get(t, 0.0) + w
        child = tuple(sorted((t, w) for t, w in g.items() if w > PRUNE))
        rest = avail[i] - {a}
        return supports[:i] + (child,) + supports[i + 1:], avail[:i] + (rest,) + avail[i + 1:]


def solve_global(scenario, max_nodes=DEFAULT_NODE_CAP):
    """Exact optimal value of the global model.  Returns ``(value, solver)``."""
    solver = GlobalSolver(GlobalProblem(scenario), max_nodes)
    return solver.solve(), solver


def create_global_pomdp(scenario, cap_states=DEFAULT_STATE_CAP) -> PomdpModel:
    """Flat product model; actions are ``machine.action`` pairs.

    An action that is unreachable or firewalled in a state is a no-op that
    still costs and observes ``none``.
    """
    prob = GlobalProblem(scenario)
    size = prob.state_count()
    if size > cap_states:
        raise CapExceededError(
            f"global model needs {size} states ({len(prob.machines)} machines), cap is {cap_states}"
        )
    procs = prob.procs
    locals_ = [range(len(p.states)) for p in procs]
    combos = list(itertools.product(*locals_))
    names = [TERMINAL] + [
        "(" + ",".join(procs[i].state_name(s) for i, s in enumerate(c)) + ")" for c in combos
    ]
    cindex = {c: k + 1 for k, c in enumerate(combos)}
    actions = []
    for i, proc in enumerate(procs):
        for a, spec in enumerate(proc.actions):
            actions.append((i, a, f"{prob.machines[i]}.{spec.name}"))
    nA = len(actions) + 1
    nS = len(names)
    obs = [NONE_OBS]
    oidx = {NONE_OBS: 0}
    ns = np.zeros((nA, nS), dtype=np.int64)
    ob = np.zeros((nA, nS), dtype=np.int64)
    re = np.zeros((nA, nS))
    for c in combos:
        k = cindex[c]
        controlled = [i for i, s in enumerate(c) if s == procs[i].controlled]
        csubs = prob.controlled_subnets(controlled)
        fws = [prob.firewall(i, csubs) for i in range(len(procs))]
        for row, (i, a, _) in enumerate(actions):
            fw = fws[i]
            if fw is None or not procs[i].usable(a, fw):
                ns[row, k], ob[row, k] = k, 0
                continue
            t, o, ok = procs[i].step[a][c[i]]
            if o not in oidx:
                oidx[o] = len(obs)
                obs.append(o)
            ns[row, k] = cindex[c[:i] + (t,) + c[i + 1:]]
            ob[row, k] = oidx[o]
            if ok:
                re[row, k] = prob.values[i]
    b0 = np.zeros(nS)
    for c in combos:
        b0[cindex[c]] = float(np.prod([procs[i].b0[s] for i, s in enumerate(c)]))
    b0 /= b0.sum()
    cost_t = [procs[i].actions[a].time_cost for i, a, _ in actions] + [0.0]
    cost_d = [procs[i].actions[a].detect_cost for i, a, _ in actions] + [0.0]
    return PomdpModel(
        states=tuple(names),
        actions=tuple(n for _, _, n in actions) + (TERMINATE,),
        observations=tuple(obs),
        next_state=ns,
        observation=ob,
        exploit_reward=re,
        time_cost=np.array(cost_t),
        detect_cost=np.array(cost_d),
        b0=b0,
        controlled=frozenset(),
        terminal=0,
        terminate=nA - 1,
        strict_rewards=False,
    )

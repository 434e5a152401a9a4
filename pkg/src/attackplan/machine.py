"""Single-machine attack POMDPs.

A machine's hidden state is its configuration (a version per program).
Scans reveal whether a port is open or which OS family runs; exploits
succeed, fail, or crash depending only on that configuration.  The
local dynamics live in :class:`MachineProcess`, which the global baseline
reuses; :func:`create_machine_pomdp` wraps them with a firewall, a
break-in reward and the terminate action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ModelError
from .network import EMPTY_FIREWALL, Firewall
from .pomdp import NONE_OBS, TERMINAL, TERMINATE, PomdpModel
from .updates import MachineBelief

__all__ = [
    "ProgramSpec",
    "ActionSpec",
    "MachinePomdpRequest",
    "MachineProcess",
    "CONTROLLED",
    "CRASHED",
    "create_machine_pomdp",
    "merge_indistinguishable_states",
    "action_spec_from_dict",
    "action_spec_to_dict",
    "program_spec_from_dict",
    "program_spec_to_dict",
]

CONTROLLED = "controlled"
CRASHED = "crashed"
CRASHED_VERSION = "crashed"
KINDS = ("exploit", "port_scan", "os_detect")
CRASH_MODES = ("none", "machine", "program")


@dataclass(frozen=True)
class ProgramSpec:
    """Static facts about a program: its port and which versions mean 'not installed'."""

    program: str
    port: int | None = None
    absent: frozenset = frozenset({"absent"})
    os_classes: dict | None = None

    def present(self, version) -> bool:
        return version not in self.absent and version != CRASHED_VERSION

    def os_class(self, version) -> str:
        if self.os_classes and version in self.os_classes:
            return self.os_classes[version]
        return version

    def __hash__(self):
        return hash((self.program, self.port, self.absent))


@dataclass(frozen=True)
class ActionSpec:
    """One scan or exploit.

    ``gates`` is a tuple of ``(program, allowed_versions)``: the exploit
    only works when every gate program is at an allowed version (e.g. DEP
    off).  ``crash`` says what a failed attempt on an installed target does.
    """

    name: str
    kind: str
    program: str
    port: int | None = None
    vulnerable: frozenset = frozenset()
    gates: tuple = ()
    crash: str = "none"
    time_cost: float = -10.0
    detect_cost: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"action {self.name!r}: unknown kind {self.kind!r}")
        if self.crash not in CRASH_MODES:
            raise InvalidInputError(f"action {self.name!r}: unknown crash mode {self.crash!r}")
        if self.time_cost > 0 or self.detect_cost > 0:
            raise InvalidInputError(f"action {self.name!r}: costs must be <= 0")
        if self.name == TERMINATE or any(ch.isspace() for ch in self.name):
            raise InvalidInputError(f"bad action name {self.name!r}")
        object.__setattr__(self, "vulnerable", frozenset(self.vulnerable))
        object.__setattr__(
            self, "gates", tuple((g, frozenset(v)) for g, v in self.gates)
        )
        if self.kind != "exploit" and (self.vulnerable or self.gates or self.crash != "none"):
            raise InvalidInputError(f"action {self.name!r}: only exploits have vulnerabilities, gates or crashes")

    @property
    def programs(self):
        return (self.program,) + tuple(g for g, _ in self.gates)


@dataclass(frozen=True)
class MachinePomdpRequest:
    machine: str
    firewall: Firewall
    reward: float
    belief: MachineBelief

    def __post_init__(self):
        if self.reward < 0:
            raise InvalidInputError(f"break-in reward must be >= 0, got {self.reward}")


def _action_port(action, specs):
    if action.kind == "os_detect":
        return action.port
    if action.port is not None:
        return action.port
    return specs[action.program].port


class MachineProcess:
    """Local dynamics of one machine, independent of firewall and reward.

    ``states`` holds configuration tuples (ordered like ``programs``) plus
    the markers ``CONTROLLED`` and ``CRASHED``; ``step[a][s]`` is a
    ``(next_state, observation, success)`` triple.
    """

    def __init__(self, machine, belief: MachineBelief, actions, programs):
        self.machine = machine
        self.actions = tuple(actions)
        self.specs = dict(programs)
        names = [a.name for a in self.actions]
        if len(set(names)) != len(names):
            raise ModelError(f"machine {machine!r}: duplicate action names")
        needed = []
        for act in self.actions:
            for p in act.programs:
                if p not in self.specs:
                    raise ModelError(f"action {act.name!r} references unknown program {p!r}")
                if p not in belief.programs:
                    raise ModelError(
                        f"action {act.name!r} references program {p!r} absent from machine {machine!r}"
                    )
                if p not in needed:
                    needed.append(p)
        self.programs = tuple(p for p in belief.programs if p in needed)
        marg = belief.marginalize(self.programs)
        self._pos = {p: i for i, p in enumerate(self.programs)}
        self.ports = tuple(_action_port(a, self.specs) for a in self.actions)

        start = sorted(c for c, p in marg.dist.items() if p > 0)
        states = [CONTROLLED] + list(start)
        index = {s: i for i, s in enumerate(states)}
        todo = list(states)
        table = {}
        while todo:
            s = todo.pop()
            for ai, act in enumerate(self.actions):
                nxt, obs, ok = self._outcome(act, s)
                if nxt not in index:
                    index[nxt] = len(states)
                    states.append(nxt)
                    todo.append(nxt)
                table[(ai, s)] = (nxt, obs, ok)
        step = [
            [(index[table[(ai, s)][0]],) + table[(ai, s)][1:] for s in states]
            for ai in range(len(self.actions))
        ]
        self.states = tuple(states)
        self.index = index
        self.step = step
        b0 = np.zeros(len(states))
        for c, p in marg.dist.items():
            b0[index[c]] += p
        self.b0 = b0
        self.controlled = index[CONTROLLED]
        self.crashed = index.get(CRASHED)

    def _version(self, config, program):
        return config[self._pos[program]]

    def _outcome(self, act, s):
        if s in (CONTROLLED, CRASHED):
            return s, NONE_OBS, False
        spec = self.specs[act.program]
        v = self._version(s, act.program)
        present = spec.present(v)
        if act.kind == "port_scan":
            return s, "open" if present else "closed", False
        if act.kind == "os_detect":
            return s, "os:" + spec.os_class(v), False
        gates_ok = all(self._version(s, g) in allowed for g, allowed in act.gates)
        if present and v in act.vulnerable and gates_ok:
            return CONTROLLED, "succeeded", True
        if present and act.crash == "machine":
            return CRASHED, "crashed", False
        if present and act.crash == "program":
            i = self._pos[act.program]
            return s[:i] + (CRASHED_VERSION,) + s[i + 1:], "crashed", False
        return s, "failed", False

    def state_name(self, s) -> str:
        label = self.states[s]
        if label in (CONTROLLED, CRASHED):
            return f"{self.machine}_{label}"
        return self.machine + "|" + "|".join(f"{p}={v}" for p, v in zip(self.programs, label))

    def config(self, s) -> dict | None:
        label = self.states[s]
        if label in (CONTROLLED, CRASHED):
            return None
        return dict(zip(self.programs, label))

    def usable(self, a, firewall: Firewall) -> bool:
        return not firewall.blocks(self.ports[a])


def create_machine_pomdp(req: MachinePomdpRequest, actions, programs, keep_blocked=False, process=None):
    """Build the single-machine POMDP for attacking ``req.machine`` through ``req.firewall``.

    Actions whose port the firewall blocks are left out.  With
    ``keep_blocked`` they stay as cost-bearing no-ops that observe nothing.
    """
    proc = process or MachineProcess(req.machine, req.belief, actions, programs)
    fw = req.firewall
    acts = [a for a in range(len(proc.actions)) if keep_blocked or proc.usable(a, fw)]
    blocked = {a for a in acts if not proc.usable(a, fw)}

    names = [TERMINAL] + [proc.state_name(s) for s in range(len(proc.states))]
    nS = len(names)
    action_names = [proc.actions[a].name for a in acts] + [TERMINATE]
    nA = len(action_names)
    obs = [NONE_OBS]
    oidx = {NONE_OBS: 0}
    ns = np.zeros((nA, nS), dtype=np.int64)
    ob = np.zeros((nA, nS), dtype=np.int64)
    re = np.zeros((nA, nS))
    for row, a in enumerate(acts):
        ns[row, 0] = 0
        for s in range(len(proc.states)):
            if a in blocked:
                nxt, o, ok = s, NONE_OBS, False
            else:
                nxt, o, ok = proc.step[a][s]
            if o not in oidx:
                oidx[o] = len(obs)
                obs.append(o)
            ns[row, s + 1] = nxt + 1
            ob[row, s + 1] = oidx[o]
            if ok:
                re[row, s + 1] = req.reward
    # terminate row: all zeros already point at the terminal state (index 0)
    b0 = np.concatenate([[0.0], proc.b0])
    return PomdpModel(
        states=tuple(names),
        actions=tuple(action_names),
        observations=tuple(obs),
        next_state=ns,
        observation=ob,
        exploit_reward=re,
        time_cost=np.array([proc.actions[a].time_cost for a in acts] + [0.0]),
        detect_cost=np.array([proc.actions[a].detect_cost for a in acts] + [0.0]),
        b0=b0,
        controlled=frozenset({proc.controlled + 1}),
        terminal=0,
        terminate=nA - 1,
    )


def merge_indistinguishable_states(model: PomdpModel) -> PomdpModel:
    """Collapse bisimilar states, summing their initial mass.

    Two states merge when, for every action, they emit the same
    observation and reward and move to equivalent states.  Controlled and
    terminal states are never mixed with others.
    """
    nS, nA = model.n_states, model.n_actions
    ns, ob, rw = model.next_state, model.observation, model.exploit_reward

    def signature(s):
        flag = 2 if s == model.terminal else (1 if s in model.controlled else 0)
        return (flag,) + tuple((int(ob[a, s]), float(rw[a, s])) for a in range(nA))

    classes = {}
    block = np.empty(nS, dtype=np.int64)
    for s in range(nS):
        block[s] = classes.setdefault(signature(s), len(classes))
    while True:
        refined = {}
        new = np.empty(nS, dtype=np.int64)
        for s in range(nS):
            key = (int(block[s]),) + tuple(int(block[ns[a, s]]) for a in range(nA))
            new[s] = refined.setdefault(key, len(refined))
        if len(refined) == len(set(block.tolist())):
            block = new
            break
        block = new
    k = int(block.max()) + 1
    if k == nS:
        return model
    rep = [None] * k
    for s in range(nS):
        if rep[block[s]] is None:
            rep[block[s]] = s
    members = [[] for _ in range(k)]
    for s in range(nS):
        members[block[s]].append(model.states[s])
    names = []
    for b in range(k):
        m = members[b]
        names.append(m[0] if len(m) == 1 else m[0] + "+" + str(len(m) - 1))
    new_ns = np.array([[block[ns[a, rep[b]]] for b in range(k)] for a in range(nA)], dtype=np.int64)
    new_ob = np.array([[ob[a, rep[b]] for b in range(k)] for a in range(nA)], dtype=np.int64)
    new_re = np.array([[rw[a, rep[b]] for b in range(k)] for a in range(nA)])
    b0 = np.zeros(k)
    for s in range(nS):
        b0[block[s]] += model.b0[s]
    return PomdpModel(
        states=tuple(names),
        actions=model.actions,
        observations=model.observations,
        next_state=new_ns,
        observation=new_ob,
        exploit_reward=new_re,
        time_cost=model.time_cost,
        detect_cost=model.detect_cost,
        b0=b0,
        controlled=frozenset(int(block[s]) for s in model.controlled),
        terminal=int(block[model.terminal]),
        terminate=model.terminate,
    )


# -- serialization ---------------------------------------------------------


def action_spec_from_dict(d: dict) -> ActionSpec:
    try:
        return ActionSpec(
            name=d["name"],
            kind=d["kind"],
            program=d["program"],
            port=d.get("port"),
            vulnerable=frozenset(d.get("vulnerable", ())),
            gates=tuple((g["program"], frozenset(g["allowed"])) for g in d.get("gates", ())),
            crash=d.get("crash", "none"),
            time_cost=float(d.get("time_cost", -10.0)),
            detect_cost=float(d.get("detect_cost", 0.0)),
        )
    except KeyError as exc:
        raise InvalidInputError(f"missing {exc.args[0]!r}") from None


def action_spec_to_dict(a: ActionSpec) -> dict:
    d = {"name": a.name, "kind": a.kind, "program": a.program}
    if a.port is not None:
        d["port"] = a.port
    if a.vulnerable:
        d["vulnerable"] = sorted(a.vulnerable)
    if a.gates:
        d["gates"] = [{"program": g, "allowed": sorted(v)} for g, v in a.gates]
    if a.crash != "none":
        d["crash"] = a.crash
    d["time_cost"] = a.time_cost
    d["detect_cost"] = a.detect_cost
    return d


def program_spec_from_dict(d: dict) -> ProgramSpec:
    try:
        return ProgramSpec(
            program=d["program"],
            port=d.get("port"),
            absent=frozenset(d.get("absent", ["absent"])),
            os_classes=d.get("os_classes"),
        )
    except KeyError as exc:
        raise InvalidInputError(f"missing {exc.args[0]!r}") from None


def program_spec_to_dict(p: ProgramSpec) -> dict:
    d = {"program": p.program}
    if p.port is not None:
        d["port"] = p.port
    if p.absent != frozenset({"absent"}):
        d["absent"] = sorted(p.absent)
    if p.os_classes:
        d["os_classes"] = dict(p.os_classes)
    return d

"""Scenario container, JSON file format and the three-zone test generator.

A scenario bundles everything the planners need: the logical network,
the software-update model with the last-pentest snapshot, program and
action specifications, and per-machine values and action lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import InvalidInputError
from .machine import (
    ActionSpec,
    MachineProcess,
    ProgramSpec,
    action_spec_from_dict,
    action_spec_to_dict,
    program_spec_from_dict,
    program_spec_to_dict,
)
from .network import Firewall, LogicalNetwork, Subnetwork, network_from_dict, network_to_dict
from .updates import (
    ProgramChain,
    SnapshotConfig,
    UpdateModel,
    build_initial_belief,
    update_model_from_dict,
    update_model_to_dict,
)

__all__ = [
    "Scenario",
    "ScenarioParams",
    "generate_scenario",
    "load_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "load_templates",
]


@dataclass
class Scenario:
    network: LogicalNetwork
    update_model: UpdateModel
    snapshot: SnapshotConfig
    programs: dict
    actions: dict
    values: dict
    machine_actions: dict = field(default_factory=dict)
    name: str = "scenario"

    def __post_init__(self):
        self.snapshot.validate(self.update_model)
        for m in self.network.machines:
            if m not in self.snapshot.configs:
                raise InvalidInputError(f"machine {m!r} has no snapshot configuration", "snapshot")
        for m, v in self.values.items():
            if m not in self.snapshot.configs:
                raise InvalidInputError(f"value given for unknown machine {m!r}", "machines")
            if v < 0:
                raise InvalidInputError(f"machine {m!r} has negative value", "machines")
        for m, names in self.machine_actions.items():
            for a in names:
                if a not in self.actions:
                    raise InvalidInputError(f"machine {m!r} lists unknown action {a!r}", "machines")
        for a in self.actions.values():
            for p in a.programs:
                if p not in self.programs:
                    raise InvalidInputError(f"action {a.name!r} targets unknown program {p!r}", "actions")
        self._beliefs = {}
        self._processes = {}

    @property
    def machines(self):
        return self.network.machines

    @property
    def days(self):
        return self.snapshot.days

    def value(self, m) -> float:
        return float(self.values.get(m, 0.0))

    def actions_for(self, m) -> tuple:
        """Actions offered against ``m``: the listed ones, else every action
        whose programs are all installed on the machine."""
        if m in self.machine_actions:
            return tuple(self.actions[a] for a in self.machine_actions[m])
        installed = self.snapshot.configs[m]
        return tuple(
            a for _, a in sorted(self.actions.items()) if all(p in installed for p in a.programs)
        )

    def belief(self, m):
        if m not in self._beliefs:
            self._beliefs[m] = build_initial_belief(self.update_model, self.snapshot, m)
        return self._beliefs[m]

    def process(self, m) -> MachineProcess:
        if m not in self._processes:
            self._processes[m] = MachineProcess(m, self.belief(m), self.actions_for(m), self.programs)
        return self._processes[m]

    def with_days(self, days) -> "Scenario":
        return Scenario(
            self.network,
            self.update_model,
            SnapshotConfig(self.snapshot.configs, days),
            self.programs,
            self.actions,
            self.values,
            self.machine_actions,
            self.name,
        )


# -- JSON ------------------------------------------------------------------


def scenario_to_dict(sc: Scenario) -> dict:
    machines = {}
    for m in sc.machines:
        entry = {"value": sc.value(m)}
        if m in sc.machine_actions:
            entry["actions"] = list(sc.machine_actions[m])
        machines[m] = entry
    return {
        "name": sc.name,
        "network": network_to_dict(sc.network),
        "update_model": update_model_to_dict(sc.update_model),
        "snapshot": {
            "days": sc.snapshot.days,
            "machines": {m: dict(sorted(c.items())) for m, c in sorted(sc.snapshot.configs.items())},
        },
        "programs": [program_spec_to_dict(p) for _, p in sorted(sc.programs.items())],
        "actions": [action_spec_to_dict(a) for _, a in sorted(sc.actions.items())],
        "machines": machines,
    }


def _field(data, key, where):
    if key not in data:
        raise InvalidInputError("missing field", f"{where}.{key}" if where else key)
    return data[key]


def scenario_from_dict(data: dict, days=None) -> Scenario:
    if not isinstance(data, dict):
        raise InvalidInputError("scenario must be a JSON object")
    net = network_from_dict(_field(data, "network", ""))
    um = update_model_from_dict(_field(data, "update_model", ""))
    snap = _field(data, "snapshot", "")
    try:
        snapshot = SnapshotConfig(
            _field(snap, "machines", "snapshot"),
            int(days if days is not None else _field(snap, "days", "snapshot")),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(str(exc), "snapshot") from None
    programs = {}
    for i, p in enumerate(_field(data, "programs", "")):
        try:
            spec = program_spec_from_dict(p)
        except InvalidInputError as exc:
            raise InvalidInputError(str(exc), f"programs[{i}]") from None
        programs[spec.program] = spec
    actions = {}
    for i, a in enumerate(_field(data, "actions", "")):
        try:
            spec = action_spec_from_dict(a)
        except InvalidInputError as exc:
            raise InvalidInputError(str(exc), f"actions[{i}]") from None
        if spec.name in actions:
            raise InvalidInputError(f"duplicate action {spec.name!r}", f"actions[{i}]")
        actions[spec.name] = spec
    values, machine_actions = {}, {}
    for m, entry in data.get("machines", {}).items():
        values[m] = float(entry.get("value", 0.0))
        if "actions" in entry:
            machine_actions[m] = tuple(entry["actions"])
    return Scenario(net, um, snapshot, programs, actions, values, machine_actions, data.get("name", "scenario"))


def load_scenario(path, days=None) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}") from None
    except OSError as exc:
        raise InvalidInputError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    return scenario_from_dict(data, days)


def save_scenario(sc: Scenario, path):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=1, sort_keys=False)
        fh.write("\n")


# -- generator -------------------------------------------------------------

ZONE_CYCLE = 40
SENSITIVE_VALUE = 9000.0
USER_VALUE = 5000.0
SCAN_COST = -10.0
EXPLOIT_COST = -10.0
OS_DETECT_COST = -50.0
PORTS = (
    445, 135, 139, 80, 443, 21, 25, 3306, 1433, 2967, 6668, 8080, 5900, 110,
    143, 993, 3389, 22, 23, 53, 161, 389, 636, 1521, 5432, 6000, 7001, 8000,
    8443, 9090, 10000, 111, 2049, 5060, 1723, 3128, 1080, 6379, 11211, 27017,
)


@dataclass(frozen=True)
class ScenarioParams:
    machines: int
    exploits: int
    days: int = 50
    seed: int = 0
    fanout: int = 4
    per_subnet: int = 10
    triangle: bool = True

    def __post_init__(self):
        if self.machines < 1:
            raise InvalidInputError("need at least one machine", "machines")
        if self.exploits < 1:
            raise InvalidInputError("need at least one exploit", "exploits")
        if self.days < 0:
            raise InvalidInputError("days must be >= 0", "days")
        if self.fanout < 1 or self.per_subnet < 1:
            raise InvalidInputError("fanout and per_subnet must be positive")


def load_templates() -> list:
    text = resources.files("attackplan").joinpath("data/templates.json").read_text()
    return json.loads(text)["templates"]


def _port(i):
    return PORTS[i] if i < len(PORTS) else 20000 + i


def _zone_layout(n):
    exposed, sensitive, user = [], [], []
    for k in range(n):
        slot = k % ZONE_CYCLE
        if slot == 0:
            exposed.append(f"e{len(exposed)}")
        elif slot == 1:
            sensitive.append(f"s{len(sensitive)}")
        else:
            user.append(f"u{len(user)}")
    return exposed, sensitive, user


def generate_scenario(p: ScenarioParams, templates=None) -> Scenario:
    """Three-zone test network (internet, Exposed, Sensitive, User tree).

    Exploit ``i`` goes to template ``i mod k`` where ``k = min(13, |E|)``
    templates are active, so every machine carries at least one exploit.
    Each machine draws one active template as its snapshot configuration.
    """
    templates = templates if templates is not None else load_templates()
    rng = np.random.default_rng(p.seed)
    k = min(len(templates), p.exploits)
    active = templates[:k]
    per_template = [[] for _ in range(k)]
    for i in range(p.exploits):
        per_template[i % k].append(i)

    chains, parents, compat = {}, {}, {}
    programs = {"dep": ProgramSpec("dep")}
    chains["dep"] = ProgramChain("dep", ("off", "on"), [[0.99, 0.01], [0.0, 1.0]])
    actions = {}
    for t, tpl in enumerate(active):
        fam = "os_" + tpl["os"]
        versions = tuple(tpl["os_versions"])
        if fam not in chains:
            n = len(versions)
            up = float(tpl.get("os_update", 0.01))
            mat = np.eye(n)
            for j in range(n - 1):
                mat[j, j] = 1.0 - up
                mat[j, j + 1] = up
            chains[fam] = ProgramChain(fam, versions, mat)
            programs[fam] = ProgramSpec(fam, None, frozenset(), tpl.get("os_classes"))
            actions[f"os_detect_{tpl['os']}"] = ActionSpec(
                f"os_detect_{tpl['os']}", "os_detect", fam, time_cost=OS_DETECT_COST
            )
        for i in per_template[t]:
            prog = f"svc{i}"
            port = _port(i)
            patch = float(tpl.get("patch", 0.01))
            drop = float(tpl.get("uninstall", 0.005))
            chains[prog] = ProgramChain(
                prog,
                ("absent", "patched", "vul"),
                [[1.0, 0.0, 0.0], [drop, 1.0 - drop, 0.0], [drop, patch, 1.0 - patch - drop]],
            )
            programs[prog] = ProgramSpec(prog, port)
            if tpl.get("patched_by_os_upgrade", False):
                parents[prog] = (fam,)
                compat[(prog, (versions[-1],))] = frozenset({"absent", "patched"})
            gates = []
            if tpl.get("dep_gate", False):
                gates.append(("dep", {"off"}))
            if tpl.get("os_gate"):
                gates.append((fam, set(tpl["os_gate"])))
            actions[f"exploit_{prog}"] = ActionSpec(
                f"exploit_{prog}",
                "exploit",
                prog,
                vulnerable={"vul"},
                gates=tuple(gates),
                crash=tpl.get("crash", "none"),
                time_cost=EXPLOIT_COST,
                detect_cost=float(tpl.get("detect_cost", 0.0)),
            )
            actions[f"scan_port_{port}"] = ActionSpec(
                f"scan_port_{port}", "port_scan", prog, time_cost=SCAN_COST
            )
    um = UpdateModel(chains, parents, compat)

    exposed, sensitive, user = _zone_layout(p.machines)
    configs, machine_actions, template_of = {}, {}, {}
    for m in exposed + sensitive + user:
        t = int(rng.integers(k))
        tpl = active[t]
        fam = "os_" + tpl["os"]
        cfg = {fam: tpl["os_versions"][0], "dep": "off"}
        names = []
        for i in per_template[t]:
            cfg[f"svc{i}"] = "vul"
            names += [f"exploit_svc{i}", f"scan_port_{_port(i)}"]
        if tpl.get("os_gate"):
            names.append(f"os_detect_{tpl['os']}")
        configs[m] = cfg
        machine_actions[m] = tuple(sorted(names))
        template_of[m] = t

    values = {m: 0.0 for m in configs}
    if sensitive:
        values[sensitive[0]] = SENSITIVE_VALUE
    else:
        values[exposed[0]] = SENSITIVE_VALUE
    if user:
        values[user[-1]] = USER_VALUE

    # topology
    subnets = {"*": Subnetwork("*", ())}
    edges = {}
    subnets["exposed"] = Subnetwork("exposed", tuple(exposed))
    if sensitive:
        subnets["sensitive"] = Subnetwork("sensitive", tuple(sensitive))
    all_ports = sorted(_port(i) for i in range(p.exploits))
    exposed_ports = {
        programs[f"svc{i}"].port for m in exposed for i in per_template[template_of[m]]
    }

    def random_block(frac, keep=()):
        return Firewall(frozenset(q for q in all_ports if q not in keep and rng.random() < frac))

    edges[("*", "exposed")] = random_block(0.5, keep=exposed_ports)
    if sensitive:
        edges[("exposed", "sensitive")] = random_block(0.3)
        if p.triangle:
            edges[("*", "sensitive")] = random_block(0.8)
    if user:
        chunks = [user[j:j + p.per_subnet] for j in range(0, len(user), p.per_subnet)]
        for j, chunk in enumerate(chunks):
            subnets[f"user{j}"] = Subnetwork(f"user{j}", tuple(chunk))
            if j == 0:
                edges[("exposed", "user0")] = random_block(0.3)
            else:
                edges[(f"user{(j - 1) // p.fanout}", f"user{j}")] = Firewall()
    net = LogicalNetwork(subnets, edges, "*")
    return Scenario(
        net,
        um,
        SnapshotConfig(configs, p.days),
        programs,
        actions,
        values,
        machine_actions,
        f"threezone-M{p.machines}-E{p.exploits}-s{p.seed}",
    )


def random_scenario(rng, max_machines=4, max_exploits=4, max_subnets=4, tree=False, days=None) -> Scenario:
    """Small random scenario for property tests.

    With ``tree=True`` the network is an out-tree of single-machine subnets.
    """
    n_exp = int(rng.integers(1, max_exploits + 1))
    ports = [int(q) for q in rng.choice(np.arange(1, 60), size=n_exp + 1, replace=False)]
    chains = {"hard": ProgramChain("hard", ("off", "on"), [[0.97, 0.03], [0.0, 1.0]])}
    programs = {"hard": ProgramSpec("hard")}
    actions = {}
    for i in range(n_exp):
        prog = f"p{i}"
        patch, drop = rng.uniform(0.0, 0.05, size=2)
        chains[prog] = ProgramChain(
            prog, ("absent", "patched", "vul"),
            [[1.0, 0.0, 0.0], [drop, 1.0 - drop, 0.0], [drop, patch, 1.0 - patch - drop]],
        )
        programs[prog] = ProgramSpec(prog, ports[i])
        gates = (("hard", {"off"}),) if rng.random() < 0.4 else ()
        crash = str(rng.choice(["none", "none", "machine", "program"]))
        actions[f"x{i}"] = ActionSpec(
            f"x{i}", "exploit", prog, vulnerable={"vul"}, gates=gates, crash=crash,
            time_cost=-float(rng.integers(1, 20)), detect_cost=-float(rng.integers(0, 5)),
        )
        if rng.random() < 0.5:
            actions[f"s{i}"] = ActionSpec(f"s{i}", "port_scan", prog, time_cost=-float(rng.integers(1, 10)))
    um = UpdateModel(chains)

    n_mach = int(rng.integers(1, max_machines + 1))
    machines = [f"m{k}" for k in range(n_mach)]
    if tree:
        subnet_of = {m: f"n{k}" for k, m in enumerate(machines)}
        names = [f"n{k}" for k in range(n_mach)]
        edges = {}
        for k, n in enumerate(names):
            src = "*" if k == 0 or rng.random() < 0.3 else names[int(rng.integers(k))]
            edges[(src, n)] = Firewall(frozenset(q for q in ports if rng.random() < 0.3))
    else:
        n_sub = int(rng.integers(1, min(max_subnets, n_mach) + 1))
        names = [f"n{k}" for k in range(n_sub)]
        subnet_of = {m: names[k] if k < n_sub else names[int(rng.integers(n_sub))] for k, m in enumerate(machines)}
        edges = {}
        for k, n in enumerate(names):
            src = "*" if k == 0 else str(rng.choice(["*"] + names[:k]))
            edges[(src, n)] = Firewall(frozenset(q for q in ports if rng.random() < 0.3))
        for a in ["*"] + names:
            for b in names:
                if a != b and (a, b) not in edges and rng.random() < 0.3:
                    edges[(a, b)] = Firewall(frozenset(q for q in ports if rng.random() < 0.4))
    subnets = {"*": Subnetwork("*")}
    for n in names:
        subnets[n] = Subnetwork(n, tuple(m for m in machines if subnet_of[m] == n))
    net = LogicalNetwork(subnets, edges, "*")

    configs, machine_actions, values = {}, {}, {}
    for m in machines:
        progs = [f"p{i}" for i in range(n_exp) if rng.random() < 0.7] or [f"p{int(rng.integers(n_exp))}"]
        cfg = {"hard": "off"}
        for p in progs:
            cfg[p] = str(rng.choice(["vul", "vul", "patched"]))
        configs[m] = cfg
        machine_actions[m] = tuple(sorted(
            a.name for a in actions.values() if a.program in progs
        ))
        values[m] = float(rng.choice([0.0, 0.0, 100.0, 300.0, 1000.0]))
    T = int(rng.integers(0, 60)) if days is None else days
    return Scenario(net, um, SnapshotConfig(configs, T), programs, actions, values, machine_actions, "random")

"""Logical network model and its rooted biconnected-component tree.

A logical network is a directed graph whose nodes are subnetworks (groups
of mutually connected machines) and whose edges carry firewalls.  The
attacker starts from a dedicated root node that holds no machines.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import InvalidInputError

__all__ = [
    "Firewall",
    "EMPTY_FIREWALL",
    "Subnetwork",
    "LogicalNetwork",
    "ComponentTree",
    "biconnected_components",
    "cut_vertices",
    "clean_up",
    "decompose",
    "network_from_dict",
    "network_to_dict",
    "load_network",
]


@dataclass(frozen=True, order=True)
class Firewall:
    """Deny-list of ports.  The empty firewall blocks nothing."""

    blocked_ports: frozenset = frozenset()

    def __post_init__(self):
        ports = frozenset(self.blocked_ports)
        for p in ports:
            if not isinstance(p, int) or isinstance(p, bool) or p <= 0:
                raise InvalidInputError(f"port must be a positive integer, got {p!r}")
        object.__setattr__(self, "blocked_ports", ports)

    def blocks(self, port) -> bool:
        return port is not None and port in self.blocked_ports

    def weaker_or_equal(self, other: "Firewall") -> bool:
        return self.blocked_ports <= other.blocked_ports

    def intersect(self, other: "Firewall") -> "Firewall":
        return Firewall(self.blocked_ports & other.blocked_ports)

    def __repr__(self):
        return f"Firewall({sorted(self.blocked_ports)})"


EMPTY_FIREWALL = Firewall()


@dataclass(frozen=True)
class Subnetwork:
    id: str
    machines: tuple = ()


@dataclass(frozen=True)
class LogicalNetwork:
    """Subnets, firewall-labelled directed edges and the attacker root.

    ``edges`` maps ``(source, target)`` to a :class:`Firewall`; there is at
    most one edge per ordered pair and self-loops are rejected.
    """

    subnets: Mapping[str, Subnetwork]
    edges: Mapping[tuple, Firewall]
    root: str

    def __post_init__(self):
        subnets = dict(self.subnets)
        edges = dict(self.edges)
        if self.root not in subnets:
            raise InvalidInputError(f"root {self.root!r} is not a subnet", "root")
        if subnets[self.root].machines:
            raise InvalidInputError("the root holds no machines", "root")
        seen = {}
        for sid, sub in subnets.items():
            if sub.id != sid:
                raise InvalidInputError(f"subnet key {sid!r} != id {sub.id!r}", "subnets")
            for m in sub.machines:
                if m in seen:
                    raise InvalidInputError(
                        f"machine {m!r} appears in {seen[m]!r} and {sid!r}", "subnets"
                    )
                seen[m] = sid
        for (src, dst), fw in edges.items():
            if src not in subnets or dst not in subnets:
                raise InvalidInputError(f"edge {src}->{dst} references unknown subnet", "edges")
            if src == dst:
                raise InvalidInputError(f"self-loop on {src!r}", "edges")
            if not isinstance(fw, Firewall):
                raise InvalidInputError(f"edge {src}->{dst} has no Firewall", "edges")
        object.__setattr__(self, "subnets", subnets)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_machine_subnet", seen)
        succ = {s: [] for s in subnets}
        pred = {s: [] for s in subnets}
        for src, dst in sorted(edges):
            succ[src].append(dst)
            pred[dst].append(src)
        object.__setattr__(self, "_succ", {k: tuple(v) for k, v in succ.items()})
        object.__setattr__(self, "_pred", {k: tuple(v) for k, v in pred.items()})

    def successors(self, subnet):
        return self._succ[subnet]

    def predecessors(self, subnet):
        return self._pred[subnet]

    def firewall(self, src, dst) -> Firewall:
        return self.edges[(src, dst)]

    def subnet_of(self, machine) -> str:
        return self._machine_subnet[machine]

    @property
    def machines(self) -> tuple:
        return tuple(m for s in sorted(self.subnets) for m in self.subnets[s].machines)

    def reachable_from_root(self) -> set:
        seen = {self.root}
        todo = deque([self.root])
        while todo:
            n = todo.popleft()
            for nxt in self._succ[n]:
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return seen

    def restrict(self, keep: Iterable[str]) -> "LogicalNetwork":
        keep = set(keep)
        return LogicalNetwork(
            {s: sub for s, sub in self.subnets.items() if s in keep},
            {e: fw for e, fw in self.edges.items() if e[0] in keep and e[1] in keep},
            self.root,
        )

    def undirected_adjacency(self) -> dict:
        adj = {s: set() for s in self.subnets}
        for src, dst in self.edges:
            adj[src].add(dst)
            adj[dst].add(src)
        return {s: sorted(v) for s, v in adj.items()}


def biconnected_components(net: LogicalNetwork) -> list:
    """Biconnected components of the undirected view of ``net``.

    Iterative Hopcroft-Tarjan over an edge stack.  Cut vertices appear in
    every component they belong to.  Isolated vertices yield nothing.
    """
    adj = net.undirected_adjacency()
    depth = {}
    low = {}
    components = []
    for start in sorted(adj):
        if start in depth:
            continue
        depth[start] = low[start] = 0
        edge_stack = []
        stack = [(start, None, iter(adj[start]))]
        while stack:
            v, parent, it = stack[-1]
            advanced = False
            for w in it:
                if w == parent:
                    continue
                if w not in depth:
                    depth[w] = low[w] = depth[v] + 1
                    edge_stack.append((v, w))
                    stack.append((w, v, iter(adj[w])))
                    advanced = True
                    break
                if depth[w] < depth[v]:
                    edge_stack.append((v, w))
                    low[v] = min(low[v], depth[w])
            if advanced:
                continue
            stack.pop()
            if parent is None:
                continue
            low[parent] = min(low[parent], low[v])
            if low[v] >= depth[parent]:
                comp = set()
                while True:
                    a, b = edge_stack.pop()
                    comp.update((a, b))
                    if (a, b) == (parent, v):
                        break
                components.append(frozenset(comp))
    return components


def cut_vertices(net: LogicalNetwork, components=None) -> frozenset:
    """Vertices shared by two or more biconnected components."""
    count = {}
    for comp in components if components is not None else biconnected_components(net):
        for v in comp:
            count[v] = count.get(v, 0) + 1
    return frozenset(v for v, c in count.items() if c > 1)


@dataclass(frozen=True)
class ComponentTree:
    """Cleaned network plus its components rooted at the attacker.

    ``components[0]`` is always ``{root}``; ``parent[i]`` is the subnet in
    the parent component through which component ``i`` is entered, and
    components are listed in topological (breadth-first) order.
    """

    network: LogicalNetwork
    components: tuple
    parent: tuple
    entries: tuple = field(default=())

    @property
    def order(self) -> tuple:
        return tuple(range(len(self.components)))

    def component_of(self, subnet) -> int:
        for i, comp in enumerate(self.components):
            if subnet in comp:
                return i
        raise KeyError(subnet)

    def children(self, index) -> list:
        comp = self.components[index]
        return [i for i, p in enumerate(self.parent) if p is not None and p in comp]


def clean_up(net: LogicalNetwork, raw_components) -> ComponentTree:
    """Root the component tree at the attacker and prune useless structure.

    Subnets unreachable from the root (under edge directions) are removed
    first; components are recomputed on the remaining graph when that
    changes anything.  Each cut vertex joins the component nearest the
    root, the root becomes its own component, and edges pointing back into
    a component's parent subnet are dropped.
    """
    if net.root not in net.subnets:
        raise InvalidInputError(f"root {net.root!r} not in network", "root")
    reach = net.reachable_from_root()
    if reach != set(net.subnets):
        net = net.restrict(reach)
        raw_components = biconnected_components(net)
    raw = [frozenset(c) for c in raw_components if set(c) <= reach]
    by_vertex = {}
    for i, comp in enumerate(raw):
        for v in comp:
            by_vertex.setdefault(v, []).append(i)

    components = [frozenset([net.root])]
    parents = [None]
    assigned = {net.root: 0}
    used = set()
    frontier = deque([net.root])
    while frontier:
        v = frontier.popleft()
        for ci in sorted(by_vertex.get(v, []), key=lambda i: sorted(raw[i])):
            if ci in used:
                continue
            used.add(ci)
            members = frozenset(u for u in raw[ci] if u != v)
            index = len(components)
            components.append(members)
            parents.append(v)
            for u in sorted(members):
                assigned[u] = index
                frontier.append(u)

    keep_edges = {}
    for (src, dst), fw in net.edges.items():
        cs, cd = assigned[src], assigned[dst]
        if cs == cd:
            keep_edges[(src, dst)] = fw
        elif parents[cd] == src:
            keep_edges[(src, dst)] = fw
        # anything else points back toward the root
    cleaned = LogicalNetwork(net.subnets, keep_edges, net.root)

    entries = [frozenset()]
    for i in range(1, len(components)):
        p = parents[i]
        entries.append(frozenset(d for d in cleaned.successors(p) if d in components[i]))
    return ComponentTree(cleaned, tuple(components), tuple(parents), tuple(entries))


def decompose(net: LogicalNetwork) -> ComponentTree:
    return clean_up(net, biconnected_components(net))


# -- serialization ---------------------------------------------------------


def network_from_dict(data: dict) -> LogicalNetwork:
    """Build a network from the JSON scenario layout.

    ``{"root": "*", "subnets": [{"id": .., "machines": [..]}, ..],
    "edges": [{"source": .., "target": .., "blocked_ports": [..]}, ..]}``
    """
    if not isinstance(data, dict):
        raise InvalidInputError("expected an object", "network")
    for key in ("root", "subnets", "edges"):
        if key not in data:
            raise InvalidInputError("missing field", f"network.{key}")
    subnets = {}
    for i, s in enumerate(data["subnets"]):
        where = f"network.subnets[{i}]"
        if not isinstance(s, dict) or "id" not in s:
            raise InvalidInputError("subnet needs an 'id'", where)
        sid = str(s["id"])
        if sid in subnets:
            raise InvalidInputError(f"duplicate subnet {sid!r}", where)
        machines = s.get("machines", [])
        if not isinstance(machines, list):
            raise InvalidInputError("machines must be a list", where + ".machines")
        subnets[sid] = Subnetwork(sid, tuple(str(m) for m in machines))
    root = str(data["root"])
    if root not in subnets:
        subnets[root] = Subnetwork(root, ())
    edges = {}
    for i, e in enumerate(data["edges"]):
        where = f"network.edges[{i}]"
        try:
            src, dst = str(e["source"]), str(e["target"])
        except (KeyError, TypeError):
            raise InvalidInputError("edge needs 'source' and 'target'", where) from None
        if (src, dst) in edges:
            raise InvalidInputError(f"parallel edge {src}->{dst}", where)
        if src == dst:
            raise InvalidInputError(f"self-loop on {src!r}", where)
        ports = e.get("blocked_ports", [])
        if not isinstance(ports, list):
            raise InvalidInputError("blocked_ports must be a list", where + ".blocked_ports")
        try:
            edges[(src, dst)] = Firewall(frozenset(ports))
        except InvalidInputError as exc:
            raise InvalidInputError(str(exc), where + ".blocked_ports") from None
    try:
        return LogicalNetwork(subnets, edges, root)
    except InvalidInputError as exc:
        if exc.field:
            raise InvalidInputError(str(exc).split(": ", 1)[-1], "network." + exc.field) from None
        raise


def network_to_dict(net: LogicalNetwork) -> dict:
    return {
        "root": net.root,
        "subnets": [
            {"id": s, "machines": list(net.subnets[s].machines)} for s in sorted(net.subnets)
        ],
        "edges": [
            {"source": a, "target": b, "blocked_ports": sorted(fw.blocked_ports)}
            for (a, b), fw in sorted(net.edges.items())
        ],
    }


def load_network(path) -> LogicalNetwork:
    with open(path) as fh:
        data = json.load(fh)
    return network_from_dict(data.get("network", data))

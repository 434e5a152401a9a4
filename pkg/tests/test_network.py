import itertools
import json

import numpy as np
import pytest

from attackplan.errors import InvalidInputError
from attackplan.network import (
    EMPTY_FIREWALL,
    Firewall,
    LogicalNetwork,
    Subnetwork,
    biconnected_components,
    cut_vertices,
    decompose,
    load_network,
    network_from_dict,
    network_to_dict,
)


def make_net(edges, extra=(), root="*", fw=EMPTY_FIREWALL):
    names = {root} | set(extra) | {v for e in edges for v in e}
    subnets = {n: Subnetwork(n, () if n == root else (f"m_{n}",)) for n in names}
    return LogicalNetwork(subnets, {e: fw for e in edges}, root)


def random_graph(rng, max_vertices=10):
    n = int(rng.integers(2, max_vertices + 1))
    names = ["*"] + [f"v{i}" for i in range(n - 1)]
    p = rng.uniform(0.1, 0.6)
    edges = set()
    for a, b in itertools.combinations(names, 2):
        if rng.random() < p:
            edges.add((a, b) if rng.random() < 0.5 else (b, a))
    return make_net(sorted(edges), extra=names)


# -- brute-force oracle ------------------------------------------------------


def _connected(vertices, adj):
    vertices = set(vertices)
    if not vertices:
        return True
    start = next(iter(vertices))
    seen, todo = {start}, [start]
    while todo:
        v = todo.pop()
        for w in adj[v]:
            if w in vertices and w not in seen:
                seen.add(w)
                todo.append(w)
    return seen == vertices


def _biconnected(vertices, adj):
    if len(vertices) < 2 or not _connected(vertices, adj):
        return False
    if len(vertices) == 2:
        a, b = vertices
        return b in adj[a]
    return all(_connected(set(vertices) - {v}, adj) for v in vertices)


def brute_force_blocks(net):
    """Maximal vertex sets inducing a biconnected subgraph."""
    adj = {k: set(v) for k, v in net.undirected_adjacency().items()}
    verts = sorted(adj)
    good = []
    for r in range(len(verts), 1, -1):
        for sub in itertools.combinations(verts, r):
            s = frozenset(sub)
            if any(s < g for g in good):
                continue
            if _biconnected(sub, adj):
                good.append(s)
    return set(good)


def brute_force_cuts(net):
    """Vertices whose removal increases the number of connected components."""
    adj = {k: set(v) for k, v in net.undirected_adjacency().items()}
    before = _n_components(adj, adj)
    return {v for v in adj if _n_components(set(adj) - {v}, adj) > before}


def _n_components(vertices, adj):
    vertices = set(vertices)
    n = 0
    while vertices:
        start = vertices.pop()
        todo = [start]
        while todo:
            v = todo.pop()
            for w in adj[v]:
                if w in vertices:
                    vertices.discard(w)
                    todo.append(w)
        n += 1
    return n


def test_bcc_matches_brute_force_on_random_graphs():
    rng = np.random.default_rng(7)
    for _ in range(150):
        net = random_graph(rng)
        comps = biconnected_components(net)
        assert set(comps) == brute_force_blocks(net)
        assert len(comps) == len(set(comps))
        assert set(cut_vertices(net)) == brute_force_cuts(net)


def test_bcc_known_shapes():
    tri = make_net([("*", "a"), ("a", "b"), ("*", "b")])
    assert biconnected_components(tri) == [frozenset({"*", "a", "b"})]
    assert cut_vertices(tri) == frozenset()
    chain = make_net([("*", "a"), ("a", "b")])
    assert set(biconnected_components(chain)) == {frozenset({"*", "a"}), frozenset({"a", "b"})}
    assert cut_vertices(chain) == {"a"}
    # two triangles sharing vertex a
    bow = make_net([("*", "a"), ("a", "b"), ("b", "*"), ("a", "c"), ("c", "d"), ("d", "a")])
    assert set(biconnected_components(bow)) == {frozenset("*ab"), frozenset("acd")}
    assert cut_vertices(bow) == {"a"}


def test_isolated_vertex_has_no_component():
    net = make_net([("*", "a")], extra=["lonely"])
    assert biconnected_components(net) == [frozenset({"*", "a"})]


# -- clean-up -------------------------------------------------------------------


def test_decompose_roots_at_attacker_and_assigns_cuts_toward_root():
    net = make_net([("*", "a"), ("a", "b"), ("b", "c"), ("c", "a"), ("b", "d")])
    tree = decompose(net)
    assert tree.components[0] == frozenset({"*"})
    assert tree.parent[0] is None
    assert tree.components[1] == frozenset({"a"})
    assert tree.parent[1] == "*"
    comp_bc = tree.component_of("b")
    assert tree.components[comp_bc] == frozenset({"b", "c"})
    assert tree.parent[comp_bc] == "a"
    assert tree.entries[comp_bc] == frozenset({"b"})
    # the edge c->a points back into the parent subnet and is dropped
    assert ("c", "a") not in tree.network.edges
    assert tree.parent[tree.component_of("d")] == "b"


def test_every_subnet_in_exactly_one_component():
    rng = np.random.default_rng(3)
    for _ in range(100):
        net = random_graph(rng)
        tree = decompose(net)
        reach = net.reachable_from_root()
        seen = [v for comp in tree.components for v in comp]
        assert sorted(seen) == sorted(reach)
        for i in tree.order[1:]:
            p = tree.parent[i]
            assert tree.component_of(p) < i
            assert tree.entries[i], "a child component must be enterable from its parent"
            assert all(e in tree.components[i] for e in tree.entries[i])


def test_unreachable_subnets_are_dropped():
    net = make_net([("*", "a"), ("b", "a")])
    tree = decompose(net)
    assert "b" not in tree.network.subnets
    assert [set(c) for c in tree.components] == [{"*"}, {"a"}]


def test_root_cycle_is_split_at_root():
    net = make_net([("*", "a"), ("a", "*")])
    tree = decompose(net)
    assert tree.components == (frozenset({"*"}), frozenset({"a"}))
    assert ("a", "*") not in tree.network.edges


# -- validation and IO ----------------------------------------------------------


def test_firewall_semantics():
    fw = Firewall(frozenset({22, 80}))
    assert fw.blocks(22) and not fw.blocks(443)
    assert not fw.blocks(None)
    assert EMPTY_FIREWALL.weaker_or_equal(fw)
    assert not fw.weaker_or_equal(EMPTY_FIREWALL)
    assert fw.intersect(Firewall(frozenset({80, 443}))) == Firewall(frozenset({80}))
    with pytest.raises(InvalidInputError):
        Firewall(frozenset({0}))
    with pytest.raises(InvalidInputError):
        Firewall(frozenset({"80"}))


@pytest.mark.parametrize(
    "subnets, edges, root, field",
    [
        ({"*": Subnetwork("*")}, {}, "x", "root"),
        ({"*": Subnetwork("*", ("m",))}, {}, "*", "root"),
        ({"*": Subnetwork("*"), "a": Subnetwork("a", ("m",)), "b": Subnetwork("b", ("m",))}, {}, "*", "subnets"),
        ({"*": Subnetwork("*")}, {("*", "*"): EMPTY_FIREWALL}, "*", "edges"),
        ({"*": Subnetwork("*")}, {("*", "z"): EMPTY_FIREWALL}, "*", "edges"),
    ],
)
def test_invalid_networks(subnets, edges, root, field):
    with pytest.raises(InvalidInputError) as info:
        LogicalNetwork(subnets, edges, root)
    assert info.value.field == field


def test_network_json_roundtrip(tmp_path):
    net = make_net([("*", "a"), ("a", "b")], fw=Firewall(frozenset({445})))
    data = network_to_dict(net)
    again = network_from_dict(json.loads(json.dumps(data)))
    assert again == net
    path = tmp_path / "net.json"
    path.write_text(json.dumps(data))
    assert load_network(path) == net


def test_parallel_edges_rejected():
    data = {
        "root": "*",
        "subnets": [{"id": "*", "machines": []}, {"id": "a", "machines": ["m"]}],
        "edges": [
            {"source": "*", "target": "a", "blocked_ports": []},
            {"source": "*", "target": "a", "blocked_ports": [22]},
        ],
    }
    with pytest.raises(InvalidInputError):
        network_from_dict(data)

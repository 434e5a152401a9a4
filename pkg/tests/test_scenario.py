import json

import numpy as np
import pytest

from attackplan.errors import InvalidInputError
from attackplan.network import decompose
from attackplan.scenario import (
    EXPLOIT_COST,
    OS_DETECT_COST,
    SCAN_COST,
    SENSITIVE_VALUE,
    USER_VALUE,
    ScenarioParams,
    generate_scenario,
    load_scenario,
    load_templates,
    random_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


def zones(sc):
    net = sc.network
    out = {"exposed": [], "sensitive": [], "user": []}
    for m in net.machines:
        sub = net.subnet_of(m)
        out["user" if sub.startswith("user") else sub].append(m)
    return out


def test_forty_machines_split_one_one_thirtyeight():
    sc = generate_scenario(ScenarioParams(40, 13, seed=1))
    z = zones(sc)
    assert (len(z["exposed"]), len(z["sensitive"]), len(z["user"])) == (1, 1, 38)


def test_reward_placement():
    sc = generate_scenario(ScenarioParams(40, 5, seed=2))
    rewarded = {m: v for m, v in sc.values.items() if v > 0}
    assert sorted(rewarded.values()) == [USER_VALUE, SENSITIVE_VALUE]
    net = sc.network
    by_value = {v: m for m, v in rewarded.items()}
    assert net.subnet_of(by_value[SENSITIVE_VALUE]) == "sensitive"
    leaf = net.subnet_of(by_value[USER_VALUE])
    assert leaf.startswith("user") and not net.successors(leaf)


def test_costs():
    sc = generate_scenario(ScenarioParams(40, 13, seed=3))
    for a in sc.actions.values():
        expected = {"port_scan": SCAN_COST, "exploit": EXPLOIT_COST, "os_detect": OS_DETECT_COST}[a.kind]
        assert a.time_cost == expected
    assert SCAN_COST == EXPLOIT_COST == -10.0 and OS_DETECT_COST == -50.0


def test_thirteen_templates_and_every_machine_has_an_exploit():
    assert len(load_templates()) == 13
    for e in (1, 3, 13, 20):
        sc = generate_scenario(ScenarioParams(12, e, seed=e))
        assert sum(a.kind == "exploit" for a in sc.actions.values()) == e
        for m in sc.machines:
            assert any(a.kind == "exploit" for a in sc.actions_for(m))


def test_same_seed_same_scenario():
    a = scenario_to_dict(generate_scenario(ScenarioParams(30, 7, seed=9)))
    b = scenario_to_dict(generate_scenario(ScenarioParams(30, 7, seed=9)))
    c = scenario_to_dict(generate_scenario(ScenarioParams(30, 7, seed=10)))
    assert json.dumps(a) == json.dumps(b)
    assert json.dumps(a) != json.dumps(c)


def test_topology():
    sc = generate_scenario(ScenarioParams(100, 10, seed=4))
    net = sc.network
    assert ("*", "exposed") in net.edges and ("*", "sensitive") in net.edges
    assert ("exposed", "sensitive") in net.edges
    tree = decompose(net)
    # the internet/exposed/sensitive triangle is the only cluster larger than one subnet
    assert {"exposed", "sensitive"} in [set(c) for c in tree.components]
    assert all(len(c) == 1 for c in tree.components if c != {"exposed", "sensitive"})
    user_edges = [(a, b) for (a, b) in net.edges if a.startswith("user")]
    assert all(not net.firewall(a, b).blocked_ports for a, b in user_edges)
    # the exposed machine's own services are always reachable from the internet
    e0 = next(m for m in net.machines if net.subnet_of(m) == "exposed")
    proc = sc.process(e0)
    fw = net.firewall("*", "exposed")
    assert all(proc.usable(a, fw) for a in range(len(proc.actions)) if proc.actions[a].kind != "os_detect")


def test_generated_scenarios_are_valid_everywhere():
    for m, e in [(1, 1), (2, 3), (6, 7), (45, 13)]:
        sc = generate_scenario(ScenarioParams(m, e, seed=m * e))
        for mach in sc.machines:
            b = sc.belief(mach)
            assert sum(b.dist.values()) == pytest.approx(1.0)
            sc.process(mach)


def test_small_network_value_fallback():
    sc = generate_scenario(ScenarioParams(1, 2, seed=0))
    assert list(sc.values.values()) == [SENSITIVE_VALUE]


@pytest.mark.parametrize("kw", [dict(machines=0, exploits=1), dict(machines=1, exploits=0),
                                dict(machines=1, exploits=1, days=-1)])
def test_bad_params(kw):
    with pytest.raises(InvalidInputError):
        ScenarioParams(**kw)


def test_json_roundtrip(tmp_path):
    sc = generate_scenario(ScenarioParams(8, 4, seed=5))
    path = tmp_path / "sc.json"
    save_scenario(sc, path)
    again = load_scenario(path)
    assert scenario_to_dict(again) == scenario_to_dict(sc)
    assert load_scenario(path, days=3).days == 3
    rng = np.random.default_rng(0)
    for _ in range(5):
        r = random_scenario(rng)
        assert scenario_to_dict(scenario_from_dict(json.loads(json.dumps(scenario_to_dict(r))))) == scenario_to_dict(r)


def test_bad_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "name": "x",\n oops\n}\n')
    with pytest.raises(InvalidInputError) as info:
        load_scenario(path)
    assert info.value.field == "line 3"


def test_missing_fields_and_unknown_references():
    data = scenario_to_dict(generate_scenario(ScenarioParams(3, 2, seed=1)))
    broken = dict(data)
    del broken["network"]
    with pytest.raises(InvalidInputError) as info:
        scenario_from_dict(broken)
    assert info.value.field == "network"
    broken = json.loads(json.dumps(data))
    broken["machines"]["e0"]["actions"] = ["nope"]
    with pytest.raises(InvalidInputError):
        scenario_from_dict(broken)
    broken = json.loads(json.dumps(data))
    broken["machines"]["e0"]["value"] = -5
    with pytest.raises(InvalidInputError):
        scenario_from_dict(broken)

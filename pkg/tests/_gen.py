"""Random model generators shared by the tests."""

import numpy as np

from attackplan.fixtures import running_actions, running_programs, running_update_model
from attackplan.network import LogicalNetwork, Subnetwork
from attackplan.pomdp import NONE_OBS, TERMINAL, TERMINATE, PomdpModel
from attackplan.scenario import Scenario
from attackplan.updates import SnapshotConfig


def random_pomdp(rng, max_states=12, max_actions=5, integer=False) -> PomdpModel:
    """Random deterministic-outcome POMDP, terminal state and terminate included in the limits."""
    n = int(rng.integers(2, max_states + 1))
    k = int(rng.integers(1, max_actions))  # plus terminate
    n_obs = int(rng.integers(1, 4))
    states = (TERMINAL,) + tuple(f"s{i}" for i in range(1, n))
    actions = tuple(f"a{i}" for i in range(k)) + (TERMINATE,)
    obs = (NONE_OBS,) + tuple(f"o{i}" for i in range(1, n_obs))
    controlled = {s for s in range(1, n) if rng.random() < 0.35}
    ns = np.zeros((k + 1, n), dtype=np.int64)
    ob = np.zeros((k + 1, n), dtype=np.int64)
    re = np.zeros((k + 1, n))
    for a in range(k):
        for s in range(1, n):
            t = s if rng.random() < 0.4 else int(rng.integers(1, n))
            ns[a, s] = t
            ob[a, s] = int(rng.integers(n_obs))
            if s not in controlled and t in controlled:
                re[a, s] = float(rng.integers(1, 100)) if integer else rng.uniform(0, 100)
    cost = -(rng.integers(0, 6, size=k + 1).astype(float) if integer else rng.uniform(0, 6, size=k + 1))
    det = -(rng.integers(0, 3, size=k + 1).astype(float) if integer else rng.uniform(0, 3, size=k + 1))
    cost[k] = det[k] = 0.0
    b0 = np.zeros(n)
    support = [s for s in range(1, n) if rng.random() < 0.7] or [1]
    b0[support] = rng.dirichlet(np.ones(len(support)))
    return PomdpModel(states, actions, obs, ns, ob, re, cost, det, b0, frozenset(controlled))


def single_state_model(reward, cost) -> PomdpModel:
    """One live state that an action turns into a controlled one for ``reward``."""
    states = (TERMINAL, "free", "owned")
    actions = ("hack", TERMINATE)
    ns = np.array([[0, 2, 2], [0, 0, 0]])
    ob = np.zeros((2, 3), dtype=np.int64)
    re = np.array([[0.0, reward, 0.0], [0.0, 0.0, 0.0]])
    return PomdpModel(states, actions, (NONE_OBS,), ns, ob, re, np.array([cost, 0.0]), np.zeros(2),
                      np.array([0.0, 1.0, 0.0]), frozenset({2}))


def example_network(subnets, edges, values):
    """Network of copies of the example machine; ``subnets`` maps id -> machine names."""
    subs = {"*": Subnetwork("*")}
    subs.update({k: Subnetwork(k, tuple(v)) for k, v in subnets.items()})
    machines = [m for v in subnets.values() for m in v]
    configs = {m: {"DEP": "off", "SA": "vul", "CAU": "vul"} for m in machines}
    return Scenario(
        LogicalNetwork(subs, edges, "*"),
        running_update_model(),
        SnapshotConfig(configs, 30),
        running_programs(),
        {a.name: a for a in running_actions()},
        values,
    )

import io

import numpy as np
import pytest

from _gen import random_pomdp, single_state_model
from attackplan import _kernels
from attackplan.errors import CapExceededError, ImpossibleObservationError, InvalidInputError, ModelError
from attackplan.fixtures import running_example_model
from attackplan.pomdp import (
    NONE_OBS,
    TERMINAL,
    TERMINATE,
    PolicyNode,
    PomdpModel,
    belief_update,
    brute_force_value,
    dump_model,
    evaluate_policy,
    initial_belief,
    load_model,
    observation_probabilities,
    solve_exact,
    terminate_policy,
)


def test_exact_matches_brute_force_and_policy_value():
    rng = np.random.default_rng(101)
    for i in range(120):
        model = random_pomdp(rng, integer=bool(i % 2))
        v, pol = solve_exact(model)
        assert v == pytest.approx(brute_force_value(model), abs=1e-9)
        assert evaluate_policy(model, pol) == pytest.approx(v, abs=1e-9)
        assert pol.respects_no_repeat()
        assert v >= 0.0


def test_trivial_models():
    v, pol = solve_exact(single_state_model(50.0, -10.0))
    assert v == 40.0
    assert pol.action == "hack"
    # an action worth exactly nothing does not beat terminate
    v, pol = solve_exact(single_state_model(10.0, -10.0))
    assert v == 0.0 and pol.is_leaf


def test_ties_go_to_smallest_name():
    base = single_state_model(50.0, -10.0)
    ns = np.vstack([base.next_state[:1], base.next_state])
    ob = np.vstack([base.observation[:1], base.observation])
    re = np.vstack([base.exploit_reward[:1], base.exploit_reward])
    model = PomdpModel(base.states, ("zeta", "alpha", TERMINATE), base.observations, ns, ob, re,
                       np.array([-10.0, -10.0, 0.0]), np.zeros(3), base.b0, base.controlled)
    _, pol = solve_exact(model)
    assert pol.action == "alpha"


def test_belief_update_and_observation_probabilities():
    model = running_example_model()
    b = initial_belief(model)
    assert sum(b.values()) == pytest.approx(1.0)
    probs = observation_probabilities(b, "scan_port_2967", model)
    assert set(probs) == {"open", "closed"}
    assert sum(probs.values()) == pytest.approx(1.0)
    after = belief_update(b, "scan_port_2967", "open", model)
    assert sum(after.values()) == pytest.approx(1.0)
    assert all("SA=absent" not in s for s in after)
    with pytest.raises(ImpossibleObservationError):
        belief_update(b, "scan_port_2967", "succeeded", model)


def test_dump_load_roundtrip_is_exact():
    rng = np.random.default_rng(5)
    for _ in range(10):
        model = random_pomdp(rng)
        buf = io.StringIO()
        dump_model(model, buf)
        again = load_model(io.StringIO(buf.getvalue()))
        assert again.fingerprint() == model.fingerprint()
        assert np.array_equal(again.reward, model.reward)
        assert solve_exact(again)[0] == solve_exact(model)[0]


@pytest.mark.parametrize(
    "text",
    [
        "",
        "garbage\n",
        "# attackplan-pomdp 1\nstates a b\n",
        "# attackplan-pomdp 1\nfrobnicate x\n",
        "# attackplan-pomdp 1\ncost a notanumber 0\n",
    ],
)
def test_load_rejects_bad_input(text):
    with pytest.raises(InvalidInputError):
        load_model(io.StringIO(text))


def _two_state(**over):
    kw = dict(
        states=(TERMINAL, "s"), actions=("a", TERMINATE), observations=(NONE_OBS,),
        next_state=[[0, 1], [0, 0]], observation=[[0, 0], [0, 0]], exploit_reward=[[0, 0], [0, 0]],
        time_cost=[-1.0, 0.0], detect_cost=[0.0, 0.0], b0=[0.0, 1.0],
    )
    kw.update(over)
    return PomdpModel(**kw)


@pytest.mark.parametrize(
    "over",
    [
        dict(next_state=[[0, 1], [0, 1]]),  # terminate must reach terminal
        dict(next_state=[[1, 1], [0, 0]]),  # terminal must absorb
        dict(time_cost=[1.0, 0.0]),  # positive cost
        dict(time_cost=[-1.0, -1.0]),  # terminate not free
        dict(exploit_reward=[[0, 5], [0, 0]]),  # reward without entering a controlled state
        dict(b0=[0.0, 0.5]),
        dict(states=(TERMINAL, "s s")),
        dict(next_state=[[0, 7], [0, 0]]),
    ],
)
def test_model_validation(over):
    with pytest.raises(ModelError):
        _two_state(**over)


def test_cap_exceeded():
    with pytest.raises(CapExceededError):
        solve_exact(running_example_model(), max_nodes=3)
    model = random_pomdp(np.random.default_rng(0), max_actions=5)
    with pytest.raises(CapExceededError):
        brute_force_value(model, max_actions=0)


def test_policy_dict_roundtrip_and_flatten():
    model = running_example_model()
    _, pol = solve_exact(model)
    again = PolicyNode.from_dict(pol.to_dict())
    assert again == pol
    na, nc = pol.flatten(model)
    assert len(na) == pol.size()
    assert terminate_policy().is_leaf


def test_kernels_agree_with_exact_paths():
    model = running_example_model()
    _, pol = solve_exact(model)
    na, nc = pol.flatten(model)
    starts = np.array([s for s in range(model.n_states) if model.b0[s] > 0])
    ref, fin = _kernels.run_policy_numpy(model.next_state, model.observation, np.array(model.reward), na, nc, starts)
    if _kernels.run_policy_numba is not None:
        got, fin2 = _kernels.run_policy_numba(model.next_state, model.observation, np.array(model.reward),
                                              na, nc, starts)
        assert np.array_equal(ref, got) and np.array_equal(fin, fin2)
    assert float(ref @ model.b0[starts]) == pytest.approx(evaluate_policy(model, pol), abs=1e-9)

import numpy as np
import pytest

from attackplan import _kernels
from attackplan.errors import InvalidInputError, ModelError
from attackplan.fixtures import DEP_DAILY, RUNNING_DAYS, running_example_belief
from attackplan.updates import (
    MachineBelief,
    ProgramChain,
    SnapshotConfig,
    UpdateModel,
    build_initial_belief,
    propagate_chain,
    update_model_from_dict,
    update_model_to_dict,
)


def random_chain(rng, k, name="p"):
    m = rng.random((k, k))
    m[rng.random((k, k)) < 0.3] = 0.0
    m[np.arange(k), np.arange(k)] += 0.1
    m /= m.sum(axis=1, keepdims=True)
    return ProgramChain(name, tuple(f"v{i}" for i in range(k)), m)


def test_chapman_kolmogorov_on_random_chains():
    rng = np.random.default_rng(11)
    for _ in range(100):
        k = int(rng.integers(1, 6))
        ch = random_chain(rng, k)
        start = ch.states[int(rng.integers(k))]
        s, t = (int(x) for x in rng.integers(0, 40, size=2))
        d_s = propagate_chain(ch, start, s)
        two_step = _kernels.propagate(d_s, ch.matrix, t)
        assert np.max(np.abs(two_step - propagate_chain(ch, start, s + t))) <= 1e-9


def test_zero_days_is_identity_exactly():
    rng = np.random.default_rng(2)
    for _ in range(30):
        ch = random_chain(rng, int(rng.integers(1, 6)))
        for i, v in enumerate(ch.states):
            d = propagate_chain(ch, v, 0)
            expect = np.zeros(len(ch.states))
            expect[i] = 1.0
            assert np.array_equal(d, expect)


def test_propagation_against_matrix_power():
    rng = np.random.default_rng(4)
    ch = random_chain(rng, 5)
    for days in (1, 7, 50):
        ref = np.linalg.matrix_power(ch.matrix, days)[0]
        assert np.allclose(propagate_chain(ch, "v0", days), ref, atol=1e-12)


def test_numba_and_numpy_paths_agree():
    if _kernels.propagate_numba is None:
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(5)
    for _ in range(20):
        ch = random_chain(rng, 5)
        d = np.zeros(5)
        d[0] = 1.0
        for days in (0, 1, 30):
            a = _kernels.propagate_numpy(d, ch.matrix, days)
            b = _kernels.propagate_numba(d, ch.matrix, days)
            assert np.allclose(a, b, atol=1e-12)


def test_running_example_dep_mass():
    b = running_example_belief()
    dep_on = b.prob(lambda c: c["DEP"] == "on")
    assert dep_on == pytest.approx(1 - (1 - DEP_DAILY) ** RUNNING_DAYS, abs=1e-12)
    assert dep_on > 0.70
    assert sum(b.dist.values()) == pytest.approx(1.0, abs=1e-12)


def _os_model(delta):
    os_chain = ProgramChain("os", ("xp", "vista"), [[0.9, 0.1], [0.0, 1.0]])
    app = ProgramChain("app", ("old", "new"), [[0.8, 0.2], [0.0, 1.0]])
    return UpdateModel({"os": os_chain, "app": app}, {"app": ("os",)}, delta)


def test_compatibility_renormalises_child_marginal():
    # "new" only runs on vista; "old" runs everywhere
    model = _os_model({("app", ("xp",)): {"old"}})
    snap = SnapshotConfig({"m": {"os": "xp", "app": "old"}}, 1)
    b = build_initial_belief(model, snap, "m")
    assert b.programs == ("os", "app")
    assert b.dist[("xp", "old")] == pytest.approx(0.9)
    assert ("xp", "new") not in b.dist
    assert b.dist[("vista", "old")] == pytest.approx(0.1 * 0.8)
    assert b.dist[("vista", "new")] == pytest.approx(0.1 * 0.2)


def test_no_dependencies_gives_product_of_marginals():
    model = _os_model({})
    snap = SnapshotConfig({"m": {"os": "xp", "app": "old"}}, 3)
    b = build_initial_belief(model, snap, "m")
    os_d = propagate_chain(model.chains["os"], "xp", 3)
    app_d = propagate_chain(model.chains["app"], "old", 3)
    for (o, a), p in b.dist.items():
        assert p == pytest.approx(os_d[["xp", "vista"].index(o)] * app_d[["old", "new"].index(a)])


def test_incompatible_support_is_a_model_error():
    os_chain = ProgramChain("os", ("xp", "vista"), [[1.0, 0.0], [0.0, 1.0]])
    app = ProgramChain("app", ("old", "new"), [[1.0, 0.0], [0.0, 1.0]])
    model = UpdateModel({"os": os_chain, "app": app}, {"app": ("os",)}, {("app", ("xp",)): {"new"}})
    with pytest.raises(ModelError):
        build_initial_belief(model, SnapshotConfig({"m": {"os": "xp", "app": "old"}}, 5), "m")


def test_marginalize_and_prob():
    b = MachineBelief(("a", "b"), {("x", "y"): 0.25, ("x", "z"): 0.25, ("w", "y"): 0.5})
    m = b.marginalize(["b"])
    assert m.dist == {("y",): 0.75, ("z",): 0.25}
    assert b.prob(lambda c: c["a"] == "x") == 0.5


@pytest.mark.parametrize(
    "states, matrix",
    [
        (("a", "b"), [[0.5, 0.6], [0.0, 1.0]]),
        (("a", "b"), [[1.0]]),
        (("a", "a"), [[1.0, 0.0], [0.0, 1.0]]),
        (("a",), [[-0.1]]),
    ],
)
def test_bad_chains(states, matrix):
    with pytest.raises(InvalidInputError):
        ProgramChain("p", states, matrix)


def test_cycles_and_unknown_parents_rejected():
    a = ProgramChain("a", ("x",), [[1.0]])
    b = ProgramChain("b", ("x",), [[1.0]])
    with pytest.raises(InvalidInputError):
        UpdateModel({"a": a, "b": b}, {"a": ("b",), "b": ("a",)})
    with pytest.raises(InvalidInputError):
        UpdateModel({"a": a}, {"a": ("zzz",)})


def test_negative_days_rejected():
    with pytest.raises(InvalidInputError):
        SnapshotConfig({}, -1)
    with pytest.raises(InvalidInputError):
        propagate_chain(ProgramChain("a", ("x",), [[1.0]]), "x", -2)


def test_unknown_version_rejected():
    model = _os_model({})
    with pytest.raises(InvalidInputError):
        build_initial_belief(model, SnapshotConfig({"m": {"os": "win95", "app": "old"}}, 1), "m")


def test_update_model_roundtrip():
    model = _os_model({("app", ("xp",)): {"old"}})
    again = update_model_from_dict(update_model_to_dict(model))
    assert again.chains == model.chains
    assert again.parents == model.parents
    assert again.compat == model.compat

"""Software-update model producing the initial belief over machine configurations.

Each program evolves along its own daily Markov chain.  Programs form a
dependency DAG (operating system at the root); a compatibility table
filters a child's versions given its parents' versions, and the filtered
chain marginal is renormalised per parent assignment.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter

import numpy as np

from . import _kernels
from .errors import InvalidInputError, ModelError

__all__ = [
    "ProgramChain",
    "UpdateModel",
    "SnapshotConfig",
    "MachineBelief",
    "propagate_chain",
    "build_initial_belief",
    "update_model_from_dict",
    "update_model_to_dict",
]

ROW_TOL = 1e-9


@dataclass(frozen=True)
class ProgramChain:
    program: str
    states: tuple
    matrix: np.ndarray

    def __post_init__(self):
        states = tuple(self.states)
        mat = np.array(self.matrix, dtype=float)
        if len(set(states)) != len(states) or not states:
            raise InvalidInputError(f"chain {self.program!r}: states must be unique and non-empty")
        if mat.shape != (len(states), len(states)):
            raise InvalidInputError(
                f"chain {self.program!r}: matrix shape {mat.shape} does not match {len(states)} states"
            )
        if (mat < 0).any() or (mat > 1).any():
            raise InvalidInputError(f"chain {self.program!r}: probabilities outside [0, 1]")
        bad = np.abs(mat.sum(axis=1) - 1.0) > ROW_TOL
        if bad.any():
            row = states[int(np.argmax(bad))]
            raise InvalidInputError(f"chain {self.program!r}: row {row!r} does not sum to 1")
        mat.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "matrix", mat)

    def index(self, version) -> int:
        try:
            return self.states.index(version)
        except ValueError:
            raise InvalidInputError(
                f"{version!r} is not a state of chain {self.program!r}"
            ) from None

    def __hash__(self):
        return hash((self.program, self.states, self.matrix.tobytes()))

    def __eq__(self, other):
        return (
            isinstance(other, ProgramChain)
            and self.program == other.program
            and self.states == other.states
            and np.array_equal(self.matrix, other.matrix)
        )


@dataclass(frozen=True)
class UpdateModel:
    """Chains, dependency parents and the compatibility predicate.

    ``compat[(child, parent_versions)]`` lists the child versions allowed
    for that joint parent assignment (``parent_versions`` ordered like
    ``parents[child]``).  Missing entries allow every version.
    """

    chains: dict
    parents: dict = field(default_factory=dict)
    compat: dict = field(default_factory=dict)

    def __post_init__(self):
        chains = dict(self.chains)
        parents = {p: tuple(v) for p, v in self.parents.items() if v}
        compat = {k: frozenset(v) for k, v in self.compat.items()}
        for prog, ps in parents.items():
            if prog not in chains:
                raise InvalidInputError(f"dependency on unknown program {prog!r}")
            for p in ps:
                if p not in chains:
                    raise InvalidInputError(f"{prog!r} depends on unknown program {p!r}")
        try:
            order = tuple(TopologicalSorter(
                {p: parents.get(p, ()) for p in sorted(chains)}
            ).static_order())
        except CycleError as exc:
            raise InvalidInputError(f"dependency graph has a cycle: {exc.args[1]}") from None
        for (child, assignment), allowed in compat.items():
            if child not in parents:
                raise InvalidInputError(f"compatibility entry for {child!r} which has no parents")
            unknown = allowed - set(chains[child].states)
            if unknown:
                raise InvalidInputError(f"compatibility for {child!r} names unknown versions {sorted(unknown)}")
            if len(assignment) != len(parents[child]):
                raise InvalidInputError(f"compatibility key for {child!r} has wrong arity")
        for child, ps in parents.items():
            for assignment in itertools.product(*(chains[p].states for p in ps)):
                if not self.allowed(child, assignment, compat=compat, chains=chains):
                    raise InvalidInputError(
                        f"no version of {child!r} is compatible with "
                        f"{dict(zip(ps, assignment))}"
                    )
        object.__setattr__(self, "chains", chains)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "compat", compat)
        object.__setattr__(self, "topological_order", order)

    def allowed(self, child, assignment, compat=None, chains=None):
        compat = self.compat if compat is None else compat
        chains = self.chains if chains is None else chains
        key = (child, tuple(assignment))
        if key in compat:
            return compat[key]
        return frozenset(chains[child].states)

    def compatible(self, child, version, assignment) -> bool:
        return version in self.allowed(child, assignment)


@dataclass(frozen=True)
class SnapshotConfig:
    """Concrete configuration of every machine at the last pentest."""

    configs: dict
    days: int

    def __post_init__(self):
        if not isinstance(self.days, (int, np.integer)) or self.days < 0:
            raise InvalidInputError(f"days must be a non-negative integer, got {self.days!r}")
        object.__setattr__(self, "configs", {m: dict(c) for m, c in self.configs.items()})

    def validate(self, model: UpdateModel):
        for m, cfg in self.configs.items():
            for prog, version in cfg.items():
                if prog not in model.chains:
                    raise InvalidInputError(f"machine {m!r} uses program {prog!r} with no chain")
                model.chains[prog].index(version)


@dataclass(frozen=True)
class MachineBelief:
    """Distribution over joint version assignments of ``programs``."""

    programs: tuple
    dist: dict

    def __post_init__(self):
        total = sum(self.dist.values())
        if abs(total - 1.0) > 1e-9:
            raise ModelError(f"belief mass sums to {total}")

    def prob(self, predicate) -> float:
        """Mass of configurations ``c`` (dicts program -> version) with ``predicate(c)``."""
        return sum(p for cfg, p in self.dist.items() if predicate(dict(zip(self.programs, cfg))))

    def marginalize(self, programs) -> "MachineBelief":
        programs = tuple(programs)
        idx = [self.programs.index(p) for p in programs]
        out = {}
        for cfg, p in self.dist.items():
            key = tuple(cfg[i] for i in idx)
            out[key] = out.get(key, 0.0) + p
        return MachineBelief(programs, out)


def propagate_chain(chain: ProgramChain, start, days: int) -> np.ndarray:
    """Distribution over ``chain.states`` after ``days`` daily steps from ``start``."""
    if days < 0:
        raise InvalidInputError("days must be non-negative")
    dist = np.zeros(len(chain.states))
    dist[chain.index(start)] = 1.0
    return _kernels.propagate(dist, chain.matrix, int(days))


def build_initial_belief(model: UpdateModel, snapshot: SnapshotConfig, machine) -> MachineBelief:
    """Exact forward inference through the dependency DAG for one machine.

    Programs are visited in topological order; each conditional is the
    chain marginal restricted to versions compatible with the parents and
    renormalised.  Zero-mass configurations are dropped.
    """
    try:
        config = snapshot.configs[machine]
    except KeyError:
        raise InvalidInputError(f"snapshot has no configuration for {machine!r}") from None
    progs = [p for p in model.topological_order if p in config]
    for p in config:
        if p not in model.chains:
            raise InvalidInputError(f"machine {machine!r} uses program {p!r} with no chain")
    for p in progs:
        for parent in model.parents.get(p, ()):
            if parent not in config:
                raise InvalidInputError(
                    f"machine {machine!r}: {p!r} depends on {parent!r} which is not installed"
                )
    marginals = {
        p: propagate_chain(model.chains[p], config[p], snapshot.days) for p in progs
    }
    pos = {p: i for i, p in enumerate(progs)}
    joint = {(): 1.0}
    for p in progs:
        chain = model.chains[p]
        marg = marginals[p]
        ps = model.parents.get(p, ())
        nxt = {}
        for partial, mass in joint.items():
            assignment = tuple(partial[pos[q]] for q in ps)
            allowed = model.allowed(p, assignment)
            weights = [(v, marg[i]) for i, v in enumerate(chain.states) if v in allowed]
            norm = sum(w for _, w in weights)
            if norm <= 0.0:
                raise ModelError(
                    f"machine {machine!r}: no compatible version of {p!r} has mass under "
                    f"{dict(zip(ps, assignment))}"
                )
            for v, w in weights:
                if w > 0.0:
                    nxt[partial + (v,)] = mass * w / norm
        joint = nxt
    return MachineBelief(tuple(progs), joint)


# -- serialization ---------------------------------------------------------


def update_model_from_dict(data: dict) -> UpdateModel:
    """``{"chains": {prog: {"states": [..], "matrix": [[..]]}},
    "dependencies": {child: [parents..]},
    "compatibility": [{"program": child, "parents": [versions..], "allowed": [..]}]}``"""
    chains = {}
    for prog, spec in data.get("chains", {}).items():
        try:
            chains[prog] = ProgramChain(prog, tuple(spec["states"]), spec["matrix"])
        except KeyError as exc:
            raise InvalidInputError(f"missing {exc.args[0]!r}", f"update_model.chains.{prog}") from None
        except InvalidInputError as exc:
            raise InvalidInputError(str(exc), f"update_model.chains.{prog}") from None
    parents = {k: tuple(v) for k, v in data.get("dependencies", {}).items()}
    compat = {}
    for i, row in enumerate(data.get("compatibility", [])):
        try:
            compat[(row["program"], tuple(row["parents"]))] = frozenset(row["allowed"])
        except KeyError as exc:
            raise InvalidInputError(
                f"missing {exc.args[0]!r}", f"update_model.compatibility[{i}]"
            ) from None
    return UpdateModel(chains, parents, compat)


def update_model_to_dict(model: UpdateModel) -> dict:
    return {
        "chains": {
            p: {"states": list(c.states), "matrix": c.matrix.tolist()}
            for p, c in sorted(model.chains.items())
        },
        "dependencies": {k: list(v) for k, v in sorted(model.parents.items())},
        "compatibility": [
            {"program": child, "parents": list(assign), "allowed": sorted(allowed)}
            for (child, assign), allowed in sorted(model.compat.items())
        ],
    }


def load_update_model(path) -> UpdateModel:
    with open(path) as fh:
        data = json.load(fh)
    return update_model_from_dict(data.get("update_model", data))

"""Quality and scaling experiments on generated three-zone networks."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .baseline import DEFAULT_NODE_CAP, solve_global
from .errors import CapExceededError, InvalidInputError
from .planner import Level4Cache, level1
from .scenario import ScenarioParams, generate_scenario
from .simulate import paired_simulation

__all__ = [
    "QualityCell",
    "ScalingPoint",
    "run_quality_experiment",
    "quality_summary",
    "run_scaling_experiment",
    "scaling_exponent",
    "write_csv",
]

log = logging.getLogger(__name__)


@dataclass
class QualityCell:
    machines: int
    exploits: int
    seed: int
    status: str  # "ok", "no-value" (global optimum is 0) or "cap"
    value_4al: float
    value_global: float
    sim_4al: float
    sim_global: float
    loss: float | None
    exact_loss: float | None
    seconds_4al: float
    seconds_global: float


@dataclass
class ScalingPoint:
    machines: int
    exploits: int
    seed: int
    seconds: float
    value: float
    level4_solves: int
    status: str


def cell_seed(seed, machines, exploits):
    return seed * 10_000 + machines * 100 + exploits


def run_quality_experiment(machines=range(1, 7), exploits=range(1, 8), days=50, runs=2000, seed=0,
                           max_nodes=DEFAULT_NODE_CAP, progress=None) -> list:
    """Loss of 4AL against the global optimum on a grid of network sizes.

    The loss of a cell is ``(Q_global - Q_4al) / Q_global`` with both means
    taken over the same ``runs`` simulated start states.  It is undefined
    when the global optimum is zero.
    """
    cells = []
    for nm in machines:
        for ne in exploits:
            s = cell_seed(seed, nm, ne)
            sc = generate_scenario(ScenarioParams(nm, ne, days=days, seed=s))
            t0 = time.perf_counter()
            v4, pol = level1(sc, Level4Cache(sc, max_nodes))
            t4 = time.perf_counter() - t0
            t0 = time.perf_counter()
            try:
                vg, solver = solve_global(sc, max_nodes)
            except CapExceededError as exc:
                log.warning("cell M=%d E=%d: %s", nm, ne, exc)
                cells.append(QualityCell(nm, ne, s, "cap", v4, math.nan, math.nan, math.nan,
                                         None, None, t4, time.perf_counter() - t0))
                continue
            tg = time.perf_counter() - t0
            a, g, _ = paired_simulation(sc, pol, solver, runs, s)
            if vg <= 0:
                status, loss, exact = "no-value", None, None
            else:
                status = "ok"
                loss = (g.mean - a.mean) / g.mean if g.mean > 0 else None
                exact = (vg - v4) / vg
            cell = QualityCell(nm, ne, s, status, v4, vg, a.mean, g.mean, loss, exact, t4, tg)
            cells.append(cell)
            if progress:
                progress(cell)
    return cells


def quality_summary(cells) -> dict:
    losses = [c.loss for c in cells if c.status == "ok" and c.loss is not None]
    return {
        "cells": len(cells),
        "scored": len(losses),
        "no_value": sum(c.status == "no-value" for c in cells),
        "capped": sum(c.status == "cap" for c in cells),
        "mean_loss": float(np.mean(losses)) if losses else None,
        "max_loss": float(np.max(losses)) if losses else None,
    }


def run_scaling_experiment(sizes=(40, 80, 120, 160), exploits=20, days=50, seed=0, repeats=1,
                           time_cap=600.0, progress=None) -> list:
    """Wall-clock time of 4AL as the network grows.

    Sizes still pending once ``time_cap`` seconds have been spent are
    reported with status ``"skipped"``.
    """
    points = []
    # untimed warm-up so one-off import and compilation costs stay out of the fit
    level1(generate_scenario(ScenarioParams(min(sizes), exploits, days=days, seed=seed)))
    start = time.perf_counter()
    for nm in sizes:
        for r in range(repeats):
            s = cell_seed(seed, nm, exploits) + r
            if time.perf_counter() - start > time_cap:
                points.append(ScalingPoint(nm, exploits, s, math.nan, math.nan, 0, "skipped"))
                continue
            sc = generate_scenario(ScenarioParams(nm, exploits, days=days, seed=s))
            cache = Level4Cache(sc)
            t0 = time.perf_counter()
            value, _ = level1(sc, cache)
            pt = ScalingPoint(nm, exploits, s, time.perf_counter() - t0, value, cache.solves, "ok")
            points.append(pt)
            if progress:
                progress(pt)
    return points


def scaling_exponent(points) -> float:
    """Least-squares slope of log(time) against log(machines)."""
    ok = [p for p in points if p.status == "ok" and p.seconds > 0]
    if len({p.machines for p in ok}) < 2:
        raise InvalidInputError("need timings for at least two sizes", "sizes")
    x = np.log([p.machines for p in ok])
    y = np.log([p.seconds for p in ok])
    return float(np.polyfit(x, y, 1)[0])


def write_csv(rows, dest):
    """Write dataclass rows to a path or an open text file."""
    dicts = [asdict(r) for r in rows]
    if not dicts:
        return
    if hasattr(dest, "write"):
        _write_rows(dicts, dest)
    else:
        with open(dest, "w", newline="") as fh:
            _write_rows(dicts, fh)


def _write_rows(dicts, fh):
    w = csv.DictWriter(fh, fieldnames=list(dicts[0]))
    w.writeheader()
    w.writerows(dicts)

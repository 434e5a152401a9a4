"""The single-machine running example: DEP, SA (port 2967) and CAU (port 6668).

Three independent update chains start from the snapshot where DEP is off
and both services are vulnerable.  After 30 days DEP is on with
probability 1 - 0.96**30 > 0.70, which is what makes a failed SA exploit
strong evidence against CAU.

Costs follow the example (-10 per action) except that exploits also carry
a detection cost of -5.  With identical costs for scans and exploits an
exploit-first plan is never worse than scanning first, so the scan-first
behaviour needs exploits to be slightly more expensive.
"""

from __future__ import annotations

from .machine import ActionSpec, MachinePomdpRequest, ProgramSpec, create_machine_pomdp
from .network import EMPTY_FIREWALL, LogicalNetwork, Subnetwork
from .scenario import Scenario
from .updates import ProgramChain, SnapshotConfig, UpdateModel, build_initial_belief

__all__ = [
    "RUNNING_DAYS",
    "RUNNING_REWARD",
    "running_update_model",
    "running_snapshot",
    "running_programs",
    "running_actions",
    "running_example_belief",
    "running_example_model",
    "running_example_scenario",
]

RUNNING_DAYS = 30
RUNNING_REWARD = 1000.0
DEP_DAILY = 0.04
STATUS = ("absent", "present", "vul")


def _service_chain(program, patch, uninstall):
    # absent stays absent; present (patched) may be removed; vul may be patched or removed
    return ProgramChain(
        program,
        STATUS,
        [
            [1.0, 0.0, 0.0],
            [uninstall, 1.0 - uninstall, 0.0],
            [uninstall, patch, 1.0 - patch - uninstall],
        ],
    )


def running_update_model() -> UpdateModel:
    return UpdateModel(
        {
            "DEP": ProgramChain("DEP", ("off", "on"), [[1.0 - DEP_DAILY, DEP_DAILY], [0.0, 1.0]]),
            "SA": _service_chain("SA", patch=0.001, uninstall=0.03),
            "CAU": _service_chain("CAU", patch=0.02, uninstall=0.02),
        }
    )


def running_snapshot(days=RUNNING_DAYS) -> SnapshotConfig:
    return SnapshotConfig({"m": {"DEP": "off", "SA": "vul", "CAU": "vul"}}, days)


def running_programs() -> dict:
    return {
        "DEP": ProgramSpec("DEP"),
        "SA": ProgramSpec("SA", 2967),
        "CAU": ProgramSpec("CAU", 6668),
    }


def running_actions() -> list:
    dep_off = (("DEP", {"off"}),)
    return [
        ActionSpec("exploit_SA", "exploit", "SA", vulnerable={"vul"}, gates=dep_off,
                   time_cost=-10.0, detect_cost=-5.0),
        ActionSpec("exploit_CAU", "exploit", "CAU", vulnerable={"vul"}, gates=dep_off,
                   time_cost=-10.0, detect_cost=-5.0),
        ActionSpec("scan_port_2967", "port_scan", "SA", time_cost=-10.0),
        ActionSpec("scan_port_6668", "port_scan", "CAU", time_cost=-10.0),
    ]


def running_example_belief(days=RUNNING_DAYS):
    return build_initial_belief(running_update_model(), running_snapshot(days), "m")


def running_example_model(firewall=EMPTY_FIREWALL, reward=RUNNING_REWARD, days=RUNNING_DAYS):
    req = MachinePomdpRequest("m", firewall, reward, running_example_belief(days))
    return create_machine_pomdp(req, running_actions(), running_programs())


def running_example_scenario(days=RUNNING_DAYS) -> Scenario:
    """The example machine alone in subnet ``n1`` directly behind the attacker."""
    net = LogicalNetwork(
        {"*": Subnetwork("*"), "n1": Subnetwork("n1", ("m",))},
        {("*", "n1"): EMPTY_FIREWALL},
        "*",
    )
    return Scenario(
        net,
        running_update_model(),
        running_snapshot(days),
        running_programs(),
        {a.name: a for a in running_actions()},
        {"m": RUNNING_REWARD},
        name="running-example",
    )

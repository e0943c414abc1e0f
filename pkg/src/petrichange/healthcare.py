"""Built-in healthcare composition: process nets, member services and the HCE example.

Root process (services as transitions, ``X.req`` is the request place of X)::

    start -HS-> hs.done -Dispatch-> {AS.req, SS.req}
    AS.req -AS-> as.done,  SS.req -SS-> ss.done
    {as.done, ss.done} -Join-> FS.req -FS-> IS.req -IS-> end

``HS`` is refined by the web-services subnet: the three acquisition
services run in parallel, then diagnosis, assessment and a configurable tail.
"""
from __future__ import annotations

from typing import Sequence

from .changes import OperationSignature, ServiceDescriptor, descriptor_to_dict
from .hierarchy import HierarchicalNet, refine
from .petri import Marking, Net, build_net
from .reconfig import PNAC, Fragment, OmegaKind, RewriteRule, build_pnac, make_rule

TOP_LEVEL = {
    "HS": "HealthService",
    "AS": "AccountingService",
    "SS": "SpecialistService",
    "FS": "FinancialService",
    "IS": "InsuranceService",
}
ACQUISITION = ("PhysInfoWS", "EnvInfoWS", "SubjFeelWS")
ANALYSIS = ("CoronaryDiagWS", "AssessmentWS")
DEFAULT_TAIL = ("EmrWS", "GeoWS", "EmerWS", "GuideWS")
WEB_SERVICES = ACQUISITION + ANALYSIS + DEFAULT_TAIL


def healthcare_root() -> Net:
    places = ["start", "hs.done", "AS.req", "SS.req", "as.done", "ss.done", "FS.req", "IS.req", "end"]
    transitions = ["HS", "Dispatch", "AS", "SS", "Join", "FS", "IS"]
    arcs = [
        ("start", "HS"), ("HS", "hs.done"),
        ("hs.done", "Dispatch"), ("Dispatch", "AS.req"), ("Dispatch", "SS.req"),
        ("AS.req", "AS"), ("AS", "as.done"),
        ("SS.req", "SS"), ("SS", "ss.done"),
        ("as.done", "Join"), ("ss.done", "Join"), ("Join", "FS.req"),
        ("FS.req", "FS"), ("FS", "IS.req"),
        ("IS.req", "IS"), ("IS", "end"),
    ]
    return build_net(places, transitions, arcs, p_in="start", p_out="end", names=TOP_LEVEL)


def web_services_subnet(tail: Sequence[str] = DEFAULT_TAIL) -> Net:
    chain = list(ANALYSIS) + list(tail)
    places = ["in", "out"] + [f"{s}.req" for s in ACQUISITION + tuple(chain)]
    places += [f"{s}.done" for s in ACQUISITION]
    transitions = ["Acquire", "Fuse"] + list(ACQUISITION) + chain
    arcs = []
    for s in ACQUISITION:
        arcs += [("Acquire", f"{s}.req"), (f"{s}.req", s), (s, f"{s}.done"), (f"{s}.done", "Fuse")]
    arcs += [("in", "Acquire"), ("Fuse", f"{chain[0]}.req")]
    for s, nxt in zip(chain, chain[1:] + ["out"]):
        arcs += [(f"{s}.req", s), (s, f"{nxt}.req" if nxt != "out" else "out")]
    return build_net(places, transitions, arcs, p_in="in", p_out="out")


def healthcare_process(tail: Sequence[str] = DEFAULT_TAIL) -> HierarchicalNet:
    return refine(HierarchicalNet(healthcare_root()), ["HS"], web_services_subnet(tail))


def _op(name: str, inputs: dict[str, str], outputs: dict[str, str]) -> OperationSignature:
    return OperationSignature(name, tuple(inputs.items()), tuple(outputs.items()))


def healthcare_services(*, ss_critical: bool = False, with_substitute: bool = False) -> list[ServiceDescriptor]:
    """The five top-level services, the nine web services and optionally SS2."""
    uid = {"userId": "UserId"}
    ss_ops = (_op("checkValues", {"vitals": "VitalSigns"}, {"advice": "MedicationAdvice"}),)
    services = [
        ServiceDescriptor("HS", "HealthService",
                          (_op("subscribe", {"citizen": "CitizenId"}, {"session": "SessionId"}),),
                          cost=5, responsiveness=120, critical=True),
        ServiceDescriptor("AS", "AccountingService",
                          (_op("recordContact", {"session": "SessionId", "contact": "ContactInfo"},
                               {"receipt": "Receipt"}),),
                          cost=2, responsiveness=80),
        ServiceDescriptor("SS", "SpecialistService", ss_ops, cost=20, responsiveness=300,
                          critical=ss_critical, substitutes=("SS2",) if with_substitute else ()),
        ServiceDescriptor("FS", "FinancialService",
                          (_op("bill", {"receipt": "Receipt"}, {"invoice": "Invoice"}),),
                          cost=10, responsiveness=150),
        ServiceDescriptor("IS", "InsuranceService",
                          (_op("claim", {"invoice": "Invoice"}, {"settlement": "Settlement"}),),
                          cost=8, responsiveness=200),
        ServiceDescriptor("PhysInfoWS", "PhysiologicalInfo",
                          (_op("acquirePhysiological", uid, {"signals": "PhysSignals"}),), cost=1, responsiveness=40),
        ServiceDescriptor("EnvInfoWS", "EnvironmentInfo",
                          (_op("acquireEnvironment", uid, {"environment": "EnvData"}),), cost=1, responsiveness=40),
        ServiceDescriptor("SubjFeelWS", "SubjectiveFeelings",
                          (_op("acquireFeelings", uid, {"feelings": "SubjectiveData"}),), cost=1, responsiveness=60),
        ServiceDescriptor("CoronaryDiagWS", "CoronaryDiagnosis",
                          (_op("diagnose", {"signals": "PhysSignals", "environment": "EnvData",
                                            "feelings": "SubjectiveData"}, {"diagnosis": "Diagnosis"}),),
                          cost=6, responsiveness=250, critical=True),
        ServiceDescriptor("AssessmentWS", "RiskAssessment",
                          (_op("assessRisk", {"diagnosis": "Diagnosis", "emr": "EMR"}, {"risk": "RiskLevel"}),),
                          cost=4, responsiveness=180),
        ServiceDescriptor("EmrWS", "MedicalRecord",
                          (_op("medicalHistory", uid, {"emr": "EMR"}),), cost=2, responsiveness=90),
        ServiceDescriptor("GeoWS", "Geolocation",
                          (_op("locate", uid, {"location": "Location"}),), cost=1, responsiveness=30),
        ServiceDescriptor("EmerWS", "Emergency",
                          (_op("raiseAlarm", {"userId": "UserId", "location": "Location"}, {"alarm": "AlarmId"}),),
                          cost=3, responsiveness=20, critical=True),
        ServiceDescriptor("GuideWS", "PreventiveGuide",
                          (_op("preventiveGuide", {"risk": "RiskLevel"}, {"guide": "Guidance"}),),
                          cost=1, responsiveness=70),
    ]
    if with_substitute:
        services.append(ServiceDescriptor("SS2", "SpecialistService", ss_ops, cost=25, responsiveness=280))
    return services


def healthcare_document(name: str = "healthcare-nominal", *, ss_critical: bool = False,
                        with_substitute: bool = False, faults: Sequence[dict] = (),
                        heartbeat_limit: int = 3, max_ticks: int = 100) -> dict:
    """A scenario document (JSON-ready dict) for the built-in composition."""
    return {
        "name": name,
        "services": [descriptor_to_dict(s) for s in healthcare_services(
            ss_critical=ss_critical, with_substitute=with_substitute)],
        "process": "builtin:healthcare",
        "rules": [],
        "fault_schedule": list(faults),
        "polling": {"interval_ticks": 5, "alive_timeout_ticks": 5},
        "policy": {"heartbeat_limit": heartbeat_limit, "substitution_strategy": "first_listed"},
        "seed": 0,
        "max_ticks": max_ticks,
    }


# -- HCE example: an orchestration with adaptive-change rules ------------------

def adaptive_net() -> Net:
    """Chain HCE_0 -S1-> HCE_1 -S2-> HCE_2 -S3-> HCE_3 -S4-> HCE_4 (the alterState family)."""
    places = [f"HCE_{i}" for i in range(5)]
    transitions = [f"S{i}" for i in range(1, 5)]
    arcs = []
    for i in range(4):
        arcs += [(f"HCE_{i}", f"S{i + 1}"), (f"S{i + 1}", f"HCE_{i + 1}")]
    return build_net(places, transitions, arcs, p_in="HCE_0", p_out="HCE_4")


def alter_state_rule() -> RewriteRule:
    """Swap the state place HCE_2 for a fresh HCE_2' wired the same way."""
    match = Fragment.of(["HCE_2"], [], [("S2", "HCE_2"), ("HCE_2", "S3")])
    repl = Fragment.of(["HCE_2'"], [], [("S2", "HCE_2'"), ("HCE_2'", "S3")])
    return make_rule("alterState", OmegaKind.ALTER_STATE, match, repl, {"HCE_2": "HCE_2'"})


def remove_service_rule() -> RewriteRule:
    """Delete service S3 and its request place; S2 feeds HCE_3 directly."""
    match = Fragment.of(["HCE_2"], ["S3"], [("S2", "HCE_2"), ("HCE_2", "S3"), ("S3", "HCE_3")])
    repl = Fragment.of([], [], [("S2", "HCE_3")])
    return make_rule("removeService", OmegaKind.ALTER_SERVICE_INSTANCE, match, repl, {"HCE_2": "HCE_3"})


def add_service_rule() -> RewriteRule:
    """Attach an alternative service path HCE_1 -S5a-> HCE_5 -S5b-> HCE_2 (alterServiceInstance family)."""
    repl = Fragment.of(["HCE_5"], ["S5a", "S5b"],
                       [("HCE_1", "S5a"), ("S5a", "HCE_5"), ("HCE_5", "S5b"), ("S5b", "HCE_2")])
    return make_rule("addService", OmegaKind.ALTER_SERVICE_INSTANCE, Fragment(), repl)


def reorder_rule() -> RewriteRule:
    """Run S3 before S2: HCE_1 -S3r-> HCE_10 -S2r-> HCE_3 (alterOrder family)."""
    match = Fragment.of(["HCE_2"], ["S2", "S3"],
                        [("HCE_1", "S2"), ("S2", "HCE_2"), ("HCE_2", "S3"), ("S3", "HCE_3")])
    repl = Fragment.of(["HCE_10"], ["S3r", "S2r"],
                       [("HCE_1", "S3r"), ("S3r", "HCE_10"), ("HCE_10", "S2r"), ("S2r", "HCE_3")])
    return make_rule("alterOrder", OmegaKind.ALTER_ORDER, match, repl, {"HCE_2": "HCE_10"})


def adaptive_example() -> PNAC:
    rules = [alter_state_rule(), remove_service_rule(), add_service_rule(), reorder_rule()]
    return build_pnac(adaptive_net(), rules, Marking({"HCE_0": 1}))

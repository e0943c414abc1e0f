from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from petrichange.changes import (
    NONFUNCTIONAL,
    ChangeError,
    IdMismatch,
    OmegaEvent,
    OperationSignature,
    OrchestrationContext,
    ServiceDescriptor,
    ThetaEvent,
    ThetaKind,
    UnknownService,
    apply_event,
    classify,
    dependability_subnet,
    descriptor_from_dict,
    descriptor_to_dict,
    fire_theta,
    functional_initial,
    functional_template,
    map_theta_to_omega,
    nonfunctional_initial,
    nonfunctional_template,
    rearm,
)
from petrichange.petri import NotEnabled
from petrichange.reconfig import OmegaKind

VITALS_V1 = OperationSignature("checkVitals", (("reading", "v1"),), (("ok", "bool"),))
VITALS_V2 = OperationSignature("checkVitals", (("reading", "v2"),), (("ok", "bool"),))


def desc(**kw):
    base = dict(id="SS", role_name="SpecialistService", operations=(VITALS_V1,), cost=10.0,
                responsiveness=100.0)
    base.update(kw)
    return ServiceDescriptor(**base)


ops = st.sampled_from([
    VITALS_V1, VITALS_V2,
    OperationSignature("diagnose", (("ecg", "signal"),), (("risk", "float"),)),
    OperationSignature("diagnose", (("ecg", "signal"),), (("risk", "float"),), "async"),
    OperationSignature("notify", (("msg", "str"),)),
])


@st.composite
def descriptors(draw):
    chosen = {}
    for op in draw(st.lists(ops, max_size=3)):
        chosen[op.name] = op
    return ServiceDescriptor(
        id="X", role_name="R", operations=tuple(chosen.values()),
        available=draw(st.booleans()), reliable=draw(st.booleans()),
        cost=float(draw(st.integers(0, 50))), responsiveness=float(draw(st.integers(0, 500))),
    )


# -- templates ----------------------------------------------------------------

def test_nonfunctional_template_shape():
    net, m0 = nonfunctional_template(), nonfunctional_initial()
    assert len(net.places) == 5 and len(net.transitions) == 4
    assert (net.p_in, net.p_out) == ("PS", "PS")
    assert m0.count("PS") == 4
    assert m0["PS"] == {"A": 1, "R": 1, "C": 1, "Re": 1}
    assert dict(net.guards) == {"TA": "A", "TR": "R", "TC": "C", "TRe": "Re"}


def test_dependability_subnet():
    sub = dependability_subnet(nonfunctional_template())
    assert sub.places == {"PS", "PS'Re", "PS'A"}
    assert sub.transitions == {"TRe", "TA"}


def test_functional_template_shape():
    net, m0 = functional_template(), functional_initial()
    assert len(net.places) == 3 and len(net.transitions) == 2
    assert m0.count("PSF") == 2


def test_template_names_service():
    assert "SS" in nonfunctional_template("SS").name("PS")


# -- classify -----------------------------------------------------------------

def test_classify_availability_only():
    events = classify(desc(), desc(available=False))
    assert [e.kind for e in events] == [ThetaKind.ALTER_AVAILABILITY]


def test_classify_signature_change_is_remove_then_add():
    events = classify(desc(), desc(operations=(VITALS_V2,)))
    assert [e.kind for e in events] == [ThetaKind.STRUCTURAL_REMOVE, ThetaKind.STRUCTURAL_ADD]
    assert all(e.detail == "checkVitals" for e in events)


def test_classify_behavior_tag_change():
    events = classify(desc(), desc(operations=(replace(VITALS_V1, behavior="async"),)))
    assert [e.kind for e in events] == [ThetaKind.BEHAVIORAL]


def test_classify_id_mismatch():
    with pytest.raises(IdMismatch):
        classify(desc(), desc(id="AS"))


def test_classify_orders_nonfunctional_alphabetically():
    post = desc(available=False, reliable=False, cost=11.0, responsiveness=1.0)
    kinds = [e.kind.value for e in classify(desc(), post)]
    assert kinds == sorted(kinds) and len(kinds) == 4


def test_dead_band_suppresses_small_numeric_changes():
    assert classify(desc(), desc(cost=10.5), dead_band=0.1) == []
    assert [e.kind for e in classify(desc(), desc(cost=12.0), dead_band=0.1)] == [ThetaKind.ALTER_COST]


@pytest.mark.parametrize("kind", list(NONFUNCTIONAL))
def test_each_nonfunctional_kind_classifies_and_fires_alone(kind):
    field, label = NONFUNCTIONAL[kind]
    pre = desc()
    value = {"available": False, "reliable": False, "cost": 99.0, "responsiveness": 7.0}[field]
    (event,) = classify(pre, replace(pre, **{field: value}))
    assert event.kind is kind
    after = fire_theta(nonfunctional_template(), nonfunctional_initial(), event)
    assert after[f"PS'{label}"] == {label: 1}
    assert after.count("PS") == 3
    assert label not in after["PS"]


@given(d=descriptors())
def test_classify_identity_is_empty(d):
    assert classify(d, d) == []


@given(pre=descriptors(), post=descriptors())
def test_classify_nonempty_iff_changed(pre, post):
    assert bool(classify(pre, post)) == (pre != post)


@given(pre=descriptors(), post=descriptors())
def test_events_round_trip_to_post(pre, post):
    rebuilt = pre
    for e in classify(pre, post):
        rebuilt = apply_event(rebuilt, e)
    assert rebuilt == post


@given(pre=descriptors(), post=descriptors())
def test_event_fields_differ(pre, post):
    for e in classify(pre, post):
        a, b = e.values()
        assert a != b


# -- template firing ----------------------------------------------------------

def _event(kind, tick=0):
    return ThetaEvent(kind, "SS", desc(), desc(), tick, NONFUNCTIONAL.get(kind, ("op",))[0])


def test_theta_a_then_r():
    net = nonfunctional_template()
    m = fire_theta(net, nonfunctional_initial(), _event(ThetaKind.ALTER_AVAILABILITY))
    assert m.count("PS'A", "A") == 1
    m = fire_theta(net, m, _event(ThetaKind.ALTER_RELIABILITY))
    assert m.count("PS'A", "A") == 1 and m.count("PS'R", "R") == 1


def test_theta_a_twice_not_enabled():
    net = nonfunctional_template()
    m = fire_theta(net, nonfunctional_initial(), _event(ThetaKind.ALTER_AVAILABILITY))
    with pytest.raises(NotEnabled):
        fire_theta(net, m, _event(ThetaKind.ALTER_AVAILABILITY))


def test_rearm_restores_token():
    net = nonfunctional_template()
    m = fire_theta(net, nonfunctional_initial(), _event(ThetaKind.ALTER_COST))
    assert rearm(net, m, ThetaKind.ALTER_COST) == nonfunctional_initial()


def test_functional_events_fire_functional_template():
    net = functional_template()
    m = fire_theta(net, functional_initial(), _event(ThetaKind.BEHAVIORAL))
    assert m.count("PSF'B", "Behav") == 1


def _record_stream(kinds):
    """Record a stream on fresh templates, re-arming a kind that repeats."""
    nf, f = nonfunctional_template(), functional_template()
    marks = {False: nonfunctional_initial(), True: functional_initial()}
    for kind in kinds:
        net = f if kind.functional else nf
        m = marks[kind.functional]
        try:
            m = fire_theta(net, m, _event(kind))
        except NotEnabled:
            m = fire_theta(net, rearm(net, m, kind), _event(kind))
        marks[kind.functional] = m
        yield kind, m


def one_safe(m):
    return all(n <= 1 for p in m.places() for n in m[p].values())


@given(kinds=st.lists(st.sampled_from(list(ThetaKind)), max_size=20))
@settings(max_examples=300)
def test_templates_stay_one_safe(kinds):
    for _, m in _record_stream(kinds):
        assert one_safe(m)


# -- theta -> omega -----------------------------------------------------------

CTX = OrchestrationContext.of(["SS", "FS"], {"SS": ["checkVitals"]})


def test_theta_a_maps_to_service_instance():
    e = classify(desc(), desc(available=False), tick=10)[0]
    omega = map_theta_to_omega(e, CTX)
    assert omega.kind is OmegaKind.ALTER_SERVICE_INSTANCE and omega.target == "SS"


def test_theta_c_maps_to_alter_state():
    fs = desc(id="FS", role_name="FinancialService")
    e = classify(fs, replace(fs, cost=12.0))[0]
    assert map_theta_to_omega(e, CTX).kind is OmegaKind.ALTER_STATE


def test_uninvoked_structural_remove_maps_to_alter_state():
    pre = desc(operations=(VITALS_V1, OperationSignature("notify")))
    (e,) = classify(pre, desc())
    assert e.kind is ThetaKind.STRUCTURAL_REMOVE and e.detail == "notify"
    assert map_theta_to_omega(e, CTX).kind is OmegaKind.ALTER_STATE


def test_invoked_structural_change_maps_to_service_instance():
    e = classify(desc(), desc(operations=(VITALS_V2,)))[0]
    assert map_theta_to_omega(e, CTX).kind is OmegaKind.ALTER_SERVICE_INSTANCE


def test_mapping_unknown_service():
    other = desc(id="ZZ")
    e = classify(other, replace(other, cost=1.0))[0]
    with pytest.raises(UnknownService):
        map_theta_to_omega(e, CTX)


@given(kind=st.sampled_from(list(ThetaKind)), tick=st.integers(0, 100))
def test_mapping_total_and_deterministic(kind, tick):
    e = _event(kind, tick)
    first = map_theta_to_omega(e, CTX)
    assert first == map_theta_to_omega(e, CTX)
    assert first.kind in (OmegaKind.ALTER_STATE, OmegaKind.ALTER_SERVICE_INSTANCE)


def test_omega_cannot_precede_cause():
    with pytest.raises(ChangeError):
        OmegaEvent(OmegaKind.ALTER_STATE, "SS", _event(ThetaKind.ALTER_COST, tick=5), 4)


# -- descriptors ----------------------------------------------------------------

def test_descriptor_invariants():
    with pytest.raises(ChangeError):
        desc(operations=(VITALS_V1, VITALS_V2))
    with pytest.raises(ChangeError):
        desc(substitutes=("SS",))


@given(d=descriptors())
def test_descriptor_dict_round_trip(d):
    assert descriptor_from_dict(descriptor_to_dict(d)) == d


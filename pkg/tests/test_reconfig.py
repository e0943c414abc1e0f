import json
import random

import pytest
from hypothesis import given, settings, strategies as st

import gen
from petrichange.healthcare import (
    adaptive_example,
    adaptive_net,
    add_service_rule,
    alter_state_rule,
    healthcare_process,
    remove_service_rule,
    reorder_rule,
)
from petrichange.hierarchy import flatten
from petrichange.petri import Marking, StructuralError, fire_sequence, net_from_dict, net_to_dict
from petrichange.reaction import service_fragment, synthesize_removal_rule
from petrichange.reconfig import (
    Fragment,
    NotApplicable,
    OmegaKind,
    OrphanedTokens,
    RuleError,
    UnknownRule,
    adaptive_change_kind,
    applicable,
    apply_rule,
    build_pnac,
    make_rule,
    rule_from_dict,
    rule_to_dict,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_adaptive_example_is_valid_pnac():
    pnac = adaptive_example()
    assert pnac.generation == 0
    assert pnac.initial == Marking({"HCE_0": 1})
    assert {r.id for r in pnac.rules} >= {"alterState", "removeService", "addService"}


def test_empty_rule_set():
    pnac = build_pnac(adaptive_net())
    assert pnac.rules == () and pnac.generation == 0


def test_replacement_reusing_match_id_rejected():
    match = Fragment.of(["HCE_2"], [], [("S2", "HCE_2"), ("HCE_2", "S3")])
    with pytest.raises(RuleError):
        make_rule("bad", "AlterState", match, match, {"HCE_2": "HCE_2"})


def test_incomplete_transfer_rejected_at_build():
    match = Fragment.of(["HCE_2"], [], [("S2", "HCE_2"), ("HCE_2", "S3")])
    repl = Fragment.of(["X"], [], [("S2", "X"), ("X", "S3")])
    rule = make_rule("noTransfer", "AlterState", match, repl)
    with pytest.raises(RuleError):
        build_pnac(adaptive_net(), [rule])


def test_initial_marking_must_name_known_places():
    with pytest.raises(StructuralError):
        build_pnac(adaptive_net(), [], Marking({"ghost": 1}))


def test_unknown_rule():
    pnac = build_pnac(adaptive_net())
    with pytest.raises(UnknownRule):
        applicable(pnac, alter_state_rule())


def test_removal_rule_on_scenario_net():
    net = flatten(healthcare_process())
    rule = synthesize_removal_rule(net, service_fragment(net, "SS"))
    pnac = build_pnac(net, [rule], Marking({"start": 1}))
    assert applicable(pnac, rule)
    pnac2, _ = apply_rule(pnac, rule, pnac.initial)
    assert not applicable(pnac2, rule)
    with pytest.raises(NotApplicable):
        apply_rule(pnac2, rule, pnac.initial)


def test_empty_match_always_applicable():
    pnac = adaptive_example()
    assert applicable(pnac, add_service_rule())


def test_dangling_arc_makes_rule_inapplicable():
    # deleting S3 while leaving its output arc unmatched would orphan the arc
    match = Fragment.of([], ["S3"], [("HCE_2", "S3")])
    rule = make_rule("dangle", "AlterServiceInstance", match, Fragment())
    pnac = build_pnac(adaptive_net(), [rule])
    assert not applicable(pnac, rule)


def test_fig11_alter_state():
    pnac = adaptive_example()
    m = Marking({"HCE_2": 1})
    rule = pnac.rule("alterState")
    pnac2, m2 = apply_rule(pnac, rule, m)
    assert m2 == Marking({"HCE_2'": 1})
    assert len(pnac2.net.places) == len(pnac.net.places)
    assert len(pnac2.net.transitions) == len(pnac.net.transitions)
    assert pnac2.generation == 1
    assert fire_sequence(pnac2.net, m2, ["S3", "S4"]).count("HCE_4") == 1


def test_fig12_removal():
    pnac = adaptive_example()
    pnac2, m2 = apply_rule(pnac, pnac.rule("removeService"), Marking({"HCE_2": 1}))
    assert m2 == Marking({"HCE_3": 1})
    assert len(pnac2.net.places) == 4 and len(pnac2.net.transitions) == 3
    assert pnac2.net.flow("S2", "HCE_3") == 1
    assert fire_sequence(pnac2.net, Marking({"HCE_0": 1}), ["S1", "S2", "S4"]) == Marking({"HCE_4": 1})


def test_fig13_addition():
    pnac = adaptive_example()
    m = Marking({"HCE_1": 1})
    pnac2, m2 = apply_rule(pnac, pnac.rule("addService"), m)
    assert m2 == m
    assert {"S5a", "S5b"} <= pnac2.net.transitions and "HCE_5" in pnac2.net.places
    assert fire_sequence(pnac2.net, m2, ["S5a", "S5b", "S3", "S4"]) == Marking({"HCE_4": 1})


def test_reorder_rule():
    pnac = adaptive_example()
    pnac2, m2 = apply_rule(pnac, pnac.rule("alterOrder"), Marking({"HCE_1": 1}))
    assert fire_sequence(pnac2.net, m2, ["S3r", "S2r", "S4"]) == Marking({"HCE_4": 1})


def test_orphaned_tokens():
    match = Fragment.of(["HCE_2"], [], [("S2", "HCE_2"), ("HCE_2", "S3")])
    repl = Fragment.of(["X"], [], [("S2", "X"), ("X", "S3")])
    rule = make_rule("orphan", "AlterState", match, repl)
    pnac = build_pnac(adaptive_net(), [], Marking({"HCE_0": 1})).with_rule(rule)
    with pytest.raises(OrphanedTokens):
        apply_rule(pnac, rule, Marking({"HCE_2": 1}))


@pytest.mark.parametrize("rule,kind", [
    (alter_state_rule, OmegaKind.ALTER_STATE),
    (remove_service_rule, OmegaKind.ALTER_SERVICE_INSTANCE),
    (add_service_rule, OmegaKind.ALTER_SERVICE_INSTANCE),
    (reorder_rule, OmegaKind.ALTER_ORDER),
])
def test_adaptive_change_kind(rule, kind):
    assert adaptive_change_kind(rule()) is kind


def test_alter_cost_kind_representable():
    assert OmegaKind("AlterCost") is OmegaKind.ALTER_COST


def test_rule_json_round_trip():
    for rule in adaptive_example().rules:
        assert rule_from_dict(json.loads(json.dumps(rule_to_dict(rule)))) == rule


def _apply_random(seed):
    net, marking, rule = gen.random_rule_case(random.Random(seed))
    pnac = build_pnac(net, [rule], marking)
    assert applicable(pnac, rule, marking)
    return net, marking, rule, pnac, apply_rule(pnac, rule, marking)


@given(seed=seeds)
@settings(max_examples=200, deadline=None)
def test_rewriting_conserves_tokens_and_validity(seed):
    net, marking, rule, pnac, (pnac2, m2) = _apply_random(seed)
    assert m2.label_totals() == marking.label_totals()
    assert net_from_dict(net_to_dict(pnac2.net)) == pnac2.net
    assert set(m2.places()) <= pnac2.net.places
    assert pnac2.generation == pnac.generation + 1


@given(seed=seeds)
@settings(max_examples=100, deadline=None)
def test_rewriting_disjoint_and_local(seed):
    net, marking, rule, pnac, (pnac2, m2) = _apply_random(seed)
    new_nodes = (pnac2.net.places | pnac2.net.transitions) - (net.places | net.transitions)
    assert new_nodes == rule.replacement.nodes
    touched = rule.match.nodes | rule.replacement.nodes
    keep = lambda arcs: {a for a in arcs if a[0] not in touched and a[1] not in touched}
    assert keep(net.arcs) == keep(pnac2.net.arcs)
    for p in net.places - rule.match.places:
        assert m2[p] == marking[p]


@given(seed=seeds)
@settings(max_examples=50, deadline=None)
def test_rewriting_deterministic(seed):
    *_, pnac, first = _apply_random(seed)
    *_, pnac_b, second = _apply_random(seed)
    assert first == second

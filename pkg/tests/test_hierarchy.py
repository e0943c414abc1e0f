import json
import random

import pytest
from hypothesis import given, settings, strategies as st

import gen
from petrichange.analysis import reachable
from petrichange.healthcare import WEB_SERVICES, healthcare_process, healthcare_root, web_services_subnet
from petrichange.hierarchy import (
    AlreadyRefined,
    CyclicRefinement,
    HierarchicalNet,
    execute_hierarchical,
    flatten,
    hnet_from_dict,
    hnet_to_dict,
    refine,
)
from petrichange.petri import (
    Marking,
    NotEnabled,
    StructuralError,
    UnknownTransition,
    build_net,
    fire,
    fire_sequence,
    net_from_dict,
    net_to_dict,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def one_transition_root():
    return build_net(["p0", "p1"], ["t"], [("p0", "t"), ("t", "p1")], p_in="p0", p_out="p1")


def two_step_chain():
    return build_net(["a", "b", "c"], ["u1", "u2"],
                     [("a", "u1"), ("u1", "b"), ("b", "u2"), ("u2", "c")], p_in="a", p_out="c")


def test_refine_healthcare_with_web_services():
    h = healthcare_process()
    assert h.is_refined(["HS"])
    sub = h.net_at(["HS"])
    assert set(WEB_SERVICES) <= sub.transitions
    assert len(WEB_SERVICES) == 9


def test_refine_leaves_original_unchanged():
    base = HierarchicalNet(healthcare_root())
    refine(base, ["HS"], web_services_subnet())
    assert base.refinements == ()


def test_refine_twice_rejected():
    with pytest.raises(AlreadyRefined):
        refine(healthcare_process(), ["HS"], web_services_subnet())


def test_refine_unknown_transition():
    with pytest.raises(UnknownTransition):
        refine(HierarchicalNet(healthcare_root()), ["Nope"], web_services_subnet())


def test_refine_cycle_rejected():
    root = one_transition_root()
    h = HierarchicalNet(root)
    with pytest.raises(CyclicRefinement):
        refine(h, ["t"], root)
    inner = refine(HierarchicalNet(two_step_chain()), ["u1"], root)
    with pytest.raises(CyclicRefinement):
        refine(h, ["t"], inner)


def test_refine_requires_single_port_transition():
    root = healthcare_root()
    with pytest.raises(StructuralError):
        refine(HierarchicalNet(root), ["Dispatch"], two_step_chain())


def test_flatten_without_refinements_is_identity():
    root = healthcare_root()
    assert flatten(HierarchicalNet(root)) == root


def test_flatten_three_node_example():
    root = one_transition_root()
    flat = flatten(refine(HierarchicalNet(root), ["t"], two_step_chain()))
    assert flat.transitions == {"t/u1", "t/u2"}
    assert flat.places == {"p0", "p1", "t/b"}
    assert len(flat.places) == len(root.places) + 1
    assert fire_sequence(flat, Marking({"p0": 1}), ["t/u1", "t/u2"]) == Marking({"p1": 1})


def test_flatten_preserves_ports():
    h = healthcare_process()
    flat = flatten(h)
    assert (flat.p_in, flat.p_out) == (h.root.p_in, h.root.p_out)
    assert "HS" not in flat.transitions
    assert "HS/CoronaryDiagWS" in flat.transitions


def test_nested_refinement_flattens_recursively():
    inner = refine(HierarchicalNet(two_step_chain()), ["u2"], build_net(
        ["x", "y", "z"], ["v1", "v2"], [("x", "v1"), ("v1", "y"), ("y", "v2"), ("v2", "z")],
        p_in="x", p_out="z"))
    h = refine(HierarchicalNet(one_transition_root()), ["t"], inner)
    flat = flatten(h)
    assert flat.transitions == {"t/u1", "t/u2/v1", "t/u2/v2"}
    seq = ["t/u1", "t/u2/v1", "t/u2/v2"]
    m0 = Marking({"p0": 1})
    assert execute_hierarchical(h, m0, seq) == fire_sequence(flat, m0, seq) == Marking({"p1": 1})


def test_execute_empty_sequence():
    m = Marking({"start": 1})
    assert execute_hierarchical(healthcare_process(), m, []) == m


def test_execute_unrefined_root_transition_matches_fire():
    root = healthcare_root()
    m = Marking({"hs.done": 1})
    assert execute_hierarchical(healthcare_process(), m, ["Dispatch"]) == fire(root, m, "Dispatch")


def test_execute_refined_transition_is_unknown():
    with pytest.raises(UnknownTransition):
        execute_hierarchical(healthcare_process(), Marking({"start": 1}), ["HS"])


def test_execute_not_enabled_reports_step():
    with pytest.raises(NotEnabled) as exc:
        execute_hierarchical(healthcare_process(), Marking({"start": 1}), ["HS/Acquire", "HS/Fuse"])
    assert exc.value.step == 1


def test_healthcare_p_out_reachability_agrees():
    h = healthcare_process()
    flat = flatten(h)
    m0 = Marking({"start": 1})
    flat_verdict = any(m.count("end") for m in reachable(flat, m0).markings)
    assert flat_verdict is True
    assert gen.hier_reaches_out(h, m0, flat.sorted_transitions()) is flat_verdict


def test_healthcare_full_run_ends_with_one_token_in_p_out():
    h = healthcare_process()
    flat = flatten(h)
    m, seq = Marking({"start": 1}), []
    while not m.count("end"):
        t = next(t for t in flat.sorted_transitions() if fire_ok(flat, m, t))
        seq.append(t)
        m = fire(flat, m, t)
    final = execute_hierarchical(h, Marking({"start": 1}), seq)
    assert final == m == Marking({"end": 1})


def fire_ok(net, m, t):
    try:
        fire(net, m, t)
        return True
    except NotEnabled:
        return False


@given(seed=seeds)
@settings(max_examples=50, deadline=None)
def test_flattening_equivalence(seed):
    rng = random.Random(seed)
    h, m = gen.hierarchical_case(rng)
    flat = flatten(h)
    seq = gen.admissible_sequence(flat, m, rng)
    mh = mf = m
    for t in seq:
        mh = execute_hierarchical(h, mh, [t])
        mf = fire(flat, mf, t)
        assert mh == mf


@given(seed=seeds)
@settings(max_examples=50, deadline=None)
def test_flatten_output_is_valid_net(seed):
    h, _ = gen.hierarchical_case(random.Random(seed))
    flat = flatten(h)
    # net_from_dict re-runs full structural validation
    assert net_from_dict(net_to_dict(flat)) == flat
    assert (flat.p_in, flat.p_out) == (h.root.p_in, h.root.p_out)


def test_hnet_json_round_trip():
    h = healthcare_process()
    assert hnet_from_dict(json.loads(json.dumps(hnet_to_dict(h)))) == h


def test_separator_forbidden_in_ids():
    with pytest.raises(StructuralError):
        HierarchicalNet(build_net(["a/b", "c"], ["t"], [("a/b", "t"), ("t", "c")], p_in="a/b", p_out="c"))

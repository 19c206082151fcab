import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import bfs_signature_text
from tplhound.corpus import flatten_packages, random_cfg, rename_identifiers, synth_corpus
from tplhound.decouple import make_candidate
from tplhound.model import Cfg
from tplhound.signature import (
    CfgSignature,
    EmptyProfile,
    LibraryProfile,
    bfs_order,
    library_profile,
    looks_obfuscated,
    method_signature,
    profile_candidate,
    sort_signatures,
)


@pytest.mark.parametrize("cfg, text", [
    (Cfg(1, ()), "1:"),
    (Cfg(3, ((0, 1), (1, 2))), "3:0->(1);1->(2)"),
    (Cfg(4, ((0, 1), (0, 2), (1, 3), (2, 3))), "4:0->(1,2);1->(3);2->(3)"),
])
def test_signature_examples(cfg, text):
    sig = method_signature(cfg)
    assert sig.text == text
    assert bfs_signature_text(cfg.node_count, cfg.edges) == text


def test_single_node_fields():
    sig = method_signature(Cfg(1, ()))
    assert (sig.node_count, sig.adjacency) == (1, "")


def test_renumbering_is_by_bfs():
    # original numbering visits 3 before 1; serials follow traversal
    cfg = Cfg(4, ((0, 3), (3, 1), (1, 2)))
    assert bfs_order(cfg) == [0, 3, 1, 2]
    assert method_signature(cfg).text == "4:0->(1);1->(2);2->(3)"


def test_unreachable_nodes_come_last():
    cfg = Cfg(4, ((0, 2), (1, 3)))
    assert bfs_order(cfg) == [0, 2, 1, 3]
    assert method_signature(cfg).text == "4:0->(1);2->(3)"


def test_location_is_not_identity():
    a = method_signature(Cfg(2, ((0, 1),)), "com.a")
    b = method_signature(Cfg(2, ((0, 1),)), "x.y")
    assert a == b and hash(a) == hash(b)
    assert len({a, b}) == 1


def test_profile_is_a_sorted_set():
    same = [method_signature(Cfg(2, ((0, 1),)), loc) for loc in ("p", "q", "r")]
    other = method_signature(Cfg(5, ()))
    prof = LibraryProfile.build(same + [other])
    assert len(prof) == 2
    assert prof.signatures[0] == other
    assert prof.signatures[1].location == "p"
    assert prof.is_canonical()


def test_parse_rejects_garbage():
    for bad in ["", "x:", "3:0->()", "2:0->(5)", "3:0->(1);"]:
        with pytest.raises(ValueError):
            CfgSignature.parse(bad)


def test_looks_obfuscated():
    assert looks_obfuscated("a.b")
    assert looks_obfuscated("com.a")
    assert looks_obfuscated("")
    assert not looks_obfuscated("com.google.ads")


def test_candidate_without_methods(emomedia):
    from tplhound.model import AppModel, ClassInfo

    m = AppModel("t", "x", (ClassInfo("lib.Const"),))
    with pytest.raises(EmptyProfile):
        profile_candidate(make_candidate("t", ["lib.Const"]), m)


def test_library_profile_names(small_corpus):
    from tplhound.corpus import library_bundle

    spec = small_corpus.catalog[0]
    prof = library_profile(library_bundle(spec), version=spec.version)
    assert prof.name == spec.name and prof.version == spec.version
    assert prof.is_canonical()


cfgs = st.integers(1, 12).flatmap(
    lambda n: st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n)
    .map(lambda edges: Cfg(n, tuple(edges)))
)


@settings(max_examples=300, deadline=None)
@given(cfgs)
def test_matches_list_scan_oracle(cfg):
    sig = method_signature(cfg)
    assert sig.text == bfs_signature_text(cfg.node_count, cfg.edges)
    assert CfgSignature.parse(sig.text) == sig
    assert method_signature(cfg) == sig


@settings(max_examples=100, deadline=None)
@given(st.lists(cfgs, max_size=20), st.randoms(use_true_random=False))
def test_sorted_descending_and_order_free(cfg_list, rnd):
    sigs = [method_signature(c) for c in cfg_list]
    shuffled = list(sigs)
    rnd.shuffle(shuffled)
    a, b = sort_signatures(sigs), sort_signatures(shuffled)
    assert a == b
    assert [s.key for s in a] == sorted({s.key for s in sigs}, reverse=True)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_random_cfg_is_bounded(seed):
    cfg = random_cfg(random.Random(seed), 1 + seed % 20)
    assert cfg.node_count == 1 + seed % 20
    reached, stack = {0}, [0]
    while stack:
        node = stack.pop()
        for a, b in cfg.edges:
            if a == node and b not in reached:
                reached.add(b)
                stack.append(b)
    assert reached == set(range(cfg.node_count))
    assert all(0 <= a < cfg.node_count and 0 <= b < cfg.node_count for a, b in cfg.edges)


def _all_signatures(model):
    return sorted(method_signature(m.cfg) for c in model.classes for m in c.methods)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_invariant_under_rename_and_flatten(seed):
    m = synth_corpus(n_apps=1, n_libs=3, seed=seed).apps[0]
    base = _all_signatures(m)
    assert _all_signatures(rename_identifiers(m, seed)) == base
    assert _all_signatures(flatten_packages(m, "collapse_root", seed)) == base
    assert _all_signatures(flatten_packages(m, "shuffle", seed)) == base


def test_descending_by_node_count():
    sigs = [method_signature(Cfg(n, tuple((i, i + 1) for i in range(n - 1)))) for n in (5, 3, 9)]
    assert [s.node_count for s in LibraryProfile.build(sigs).signatures] == [9, 5, 3]


def test_profile_serialization_is_deterministic(emomedia):
    from tplhound.matcher import db_to_dict, seed_database

    def dump():
        lib = [c.fqname for c in emomedia.classes if c.fqname.startswith(("com.google", "admob"))]
        prof = profile_candidate(make_candidate(emomedia.app_id, lib), emomedia)
        return db_to_dict(seed_database([prof]))

    assert dump() == dump()

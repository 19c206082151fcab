import json

import pytest
from hypothesis import given, settings, strategies as st

from tplhound.corpus import (
    HostSpec,
    LibSpec,
    Scenarios,
    SpecError,
    SynthSpec,
    compose_app,
    flatten_packages,
    load_corpus,
    randomize_control_flow,
    read_oracle,
    remap_truth,
    remove_dead_code,
    rename_identifiers,
    seed_profile,
    splice_diamond,
    synth_catalog,
    synth_corpus,
    write_corpus,
)
from tplhound.decouple import build_ctg, primary_packages
from tplhound.matcher import Matched, detect, seed_database
from tplhound.model import Cfg, dumps_app_bundle, is_under, validate
from tplhound.signature import method_signature

import random


def _spec(libs, seed=1, **scen):
    return SynthSpec(seed, HostSpec("org.hostapp"), tuple(libs), Scenarios(**scen), app_id="t")


def test_compose_two_libs():
    libs = synth_catalog(2, seed=5)
    model, truth, profiles = compose_app(_spec(libs))
    assert validate(model) == []
    assert [t.name for t in truth["t"]] == [lib.name for lib in libs]
    assert len(profiles) == 2
    owned = {c for t in truth["t"] for c in t.classes}
    host = [c.fqname for c in model.classes if c.fqname not in owned]
    assert all(is_under(c, "org.hostapp") for c in host)


def test_shared_root():
    libs = synth_catalog(3, seed=2)
    model, truth, _ = compose_app(_spec(libs, shared_root=True))
    tops = {c.split(".")[0] for t in truth["t"] for c in t.classes}
    assert tops == {libs[0].package.split(".")[0]}
    results, _ = detect(model, seed_database(seed_profile(lib) for lib in libs))
    assert {r.library_name for r in results if isinstance(r.verdict, Matched)} == {lib.name for lib in libs}


def test_partial_import():
    lib = LibSpec("com.alpha", "com.alpha", class_count=6, seed=4)
    _, full, _ = compose_app(_spec([lib]))
    _, part, _ = compose_app(_spec([lib], partial_import_fraction=0.5))
    assert len(part["t"][0].classes) < len(full["t"][0].classes)


def test_spec_errors():
    with pytest.raises(SpecError):
        LibSpec("x.y", "x.y", cfg_size=(0, 4))
    with pytest.raises(SpecError):
        LibSpec("x.y", "x.y", cfg_size=(2, 999))
    with pytest.raises(SpecError):
        HostSpec("a.b", class_count=2, activities=2, services=1)
    lib = LibSpec("a.lib", "a.lib", seed=3)
    with pytest.raises(SpecError):
        compose_app(_spec([lib, lib]))
    with pytest.raises(SpecError):
        compose_app(SynthSpec(1, HostSpec("a.lib.host"), (LibSpec("a.lib", "a.lib", seed=9),)))
    with pytest.raises(SpecError):
        compose_app(_spec([LibSpec("t.iny", "t.iny", class_count=8, cfg_size=(1, 1))]))


def test_spec_dict_round_trip():
    spec = _spec(synth_catalog(2, seed=1), lib_dependency=True)
    assert SynthSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_generation_is_deterministic(tmp_path):
    a = synth_corpus(n_apps=4, n_libs=6, seed=11)
    b = synth_corpus(n_apps=4, n_libs=6, seed=11)
    assert [dumps_app_bundle(m) for m in a.apps] == [dumps_app_bundle(m) for m in b.apps]
    write_corpus(tmp_path / "a", a.apps, a.truth)
    write_corpus(tmp_path / "b", b.apps, b.truth)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    c = synth_corpus(n_apps=4, n_libs=6, seed=12)
    assert [dumps_app_bundle(m) for m in a.apps] != [dumps_app_bundle(m) for m in c.apps]


def test_catalog_signatures_disjoint(corpus):
    seen = set()
    for p in corpus.seed_profiles():
        assert seen.isdisjoint(p.signatures)
        seen |= set(p.signatures)


def test_every_library_used(corpus):
    used = {t.name for libs in corpus.truth.values() for t in libs}
    assert used == {lib.name for lib in corpus.catalog}


def test_corpus_dir_round_trip(tmp_path, small_corpus):
    write_corpus(tmp_path, small_corpus.apps, small_corpus.truth)
    apps, truth = load_corpus(tmp_path)
    assert apps == small_corpus.apps
    assert truth == small_corpus.truth


def _hundred_method_app():
    lib = LibSpec("com.bulk", "com.bulk", class_count=24, methods_per_class=(4, 4), seed=21)
    model, truth, [ref] = compose_app(_spec([lib]))
    assert len(ref) == 100
    return model, truth, ref


@pytest.mark.parametrize("fraction, sim, verdict", [(0.1, 0.9, "Matched"), (0.3, 0.7, "NewLibrary")])
def test_dead_code_examples(fraction, sim, verdict):
    model, truth, ref = _hundred_method_app()
    out, [row] = remove_dead_code(model, truth, fraction, seed=0)
    assert row.reference_size == 100
    assert row.similarity == pytest.approx(sim)
    assert row.predicted == verdict
    results, _ = detect(out, seed_database([ref]))
    assert type(results[0].verdict).__name__ == verdict


def test_dead_code_keeps_host_pinned_methods(small_corpus):
    for m in small_corpus.apps:
        owned = {c for t in small_corpus.truth[m.app_id] for c in t.classes}
        pins = {}
        for c in m.classes:
            if c.fqname not in owned:
                for target, n in c.call_refs:
                    if target in owned:
                        pins[target] = max(pins.get(target, 0), n)
        out, _ = remove_dead_code(m, small_corpus.truth, 0.5, seed=3)
        before, after = m.class_map(), out.class_map()
        for name, n in pins.items():
            assert after[name].methods[:n] == before[name].methods[:n]
        host = [c for c in m.classes if c.fqname not in owned]
        assert all(after[c.fqname] == c for c in host)


def test_dead_code_fraction_range(small_corpus):
    with pytest.raises(ValueError):
        remove_dead_code(small_corpus.apps[0], small_corpus.truth, 1.0)


def test_diamond_adds_two_nodes_three_edges():
    rng = random.Random(0)
    cfg = Cfg(3, ((0, 1), (1, 2)))
    out = splice_diamond(cfg, rng)
    assert out.node_count == 5 and len(out.edges) == 5
    assert method_signature(out) != method_signature(cfg)
    single = splice_diamond(Cfg(1, ()), rng)
    assert single.node_count == 3 and len(single.edges) == 3


def test_cfo_changes_chosen_methods(small_corpus):
    m = small_corpus.apps[0]
    out, rows = randomize_control_flow(m, small_corpus.truth, 0.3, seed=1)
    before, after = m.class_map(), out.class_map()
    grown = sum(
        a.cfg.node_count - b.cfg.node_count
        for name in before for b, a in zip(before[name].methods, after[name].methods)
    )
    total = sum(len(after[c].methods) for t in small_corpus.truth[m.app_id] for c in t.classes)
    assert grown > 0 and grown % 2 == 0 and grown <= 2 * total
    assert len(rows) == len(small_corpus.truth[m.app_id])


def test_transforms_write_oracle(tmp_path, small_corpus):
    apps, rows = [], []
    for m in small_corpus.apps:
        out, r = remove_dead_code(m, small_corpus.truth, 0.2)
        apps.append(out)
        rows += r
    write_corpus(tmp_path, apps, small_corpus.truth, rows)
    assert read_oracle(tmp_path / "oracle.json") == rows


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_rename_is_bijective_and_cfg_preserving(seed):
    m = synth_corpus(n_apps=1, n_libs=3, seed=seed).apps[0]
    out = rename_identifiers(m, seed)
    assert validate(out) == []
    assert len({c.fqname for c in out.classes}) == len(m.classes)
    for b, a in zip(m.classes, out.classes):
        assert [x.cfg for x in a.methods] == [x.cfg for x in b.methods]
    # package tree shape is preserved
    assert len({c.package for c in out.classes}) == len({c.package for c in m.classes})
    assert len(out.transitions) == len(m.transitions)
    assert out.main_activity is not None


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["collapse_root", "shuffle"]))
def test_flatten_moves_only_non_primary(seed, mode):
    corpus = synth_corpus(n_apps=1, n_libs=3, seed=seed)
    m = corpus.apps[0]
    out = flatten_packages(m, mode, seed)
    assert validate(out) == []
    prefixes = primary_packages(build_ctg(m), m)
    for b, a in zip(m.classes, out.classes):
        if any(is_under(b.fqname, p) for p in prefixes):
            assert a.fqname == b.fqname
        assert [x.cfg for x in a.methods] == [x.cfg for x in b.methods]
    truth = remap_truth(corpus.truth, m, out)
    assert [len(t.classes) for t in truth[m.app_id]] == [len(t.classes) for t in corpus.truth[m.app_id]]


def test_single_class_lib():
    lib = LibSpec("com.solo", "com.solo", class_count=1, support_classes=0, seed=2)
    model, truth, [ref] = compose_app(_spec([lib]))
    assert validate(model) == []
    assert truth["t"][0].classes == ("com.solo.Client",)
    results, _ = detect(model, seed_database([ref]))
    assert [r.library_name for r in results] == ["com.solo"]


def test_fraction_zero_is_identity(small_corpus):
    m = small_corpus.apps[1]
    assert remove_dead_code(m, small_corpus.truth, 0.0)[0] == m
    assert randomize_control_flow(m, small_corpus.truth, 0.0)[0] == m


def test_collapse_root_gives_one_segment_packages(small_corpus):
    m = small_corpus.apps[2]
    prefixes = primary_packages(build_ctg(m), m)
    out = flatten_packages(m, "collapse_root")
    moved = [c for c in out.classes if not any(is_under(c.fqname, p) for p in prefixes)]
    assert moved and all("." not in c.package for c in moved)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 100), st.integers(0, 100))
def test_double_rename_keeps_signatures(seed, s1, s2):
    m = synth_corpus(n_apps=1, n_libs=2, seed=seed).apps[0]
    twice = rename_identifiers(rename_identifiers(m, s1), s2)
    sigs = lambda model: sorted(method_signature(x.cfg) for c in model.classes for x in c.methods)
    assert sigs(twice) == sigs(m)

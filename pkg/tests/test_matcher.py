import json
import math
import pytest
from hypothesis import given, settings, strategies as st

from oracles import jaccard_by_enumeration, linear_contains
from tplhound.matcher import (
    AssignedName,
    DatabaseError,
    DetectConfig,
    LibraryDatabase,
    Matched,
    NewLibrary,
    StaleMatch,
    add_profile,
    audit,
    db_to_dict,
    detect,
    find_signature,
    ingest,
    jaccard,
    load_db,
    match_candidate,
    save_db,
    search_descending,
    seed_database,
)
from tplhound.model import Cfg
from tplhound.signature import LibraryProfile, method_signature, profile_classes


def chain(n):
    """Signature of a straight-line CFG with n nodes; distinct per n."""
    return method_signature(Cfg(n, tuple((i, i + 1) for i in range(n - 1))))


def prof(sizes, **kw):
    return LibraryProfile.build([chain(n) for n in sizes], **kw)


def test_jaccard_example():
    a, b = prof([1, 2, 3, 4]), prof([2, 3, 4, 5])
    assert jaccard(a, b) == pytest.approx(0.6)


def test_jaccard_disjoint_and_identical():
    assert jaccard(prof([1, 2]), prof([3])) == 0.0
    assert jaccard(prof([1, 2]), prof([1, 2])) == 1.0


def test_search_bounds_and_empty():
    keys = prof(range(1, 101)).keys
    for k in keys:
        found, comps = search_descending(keys, k)
        assert found and comps <= math.floor(math.log2(100)) + 1
    assert search_descending([], (1, "")) == (False, 0)


def test_find_signature():
    p = prof([3, 5, 7])
    assert find_signature(p, chain(5))
    assert not find_signature(p, chain(4))


def test_empty_db_gives_new_library():
    db = LibraryDatabase()
    r = match_candidate(prof([1, 2]), db)
    assert r.verdict == NewLibrary(0)
    assert r.revision == 0
    db2 = ingest(db, prof([1, 2]), r)
    assert db2.revision == 1 and len(db2) == 1 and len(db) == 0


def test_match_at_alpha():
    db = seed_database([prof(range(1, 11), name="lib.x")])
    r = match_candidate(prof(range(1, 9)), db)  # 8/10
    assert r.verdict == Matched(0, pytest.approx(0.8))
    assert r.library_name == "lib.x"
    r = match_candidate(prof(range(1, 8)), db)  # 7/10
    assert isinstance(r.verdict, NewLibrary)
    assert r.best_similarity == pytest.approx(0.7)


def test_tie_goes_to_lowest_entry():
    db = LibraryDatabase(alpha=0.5)
    for p in (prof([1, 2, 3]), prof([1, 2, 4])):
        db = ingest(db, p, NewLibraryResult(db))
    r = match_candidate(prof([1, 2]), db)
    assert r.verdict.entry_id == 0


def NewLibraryResult(db):
    from tplhound.matcher import MatchResult

    return MatchResult("", NewLibrary(db.next_id), revision=db.revision)


def test_stale_match():
    db = LibraryDatabase()
    r = match_candidate(prof([1]), db)
    _, db1 = add_profile(db, prof([9]))
    with pytest.raises(StaleMatch):
        ingest(db1, prof([1]), r)


def test_deferred_naming():
    db = seed_database([prof(range(1, 11))])
    assert db.entries[0].name is None
    named = prof(range(1, 11), name="com.squareup.okio", root_guess="com.squareup.okio")
    r = match_candidate(named, db)
    assert r.name_action == AssignedName(0, "com.squareup.okio")
    db2 = ingest(db, named, r)
    assert db2.entries[0].name == "com.squareup.okio"
    assert db2.revision == db.revision + 1
    # a later differently named match leaves the name alone
    r2 = match_candidate(prof(range(1, 11), name="other.lib"), db2)
    assert r2.name_action is None and r2.name_conflict == "other.lib"
    assert ingest(db2, prof(range(1, 11)), r2) is db2


def test_audit_flags_near_duplicates():
    db = LibraryDatabase(entries=())
    db = ingest(db, prof(range(1, 11)), NewLibraryResult(db))
    db = ingest(db, prof(range(1, 10)), NewLibraryResult(db))
    assert [(a, b) for a, b, _ in audit(db)] == [(0, 1)]
    assert audit(seed_database([prof(range(1, 11)), prof(range(1, 10))])) == []


def test_db_round_trip(tmp_path):
    db = seed_database([prof([1, 2], name="a.b", version="1.0"), prof([7, 8])])
    path = tmp_path / "db.json"
    save_db(db, path)
    again = load_db(path)
    assert db_to_dict(again) == db_to_dict(db)
    assert again.revision == 2


@pytest.mark.parametrize("mutate", [
    lambda d: d["entries"][0]["signatures"].reverse(),
    lambda d: d["entries"][1].update(entry_id=0),
    lambda d: d["entries"][0]["signatures"].append("zz"),
    lambda d: d.pop("alpha"),
])
def test_db_rejects_bad_files(tmp_path, mutate):
    doc = db_to_dict(seed_database([prof([1, 2, 3]), prof([7, 8])]))
    mutate(doc)
    path = tmp_path / "db.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(DatabaseError):
        load_db(path)


def test_alpha_range():
    with pytest.raises(ValueError):
        LibraryDatabase(alpha=0)


def _emomedia_lib_profile(model, truth):
    lib = truth[model.app_id][0]
    return LibraryProfile.build(profile_classes(model, lib.classes), name=lib.name,
                                root_guess="com.google.ads")


def test_detect_emomedia(emomedia, emomedia_truth):
    db = seed_database([_emomedia_lib_profile(emomedia, emomedia_truth)])
    results, after = detect(emomedia, db)
    assert len(results) == 1
    assert isinstance(results[0].verdict, Matched)
    assert results[0].library_name == "com.google.ads"
    assert after is db


def test_detect_empty_db_then_again(emomedia):
    results, db = detect(emomedia, LibraryDatabase())
    assert [type(r.verdict) for r in results] == [NewLibrary]
    again, db2 = detect(emomedia, db)
    assert isinstance(again[0].verdict, Matched) and again[0].verdict.similarity == 1.0
    assert db2 == db


def test_detect_without_augment_leaves_db(emomedia):
    results, db = detect(emomedia, LibraryDatabase(), DetectConfig(augment=False))
    assert len(db) == 0 and results[0].is_new


def test_detect_host_only_app_has_no_candidates():
    from tplhound.model import AppModel, ClassInfo, ComponentDecl, ComponentKind

    m = AppModel("h", "org.h", (ClassInfo("org.h.Main"),),
                 (ComponentDecl(ComponentKind.ACTIVITY, "org.h.Main", True),))
    results, db = detect(m, LibraryDatabase())
    assert results == [] and len(db) == 0


def test_detect_clean_small_corpus(small_corpus, small_db):
    for app in small_corpus.apps:
        results, _ = detect(app, small_db)
        got = {r.library_name for r in results if isinstance(r.verdict, Matched)}
        assert got == {t.name for t in small_corpus.truth[app.app_id]}


keysets = st.sets(st.integers(1, 300), max_size=200)


@settings(max_examples=200, deadline=None)
@given(keysets, keysets)
def test_jaccard_against_enumeration(xs, ys):
    a, b = prof(xs), prof(ys)
    want = jaccard_by_enumeration(a.signatures, b.signatures)
    assert jaccard(a, b) == pytest.approx(want, abs=1e-12)
    assert jaccard(a, b) == jaccard(b, a)


@settings(max_examples=200, deadline=None)
@given(st.sets(st.integers(1, 400), min_size=1, max_size=300), st.integers(1, 400))
def test_search_matches_linear_scan(xs, probe):
    p = prof(xs)
    found, comps = search_descending(p.keys, chain(probe).key)
    assert found == linear_contains(p.signatures, chain(probe))
    assert comps <= math.floor(math.log2(len(p))) + 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sets(st.integers(1, 30), min_size=1, max_size=15), min_size=1, max_size=8),
       st.sets(st.integers(1, 30), min_size=1, max_size=15))
def test_argmax_is_stable(entries, probe):
    db = LibraryDatabase(alpha=1.0)
    for xs in entries:
        db = ingest(db, prof(xs), NewLibraryResult(db))
    p = prof(probe)
    sims = [jaccard(p, e.profile) for e in db.entries]
    r = match_candidate(p, db)
    best = max(sims)
    assert r.best_similarity == best
    if best >= db.alpha:
        assert r.verdict.entry_id == sims.index(best)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sets(st.integers(1, 40), min_size=1, max_size=20), max_size=10))
def test_seeding_keeps_audit_clean(profiles):
    db = seed_database(prof(xs) for xs in profiles)
    assert audit(db) == []
    assert all(e.profile.is_canonical() for e in db.entries)


@settings(max_examples=50, deadline=None)
@given(st.sets(st.integers(1, 40), min_size=1, max_size=20),
       st.lists(st.sets(st.integers(41, 80), min_size=1, max_size=20), max_size=5))
def test_weaker_entries_never_change_the_match(probe, extra):
    p = prof(probe)
    db = seed_database([prof(probe)])
    before = match_candidate(p, db).verdict
    for xs in extra:
        db = ingest(db, prof(xs), NewLibraryResult(db))
    assert match_candidate(p, db).verdict == before


def test_single_element_profile_search():
    p = prof([4])
    assert find_signature(p, chain(4)) and not find_signature(p, chain(5))

"""Library identification against a self-augmenting signature database.

Matching is split in two phases: :func:`match_candidate` is read-only and
stamps its result with the database revision it saw; :func:`ingest` applies
the result and refuses results computed against an older revision. A
database value is never mutated in place, so any number of readers may
share one snapshot while a single writer produces the next.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .decouple import DecoupleConfig, candidate_order, decouple
from .model import AppModel
from .signature import CfgSignature, EmptyProfile, LibraryProfile, profile_candidate

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.8


class StaleMatch(Exception):
    """The database changed between match_candidate and ingest."""


class DatabaseError(ValueError):
    pass


# -- search -----------------------------------------------------------------


def search_descending(keys, key) -> tuple[bool, int]:
    """Binary search in a strictly descending sequence.

    Returns (found, number of three-way key comparisons), the latter
    bounded by floor(log2 n) + 1.
    """
    lo, hi = 0, len(keys)
    comparisons = 0
    while lo < hi:
        mid = (lo + hi) // 2
        probe = keys[mid]
        comparisons += 1
        if probe == key:
            return True, comparisons
        if probe > key:
            lo = mid + 1
        else:
            hi = mid
    return False, comparisons


def find_signature(profile: LibraryProfile, sig: CfgSignature) -> bool:
    return search_descending(profile.keys, sig.key)[0]


def jaccard(a: LibraryProfile, b: LibraryProfile) -> float:
    """|A & B| / |A | B| over signature sets, probing the larger profile by binary search."""
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    keys = large.keys
    inter = sum(search_descending(keys, s.key)[0] for s in small.signatures)
    union = len(a) + len(b) - inter
    return inter / union if union else 0.0


# -- database ---------------------------------------------------------------


@dataclass(frozen=True)
class DbEntry:
    entry_id: int
    profile: LibraryProfile

    @property
    def name(self) -> str | None:
        return self.profile.name


@dataclass(frozen=True)
class LibraryDatabase:
    alpha: float = DEFAULT_ALPHA
    revision: int = 0
    entries: tuple[DbEntry, ...] = ()

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def next_id(self) -> int:
        return max((e.entry_id for e in self.entries), default=-1) + 1

    def entry(self, entry_id: int) -> DbEntry:
        for e in self.entries:
            if e.entry_id == entry_id:
                return e
        raise KeyError(entry_id)


@dataclass(frozen=True)
class Matched:
    entry_id: int
    similarity: float


@dataclass(frozen=True)
class NewLibrary:
    entry_id: int


@dataclass(frozen=True)
class AssignedName:
    entry_id: int
    name: str


@dataclass(frozen=True)
class MatchResult:
    candidate_root: str
    verdict: Matched | NewLibrary
    name_action: AssignedName | None = None
    revision: int = 0
    # name the detection reports: the db entry's name, else the candidate's
    library_name: str | None = None
    version: str | None = None
    best_similarity: float = 0.0
    # set when a named candidate matched an entry carrying another name
    name_conflict: str | None = None
    classes: frozenset[str] = field(default_factory=frozenset, compare=False)

    @property
    def is_new(self) -> bool:
        return isinstance(self.verdict, NewLibrary)

    def describe(self) -> str:
        v = self.verdict
        root = self.candidate_root or "<no common package>"
        name = self.library_name or "<unnamed>"
        if isinstance(v, Matched):
            text = f"Matched\t{root}\tentry={v.entry_id}\tsim={v.similarity:.4f}\t{name}"
        else:
            text = f"NewLibrary\t{root}\tentry={v.entry_id}\tbest={self.best_similarity:.4f}\t{name}"
        if self.version:
            text += f"\t{self.version}"
        return text


def match_candidate(profile: LibraryProfile, db: LibraryDatabase) -> MatchResult:
    """Best Jaccard match in ``db``; ties go to the oldest entry. Read-only."""
    best, best_entry = -1.0, None
    for entry in sorted(db.entries, key=lambda e: e.entry_id):
        n, m = len(profile), len(entry.profile)
        if min(n, m) / max(n, m) < best:
            continue  # cannot beat the current best
        sim = jaccard(profile, entry.profile)
        if sim > best:
            best, best_entry = sim, entry
    best = max(best, 0.0)

    if best_entry is not None and best >= db.alpha:
        action = conflict = None
        if best_entry.name is None and profile.name:
            action = AssignedName(best_entry.entry_id, profile.name)
        elif best_entry.name and profile.name and best_entry.name != profile.name:
            conflict = profile.name
        return MatchResult(
            candidate_root=profile.root_guess,
            verdict=Matched(best_entry.entry_id, best),
            name_action=action,
            revision=db.revision,
            library_name=best_entry.name or profile.name,
            version=best_entry.profile.version,
            best_similarity=best,
            name_conflict=conflict,
        )
    return MatchResult(
        candidate_root=profile.root_guess,
        verdict=NewLibrary(db.next_id),
        revision=db.revision,
        library_name=profile.name,
        version=profile.version,
        best_similarity=best,
    )


def ingest(db: LibraryDatabase, profile: LibraryProfile, result: MatchResult) -> LibraryDatabase:
    if result.revision != db.revision:
        raise StaleMatch(f"matched at revision {result.revision}, db is at {db.revision}")
    verdict = result.verdict
    if isinstance(verdict, NewLibrary):
        entry = DbEntry(verdict.entry_id, profile)
        return replace(db, entries=db.entries + (entry,), revision=db.revision + 1)
    if result.name_action is not None:
        target = result.name_action.entry_id
        entries = tuple(
            replace(e, profile=replace(e.profile, name=result.name_action.name))
            if e.entry_id == target else e
            for e in db.entries
        )
        return replace(db, entries=entries, revision=db.revision + 1)
    return db


def add_profile(db: LibraryDatabase, profile: LibraryProfile) -> tuple[MatchResult, LibraryDatabase]:
    result = match_candidate(profile, db)
    return result, ingest(db, profile, result)


def audit(db: LibraryDatabase) -> list[tuple[int, int, float]]:
    """Entry pairs whose similarity reaches alpha (should be empty)."""
    out = []
    entries = db.entries
    for i, a in enumerate(entries):
        for b in entries[i + 1:]:
            sim = jaccard(a.profile, b.profile)
            if sim >= db.alpha:
                out.append((a.entry_id, b.entry_id, sim))
    return out


@dataclass(frozen=True)
class DetectConfig:
    decouple: DecoupleConfig = field(default_factory=DecoupleConfig)
    augment: bool = True


def detect(model: AppModel, db: LibraryDatabase,
           config: DetectConfig | None = None) -> tuple[list[MatchResult], LibraryDatabase]:
    """Run the whole pipeline on one app.

    Candidates are handled in (root_guess, smallest class) order; each is
    matched against the db as updated by the previous ones when
    ``config.augment`` is set, otherwise against the untouched db.
    """
    config = config or DetectConfig()
    results = []
    for cand in sorted(decouple(model, config.decouple), key=candidate_order):
        try:
            profile = profile_candidate(cand, model)
        except EmptyProfile as exc:
            log.info("skipping candidate: %s", exc)
            continue
        result = replace(match_candidate(profile, db), classes=cand.classes)
        if config.augment:
            db = ingest(db, profile, result)
        results.append(result)
    return results, db


# -- persistence ------------------------------------------------------------


def db_to_dict(db: LibraryDatabase) -> dict:
    entries = []
    for e in db.entries:
        raw: dict = {"entry_id": e.entry_id}
        if e.profile.name is not None:
            raw["name"] = e.profile.name
        if e.profile.version is not None:
            raw["version"] = e.profile.version
        raw["root_guess"] = e.profile.root_guess
        raw["signatures"] = [s.text for s in e.profile.signatures]
        entries.append(raw)
    return {"alpha": db.alpha, "revision": db.revision, "entries": entries}


def db_from_dict(doc) -> LibraryDatabase:
    try:
        alpha = float(doc["alpha"])
        revision = int(doc["revision"])
        raw_entries = doc["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatabaseError(f"bad database header: {exc}") from None
    entries = []
    seen: set[int] = set()
    for i, raw in enumerate(raw_entries):
        try:
            entry_id = int(raw["entry_id"])
            sigs = tuple(CfgSignature.parse(t) for t in raw["signatures"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatabaseError(f"entries[{i}]: {exc}") from None
        if entry_id in seen:
            raise DatabaseError(f"entries[{i}]: duplicate entry_id {entry_id}")
        seen.add(entry_id)
        profile = LibraryProfile(sigs, name=raw.get("name"), version=raw.get("version"),
                                 root_guess=raw.get("root_guess", ""), source="db")
        if not sigs or not profile.is_canonical():
            raise DatabaseError(f"entries[{i}]: signatures not strictly descending")
        entries.append(DbEntry(entry_id, profile))
    return LibraryDatabase(alpha=alpha, revision=revision, entries=tuple(entries))


def save_db(db: LibraryDatabase, path: str | Path) -> None:
    Path(path).write_text(json.dumps(db_to_dict(db), indent=1) + "\n", encoding="utf-8")


def load_db(path: str | Path) -> LibraryDatabase:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatabaseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return db_from_dict(doc)


def seed_database(profiles: Iterable[LibraryProfile], alpha: float = DEFAULT_ALPHA,
                  db: LibraryDatabase | None = None) -> LibraryDatabase:
    db = db if db is not None else LibraryDatabase(alpha=alpha)
    for p in profiles:
        _, db = add_profile(db, p)
    return db

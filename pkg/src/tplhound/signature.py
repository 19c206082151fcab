"""CFG signatures and library profiles.

A method's CFG is renumbered by breadth-first traversal from the entry
node and rendered as ``node_count:parent->(child,...);...``. That string
is the identity of the method for matching purposes; nothing derived from
identifiers enters it.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable

from .decouple import LibraryCandidate
from .model import AppModel, Cfg, common_prefix, package_of

_SIG_RE = re.compile(r"^(\d+):((?:\d+->\(\d+(?:,\d+)*\))(?:;\d+->\(\d+(?:,\d+)*\))*)?$")


class EmptyProfile(Exception):
    """A candidate without any method cannot be fingerprinted."""


@total_ordering
@dataclass(frozen=True, eq=False)
class CfgSignature:
    node_count: int
    adjacency: str
    location: str = field(default="", compare=False)

    @property
    def key(self) -> tuple[int, str]:
        return (self.node_count, self.adjacency)

    @property
    def text(self) -> str:
        return f"{self.node_count}:{self.adjacency}"

    def __eq__(self, other):
        if not isinstance(other, CfgSignature):
            return NotImplemented
        return self.key == other.key

    def __lt__(self, other):
        if not isinstance(other, CfgSignature):
            return NotImplemented
        return self.key < other.key

    def __hash__(self):
        return hash(self.key)

    def __str__(self):
        return self.text

    @classmethod
    def parse(cls, text: str, location: str = "") -> "CfgSignature":
        m = _SIG_RE.match(text)
        if not m:
            raise ValueError(f"malformed signature {text!r}")
        node_count = int(m.group(1))
        adjacency = m.group(2) or ""
        for num in re.findall(r"\d+", adjacency):
            if int(num) >= node_count:
                raise ValueError(f"serial {num} out of range in {text!r}")
        return cls(node_count, adjacency, location)


def bfs_order(cfg: Cfg) -> list[int]:
    """Original node indices in serial-number order.

    Successors are visited in edge order; nodes unreachable from the entry
    follow in ascending original index.
    """
    succ = cfg.successors()
    seen = [False] * cfg.node_count
    order = []
    queue = deque([0])
    seen[0] = True
    while queue:
        node = queue.popleft()
        order.append(node)
        for nxt in succ[node]:
            if not seen[nxt]:
                seen[nxt] = True
                queue.append(nxt)
    order.extend(i for i in range(cfg.node_count) if not seen[i])
    return order


def method_signature(cfg: Cfg, location: str = "") -> CfgSignature:
    order = bfs_order(cfg)
    serial = {node: k for k, node in enumerate(order)}
    succ = cfg.successors()
    parts = []
    for node in order:
        if succ[node]:
            kids = ",".join(str(serial[c]) for c in succ[node])
            parts.append(f"{serial[node]}->({kids})")
    return CfgSignature(cfg.node_count, ";".join(parts), location)


def sort_signatures(sigs: Iterable[CfgSignature]) -> tuple[CfgSignature, ...]:
    """Deduplicate and sort descending; the first occurrence's location wins."""
    unique: dict[CfgSignature, CfgSignature] = {}
    for s in sigs:
        unique.setdefault(s, s)
    return tuple(sorted(unique.values(), key=lambda s: s.key, reverse=True))


def looks_obfuscated(path: str) -> bool:
    """Heuristic for renamed packages: any one-letter segment, or all segments <= 2 chars."""
    if not path:
        return True
    segs = path.split(".")
    return any(len(s) == 1 for s in segs) or all(len(s) <= 2 for s in segs)


@dataclass(frozen=True)
class LibraryProfile:
    signatures: tuple[CfgSignature, ...]
    name: str | None = None
    version: str | None = None
    root_guess: str = ""
    source: str = "seed"

    @classmethod
    def build(cls, sigs: Iterable[CfgSignature], **kw) -> "LibraryProfile":
        return cls(sort_signatures(sigs), **kw)

    def __len__(self) -> int:
        return len(self.signatures)

    @property
    def keys(self) -> list[tuple[int, str]]:
        return [s.key for s in self.signatures]

    def signature_set(self) -> frozenset[CfgSignature]:
        return frozenset(self.signatures)

    def is_canonical(self) -> bool:
        keys = self.keys
        return all(a > b for a, b in zip(keys, keys[1:]))


def profile_classes(model: AppModel, classes: Iterable[str]) -> list[CfgSignature]:
    cmap = model.class_map()
    return [
        method_signature(m.cfg, m.location)
        for name in sorted(classes)
        for m in cmap[name].methods
    ]


def profile_candidate(cand: LibraryCandidate, model: AppModel) -> LibraryProfile:
    sigs = profile_classes(model, cand.classes)
    if not sigs:
        raise EmptyProfile(f"{cand.source_app}: candidate {cand.root_guess or cand.first_class!r} has no methods")
    name = cand.root_guess if not looks_obfuscated(cand.root_guess) else None
    return LibraryProfile.build(sigs, name=name, root_guess=cand.root_guess, source=cand.source_app)


def library_profile(model: AppModel, name: str | None = None,
                    version: str | None = None) -> LibraryProfile:
    """Profile a whole library bundle (every class is one library)."""
    sigs = profile_classes(model, (c.fqname for c in model.classes))
    if not sigs:
        raise EmptyProfile(f"{model.app_id}: library bundle has no methods")
    root = common_prefix(package_of(c.fqname) for c in model.classes)
    return LibraryProfile.build(sigs, name=name or model.declared_package or root or None,
                                version=version, root_guess=root, source="seed")

"""Module decoupling.

Two steps: drop the host app's own code (found through the component
transition graph), then split what is left into library candidates by
clustering a weighted class dependency graph.
"""
from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from .model import AppModel, TransitionEdge, common_prefix, is_under, package_of

log = logging.getLogger(__name__)

DEFAULT_HAC_THRESHOLD = 0.15
LINKAGES = ("average", "single", "complete")

# Two distances closer than this are treated as a tie.
TIE_EPS = 1e-12


class EmptyResidue(Exception):
    """Nothing is left after stripping the host code (a library-free app)."""


@dataclass(frozen=True)
class DecoupleConfig:
    hac_threshold: float = DEFAULT_HAC_THRESHOLD
    linkage: str = "average"
    # "adaptive" or a fixed number of leading package segments
    primary_prefix_depth: str | int = "adaptive"

    def __post_init__(self):
        if not 0 < self.hac_threshold <= 1:
            raise ValueError(f"hac_threshold must be in (0, 1], got {self.hac_threshold}")
        if self.linkage not in LINKAGES:
            raise ValueError(f"linkage must be one of {LINKAGES}, got {self.linkage!r}")
        depth = self.primary_prefix_depth
        if depth != "adaptive" and not (isinstance(depth, int) and depth >= 1):
            raise ValueError(f"primary_prefix_depth must be 'adaptive' or >= 1, got {depth!r}")


# -- component transition graph ---------------------------------------------


@dataclass(frozen=True)
class Ctg:
    nodes: frozenset[str]
    edges: tuple[TransitionEdge, ...]

    def weak_component(self, start: str) -> set[str]:
        adj: dict[str, set[str]] = defaultdict(set)
        for e in self.edges:
            adj[e.src].add(e.dst)
            adj[e.dst].add(e.src)
        seen = {start}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for nxt in adj[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen


def build_ctg(model: AppModel) -> Ctg:
    # The bundle only ever records explicit transitions.
    nodes = {c.class_ref for c in model.components}
    for e in model.transitions:
        nodes.update((e.src, e.dst))
    return Ctg(frozenset(nodes), tuple(model.transitions))


def _main_directory(package: str, fallback: str, model: AppModel, depth: str | int) -> str:
    if not package:
        return fallback
    segs = package.split(".")
    if depth != "adaptive":
        return ".".join(segs[:depth])
    top = segs[0]
    if len(segs) < 2:
        return top
    two = ".".join(segs[:2])
    shares_top = any(
        is_under(c.fqname, top) and not is_under(c.fqname, two) for c in model.classes
    )
    return two if shares_top else top


def primary_packages(ctg: Ctg, model: AppModel, depth: str | int = "adaptive") -> set[str]:
    """Package prefixes holding the host app's own code.

    The host is the weak component of the main activity in the transition
    graph; each member's package is walked back to its top-level directory.
    With ``depth="adaptive"`` a second segment is kept when the top segment
    is shared with other code (so ``com.example`` is removed, not ``com``).
    Prefixes that cover no class are dropped.
    """
    main = model.main_activity
    if main is None:
        pkgs = [(model.declared_package, "")]
    else:
        pkgs = [(package_of(name), name) for name in sorted(ctg.weak_component(main.class_ref))]
    prefixes = {_main_directory(pkg, fallback, model, depth) for pkg, fallback in pkgs}
    return {
        p for p in prefixes
        if p and any(is_under(c.fqname, p) for c in model.classes)
    }


def strip_primary(model: AppModel, prefixes: Iterable[str]) -> AppModel:
    prefixes = tuple(prefixes)
    if not prefixes:
        return model
    keep = tuple(
        c for c in model.classes if not any(is_under(c.fqname, p) for p in prefixes)
    )
    if not keep:
        raise EmptyResidue(model.app_id)
    names = {c.fqname for c in keep}
    return replace(
        model,
        classes=keep,
        components=tuple(c for c in model.components if c.class_ref in names),
        transitions=tuple(t for t in model.transitions if t.src in names and t.dst in names),
    )


# -- package dependency graph -----------------------------------------------


class DependencyKind(Enum):
    HOMOGENEOUS = 5
    INHERITANCE = 4
    METHOD_CALL = 2
    FIELD_REF = 1

    @property
    def weight(self) -> int:
        return self.value


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


def homogeneous(pkg_a: str, pkg_b: str) -> bool:
    """Same package, parent/child packages, or sibling packages."""
    if not pkg_a or not pkg_b:
        return False
    a, b = pkg_a.split("."), pkg_b.split(".")
    if a == b:
        return True
    if len(a) + 1 == len(b) and b[:-1] == a or len(b) + 1 == len(a) and a[:-1] == b:
        return True
    return len(a) == len(b) >= 2 and a[:-1] == b[:-1]


@dataclass
class PackageDependencyGraph:
    app_id: str
    nodes: tuple[str, ...]
    # per unordered pair, accumulated weight split by relation kind
    contributions: dict[tuple[str, str], dict[DependencyKind, int]] = field(default_factory=dict)

    def weight(self, a: str, b: str) -> int:
        return sum(self.contributions.get(_pair(a, b), {}).values())

    def kind_weight(self, a: str, b: str, kind: DependencyKind) -> int:
        return self.contributions.get(_pair(a, b), {}).get(kind, 0)

    @property
    def edges(self) -> dict[tuple[str, str], int]:
        return {k: sum(v.values()) for k, v in self.contributions.items() if sum(v.values()) > 0}

    def _add(self, a: str, b: str, kind: DependencyKind, amount: int) -> None:
        slot = self.contributions.setdefault(_pair(a, b), {})
        slot[kind] = slot.get(kind, 0) + amount


def build_pdg(model: AppModel) -> PackageDependencyGraph:
    names = {c.fqname for c in model.classes}
    pdg = PackageDependencyGraph(model.app_id, tuple(sorted(names)))

    by_pkg: dict[str, list[str]] = defaultdict(list)
    for c in model.classes:
        by_pkg[c.package].append(c.fqname)
    pkgs = sorted(by_pkg)
    for i, p in enumerate(pkgs):
        for q in pkgs[i:]:
            if not homogeneous(p, q):
                continue
            for a in by_pkg[p]:
                for b in by_pkg[q]:
                    if a != b and (p != q or a < b):
                        pdg._add(a, b, DependencyKind.HOMOGENEOUS, DependencyKind.HOMOGENEOUS.weight)

    for c in model.classes:
        parents = ([c.superclass] if c.superclass else []) + list(c.interfaces)
        for target in parents:
            if target in names and target != c.fqname:
                pdg._add(c.fqname, target, DependencyKind.INHERITANCE, DependencyKind.INHERITANCE.weight)
        for target, count in c.call_refs:
            if target in names and target != c.fqname:
                pdg._add(c.fqname, target, DependencyKind.METHOD_CALL, DependencyKind.METHOD_CALL.weight * count)
        for target, count in c.field_refs:
            if target in names and target != c.fqname:
                pdg._add(c.fqname, target, DependencyKind.FIELD_REF, DependencyKind.FIELD_REF.weight * count)
    return pdg


# -- agglomerative clustering -----------------------------------------------


def weight_to_distance(w):
    return 1.0 / (1.0 + w)


@dataclass(frozen=True)
class LibraryCandidate:
    source_app: str
    classes: frozenset[str]
    root_guess: str

    @property
    def first_class(self) -> str:
        return min(self.classes)


def make_candidate(app_id: str, classes: Iterable[str]) -> LibraryCandidate:
    classes = frozenset(classes)
    return LibraryCandidate(app_id, classes, common_prefix(package_of(c) for c in classes))


def candidate_order(c: LibraryCandidate) -> tuple[str, str]:
    return (c.root_guess, c.first_class)


def distance_matrix(pdg: PackageDependencyGraph,
                    distance: Callable[[float], float] = weight_to_distance) -> np.ndarray:
    index = {name: i for i, name in enumerate(pdg.nodes)}
    n = len(pdg.nodes)
    dist = np.full((n, n), distance(0), dtype=float)
    for (a, b), w in pdg.edges.items():
        i, j = index[a], index[b]
        dist[i, j] = dist[j, i] = distance(w)
    np.fill_diagonal(dist, np.inf)
    return dist


def hac_merges(dist: np.ndarray, linkage: str = "average",
               stop_above: float = np.inf) -> list[tuple[int, int, float]]:
    """Agglomerate items 0..n-1 over a symmetric distance matrix.

    Returns the merge sequence as (kept, absorbed, height), where each
    cluster is named by its smallest item index. Ties within TIE_EPS go to
    the pair whose smaller cluster-minimum is least (then the larger one).
    Merging stops once the closest pair is farther than ``stop_above``.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    n = dist.shape[0]
    d = dist.astype(float, copy=True)
    np.fill_diagonal(d, np.inf)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    for _ in range(n - 1):
        masked = np.where(np.outer(active, active), d, np.inf)
        best = masked.min()
        if not np.isfinite(best) or best > stop_above + TIE_EPS:
            break
        rows, cols = np.nonzero(np.triu(masked <= best + TIE_EPS, k=1))
        # cluster index == its smallest member, since merges keep the lower index
        i, j = min(zip(rows.tolist(), cols.tolist()))
        height = float(d[i, j])
        if linkage == "average":
            row = (size[i] * d[i] + size[j] * d[j]) / (size[i] + size[j])
        elif linkage == "single":
            row = np.minimum(d[i], d[j])
        else:
            row = np.maximum(d[i], d[j])
        d[i, :] = row
        d[:, i] = row
        d[i, i] = np.inf
        active[j] = False
        d[j, :] = np.inf
        d[:, j] = np.inf
        size[i] += size[j]
        merges.append((i, j, height))
    return merges


def cluster(pdg: PackageDependencyGraph, threshold: float = DEFAULT_HAC_THRESHOLD,
            linkage: str = "average",
            distance: Callable[[float], float] = weight_to_distance) -> list[LibraryCandidate]:
    """Split the residue into library candidates.

    Distances are ``1/(1+W)``; any merge above ``threshold`` is undone.
    Candidates come back sorted by (root_guess, smallest class).
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if not pdg.nodes:
        return []
    merges = hac_merges(distance_matrix(pdg, distance), linkage, stop_above=threshold)
    members = {i: [i] for i in range(len(pdg.nodes))}
    for keep, gone, _ in merges:
        members[keep].extend(members.pop(gone))
    cands = [
        make_candidate(pdg.app_id, (pdg.nodes[k] for k in idx)) for idx in members.values()
    ]
    return sorted(cands, key=candidate_order)


def decouple(model: AppModel, config: DecoupleConfig | None = None) -> list[LibraryCandidate]:
    """Host elimination followed by library splitting; [] for library-free apps."""
    config = config or DecoupleConfig()
    ctg = build_ctg(model)
    prefixes = primary_packages(ctg, model, config.primary_prefix_depth)
    log.debug("%s: primary prefixes %s", model.app_id, sorted(prefixes))
    try:
        residue = strip_primary(model, prefixes)
    except EmptyResidue:
        return []
    return cluster(build_pdg(residue), config.hac_threshold, config.linkage)

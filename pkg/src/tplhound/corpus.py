"""Synthetic app corpora with known ground truth, plus model-level obfuscators.

Libraries are generated from their own seed, independent of the app they are
embedded in, so the same library has the same CFGs in every app and in its
seed profile. Every transform is a pure function of (model, seed) and keeps
the order of ``model.classes``; :func:`remap_truth` relies on that.
"""
from __future__ import annotations

import itertools
import json
import math
import random
import string
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .decouple import build_ctg, build_pdg, cluster, primary_packages
from .matcher import DEFAULT_ALPHA
from .model import (
    AppModel,
    Cfg,
    ClassInfo,
    ComponentDecl,
    ComponentKind,
    MethodInfo,
    TransitionApi,
    TransitionEdge,
    is_under,
    load_app_bundle,
    package_of,
    save_app_bundle,
)
from .signature import CfgSignature, LibraryProfile, library_profile, method_signature

MAX_CFG_SIZE = 64
_ATTEMPTS = 200

_CLASS_WORDS = (
    "Client", "Config", "Request", "Response", "Cache", "Util", "Handler", "Loader",
    "Manager", "Parser", "Writer", "Reader", "Builder", "Factory", "Session", "Stream",
)
_SUPPORT_WORDS = ("Bridge", "Pool", "Codec", "Buffer", "Dispatcher", "Registry")
_TOPS = ("com", "org", "io", "net")


class SpecError(ValueError):
    pass


# -- specs ------------------------------------------------------------------


@dataclass(frozen=True)
class LibSpec:
    name: str
    package: str
    class_count: int = 5
    intra_edges: int = 3
    cfg_size: tuple[int, int] = (3, 20)
    methods_per_class: tuple[int, int] = (2, 4)
    support_classes: int = 1
    version: str | None = "1.0.0"
    seed: int = 0
    activity: bool = False

    def __post_init__(self):
        lo, hi = self.cfg_size
        if not 1 <= lo <= hi <= MAX_CFG_SIZE:
            raise SpecError(f"{self.name}: cfg size range {self.cfg_size} not within [1, {MAX_CFG_SIZE}]")
        if self.class_count < 1:
            raise SpecError(f"{self.name}: class_count must be >= 1")
        if not 1 <= self.methods_per_class[0] <= self.methods_per_class[1]:
            raise SpecError(f"{self.name}: bad methods_per_class {self.methods_per_class}")


@dataclass(frozen=True)
class HostSpec:
    package: str
    class_count: int = 4
    activities: int = 2
    services: int = 1
    receivers: int = 0

    def __post_init__(self):
        if self.class_count < 1:
            raise SpecError("host class_count must be >= 1")
        if self.activities + self.services + self.receivers > self.class_count:
            raise SpecError("host component plan needs more classes than class_count")


@dataclass(frozen=True)
class Scenarios:
    shared_root: bool = False
    lib_dependency: bool = False
    partial_import_fraction: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    rng_seed: int
    host: HostSpec
    libs: tuple[LibSpec, ...] = ()
    scenarios: Scenarios = field(default_factory=Scenarios)
    app_id: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        def lib(d):
            d = dict(d)
            for key in ("cfg_size", "methods_per_class"):
                if key in d:
                    d[key] = tuple(d[key])
            return LibSpec(**d)

        return cls(
            rng_seed=int(doc["rng_seed"]),
            host=HostSpec(**doc["host"]),
            libs=tuple(lib(d) for d in doc.get("libs", [])),
            scenarios=Scenarios(**doc.get("scenarios", {})),
            app_id=doc.get("app_id"),
        )

    def to_dict(self) -> dict:
        doc = asdict(self)
        for lib in doc["libs"]:
            lib["cfg_size"] = list(lib["cfg_size"])
            lib["methods_per_class"] = list(lib["methods_per_class"])
        return doc


@dataclass(frozen=True)
class TruthLib:
    name: str
    version: str | None
    classes: tuple[str, ...]


GroundTruth = dict  # app_id -> list[TruthLib]


def truth_to_dict(app_id: str, libs: Iterable[TruthLib]) -> dict:
    return {
        "app_id": app_id,
        "libraries": [
            {"name": t.name, "version": t.version, "classes": list(t.classes)} for t in libs
        ],
    }


def truth_from_dict(doc: dict) -> GroundTruth:
    libs = [
        TruthLib(d["name"], d.get("version"), tuple(d.get("classes", [])))
        for d in doc["libraries"]
    ]
    return {doc["app_id"]: libs}


# -- generation -------------------------------------------------------------


def random_cfg(rng: random.Random, size: int) -> Cfg:
    edges = [(rng.randrange(i), i) for i in range(1, size)]
    for _ in range(rng.randint(0, max(1, size // 2))):
        e = (rng.randrange(size), rng.randrange(size))
        if e not in edges:
            edges.append(e)
    rng.shuffle(edges)
    return Cfg(size, tuple(edges))


def _class_names(words: tuple[str, ...], n: int) -> list[str]:
    return [words[i % len(words)] + (str(i // len(words)) if i >= len(words) else "") for i in range(n)]


@dataclass(frozen=True)
class _LibClass:
    simple: str
    support: bool
    cfgs: tuple[Cfg, ...]
    calls: tuple[tuple[int, int], ...]
    fields: tuple[tuple[int, int], ...]
    parent: int | None


def _generate_lib(lib: LibSpec) -> list[_LibClass]:
    rng = random.Random(f"lib:{lib.name}:{lib.seed}")
    n_core, n_sup = lib.class_count, lib.support_classes
    lo, hi = lib.cfg_size
    taken: set[CfgSignature] = set()
    out = []
    names = _class_names(_CLASS_WORDS, n_core) + _class_names(_SUPPORT_WORDS, n_sup)
    for i in range(n_core + n_sup):
        cfgs = []
        for _ in range(rng.randint(*lib.methods_per_class)):
            for _attempt in range(_ATTEMPTS):
                cfg = random_cfg(rng, rng.randint(lo, hi))
                sig = method_signature(cfg)
                if sig not in taken:
                    taken.add(sig)
                    cfgs.append(cfg)
                    break
            else:
                raise SpecError(f"{lib.name}: cannot draw enough distinct CFGs in size range {lib.cfg_size}")
        calls: dict[int, int] = {}
        fields: dict[int, int] = {}
        parent = None
        if i < n_core:
            others = [j for j in range(n_core) if j != i]
            if i + 1 < n_core:
                calls[i + 1] = rng.randint(2, 4)
            for j in rng.sample(others, min(lib.intra_edges, len(others))):
                calls[j] = calls.get(j, 0) + rng.randint(2, 4)
            if others and rng.random() < 0.4:
                fields[rng.choice(others)] = rng.randint(1, 3)
            if i > 0 and rng.random() < 0.3:
                parent = rng.randrange(i)
        else:
            # support classes lean on every core class so they cluster with it
            for j in range(n_core):
                calls[j] = 4
                fields[j] = 1
        out.append(_LibClass(names[i], i >= n_core, tuple(cfgs),
                             tuple(sorted(calls.items())), tuple(sorted(fields.items())), parent))
    return out


def _lib_layout(lib: LibSpec, package: str, parallel_tree: bool) -> tuple[str, str]:
    """Packages for core and support classes."""
    if parallel_tree:
        return package, package.split(".")[-1] + "deps.internal"
    return package, package + ".internal"


def _lib_classes(lib: LibSpec, gen: list[_LibClass], core_pkg: str, sup_pkg: str,
                 keep: set[int] | None = None) -> list[ClassInfo]:
    fq = [f"{sup_pkg if c.support else core_pkg}.{c.simple}" for c in gen]
    keep = set(range(len(gen))) if keep is None else keep
    classes = []
    for i, c in enumerate(gen):
        if i not in keep:
            continue
        pkg = package_of(fq[i])
        methods = tuple(
            MethodInfo(f"m{k}", f"({k})V", cfg, pkg) for k, cfg in enumerate(c.cfgs)
        )
        classes.append(ClassInfo(
            fqname=fq[i],
            superclass=fq[c.parent] if c.parent is not None and c.parent in keep else None,
            methods=methods,
            call_refs=tuple((fq[j], n) for j, n in c.calls if j in keep),
            field_refs=tuple((fq[j], n) for j, n in c.fields if j in keep),
        ))
    return classes


def library_bundle(lib: LibSpec) -> AppModel:
    """The library alone, as a bundle suitable for seeding a database."""
    gen = _generate_lib(lib)
    core, sup = _lib_layout(lib, lib.package, False)
    app_id = f"{lib.name}@{lib.version}" if lib.version else lib.name
    return AppModel(app_id, lib.package, tuple(_lib_classes(lib, gen, core, sup)))


def seed_profile(lib: LibSpec) -> LibraryProfile:
    return library_profile(library_bundle(lib), name=lib.name, version=lib.version)


def lib_signatures(lib: LibSpec) -> set[CfgSignature]:
    return {method_signature(cfg) for c in _generate_lib(lib) for cfg in c.cfgs}


def _cohesive(lib: LibSpec, gen: list[_LibClass], trials: int = 3) -> bool:
    """Does the library come out of clustering as one piece in every layout?"""
    layouts = [
        _lib_layout(lib, lib.package, False),
        _lib_layout(lib, lib.package, True),
        ("o", "o"),
    ]
    for core, sup in layouts:
        model = AppModel("check", core, tuple(_lib_classes(lib, gen, core, sup)))
        names = [c.fqname for c in model.classes]
        pdg = build_pdg(model)
        rng = random.Random(lib.seed)
        for t in range(trials):
            # relabel so ties are broken in a different order each trial
            perm = names[:] if t == 0 else rng.sample(names, len(names))
            relabel = {old: f"c{k:03d}" for k, old in enumerate(perm)}
            shuffled = replace(
                pdg,
                nodes=tuple(sorted(relabel.values())),
                contributions={
                    tuple(sorted((relabel[a], relabel[b]))): v
                    for (a, b), v in pdg.contributions.items()
                },
            )
            if len(cluster(shuffled)) != 1:
                return False
    return True


def synth_catalog(n_libs: int, seed: int = 0, **lib_kw) -> list[LibSpec]:
    """Generate ``n_libs`` library specs whose CFGs are pairwise distinct.

    Each library is re-drawn (by bumping its seed) until it collides with
    none of the earlier ones and clusters into a single candidate.
    """
    rng = random.Random(f"catalog:{seed}")
    words: set[str] = set()
    orgs = [_word(rng, words) for _ in range(max(1, n_libs // 8))]
    taken: set[CfgSignature] = set()
    libs = []
    for i in range(n_libs):
        word = _word(rng, words)
        top = rng.choice(_TOPS)
        package = f"{top}.{rng.choice(orgs)}.{word}" if rng.random() < 0.3 else f"{top}.{word}"
        base = LibSpec(
            name=package,
            package=package,
            class_count=rng.randint(3, 8),
            version=f"{rng.randint(1, 4)}.{rng.randint(0, 9)}.{rng.randint(0, 9)}",
            activity=rng.random() < 0.15,
            seed=rng.randrange(2**31),
            **lib_kw,
        )
        for bump in range(_ATTEMPTS):
            lib = replace(base, seed=base.seed + bump)
            gen = _generate_lib(lib)
            sigs = {method_signature(cfg) for c in gen for cfg in c.cfgs}
            if sigs.isdisjoint(taken) and _cohesive(lib, gen):
                taken |= sigs
                libs.append(lib)
                break
        else:
            raise SpecError(f"library {i}: no distinct, cohesive draw found")
    return libs


def _word(rng: random.Random, used: set[str]) -> str:
    cons, vows = "bcdfghklmnprstvz", "aeiou"
    while True:
        w = "".join(rng.choice(cons) + rng.choice(vows) for _ in range(rng.randint(2, 3)))
        if w not in used:
            used.add(w)
            return w


def compose_app(spec: SynthSpec) -> tuple[AppModel, GroundTruth, list[LibraryProfile]]:
    """Build one app bundle embedding ``spec.libs`` around a generated host.

    Returns the model, its ground truth, and a full seed profile per library.
    """
    rng = random.Random(f"app:{spec.rng_seed}")
    app_id = spec.app_id or f"synth-{spec.rng_seed}"
    sc = spec.scenarios
    if not 0 <= sc.partial_import_fraction < 1:
        raise SpecError("partial_import_fraction must be in [0, 1)")

    gens = [_generate_lib(lib) for lib in spec.libs]
    seen: set[CfgSignature] = set()
    for lib, gen in zip(spec.libs, gens):
        sigs = {method_signature(cfg) for c in gen for cfg in c.cfgs}
        if not sigs.isdisjoint(seen):
            raise SpecError(f"{lib.name}: CFGs collide with another library in this app")
        seen |= sigs

    packages = [lib.package for lib in spec.libs]
    if sc.shared_root and packages:
        root = packages[0].split(".")[0]
        packages = [".".join([root] + p.split(".")[1:]) if "." in p else f"{root}.{p}" for p in packages]
    if len(set(packages)) != len(packages):
        raise SpecError(f"library packages collide: {packages}")
    host_pkg = spec.host.package
    for p in packages:
        if is_under(p, host_pkg) or is_under(host_pkg, p):
            raise SpecError(f"library package {p} overlaps host package {host_pkg}")

    lib_classes: list[list[ClassInfo]] = []
    truth: list[TruthLib] = []
    for lib, gen, pkg in zip(spec.libs, gens, packages):
        core, sup = _lib_layout(lib, pkg, sc.lib_dependency)
        keep = set(range(len(gen)))
        n_drop = math.floor(sc.partial_import_fraction * len(gen))
        if n_drop:
            keep -= set(rng.sample(range(1, len(gen)), min(n_drop, len(gen) - 1)))
        classes = _lib_classes(lib, gen, core, sup, keep)
        lib_classes.append(classes)
        truth.append(TruthLib(lib.name, lib.version, tuple(c.fqname for c in classes)))

    host = _host_classes(spec.host, lib_classes, rng)
    components, transitions = _host_components(spec.host, host)
    for lib, classes in zip(spec.libs, lib_classes):
        if lib.activity:
            components.append(ComponentDecl(ComponentKind.ACTIVITY, classes[-1].fqname))

    model = AppModel(
        app_id=app_id,
        declared_package=host_pkg,
        classes=tuple(host) + tuple(c for cs in lib_classes for c in cs),
        components=tuple(components),
        transitions=tuple(transitions),
    )
    return model, {app_id: truth}, [seed_profile(lib) for lib in spec.libs]


def _host_classes(host: HostSpec, lib_classes: list[list[ClassInfo]],
                  rng: random.Random) -> list[ClassInfo]:
    names = []
    for i in range(host.class_count):
        if i == 0:
            names.append("MainActivity")
        elif i < host.activities:
            names.append(f"Screen{i}Activity")
        elif i < host.activities + host.services:
            names.append(f"Sync{i}Service")
        elif i < host.activities + host.services + host.receivers:
            names.append(f"Boot{i}Receiver")
        else:
            names.append(f"Helper{i}")
    fq = [f"{host.package}.{n}" for n in names]
    calls: list[dict[str, int]] = [{} for _ in names]
    for classes in lib_classes:
        if not classes:
            continue
        caller = rng.randrange(len(names))
        calls[caller][classes[0].fqname] = rng.randint(1, 2)
        other = rng.choice(classes)
        calls[rng.randrange(len(names))].setdefault(other.fqname, 1)
    out = []
    for i, name in enumerate(fq):
        methods = tuple(
            MethodInfo(f"on{k}", "()V", random_cfg(rng, rng.randint(2, 12)), host.package)
            for k in range(rng.randint(1, 4))
        )
        refs = tuple((f, 1) for f in fq if f != name and rng.random() < 0.3)
        out.append(ClassInfo(name, methods=methods, call_refs=tuple(sorted(calls[i].items())),
                             field_refs=refs))
    return out


def _host_components(host: HostSpec, classes: list[ClassInfo]):
    components, transitions = [], []
    main = classes[0].fqname
    for i, cls in enumerate(classes):
        if i < host.activities:
            components.append(ComponentDecl(ComponentKind.ACTIVITY, cls.fqname, is_main=i == 0))
            if i:
                transitions.append(TransitionEdge(main, cls.fqname, TransitionApi.START_ACTIVITY))
        elif i < host.activities + host.services:
            components.append(ComponentDecl(ComponentKind.SERVICE, cls.fqname))
            transitions.append(TransitionEdge(main, cls.fqname, TransitionApi.START_SERVICE))
        elif i < host.activities + host.services + host.receivers:
            components.append(ComponentDecl(ComponentKind.RECEIVER, cls.fqname))
            transitions.append(TransitionEdge(main, cls.fqname, TransitionApi.SEND_BROADCAST))
    return components, transitions


@dataclass
class Corpus:
    apps: list[AppModel]
    truth: GroundTruth
    catalog: list[LibSpec]

    def seed_profiles(self) -> list[LibraryProfile]:
        return [seed_profile(lib) for lib in self.catalog]


def synth_corpus(n_apps: int = 50, n_libs: int = 100, seed: int = 0,
                 libs_per_app: int = 2, scenario_mix: bool = True) -> Corpus:
    """A corpus where every catalog library appears in at least one app.

    App ``i`` embeds its own slice of the catalog plus one library drawn at
    random, so most libraries are seen more than once. With
    ``scenario_mix`` some apps put their libraries under a shared root or
    split them across parallel package trees.
    """
    catalog = synth_catalog(n_libs, seed)
    rng = random.Random(f"corpus:{seed}")
    words: set[str] = {lib.package.split(".")[-1] for lib in catalog}
    apps, truth = [], {}
    for i in range(n_apps):
        idx = [(i * libs_per_app + k) % n_libs for k in range(libs_per_app)]
        extra = rng.randrange(n_libs)
        if extra not in idx:
            idx.append(extra)
        scen = Scenarios(
            shared_root=scenario_mix and i % 5 == 4,
            lib_dependency=scenario_mix and i % 7 == 6,
        )
        libs = tuple(catalog[k] for k in sorted(idx))
        if scen.shared_root:
            tails = [lib.package.split(".")[1:] for lib in libs]
            if len({tuple(t) for t in tails}) != len(tails):
                scen = replace(scen, shared_root=False)
        host = HostSpec(
            package=f"{rng.choice(_TOPS)}.{_word(rng, words)}app",
            class_count=rng.randint(3, 6),
            activities=2,
            services=1,
        )
        spec = SynthSpec(rng.randrange(2**31), host, libs, scen, app_id=f"app{i:03d}")
        model, t, _ = compose_app(spec)
        apps.append(model)
        truth.update(t)
    return Corpus(apps, truth, catalog)


# -- obfuscation transforms -------------------------------------------------


def _obf_names(n: int) -> list[str]:
    """a, b, ..., z, aa, ab, ... (first n)."""
    out = []
    length = 1
    while len(out) < n:
        for combo in itertools.product(string.ascii_lowercase, repeat=length):
            out.append("".join(combo))
            if len(out) == n:
                break
        length += 1
    return out


def _relocate(m: AppModel, mapping: dict[str, str], declared_package: str | None = None,
              method_names: dict[str, str] | None = None) -> AppModel:
    """Rewrite every class name through ``mapping``; CFGs are left alone."""
    def ren(name):
        return mapping.get(name, name)

    classes = []
    for c in m.classes:
        new = ren(c.fqname)
        pkg = package_of(new)
        methods = tuple(
            replace(meth, location=pkg,
                    name=method_names.get(meth.name, meth.name) if method_names else meth.name)
            for meth in c.methods
        )
        classes.append(ClassInfo(
            fqname=new,
            superclass=ren(c.superclass) if c.superclass else None,
            interfaces=tuple(ren(i) for i in c.interfaces),
            methods=methods,
            field_refs=tuple((ren(t), n) for t, n in c.field_refs),
            call_refs=tuple((ren(t), n) for t, n in c.call_refs),
        ))
    return AppModel(
        app_id=m.app_id,
        declared_package=m.declared_package if declared_package is None else declared_package,
        classes=tuple(classes),
        components=tuple(replace(c, class_ref=ren(c.class_ref)) for c in m.components),
        transitions=tuple(replace(t, src=ren(t.src), dst=ren(t.dst)) for t in m.transitions),
    )


def rename_identifiers(m: AppModel, seed: int = 0) -> AppModel:
    """Rename package segments, class names and method names to short letters.

    The maps are bijective and applied consistently (manifest declarations
    and transitions included), so the package tree keeps its shape.
    """
    rng = random.Random(f"rename:{seed}")
    segs: set[str] = set()
    simple: set[str] = set()
    meths: set[str] = set()
    for c in m.classes:
        pkg = package_of(c.fqname)
        if pkg:
            segs.update(pkg.split("."))
        simple.add(c.fqname.rpartition(".")[2])
        meths.update(meth.name for meth in c.methods)
    if m.declared_package:
        segs.update(m.declared_package.split("."))

    def bijection(names: set[str]) -> dict[str, str]:
        order = sorted(names)
        rng.shuffle(order)
        return dict(zip(order, _obf_names(len(order))))

    seg_map, cls_map, meth_map = bijection(segs), bijection(simple), bijection(meths)
    # class names get an upper-case initial so they never equal a segment
    mapping = {}
    for c in m.classes:
        pkg, _, name = c.fqname.rpartition(".")
        new_pkg = ".".join(seg_map[s] for s in pkg.split(".")) if pkg else ""
        new_name = cls_map[name].capitalize()
        mapping[c.fqname] = f"{new_pkg}.{new_name}" if new_pkg else new_name
    declared = ".".join(seg_map[s] for s in m.declared_package.split(".")) if m.declared_package else ""
    return _relocate(m, mapping, declared, meth_map)


def _non_primary(m: AppModel) -> list[ClassInfo]:
    prefixes = primary_packages(build_ctg(m), m)
    return [c for c in m.classes if not any(is_under(c.fqname, p) for p in prefixes)]


def flatten_packages(m: AppModel, mode: str = "collapse_root", seed: int = 0) -> AppModel:
    """Destroy the package hierarchy of non-primary code.

    ``collapse_root`` moves every non-primary class into one single-segment
    package; ``shuffle`` scatters them over random package paths. Dependency
    references follow the moved classes.
    """
    if mode not in ("collapse_root", "shuffle"):
        raise ValueError(f"unknown flatten mode {mode!r}")
    rng = random.Random(f"flatten:{seed}")
    movers = _non_primary(m)
    tops = {c.fqname.split(".")[0] for c in m.classes}
    free = [n for n in _obf_names(len(tops) + 26) if n not in tops]
    if mode == "collapse_root":
        targets = [free[0]] * len(movers)
    else:
        n_paths = max(1, len({c.package for c in movers}))
        paths = []
        for _ in range(n_paths):
            depth = rng.randint(1, 3)
            paths.append(".".join([rng.choice(free[:4])] + [rng.choice(free) for _ in range(depth - 1)]))
        targets = [rng.choice(paths) for _ in movers]

    staying = {c.fqname for c in m.classes} - {c.fqname for c in movers}
    used = set(staying)
    mapping = {}
    for cls, pkg in zip(movers, targets):
        simple = cls.fqname.rpartition(".")[2]
        new = f"{pkg}.{simple}"
        k = 2
        while new in used:
            new = f"{pkg}.{simple}{k}"
            k += 1
        used.add(new)
        mapping[cls.fqname] = new
    return _relocate(m, mapping)


@dataclass(frozen=True)
class OracleRow:
    app_id: str
    library: str
    transform: str
    fraction: float
    reference_size: int
    residual_size: int
    similarity: float
    predicted: str  # "Matched" or "NewLibrary"


def _oracle_row(app_id, lib: TruthLib, transform, fraction, reference: set, after: set,
                alpha: float) -> OracleRow:
    inter = len(reference & after)
    union = len(reference | after)
    sim = inter / union if union else 0.0
    return OracleRow(app_id, lib.name, transform, fraction, len(reference), len(after), sim,
                     "Matched" if sim >= alpha else "NewLibrary")


def _sigset(m: AppModel, classes: Iterable[str]) -> set[CfgSignature]:
    cmap = m.class_map()
    return {method_signature(meth.cfg) for name in classes if name in cmap for meth in cmap[name].methods}


def _reference(m, lib, references):
    if references and lib.name in references:
        return set(references[lib.name].signatures)
    return _sigset(m, lib.classes)


def remove_dead_code(m: AppModel, truth: GroundTruth, fraction: float, seed: int = 0,
                     alpha: float = DEFAULT_ALPHA, transitive: bool = False,
                     references: dict[str, LibraryProfile] | None = None
                     ) -> tuple[AppModel, list[OracleRow]]:
    """Delete ``floor(fraction * methods)`` unused methods from each library.

    A method counts as used when the host calls its class: a host call
    reference with count ``n`` pins the first ``n`` methods of the target.
    With ``transitive`` the pinning follows library-internal calls too.
    """
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    rng = random.Random(f"deadcode:{seed}:{m.app_id}")
    libs = truth.get(m.app_id, [])
    lib_names = {name for lib in libs for name in lib.classes}
    cmap = m.class_map()
    pinned: dict[str, int] = {}
    for c in m.classes:
        if c.fqname in lib_names:
            continue
        for target, n in c.call_refs:
            if target in lib_names:
                pinned[target] = max(pinned.get(target, 0), n)
    if transitive:
        frontier = list(pinned)
        while frontier:
            cls = cmap[frontier.pop()]
            for target, n in cls.call_refs:
                if target in lib_names and n > pinned.get(target, 0):
                    pinned[target] = n
                    frontier.append(target)

    drop: dict[str, set[int]] = {}
    for lib in libs:
        methods = [(name, k) for name in lib.classes if name in cmap
                   for k in range(len(cmap[name].methods))]
        eligible = [(name, k) for name, k in methods if k >= pinned.get(name, 0)]
        n = min(math.floor(fraction * len(methods)), len(eligible))
        for name, k in rng.sample(eligible, n):
            drop.setdefault(name, set()).add(k)

    classes = tuple(
        replace(c, methods=tuple(meth for k, meth in enumerate(c.methods) if k not in drop.get(c.fqname, ())))
        if c.fqname in drop else c
        for c in m.classes
    )
    out = replace(m, classes=classes)
    oracle = [
        _oracle_row(m.app_id, lib, "deadcode", fraction, _reference(m, lib, references),
                    _sigset(out, lib.classes), alpha)
        for lib in libs
    ]
    return out, oracle


def splice_diamond(cfg: Cfg, rng: random.Random) -> Cfg:
    """Insert an opaque-predicate diamond: two new nodes, three more edges.

    Edge u->v becomes u->p, p->v, p->q, q->v, where p is the predicate and
    q the never-taken block.
    """
    p, q = cfg.node_count, cfg.node_count + 1
    edges = list(cfg.edges)
    if edges:
        at = rng.randrange(len(edges))
        u, v = edges[at]
        edges[at:at + 1] = [(u, p), (p, v), (p, q), (q, v)]
    else:
        edges = [(0, p), (p, q), (0, q)]
    return Cfg(cfg.node_count + 2, tuple(edges))


def randomize_control_flow(m: AppModel, truth: GroundTruth, fraction: float, seed: int = 0,
                           alpha: float = DEFAULT_ALPHA,
                           references: dict[str, LibraryProfile] | None = None
                           ) -> tuple[AppModel, list[OracleRow]]:
    """Splice a diamond into ``floor(fraction * methods)`` random methods per library."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be in [0, 1]")
    rng = random.Random(f"cfo:{seed}:{m.app_id}")
    libs = truth.get(m.app_id, [])
    cmap = m.class_map()
    chosen: dict[str, set[int]] = {}
    for lib in libs:
        methods = [(name, k) for name in lib.classes if name in cmap
                   for k in range(len(cmap[name].methods))]
        for name, k in rng.sample(methods, math.floor(fraction * len(methods))):
            chosen.setdefault(name, set()).add(k)
    classes = []
    for c in m.classes:
        picks = chosen.get(c.fqname)
        if picks:
            c = replace(c, methods=tuple(
                replace(meth, cfg=splice_diamond(meth.cfg, rng)) if k in picks else meth
                for k, meth in enumerate(c.methods)
            ))
        classes.append(c)
    out = replace(m, classes=tuple(classes))
    oracle = [
        _oracle_row(m.app_id, lib, "cfo", fraction, _reference(m, lib, references),
                    _sigset(out, lib.classes), alpha)
        for lib in libs
    ]
    return out, oracle


def remap_truth(truth: GroundTruth, before: AppModel, after: AppModel) -> GroundTruth:
    """Carry truth class names through a transform (classes keep their positions)."""
    names = {b.fqname: a.fqname for b, a in zip(before.classes, after.classes)}
    out = dict(truth)
    if before.app_id in truth:
        out[after.app_id] = [
            replace(t, classes=tuple(names[c] for c in t.classes if c in names))
            for t in truth[before.app_id]
        ]
    return out


# -- corpus directories -----------------------------------------------------


def write_corpus(directory: str | Path, apps: Iterable[AppModel], truth: GroundTruth,
                 oracle: Iterable[OracleRow] | None = None) -> None:
    """``<app_id>.bundle`` + ``<app_id>.truth.json`` per app, and ``oracle.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for m in apps:
        save_app_bundle(m, d / f"{m.app_id}.bundle")
        if m.app_id in truth:
            (d / f"{m.app_id}.truth.json").write_text(
                json.dumps(truth_to_dict(m.app_id, truth[m.app_id]), indent=1) + "\n",
                encoding="utf-8")
    if oracle is not None:
        write_oracle(d / "oracle.json", oracle)


def write_oracle(path: str | Path, rows: Iterable[OracleRow]) -> None:
    Path(path).write_text(json.dumps([asdict(r) for r in rows], indent=1) + "\n", encoding="utf-8")


def read_oracle(path: str | Path) -> list[OracleRow]:
    return [OracleRow(**r) for r in json.loads(Path(path).read_text(encoding="utf-8"))]


def read_truth(path: str | Path) -> GroundTruth:
    return truth_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def corpus_bundles(directory: str | Path) -> list[Path]:
    return sorted(Path(directory).glob("*.bundle"))


def load_corpus(directory: str | Path) -> tuple[list[AppModel], GroundTruth]:
    apps, truth = [], {}
    for path in corpus_bundles(directory):
        apps.append(load_app_bundle(path))
        side = path.with_name(path.name[: -len(".bundle")] + ".truth.json")
        if side.exists():
            truth.update(read_truth(side))
    return apps, truth

"""App model: the decompiled-app abstraction and its JSON bundle format.

A bundle is one UTF-8 JSON document::

    {"app_id": ..., "declared_package": ...,
     "classes": [{"fqname", "superclass"?, "interfaces", "field_refs",
                  "call_refs", "methods": [{"name", "descriptor",
                  "location", "cfg": {"node_count", "edges"}}]}],
     "components": [{"kind", "class_ref", "is_main"}],
     "transitions": [{"src", "dst", "api"}]}

Everything here is immutable once built.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable


class ComponentKind(str, Enum):
    ACTIVITY = "Activity"
    SERVICE = "Service"
    RECEIVER = "Receiver"


class TransitionApi(str, Enum):
    START_ACTIVITY = "StartActivity"
    START_ACTIVITY_FOR_RESULT = "StartActivityForResult"
    START_SERVICE = "StartService"
    SEND_BROADCAST = "SendBroadcast"


@dataclass(frozen=True)
class Cfg:
    """Method control-flow graph. Node 0 is the entry.

    Edge order matters: the successors of a node are visited in the order
    their edges appear in ``edges``.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...] = ()

    def successors(self) -> list[list[int]]:
        succ: list[list[int]] = [[] for _ in range(self.node_count)]
        for src, dst in self.edges:
            succ[src].append(dst)
        return succ


@dataclass(frozen=True)
class MethodInfo:
    name: str
    descriptor: str
    cfg: Cfg
    location: str


@dataclass(frozen=True)
class ClassInfo:
    fqname: str
    superclass: str | None = None
    interfaces: tuple[str, ...] = ()
    methods: tuple[MethodInfo, ...] = ()
    field_refs: tuple[tuple[str, int], ...] = ()
    call_refs: tuple[tuple[str, int], ...] = ()

    @property
    def package(self) -> str:
        return package_of(self.fqname)


@dataclass(frozen=True)
class ComponentDecl:
    kind: ComponentKind
    class_ref: str
    is_main: bool = False


@dataclass(frozen=True)
class TransitionEdge:
    src: str
    dst: str
    api: TransitionApi = TransitionApi.START_ACTIVITY


@dataclass(frozen=True)
class AppModel:
    app_id: str
    declared_package: str
    classes: tuple[ClassInfo, ...] = ()
    components: tuple[ComponentDecl, ...] = ()
    transitions: tuple[TransitionEdge, ...] = ()

    def class_map(self) -> dict[str, ClassInfo]:
        return {c.fqname: c for c in self.classes}

    @property
    def main_activity(self) -> ComponentDecl | None:
        for comp in self.components:
            if comp.is_main:
                return comp
        return None


def package_of(fqname: str) -> str:
    """Dotted package of a class name ('' for the default package)."""
    head, _, _ = fqname.rpartition(".")
    return head


def is_under(fqname: str, prefix: str) -> bool:
    """Segment-wise prefix test: 'a.b.C' is under 'a' and 'a.b', not 'a.bc'."""
    if not prefix:
        return True
    return fqname == prefix or fqname.startswith(prefix + ".")


def common_prefix(paths: Iterable[str]) -> str:
    """Longest common dotted prefix, compared segment by segment."""
    split = [p.split(".") if p else [] for p in paths]
    if not split:
        return ""
    out = []
    for segs in zip(*split):
        if all(s == segs[0] for s in segs):
            out.append(segs[0])
        else:
            break
    return ".".join(out)


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    locus: str = ""
    detail: str = ""

    def __str__(self) -> str:
        text = self.code
        if self.locus:
            text += f"({self.locus})"
        if self.detail:
            text += f": {self.detail}"
        return text


class ParseError(ValueError):
    def __init__(self, message: str, locus: str = ""):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


class ValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "\n".join(f"  {v}" for v in violations)
        super().__init__(f"{len(violations)} invariant violation(s):\n{lines}")


def validate(model: AppModel) -> list[Violation]:
    """Check every model invariant; returns all violations found."""
    out: list[Violation] = []
    seen: set[str] = set()
    for cls in model.classes:
        segs = cls.fqname.split(".")
        if not cls.fqname or any(not s for s in segs):
            out.append(Violation("BadFqname", cls.fqname))
        if cls.fqname in seen:
            out.append(Violation("DuplicateClass", cls.fqname))
        seen.add(cls.fqname)
        for kind, refs in (("field_refs", cls.field_refs), ("call_refs", cls.call_refs)):
            for target, count in refs:
                if count < 1:
                    out.append(Violation("NonPositiveCount", f"{cls.fqname}.{kind}", target))
        pkg = cls.package
        for i, meth in enumerate(cls.methods):
            locus = f"{cls.fqname}.methods[{i}]"
            if meth.location != pkg:
                out.append(Violation("LocationMismatch", locus,
                                     f"{meth.location!r} != {pkg!r}"))
            cfg = meth.cfg
            if cfg.node_count < 1:
                out.append(Violation("EmptyCfg", locus))
            for src, dst in cfg.edges:
                if not (0 <= src < cfg.node_count and 0 <= dst < cfg.node_count):
                    out.append(Violation("CfgIndexOutOfRange", locus, f"{src}->{dst}"))

    mains = [c for c in model.components if c.is_main]
    if len(mains) > 1:
        out.append(Violation("MultipleMainActivities", "",
                             ", ".join(c.class_ref for c in mains)))
    for comp in model.components:
        if comp.class_ref not in seen:
            out.append(Violation("UnknownClass", comp.class_ref, "component"))
        if comp.is_main and comp.kind is not ComponentKind.ACTIVITY:
            out.append(Violation("MainNotActivity", comp.class_ref))
    for edge in model.transitions:
        for end in (edge.src, edge.dst):
            if end not in seen:
                out.append(Violation("UnknownClass", end, "transition"))
    return out


def check(model: AppModel) -> AppModel:
    violations = validate(model)
    if violations:
        raise ValidationError(violations)
    return model


# -- JSON (de)serialization -------------------------------------------------


def _get(obj: Any, key: str, typ: type | tuple[type, ...], locus: str, default: Any = ...):
    if not isinstance(obj, dict):
        raise ParseError("expected an object", locus)
    if key not in obj:
        if default is ...:
            raise ParseError(f"missing field {key!r}", locus)
        return default
    val = obj[key]
    # bool is an int subclass; keep integer fields strict
    if typ is int and isinstance(val, bool):
        raise ParseError("expected int", f"{locus}.{key}")
    if not isinstance(val, typ):
        raise ParseError(f"expected {getattr(typ, '__name__', typ)}", f"{locus}.{key}")
    return val


def _refs(raw: list, locus: str) -> tuple[tuple[str, int], ...]:
    out = []
    for i, ref in enumerate(raw):
        loc = f"{locus}[{i}]"
        out.append((_get(ref, "target", str, loc), _get(ref, "count", int, loc)))
    return tuple(out)


def _enum(enum_cls, value: str, locus: str):
    try:
        return enum_cls(value)
    except ValueError:
        raise ParseError(f"unknown value {value!r}", locus) from None


def model_from_dict(doc: Any) -> AppModel:
    """Build an AppModel from parsed JSON; raises ParseError on shape errors."""
    classes = []
    for ci, raw in enumerate(_get(doc, "classes", list, "$")):
        loc = f"classes[{ci}]"
        methods = []
        for mi, rm in enumerate(_get(raw, "methods", list, loc, [])):
            mloc = f"{loc}.methods[{mi}]"
            rc = _get(rm, "cfg", dict, mloc)
            edges = []
            for ei, e in enumerate(_get(rc, "edges", list, f"{mloc}.cfg", [])):
                if (not isinstance(e, list) or len(e) != 2
                        or not all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
                    raise ParseError("edge must be [src, dst]", f"{mloc}.cfg.edges[{ei}]")
                edges.append((e[0], e[1]))
            methods.append(MethodInfo(
                name=_get(rm, "name", str, mloc),
                descriptor=_get(rm, "descriptor", str, mloc, ""),
                location=_get(rm, "location", str, mloc),
                cfg=Cfg(_get(rc, "node_count", int, f"{mloc}.cfg"), tuple(edges)),
            ))
        interfaces = _get(raw, "interfaces", list, loc, [])
        for i, name in enumerate(interfaces):
            if not isinstance(name, str):
                raise ParseError("expected str", f"{loc}.interfaces[{i}]")
        classes.append(ClassInfo(
            fqname=_get(raw, "fqname", str, loc),
            superclass=_get(raw, "superclass", (str, type(None)), loc, None),
            interfaces=tuple(interfaces),
            methods=tuple(methods),
            field_refs=_refs(_get(raw, "field_refs", list, loc, []), f"{loc}.field_refs"),
            call_refs=_refs(_get(raw, "call_refs", list, loc, []), f"{loc}.call_refs"),
        ))
    components = []
    for i, rc in enumerate(_get(doc, "components", list, "$", [])):
        loc = f"components[{i}]"
        components.append(ComponentDecl(
            kind=_enum(ComponentKind, _get(rc, "kind", str, loc), f"{loc}.kind"),
            class_ref=_get(rc, "class_ref", str, loc),
            is_main=_get(rc, "is_main", bool, loc, False),
        ))
    transitions = []
    for i, rt in enumerate(_get(doc, "transitions", list, "$", [])):
        loc = f"transitions[{i}]"
        transitions.append(TransitionEdge(
            src=_get(rt, "src", str, loc),
            dst=_get(rt, "dst", str, loc),
            api=_enum(TransitionApi, _get(rt, "api", str, loc), f"{loc}.api"),
        ))
    return AppModel(
        app_id=_get(doc, "app_id", str, "$"),
        declared_package=_get(doc, "declared_package", str, "$"),
        classes=tuple(classes),
        components=tuple(components),
        transitions=tuple(transitions),
    )


def model_to_dict(model: AppModel) -> dict:
    classes = []
    for cls in model.classes:
        raw: dict[str, Any] = {"fqname": cls.fqname}
        if cls.superclass is not None:
            raw["superclass"] = cls.superclass
        raw["interfaces"] = list(cls.interfaces)
        raw["field_refs"] = [{"target": t, "count": n} for t, n in cls.field_refs]
        raw["call_refs"] = [{"target": t, "count": n} for t, n in cls.call_refs]
        raw["methods"] = [
            {
                "name": m.name,
                "descriptor": m.descriptor,
                "location": m.location,
                "cfg": {"node_count": m.cfg.node_count,
                        "edges": [[s, d] for s, d in m.cfg.edges]},
            }
            for m in cls.methods
        ]
        classes.append(raw)
    return {
        "app_id": model.app_id,
        "declared_package": model.declared_package,
        "classes": classes,
        "components": [
            {"kind": c.kind.value, "class_ref": c.class_ref, "is_main": c.is_main}
            for c in model.components
        ],
        "transitions": [
            {"src": t.src, "dst": t.dst, "api": t.api.value} for t in model.transitions
        ],
    }


def loads_app_bundle(text: str) -> AppModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return check(model_from_dict(doc))


def dumps_app_bundle(model: AppModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, ensure_ascii=False) + "\n"


def load_app_bundle(path: str | Path) -> AppModel:
    """Read and validate a bundle file.

    Raises ParseError for malformed documents and ValidationError (listing
    every violation) when the document parses but breaks an invariant.
    """
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc.reason}", f"byte {exc.start}") from None
    return loads_app_bundle(text)


def save_app_bundle(model: AppModel, path: str | Path) -> None:
    Path(path).write_text(dumps_app_bundle(model), encoding="utf-8")

"""Evaluation metrics and the benchmark runner."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import GroundTruth, OracleRow, corpus_bundles, read_oracle, read_truth
from .matcher import DetectConfig, LibraryDatabase, MatchResult, detect
from .model import AppModel, ParseError, ValidationError, load_app_bundle

log = logging.getLogger(__name__)


class ZeroBaseline(ZeroDivisionError):
    pass


class MissingVersionTruth(ValueError):
    pass


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    # true when a ratio fell back to 0 because its denominator was 0
    undefined: bool = False

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "Metrics":
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        return cls(tp, fp, fn, p, r, f1_score(p, r), undefined=(tp + fp == 0 or tp + fn == 0))


def library_metrics(detections: Mapping[str, Iterable[str]], truth: GroundTruth) -> Metrics:
    """Library-level counts, name match exact and case-sensitive."""
    tp = fp = fn = 0
    for app_id in sorted(set(detections) | set(truth)):
        found = set(detections.get(app_id, ()))
        want = {lib.name for lib in truth.get(app_id, ())}
        tp += len(found & want)
        fp += len(found - want)
        fn += len(want - found)
    return Metrics.from_counts(tp, fp, fn)


def version_strict_counts(detected: Iterable[tuple[str, str]], truth: Iterable[tuple[str, str | None]],
                          same_code: Mapping[tuple[str, str], object] | None = None
                          ) -> tuple[int, int, int]:
    """(tp, fp, fn) where only the exact version counts.

    Detected versions of one library are grouped by ``same_code`` (versions
    with identical code share a key). A group holding the true version is one
    TP; every other group is one FP; a true version no group holds is a FN.
    """
    truth = list(truth)
    for name, version in truth:
        if version is None:
            raise MissingVersionTruth(name)
    same_code = same_code or {}
    want: dict[str, set[str]] = {}
    for name, version in truth:
        want.setdefault(name, set()).add(version)
    groups: dict[str, dict[object, set[str]]] = {}
    for name, version in set(detected):
        key = same_code.get((name, version), version)
        groups.setdefault(name, {}).setdefault(key, set()).add(version)

    tp = fp = fn = 0
    for name in set(want) | set(groups):
        true_versions = want.get(name, set())
        covered = set()
        for members in groups.get(name, {}).values():
            hit = members & true_versions
            if hit:
                tp += len(hit)
                covered |= hit
            else:
                fp += 1
        fn += len(true_versions - covered)
    return tp, fp, fn


def changed_rate(x_obf: float, x_no: float) -> float:
    """Relative change of a detection rate under obfuscation; negative is a drop."""
    if x_no == 0:
        raise ZeroBaseline("baseline detection rate is 0")
    return (x_obf - x_no) / x_no


def timing_summary(seconds: Iterable[float]) -> dict[str, float]:
    s = np.asarray(list(seconds), dtype=float)
    if s.size == 0:
        return {"q1": 0.0, "mean": 0.0, "median": 0.0, "q3": 0.0}
    q1, med, q3 = np.percentile(s, [25, 50, 75], method="linear")
    return {"q1": float(q1), "mean": float(s.mean()), "median": float(med), "q3": float(q3)}


# -- benchmark --------------------------------------------------------------


@dataclass(frozen=True)
class BenchConfig:
    detect: DetectConfig = field(default_factory=DetectConfig)
    # count named NewLibrary verdicts as detections too
    count_new_libraries: bool = False
    jobs: int = 1


@dataclass
class AppOutcome:
    app_id: str
    results: list[dict] = field(default_factory=list)
    detected: list[str] = field(default_factory=list)
    tp: int = 0
    fp: int = 0
    fn: int = 0
    seconds: float = 0.0
    error: str | None = None


@dataclass
class EvalReport:
    apps: list[AppOutcome] = field(default_factory=list)
    library: Metrics | None = None
    version: Metrics | None = None
    timing: dict[str, float] = field(default_factory=dict)
    oracle: dict | None = None
    changed_rate: dict[str, dict[str, float]] = field(default_factory=dict)
    label: str = ""

    @property
    def failures(self) -> list[AppOutcome]:
        return [a for a in self.apps if a.error]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "apps": [asdict(a) for a in self.apps],
            "library": asdict(self.library) if self.library else None,
            "version": asdict(self.version) if self.version else None,
            "timing": self.timing,
            "oracle": self.oracle,
            "changed_rate": self.changed_rate,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            apps=[AppOutcome(**a) for a in doc.get("apps", [])],
            library=Metrics(**doc["library"]) if doc.get("library") else None,
            version=Metrics(**doc["version"]) if doc.get("version") else None,
            timing=doc.get("timing", {}),
            oracle=doc.get("oracle"),
            changed_rate=doc.get("changed_rate", {}),
            label=doc.get("label", ""),
        )

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["app_id", "tp", "fp", "fn", "seconds"])
        for a in self.apps:
            w.writerow([a.app_id, a.tp, a.fp, a.fn, f"{a.seconds:.6f}"])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"apps: {len(self.apps)} ({len(self.failures)} failed)"]
        for title, m in (("library", self.library), ("version", self.version)):
            if m:
                lines.append(f"{title}: tp={m.tp} fp={m.fp} fn={m.fn} "
                             f"precision={m.precision:.4f} recall={m.recall:.4f} f1={m.f1:.4f}"
                             + (" (zero-denominator)" if m.undefined else ""))
        if self.timing:
            t = self.timing
            lines.append(f"seconds/app: q1={t['q1']:.4f} mean={t['mean']:.4f} "
                         f"median={t['median']:.4f} q3={t['q3']:.4f}")
        if self.oracle:
            o = self.oracle
            lines.append(f"oracle agreement: {o['agree']}/{o['rows']}")
        for name, rates in sorted(self.changed_rate.items()):
            lines.append(f"changed rate [{name}]: " + " ".join(f"{k}={v:+.2%}" for k, v in rates.items()))
        return "\n".join(lines)


def _result_row(r: MatchResult) -> dict:
    v = r.verdict
    return {
        "candidate_root": r.candidate_root,
        "verdict": type(v).__name__,
        "entry_id": v.entry_id,
        "similarity": getattr(v, "similarity", None),
        "best_similarity": r.best_similarity,
        "name": r.library_name,
        "version": r.version,
        "name_conflict": r.name_conflict,
    }


def _detect_one(model: AppModel, db: LibraryDatabase, config: DetectConfig) -> tuple[list[dict], float]:
    start = time.perf_counter()
    results, _ = detect(model, db, config)
    return [_result_row(r) for r in results], time.perf_counter() - start


def _load(path: Path) -> AppModel | str:
    try:
        return load_app_bundle(path)
    except (ParseError, ValidationError, OSError) as exc:
        return f"{type(exc).__name__}: {exc}"


def _code_keys(db: LibraryDatabase) -> dict[tuple[str, str], str]:
    keys = {}
    for e in db.entries:
        if e.name and e.profile.version:
            digest = hashlib.sha1("\n".join(s.text for s in e.profile.signatures).encode()).hexdigest()
            keys[(e.name, e.profile.version)] = digest
    return keys


def evaluate(apps: Iterable[AppModel | tuple[str, str]], truth: GroundTruth, db: LibraryDatabase,
             config: BenchConfig | None = None, oracle: Iterable[OracleRow] | None = None,
             label: str = "") -> EvalReport:
    """Detect every app against its own copy of ``db`` and score the results.

    ``apps`` may mix models with ``(app_id, error)`` pairs for inputs that
    failed to load; those are reported as failures.
    """
    config = config or BenchConfig()
    apps = list(apps)
    models = [a for a in apps if isinstance(a, AppModel)]
    if config.jobs > 1 and len(models) > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            done = list(pool.map(_detect_one, models, [db] * len(models), [config.detect] * len(models)))
    else:
        done = [_detect_one(m, db, config.detect) for m in models]
    by_id = {m.app_id: d for m, d in zip(models, done)}

    outcomes = []
    detections: dict[str, set[str]] = {}
    detected_versions: list[tuple[str, str]] = []
    truth_versions: list[tuple[str, str | None]] = []
    for a in apps:
        if not isinstance(a, AppModel):
            outcomes.append(AppOutcome(app_id=a[0], error=a[1]))
            continue
        rows, seconds = by_id[a.app_id]
        names = {
            r["name"] for r in rows
            if r["name"] and (r["verdict"] == "Matched" or config.count_new_libraries)
        }
        want = {t.name for t in truth.get(a.app_id, ())}
        detections[a.app_id] = names
        outcomes.append(AppOutcome(a.app_id, rows, sorted(names), len(names & want),
                                   len(names - want), len(want - names), seconds))
        for r in rows:
            if r["verdict"] == "Matched" and r["name"] and r["version"]:
                detected_versions.append((f"{a.app_id}/{r['name']}", r["version"]))
        for t in truth.get(a.app_id, ()):
            truth_versions.append((f"{a.app_id}/{t.name}", t.version))

    scored = {o.app_id for o in outcomes if not o.error}
    report = EvalReport(apps=outcomes, label=label)
    report.library = library_metrics(detections, {k: v for k, v in truth.items() if k in scored})
    report.timing = timing_summary(o.seconds for o in outcomes if not o.error)
    try:
        keys = {(f"{app}/{n}", v): k for (n, v), k in _code_keys(db).items() for app in scored}
        report.version = Metrics.from_counts(*version_strict_counts(detected_versions, truth_versions, keys))
    except MissingVersionTruth:
        report.version = None

    if oracle is not None:
        report.oracle = oracle_agreement(oracle, outcomes)
    return report


def oracle_agreement(oracle: Iterable[OracleRow], outcomes: Iterable[AppOutcome]) -> dict:
    """Compare detector verdicts per (app, library) with an oracle table."""
    matched = {
        (o.app_id, r["name"]) for o in outcomes for r in o.results if r["verdict"] == "Matched"
    }
    rows = list(oracle)
    mismatches = []
    for row in rows:
        got = "Matched" if (row.app_id, row.library) in matched else "NewLibrary"
        if got != row.predicted:
            mismatches.append({"app_id": row.app_id, "library": row.library,
                               "predicted": row.predicted, "detected": got,
                               "oracle_similarity": row.similarity})
    return {"rows": len(rows), "agree": len(rows) - len(mismatches), "mismatches": mismatches}


def run_benchmark(corpus_dir: str | Path, db: LibraryDatabase, config: BenchConfig | None = None,
                  label: str = "") -> EvalReport:
    """Benchmark every ``*.bundle`` in a corpus directory.

    Truth comes from ``<app>.truth.json`` side files, the optional oracle from
    ``oracle.json``. Apps that fail to load are recorded, not fatal.
    """
    corpus_dir = Path(corpus_dir)
    apps: list = []
    truth: GroundTruth = {}
    for path in corpus_bundles(corpus_dir):
        loaded = _load(path)
        app_id = loaded.app_id if isinstance(loaded, AppModel) else path.name[: -len(".bundle")]
        apps.append(loaded if isinstance(loaded, AppModel) else (app_id, loaded))
        side = path.with_name(path.name[: -len(".bundle")] + ".truth.json")
        if side.exists():
            truth.update(read_truth(side))
    oracle_path = corpus_dir / "oracle.json"
    oracle = read_oracle(oracle_path) if oracle_path.exists() else None
    return evaluate(apps, truth, db, config, oracle, label=label or corpus_dir.name)


def changed_rate_table(baseline: EvalReport, transformed: Mapping[str, EvalReport]) -> dict[str, dict[str, float]]:
    """Changed rate of precision and recall per transform, against ``baseline``."""
    table = {}
    for name, rep in sorted(transformed.items()):
        row = {}
        for metric in ("precision", "recall"):
            base = getattr(baseline.library, metric)
            try:
                row[metric] = changed_rate(getattr(rep.library, metric), base)
            except ZeroBaseline:
                log.warning("%s: baseline %s is 0, changed rate undefined", name, metric)
        table[name] = row
    return table


def changed_rate_csv(table: Mapping[str, Mapping[str, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["transform", "precision", "recall"])
    for name, row in sorted(table.items()):
        w.writerow([name] + [f"{row[k]:.6f}" if k in row else "" for k in ("precision", "recall")])
    return buf.getvalue()


def write_report(report: EvalReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    (out / "report.csv").write_text(report.csv_text(), encoding="utf-8")
    if report.changed_rate:
        (out / "changed_rate.csv").write_text(changed_rate_csv(report.changed_rate), encoding="utf-8")


def load_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

"""Command-line entry point: ``tplhound <subcommand> ...``.

Exit status is 0 on success, 1 when some inputs failed, 2 on usage or
configuration errors. Diagnostics go to stderr (level from ``TPLHOUND_LOG``).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from itertools import repeat
from pathlib import Path

from . import corpus as corp
from .decouple import LINKAGES, DecoupleConfig
from .evaluation import BenchConfig, changed_rate_csv, changed_rate_table, load_report, run_benchmark, write_report
from .matcher import (
    DEFAULT_ALPHA,
    DatabaseError,
    DetectConfig,
    LibraryDatabase,
    add_profile,
    audit,
    detect,
    load_db,
    save_db,
)
from .model import ParseError, ValidationError, load_app_bundle, save_app_bundle
from .signature import EmptyProfile, library_profile

log = logging.getLogger("tplhound")


class ConfigError(Exception):
    pass


def _ratio(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < val <= 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1]: {text}")
    return val


def _fraction(text: str) -> float:
    val = float(text)
    if not 0 <= val <= 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1]: {text}")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tplhound", description="Third-party library detection on app bundles.")
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_flags(p):
        p.add_argument("--hac-threshold", type=_ratio, default=0.15)
        p.add_argument("--linkage", choices=LINKAGES, default="average")
        p.add_argument("--no-augment", action="store_true", help="never add new libraries to the db")
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("db-init", help="create an empty library database")
    p.add_argument("out")
    p.add_argument("--alpha", type=_ratio, default=DEFAULT_ALPHA)

    p = sub.add_parser("db-seed", help="add library bundles to a database")
    p.add_argument("bundles", nargs="+")
    p.add_argument("--db", required=True)
    p.add_argument("--alpha", type=_ratio, default=None, help="alpha when the db file does not exist yet")

    p = sub.add_parser("detect", help="detect libraries in app bundles")
    p.add_argument("bundles", nargs="+")
    p.add_argument("--db", required=True)
    pipeline_flags(p)
    p.add_argument("--out")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--apps", type=int, default=50)
    p.add_argument("--libs", type=int, default=100)
    p.add_argument("--spec", help="SynthSpec JSON for a single app")

    p = sub.add_parser("obfuscate", help="apply a model-level obfuscation to a corpus")
    p.add_argument("transform", choices=("rename", "flatten", "deadcode", "cfo"))
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=_fraction, default=0.1)
    p.add_argument("--mode", choices=("collapse_root", "shuffle"), default="collapse_root")
    p.add_argument("--alpha", type=_ratio, default=DEFAULT_ALPHA)

    p = sub.add_parser("bench", help="run detection over a corpus and score it")
    p.add_argument("corpus")
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", help="report.json of the unobfuscated corpus")
    p.add_argument("--label")
    p.add_argument("--count-new", action="store_true", help="score named new libraries as detections")
    pipeline_flags(p)

    p = sub.add_parser("db-audit", help="list entry pairs at or above alpha")
    p.add_argument("--db", required=True)

    p = sub.add_parser("report", help="summarize reports; with --baseline, tabulate changed rates")
    p.add_argument("reports", nargs="+")
    p.add_argument("--baseline")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--out")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _detect_config(args) -> DetectConfig:
    try:
        dc = DecoupleConfig(hac_threshold=args.hac_threshold, linkage=args.linkage)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return DetectConfig(decouple=dc, augment=not args.no_augment)


def _open_db(path: str, alpha: float | None = None, create: bool = False) -> LibraryDatabase:
    if create and not Path(path).exists():
        return LibraryDatabase(alpha=alpha or DEFAULT_ALPHA)
    try:
        return load_db(path)
    except (OSError, DatabaseError) as exc:
        raise ConfigError(f"cannot load database {path}: {exc}") from None


def cmd_db_init(args) -> int:
    save_db(LibraryDatabase(alpha=args.alpha), args.out)
    return 0


def cmd_db_seed(args) -> int:
    db = _open_db(args.db, args.alpha, create=True)
    failed = 0
    for path in args.bundles:
        try:
            model = load_app_bundle(path)
            name, _, version = model.app_id.partition("@")
            profile = library_profile(model, name=name, version=version or None)
        except (OSError, ParseError, ValidationError, EmptyProfile) as exc:
            log.error("%s: %s", path, exc)
            failed += 1
            continue
        result, db = add_profile(db, profile)
        log.info("%s: %s", path, result.describe())
    save_db(db, args.db)
    return 1 if failed else 0


def _detect_readonly(model, db, config):
    return detect(model, db, config)[0]


def cmd_detect(args) -> int:
    db = _open_db(args.db)
    config = _detect_config(args)
    models, failed = [], 0
    for path in args.bundles:
        try:
            models.append(load_app_bundle(path))
        except (OSError, ParseError, ValidationError) as exc:
            log.error("%s: %s", path, exc)
            failed += 1
    rows = []
    if args.jobs > 1 and not config.augment:
        with ProcessPoolExecutor(args.jobs) as pool:
            for model, results in zip(models, pool.map(_detect_readonly, models, repeat(db), repeat(config))):
                rows.extend((model.app_id, r) for r in results)
    else:
        if args.jobs > 1:
            log.warning("--jobs ignored: augmenting runs go through a single writer")
        for model in models:
            results, db = detect(model, db, config)
            rows.extend((model.app_id, r) for r in results)
    if config.augment:
        save_db(db, args.db)

    if args.format == "json":
        doc = [{"app_id": app, "candidate_root": r.candidate_root, "verdict": type(r.verdict).__name__,
                **asdict(r.verdict), "name": r.library_name, "version": r.version} for app, r in rows]
        text = json.dumps(doc, indent=1) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["app_id", "verdict", "entry_id", "similarity", "name", "version", "candidate_root"])
        for app, r in rows:
            w.writerow([app, type(r.verdict).__name__, r.verdict.entry_id,
                        getattr(r.verdict, "similarity", ""), r.library_name or "", r.version or "",
                        r.candidate_root])
        text = buf.getvalue()
    else:
        text = "".join(f"{app}\t{r.describe()}\n" for app, r in rows)
    _emit(text, args.out)
    return 1 if failed else 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.spec:
        spec = corp.SynthSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        model, truth, _ = corp.compose_app(spec)
        corp.write_corpus(out, [model], truth)
        libs = list(spec.libs)
    else:
        c = corp.synth_corpus(args.apps, args.libs, seed=args.seed)
        corp.write_corpus(out, c.apps, c.truth)
        libs = c.catalog
    (out / "libs").mkdir(parents=True, exist_ok=True)
    for lib in libs:
        bundle = corp.library_bundle(lib)
        save_app_bundle(bundle, out / "libs" / f"{bundle.app_id}.bundle")
    return 0


def cmd_obfuscate(args) -> int:
    if args.transform == "deadcode" and args.fraction >= 1:
        raise ConfigError("deadcode --fraction must be below 1")
    apps, truth = corp.load_corpus(args.corpus)
    out_apps, out_truth, oracle = [], {}, []
    for m in apps:
        if args.transform == "rename":
            new = corp.rename_identifiers(m, args.seed)
        elif args.transform == "flatten":
            new = corp.flatten_packages(m, args.mode, args.seed)
        elif args.transform == "deadcode":
            new, rows = corp.remove_dead_code(m, truth, args.fraction, args.seed, alpha=args.alpha)
            oracle.extend(rows)
        else:
            new, rows = corp.randomize_control_flow(m, truth, args.fraction, args.seed, alpha=args.alpha)
            oracle.extend(rows)
        out_apps.append(new)
        out_truth.update(corp.remap_truth({m.app_id: truth.get(m.app_id, [])}, m, new))
    corp.write_corpus(args.out, out_apps, out_truth, oracle if oracle else None)
    return 0


def cmd_bench(args) -> int:
    db = _open_db(args.db)
    config = BenchConfig(detect=_detect_config(args), count_new_libraries=args.count_new, jobs=args.jobs)
    report = run_benchmark(args.corpus, db, config, label=args.label or "")
    if args.baseline:
        base = load_report(args.baseline)
        report.changed_rate = changed_rate_table(base, {report.label: report})
    write_report(report, args.out)
    sys.stderr.write(report.summary() + "\n")
    return 1 if report.failures else 0


def cmd_db_audit(args) -> int:
    db = _open_db(args.db)
    pairs = audit(db)
    for a, b, sim in pairs:
        print(f"{a}\t{b}\t{sim:.4f}")
    return 1 if pairs else 0


def cmd_report(args) -> int:
    reports = {}
    for path in args.reports:
        rep = load_report(path)
        reports[rep.label or Path(path).parent.name] = rep
    if args.baseline:
        table = changed_rate_table(load_report(args.baseline), reports)
        if args.format == "json":
            text = json.dumps(table, indent=1) + "\n"
        elif args.format == "csv":
            text = changed_rate_csv(table)
        else:
            text = "".join(f"{name}: " + " ".join(f"{k}={v:+.2%}" for k, v in row.items()) + "\n"
                           for name, row in sorted(table.items()))
    elif args.format == "json":
        text = json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=1) + "\n"
    elif args.format == "csv":
        text = "".join(r.csv_text() for r in reports.values())
    else:
        text = "".join(f"== {k}\n{r.summary()}\n" for k, r in reports.items())
    _emit(text, args.out)
    return 0


COMMANDS = {
    "db-init": cmd_db_init,
    "db-seed": cmd_db_seed,
    "detect": cmd_detect,
    "synth": cmd_synth,
    "obfuscate": cmd_obfuscate,
    "bench": cmd_bench,
    "db-audit": cmd_db_audit,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    level = os.environ.get("TPLHOUND_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

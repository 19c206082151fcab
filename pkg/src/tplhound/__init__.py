"""tplhound: third-party library detection for app bundles.

Pipeline: strip the host app through its component transition graph, split
the rest into library candidates by clustering a weighted dependency graph,
fingerprint candidates with CFG signatures, and match them by Jaccard
similarity against a self-augmenting database.
"""
from importlib import resources
from pathlib import Path

from .decouple import (
    Ctg,
    DecoupleConfig,
    DependencyKind,
    EmptyResidue,
    LibraryCandidate,
    PackageDependencyGraph,
    build_ctg,
    build_pdg,
    cluster,
    decouple,
    primary_packages,
    strip_primary,
)
from .matcher import (
    DetectConfig,
    LibraryDatabase,
    Matched,
    MatchResult,
    NewLibrary,
    StaleMatch,
    audit,
    detect,
    find_signature,
    ingest,
    jaccard,
    load_db,
    match_candidate,
    save_db,
    seed_database,
)
from .model import (
    AppModel,
    Cfg,
    ClassInfo,
    ComponentDecl,
    MethodInfo,
    ParseError,
    TransitionEdge,
    ValidationError,
    Violation,
    load_app_bundle,
    save_app_bundle,
    validate,
)
from .signature import CfgSignature, EmptyProfile, LibraryProfile, method_signature, profile_candidate

__version__ = "0.1.0"


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture, e.g. ``fixture_path("emomedia.bundle")``."""
    return Path(str(resources.files(__name__) / "fixtures" / name))

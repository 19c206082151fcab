import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tplhound import fixture_path, load_app_bundle
from tplhound.corpus import read_truth, synth_corpus
from tplhound.decouple import PackageDependencyGraph, DependencyKind
from tplhound.matcher import seed_database


@pytest.fixture(scope="session")
def emomedia():
    return load_app_bundle(fixture_path("emomedia.bundle"))


@pytest.fixture(scope="session")
def emomedia_truth():
    return read_truth(fixture_path("emomedia.truth.json"))


@pytest.fixture(scope="session")
def corpus():
    """The 50-app / 100-library clean corpus."""
    return synth_corpus(n_apps=50, n_libs=100, seed=7)


@pytest.fixture(scope="session")
def small_corpus():
    return synth_corpus(n_apps=8, n_libs=12, seed=3)


@pytest.fixture(scope="session")
def seeded_db(corpus):
    return seed_database(corpus.seed_profiles())


@pytest.fixture(scope="session")
def small_db(small_corpus):
    return seed_database(small_corpus.seed_profiles())


def random_pdg(rng, max_nodes=12, weights=(0, 0, 0, 1, 2, 5, 6, 7, 9, 12, 20)):
    """A random dependency graph over at most ``max_nodes`` classes."""
    n = rng.randint(1, max_nodes)
    names = [f"p{rng.randint(0, 3)}.C{i:02d}" for i in range(n)]
    pdg = PackageDependencyGraph("rand", tuple(sorted(names)))
    w = {}
    for i in range(n):
        for j in range(i + 1, n):
            weight = rng.choice(weights)
            if weight:
                a, b = sorted((names[i], names[j]))
                pdg.contributions[(a, b)] = {DependencyKind.METHOD_CALL: weight}
                w[frozenset((a, b))] = weight
    return pdg, w


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

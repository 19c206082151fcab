"""Seed a database from a synthetic catalog and score detection on clean apps."""
import time

from tplhound.corpus import synth_corpus
from tplhound.evaluation import evaluate
from tplhound.matcher import seed_database

start = time.perf_counter()
corpus = synth_corpus(n_apps=20, n_libs=40, seed=1)
db = seed_database(corpus.seed_profiles())
print(f"{len(corpus.apps)} apps, {len(db)} db entries, built in {time.perf_counter() - start:.2f}s")

report = evaluate(corpus.apps, corpus.truth, db, label="clean")
print(report.summary())

first = report.apps[0]
print(first.app_id, "detected", first.detected)
for row in first.results:
    print("  ", row["verdict"], row["name"], row["similarity"])

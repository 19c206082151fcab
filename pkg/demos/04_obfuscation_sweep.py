"""How detection holds up under each model-level obfuscation."""
from tplhound.corpus import (
    flatten_packages,
    randomize_control_flow,
    remap_truth,
    remove_dead_code,
    rename_identifiers,
    synth_corpus,
)
from tplhound.evaluation import changed_rate_table, evaluate
from tplhound.matcher import seed_database

corpus = synth_corpus(n_apps=20, n_libs=40, seed=4)
db = seed_database(corpus.seed_profiles())
base = evaluate(corpus.apps, corpus.truth, db, label="clean")

reports = {}
for name, fn in [("rename", lambda m: rename_identifiers(m, 1)),
                 ("flatten", lambda m: flatten_packages(m, "collapse_root", 1))]:
    apps = [fn(m) for m in corpus.apps]
    truth = {}
    for before, after in zip(corpus.apps, apps):
        truth.update(remap_truth(corpus.truth, before, after))
    reports[name] = evaluate(apps, truth, db, label=name)

# removal and control-flow noise come with an oracle verdict per library
sweeps = [(f"{label}-{frac}", fn, frac)
          for label, fn in [("deadcode", remove_dead_code), ("cfo", randomize_control_flow)]
          for frac in (0.1, 0.3)]
for name, fn, frac in sweeps:
    apps, rows = [], []
    for m in corpus.apps:
        out, r = fn(m, corpus.truth, frac, seed=2)
        apps.append(out)
        rows += r
    rep = evaluate(apps, corpus.truth, db, oracle=rows, label=name)
    print(f"{name}: oracle agreement {rep.oracle['agree']}/{rep.oracle['rows']}")
    reports[name] = rep

for name, row in changed_rate_table(base, reports).items():
    print(f"{name:>13}: " + "  ".join(f"{k} {v:+.1%}" for k, v in row.items()))

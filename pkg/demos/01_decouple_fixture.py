"""Walk the bundled emomedia app through host elimination and clustering."""
from tplhound import build_ctg, build_pdg, cluster, fixture_path, load_app_bundle, primary_packages, strip_primary

app = load_app_bundle(fixture_path("emomedia.bundle"))
print(app.app_id, "-", len(app.classes), "classes")

# the host is whatever the main activity can reach through component transitions
ctg = build_ctg(app)
for edge in ctg.edges:
    print("  transition", edge.src, "->", edge.dst, f"({edge.api.value})")

prefixes = primary_packages(ctg, app)
print("host prefixes:", sorted(prefixes))

# everything else is library code, whatever package tree it lives in
residue = strip_primary(app, prefixes)
print("residue:", [c.fqname for c in residue.classes])

pdg = build_pdg(residue)
for (a, b), w in sorted(pdg.edges.items()):
    print(f"  W({a}, {b}) = {w}")

for cand in cluster(pdg):
    print("candidate", cand.root_guess or "<none>", sorted(cand.classes))

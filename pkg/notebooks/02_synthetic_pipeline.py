# %% [markdown]
# # End to end on the bundled synthetic corpus
#
# Runs every stage offline with the scripted mock judge and the hash embedder,
# then walks through what each stage left on disk.

# %%
import json
import tempfile
from pathlib import Path

from clusterjudge import store
from clusterjudge.config import Config
from clusterjudge.pipeline import Pipeline

ROOT = Path(__file__).resolve().parents[1] if "__file__" in globals() else Path.cwd().parent
run_dir = Path(tempfile.mkdtemp()) / "run"
cfg = Config.load(ROOT / "configs" / "synthetic.yaml")
pipe = Pipeline(run_dir, cfg)
computed = pipe.run("run")
computed

# %%
manifest = store.read_manifest(run_dir)
for stage, entry in manifest["stages"].items():
    print(stage, entry["status"], entry["output_digest"][:12])

# %% [markdown]
# The clustering grid: the selected configuration and how many clusters it found.

# %%
clusters = pipe.load("03_clusters")
proposal = clusters["proposal"]
print(proposal["config"], proposal["cluster_count"], round(proposal["dbcv"], 4))

# %% [markdown]
# Clusters the judge called incoherent are dropped before merging; their
# documents come back at the assignment stage.

# %%
summaries = pipe.load("04_summaries")
for s in summaries["discarded"]:
    print("discarded", s["cluster_id"], len(s["document_ids"]), "docs")
for s in summaries["kept"][:3]:
    print(s["cluster_id"], s["summary"][:70])

# %%
report = pipe.load("08_report")
print("tau", report["tau"], report["tau_source"])
for method, row in report["methods"].items():
    print(f"{method:10s} C={row['C']:<3d} S={row['S']:.4f} DB={row['DB']:.4f}")

# %%
print(json.dumps(report["assignment_counts"], indent=1))
print("provider cost", report["provider"]["cost"])

# %% [markdown]
# A second call finds every stage current and does nothing.

# %%
Pipeline(run_dir, cfg).run("run")

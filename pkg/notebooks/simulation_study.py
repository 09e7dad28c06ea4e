"""Synthetic study: label recovery and how the cover-type effects tighten as
more unlabeled sites enter the fit.

Run with ``python notebooks/simulation_study.py [workdir]``.  Chains are
shortened so the whole script finishes in a few minutes on one CPU.
"""

# %%
import sys
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from vegcover.artifact import PosteriorArtifact
from vegcover.cli import main

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="vegcover-study-"))
print("working in", work)

# %% Generate the 24 x 24 synthetic landscape with 12 labeled sites per cover type
main(["simulate", "--out", str(work), "--quiet"])
truth = pd.read_csv(work / "truth.csv", dtype={"site_id": str}).set_index("site_id")["true_label"]
labeled = set(pd.read_csv(work / "labels.csv", dtype={"site_id": str})["site_id"])
print("cover-type counts:", truth.value_counts().sort_index().to_dict())

# %% Fit with a growing number of added unlabeled sites
short = ["--set", "mcmc.n_burnin=300", "--set", "mcmc.n_keep=300", "--quiet"]
intervals = {}
for j_add in (0, 20, 60):
    out = f"out_j{j_add}"
    main(["fit", "--config", str(work / "config.yaml"), "--j-add", str(j_add), "--set", f"paths.output={out}", *short])
    B = PosteriorArtifact.load(work / out / "artifact").draws.B[:, :, :-1]
    intervals[j_add] = np.quantile(B, [0.025, 0.5, 0.975], axis=0)

# %% Interval width of each free effect (rows: covariate, columns: cover type)
for j_add, (lo, med, hi) in intervals.items():
    print(f"J_add={j_add:3d} widths\n{np.round(hi - lo, 3)}")

# %% Predict every site from the J_add = 20 fit and score the unlabeled ones
main(["predict", "--config", str(work / "config.yaml"), "--set", "paths.output=out_j20", "--quiet"])
pred = pd.read_csv(work / "out_j20" / "predictions.csv", dtype={"site_id": str}).set_index("site_id")
unl = [s for s in pred.index if s not in labeled]
probs = pred.loc[unl, ["y_prob_1", "y_prob_2", "y_prob_3"]].to_numpy()
print("accuracy:", np.mean(pred.loc[unl, "y_mode"] == truth.loc[unl]))
print("median max probability:", np.median(probs.max(axis=1)))

# %% Sites whose labels remain uncertain
uncertain = pred.loc[unl].assign(max_prob=probs.max(axis=1)).nsmallest(5, "max_prob")
print(uncertain[["y_prob_1", "y_prob_2", "y_prob_3", "y_mode", "n_records"]])

# %% Marginal probability curve for the continuous covariate
main(["curves", "--config", str(work / "config.yaml"), "--set", "paths.output=out_j20", "--covariate", "x_cont",
      "--grid=-2:2:9", "--quiet"])
print(pd.read_csv(work / "out_j20" / "curves_x_cont.csv").pivot(index="value", columns="cover_type",
                                                                 values="mean").round(3))

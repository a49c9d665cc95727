"""
Violent-crime communities: the running example
==============================================

The communities-and-crime table (one row per US community, rates
normalized to [0, 1]) is the classic demonstration: with no prior
beliefs, the single most interesting subgroup is the fifth of
communities with many children of never-married parents, whose violent
crime rate more than doubles the national figure.

The table is not redistributed here. Fetch the UCI "Communities and
Crime" data, join the header names onto the data file, replace '?' with
empty cells, and save it as communities_crime.csv under $SGMINE_DATA_DIR
(the README shows a one-liner). Then:

    python3 demos/crime_case_study.py
"""

import os
import sys
from pathlib import Path

import numpy as np

from sgmine import SearchParams, background_from_dataset, beam_search, load_csv, subgroup_mean
from sgmine.model import apply_location_constraint

data_dir = os.environ.get("SGMINE_DATA_DIR", "")
path = Path(data_dir) / "communities_crime.csv" if data_dir else None
if path is None or not path.is_file():
    sys.exit("communities_crime.csv not found under $SGMINE_DATA_DIR; see the module docstring")

meta = {"state", "county", "community", "communityname", "fold"}
with open(path, encoding="utf-8") as fh:
    header = fh.readline().strip().split(",")
schema_cfg = {
    "targets": ["ViolentCrimesPerPop"],
    "auxiliary": [c for c in header if c in meta],
}
data = load_csv(path, schema_cfg)
overall = float(np.nanmean(data.targets[:, 0]))
print(f"{data.n} communities, overall violent-crime rate {overall:.3f}")

model = background_from_dataset(data)
params = SearchParams(max_depth=1)

# Two iterations of the accept-the-top loop. The first subgroup is the
# headline result; the second shows what becomes interesting once the
# first belief is absorbed.
for step in (1, 2):
    top = beam_search(data, model, params)[0]
    ext = top.pattern.extension
    rate = float(subgroup_mean(data, ext)[0])
    print(
        f"\niteration {step}: {top.pattern.intention.describe(data)}"
        f"\n  {len(ext)} communities ({100 * len(ext) / data.n:.1f}%),"
        f" crime rate {rate:.3f} vs {overall:.3f} overall, si={top.score.si:.2f}"
    )
    model = apply_location_constraint(model, top.pattern)

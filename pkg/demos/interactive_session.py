"""
The interactive session protocol, scripted
==========================================

The web client and the CLI both drive the same session object: mine a
ranking, inspect a candidate's detail view, accept it, then mine the
follow-up spread for the subgroup just accepted. This script walks that
protocol once and finishes with the save/load/replay round trip that
makes sessions portable.

    python3 demos/interactive_session.py
"""

import tempfile
from pathlib import Path

import numpy as np

from sgmine import (
    DatasetRef,
    SearchParams,
    Session,
    assimilate_choice,
    load_session,
    mine_next,
    pattern_detail,
    save_session,
)
from sgmine.session import replay_model

session = Session.create(DatasetRef("synthetic", seed=2))
params = SearchParams(max_depth=2)

# Step 1: mine location candidates under the untouched background.
candidates = mine_next(session, params=params)
print(f"mined {len(candidates)} location candidates; top 3:")
for c in candidates[:3]:
    print(f"  [{c.id[:8]}] si={c.score.si:7.2f}  {c.pattern.intention.describe(session.dataset)}")

# Step 2: the detail view is what a reviewer sees before deciding. Per
# target attribute it compares the model's expected subgroup mean (with
# a central interval) against the observed one.
detail = pattern_detail(session, candidates[0].id)
print(f"\ndetail of {detail.description!r} covering {detail.coverage} rows:")
for att in detail.attributes:
    print(
        f"  {att.name}: expected {att.expected_mean:+.3f}"
        f" [{att.ci_low:+.3f}, {att.ci_high:+.3f}], observed {att.observed_mean:+.3f}"
    )

# Step 3: accept it. The session records the update cost.
timing = assimilate_choice(session, candidates[0].id)
print(f"\naccepted in {timing.seconds * 1e3:.1f} ms ({timing.rounds} convergence rounds)")

# Step 4: the spread follow-up. Mining kind="spread" optimizes a unit
# direction for the subgroup accepted a moment ago and scores the
# projected variance pattern.
spread = mine_next(session, kind="spread")[0]
w = spread.pattern.direction
print(f"spread direction ({w[0]:+.3f}, {w[1]:+.3f}), si={spread.score.si:.2f}")
assimilate_choice(session, spread.id)

# Step 5: persistence. A session file stores the dataset reference and
# the assimilated history; replaying the history from scratch lands on
# the same belief state.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "session.json"
    save_session(session, path)
    loaded = load_session(path)
    replayed = replay_model(loaded)

drift = max(
    float(np.max(np.abs(a.mu - b.mu)))
    for a, b in zip(session.model.blocks, replayed.blocks)
)
print(f"\nsaved, reloaded, replayed: {len(loaded.assimilated)} patterns,"
      f" max block-mean drift {drift:.2e}")

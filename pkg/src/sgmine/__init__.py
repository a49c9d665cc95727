"""Interactive subgroup discovery on real-valued targets.

Subgroups are ranked by how surprising their target statistics are under an
evolving Gaussian belief model, normalized by how much it costs to read them.
Assimilating a pattern updates the model so the next round surfaces something
genuinely new.
"""

from .data import (
    AttributeSchema,
    Condition,
    DataError,
    Dataset,
    Extension,
    Intention,
    Kind,
    Op,
    Role,
    SchemaError,
    evaluate_intention,
    flip_noise,
    generate_synthetic,
    load_csv,
    subgroup_mean,
    subgroup_spread,
)
from .model import (
    AssimilationResult,
    BackgroundModel,
    GaussianBlock,
    LocationPattern,
    ModelError,
    SpreadPattern,
    apply_location_constraint,
    apply_spread_constraint,
    assimilate,
    background_from_dataset,
    expected_spread,
    init_background,
    mean_marginal,
    refine_blocks,
)
from .scoring import (
    Chi2ComboParams,
    DlParams,
    ScoreBreakdown,
    chi2_combo_params,
    description_length,
    ic_location,
    ic_spread,
    si_location,
    si_spread,
)
from .search import RankedPattern, SearchParams, beam_search, candidate_conditions, evaluate_candidate
from .session import (
    DatasetRef,
    Session,
    assimilate_choice,
    load_session,
    mine_next,
    pattern_detail,
    save_session,
)
from .spreadopt import (
    DirectionResult,
    optimize_direction,
    optimize_direction_2sparse,
    scan_directions,
    spread_si_gradient,
)

__version__ = "0.1.0"

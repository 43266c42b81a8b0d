"""Multi-view information-theoretic co-clustering with linked-feature matching."""

from .errors import (
    AlignmentError,
    CoclustError,
    DegenerateInputError,
    FormatError,
    InvalidInputError,
    NormalizationError,
    SmoothingError,
)
from .itcc import ItccConfig, ItccResult, init_assignments, itcc_fit
from .matching import Permutation, matching_kl, solve_permutation
from .metrics import ari, ch_index, contingency_table, nmi
from .prob import (
    AggregatedDistribution,
    ClusterAssignment,
    JointDistribution,
    aggregate,
    col_decomposed_loss,
    kl_divergence,
    loss_mutual_information,
    mutual_information,
    normalize_to_joint,
    q_distribution,
    row_decomposed_loss,
)
from .scicml import (
    MultiViewModel,
    ScicmlConfig,
    ScicmlResult,
    cell_update_cost,
    feature_update_cost,
    scicml0_fit,
    scicml_fit,
    total_objective,
)
from .synth import SynthSpec, SynthTruth, generate

__version__ = "0.1.0"

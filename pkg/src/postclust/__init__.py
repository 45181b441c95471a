"""Post-clustering inference for one variable between two estimated clusters.

Three tests account for the clustering step: a selective test conditioning on
the clustering event, its merged extension across intervening clusters, and
a dip-based multimodality test.
"""

__version__ = "0.1.0"

from postclust.clustering import (  # noqa: E402
    Dendrogram,
    FixedClusterer,
    Partition,
    WardClusterer,
    clusters_preserved,
    cut,
    euclidean_distance_matrix,
    ward_linkage,
)
from postclust.dataset import DataError, DataMatrix, drop_incomplete_rows, load_csv, zscale  # noqa: E402
from postclust.dip import DipResult, dip_p_value, dip_statistic, dip_test_between  # noqa: E402
from postclust.harness import ScenarioConfig, SimulationReport, ks_to_uniform, run_scenario  # noqa: E402
from postclust.merging import (  # noqa: E402
    BetweenSet,
    adjacent_pairs,
    between_set,
    harmonic_merge,
    merged_selective_p_value,
    variance_path,
)
from postclust.selective import (  # noqa: E402
    ContrastVector,
    PValueResult,
    contrast_vector,
    perturb_column,
    selective_p_value,
    t_test_p_value,
    test_statistic,
    variance_pair,
)

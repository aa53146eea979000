"""K-means as a disjunctive program: heuristics, exact solves and partition bounds."""
from .bounds import (LowerBound, SubproblemPartition, det_partition, gap_closed, kmeans_lower_bound,
                     rand_partition)
from .core import Clustering, KMeansProblem, lloyd
from .exact import ExactResult, ExactStatus, exact_kmeans
from .export import MIQCPExport, export_miqcp, pairwise_max, parse_stats

__all__ = [
    "Clustering", "ExactResult", "ExactStatus", "KMeansProblem", "LowerBound", "MIQCPExport",
    "SubproblemPartition", "det_partition", "exact_kmeans", "export_miqcp", "gap_closed",
    "kmeans_lower_bound", "lloyd", "pairwise_max", "parse_stats", "rand_partition",
]

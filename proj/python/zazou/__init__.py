"""Hierarchical p-value correction on an ultrametric tree."""

from ._zazou import (
    Tree,
    bh_adjust,
    by_adjust,
    correct,
    fdr_threshold,
    normal_cdf,
    normal_quantile,
    p_to_z,
    random_tree,
    wilcoxon_test,
)

__all__ = [
    "Tree",
    "bh_adjust",
    "by_adjust",
    "correct",
    "fdr_threshold",
    "normal_cdf",
    "normal_quantile",
    "p_to_z",
    "random_tree",
    "wilcoxon_test",
]

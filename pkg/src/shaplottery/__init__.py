"""Audit toolkit for explanation disagreement among prediction-equivalent models.

Trains rosters of tree, linear, and neural classifiers, computes Shapley
attributions with exact and sampled engines, and reports lottery rates,
agreement gaps, and per-instance reliability scores.
"""

__version__ = "0.1.0"

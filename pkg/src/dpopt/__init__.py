"""Differentially private stochastic optimization for approximate stationary
points: empirical and population, non-convex and convex, full-dimensional and
low-rank GLM, with exact noise calibration and sample accounting."""

from . import core, glm_jl, harness, privacy, recursive_reg, spiderboost, tree_spider

__version__ = "0.1.0"

__all__ = ["core", "privacy", "spiderboost", "tree_spider", "recursive_reg",
           "glm_jl", "harness", "__version__"]

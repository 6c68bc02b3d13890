"""
Seasonal Analysis Modules
Model core, field synthesis, mutant game, DP oracle, homogeneous reduction
and population simulation for the seasonal consumer-resource model.
"""

__version__ = "1.0.0"

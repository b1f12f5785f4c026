"""Distributed multi-object tracking over simulated sensor networks.

Labeled random-finite-set filters (marginalized delta-GLMB and LMB) with
Gaussian-mixture state densities, Kullback-Leibler-average fusion, consensus
averaging over a sensor graph, and a Monte-Carlo evaluation harness with
OSPA scoring.
"""

__version__ = "0.1.0"

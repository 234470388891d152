"""
treesliced - nonlinear tree-sliced Wasserstein distances and gradient flows.
"""

__version__ = "0.1.0"

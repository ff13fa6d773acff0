"""
Private QNN for Probabilistic Optimal Power Flow
Differentially private variational quantum circuits trained on branch-flow OPF
solutions of radial distribution grids, with a classical MLP baseline
"""

__version__ = "0.2.0"

"""
wavelab
Numerical laboratory for Hamiltonian perturbations of nonlinear wave equations
"""

__version__ = "0.3.0"

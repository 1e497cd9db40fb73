"""Inverse chance-constrained DC optimal power flow.

Finds the largest security level along a direction for which a Gaussian
chance-constrained DC-OPF stays feasible, using a slack surrogate whose dual
variables give the derivative of its optimal value.
"""

__version__ = "0.1.0"

"""Numerical solver and verification harness for complex Hessian-quotient
Dirichlet problems on Hermitian domains."""

__version__ = "0.1.0"

from hessquot.kernels import BACKEND

__all__ = ["BACKEND", "__version__"]

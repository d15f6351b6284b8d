"""Numerical verification lab for regularized normalized p(x)-Laplace problems.

Submodules (import them directly; this package root stays import-light so the
command line can configure thread pools before numpy loads):

- ``expressions``: parsed arithmetic with exact differentiation
- ``fields``: grids, sampled fields, mollification, balls, cutoffs
- ``diffops``: discrete derivatives and the stretched-gradient calculus
- ``constants``: explicit estimate constants
- ``identities``: checkers for the underlying algebraic identities
- ``solver``: frozen-coefficient Picard solver and eps continuation
- ``audits``: pointwise/integral estimate audits and the delta search
- ``cli``: configuration-driven command line front end
"""

__version__ = "0.1.0"

__all__ = [
    "audits",
    "cli",
    "config",
    "constants",
    "diffops",
    "expressions",
    "fields",
    "fixtures",
    "identities",
    "solver",
]

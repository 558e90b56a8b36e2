"""
effectfuse package.

Bayesian effect fusion for categorical predictors in linear regression: a sparse
finite normal-mixture prior on level effects, Gibbs sampling, label-invariant
partition selection, flat-prior refits and a reproducible simulation harness.
"""

__all__ = ["__version__", "main"]
__version__ = "0.3.0"


def main() -> int:
    from effectfuse.main import main as _main

    return _main()

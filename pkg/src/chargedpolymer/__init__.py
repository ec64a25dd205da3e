"""Charged random-walk polymers on Z^d.

Energy ``H_n = sum_{j<k} w_j w_k 1{S_j = S_k}`` and self-intersection local
time ``Q_n``: exact rational moments for short walks, lattice Green's
function constants, and reproducible Monte Carlo checks of their limit laws.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .lattice_walk import ChargeModel, WalkModel, make_walk  # noqa: E402

__all__ = ["ChargeModel", "WalkModel", "make_walk", "__version__"]

"""Landau-de Gennes Q-tensor gradient-flow solvers for balls, discs and radial reductions."""
import numba as _nb

# the bundled TBB is too old for numba; OpenMP avoids a warning on first use
if _nb.config.THREADING_LAYER == "default":
    _nb.config.THREADING_LAYER = "omp"

from .ldg_model import Parameters, preset  # noqa: E402
from .qtensor import QTensor  # noqa: E402

__all__ = ["Parameters", "QTensor", "preset"]
__version__ = "0.1.0"

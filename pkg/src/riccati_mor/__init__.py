"""Model order reduction toolkit for algebraic Riccati equations and LQR design.

Four strategies for large sparse LQR instances: proper orthogonal
decomposition and balanced truncation (reduce the system, then solve), and
Galerkin / Petrov-Galerkin adaptive rational Krylov iterations (reduce while
solving). Dense matrix-equation kernels run on a compiled extension with a
pure numpy fallback selected at import.
"""

__version__ = "0.1.0"

from .kernels import backend_name
from .krylov import gark, pgark
from .metrics import gain_error, h2_error, h2_norm, lift_gain, relative_residual
from .problems import PdeConfig, Rect, StateSpaceSystem, assemble_system, eval_transfer
from .reduction import bt_basis, pod_basis, reduce
from .snapshots import integrate_adjoint

__all__ = [
    "__version__",
    "backend_name",
    "PdeConfig",
    "Rect",
    "StateSpaceSystem",
    "assemble_system",
    "eval_transfer",
    "integrate_adjoint",
    "pod_basis",
    "bt_basis",
    "reduce",
    "gark",
    "pgark",
    "relative_residual",
    "lift_gain",
    "gain_error",
    "h2_norm",
    "h2_error",
]

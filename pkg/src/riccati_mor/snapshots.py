"""Snapshot trajectories of the adjoint system for POD basis construction."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["SnapshotSet", "integrate_adjoint"]


@dataclass
class SnapshotSet:
    """State snapshots (columns) with their time stamps."""

    states: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        if self.states.shape[1] != len(self.times):
            raise ValueError("snapshot count must match time stamp count")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("snapshots contain non-finite entries")

    @property
    def count(self):
        return self.states.shape[1]


def integrate_adjoint(sys, horizon=1.0, steps=50):
    """Time-step ``x' = A.T x`` from each output functional of the system.

    One implicit Euler trajectory per row of ``C``, started at the matching
    column of ``C.T``; all trajectories (initial states included) are
    concatenated column-wise, giving ``p * (steps + 1)`` snapshots.

    Implicit Euler is unconditionally stable, so the stiff diffusion modes
    decay monotonically for any step size.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    n, p = sys.n, sys.p
    dt = horizon / steps
    stepper = (sp.identity(n, format="csc") - dt * sys.a.T).tocsc()
    try:
        lu = spla.splu(stepper)
    except RuntimeError as exc:
        raise ValueError("implicit Euler matrix is singular") from exc

    blocks = []
    times = []
    t_grid = dt * np.arange(steps + 1)
    for i in range(p):
        x = sys.c[i].astype(float).copy()
        traj = np.empty((n, steps + 1))
        traj[:, 0] = x
        for k in range(1, steps + 1):
            x = lu.solve(x)
            if not np.all(np.isfinite(x)):
                raise ValueError("implicit Euler produced non-finite state")
            traj[:, k] = x
        blocks.append(traj)
        times.append(t_grid)
    return SnapshotSet(states=np.hstack(blocks), times=np.concatenate(times))

"""PDE-derived LQR test problems on uniform grids.

Assembles the sparse finite-difference operator for a 2D diffusion or
convection-diffusion equation with zero Dirichlet boundary, together with an
indicator-actuator input map and a rectangle-rule averaging output map.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import RegionError, SpectrumError

__all__ = [
    "Rect",
    "PdeConfig",
    "Grid",
    "StateSpaceSystem",
    "assemble_system",
    "eval_transfer",
]


@dataclass(frozen=True)
class Rect:
    """Axis-aligned closed rectangle [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    def contains(self, x, y):
        tol = 1e-12
        return (
            (x >= self.x0 - tol)
            & (x <= self.x1 + tol)
            & (y >= self.y0 - tol)
            & (y <= self.y1 + tol)
        )

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def encloses(self, other):
        return (
            other.x0 >= self.x0 - 1e-12
            and other.x1 <= self.x1 + 1e-12
            and other.y0 >= self.y0 - 1e-12
            and other.y1 <= self.y1 + 1e-12
        )


@dataclass(frozen=True)
class PdeConfig:
    """Parameters of the convection-diffusion control problem.

    ``epsilon`` is the diffusion coefficient, ``gamma`` the convection speed
    (transport in +x and +y). ``omega_b`` hosts the actuator indicator,
    ``omega_c`` the averaged output. Unknowns live on every lattice node of
    ``domain`` with spacing ``dx``; the homogeneous Dirichlet ring sits one
    spacing outside, so a [0,1] edge with dx=0.05 carries 21 unknowns per
    direction. A zero-height domain degenerates to a 1D problem in x.
    """

    epsilon: float
    gamma: float
    domain: Rect
    omega_b: Rect
    omega_c: Rect
    dx: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        for name in ("x", "y"):
            lo = getattr(self.domain, name + "0")
            hi = getattr(self.domain, name + "1")
            extent = hi - lo
            if extent < 0:
                raise ValueError("domain has negative extent in " + name)
            ratio = extent / self.dx
            if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
                raise ValueError("dx does not divide the domain edge in " + name)
        if not self.domain.encloses(self.omega_b):
            raise ValueError("omega_b must lie inside the domain")
        if not self.domain.encloses(self.omega_c):
            raise ValueError("omega_c must lie inside the domain")


@dataclass(frozen=True)
class Grid:
    """Node coordinates of the unknown lattice."""

    xs: np.ndarray
    ys: np.ndarray
    dx: float

    @property
    def shape(self):
        return (len(self.xs), len(self.ys))


@dataclass
class StateSpaceSystem:
    """Sparse LQR instance ``x' = A x + B u``, ``y = C x`` with weight R."""

    a: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    r_weight: np.ndarray
    grid: Grid = None

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def m(self):
        return self.b.shape[1]

    @property
    def p(self):
        return self.c.shape[0]

    def dense_a(self):
        return self.a.toarray()

    def symmetric_part_max_eig(self):
        """Largest eigenvalue of (A + A^T)/2; negative means passive."""
        sym = 0.5 * (self.a + self.a.T).tocsc()
        n = self.n
        if n == 1:
            return float(sym[0, 0])
        if n <= 1500:
            return float(np.linalg.eigvalsh(sym.toarray()).max())
        try:
            # shift-invert at 0 targets the eigenvalue closest to the axis
            val = spla.eigsh(sym, k=1, sigma=0.0, which="LM", return_eigenvectors=False)
        except Exception:
            val = spla.eigsh(sym, k=1, which="LA", return_eigenvectors=False)
        return float(val[0])

    def assert_passive(self):
        top = self.symmetric_part_max_eig()
        if top >= 0:
            raise ValueError(
                "assembled operator is not passive (max symmetric eigenvalue {:.3e})".format(top)
            )


def _axis_nodes(lo, hi, dx):
    count = int(round((hi - lo) / dx)) + 1
    return lo + dx * np.arange(count)


def _second_difference(count, dx):
    """1D Laplacian stencil with Dirichlet ghosts just outside the lattice."""
    main = -2.0 * np.ones(count)
    off = np.ones(count - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / dx**2


def _backward_difference(count, dx):
    """1D upwind first difference (w_i - w_{i-1}) / dx for transport in +x."""
    main = np.ones(count)
    off = -np.ones(count - 1)
    return sp.diags([off, main], [-1, 0], format="csr") / dx


def assemble_system(cfg):
    """Assemble the sparse state-space system for a :class:`PdeConfig`.

    ``A = epsilon * (5-point Laplacian) - gamma * (upwind x + upwind y)``
    on the unknown lattice, ``B`` the indicator of ``omega_b`` (1 at member
    nodes), ``C`` the rectangle-rule average over ``omega_c`` with weight
    dx^2 / |omega_c| per member node, ``R = I``.

    Raises
    ------
    RegionError
        If ``omega_b`` or ``omega_c`` covers no lattice node.
    """
    cfg = cfg if isinstance(cfg, PdeConfig) else PdeConfig(**cfg)
    dx = cfg.dx
    xs = _axis_nodes(cfg.domain.x0, cfg.domain.x1, dx)
    one_dimensional = cfg.domain.y1 == cfg.domain.y0
    ys = np.array([cfg.domain.y0]) if one_dimensional else _axis_nodes(cfg.domain.y0, cfg.domain.y1, dx)
    nx, ny = len(xs), len(ys)

    lap_x = _second_difference(nx, dx)
    conv_x = _backward_difference(nx, dx)
    ix = sp.identity(nx, format="csr")
    if one_dimensional:
        a = cfg.epsilon * lap_x - cfg.gamma * conv_x
    else:
        lap_y = _second_difference(ny, dx)
        conv_y = _backward_difference(ny, dx)
        iy = sp.identity(ny, format="csr")
        # node index = i + j * nx (x fastest)
        lap = sp.kron(iy, lap_x) + sp.kron(lap_y, ix)
        conv = sp.kron(iy, conv_x) + sp.kron(conv_y, ix)
        a = cfg.epsilon * lap - cfg.gamma * conv
    a = a.tocsr()
    a.sort_indices()

    xg, yg = np.meshgrid(xs, ys, indexing="xy")
    xg = xg.reshape(-1)  # index i + j*nx
    yg = yg.reshape(-1)

    in_b = cfg.omega_b.contains(xg, yg)
    if not np.any(in_b):
        raise RegionError("empty actuator/observation region: omega_b covers no node")
    b = in_b.astype(float)[:, None]

    in_c = cfg.omega_c.contains(xg, yg)
    if not np.any(in_c):
        raise RegionError("empty actuator/observation region: omega_c covers no node")
    measure = cfg.omega_c.area if not one_dimensional else (cfg.omega_c.x1 - cfg.omega_c.x0)
    cell = dx**2 if not one_dimensional else dx
    weight = cell / measure if measure > 0 else 1.0 / np.count_nonzero(in_c)
    c = np.where(in_c, weight, 0.0)[None, :]

    return StateSpaceSystem(
        a=a,
        b=b,
        c=c,
        r_weight=np.eye(1),
        grid=Grid(xs=xs, ys=ys, dx=dx),
    )


def eval_transfer(sys, s):
    """Transfer function ``G(s) = C (sI - A)^{-1} B`` via one sparse LU solve.

    Raises :class:`SpectrumError` when ``s`` is numerically an eigenvalue.
    """
    n = sys.n
    shifted = (s * sp.identity(n, dtype=complex) - sys.a).tocsc()
    try:
        lu = spla.splu(shifted)
        x = lu.solve(sys.b.astype(complex))
    except RuntimeError as exc:
        raise SpectrumError("frequency hits spectrum at s = {}".format(s)) from exc
    resid = np.linalg.norm(shifted @ x - sys.b) / max(np.linalg.norm(sys.b), 1e-300)
    if not np.isfinite(resid) or resid > 1e-8:
        raise SpectrumError("frequency hits spectrum at s = {}".format(s))
    return sys.c @ x

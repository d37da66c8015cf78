"""Dense-matrix kernels and the fixed-step integrators shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.linalg

BLOWUP_THRESHOLD = 1e12


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class NumericOverflowError(ArithmeticError):
    """Raised when a matrix function overflows double precision."""


class BlowUpError(ArithmeticError):
    """Raised when an integrated state leaves the finite range.

    Attributes
    ----------
    time : float
        Grid time at which the state first exceeded the threshold.
    """

    def __init__(self, time: float, message: str | None = None):
        self.time = float(time)
        super().__init__(message or f"solution blew up at t = {self.time:.6g}")


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce scalars, vectors and nested lists to a finite 2-D float array."""
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[t_start, t_end]`` with ``steps`` intervals."""

    t_start: float
    t_end: float
    steps: int = 2000

    def __post_init__(self):
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)):
            raise InvalidInputError("grid bounds must be finite")
        if self.t_end <= self.t_start:
            raise InvalidInputError("grid needs t_end > t_start")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidInputError("grid needs an integer steps >= 1")

    @classmethod
    def horizon(cls, T: float, steps: int = 2000) -> "TimeGrid":
        return cls(0.0, float(T), int(steps))

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.steps + 1)


def spectral_norm(m) -> float:
    """Largest singular value of ``m``."""
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def lambda_min_sym(m) -> float:
    """Smallest eigenvalue of the symmetric part ``(m + m^T) / 2``."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"lambda_min_sym needs a square matrix, got {a.shape}")
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def matrix_exp(m, t: float = 1.0) -> np.ndarray:
    """``exp(t * m)`` by scaling and squaring with a Pade approximant."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"matrix_exp needs a square matrix, got {a.shape}")
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = scipy.linalg.expm(float(t) * a)
        except FloatingPointError as exc:
            raise NumericOverflowError("matrix exponential overflowed") from exc
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("matrix exponential overflowed")
    return out


@dataclass(frozen=True)
class Path:
    """Values and time derivatives of an ODE solution at every grid node.

    Off-node values come from cubic Hermite interpolation, which is
    fourth-order accurate and so matches the RK4 error of the solve.
    """

    grid: TimeGrid
    values: np.ndarray
    derivs: np.ndarray
    _mid: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h = self.grid.h
        mid = 0.5 * (self.values[:-1] + self.values[1:]) + h * (self.derivs[:-1] - self.derivs[1:]) / 8.0
        object.__setattr__(self, "_mid", mid)

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def at(self, t: float) -> np.ndarray:
        g = self.grid
        s = (t - g.t_start) / g.h
        if s < -1e-9 or s > g.steps + 1e-9:
            raise InvalidInputError(f"t = {t} outside [{g.t_start}, {g.t_end}]")
        s2 = round(2.0 * s)
        if abs(2.0 * s - s2) < 1e-7:
            if s2 % 2 == 0:
                return self.values[s2 // 2]
            return self._mid[s2 // 2]
        i = min(int(np.floor(s)), g.steps - 1)
        th = s - i
        h00 = 2 * th**3 - 3 * th**2 + 1
        h10 = th**3 - 2 * th**2 + th
        h01 = -2 * th**3 + 3 * th**2
        h11 = th**3 - th**2
        return (h00 * self.values[i] + h10 * g.h * self.derivs[i]
                + h01 * self.values[i + 1] + h11 * g.h * self.derivs[i + 1])

    def nearest(self, t: float) -> np.ndarray:
        g = self.grid
        i = int(round((t - g.t_start) / g.h))
        return self.values[min(max(i, 0), g.steps)]


def _sym(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def _check(x: np.ndarray, t: float, threshold: float):
    # NaN fails the comparison, so one reduction covers both cases
    if x.size and not np.abs(x).max() <= threshold:
        raise BlowUpError(t)


def _rk4(f, y0, t0, h, steps, symmetrize, threshold):
    """Classical RK4 for ``dy/dt = f(t, y)`` from ``t0`` with signed step ``h``."""
    y = np.array(y0, dtype=float)
    ys = np.empty((steps + 1,) + y.shape)
    ds = np.empty_like(ys)
    ys[0] = y
    t = t0
    for n in range(steps):
        k1 = f(t, y)
        if symmetrize:
            k1 = _sym(k1)
        ds[n] = k1
        y2 = y + 0.5 * h * k1
        k2 = f(t + 0.5 * h, _sym(y2) if symmetrize else y2)
        y3 = y + 0.5 * h * k2
        k3 = f(t + 0.5 * h, _sym(y3) if symmetrize else y3)
        y4 = y + h * k3
        k4 = f(t + h, _sym(y4) if symmetrize else y4)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if symmetrize:
            y = _sym(y)
        t = t0 + (n + 1) * h
        _check(y, t, threshold)
        ys[n + 1] = y
    last = f(t, y)
    ds[steps] = _sym(last) if symmetrize else last
    return ys, ds


def integrate_terminal(rhs: Callable[[float, np.ndarray], np.ndarray], terminal, grid: TimeGrid,
                       symmetrize: bool = False, threshold: float = BLOWUP_THRESHOLD) -> Path:
    """Solve ``-dX/dt = rhs(t, X)``, ``X(T) = terminal`` by RK4 in reversed time.

    Parameters
    ----------
    rhs : callable
        Right-hand side evaluated at ``(t, X)``.
    terminal : array_like
        Value at ``grid.t_end``; scalars, vectors and matrices are all accepted.
    grid : TimeGrid
        Uniform grid; the solution is returned at every node in increasing time.
    symmetrize : bool
        Project matrix states onto their symmetric part at every stage.
    threshold : float
        Magnitude above which the solve aborts with :class:`BlowUpError`.

    Returns
    -------
    Path
    """
    x0 = np.array(terminal, dtype=float)
    _check(x0, grid.t_end, threshold)
    # dX/dt = -rhs, integrated with a negative step from T down to t_start
    ys, ds = _rk4(lambda t, x: -rhs(t, x), x0, grid.t_end, -grid.h, grid.steps, symmetrize, threshold)
    return Path(grid, ys[::-1].copy(), ds[::-1].copy())


def integrate_initial(rhs: Callable[[float, np.ndarray], np.ndarray], initial, grid: TimeGrid,
                      symmetrize: bool = False, threshold: float = BLOWUP_THRESHOLD) -> Path:
    """Solve ``dX/dt = rhs(t, X)``, ``X(t_start) = initial`` forward by RK4."""
    x0 = np.array(initial, dtype=float)
    _check(x0, grid.t_start, threshold)
    ys, ds = _rk4(rhs, x0, grid.t_start, grid.h, grid.steps, symmetrize, threshold)
    return Path(grid, ys, ds)


def quadrature_terminal(f_nodes: np.ndarray, f_mids: np.ndarray, terminal, grid: TimeGrid) -> Path:
    """Solve ``-dX/dt = f(t)`` with ``X(T) = terminal`` when ``f`` does not depend on ``X``.

    Each step applies Simpson's rule with the interval midpoint, which is
    exactly what RK4 reduces to for a state-independent right-hand side.
    """
    f_nodes = np.asarray(f_nodes, dtype=float)
    steps = (grid.h / 6.0) * (f_nodes[:-1] + 4.0 * np.asarray(f_mids, dtype=float) + f_nodes[1:])
    tail = np.concatenate([np.cumsum(steps[::-1], axis=0)[::-1], np.zeros((1,) + steps.shape[1:])])
    values = np.asarray(terminal, dtype=float) + tail
    return Path(grid, values, -f_nodes)


def simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson rule along axis 0 of uniformly spaced samples."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] < 2:
        return np.zeros(v.shape[1:])
    return scipy.integrate.simpson(v, dx=h, axis=0)

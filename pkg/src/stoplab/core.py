"""Foundational types: time grids, sampled paths, stopped-atom measures, models.

Paths are stored as samples on a shared grid; the sup norm of a continuous
path is approximated by the max over grid points.  The ground metric on
(state path, noise path, stop time) triples is the 1-product (sum) metric.
All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IncompatibleOperandsError, InvalidArgumentError

WEIGHT_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


class TimeGrid:
    """Discretization 0 = t_0 < t_1 < ... < t_K = T shared by all paths."""

    __slots__ = ("points",)

    def __init__(self, points: Sequence[float]):
        pts = _readonly(np.array(points, dtype=float))
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidArgumentError("grid needs at least two points")
        if pts[0] != 0.0:
            raise InvalidArgumentError("grid must start at 0")
        if not np.all(np.diff(pts) > 0):
            raise InvalidArgumentError("grid points must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("grid points must be finite")
        object.__setattr__(self, "points", pts)

    def __setattr__(self, *a):
        raise AttributeError("TimeGrid is immutable")

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def num_steps(self) -> int:
        """K, the number of steps (grid has K+1 points)."""
        return len(self.points) - 1

    def __len__(self) -> int:
        return len(self.points)

    def mesh(self) -> float:
        return float(np.max(np.diff(self.points)))

    def deltas(self) -> np.ndarray:
        return np.diff(self.points)

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        return f"TimeGrid(K={self.num_steps}, T={self.horizon})"


def make_grid(T: float, K: int) -> TimeGrid:
    """Uniform grid on [0, T] with K steps (mesh T/K)."""
    if not (T > 0):
        raise InvalidArgumentError(f"horizon must be positive, got {T}")
    if not (isinstance(K, (int, np.integer)) and K >= 1):
        raise InvalidArgumentError(f"step count must be a positive integer, got {K}")
    return TimeGrid(np.linspace(0.0, float(T), int(K) + 1))


class PathBundle:
    """A dim-valued path sampled on a grid: (rows, dim) matrix of finite reals."""

    __slots__ = ("values", "dim")

    def __init__(self, values, dim: Optional[int] = None, _checked: bool = False):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise InvalidArgumentError("path values must be a (rows, dim) matrix")
        if dim is not None and v.shape[1] != dim:
            raise InvalidArgumentError(f"declared dim {dim} != data dim {v.shape[1]}")
        if not _checked and not np.all(np.isfinite(v)):
            raise InvalidArgumentError("path values must be finite")
        if not v.flags.writeable:
            pass
        else:
            v = v.copy()
            v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dim", v.shape[1])

    def __setattr__(self, *a):
        raise AttributeError("PathBundle is immutable")

    @classmethod
    def _wrap(cls, values: np.ndarray) -> "PathBundle":
        """Fast path for internally produced, already validated arrays."""
        v = values if not values.flags.writeable else values.copy()
        if v.flags.writeable:
            v.setflags(write=False)
        return cls(v, _checked=True)

    def __len__(self) -> int:
        return self.values.shape[0]

    def check_on_grid(self, grid: TimeGrid):
        if len(self) != len(grid):
            raise IncompatibleOperandsError(
                f"path has {len(self)} rows, grid has {len(grid)} points"
            )


@dataclass(frozen=True)
class StoppedTriple:
    """One atom of an empirical measure: (state prefix, idio noise path, stopped time)."""

    state: PathBundle
    noise: PathBundle
    stop_time: float

    def __post_init__(self):
        if not np.isfinite(self.stop_time) or self.stop_time < 0:
            raise InvalidArgumentError(f"stop time must be finite and >= 0, got {self.stop_time}")


def sup_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max over grid points of the Euclidean norm of the difference."""
    d = a - b
    if d.shape[1] == 1:
        return float(np.max(np.abs(d)))
    return float(np.max(np.sqrt(np.sum(d * d, axis=1))))


def triple_distance(a: StoppedTriple, b: StoppedTriple, grid: TimeGrid) -> float:
    """Ground metric on atoms: sup|state diff| + sup|noise diff| + |stop diff|.

    Both atoms must live on the same grid: noise paths span the full grid and
    state prefixes must have equal length.
    """
    a.noise.check_on_grid(grid)
    b.noise.check_on_grid(grid)
    if len(a.state) != len(b.state) or len(a.state) > len(grid):
        raise IncompatibleOperandsError(
            f"state prefixes have incompatible lengths {len(a.state)} vs {len(b.state)}"
        )
    if a.state.dim != b.state.dim or a.noise.dim != b.noise.dim:
        raise IncompatibleOperandsError("atom dimensions differ")
    return (
        sup_distance(a.state.values, b.state.values)
        + sup_distance(a.noise.values, b.noise.values)
        + abs(a.stop_time - b.stop_time)
    )


class EmpiricalMeasure:
    """Finite atom cloud over (state prefix, noise path, stopped time) triples.

    Backed by columnar arrays for speed; ``atoms`` materializes the per-atom
    view lazily.  Weights are renormalized to sum to one on every
    construction path.
    """

    __slots__ = ("grid", "t_index", "states", "noises", "stops", "weights", "_atoms", "_mean")

    def __init__(
        self,
        grid: TimeGrid,
        t_index: int,
        states: np.ndarray,
        noises: np.ndarray,
        stops: np.ndarray,
        weights: Optional[np.ndarray] = None,
        _checked: bool = False,
    ):
        states = np.asarray(states, dtype=float)
        noises = np.asarray(noises, dtype=float)
        stops = np.asarray(stops, dtype=float)
        n_atoms = states.shape[0]
        if n_atoms == 0:
            raise InvalidArgumentError("empirical measure needs at least one atom")
        if not _checked:
            if states.ndim != 3 or noises.ndim != 3 or stops.ndim != 1:
                raise InvalidArgumentError("expected states (A,j+1,n), noises (A,K+1,d), stops (A,)")
            if noises.shape[0] != n_atoms or stops.shape[0] != n_atoms:
                raise InvalidArgumentError("atom counts disagree across columns")
            if not (0 <= t_index <= grid.num_steps):
                raise InvalidArgumentError(f"t_index {t_index} outside grid")
            if states.shape[1] != t_index + 1:
                raise InvalidArgumentError(
                    f"state prefixes have {states.shape[1]} rows, expected {t_index + 1}"
                )
            if noises.shape[1] != len(grid):
                raise InvalidArgumentError("noise paths must span the full grid")
            if not (np.all(np.isfinite(states)) and np.all(np.isfinite(noises))):
                raise InvalidArgumentError("atom paths must be finite")
            if np.any(stops < 0) or np.any(stops > grid.horizon + WEIGHT_TOL):
                raise InvalidArgumentError("stop coordinates must lie in [0, T]")
        if weights is None:
            w = np.full(n_atoms, 1.0 / n_atoms)
        else:
            w = np.asarray(weights, dtype=float).copy()
            if w.shape != (n_atoms,):
                raise InvalidArgumentError("one weight per atom required")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise InvalidArgumentError("weights must be finite and non-negative")
            total = w.sum()
            if total <= 0:
                raise InvalidArgumentError("weights must have positive sum")
            w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "t_index", int(t_index))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "noises", noises)
        object.__setattr__(self, "stops", stops)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_atoms", None)
        object.__setattr__(self, "_mean", None)

    def __setattr__(self, *a):
        raise AttributeError("EmpiricalMeasure is immutable")

    @classmethod
    def from_atoms(
        cls,
        atoms: Sequence[StoppedTriple],
        grid: TimeGrid,
        weights: Optional[Sequence[float]] = None,
    ) -> "EmpiricalMeasure":
        if len(atoms) == 0:
            raise InvalidArgumentError("empirical measure needs at least one atom")
        prefix_len = len(atoms[0].state)
        states = np.stack([a.state.values for a in atoms])
        noises = np.stack([a.noise.values for a in atoms])
        stops = np.array([a.stop_time for a in atoms], dtype=float)
        return cls(grid, prefix_len - 1, states, noises, stops, weights)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def atoms(self) -> list[StoppedTriple]:
        cached = object.__getattribute__(self, "_atoms")
        if cached is None:
            cached = [
                StoppedTriple(
                    PathBundle._wrap(self.states[i]),
                    PathBundle._wrap(self.noises[i]),
                    float(self.stops[i]),
                )
                for i in range(len(self))
            ]
            object.__setattr__(self, "_atoms", cached)
        return cached

    @property
    def time(self) -> float:
        return float(self.grid.points[self.t_index])

    def state_values(self) -> np.ndarray:
        """Current state of each atom, i.e. the last prefix row: (A, n)."""
        return self.states[:, -1, :]

    def state_mean(self) -> np.ndarray:
        """Weighted mean of current states, cached."""
        cached = object.__getattribute__(self, "_mean")
        if cached is None:
            cached = self.weights @ self.state_values()
            cached.setflags(write=False)
            object.__setattr__(self, "_mean", cached)
        return cached

    def flatten(self) -> np.ndarray:
        """(A, D) matrix of flattened triple coordinates (state, noise, stop)."""
        A = len(self)
        return np.concatenate(
            [
                self.states.reshape(A, -1),
                self.noises.reshape(A, -1),
                self.stops[:, None],
            ],
            axis=1,
        )

    def compatible_with(self, other: "EmpiricalMeasure") -> bool:
        return (
            self.grid == other.grid
            and self.t_index == other.t_index
            and self.states.shape[2] == other.states.shape[2]
            and self.noises.shape[2] == other.noises.shape[2]
        )


CoeffFn = Callable[[float, np.ndarray, EmpiricalMeasure], np.ndarray]
RewardFn = Callable[[float, np.ndarray, EmpiricalMeasure], float]


@dataclass(frozen=True)
class ModelVectorized:
    """Optional batch evaluators operating on (A, ...) stacks of alive particles.

    Shapes: b (A,j+1,n)->(A,n); sigma ->(A,n,d); sigma0 ->(A,n,l);
    f (A,j+1,n)->(A,); g with taus (A,) and full paths (A,K+1,n) -> (A,).
    Must agree with the scalar evaluators; the simulator may use either.
    """

    b: Optional[Callable] = None
    sigma: Optional[Callable] = None
    sigma0: Optional[Callable] = None
    f: Optional[Callable] = None
    g: Optional[Callable] = None


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients and rewards of a stopped interacting diffusion.

    Scalar evaluators receive (t, state prefix as a (j+1, n) array, measure)
    and return arrays of the declared shapes; ``g`` receives the stop time
    and the full frozen path.  ``reward_bound`` is the declared bound on |f|
    and |g| (checked on sampled inputs, not enforced pointwise).
    """

    n: int
    d: int
    l: int
    b: CoeffFn
    sigma: CoeffFn
    sigma0: CoeffFn
    f: RewardFn
    g: RewardFn
    lipschitz_l: float
    moment_p: float = 2.0
    reward_bound: float = float("inf")
    vec: Optional[ModelVectorized] = None
    name: str = ""

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.l < 0:
            raise InvalidArgumentError("need n >= 1, d >= 1, l >= 0")
        if self.moment_p < 2:
            raise InvalidArgumentError("moment order must be >= 2")
        if not (self.lipschitz_l >= 0):
            raise InvalidArgumentError("Lipschitz constant must be >= 0")

    def coefficient_shapes(self) -> dict:
        return {"b": (self.n,), "sigma": (self.n, self.d), "sigma0": (self.n, self.l)}

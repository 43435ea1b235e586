"""Stopping rules and constructive stopping-time transformations.

Policies are immutable and non-anticipative by construction: a query at step
j exposes only prefixes up to j (point accessors raise on lookahead).  Once a
policy stops a particle it is never queried again for that particle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .core import EmpiricalMeasure, TimeGrid
from .errors import ContractViolationError, InvalidArgumentError


class StepContext:
    """One particle's information set at a grid step.

    Accessors expose only indices <= j; asking beyond the current step raises
    ContractViolationError and the largest index ever queried is recorded in
    ``max_queried`` so tests can audit policies.
    """

    __slots__ = ("j", "t", "particle", "measure", "_states", "_noises", "_common",
                 "_x0", "_uniform", "max_queried")

    def __init__(self, j, t, particle, states_row, noises_row, common, x0, measure, uniform):
        self.j = j
        self.t = t
        self.particle = particle
        self.measure = measure
        self._states = states_row
        self._noises = noises_row
        self._common = common
        self._x0 = x0
        self._uniform = uniform
        self.max_queried = 0

    def _guard(self, k: int) -> int:
        k = int(k)
        if k > self.j:
            raise ContractViolationError(
                f"policy queried index {k} beyond current step {self.j}"
            )
        if k > self.max_queried:
            self.max_queried = k
        return k

    @property
    def x0(self) -> np.ndarray:
        return self._x0

    @property
    def state_prefix(self) -> np.ndarray:
        """State path values up to the current step: (j+1, n)."""
        self._guard(self.j)
        return self._states[: self.j + 1]

    @property
    def noise_prefix(self) -> np.ndarray:
        self._guard(self.j)
        return self._noises[: self.j + 1]

    @property
    def common_prefix(self) -> np.ndarray:
        self._guard(self.j)
        return self._common[: self.j + 1]

    def state(self, k: int) -> np.ndarray:
        return self._states[self._guard(k)]

    def noise(self, k: int) -> np.ndarray:
        return self._noises[self._guard(k)]

    def common(self, k: int) -> np.ndarray:
        return self._common[self._guard(k)]

    @property
    def uniform(self) -> float:
        if self._uniform is None:
            raise ContractViolationError("no uniform stream was provisioned for this policy")
        return float(self._uniform)


@dataclass
class StepBatch:
    """All alive particles' information at one step, for vectorized policies."""

    j: int
    t: float
    states: np.ndarray        # (A, j+1, n)
    noises: np.ndarray        # (A, j+1, d)
    common: np.ndarray        # (j+1, l)
    x0: np.ndarray            # (A, n)
    measure: EmpiricalMeasure
    uniforms: Optional[np.ndarray]  # (A,) or None
    indices: np.ndarray       # original particle ids, (A,)


class StoppingPolicy:
    """Base class; subclasses implement ``decide`` and may add a batch path."""

    #: whether the simulator must provision per-(particle, step) uniforms
    needs_uniforms = False

    def decide(self, ctx: StepContext) -> bool:
        raise NotImplementedError

    def decide_batch(self, batch: StepBatch) -> Optional[np.ndarray]:
        """Return a bool array of stop decisions, or None to use the scalar path."""
        return None

    def uniform_entropy(self, sim_policy_seed: int):
        """Entropy used to key this policy's uniform streams."""
        return sim_policy_seed

    def to_config(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} does not serialize")


class ThresholdPolicy(StoppingPolicy):
    """Stop when a feature of (t, state prefix, measure) crosses zero."""

    def __init__(self, score: Callable, params: Sequence[float], score_batch: Callable = None,
                 kind: str = "threshold"):
        self.score = score
        self.params = np.asarray(params, dtype=float)
        self.score_batch = score_batch
        self.kind = kind

    def decide(self, ctx: StepContext) -> bool:
        return bool(self.score(ctx.t, ctx.state_prefix, ctx.measure, self.params) >= 0.0)

    def decide_batch(self, batch: StepBatch) -> Optional[np.ndarray]:
        if self.score_batch is None:
            return None
        return np.asarray(self.score_batch(batch.t, batch.states, batch.measure, self.params)) >= 0.0

    def to_config(self) -> dict:
        return {"kind": self.kind, "params": [float(p) for p in self.params]}


class ExogenousPolicy(StoppingPolicy):
    """First hit of a feature of (X_0, idiosyncratic noise, common noise)."""

    def __init__(self, score: Callable, score_batch: Callable = None, kind: str = "exogenous",
                 params: Sequence[float] = ()):
        self.score = score
        self.score_batch = score_batch
        self.kind = kind
        self.params = np.asarray(params, dtype=float)

    def decide(self, ctx: StepContext) -> bool:
        return bool(self.score(ctx.t, ctx.x0, ctx.noise_prefix, ctx.common_prefix) >= 0.0)

    def decide_batch(self, batch: StepBatch) -> Optional[np.ndarray]:
        if self.score_batch is None:
            return None
        return np.asarray(self.score_batch(batch.t, batch.x0, batch.noises, batch.common)) >= 0.0

    def to_config(self) -> dict:
        return {"kind": self.kind, "params": [float(p) for p in self.params]}


class RandomizedPolicy(StoppingPolicy):
    """Stop when the probability map q meets an external uniform draw.

    The draw comes from a counter-based stream keyed per (particle, step);
    the rule stops iff q >= U, so the stop probability at a query is q.
    """

    needs_uniforms = True

    def __init__(self, q: Callable, q_batch: Callable = None, seed: Optional[int] = None,
                 kind: str = "randomized"):
        self.q = q
        self.q_batch = q_batch
        self.seed = seed
        self.kind = kind

    def _check(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ContractViolationError("probability map returned a value outside [0, 1]")
        return v

    def decide(self, ctx: StepContext) -> bool:
        q = float(self._check(self.q(ctx.t, ctx.state_prefix, ctx.measure)))
        return q >= ctx.uniform

    def decide_batch(self, batch: StepBatch) -> Optional[np.ndarray]:
        if self.q_batch is None or batch.uniforms is None:
            return None
        q = self._check(self.q_batch(batch.t, batch.states, batch.measure))
        return q >= batch.uniforms

    def uniform_entropy(self, sim_policy_seed: int):
        if self.seed is None:
            return sim_policy_seed
        return (int(self.seed), int(sim_policy_seed))

    def to_config(self) -> dict:
        return {"kind": self.kind, "seed": self.seed}


class LookupPolicy(StoppingPolicy):
    """Decision table keyed by (step, discretized feature history).

    ``feature`` maps (t, state prefix, measure) to a feature vector, binned
    against ``edges`` (one ascending edge array per coordinate); missing keys
    fall back to ``default``.
    """

    def __init__(self, feature: Callable, edges: Sequence[np.ndarray], table: dict,
                 default: bool = False, feature_batch: Callable = None):
        self.feature = feature
        self.edges = [np.asarray(e, dtype=float) for e in edges]
        self.table = dict(table)
        self.default = bool(default)
        self.feature_batch = feature_batch

    def _key(self, j: int, values: np.ndarray) -> tuple:
        bins = tuple(
            int(np.searchsorted(self.edges[c], values[c], side="right"))
            for c in range(len(self.edges))
        )
        return (j, bins)

    def decide(self, ctx: StepContext) -> bool:
        values = np.atleast_1d(np.asarray(self.feature(ctx.t, ctx.state_prefix, ctx.measure),
                                          dtype=float))
        return bool(self.table.get(self._key(ctx.j, values), self.default))

    def decide_batch(self, batch: StepBatch) -> Optional[np.ndarray]:
        if self.feature_batch is None:
            return None
        values = np.atleast_2d(np.asarray(self.feature_batch(batch.t, batch.states, batch.measure),
                                          dtype=float))
        out = np.empty(values.shape[0], dtype=bool)
        for i in range(values.shape[0]):
            out[i] = self.table.get(self._key(batch.j, values[i]), self.default)
        return out


def never_stop() -> ExogenousPolicy:
    return ExogenousPolicy(lambda t, x0, w, b: -1.0,
                           score_batch=lambda t, x0, w, b: np.full(len(x0), -1.0),
                           kind="never_stop")


def stop_at_index(k: int) -> ExogenousPolicy:
    """Stop every particle at grid index k (by time comparison on the grid)."""

    def batch(t, x0, w, b):
        return np.full(len(x0), 1.0 if w.shape[1] >= 0 and b.shape[0] - 1 >= k else -1.0)

    pol = ExogenousPolicy(lambda t, x0, w, b: 1.0 if len(w) - 1 >= k else -1.0,
                          score_batch=batch, kind="stop_at_index", params=(k,))
    return pol


def time_threshold(theta: float) -> ThresholdPolicy:
    """Stop at the first grid point with t >= theta."""
    return ThresholdPolicy(
        lambda t, x, m, p: t - p[0],
        params=(theta,),
        score_batch=lambda t, xs, m, p: np.full(xs.shape[0], t - p[0]),
        kind="time_threshold",
    )


def state_threshold(level: float, direction: int = -1) -> ThresholdPolicy:
    """Stop when the first state coordinate crosses ``level``.

    direction=-1 stops when x <= level, +1 when x >= level.
    """
    return ThresholdPolicy(
        lambda t, x, m, p: p[1] * (x[-1, 0] - p[0]),
        params=(level, float(direction)),
        score_batch=lambda t, xs, m, p: p[1] * (xs[:, -1, 0] - p[0]),
        kind="state_threshold",
    )


def discretize_stopping(tau: float, grid: TimeGrid, m: Optional[int] = None) -> float:
    """Project a stop time onto the grid: left endpoint of the cell holding
    (tau + 1/m) ^ T, with the last cell treated as closed.

    Guarantees |result - tau| <= mesh + 1/m.
    """
    if m is None:
        m = grid.num_steps
    if m < 1:
        raise InvalidArgumentError("m must be >= 1")
    if len(grid) != m + 1:
        raise InvalidArgumentError(f"grid has {len(grid)} points, expected m+1 = {m + 1}")
    T = grid.horizon
    if not (0.0 <= tau <= T):
        raise InvalidArgumentError(f"stop time {tau} outside [0, {T}]")
    s = min(tau + 1.0 / m, T)
    if s >= T:
        return float(grid.points[m - 1])
    i = int(np.searchsorted(grid.points, s, side="right")) - 1
    return float(grid.points[i])


def uniform_from_increment(delta, dt: float):
    """Map a Gaussian increment over a window of length dt to Uniform[0,1].

    Returns the standard normal CDF at delta/sqrt(dt); strictly increasing in
    delta.  Accepts scalars or arrays.
    """
    if not (dt > 0):
        raise InvalidArgumentError(f"window length must be positive, got {dt}")
    out = ndtr(np.asarray(delta, dtype=float) / np.sqrt(dt))
    if np.ndim(delta) == 0:
        return float(out)
    return out


def randomize_policy(base, uniform_stream_seed: int) -> RandomizedPolicy:
    """Bind an external uniform stream to a probability map.

    ``base`` is a RandomizedPolicy (or a plain probability map); the result
    stops a particle at a query iff q >= U with U drawn from a counter-based
    stream keyed per (particle, step).
    """
    if isinstance(base, RandomizedPolicy):
        return RandomizedPolicy(base.q, q_batch=base.q_batch, seed=int(uniform_stream_seed),
                                kind=base.kind)
    if callable(base):
        return RandomizedPolicy(base, seed=int(uniform_stream_seed))
    raise InvalidArgumentError("base must be a RandomizedPolicy or a probability map")


def smooth_stopping(tau_path_rule: ExogenousPolicy, grid: TimeGrid, n: int) -> ExogenousPolicy:
    """Continuous-in-spirit approximation of an exogenous first-hit rule.

    Builds the nondecreasing step process that freezes the base rule's
    stop indicator on a uniform n-cell partition of [0, T], adds the ramp
    t/(3T), and stops at the first grid time where the sum reaches 1/2.
    As n grows the returned stop times approach the base rule's.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    T = grid.horizon
    base = tau_path_rule.score

    def score(t, x0, noise_prefix, common_prefix):
        ramp = t / (3.0 * T)
        j = len(noise_prefix) - 1
        if t <= 0.0:
            return ramp - 0.5
        # level-partition point r_i with t in (r_i, r_{i+1}]
        i = int(np.ceil(t * n / T - 1e-12)) - 1
        r_i = i * T / n
        level = 0.0
        if i >= 1:
            # base stop time observed so far; closed indicator 1{tau_base <= r_i}
            for k in range(j + 1):
                t_k = float(grid.points[k])
                if t_k > r_i:
                    break
                if base(t_k, x0, noise_prefix[: k + 1], common_prefix[: k + 1]) >= 0.0:
                    level = 1.0
                    break
        return level + ramp - 0.5

    return ExogenousPolicy(score, kind="smoothed")

"""Dislocation points driven by their mutual repulsion and the external stress.

    x_i' = gamma ( -delta - sigma(t, x_i) + sum_{j != i} (x_i - x_j) / (2s |x_i - x_j|^(2s+1)) )

delta = 0 is the limit system itself, delta > 0 the shifted system whose
solution starts from x_i(0) - delta and bounds it from below.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from .exceptions import ArgumentError, ConvergenceError, NearCollisionError, SingularityError, SolverError
from .frac_operator import as_order
from .stress import StressField

logger = logging.getLogger(__name__)

DEFAULT_GAP_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class ParticleState:
    time: float
    positions: np.ndarray
    s: float
    gamma: float
    delta: float = 0.0

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float).ravel()
        if positions.size == 0:
            raise ArgumentError("at least one particle is required")
        if not np.all(np.isfinite(positions)):
            raise ArgumentError("particle positions must be finite")
        gaps = np.diff(positions)
        if np.any(gaps == 0):
            raise SingularityError(f"coincident particles at {positions[np.flatnonzero(gaps == 0)[0]]}")
        if np.any(gaps < 0):
            raise ArgumentError("particle positions must be sorted increasingly")
        if self.delta < 0:
            raise ArgumentError(f"delta must be >= 0, got {self.delta}")
        if not self.gamma > 0:
            raise ArgumentError(f"mobility gamma must be positive, got {self.gamma}")
        positions.flags.writeable = False
        object.__setattr__(self, 'positions', positions)
        object.__setattr__(self, 's', as_order(self.s).s)

    @classmethod
    def start(cls, positions, s, gamma, delta=0.0, time=0.0):
        """Initial state; with delta > 0 the positions are shifted to x_i - delta"""
        return cls(time, np.asarray(positions, dtype=float) - delta, s, gamma, delta)

    @property
    def n(self):
        return self.positions.size

    @property
    def min_gap(self):
        return float(np.min(np.diff(self.positions))) if self.n > 1 else np.inf

    def moved(self, time, positions):
        return ParticleState(time, positions, self.s, self.gamma, self.delta)


def _separations(positions):
    d = positions[:, None] - positions[None, :]
    off_diagonal = ~np.eye(positions.size, dtype=bool)
    if np.any(d[off_diagonal] == 0):
        raise SingularityError("coincident particles")
    return d, off_diagonal


def interaction(positions, s):
    """sum_{j != i} sign(x_i - x_j) |x_i - x_j|^-2s / (2s)"""
    d, off_diagonal = _separations(positions)
    with np.errstate(divide='ignore'):
        terms = np.sign(d) * np.abs(d) ** (-2.0 * s) / (2.0 * s)
    return np.where(off_diagonal, terms, 0.0).sum(axis=1)


def velocity(state, sigma=None):
    """c_i = x_i'"""
    sigma = sigma or StressField.zero()
    x = state.positions
    return state.gamma * (-state.delta - sigma(state.time, x) + interaction(x, state.s))


def acceleration(state, sigma=None):
    """c_i' obtained by differentiating the velocity along the trajectory"""
    sigma = sigma or StressField.zero()
    x = state.positions
    v = velocity(state, sigma)
    d, off_diagonal = _separations(x)
    with np.errstate(divide='ignore'):
        coupling = np.where(off_diagonal, -np.abs(d) ** (-2.0 * state.s - 1.0), 0.0)
    relative = v[:, None] - v[None, :]
    return state.gamma * (-sigma.dt(state.time, x) - sigma.dx(state.time, x) * v + (coupling * relative).sum(axis=1))


def two_body_gap(gap0, gamma, s, t):
    """Closed-form gap of two free particles: g' = gamma / (s g^2s)"""
    q = 2.0 * s + 1.0
    return (gap0 ** q + gamma * q * np.asarray(t, dtype=float) / s) ** (1.0 / q)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    s: float
    gamma: float
    delta: float
    sigma: StressField = field(default_factory=StressField.zero)
    dense: object = field(default=None, repr=False)
    steps: int = 0

    @property
    def n(self):
        return self.positions.shape[1]

    def state(self, i):
        return ParticleState(float(self.times[i]), self.positions[i], self.s, self.gamma, self.delta)

    def at(self, t):
        """State at any time inside the integration interval (dense output)"""
        if self.dense is None:
            matches = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
            if not matches.size:
                raise ArgumentError(f"trajectory has no dense output and no sample at t={t}")
            return self.state(int(matches[0]))
        return ParticleState(float(t), self.dense(t), self.s, self.gamma, self.delta)

    def velocities(self):
        return np.array([velocity(self.state(i), self.sigma) for i in range(self.times.size)])

    def to_frame(self):
        frame = pd.DataFrame(self.positions, columns=[f'x_{i + 1}' for i in range(self.n)])
        frame.insert(0, 't', self.times)
        return frame


def integrate(state, sigma=None, t_end=1.0, rtol=1e-8, sample_times=None, gap_floor=DEFAULT_GAP_FLOOR,
              method='RK45', atol=None):
    """Adaptive embedded Runge-Kutta trajectory sampled at `sample_times`"""
    sigma = sigma or StressField.zero()
    if not t_end > state.time:
        raise ArgumentError(f"t_end={t_end} must exceed the state time {state.time}")
    if sample_times is None:
        sample_times = np.linspace(state.time, t_end, 11)
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.min() < state.time or sample_times.max() > t_end:
        raise ArgumentError("sample times must lie inside the integration interval")
    if state.n > 1 and state.min_gap < gap_floor:
        raise NearCollisionError(state.time, state.min_gap, gap_floor)
    if atol is None:
        atol = 1e-3 * rtol * max(1.0, float(np.max(np.abs(state.positions))))

    def rhs(t, y):
        return state.gamma * (-state.delta - sigma(t, y) + interaction(y, state.s))

    events = None
    if state.n > 1:
        def near_collision(t, y):
            return np.min(np.diff(y)) - gap_floor
        near_collision.terminal = True
        near_collision.direction = -1
        events = [near_collision]

    solution = solve_ivp(rhs, (state.time, t_end), state.positions, method=method, rtol=rtol, atol=atol,
                         events=events, dense_output=True)
    if solution.status == 1:
        t_hit = float(solution.t_events[0][0])
        gap = float(np.min(np.diff(solution.y_events[0][0])))
        logger.warning(f"Near collision at t={t_hit:.6g}; gaps are expected to grow for aligned dislocations")
        raise NearCollisionError(t_hit, gap, gap_floor)
    if solution.status != 0:
        raise ConvergenceError(f"particle integration failed: {solution.message}")
    if state.n > 1 and np.any(np.diff(solution.y, axis=0) <= 0):
        raise SolverError("particle ordering lost on an accepted step")

    positions = solution.sol(sample_times).T
    logger.info(f"Integrated {state.n} particles to t={t_end} in {solution.t.size - 1} steps ({method}, rtol={rtol:.1e})")
    return Trajectory(times=sample_times, positions=positions, s=state.s, gamma=state.gamma, delta=state.delta,
                      sigma=sigma, dense=solution.sol, steps=solution.t.size - 1)

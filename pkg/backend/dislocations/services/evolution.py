"""Rescaled Peierls-Nabarro evolution

    (v_eps)_t = (1/eps) (L_s v_eps - eps^-2s W'(v_eps) + sigma(t, x))

started from the superposition of N rescaled layers. The nonlocal term is
always explicit; the `imex-reaction` scheme integrates the stiff reaction
v_t = -eps^(-1-2s) W'(v) pointwise over each step (Lie splitting).
"""
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from .exceptions import ArgumentError, ConfigError, InstabilityError, NumericError
from .frac_operator import GridSpec, TailModel, get_operator, TAIL_CONSTANT, TAIL_LAYER
from .stress import StressField

logger = logging.getLogger(__name__)

EXPLICIT = 'explicit'
IMEX_REACTION = 'imex-reaction'
SCHEMES = (EXPLICIT, IMEX_REACTION)

# Slack of the maximum-principle band [-SANITY_SLACK, N + SANITY_SLACK]
SANITY_SLACK = 0.25
# Finest admissible grid spacing, in units of epsilon
MAX_DX_OVER_EPS = 1.0 / 8.0
# Tolerances of the adaptive reaction flow for multi-harmonic potentials
REACTION_RTOL = 1e-10
REACTION_ATOL = 1e-12


@dataclass(frozen=True)
class EvolutionConfig:
    epsilon: float = 0.1
    scheme: str = IMEX_REACTION
    dt_safety: float = 0.9
    margin: float = 20.0
    dx: float = None
    window: tuple = None
    c_stab: float = 1.9
    c_reac: float = 1.9
    tail: str = TAIL_LAYER
    tail_rtol: float = 1e-8
    method: str = 'auto'

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}", key_path='evolution.epsilon')
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme '{self.scheme}'", key_path='evolution.scheme')
        if not (0 < self.dt_safety <= 1):
            raise ConfigError(f"dt_safety must lie in (0, 1], got {self.dt_safety}", key_path='evolution.dt_safety')
        if self.tail not in (TAIL_LAYER, TAIL_CONSTANT):
            raise ConfigError(f"evolution tails are '{TAIL_LAYER}' or '{TAIL_CONSTANT}', got '{self.tail}'",
                              key_path='evolution.tail')


@dataclass(frozen=True, eq=False)
class EvolutionState:
    """Immutable snapshot of v_eps; snapshots may be shared while the run continues"""
    field: object
    time: float
    config: EvolutionConfig
    n_layers: int
    s: float
    potential: object
    dt: float
    steps: int = 0

    @property
    def epsilon(self):
        return self.config.epsilon

    @property
    def x(self):
        return self.field.x

    @property
    def values(self):
        return self.field.values

    def advanced(self, values, dt_taken):
        tail = fit_tail(self.field.x, values, self.field.tail, self.n_layers)
        return replace(self, field=self.field.with_values(values, tail), time=self.time + dt_taken,
                       steps=self.steps + 1)


def fit_tail(x, values, tail, n_layers):
    """Tail with limits 0 and N whose coefficients match the two edge values"""
    if tail.kind != TAIL_LAYER:
        return tail
    p = tail.decay_exponent
    right = (n_layers - values[-1]) * (x[-1] - tail.center) ** p
    left = values[0] * (tail.center - x[0]) ** p
    return tail.with_coefficients(right, left)


def time_step(config, operator, field, potential, s):
    """dt = dt_safety * min(c_stab / lambda_op, c_reac / lambda_reac); imex drops the reaction bound"""
    eps = config.epsilon
    lambda_op = operator.spectral_radius_bound(field) / eps
    bound = config.c_stab / lambda_op
    if config.scheme == EXPLICIT:
        lambda_reac = eps ** (-1.0 - 2.0 * s) * potential.max_curvature()
        bound = min(bound, config.c_reac / lambda_reac)
    return config.dt_safety * bound


def initial_condition(layer, sigma, positions0, epsilon=None, grid=None, config=None):
    """v0(x) = eps^2s sigma(0, x) / beta + sum_i u((x - x_i) / eps)"""
    config = config or EvolutionConfig()
    if epsilon is not None and epsilon != config.epsilon:
        config = replace(config, epsilon=float(epsilon))
    eps = config.epsilon
    sigma = StressField.parse(sigma) if not isinstance(sigma, StressField) else sigma
    positions = np.asarray(positions0, dtype=float).ravel()
    if positions.size == 0 or np.any(np.diff(positions) <= 0):
        raise ArgumentError("initial positions must be non-empty and strictly increasing")
    s = layer.s

    if grid is None:
        dx = config.dx or eps * layer.u.dx
        window = config.window or (positions[0] - config.margin, positions[-1] + config.margin)
        grid = GridSpec.from_window(window, dx)
    if grid.dx > MAX_DX_OVER_EPS * eps:
        raise ConfigError(f"grid spacing {grid.dx} does not resolve the layer width (needs dx <= eps/8 = {eps / 8})",
                          key_path='evolution.dx')
    if grid.x_min > positions[0] or grid.x_max < positions[-1]:
        raise ConfigError("evolution window must contain every initial position", key_path='evolution.window')

    x = grid.points()
    values = eps ** (2.0 * s) / layer.beta * sigma(0.0, x)
    for xi in positions:
        values = values + layer.evaluate((x - xi) / eps)

    n = positions.size
    center = float(np.mean(positions))
    if config.tail == TAIL_LAYER and n == 1 and sigma.is_zero:
        # a single rescaled layer keeps the layer's own tail: each power x^-p scales by eps^p
        layer_tail = layer.u.tail
        (right, left, p), (correction, left_correction, q) = layer_tail.power_terms()
        tail = TailModel.layer(0.0, 1.0, eps ** p * right, p, center=center, left_coefficient=eps ** p * left,
                               correction=eps ** q * correction, left_correction=eps ** q * left_correction,
                               correction_exponent=q)
    elif config.tail == TAIL_LAYER:
        tail = fit_tail(x, values, TailModel.layer(0.0, n, 0.0, 2.0 * s, center=center), n)
    else:
        tail = TailModel.constant(0.0, n, center=center)
    field = grid.function(values, tail)

    operator = get_operator(s, config.tail_rtol, config.method)
    dt = time_step(config, operator, field, layer.potential, s)
    logger.info(f"Initial condition: N={n}, eps={eps}, n={grid.n}, dx={grid.dx:.4g}, dt={dt:.4e}, "
                f"scheme={config.scheme}")
    return EvolutionState(field=field, time=0.0, config=config, n_layers=n, s=s, potential=layer.potential, dt=dt)


def time_derivative(state, sigma=None, time=None):
    """(1/eps)(L_s v - eps^-2s W'(v) + sigma) on the grid"""
    sigma = sigma or StressField.zero()
    eps, s = state.epsilon, state.s
    t = state.time if time is None else time
    operator = get_operator(s, state.config.tail_rtol, state.config.method)
    v = state.values
    return (operator.apply(state.field) - eps ** (-2.0 * s) * state.potential.dW(v) + sigma(t, state.x)) / eps


def integrate_reaction(values, potential, rate, dt):
    """Pointwise flow of v_t = -rate W'(v) over dt

    Exact for a single harmonic: tan(pi r) decays like exp(-rate beta t) with
    r = v - round(v); otherwise an adaptive DOP853 solve of the decoupled system.
    """
    if potential.is_single_harmonic:
        wells = np.round(values)
        r = values - wells
        return wells + np.arctan(np.tan(np.pi * r) * math.exp(-rate * potential.beta * dt)) / np.pi
    values = np.asarray(values, dtype=float)
    solution = integrate.solve_ivp(lambda t, v: -rate * potential.dW(v), (0.0, dt), values,
                                   method='DOP853', rtol=REACTION_RTOL, atol=REACTION_ATOL)
    if not solution.success:
        raise NumericError(f"reaction flow failed over dt={dt:.3e}: {solution.message}")
    return solution.y[:, -1]


def step(state, sigma=None, dt=None):
    """One time step at the current macroscopic time"""
    sigma = sigma or StressField.zero()
    dt = state.dt if dt is None else dt
    eps, s = state.epsilon, state.s
    operator = get_operator(s, state.config.tail_rtol, state.config.method)
    v = state.values
    drive = operator.apply(state.field) + sigma(state.time, state.x)

    if state.config.scheme == EXPLICIT:
        new = v + dt / eps * (drive - eps ** (-2.0 * s) * state.potential.dW(v))
    else:
        new = integrate_reaction(v + dt / eps * drive, state.potential, eps ** (-1.0 - 2.0 * s), dt)

    lower, upper = -SANITY_SLACK, state.n_layers + SANITY_SLACK
    if not np.all(np.isfinite(new)) or new.min() < lower or new.max() > upper:
        peak = float(np.nanmax(np.abs(new))) if np.any(np.isfinite(new)) else float('inf')
        raise InstabilityError(dt, peak, time=state.time + dt)
    return state.advanced(new, dt)


def run(state, sigma=None, t_end=1.0, sample_times=None):
    """Iterate step() up to t_end, landing exactly on every sample time"""
    sigma = sigma or StressField.zero()
    if sample_times is None:
        sample_times = np.linspace(state.time, t_end, 11)
    sample_times = np.sort(np.asarray(sample_times, dtype=float))
    if sample_times[0] < state.time - 1e-12 or sample_times[-1] > t_end + 1e-12:
        raise ArgumentError("sample times must lie inside [t0, t_end]")

    samples = []
    current = state
    for target in sample_times:
        while target - current.time > 1e-12 * max(1.0, abs(target)):
            current = step(current, sigma, dt=min(current.dt, target - current.time))
        samples.append(current)
        logger.debug(f"eps={current.epsilon}: sampled t={target:.4g} after {current.steps} steps")
    while t_end - current.time > 1e-12 * max(1.0, abs(t_end)):
        current = step(current, sigma, dt=min(current.dt, t_end - current.time))
    logger.info(f"Evolution eps={state.epsilon} reached t={current.time:.6g} in {current.steps} steps")
    return samples


def _grows(state, c, trial_steps, perturbation):
    """True when a checkerboard perturbation is amplified with step constant c"""
    operator = get_operator(state.s, state.config.tail_rtol, state.config.method)
    config = replace(state.config, dt_safety=1.0, c_stab=c, c_reac=c)
    dt = time_step(config, operator, state.field, state.potential, state.s)
    signs = (-1.0) ** np.arange(state.field.n)
    trial = replace(state, config=config, dt=dt,
                    field=state.field.with_values(state.values + perturbation * signs))

    def amplitude(st):
        return abs(float(np.mean(np.diff(st.values, 2) * signs[1:-1])))

    start = amplitude(trial)
    try:
        for _ in range(trial_steps):
            trial = step(trial)
    except InstabilityError:
        return True
    return amplitude(trial) > 2.0 * start


def calibrate_stability(layer, epsilon=0.2, scheme=EXPLICIT, bracket=(0.1, 4.0), tol=0.05, trial_steps=50,
                        perturbation=1e-2):
    """Largest stable step constant (relative to the Gershgorin bound) by bisection"""
    config = EvolutionConfig(epsilon=epsilon, scheme=scheme, margin=5.0)
    state = initial_condition(layer, StressField.zero(), [0.0], config=config)
    lo, hi = bracket
    if _grows(state, lo, trial_steps, perturbation):
        raise ArgumentError(f"checkerboard perturbation unstable already at c={lo}")
    if not _grows(state, hi, trial_steps, perturbation):
        logger.warning(f"Perturbation still stable at c={hi}; returning the bracket end")
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _grows(state, mid, trial_steps, perturbation):
            hi = mid
        else:
            lo = mid
    logger.info(f"Calibrated {scheme} step constant: {lo:.3f} (eps={epsilon})")
    return lo

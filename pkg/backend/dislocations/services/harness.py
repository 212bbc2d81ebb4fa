"""Measurable checks of the sharp-interface limit and of the corrected ansatz.

ConvergenceReport compares the half-level crossings of v_eps with the
particle trajectory for a sequence of eps. SupersolutionReport evaluates the
residual I_eps of the corrected multi-layer ansatz built on the shifted
particle system (delta > 0).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from .exceptions import AcceptanceError, ArgumentError, ConfigError, TopologyError
from .frac_operator import GridFunction, GridSpec, TailModel, get_operator
from .layer_solver import theta_exponent
from .particle_dynamics import ParticleState, acceleration, integrate, velocity
from .stress import StressField

logger = logging.getLogger(__name__)

PROFILE = 'profile'
QUADRATURE = 'quadrature'
SUPERSOL_MODES = (PROFILE, QUADRATURE)


def half_level_crossings(x, values, n_layers, epsilon=None, time=None):
    """Upcrossings of the levels i - 1/2, i = 1..N, by linear interpolation

    The leftmost bracket v[j] < level <= v[j+1] is used; a level crossed
    upwards more than once, or not at all, is a topology error.
    """
    x = np.asarray(x)
    values = np.asarray(values)
    crossings = np.empty(n_layers)
    total = 0
    for i in range(1, n_layers + 1):
        level = i - 0.5
        brackets = np.flatnonzero((values[:-1] < level) & (values[1:] >= level))
        total += brackets.size
        if brackets.size == 0:
            raise TopologyError(total, n_layers, epsilon, time)
        j = brackets[0]
        fraction = (level - values[j]) / (values[j + 1] - values[j])
        crossings[i - 1] = x[j] + fraction * (x[j + 1] - x[j])
    if total != n_layers:
        raise TopologyError(total, n_layers, epsilon, time)
    return crossings


def bulk_l1_error(x, values, positions, kappa):
    """int |v - sum H(x - x_i)| over the points farther than kappa from every x_i"""
    x = np.asarray(x)
    steps = (x[:, None] >= positions[None, :]).sum(axis=1)
    distance = np.min(np.abs(x[:, None] - positions[None, :]), axis=1)
    mask = distance >= kappa
    dx = x[1] - x[0]
    return float(dx * np.sum(np.abs(np.asarray(values) - steps)[mask]))


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    epsilons: np.ndarray
    times: np.ndarray
    crossing_errors: np.ndarray
    l1_bulk_errors: np.ndarray
    monotone_in_epsilon: bool
    crossings: dict = field(default_factory=dict, repr=False)
    kappa: float = 0.5

    @property
    def max_errors(self):
        """Per-eps maximum crossing error over all sample times"""
        return self.crossing_errors.max(axis=1)

    @property
    def final_errors(self):
        return self.crossing_errors[:, -1]

    def to_dict(self):
        return {
            'epsilons': self.epsilons.tolist(),
            'times': self.times.tolist(),
            'crossing_errors': self.crossing_errors.tolist(),
            'l1_bulk_errors': self.l1_bulk_errors.tolist(),
            'monotone_in_epsilon': self.monotone_in_epsilon,
            'kappa': self.kappa,
        }

    @classmethod
    def merge(cls, parts):
        """Combine single-eps reports (objects or their dict form), sorted by decreasing eps"""
        parts = [part.to_dict() if isinstance(part, ConvergenceReport) else part for part in parts]
        if not parts:
            raise ArgumentError("nothing to merge")
        parts = sorted(parts, key=lambda part: -part['epsilons'][0])
        times = np.asarray(parts[0]['times'], dtype=float)
        for part in parts:
            if not np.allclose(part['times'], times, rtol=0, atol=1e-9):
                raise ArgumentError("reports were sampled at different times")
        epsilons = np.array([eps for part in parts for eps in part['epsilons']], dtype=float)
        crossing_errors = np.vstack([np.atleast_2d(part['crossing_errors']) for part in parts])
        l1_errors = np.vstack([np.atleast_2d(part['l1_bulk_errors']) for part in parts])
        per_eps = crossing_errors.max(axis=1)
        return cls(epsilons=epsilons, times=times, crossing_errors=crossing_errors, l1_bulk_errors=l1_errors,
                   monotone_in_epsilon=bool(np.all(np.diff(per_eps) < 0)), kappa=parts[0].get('kappa', 0.5))

    def crossing_frame(self):
        frame = pd.DataFrame(self.crossing_errors, columns=[f't={t:.6g}' for t in self.times])
        frame.insert(0, 'epsilon', self.epsilons)
        return frame

    def l1_frame(self):
        frame = pd.DataFrame(self.l1_bulk_errors, columns=[f't={t:.6g}' for t in self.times])
        frame.insert(0, 'epsilon', self.epsilons)
        return frame


def compare_to_particles(runs, trajectory, kappa=0.5):
    """ConvergenceReport for {epsilon: [EvolutionState per sample time]} against the ODE trajectory"""
    if not runs:
        raise ArgumentError("at least one evolution run is required")
    epsilons = np.array(sorted(runs, reverse=True), dtype=float)
    times = np.asarray(trajectory.times, dtype=float)
    crossing_errors = np.empty((epsilons.size, times.size))
    l1_errors = np.empty_like(crossing_errors)
    crossings = {}

    for a, eps in enumerate(epsilons):
        samples = runs[eps]
        sample_times = np.array([state.time for state in samples])
        if sample_times.shape != times.shape or not np.allclose(sample_times, times, rtol=0, atol=1e-9):
            raise ArgumentError(f"evolution samples for eps={eps} do not match the trajectory sample times")
        found = np.empty((times.size, trajectory.n))
        for b, state in enumerate(samples):
            if state.n_layers != trajectory.n:
                raise ArgumentError(f"run for eps={eps} has {state.n_layers} layers, trajectory has {trajectory.n}")
            xi = half_level_crossings(state.x, state.values, state.n_layers, eps, state.time)
            found[b] = xi
            crossing_errors[a, b] = np.max(np.abs(xi - trajectory.positions[b]))
            l1_errors[a, b] = bulk_l1_error(state.x, state.values, trajectory.positions[b], kappa)
        crossings[float(eps)] = found

    per_eps = crossing_errors.max(axis=1)
    monotone = bool(np.all(np.diff(per_eps) < 0))
    if not monotone:
        logger.warning(f"Crossing errors not decreasing in eps: {dict(zip(epsilons.tolist(), per_eps.tolist()))}")
    logger.info(f"Convergence report: eps={epsilons.tolist()}, max errors={per_eps.tolist()}")
    return ConvergenceReport(epsilons=epsilons, times=times, crossing_errors=crossing_errors,
                             l1_bulk_errors=l1_errors, monotone_in_epsilon=monotone, crossings=crossings,
                             kappa=kappa)


def check_convergence(report, max_final_error=0.05):
    """Raise AcceptanceError unless errors decrease in eps and the finest final error is small"""
    failures = []
    if not report.monotone_in_epsilon:
        failures.append("crossing errors are not strictly decreasing in eps")
    finest = float(report.final_errors[-1])
    if finest > max_final_error:
        failures.append(f"final crossing error {finest:.4g} at eps={report.epsilons[-1]} exceeds {max_final_error}")
    if failures:
        raise AcceptanceError('; '.join(failures))
    return True


@dataclass(frozen=True, eq=False)
class SupersolutionReport:
    epsilon: float
    delta: float
    time: float
    grid_min_I: float
    I_field: GridFunction
    error_terms: dict
    mode: str = PROFILE

    def to_dict(self):
        return {
            'epsilon': self.epsilon,
            'delta': self.delta,
            't': self.time,
            'grid_min_I': self.grid_min_I,
            'mode': self.mode,
            'error_terms': self.error_terms,
        }


class _ProfileOperator:
    """L_s of a rescaled profile, u(z) with z = (x - c) / eps, from reference-grid values"""

    def __init__(self, grid_function, image, outside):
        self.grid_function = grid_function
        self.spline = CubicSpline(grid_function.x, image)
        self.outside = outside

    def __call__(self, z):
        f = self.grid_function
        inside = (z >= f.x_min) & (z <= f.x_max)
        out = np.empty_like(z)
        out[inside] = self.spline(z[inside])
        out[~inside] = self.outside(z[~inside])
        return out


class SupersolutionAssembler:
    """Corrected ansatz
        v(t, x) = eps^2s sigma~ + sum_i [ u((x - x_i)/eps) - eps^2s c_i psi((x - x_i)/eps) ],
        sigma~ = (delta + sigma) / beta,
    and its residual
        I = eps v_t + eps^-2s W'(v) - L_s v - sigma.
    """

    def __init__(self, layer, corrector, sigma=None, mode=PROFILE, margin=20.0, method='auto'):
        if corrector is None:
            raise ConfigError("supersolution check needs a corrector profile", key_path='corrector')
        if mode not in SUPERSOL_MODES:
            raise ConfigError(f"unknown supersolution mode '{mode}'", key_path='harness.mode')
        self.layer = layer
        self.corrector = corrector
        self.sigma = sigma or StressField.zero()
        self.mode = mode
        self.margin = margin
        self.s = layer.s
        self.operator = get_operator(self.s, 1e-8, method)
        self._lu = None
        self._lpsi = None

    def _profile_operators(self):
        if self._lu is None:
            layer, potential = self.layer, self.layer.potential
            self._lu = _ProfileOperator(layer.u, self.operator.apply(layer.u),
                                        lambda z: potential.dW(layer.evaluate(z)))
            psi = self.corrector.psi

            def psi_outside(z):
                u = layer.evaluate(z)
                return layer.derivative(z) + layer.eta * (potential.d2W(u) - layer.beta)

            self._lpsi = _ProfileOperator(psi, self.operator.apply(psi), psi_outside)
        return self._lu, self._lpsi

    def grid_for(self, positions, epsilon):
        window = (positions[0] - self.margin, positions[-1] + self.margin)
        return GridSpec.from_window(window, epsilon * self.layer.u.dx)

    def assemble(self, state, epsilon, grid=None):
        """Return (x, v, v_t, L v, I) at the particle state"""
        s, eps = self.s, epsilon
        layer, psi = self.layer, self.corrector.psi
        potential, sigma = layer.potential, self.sigma
        positions = state.positions
        c = velocity(state, sigma)
        dc = acceleration(state, sigma)
        grid = grid or self.grid_for(positions, eps)
        x = grid.points()
        t = state.time
        e2s = eps ** (2.0 * s)

        sigma_t = sigma(t, x)
        tilde = (state.delta + sigma_t) / layer.beta
        v = e2s * tilde
        v_t = e2s * sigma.dt(t, x) / layer.beta
        for i, xi in enumerate(positions):
            z = (x - xi) / eps
            u, du = layer.evaluate(z), layer.derivative(z)
            p, dp = psi.evaluate(z), psi.evaluate(z, nu=1)
            v = v + u - e2s * c[i] * p
            v_t = v_t - c[i] / eps * du - e2s * (dc[i] * p - c[i] ** 2 / eps * dp)

        if self.mode == QUADRATURE:
            n = positions.size
            left = e2s * (state.delta + sigma_t[0]) / layer.beta
            right = n + e2s * (state.delta + sigma_t[-1]) / layer.beta
            tail = TailModel.layer(left, right, 0.0, 2.0 * s, center=float(np.mean(positions)))
            p_ = tail.decay_exponent
            tail = tail.with_coefficients((right - v[-1]) * (x[-1] - tail.center) ** p_,
                                          (v[0] - left) * (tail.center - x[0]) ** p_)
            lv = self.operator.apply(grid.function(v, tail))
        else:
            lu, lpsi = self._profile_operators()
            lv = np.zeros_like(x)
            for i, xi in enumerate(positions):
                z = (x - xi) / eps
                lv = lv + lu(z) / e2s - c[i] * lpsi(z)
            if sigma.kind not in ('zero', 'constant'):
                tail = TailModel.constant(tilde[0], tilde[-1], center=float(np.mean(positions)))
                lv = lv + e2s * self.operator.apply(grid.function(tilde, tail))

        residual = eps * v_t + potential.dW(v) / e2s - lv - sigma_t
        return x, v, v_t, lv, residual

    def error_terms(self, state, epsilon, x, residual):
        s, eps = self.s, epsilon
        theta = theta_exponent(s)
        gamma_split = (theta - 2.0 * s) / (2.0 * theta)
        radius = eps ** gamma_split
        positions = state.positions
        distance = np.abs(x[:, None] - positions[None, :])
        nearest = np.argmin(distance, axis=1)
        near = distance[np.arange(x.size), nearest] < radius
        c = velocity(state, self.sigma)
        e2s = eps ** (2.0 * s)

        others_u = np.zeros_like(x)
        others_u2 = np.zeros_like(x)
        others_psi = np.zeros_like(x)
        for i, xi in enumerate(positions):
            z = (x - xi) / eps
            mask = nearest != i
            tilde_u = self.layer.evaluate(z) - (x >= xi)
            others_u = np.maximum(others_u, np.where(mask, np.abs(tilde_u), 0.0))
            others_u2 = np.maximum(others_u2, np.where(mask, tilde_u ** 2 / e2s, 0.0))
            others_psi = np.maximum(others_psi, np.where(mask, np.abs(e2s * c[i] * self.corrector.evaluate(z)), 0.0))

        sigma_now = self.sigma(state.time, x)
        tilde = (state.delta + sigma_now) / self.layer.beta
        drive = self.layer.beta * tilde - sigma_now
        return {
            'theta': theta,
            'gamma_split': gamma_split,
            'radius': radius,
            'min_I_near': float(np.min(residual[near])) if np.any(near) else None,
            'min_I_far': float(np.min(residual[~near])) if np.any(~near) else None,
            'max_abs_psi_others': float(np.max(others_psi)),
            'max_abs_tilde_u_others': float(np.max(others_u)),
            'max_tilde_u_sq_over_eps2s': float(np.max(others_u2)),
            'beta_sigma_tilde_minus_sigma': float(np.min(drive)),
        }


def supersolution_discrepancy(layer, corrector, sigma=None, delta=0.1, epsilon=0.05, t=0.0, grid=None,
                              positions0=(-1.0, 1.0), trajectory=None, mode=PROFILE, rtol=1e-8):
    """Grid minimum of I_eps for the corrected ansatz on the delta-shifted particle system"""
    if not delta > 0:
        raise ArgumentError(f"supersolution check needs delta > 0, got {delta}")
    sigma = sigma or StressField.zero()
    assembler = SupersolutionAssembler(layer, corrector, sigma, mode)
    if trajectory is None:
        start = ParticleState.start(positions0, layer.s, layer.gamma, delta)
        if t > 0:
            trajectory = integrate(start, sigma, t_end=t, rtol=rtol, sample_times=[0.0, t])
            state = trajectory.at(t)
        else:
            state = start
    else:
        if trajectory.delta != delta:
            raise ArgumentError(f"trajectory was integrated with delta={trajectory.delta}, not {delta}")
        state = trajectory.at(t)

    x, _, _, _, residual = assembler.assemble(state, epsilon, grid)
    dx = x[1] - x[0]
    terms = assembler.error_terms(state, epsilon, x, residual)
    report = SupersolutionReport(
        epsilon=float(epsilon), delta=float(delta), time=float(t), grid_min_I=float(np.min(residual)),
        I_field=GridFunction(x[0], dx, residual, TailModel.constant(delta, delta)), error_terms=terms, mode=mode,
    )
    logger.info(f"Supersolution eps={epsilon}, delta={delta}, t={t}: min I = {report.grid_min_I:.6g}")
    return report


def _minima(reports):
    """{epsilon: grid_min_I} from SupersolutionReports or their dict form"""
    minima = {}
    for report in reports:
        if isinstance(report, SupersolutionReport):
            minima[report.epsilon] = report.grid_min_I
        else:
            minima[float(report['epsilon'])] = float(report['grid_min_I'])
    return minima


def epsilon_star(reports, delta):
    """Largest eps such that every swept eps' <= eps has min I >= delta/4 (None if none)"""
    threshold = delta / 4.0
    star = None
    for eps, min_i in sorted(_minima(reports).items()):
        if min_i < threshold:
            break
        star = eps
    return star


def check_supersolution(reports, delta, doubled=None):
    """Raise AcceptanceError when no eps is positive enough or doubling delta does not raise min I"""
    failures = []
    star = epsilon_star(reports, delta)
    if star is None:
        failures.append(f"min I below delta/4 = {delta / 4:.4g} already at the smallest eps")
    if doubled is not None:
        base = _minima(reports)
        for eps, min_i in sorted(_minima(doubled).items()):
            if eps in base and not min_i > base[eps]:
                failures.append(f"doubling delta did not increase min I at eps={eps}")
    if failures:
        raise AcceptanceError('; '.join(failures))
    return star

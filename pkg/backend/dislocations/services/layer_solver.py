import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import integrate, optimize, special

from .exceptions import ArgumentError, ConvergenceError, SolverError
from .frac_operator import FractionalLaplacian, GridSpec, TailModel, as_order
from .potential import PotentialSpec

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = (-200.0, 200.0)
DEFAULT_DX = 0.05

# Newton is tried once the relaxation residual drops below this level
NEWTON_SWITCH_RESIDUAL = 1e-3
# Shifts smaller than this are not worth re-interpolating
RECENTER_EPS = 1e-10


def theta_exponent(s):
    """Decay exponent of the corrected layer tail: min{1+2s-(1-8s)^+, 8s}/2

    Equals 4s for s <= 1/6 and (1+2s)/2 for 1/6 < s < 1/2.
    """
    s = as_order(s).require_model_range().s
    return min(1.0 + 2.0 * s - max(1.0 - 8.0 * s, 0.0), 8.0 * s) / 2.0


@dataclass(frozen=True, eq=False)
class LayerProfile:
    """Heteroclinic layer u with L_s u = W'(u), u(0) = 1/2, and its constants

    gamma = 1 / int u'^2, eta = int u'^2 / beta, so gamma * eta * beta = 1.
    """
    u: object
    du: object
    s: float
    gamma: float
    eta: float
    beta: float
    residual_norm: float
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    iterations: int = 0
    # least-squares x^-2s coefficient on the outer grid fraction (diagnostic)
    fitted_coefficient: float = float('nan')

    @property
    def order(self):
        return as_order(self.s)

    def evaluate(self, x):
        return self.u.evaluate(x)

    def derivative(self, x):
        return self.du.evaluate(x)

    def header(self):
        return {
            'kind': 'layer',
            's': self.s,
            'gamma': self.gamma,
            'eta': self.eta,
            'beta': self.beta,
            'residual_norm': self.residual_norm,
            'iterations': self.iterations,
            'fitted_coefficient': self.fitted_coefficient,
            'potential': self.potential.to_dict(),
            'u_tail': self.u.tail.to_dict(),
            'du_tail': self.du.tail.to_dict(),
        }


def fourth_order_derivative(f):
    """Centred 4th-order differences, using tail samples beyond both edges"""
    g = f.padded(2)
    return (-g[4:] + 8.0 * g[3:-1] - 8.0 * g[1:-3] + g[:-4]) / (12.0 * f.dx)


def edge_slopes(values, dx):
    """One-sided 4th-order derivatives at the left and right window edges"""
    stencil = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * dx)
    return float(stencil @ values[:5]), float(-stencil @ values[:-6:-1])


def _match_power_pair(t, gap, log_slope, p, q):
    """(a, b) with a (x/t)^-p + b (x/t)^-q matching gap and -x gap' at x = t, scaled to a t^p, b t^q"""
    a = (q * gap - log_slope) / (q - p)
    if a < 0:
        a = 0.0
    b = gap - a
    return a * t ** p, b * t ** q


def stitch_tail_coefficients(x, u, dx, exponent, correction_exponent):
    """Two-term tail 1-u ~ C x^-p + D x^-q (right), u ~ C' |x|^-p + D' |x|^-q (left)

    Both terms are fixed by the value and the one-sided slope at the window
    edge, so the grid function and its tail join with a continuous derivative.
    Returns (C_R, C_L, D_R, D_L).
    """
    if not (x[0] < 0 < x[-1]):
        raise ArgumentError("tail stitching needs a window around the layer centre")
    left_slope, right_slope = edge_slopes(u, dx)
    right, right_correction = _match_power_pair(x[-1], 1.0 - u[-1], x[-1] * right_slope,
                                                exponent, correction_exponent)
    left, left_correction = _match_power_pair(-x[0], u[0], -x[0] * left_slope, exponent, correction_exponent)
    return right, left, right_correction, left_correction


def fit_tail_coefficients(x, u, exponent, fraction):
    """Least-squares coefficients of 1-u ~ C_R x^-p (right) and u ~ C_L |x|^-p (left)"""
    m = max(3, int(fraction * x.size))
    right_x, right_gap = x[-m:], 1.0 - u[-m:]
    left_x, left_gap = -x[:m], u[:m]
    if np.min(right_x) <= 0 or np.min(left_x) <= 0:
        raise ArgumentError("tail fit region must not contain the layer centre")
    right = np.sum(right_gap * right_x ** -exponent) / np.sum(right_x ** (-2.0 * exponent))
    left = np.sum(left_gap * left_x ** -exponent) / np.sum(left_x ** (-2.0 * exponent))
    return float(right), float(left)


def derivative_energy(du, x, tail):
    """int (u')^2 over the line: trapezoid on the grid plus the power tails"""
    total = float(integrate.trapezoid(du ** 2, x))
    terms = tail.power_terms()
    exponents = [p for _, _, p in terms]
    for end, coefficients in ((x[-1], [c for c, _, _ in terms]), (-x[0], [c for _, c, _ in terms])):
        for ci, pi in zip(coefficients, exponents):
            for cj, pj in zip(coefficients, exponents):
                k = pi + pj - 1.0
                total += ci * cj * end ** (-k) / k
    return total


def tail_correction_coefficient(s, beta=1.0):
    """K in 1 - u(x) ~ x^-2s / (2s beta) * (1 - K x^-2s) for x -> +inf

    Expanding L_s u = W'(u) around the Heaviside step to second order gives
    K = (B(1-2s, 4s) + 1/(2s) - I(s)) / beta with
    I(s) = int_0^inf (t^-2s - 1) |t - 1|^(-1-2s) dt.
    """
    s = as_order(s).require_model_range().s

    def body(t):
        return np.expm1(-2.0 * s * np.log(t)) * np.abs(t - 1.0) ** (-1.0 - 2.0 * s)

    near, _ = integrate.quad(body, 0.0, 1.0, limit=200, epsabs=1e-13, epsrel=1e-11)
    far, _ = integrate.quad(body, 1.0, np.inf, limit=200, epsabs=1e-13, epsrel=1e-11)
    return float((special.beta(1.0 - 2.0 * s, 4.0 * s) + 1.0 / (2.0 * s) - (near + far)) / beta)


class LayerSolver:
    """Damped parabolic relaxation u_t = L_s u - W'(u) towards the layer

    Starts from 1/2 + arctan(x)/pi. The tail model x^-2s + x^-(2s+1) is
    restitched to the edge values and slopes, and u(0) = 1/2 restored,
    every `recenter_every` steps and again before convergence is accepted.
    Newton-Krylov may take over near convergence.
    """

    def __init__(self, potential=None, s=0.25, grid=None, tol=1e-6, max_steps=1_000_000,
                 recenter_every=50, cfl=0.9, accelerate='none', tail_fit_fraction=0.25,
                 tail_rtol=1e-8, method='auto', stitch_tol=1e-3):
        self.potential = potential or PotentialSpec()
        self.order = as_order(s).require_model_range()
        self.s = self.order.s
        self.grid = grid or GridSpec.from_window(DEFAULT_WINDOW, DEFAULT_DX)
        if not (self.grid.x_min < 0 < self.grid.x_max):
            raise ArgumentError("layer window must contain the origin")
        if tol <= 0:
            raise ArgumentError(f"tolerance must be positive, got {tol}")
        if accelerate not in ('none', 'newton'):
            raise ArgumentError(f"unknown accelerator '{accelerate}'")
        self.tol = tol
        self.max_steps = int(max_steps)
        self.recenter_every = max(1, int(recenter_every))
        self.cfl = cfl
        self.accelerate = accelerate
        self.tail_fit_fraction = tail_fit_fraction
        self.stitch_tol = stitch_tol
        self.exponent = 2.0 * self.s
        self.operator = FractionalLaplacian(self.order, tail_rtol=tail_rtol, method=method)

    def initial_guess(self):
        x = self.grid.points()
        tail = TailModel.layer(0.0, 1.0, 1.0 / (2.0 * self.s * self.potential.beta), self.exponent)
        return self.refit_tail(self.grid.function(0.5 + np.arctan(x) / np.pi, tail))

    def residual(self, f):
        return self.operator.apply(f) - self.potential.dW(f.values)

    def refit_tail(self, f):
        right, left, right_correction, left_correction = stitch_tail_coefficients(
            f.x, f.values, f.dx, self.exponent, f.tail.correction_exponent)
        return f.with_values(f.values, f.tail.with_coefficients(right, left, right_correction, left_correction))

    def center_offset(self, f):
        """x* with u(x*) = 1/2, from the spline inside the bracketing cell"""
        j = int(np.searchsorted(f.values, 0.5))
        if j == 0 or j == f.n:
            raise SolverError("layer lost its half-level crossing")
        a, b = f.x[j - 1], f.x[j]
        return optimize.brentq(lambda t: f.evaluate(np.array([t]))[0] - 0.5, a, b, xtol=1e-14)

    def recenter(self, f):
        shift = self.center_offset(f)
        if abs(shift) <= RECENTER_EPS:
            return f, shift
        return f.with_values(f.evaluate(f.x + shift)), shift

    @staticmethod
    def check_monotone(f):
        gaps = np.diff(f.values)
        if np.min(gaps) <= 0:
            worst = int(np.argmin(gaps))
            raise SolverError(f"layer lost monotonicity near x={f.x[worst]:.4g} (du={gaps[worst]:.3e})")

    def _newton(self, f):
        """Newton-Krylov on the grid system with the centre value pinned"""
        i0 = int(np.argmin(np.abs(f.x)))
        pinned = f.values[i0]

        def system(v):
            r = self.operator.apply(f.with_values(v)) - self.potential.dW(v)
            r[i0] = v[i0] - pinned
            return r

        try:
            values = optimize.newton_krylov(system, np.array(f.values), f_tol=0.5 * self.tol,
                                            method='lgmres', maxiter=50)
        except optimize.NoConvergence as e:
            logger.warning(f"Newton-Krylov accelerator did not converge, continuing relaxation: {e}")
            return f
        logger.info("Newton-Krylov accelerator converged")
        return f.with_values(values)

    def solve(self):
        f = self.initial_guess()
        dt = 2.0 * self.cfl / (self.operator.spectral_radius_bound(f) + self.potential.max_curvature())
        logger.info(f"Solving layer: s={self.s}, n={f.n}, dx={f.dx}, dt={dt:.4e}, tol={self.tol:.1e}")

        residual_norm = np.inf
        newton_tried = self.accelerate != 'newton'
        steps = 0
        while steps < self.max_steps:
            r = self.residual(f)
            residual_norm = float(np.max(np.abs(r)))
            if residual_norm <= self.tol:
                # accepted only with a centred profile and a freshly stitched tail
                steps += 1
                f, shift = self.recenter(f)
                f = self.refit_tail(f)
                if abs(shift) <= RECENTER_EPS:
                    residual_norm = float(np.max(np.abs(self.residual(f))))
                    if residual_norm <= self.tol:
                        break
                continue
            if not newton_tried and residual_norm < NEWTON_SWITCH_RESIDUAL:
                newton_tried = True
                f = self._newton(self.refit_tail(f))
                continue

            f = f.with_values(f.values + dt * r)
            steps += 1
            if steps % self.recenter_every == 0:
                f, _ = self.recenter(f)
                f = self.refit_tail(f)
                self.check_monotone(f)
                logger.debug(f"step {steps}: residual {residual_norm:.3e}, "
                             f"tail C_R={f.tail.decay_coefficient:.6f}")
        else:
            raise ConvergenceError(f"layer relaxation not converged after {steps} steps",
                                   last_residual=residual_norm)

        self.check_monotone(f)
        self._check_edges(f)
        profile = self._build_profile(f, residual_norm, steps)
        logger.info(f"Layer converged in {steps} steps: residual={residual_norm:.3e}, "
                    f"gamma={profile.gamma:.8f}, eta={profile.eta:.8f}")
        return profile

    def _check_edges(self, f):
        left, right = f.values[0], f.values[-1]
        if not (0.0 < left < 0.5 < right < 1.0):
            raise SolverError(f"window edges u(-X)={left:.4g}, u(X)={right:.4g} do not bracket 1/2 inside (0, 1)")
        f.check_stitch(self.stitch_tol)

    def _build_profile(self, f, residual_norm, steps):
        du_tail = f.tail.derivative()
        du = f.with_values(fourth_order_derivative(f), du_tail)
        energy = derivative_energy(du.values, f.x, du_tail)
        beta = self.potential.beta
        fitted, _ = fit_tail_coefficients(f.x, f.values, self.exponent, self.tail_fit_fraction)
        return LayerProfile(
            u=f,
            du=du,
            s=self.s,
            gamma=1.0 / energy,
            eta=energy / beta,
            beta=beta,
            residual_norm=residual_norm,
            potential=self.potential,
            iterations=steps,
            fitted_coefficient=fitted,
        )


def solve_layer(potential=None, s=0.25, grid=None, tol=1e-6, **options):
    """Layer profile for `potential` and order s on `grid` (see LayerSolver)"""
    return LayerSolver(potential, s, grid, tol, **options).solve()


@dataclass(frozen=True)
class DecayReport:
    """Log-log fits of the right layer tail on a fit window"""
    fit_window: tuple
    slope: float
    coefficient: float
    corrected_slope: float
    derivative_slope: float
    expected_slope: float
    expected_coefficient: float
    theta: float
    correction: float = 0.0
    table: pd.DataFrame = field(repr=False, compare=False, default=None)

    @property
    def coefficient_error(self):
        return abs(self.coefficient / self.expected_coefficient - 1.0)

    def to_dict(self):
        return {
            'fit_window': list(self.fit_window),
            'slope': self.slope,
            'coefficient': self.coefficient,
            'corrected_slope': self.corrected_slope,
            'derivative_slope': self.derivative_slope,
            'expected_slope': self.expected_slope,
            'expected_coefficient': self.expected_coefficient,
            'coefficient_error': self.coefficient_error,
            'theta': self.theta,
            'correction': self.correction,
        }


def _loglog_slope(x, y):
    mask = y > 0
    if np.count_nonzero(mask) < 2:
        return float('nan')
    slope, _ = np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)
    return float(slope)


def verify_decay(profile, fit_window=(50.0, 200.0)):
    """Fit |u - H|, the corrected residual and |u'| against the predicted power laws"""
    a, b = map(float, fit_window)
    u = profile.u
    if a < 20.0:
        raise ArgumentError(f"fit window must start at |x| >= 20, got {a}")
    if b < 2.0 * a:
        raise ArgumentError(f"fit window [{a}, {b}] is too short for a log-log fit (needs b >= 2a)")
    if b > u.x_max:
        raise ArgumentError(f"fit window end {b} lies outside the grid (x_max={u.x_max})")

    s = profile.s
    mask = (u.x >= a) & (u.x <= b)
    x = u.x[mask]
    gap = 1.0 - u.values[mask]
    predicted = 1.0 / (2.0 * s * profile.beta)
    corrected = np.abs(gap - predicted * x ** (-2.0 * s))
    correction = tail_correction_coefficient(s, profile.beta)
    du = np.abs(profile.du.values[mask])

    with np.errstate(divide='ignore', invalid='ignore'):
        log_gap = np.log(gap)
    coefficient = float(np.exp(np.mean(log_gap + 2.0 * s * np.log(x))))
    table = pd.DataFrame({
        'x': x,
        'abs_u_minus_H': gap,
        'corrected_residual': corrected,
        'local_slope': np.gradient(log_gap, np.log(x)),
        'two_term_prediction': predicted * x ** (-2.0 * s) * (1.0 - correction * x ** (-2.0 * s)),
    })
    report = DecayReport(
        fit_window=(a, b),
        slope=_loglog_slope(x, gap),
        coefficient=coefficient,
        corrected_slope=_loglog_slope(x, corrected),
        derivative_slope=_loglog_slope(x, du),
        expected_slope=-2.0 * s,
        expected_coefficient=predicted,
        theta=theta_exponent(s),
        correction=correction,
        table=table,
    )
    logger.info(f"Decay fit on [{a}, {b}]: slope={report.slope:.4f} (expected {report.expected_slope:.4f}), "
                f"C={coefficient:.4f} (expected {predicted:.4f}), corrected slope={report.corrected_slope:.4f}")
    return report

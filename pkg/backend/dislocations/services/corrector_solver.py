"""Linearised layer equation L_s psi - W''(u) psi = u' + eta (W''(u) - beta).

The operator has the translation mode u' in its kernel, so the discrete
system is bordered with the gauge <psi, u'> = 0 and solved by dense least
squares. psi is modelled as zero outside the corrector window.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .exceptions import ArgumentError, ConvergenceError, SolverError
from .frac_operator import FractionalLaplacian, GridFunction, GridSpec, TailModel, as_order

logger = logging.getLogger(__name__)

GAUGE = '<psi, du> = 0'
EDGE_RATIO_LIMIT = 0.05
# Layers with a larger residual are not accepted as input
MAX_LAYER_RESIDUAL = 1e-5


@dataclass(frozen=True, eq=False)
class CorrectorProfile:
    psi: GridFunction
    s: float
    solvability_defect: float
    orthogonality_defect: float
    residual_norm: float
    multiplier: float
    # bordered-system residual ||M psi + lambda u' - g||, the accepted quantity
    system_residual: float
    compatibility: float
    lipschitz_bound: float
    edge_ratio: float
    gauge: str = GAUGE

    @property
    def order(self):
        return as_order(self.s)

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.psi.values)))

    def evaluate(self, x):
        return self.psi.evaluate(x)

    def header(self):
        return {
            'kind': 'corrector',
            's': self.s,
            'solvability_defect': self.solvability_defect,
            'orthogonality_defect': self.orthogonality_defect,
            'residual_norm': self.residual_norm,
            'multiplier': self.multiplier,
            'system_residual': self.system_residual,
            'compatibility': self.compatibility,
            'lipschitz_bound': self.lipschitz_bound,
            'edge_ratio': self.edge_ratio,
            'gauge': self.gauge,
        }


def corrector_grid(layer, window=(-100.0, 100.0), stride=2):
    """Sub-grid of the layer grid: every `stride`-th point inside `window`"""
    if stride < 1:
        raise ArgumentError(f"stride must be a positive integer, got {stride}")
    x = layer.u.x
    lo, hi = max(window[0], x[0]), min(window[1], x[-1])
    mask = (x >= lo - 1e-12) & (x <= hi + 1e-12)
    indices = np.flatnonzero(mask)
    # keep the centre on the sub-grid so symmetric layers give symmetric systems
    centre = int(np.argmin(np.abs(x)))
    offset = (centre - indices[0]) % stride
    indices = indices[offset::stride]
    if indices.size < 3:
        raise ArgumentError("corrector window holds fewer than 3 points")
    return indices


def grid_norm(values, dx):
    return float(np.sqrt(dx * np.sum(np.asarray(values) ** 2)))


def rhs(layer, u, du):
    """g = u' + eta (W''(u) - beta)"""
    return du + layer.eta * (layer.potential.d2W(u) - layer.beta)


class CorrectorSolver:

    def __init__(self, layer, tol=1e-6, window=(-100.0, 100.0), stride=2, constraint_weight=1.0,
                 tail_rtol=1e-8):
        if layer.residual_norm > MAX_LAYER_RESIDUAL:
            raise ArgumentError(f"layer residual {layer.residual_norm:.3e} too large for the corrector "
                                f"(needs <= {MAX_LAYER_RESIDUAL:.0e})")
        if tol <= 0:
            raise ArgumentError(f"tolerance must be positive, got {tol}")
        self.layer = layer
        self.tol = tol
        self.window = window
        self.stride = int(stride)
        self.constraint_weight = float(constraint_weight)
        self.operator = FractionalLaplacian(layer.order, tail_rtol=tail_rtol, method='direct')

    def system(self):
        indices = corrector_grid(self.layer, self.window, self.stride)
        x = self.layer.u.x[indices]
        dx = self.layer.u.dx * self.stride
        u = self.layer.u.values[indices]
        du = self.layer.du.values[indices]
        matrix = self.operator.assemble(x.size, dx) - np.diag(self.layer.potential.d2W(u))
        return x, dx, u, du, matrix

    def solve(self):
        x, dx, u, du, matrix = self.system()
        g = rhs(self.layer, u, du)
        n = x.size
        logger.info(f"Solving corrector on {n} points, dx={dx}, window=[{x[0]:.4g}, {x[-1]:.4g}]")

        w = self.constraint_weight
        bordered = np.zeros((n + 1, n + 1))
        bordered[:n, :n] = matrix
        bordered[:n, n] = du
        bordered[n, :n] = w * dx * du
        target = np.append(g, 0.0)
        solution, _, rank, _ = linalg.lstsq(bordered, target, lapack_driver='gelsd')
        if rank < n + 1:
            raise SolverError(f"corrector system rank {rank} < {n + 1}: singular beyond the translation mode")

        psi, multiplier = solution[:n], float(solution[n])
        equation = matrix @ psi - g
        system_residual = grid_norm(equation + multiplier * du, dx)
        if system_residual > self.tol:
            raise ConvergenceError(f"corrector defect above tolerance {self.tol:.1e}", last_residual=system_residual)
        residual_norm = grid_norm(equation, dx)
        # a truncated window leaves g orthogonal to u' only approximately; lambda absorbs it
        solvability = abs(multiplier) * grid_norm(du, dx)

        compatibility = float(integrate.trapezoid(g * du, x))
        orthogonality = float(abs(dx * np.dot(psi, du)))
        peak = float(np.max(np.abs(psi)))
        edge_ratio = float(max(abs(psi[0]), abs(psi[-1])) / peak) if peak > 0 else 0.0
        if edge_ratio > EDGE_RATIO_LIMIT:
            logger.warning(f"Corrector edge ratio {edge_ratio:.3f} exceeds {EDGE_RATIO_LIMIT}; widen the window")

        profile = CorrectorProfile(
            psi=GridFunction(x[0], dx, psi, TailModel.zero()),
            s=self.layer.s,
            solvability_defect=solvability,
            orthogonality_defect=orthogonality,
            residual_norm=residual_norm,
            multiplier=multiplier,
            system_residual=system_residual,
            compatibility=compatibility,
            lipschitz_bound=float(np.max(np.abs(np.gradient(psi, dx)))),
            edge_ratio=edge_ratio,
        )
        logger.info(f"Corrector solved: max|psi|={peak:.6g}, system residual={system_residual:.3e}, "
                    f"equation residual={residual_norm:.3e}, multiplier={multiplier:.3e}, "
                    f"compatibility={compatibility:.3e}")
        return profile


def solve_corrector(layer, tol=1e-6, **options):
    return CorrectorSolver(layer, tol, **options).solve()


def bump(x, center, radius):
    """C^1 bump (1 - r^2)^2 supported on |x - center| < radius"""
    r = (np.asarray(x) - center) / radius
    return np.where(np.abs(r) < 1.0, (1.0 - r ** 2) ** 2, 0.0)


def weak_terms(layer, corrector, phi, include_multiplier=False):
    """1/2 Q_W(psi, phi), int kappa psi phi, int W''(u) psi phi and int g phi

    With `include_multiplier` the last pairing uses the projected g - lambda u'.
    """
    psi = corrector.psi
    if not psi.same_grid(phi):
        raise ArgumentError("test function must live on the corrector grid")
    x, dx = psi.x, psi.dx
    u, du = layer.evaluate(x), layer.derivative(x)
    op = FractionalLaplacian(layer.order, method='direct')
    g = rhs(layer, u, du)
    if include_multiplier:
        g = g - corrector.multiplier * du
    return np.array([
        0.5 * op.quadratic_form(psi, phi),
        dx * np.sum(op.exterior_mass(psi) * psi.values * phi.values),
        dx * np.sum(layer.potential.d2W(u) * psi.values * phi.values),
        dx * np.sum(g * phi.values),
    ])


def weak_residual(layer, corrector, phi, include_multiplier=False):
    """Relative weak-form residual |sum of weak_terms| / sum |weak_terms| against phi"""
    terms = weak_terms(layer, corrector, phi, include_multiplier)
    scale = np.sum(np.abs(terms))
    return float(abs(terms.sum()) / scale) if scale > 0 else 0.0


def kernel_check(layer, window=None, operator=None):
    """||L_s u' - W''(u) u'|| / ||u'|| over the rows inside `window` (translation mode)

    u' keeps its tail beyond the layer grid; rows near the edges see the
    one-sided difference error of u' and are left out. The default window is
    the middle half of the layer grid.
    """
    op = operator or FractionalLaplacian(layer.order, method='auto')
    du = layer.du
    x = du.x
    lo, hi = window or (0.5 * x[0], 0.5 * x[-1])
    rows = (x >= lo) & (x <= hi)
    if not rows.any():
        raise ArgumentError(f"kernel check window [{lo}, {hi}] holds no grid points")
    image = op.apply(du) - layer.potential.d2W(layer.u.values) * du.values
    ratio = grid_norm(image[rows], du.dx) / grid_norm(du.values[rows], du.dx)
    logger.info(f"Kernel check ||(L_s - W''(u)) u'|| / ||u'|| = {ratio:.3e} on [{lo:.4g}, {hi:.4g}]")
    return ratio


@dataclass(frozen=True, eq=False)
class DecayProblemResult:
    """Solution of -L_s v + c v = A / (1 + |x|^4s) and its fitted decay"""
    v: GridFunction
    c: float
    amplitude: float
    slope: float
    fit_window: tuple

    def to_dict(self):
        return {'c': self.c, 'amplitude': self.amplitude, 'slope': self.slope,
                'fit_window': list(self.fit_window)}


def solve_decay_problem(s, c, amplitude=1.0, grid=None, fit_window=None):
    """Linear problem with a decaying right-hand side; |v| must decay at least like |x|^-2s"""
    order = as_order(s).require_model_range()
    if c <= 0:
        raise ArgumentError(f"reaction coefficient c must be positive, got {c}")
    grid = grid or GridSpec.from_window((-200.0, 200.0), 0.2)
    x = grid.points()
    op = FractionalLaplacian(order, method='direct')
    matrix = c * np.eye(grid.n) - op.assemble(grid.n, grid.dx)
    g = amplitude / (1.0 + np.abs(x) ** (4.0 * order.s))
    v = linalg.solve(matrix, g, assume_a='pos')

    a, b = fit_window or (0.05 * grid.x_max, 0.5 * grid.x_max)
    mask = (x >= a) & (x <= b)
    slope, _ = np.polyfit(np.log(x[mask]), np.log(np.abs(v[mask])), 1)
    logger.info(f"Decay problem s={order.s}, c={c}: fitted slope {slope:.4f} on [{a:.4g}, {b:.4g}]")
    return DecayProblemResult(v=grid.function(v), c=float(c), amplitude=float(amplitude),
                              slope=float(slope), fit_window=(float(a), float(b)))

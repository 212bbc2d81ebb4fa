"""Singular quadrature of the fractional Laplacian on uniform 1-D grids.

The operator is taken exactly as

    L_s f(x) = 1/2 * int (f(x+y) + f(x-y) - 2 f(x)) / |y|^(1+2s) dy
             = int_0^inf D(x, y) y^(-1-2s) dy,   D = f(x+y) + f(x-y) - 2 f(x)

with no normalisation constant. For a grid of n points the integral over
offsets y = k dx, k = 1..K (K >= n), uses the grid values and the tail model
evaluated on a pad of K points on either side; beyond R = K dx both
arguments lie in the tails and the remaining integral is done from the tail
formula.
"""
import logging
import threading
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, signal
from scipy.interpolate import CubicSpline
from scipy.linalg import toeplitz

from .exceptions import ArgumentError, ConfigError, NumericError

logger = logging.getLogger(__name__)

TAIL_ZERO = 'zero'
TAIL_CONSTANT = 'constant-limits'
TAIL_LAYER = 'layer-asymptotic'
TAIL_KINDS = (TAIL_ZERO, TAIL_CONSTANT, TAIL_LAYER)

METHODS = ('direct', 'fft', 'auto')

# Above this many targets 'auto' switches to FFT convolution
AUTO_FFT_THRESHOLD = 2048

# Gauss-Legendre rule used for the kernel moments of each pair of cells
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class FracOrder:
    """Order parameter s of L_s (the operator accepts 0 < s < 1)"""
    s: float

    def __post_init__(self):
        s = float(self.s)
        if not (0.0 < s < 1.0) or not np.isfinite(s):
            raise ArgumentError(f"fractional order must lie in (0, 1), got {self.s!r}")
        object.__setattr__(self, 's', s)

    def require_model_range(self):
        """Model runs are restricted to the strongly nonlocal range 0 < s < 1/2"""
        if not self.s < 0.5:
            raise ArgumentError(f"model runs need 0 < s < 1/2, got s={self.s}")
        return self

    def __float__(self):
        return self.s


def as_order(s):
    return s if isinstance(s, FracOrder) else FracOrder(s)


@dataclass(frozen=True)
class TailModel:
    """Behaviour of a grid function beyond its window

    layer-asymptotic, with z = x - center, p = decay_exponent and
    q = correction_exponent (default p + 1):
        z < 0:  left_limit  + left_coefficient  * |z|^-p + left_correction       * |z|^-q
        z > 0:  right_limit - decay_coefficient * z^-p   - correction_coefficient * z^-q
    left_coefficient defaults to decay_coefficient, left_correction to
    correction_coefficient.
    """
    kind: str = TAIL_ZERO
    left_limit: float = 0.0
    right_limit: float = 0.0
    decay_coefficient: float = 0.0
    decay_exponent: float = 1.0
    center: float = 0.0
    left_coefficient: float = None
    correction_coefficient: float = 0.0
    correction_exponent: float = None
    left_correction: float = None

    def __post_init__(self):
        if self.kind not in TAIL_KINDS:
            raise ConfigError(f"unknown tail kind '{self.kind}'", key_path='tail.kind')
        if self.kind == TAIL_LAYER and not self.decay_exponent > 0:
            raise ConfigError(f"layer-asymptotic tail needs a positive exponent, got {self.decay_exponent}",
                              key_path='tail.decay_exponent')
        if self.left_coefficient is None:
            object.__setattr__(self, 'left_coefficient', self.decay_coefficient)
        if self.correction_exponent is None:
            object.__setattr__(self, 'correction_exponent', self.decay_exponent + 1.0)
        if self.left_correction is None:
            object.__setattr__(self, 'left_correction', self.correction_coefficient)
        if self.kind == TAIL_LAYER and not self.correction_exponent > self.decay_exponent:
            raise ConfigError(f"correction exponent {self.correction_exponent} must exceed the decay exponent "
                              f"{self.decay_exponent}", key_path='tail.correction_exponent')

    @classmethod
    def zero(cls):
        return cls(kind=TAIL_ZERO)

    @classmethod
    def constant(cls, left, right, center=0.0):
        return cls(kind=TAIL_CONSTANT, left_limit=float(left), right_limit=float(right), center=center)

    @classmethod
    def layer(cls, left, right, coefficient, exponent, center=0.0, left_coefficient=None, correction=0.0,
              left_correction=None, correction_exponent=None):
        return cls(kind=TAIL_LAYER, left_limit=float(left), right_limit=float(right),
                   decay_coefficient=float(coefficient), decay_exponent=float(exponent),
                   center=float(center),
                   left_coefficient=None if left_coefficient is None else float(left_coefficient),
                   correction_coefficient=float(correction),
                   correction_exponent=None if correction_exponent is None else float(correction_exponent),
                   left_correction=None if left_correction is None else float(left_correction))

    def power_terms(self):
        """(right coefficient, left coefficient, exponent) of each power term"""
        return ((self.decay_coefficient, self.left_coefficient, self.decay_exponent),
                (self.correction_coefficient, self.left_correction, self.correction_exponent))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == TAIL_ZERO:
            return np.zeros_like(x)
        z = x - self.center
        if self.kind == TAIL_CONSTANT:
            return np.where(z < 0, self.left_limit, self.right_limit)
        distance = np.abs(z)
        left = np.full_like(z, self.left_limit)
        right = np.full_like(z, self.right_limit)
        with np.errstate(divide='ignore', invalid='ignore'):
            for right_c, left_c, p in self.power_terms():
                if right_c or left_c:
                    power = distance ** -p
                    left = left + left_c * power
                    right = right - right_c * power
        return np.where(z < 0, left, right)

    def derivative(self):
        """Tail model of the x-derivative (limits 0, exponents raised by one)"""
        if self.kind != TAIL_LAYER:
            return TailModel.zero() if self.kind == TAIL_ZERO else TailModel.constant(0.0, 0.0, self.center)
        (c, c_left, p), (d, d_left, q) = self.power_terms()
        return TailModel.layer(0.0, 0.0, -p * c, p + 1.0, center=self.center, left_coefficient=p * c_left,
                               correction=-q * d, left_correction=q * d_left, correction_exponent=q + 1.0)

    @property
    def scale(self):
        return max(abs(self.left_limit), abs(self.right_limit),
                   abs(self.right_limit - self.left_limit), 1e-300)

    def with_coefficients(self, right, left=None, correction=0.0, left_correction=None):
        return replace(self, decay_coefficient=float(right),
                       left_coefficient=float(right if left is None else left),
                       correction_coefficient=float(correction),
                       left_correction=float(correction if left_correction is None else left_correction))

    def check_order(self, order):
        if self.kind == TAIL_LAYER and order.s >= 0.5:
            raise ConfigError(f"layer-asymptotic tails describe s < 1/2 profiles, got s={order.s}",
                              key_path='tail.kind')

    def to_dict(self):
        return {
            'kind': self.kind,
            'left_limit': self.left_limit,
            'right_limit': self.right_limit,
            'decay_coefficient': self.decay_coefficient,
            'decay_exponent': self.decay_exponent,
            'center': self.center,
            'left_coefficient': self.left_coefficient,
            'correction_coefficient': self.correction_coefficient,
            'correction_exponent': self.correction_exponent,
            'left_correction': self.left_correction,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on x_min + k*dx, k = 0..n-1, plus a tail model outside"""
    x_min: float
    dx: float
    values: np.ndarray
    tail: TailModel = field(default_factory=TailModel.zero)

    def __post_init__(self):
        if not self.dx > 0:
            raise ArgumentError(f"grid spacing must be positive, got {self.dx}")
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ArgumentError("grid values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise NumericError("grid function holds non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'x_min', float(self.x_min))
        object.__setattr__(self, 'dx', float(self.dx))

    @classmethod
    def from_window(cls, window, dx, func, tail=None):
        x_min, x_max = window
        n = int(round((x_max - x_min) / dx)) + 1
        x = x_min + dx * np.arange(n)
        return cls(x_min=x_min, dx=dx, values=func(x), tail=tail or TailModel.zero())

    @property
    def n(self):
        return self.values.size

    @cached_property
    def x(self):
        x = self.x_min + self.dx * np.arange(self.n)
        x.flags.writeable = False
        return x

    @property
    def x_max(self):
        return self.x_min + self.dx * (self.n - 1)

    def index_of(self, x):
        return int(round((x - self.x_min) / self.dx))

    def same_grid(self, other):
        return (self.n == other.n and np.isclose(self.x_min, other.x_min, rtol=0, atol=1e-12 * self.dx)
                and np.isclose(self.dx, other.dx, rtol=1e-12, atol=0))

    def with_values(self, values, tail=None):
        return GridFunction(self.x_min, self.dx, values, self.tail if tail is None else tail)

    @cached_property
    def _spline(self):
        return CubicSpline(self.x, self.values)

    def evaluate(self, points, nu=0):
        """Spline inside the window, tail model outside (nu = derivative order, nu <= 1 on tails)"""
        points = np.asarray(points, dtype=float)
        inside = (points >= self.x_min) & (points <= self.x_max)
        out = np.empty_like(points)
        out[inside] = self._spline(points[inside], nu)
        outside = ~inside
        if np.any(outside):
            if nu > 1:
                raise ArgumentError(f"tail models provide derivatives up to order 1, got nu={nu}")
            tail = self.tail.derivative() if nu == 1 else self.tail
            out[outside] = tail.evaluate(points[outside])
        return out

    def stitch_defect(self):
        """Relative mismatch between tail model and stored values at both window edges"""
        ends = np.array([self.x_min, self.x_max])
        mismatch = np.abs(self.tail.evaluate(ends) - self.values[[0, -1]])
        scale = max(self.tail.scale, float(np.max(np.abs(self.values))), 1e-300)
        return float(np.max(mismatch) / scale)

    def check_stitch(self, tol=1e-3):
        defect = self.stitch_defect()
        if defect > tol:
            logger.warning(f"Tail stitching defect {defect:.3e} exceeds tolerance {tol:.1e}")
        return defect

    def padded(self, pad):
        """Values extended by `pad` tail samples on both sides"""
        left = self.x_min - self.dx * np.arange(pad, 0, -1)
        right = self.x_max + self.dx * np.arange(1, pad + 1)
        return np.concatenate([self.tail.evaluate(left), self.values, self.tail.evaluate(right)])


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid x_min + k*dx, k = 0..n-1, ending at x_max"""
    x_min: float
    x_max: float
    dx: float

    def __post_init__(self):
        if not self.dx > 0:
            raise ConfigError(f"grid spacing must be positive, got {self.dx}", key_path='dx')
        if not self.x_max > self.x_min:
            raise ConfigError(f"window [{self.x_min}, {self.x_max}] is empty", key_path='window')
        if self.n < 3:
            raise ConfigError(f"grid needs at least 3 points, got {self.n}", key_path='dx')

    @classmethod
    def from_window(cls, window, dx):
        x_min, x_max = window
        return cls(float(x_min), float(x_max), float(dx))

    @property
    def n(self):
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    def points(self):
        return self.x_min + self.dx * np.arange(self.n)

    def function(self, values, tail=None):
        return GridFunction(self.x_min, self.dx, values, tail or TailModel.zero())


def offsets_for(n):
    """Number of symmetric offsets K >= n with K - 1 even (pairs of cells)"""
    return n if n % 2 == 1 else n + 1


def quadrature_weights(s, dx, n_offsets):
    """Weights w_k, k = 0..K, with int_0^{K dx} D(y) y^(-1-2s) dy ~ sum_k w_k D(k dx)

    The cell [0, dx] uses D(y) ~ D(dx) (y/dx)^2, the exact local expansion
    of the symmetric second difference. The cells beyond are grouped in pairs
    [k dx, (k+2) dx], k odd, with D interpolated quadratically and the kernel
    moments integrated exactly by Gauss-Legendre on the smooth scaled kernel.
    """
    order = as_order(s)
    s = order.s
    K = int(n_offsets)
    if K < 3 or (K - 1) % 2:
        raise ArgumentError(f"number of offsets must be odd and >= 3, got {K}")
    q = 1.0 + 2.0 * s
    scale = dx ** (-2.0 * s)
    weights = np.zeros(K + 1)
    weights[1] += scale / (2.0 - 2.0 * s)

    t = _GL_NODES + 1.0
    gw = _GL_WEIGHTS
    l0 = 0.5 * (t - 1.0) * (t - 2.0)
    l1 = -t * (t - 2.0)
    l2 = 0.5 * t * (t - 1.0)
    starts = np.arange(1, K - 1, 2)
    kernel = (starts[:, None] + t[None, :]) ** (-q)
    weights[starts] += scale * (kernel @ (gw * l0))
    weights[starts + 1] += scale * (kernel @ (gw * l1))
    weights[starts + 2] += scale * (kernel @ (gw * l2))
    return weights


class FractionalLaplacian:
    """Dense reference discretisation of L_s for one order s

    Weights and far-field tail integrals are cached per grid geometry, so a
    solver that applies the operator many times on the same grid pays for
    them once. Instances are safe to share between threads.
    """

    def __init__(self, s, tail_rtol=1e-8, method='auto'):
        self.order = as_order(s)
        self.s = self.order.s
        if method not in METHODS:
            raise ConfigError(f"unknown convolution method '{method}'", key_path='operator.method')
        self.tail_rtol = tail_rtol
        self.method = method
        self._weights = {}
        self._far = {}
        self._lock = threading.Lock()

    def weights(self, dx, n_offsets):
        key = (float(dx), int(n_offsets))
        with self._lock:
            cached = self._weights.get(key)
        if cached is None:
            cached = quadrature_weights(self.order, dx, n_offsets)
            cached.flags.writeable = False
            with self._lock:
                self._weights[key] = cached
            logger.debug(f"Computed {n_offsets} quadrature weights for s={self.s}, dx={dx}")
        return cached

    def kernel_mass(self, dx, n_offsets):
        """Sum of the on-grid weights plus the analytic mass beyond R = K dx"""
        w = self.weights(dx, n_offsets)
        R = n_offsets * dx
        return float(w.sum()), R ** (-2.0 * self.s) / (2.0 * self.s)

    def spectral_radius_bound(self, f):
        """Gershgorin bound of the assembled operator on the grid of f"""
        on_grid, beyond = self.kernel_mass(f.dx, offsets_for(f.n))
        return 4.0 * on_grid + 2.0 * beyond

    def _tail_integrals(self, f, K, p):
        """J(a) = int_R^inf (a + y)^-p y^(-1-2s) dy for a = x_i - c (right) and c - x_i (left)"""
        tail = f.tail
        key = (f.n, f.x_min, f.dx, K, tail.center, p)
        with self._lock:
            cached = self._far.get(key)
        if cached is not None:
            return cached
        R = K * f.dx
        q = 2.0 * self.s + p
        a_right = f.x - tail.center
        a_left = tail.center - f.x
        if np.min(a_right) + R <= 0 or np.min(a_left) + R <= 0:
            raise ConfigError("tail centre must lie inside the grid window", key_path='tail.center')
        a = np.concatenate([a_right, a_left])

        # y = R / t, then tau = t^q removes the endpoint singularity
        def integrand(tau):
            return (a * tau ** (1.0 / q) + R) ** (-p)

        value, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsrel=self.tail_rtol, epsabs=0.0)
        value = value * R ** (-2.0 * self.s) / q
        cached = (value[:f.n], value[f.n:])
        with self._lock:
            self._far[key] = cached
        logger.debug(f"Tail integrals computed for {f.n} targets (p={p}, R={R})")
        return cached

    def _far_field(self, f, K, rows):
        """Contribution of offsets y > R = K dx for the target rows"""
        tail = f.tail
        R = K * f.dx
        mass = R ** (-2.0 * self.s) / (2.0 * self.s)
        far = -2.0 * f.values[rows] * mass
        if tail.kind == TAIL_ZERO:
            return far
        far = far + (tail.left_limit + tail.right_limit) * mass
        if tail.kind == TAIL_LAYER:
            for right, left, p in tail.power_terms():
                if right or left:
                    j_right, j_left = self._tail_integrals(f, K, p)
                    far = far - right * j_right[rows] + left * j_left[rows]
        return far

    def apply(self, f, at=None):
        """L_s f at the grid indices `at` (slice, range or None for all)"""
        if f.n < 3:
            raise ArgumentError(f"grid function needs at least 3 points, got {f.n}")
        f.tail.check_order(self.order)
        start, stop = _index_range(at, f.n)
        K = offsets_for(f.n)
        w = self.weights(f.dx, K)
        padded = f.padded(K)
        if not np.all(np.isfinite(padded)):
            raise NumericError("tail model produced non-finite pad values")
        kernel = np.concatenate([w[:0:-1], [0.0], w[1:]])
        segment = padded[start:stop + 2 * K]
        use_fft = self.method == 'fft' or (self.method == 'auto' and stop - start > AUTO_FFT_THRESHOLD)
        if use_fft:
            conv = signal.fftconvolve(segment, kernel, mode='valid')
        else:
            conv = np.convolve(segment, kernel, mode='valid')
        rows = np.arange(start, stop)
        result = conv - 2.0 * w.sum() * f.values[rows] + self._far_field(f, K, rows)
        if not np.all(np.isfinite(result)):
            raise NumericError("fractional Laplacian produced non-finite values")
        return result

    def assemble(self, n, dx):
        """Dense matrix of L_s for zero-tail functions on an n-point grid"""
        K = offsets_for(n)
        w = self.weights(dx, K)
        on_grid, beyond = self.kernel_mass(dx, K)
        column = np.empty(n)
        column[0] = -2.0 * (on_grid + beyond)
        column[1:] = w[1:n]
        return toeplitz(column)

    def exterior_mass(self, f):
        """kappa(x_i) = int over y outside the window of |x_i - y|^(-1-2s), discretely consistent"""
        ones = GridFunction(f.x_min, f.dx, np.ones(f.n), TailModel.zero())
        return -self.apply(ones)

    def apply_window(self, f):
        """PV integral restricted to the window: int_W (f(y) - f(x)) |x-y|^(-1-2s) dy"""
        inner = GridFunction(f.x_min, f.dx, f.values, TailModel.zero())
        return self.apply(inner) + f.values * self.exterior_mass(f)

    def quadratic_form(self, f, g):
        """Window-restricted energy pairing
        Q(f, g) = iint_{W x W} (f(x)-f(y)) (g(x)-g(y)) / |x-y|^(1+2s) dx dy
        """
        if not f.same_grid(g):
            raise ArgumentError("quadratic_form needs both functions on the same grid")
        return float(-2.0 * f.dx * np.dot(g.values, self.apply_window(f)))


def _index_range(at, n):
    if at is None:
        return 0, n
    if isinstance(at, (slice, range)):
        start, stop, step = at.start or 0, n if at.stop is None else at.stop, at.step or 1
        if step != 1:
            raise ArgumentError("index range must be contiguous")
    else:
        start, stop = at
    if not (0 <= start < stop <= n):
        raise ArgumentError(f"index range [{start}, {stop}) outside grid of {n} points")
    return int(start), int(stop)


@lru_cache(maxsize=32)
def get_operator(s, tail_rtol=1e-8, method='auto'):
    """Shared operator instance per (s, tolerance, method)"""
    return FractionalLaplacian(s, tail_rtol=tail_rtol, method=method)


def apply_Ls(f, s, at=None):
    """L_s f on the grid (or the index range `at`), tails included"""
    return get_operator(float(as_order(s).s)).apply(f, at)


def quadratic_form(f, g, s):
    return get_operator(float(as_order(s).s)).quadratic_form(f, g)


def apply_Ls_window(f, s):
    """PV integral of f over the window only; the tail model is ignored"""
    return get_operator(float(as_order(s).s)).apply_window(f)


def multiplier(s, omega):
    """m(s, w) with L_s cos(w x) = -m cos(w x): m = 2 w^2s int_0^inf (1 - cos t) t^(-1-2s) dt"""
    s = as_order(s).s

    def body(t):
        return (1.0 - np.cos(t)) * t ** (-1.0 - 2.0 * s)

    near, _ = integrate.quad(body, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    # int_1^inf t^(-1-2s) dt - int_1^inf cos(t) t^(-1-2s) dt (Fourier weight)
    oscillatory, _ = integrate.quad(lambda t: t ** (-1.0 - 2.0 * s), 1.0, np.inf, weight='cos', wvar=1.0)
    tail = 1.0 / (2.0 * s) - oscillatory
    return 2.0 * omega ** (2.0 * s) * (near + tail)

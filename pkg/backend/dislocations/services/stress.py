import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

ZERO = 'zero'
CONSTANT = 'constant'
SMOOTH_BUILTIN = 'smooth-builtin'
TABULATED = 'tabulated'
STRESS_KINDS = (ZERO, CONSTANT, SMOOTH_BUILTIN, TABULATED)


@dataclass(frozen=True, eq=False)
class StressField:
    """Driving stress sigma(t, x)

    zero            sigma = 0
    constant:c      sigma = c
    sine:A,k,w      sigma = A sin(k x) cos(w t)
    table:PATH.npz  bilinear interpolation of arrays t, x, values[t, x], held
                    constant outside the tabulated box
    """
    kind: str = ZERO
    parameters: tuple = ()
    spec: str = 'zero'
    table: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in STRESS_KINDS:
            raise ConfigError(f"unknown stress kind '{self.kind}'", key_path='particles.sigma')
        object.__setattr__(self, 'parameters', tuple(float(p) for p in self.parameters))
        if self.kind == TABULATED:
            t, x, values = self.table
            interpolator = RegularGridInterpolator((t, x), values, method='linear',
                                                   bounds_error=True)
            object.__setattr__(self, '_interpolator', interpolator)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def constant(cls, c):
        return cls(CONSTANT, (c,), spec=f'constant:{float(c)!r}')

    @classmethod
    def sine(cls, amplitude, k, w):
        return cls(SMOOTH_BUILTIN, (amplitude, k, w), spec=f'sine:{amplitude!r},{k!r},{w!r}')

    @classmethod
    def from_table(cls, path):
        try:
            with np.load(path) as data:
                t, x, values = (np.array(data[key], dtype=float) for key in ('t', 'x', 'values'))
        except (OSError, KeyError, ValueError) as e:
            raise ConfigError(f"cannot read stress table {path}: {e}", key_path='particles.sigma') from e
        if values.shape != (t.size, x.size):
            raise ConfigError(f"stress table values must have shape ({t.size}, {x.size}), got {values.shape}",
                              key_path='particles.sigma')
        if not np.all(np.isfinite(values)):
            raise ConfigError("stress table holds non-finite values", key_path='particles.sigma')
        if t.size < 2 or x.size < 2 or np.any(np.diff(t) <= 0) or np.any(np.diff(x) <= 0):
            raise ConfigError("stress table axes t and x need at least two strictly increasing entries",
                              key_path='particles.sigma')
        return cls(TABULATED, (), spec=f'table:{Path(path)}', table=(t, x, values))

    @classmethod
    def parse(cls, spec):
        """Build from a CLI / config spec string"""
        if isinstance(spec, StressField):
            return spec
        spec = (spec or ZERO).strip()
        name, _, args = spec.partition(':')
        try:
            if name == ZERO and not args:
                return cls.zero()
            if name == CONSTANT:
                return cls.constant(float(args))
            if name == 'sine':
                amplitude, k, w = (float(a) for a in args.split(','))
                return cls.sine(amplitude, k, w)
        except ValueError as e:
            raise ConfigError(f"malformed stress spec '{spec}': {e}", key_path='particles.sigma') from e
        if name == 'table' and args:
            return cls.from_table(args)
        raise ConfigError(f"unknown stress spec '{spec}' (zero | constant:c | sine:A,k,w | table:PATH.npz)",
                          key_path='particles.sigma')

    @property
    def is_zero(self):
        return self.kind == ZERO

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.kind == ZERO:
            return np.zeros_like(x)
        if self.kind == CONSTANT:
            return np.full_like(x, self.parameters[0])
        if self.kind == SMOOTH_BUILTIN:
            amplitude, k, w = self.parameters
            return amplitude * np.sin(k * x) * np.cos(w * t)
        return self._table_values(t, x)

    def dx(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.kind in (ZERO, CONSTANT):
            return np.zeros_like(x)
        if self.kind == SMOOTH_BUILTIN:
            amplitude, k, w = self.parameters
            return amplitude * k * np.cos(k * x) * np.cos(w * t)
        h = self._steps()[1]
        return (self._table_values(t, x + h) - self._table_values(t, x - h)) / (2 * h)

    def dt(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.kind in (ZERO, CONSTANT):
            return np.zeros_like(x)
        if self.kind == SMOOTH_BUILTIN:
            amplitude, k, w = self.parameters
            return -amplitude * w * np.sin(k * x) * np.sin(w * t)
        h = self._steps()[0]
        return (self._table_values(t + h, x) - self._table_values(t - h, x)) / (2 * h)

    def _steps(self):
        t, x, _ = self.table
        return 1e-3 * np.min(np.diff(t)), 1e-3 * np.min(np.diff(x))

    def _table_values(self, t, x):
        # held constant beyond the table edges, so |sigma| stays within the table values
        table_t, table_x, _ = self.table
        x = np.clip(np.asarray(x, dtype=float), table_x[0], table_x[-1])
        t = float(np.clip(t, table_t[0], table_t[-1]))
        points = np.stack(np.broadcast_arrays(np.full_like(x, t), x), axis=-1)
        return self._interpolator(points)

    @property
    def lipschitz_bound(self):
        """M with |sigma|, |sigma_x|, |sigma_t| <= M"""
        if self.kind == ZERO:
            return 0.0
        if self.kind == CONSTANT:
            return abs(self.parameters[0])
        if self.kind == SMOOTH_BUILTIN:
            amplitude, k, w = self.parameters
            return abs(amplitude) * max(1.0, abs(k), abs(w))
        t, x, values = self.table
        bounds = [np.max(np.abs(values))]
        if t.size > 1:
            bounds.append(np.max(np.abs(np.diff(values, axis=0) / np.diff(t)[:, None])))
        if x.size > 1:
            bounds.append(np.max(np.abs(np.diff(values, axis=1) / np.diff(x)[None, :])))
        return float(max(bounds))

    def check_bound(self, t_range, x_range, samples=201):
        """Sample |sigma|, |sigma_x|, |sigma_t| on a box and compare with M"""
        bound = self.lipschitz_bound
        worst = 0.0
        for t in np.linspace(*t_range, samples):
            x = np.linspace(*x_range, samples)
            worst = max(worst, float(np.max(np.abs(self(t, x)))),
                        float(np.max(np.abs(self.dx(t, x)))), float(np.max(np.abs(self.dt(t, x)))))
        if worst > bound * (1.0 + 1e-6) + 1e-12:
            raise ConfigError(f"sampled stress bound {worst:.6g} exceeds M={bound:.6g}", key_path='particles.sigma')
        logger.debug(f"Stress {self.spec}: sampled max {worst:.6g} <= M={bound:.6g}")
        return worst

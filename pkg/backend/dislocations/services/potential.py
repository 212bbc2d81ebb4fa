import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ArgumentError, ConfigError

logger = logging.getLogger(__name__)

BUILTIN_COSINE = 'builtin-cosine'
USER_COSINES = 'user-polynomial-of-cosines'
POTENTIAL_KINDS = (BUILTIN_COSINE, USER_COSINES)

# Points per period used to certify W > 0 away from the integers
POSITIVITY_SAMPLES = 100_000


@dataclass(frozen=True)
class PotentialSpec:
    """1-periodic multi-well potential written as a finite cosine series

    W(v) = sum_k c_k (1 - cos(2 pi k v)),  k = 1..K

    The builtin potential is the single harmonic c_1 = 1/(4 pi^2), for which
    W''(0) = 1. Evaluation is vectorised and the object is immutable.
    """
    kind: str = BUILTIN_COSINE
    coefficients: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ConfigError(f"unknown potential kind '{self.kind}'", key_path='potential.kind')
        if self.kind == BUILTIN_COSINE:
            object.__setattr__(self, 'coefficients', (1.0 / (4.0 * np.pi ** 2),))
        else:
            coefficients = tuple(float(c) for c in self.coefficients)
            if not coefficients:
                raise ConfigError("user potential needs at least one coefficient",
                                  key_path='potential.coefficients')
            if not all(np.isfinite(coefficients)):
                raise ConfigError("coefficients must be finite", key_path='potential.coefficients')
            object.__setattr__(self, 'coefficients', coefficients)
        self._validate_shape()

    @property
    def harmonics(self):
        return 2.0 * np.pi * np.arange(1, len(self.coefficients) + 1)

    @property
    def curvature_at_zero(self):
        """beta = W''(0)"""
        return float(np.dot(self.coefficients, self.harmonics ** 2))

    beta = curvature_at_zero

    def eval(self, x, order=0):
        """Evaluate W or one of its first three derivatives at x (scalar or array)"""
        if order not in (0, 1, 2, 3):
            raise ArgumentError(f"derivative order must be 0..3, got {order!r}")
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.coefficients)
        k = self.harmonics
        phase = np.multiply.outer(x, k)
        if order == 0:
            values = (c * (1.0 - np.cos(phase))).sum(axis=-1)
        elif order == 1:
            values = (c * k * np.sin(phase)).sum(axis=-1)
        elif order == 2:
            values = (c * k ** 2 * np.cos(phase)).sum(axis=-1)
        else:
            values = -(c * k ** 3 * np.sin(phase)).sum(axis=-1)
        if values.ndim == 0:
            return float(values)
        return values

    def W(self, x):
        return self.eval(x, 0)

    def dW(self, x):
        return self.eval(x, 1)

    def d2W(self, x):
        return self.eval(x, 2)

    def d3W(self, x):
        return self.eval(x, 3)

    def max_curvature(self):
        """Upper bound of |W''| used by the time-step rules"""
        return float(np.sum(np.abs(self.coefficients) * self.harmonics ** 2))

    @property
    def is_single_harmonic(self):
        return len(self.coefficients) == 1

    def _validate_shape(self):
        if self.curvature_at_zero <= 0:
            raise ConfigError(f"W''(0) must be positive, got {self.curvature_at_zero:.6g}",
                              key_path='potential.coefficients')
        samples = np.arange(1, POSITIVITY_SAMPLES) / POSITIVITY_SAMPLES
        values = self.W(samples)
        if np.min(values) <= 0:
            worst = samples[np.argmin(values)]
            raise ConfigError(f"W must be positive off the integers; W({worst:.6f}) = {np.min(values):.3e}",
                              key_path='potential.coefficients')

    def to_dict(self):
        return {'kind': self.kind, 'coefficients': list(self.coefficients)}

    @classmethod
    def from_config(cls, section):
        """Build from the validated `potential` config section"""
        spec = cls(kind=section.get('kind', BUILTIN_COSINE),
                   coefficients=tuple(section.get('coefficients') or ()))
        logger.debug(f"Potential {spec.kind} with beta={spec.beta:.6g}")
        return spec

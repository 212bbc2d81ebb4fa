import logging

import numpy as np
import pandas as pd

from . import evolution
from .config_schema import RunConfig, validate_config
from .corrector_solver import solve_corrector
from .exceptions import ConfigError
from .frac_operator import GridSpec
from .harness import compare_to_particles, supersolution_discrepancy
from .layer_solver import solve_layer
from .particle_dynamics import ParticleState, integrate
from .potential import PotentialSpec
from .stress import StressField

logger = logging.getLogger(__name__)


class Scenario:
    """Builds the service objects of one validated RunConfig"""

    def __init__(self, config):
        if not isinstance(config, RunConfig):
            config = validate_config(config)
        self.config = config
        self.hash = config.hash

    @property
    def s(self):
        return self.config.operator['s']

    def potential(self):
        return PotentialSpec.from_config(self.config.potential)

    def sigma(self):
        return StressField.parse(self.config.particles['sigma'])

    def solve_layer(self):
        section, operator = self.config.layer, self.config.operator
        return solve_layer(
            self.potential(), self.s,
            GridSpec.from_window(section['window'], section['dx']),
            section['tol'],
            max_steps=section['max_steps'],
            recenter_every=section['recenter_every'],
            cfl=section['cfl'],
            accelerate=section['accelerate'],
            tail_fit_fraction=section['tail_fit_fraction'],
            tail_rtol=operator['tail_rtol'],
            method=operator['method'],
            stitch_tol=operator['stitch_tol'],
        )

    def solve_corrector(self, layer):
        section = self.config.corrector
        return solve_corrector(layer, section['tol'], window=tuple(section['window']), stride=section['stride'],
                               constraint_weight=section['constraint_weight'],
                               tail_rtol=self.config.operator['tail_rtol'])

    def check_layer(self, layer):
        if not np.isclose(layer.s, self.s, rtol=0, atol=1e-14):
            raise ConfigError(f"layer profile was computed for s={layer.s}, config asks s={self.s}",
                              key_path='operator.s')

    def gamma(self, layer=None):
        gamma = self.config.particles['gamma']
        if gamma is None:
            if layer is None:
                raise ConfigError("gamma is required when no layer profile is given", key_path='particles.gamma')
            gamma = layer.gamma
        return gamma

    def sample_times(self):
        section = self.config.particles
        return np.linspace(0.0, section['t_end'], section['samples'])

    def trajectory(self, layer=None, delta=None):
        section = self.config.particles
        delta = section['delta'] if delta is None else delta
        state = ParticleState.start(section['positions'], self.s, self.gamma(layer), delta)
        return integrate(state, self.sigma(), t_end=section['t_end'], rtol=section['rtol'],
                         sample_times=self.sample_times(), gap_floor=section['gap_floor'], method=section['method'])

    def evolution_config(self, epsilon=None):
        section = self.config.evolution
        return evolution.EvolutionConfig(
            epsilon=section['epsilon'] if epsilon is None else float(epsilon),
            scheme=section['scheme'],
            dt_safety=section['dt_safety'],
            margin=section['margin'],
            dx=section['dx'],
            c_stab=section['c_stab'],
            c_reac=section['c_reac'],
            tail=section['tail'],
            tail_rtol=self.config.operator['tail_rtol'],
            method=self.config.operator['method'],
        )

    def evolve(self, layer, epsilon=None):
        """Samples of v_eps at the particle sample times"""
        self.check_layer(layer)
        sigma = self.sigma()
        state = evolution.initial_condition(layer, sigma, self.config.particles['positions'],
                                            config=self.evolution_config(epsilon))
        times = self.sample_times()
        return evolution.run(state, sigma, t_end=times[-1], sample_times=times)

    def convergence(self, layer, epsilon, trajectory=None):
        """Single-eps convergence report plus the evolution samples"""
        trajectory = trajectory or self.trajectory(layer, delta=0.0)
        samples = self.evolve(layer, epsilon)
        report = compare_to_particles({float(epsilon): samples}, trajectory, kappa=self.config.harness['kappa'])
        return report, samples

    def supersolution(self, layer, corrector, epsilon, delta=None):
        self.check_layer(layer)
        section = self.config.harness
        delta = section['delta'] if delta is None else delta
        return supersolution_discrepancy(
            layer, corrector, self.sigma(), delta=delta, epsilon=epsilon, t=section['t'],
            positions0=self.config.particles['positions'], mode=section['mode'],
            rtol=self.config.particles['rtol'],
        )


def samples_frame(samples):
    """Long table t, x, v of evolution snapshots"""
    return pd.concat([pd.DataFrame({'t': state.time, 'x': state.x, 'v': state.values}) for state in samples],
                     ignore_index=True)

from .frac_operator import FracOrder, GridFunction, GridSpec, TailModel, apply_Ls, quadratic_form
from .potential import PotentialSpec
from .layer_solver import LayerProfile, solve_layer, theta_exponent, verify_decay
from .corrector_solver import CorrectorProfile, solve_corrector
from .stress import StressField
from .particle_dynamics import ParticleState, integrate, velocity

__all__ = [
    'FracOrder',
    'GridFunction',
    'GridSpec',
    'TailModel',
    'apply_Ls',
    'quadratic_form',
    'PotentialSpec',
    'LayerProfile',
    'solve_layer',
    'theta_exponent',
    'verify_decay',
    'CorrectorProfile',
    'solve_corrector',
    'StressField',
    'ParticleState',
    'integrate',
    'velocity',
]

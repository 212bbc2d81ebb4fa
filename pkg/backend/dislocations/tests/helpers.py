"""Small reference solves shared by the test modules"""
import json
from functools import lru_cache
from pathlib import Path

from dislocations.services.corrector_solver import solve_corrector
from dislocations.services.frac_operator import GridSpec
from dislocations.services.layer_solver import solve_layer
from dislocations.services.potential import PotentialSpec

LAYER_WINDOW = (-30.0, 30.0)
LAYER_DX = 0.1
FINE_LAYER_DX = 0.05
CORRECTOR_WINDOW = (-20.0, 20.0)


@lru_cache(maxsize=None)
def small_layer(s=0.25):
    return solve_layer(PotentialSpec(), s, GridSpec.from_window(LAYER_WINDOW, LAYER_DX), tol=1e-6)


@lru_cache(maxsize=None)
def fine_layer(s=0.25):
    """Same window at half the spacing, converged far enough for derivative checks"""
    return solve_layer(PotentialSpec(), s, GridSpec.from_window(LAYER_WINDOW, FINE_LAYER_DX), tol=1e-9)


@lru_cache(maxsize=None)
def small_corrector(s=0.25):
    return solve_corrector(small_layer(s), tol=1e-6, window=CORRECTOR_WINDOW, stride=2)


def small_config(**sections):
    """Run config matching the small reference solves; keyword sections are merged in"""
    config = {
        'operator': {'s': 0.25},
        'layer': {'window': list(LAYER_WINDOW), 'dx': LAYER_DX, 'tol': 1e-6},
        'corrector': {'window': list(CORRECTOR_WINDOW), 'stride': 2},
        'particles': {'positions': [-3.0, 3.0], 't_end': 0.5, 'samples': 3},
        'harness': {'epsilons': [0.2, 0.1], 'supersol_epsilons': [0.2, 0.1], 't': 0.25},
    }
    for section, values in sections.items():
        config.setdefault(section, {}).update(values)
    return config


def write_config(directory, **sections):
    path = Path(directory) / 'run.json'
    path.write_text(json.dumps(small_config(**sections)), encoding='utf-8')
    return path

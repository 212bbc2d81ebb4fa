import pandas as pd

from dislocations.services.harness import half_level_crossings
from dislocations.services.profile_store import load_layer, write_csv

from ._base import LabCommand


class Command(LabCommand):
    help = 'Evolve the rescaled field v_eps from the multi-layer initial condition'
    overrides = {
        'epsilon': 'evolution.epsilon',
        'scheme': 'evolution.scheme',
        'dx': 'evolution.dx',
        'positions': 'particles.positions',
        'sigma': 'particles.sigma',
        't_end': 'particles.t_end',
        'samples': 'particles.samples',
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--layer', required=True, help='Layer profile archive')
        parser.add_argument('--epsilon', type=float)
        parser.add_argument('--positions', type=float, nargs='+')
        parser.add_argument('--sigma')
        parser.add_argument('--t-end', type=float)
        parser.add_argument('--samples', type=int)
        parser.add_argument('--scheme', choices=['explicit', 'imex-reaction'])
        parser.add_argument('--dx', type=float, help='Physical grid spacing (default eps * layer dx)')
        parser.add_argument('--out', help='Output directory')

    def run(self, **options):
        scenario = self.scenario(options)
        layer = load_layer(options['layer'])
        out = self.output_dir(options)
        eps = scenario.config.evolution['epsilon']

        samples = scenario.evolve(layer)
        crossings = []
        for k, state in enumerate(samples):
            write_csv(pd.DataFrame({'x': state.x, 'v': state.values}), out / f'v_eps={eps:g}_{k:03d}.csv',
                      scenario.hash)
            crossings.append(half_level_crossings(state.x, state.values, state.n_layers, eps, state.time))

        frame = pd.DataFrame(crossings, columns=[f'xi_{i + 1}' for i in range(samples[0].n_layers)])
        frame.insert(0, 't', [state.time for state in samples])
        write_csv(frame, out / f'crossings_eps={eps:g}.csv', scenario.hash)
        self.success(f"eps={eps}: {len(samples)} samples up to t={samples[-1].time:g} "
                     f"({samples[-1].steps} steps) -> {out}")

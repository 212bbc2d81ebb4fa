import numpy as np
import pandas as pd

from dislocations.services.frac_operator import GridSpec, offsets_for, quadrature_weights
from dislocations.services.layer_solver import verify_decay
from dislocations.services.profile_store import profile_frame, save_profile, write_csv, write_json

from ._base import LabCommand


class Command(LabCommand):
    help = 'Solve the layer equation L_s u = W\'(u) and archive the profile'
    overrides = {
        's': 'operator.s',
        'tol': 'layer.tol',
        'window': 'layer.window',
        'dx': 'layer.dx',
        'accelerate': 'layer.accelerate',
        'method': 'operator.method',
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--s', type=float, help='Order of the fractional Laplacian, 0 < s < 1/2')
        parser.add_argument('--tol', type=float, help='Residual tolerance (sup norm)')
        parser.add_argument('--window', type=float, nargs=2, metavar=('XMIN', 'XMAX'))
        parser.add_argument('--dx', type=float)
        parser.add_argument('--accelerate', choices=['none', 'newton'])
        parser.add_argument('--method', choices=['direct', 'fft', 'auto'], help='Operator application method')
        parser.add_argument('--out', help='Profile archive (.npz); CSV and JSON are written next to it')
        parser.add_argument('--dump-weights', metavar='PATH', help='Write the quadrature weights of the grid as CSV')
        parser.add_argument('--verify-decay', nargs=2, type=float, metavar=('A', 'B'),
                            help='Fit the right tail on [A, B] and write the decay table')

    def run(self, **options):
        scenario = self.scenario(options)
        archive = self.output_path(options, 'layer.npz')

        if options.get('dump_weights'):
            self.dump_weights(scenario, options['dump_weights'])

        profile = scenario.solve_layer()
        save_profile(profile, archive, scenario.hash)
        write_csv(profile_frame(profile), archive.with_suffix('.csv'), scenario.hash)
        summary = profile.header()

        if options.get('verify_decay'):
            report = verify_decay(profile, tuple(options['verify_decay']))
            write_csv(report.table, archive.with_name(f'{archive.stem}_decay.csv'), scenario.hash)
            summary['decay'] = report.to_dict()
            self.stdout.write(f"Tail slope {report.slope:.4f} (expected {report.expected_slope:.4f}), "
                              f"coefficient {report.coefficient:.4f} (expected {report.expected_coefficient:.4f})")

        write_json(summary, archive.with_suffix('.json'))
        self.success(f"Layer s={profile.s}: residual {profile.residual_norm:.3e}, gamma={profile.gamma:.10g}, "
                     f"eta={profile.eta:.10g} -> {archive}")

    def dump_weights(self, scenario, path):
        section = scenario.config.layer
        grid = GridSpec.from_window(section['window'], section['dx'])
        n_offsets = offsets_for(grid.n)
        weights = quadrature_weights(scenario.s, grid.dx, n_offsets)
        k = np.arange(n_offsets + 1)
        write_csv(pd.DataFrame({'k': k, 'y': grid.dx * k, 'weight': weights}), path, scenario.hash)
        self.stdout.write(f"Wrote {weights.size} quadrature weights to {path}")

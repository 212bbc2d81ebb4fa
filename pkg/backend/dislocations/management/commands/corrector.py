import pandas as pd

from dislocations.services.corrector_solver import (
    EDGE_RATIO_LIMIT, bump, kernel_check, solve_decay_problem, weak_residual,
)
from dislocations.services.profile_store import load_layer, profile_frame, save_profile, write_csv, write_json

from ._base import LabCommand

# (centre, radius) of the test functions of the weak-form check
TEST_BUMPS = ((0.0, 2.0), (-5.0, 5.0), (5.0, 5.0), (0.0, 20.0))


class Command(LabCommand):
    help = 'Solve the linearised corrector equation around an archived layer'
    overrides = {
        'tol': 'corrector.tol',
        'window': 'corrector.window',
        'stride': 'corrector.stride',
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--layer', required=True, help='Layer profile archive written by the layer command')
        parser.add_argument('--tol', type=float)
        parser.add_argument('--window', type=float, nargs=2, metavar=('XMIN', 'XMAX'))
        parser.add_argument('--stride', type=int, help='Use every n-th point of the layer grid')
        parser.add_argument('--out', help='Corrector archive (.npz); CSV and JSON are written next to it')
        parser.add_argument('--decay-problem', type=float, metavar='C',
                            help='Also solve -L_s v + C v = 1/(1+|x|^4s) and report its decay')

    def run(self, **options):
        scenario = self.scenario(options)
        layer = load_layer(options['layer'])
        scenario.check_layer(layer)
        archive = self.output_path(options, 'corrector.npz')

        corrector = scenario.solve_corrector(layer)
        save_profile(corrector, archive, scenario.hash)
        write_csv(profile_frame(corrector), archive.with_suffix('.csv'), scenario.hash)

        psi = corrector.psi
        residuals = []
        for c, r in TEST_BUMPS:
            phi = psi.with_values(bump(psi.x, c, r))
            residuals.append({
                'center': c,
                'radius': r,
                'relative_residual': weak_residual(layer, corrector, phi, include_multiplier=True),
                'unprojected_residual': weak_residual(layer, corrector, phi),
            })
        summary = corrector.header()
        summary.update({
            'max_abs_psi': corrector.max_abs,
            'kernel_check': kernel_check(layer),
            'weak_residuals': residuals,
        })

        if options.get('decay_problem') is not None:
            result = solve_decay_problem(scenario.s, options['decay_problem'])
            write_csv(pd.DataFrame({'x': result.v.x, 'v': result.v.values}),
                      archive.with_name('decay_problem.csv'), scenario.hash)
            summary['decay_problem'] = result.to_dict()
            self.stdout.write(f"Decay problem c={result.c}: fitted slope {result.slope:.4f}")

        write_json(summary, archive.with_suffix('.json'))
        worst = max(item['relative_residual'] for item in residuals)
        self.success(f"Corrector s={corrector.s}: system residual {corrector.system_residual:.3e}, "
                     f"solvability defect {corrector.solvability_defect:.3e}, max|psi|="
                     f"{corrector.max_abs:.6g}, weak residual <= {worst:.2e} -> {archive}")
        if corrector.edge_ratio > EDGE_RATIO_LIMIT:
            self.warn(f"psi at the window edges is {corrector.edge_ratio:.1%} of its maximum")

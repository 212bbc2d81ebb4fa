from pathlib import Path

from dislocations.services.harness import ConvergenceReport, check_convergence
from dislocations.services.profile_store import load_layer, write_csv, write_json
from dislocations.tasks import convergence_task, dispatch

from ._base import LabCommand


def convergence_sweep(scenario, layer_path, out, jobs=1):
    """One convergence job per eps, merged into a single report written to `out`"""
    epsilons = sorted(scenario.config.harness['epsilons'], reverse=True)
    calls = [{'config_data': scenario.config.to_dict(), 'layer_path': str(Path(layer_path).resolve()),
              'epsilon': eps, 'out_dir': str(out)} for eps in epsilons]
    report = ConvergenceReport.merge(dispatch(convergence_task, calls, jobs))

    write_json(report.to_dict(), out / 'convergence.json')
    write_csv(report.crossing_frame(), out / 'crossing_errors.csv', scenario.hash)
    write_csv(report.l1_frame(), out / 'l1_errors.csv', scenario.hash)
    return report


class Command(LabCommand):
    help = 'Compare half-level crossings of v_eps with the particle trajectory over an eps sweep'
    overrides = {
        'epsilons': 'harness.epsilons',
        'kappa': 'harness.kappa',
        'max_final_error': 'harness.max_final_error',
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--layer', required=True, help='Layer profile archive')
        parser.add_argument('--epsilons', type=float, nargs='+')
        parser.add_argument('--kappa', type=float, help='Exclusion radius of the bulk L1 error')
        parser.add_argument('--max-final-error', type=float)
        parser.add_argument('--jobs', type=int, default=1, help='Concurrent eps jobs')
        parser.add_argument('--no-acceptance', action='store_true', help='Report only, never exit with code 4')
        parser.add_argument('--out', help='Output directory')

    def run(self, **options):
        scenario = self.scenario(options)
        scenario.check_layer(load_layer(options['layer']))
        report = convergence_sweep(scenario, options['layer'], self.output_dir(options), options['jobs'])
        for eps, error in zip(report.epsilons, report.max_errors):
            self.stdout.write(f"  eps={eps:<8g} max crossing error {error:.4e}")

        if options['no_acceptance']:
            self.success("Convergence report written")
            return
        check_convergence(report, scenario.config.harness['max_final_error'])
        self.success(f"Crossing errors decrease in eps; final error {report.final_errors[-1]:.4e}")

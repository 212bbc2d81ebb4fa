from pathlib import Path

import pandas as pd

from dislocations.services.exceptions import ArgumentError
from dislocations.services.harness import check_supersolution, epsilon_star
from dislocations.services.profile_store import load_corrector, load_layer, write_csv, write_json
from dislocations.tasks import dispatch, supersolution_task

from ._base import LabCommand


def supersolution_sweep(scenario, layer_path, corrector_path, out, jobs=1):
    """min I_eps over the supersol eps list at delta and 2 delta; returns the summary written to `out`"""
    harness = scenario.config.harness
    delta = harness['delta']
    if not delta > 0:
        raise ArgumentError(f"supersolution sweep needs delta > 0, got {delta}")
    epsilons = sorted(harness['supersol_epsilons'], reverse=True)
    base = {'config_data': scenario.config.to_dict(), 'layer_path': str(Path(layer_path).resolve()),
            'corrector_path': str(Path(corrector_path).resolve()), 'out_dir': str(out)}
    calls = [dict(base, epsilon=eps, delta=d) for d in (delta, 2.0 * delta) for eps in epsilons]
    results = dispatch(supersolution_task, calls, jobs)
    reports, doubled = results[:len(epsilons)], results[len(epsilons):]

    summary = {
        'delta': delta,
        't': harness['t'],
        'mode': harness['mode'],
        'epsilon_star': epsilon_star(reports, delta),
        'reports': reports,
        'doubled_delta': doubled,
    }
    write_json(summary, out / 'supersolution.json')
    frame = pd.DataFrame({
        'epsilon': epsilons,
        'min_I': [report['grid_min_I'] for report in reports],
        'min_I_doubled_delta': [report['grid_min_I'] for report in doubled],
    })
    write_csv(frame, out / 'supersolution_min_I.csv', scenario.hash)
    return summary


class Command(LabCommand):
    help = 'Evaluate the supersolution discrepancy I_eps of the corrected multi-layer ansatz'
    overrides = {
        'epsilons': 'harness.supersol_epsilons',
        'delta': 'harness.delta',
        't': 'harness.t',
        'mode': 'harness.mode',
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--layer', required=True, help='Layer profile archive')
        parser.add_argument('--corrector', required=True, help='Corrector profile archive')
        parser.add_argument('--epsilons', type=float, nargs='+')
        parser.add_argument('--delta', type=float)
        parser.add_argument('--t', type=float, help='Time at which I_eps is evaluated')
        parser.add_argument('--mode', choices=['profile', 'quadrature'])
        parser.add_argument('--jobs', type=int, default=1)
        parser.add_argument('--no-acceptance', action='store_true')
        parser.add_argument('--out', help='Output directory')

    def run(self, **options):
        scenario = self.scenario(options)
        scenario.check_layer(load_layer(options['layer']))
        load_corrector(options['corrector'])
        summary = supersolution_sweep(scenario, options['layer'], options['corrector'], self.output_dir(options),
                                      options['jobs'])
        for report, doubled in zip(summary['reports'], summary['doubled_delta']):
            self.stdout.write(f"  eps={report['epsilon']:<8g} min I {report['grid_min_I']:.4e} "
                              f"(2 delta: {doubled['grid_min_I']:.4e})")

        if options['no_acceptance']:
            self.success(f"eps* = {summary['epsilon_star']}")
            return
        star = check_supersolution(summary['reports'], summary['delta'], summary['doubled_delta'])
        self.success(f"min I >= delta/4 for every eps <= {star}; doubling delta raises min I")

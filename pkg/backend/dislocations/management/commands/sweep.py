from dislocations.services.exceptions import AcceptanceError
from dislocations.services.harness import check_convergence, check_supersolution
from dislocations.services.profile_store import load_corrector, load_layer, save_profile, write_json

from ._base import LabCommand
from .compare import convergence_sweep
from .supersol import supersolution_sweep


class Command(LabCommand):
    help = 'Full scenario: layer, corrector, convergence sweep and supersolution sweep'
    overrides = {
        's': 'operator.s',
        'epsilons': 'harness.epsilons',
        'supersol_epsilons': 'harness.supersol_epsilons',
        'delta': 'harness.delta',
    }

    def add_lab_arguments(self, parser):
        parser.add_argument('--s', type=float)
        parser.add_argument('--layer', help='Reuse a layer archive instead of solving')
        parser.add_argument('--corrector', help='Reuse a corrector archive instead of solving')
        parser.add_argument('--epsilons', type=float, nargs='+')
        parser.add_argument('--supersol-epsilons', type=float, nargs='+')
        parser.add_argument('--delta', type=float)
        parser.add_argument('--skip-supersol', action='store_true')
        parser.add_argument('--jobs', type=int, default=1, help='Concurrent scenario jobs')
        parser.add_argument('--no-acceptance', action='store_true')
        parser.add_argument('--out', help='Output directory')

    def run(self, **options):
        scenario = self.scenario(options)
        out = self.output_dir(options)

        layer_path = options.get('layer')
        if layer_path:
            layer = load_layer(layer_path)
            scenario.check_layer(layer)
        else:
            layer = scenario.solve_layer()
            layer_path = save_profile(layer, out / 'layer.npz', scenario.hash)
        self.stdout.write(f"Layer: gamma={layer.gamma:.10g}, residual {layer.residual_norm:.3e}")

        convergence = convergence_sweep(scenario, layer_path, out, options['jobs'])
        summary = {'config_hash': scenario.hash, 'convergence': convergence.to_dict()}

        if not options['skip_supersol']:
            corrector_path = options.get('corrector')
            if corrector_path:
                load_corrector(corrector_path)
            else:
                corrector_path = save_profile(scenario.solve_corrector(layer), out / 'corrector.npz', scenario.hash)
            summary['supersolution'] = supersolution_sweep(scenario, layer_path, corrector_path, out,
                                                           options['jobs'])
        write_json(summary, out / 'sweep.json')

        if options['no_acceptance']:
            self.success(f"Sweep written to {out}")
            return
        failures = []
        try:
            check_convergence(convergence, scenario.config.harness['max_final_error'])
        except AcceptanceError as e:
            failures.append(f"convergence: {e}")
        if 'supersolution' in summary:
            supersol = summary['supersolution']
            try:
                check_supersolution(supersol['reports'], supersol['delta'], supersol['doubled_delta'])
            except AcceptanceError as e:
                failures.append(f"supersolution: {e}")
        if failures:
            raise AcceptanceError('; '.join(failures))
        self.success(f"All acceptance checks passed -> {out}")

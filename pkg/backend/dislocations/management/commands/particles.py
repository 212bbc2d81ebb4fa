import numpy as np

from dislocations.services.particle_dynamics import two_body_gap
from dislocations.services.profile_store import load_layer, write_csv

from ._base import LabCommand


class Command(LabCommand):
    help = 'Integrate the particle system of dislocation positions'
    overrides = {
        's': 'operator.s',
        'gamma': 'particles.gamma',
        'positions': 'particles.positions',
        'sigma': 'particles.sigma',
        'delta': 'particles.delta',
        't_end': 'particles.t_end',
        'rtol': 'particles.rtol',
        'samples': 'particles.samples',
    }

    def add_lab_arguments(self, parser):
        source = parser.add_mutually_exclusive_group()
        source.add_argument('--layer', help='Take gamma (and s) from a layer profile archive')
        source.add_argument('--gamma', type=float, help='Mobility 1 / int u\'^2')
        parser.add_argument('--s', type=float)
        parser.add_argument('--positions', type=float, nargs='+', help='Initial positions, strictly increasing')
        parser.add_argument('--sigma', help="Stress field: zero, constant:c, sine:A,k,w or table:PATH.npz")
        parser.add_argument('--delta', type=float, help='Shift of the driving force')
        parser.add_argument('--t-end', type=float)
        parser.add_argument('--rtol', type=float)
        parser.add_argument('--samples', type=int, help='Number of equally spaced output times')
        parser.add_argument('--out', help='Trajectory CSV')

    def run(self, **options):
        layer = None
        if options.get('layer'):
            layer = load_layer(options['layer'])
            if options.get('s') is None:
                options['s'] = layer.s
        scenario = self.scenario(options)
        if layer is not None:
            scenario.check_layer(layer)

        trajectory = scenario.trajectory(layer)
        frame = trajectory.to_frame()
        if trajectory.n == 2 and scenario.sigma().is_zero and trajectory.delta == 0:
            gap0 = trajectory.positions[0, 1] - trajectory.positions[0, 0]
            frame['gap'] = trajectory.positions[:, 1] - trajectory.positions[:, 0]
            frame['gap_exact'] = two_body_gap(gap0, trajectory.gamma, trajectory.s, trajectory.times)
            error = np.max(np.abs(frame['gap'] / frame['gap_exact'] - 1.0))
            self.stdout.write(f"Two-body gap relative error {error:.3e}")

        path = write_csv(frame, self.output_path(options, 'particles.csv'), scenario.hash)
        self.success(f"{trajectory.n} particles integrated to t={trajectory.times[-1]:g} in {trajectory.steps} "
                     f"steps -> {path}")

import logging
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd
from celery import current_app, group, shared_task

from .services.exceptions import DislocationLabError
from .services.profile_store import load_corrector, load_layer, write_csv
from .services.scenarios import Scenario, samples_frame

logger = logging.getLogger(__name__)


@shared_task(bind=True)
def convergence_task(self, config_data, layer_path, epsilon, out_dir=None):
    """Evolve one eps of the sweep and compare its crossings with the particle trajectory"""
    logger.info(f"Convergence job eps={epsilon} (task {self.request.id})")
    try:
        scenario = Scenario(config_data)
        layer = load_layer(layer_path)
        report, samples = scenario.convergence(layer, epsilon)
        if out_dir:
            write_csv(samples_frame(samples), Path(out_dir) / f'evolution_eps={epsilon:g}.csv', scenario.hash)
        return report.to_dict()
    except DislocationLabError as ex:
        logger.error(f"Convergence job eps={epsilon} failed: {ex}")
        raise
    except Exception as ex:
        logger.error(f"Unexpected error in convergence_task: {str(ex)}")
        logger.error(traceback.format_exc())
        raise


@shared_task(bind=True)
def supersolution_task(self, config_data, layer_path, corrector_path, epsilon, delta, out_dir=None):
    """Residual I_eps of the corrected ansatz for one (eps, delta)"""
    logger.info(f"Supersolution job eps={epsilon}, delta={delta} (task {self.request.id})")
    try:
        scenario = Scenario(config_data)
        report = scenario.supersolution(load_layer(layer_path), load_corrector(corrector_path), epsilon, delta)
        if out_dir:
            field = report.I_field
            write_csv(pd.DataFrame({'x': field.x, 'I': field.values}),
                      Path(out_dir) / f'supersol_eps={epsilon:g}_delta={delta:g}.csv', scenario.hash)
        return report.to_dict()
    except DislocationLabError as ex:
        logger.error(f"Supersolution job eps={epsilon} failed: {ex}")
        raise
    except Exception as ex:
        logger.error(f"Unexpected error in supersolution_task: {str(ex)}")
        logger.error(traceback.format_exc())
        raise


def dispatch(task, calls, jobs=1):
    """Run task(**kwargs) for every kwargs in `calls`; results keep the order of `calls`

    Eager mode runs in-process on at most `jobs` threads; with a broker the
    calls go out as one Celery group.
    """
    calls = list(calls)
    if not current_app.conf.task_always_eager:
        logger.info(f"Dispatching {len(calls)} {task.name} jobs to workers")
        return group(task.s(**kwargs) for kwargs in calls).apply_async().get()

    def run(kwargs):
        return task.apply(kwargs=kwargs).get()

    if jobs <= 1:
        return [run(kwargs) for kwargs in calls]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, calls))

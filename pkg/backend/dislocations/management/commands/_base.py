import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from dislocations.services.config_schema import parse_config
from dislocations.services.exceptions import DislocationLabError
from dislocations.services.scenarios import Scenario

logger = logging.getLogger(__name__)


class LabCommand(BaseCommand):
    """Base of the lab subcommands: config loading, output directory, exit codes

    Subclasses implement run(**options) and declare their own flags in
    add_lab_arguments(parser). Flags listed in `overrides` map a CLI option
    onto a dotted config key and win over the config file.
    """
    overrides = {}

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON run configuration (defaults are used for missing keys)')
        self.add_lab_arguments(parser)

    def add_lab_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except DislocationLabError as e:
            logger.error(f"{type(e).__name__}: {e}")
            self.stderr.write(self.style.ERROR(f"{type(e).__name__}: {e}"))
            raise CommandError(str(e), returncode=e.exit_code) from e

    def run(self, **options):
        raise NotImplementedError

    def scenario(self, options):
        overrides = {key: options.get(option) for option, key in self.overrides.items()}
        return Scenario(parse_config(options.get('config'), overrides))

    @staticmethod
    def output_dir(options, name='out'):
        path = Path(options.get(name) or settings.DISLOCATIONS_OUTPUT_DIR)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def output_path(options, default_name, name='out'):
        """Explicit --out file, or `default_name` inside the default output directory"""
        if options.get(name):
            path = Path(options[name])
        else:
            path = Path(settings.DISLOCATIONS_OUTPUT_DIR) / default_name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def warn(self, message):
        self.stdout.write(self.style.WARNING(message))

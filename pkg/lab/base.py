import json
import logging
import os
import shutil
import socket
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from torus.conf import lab_overrides

from .exceptions import ConfigurationError, InvalidRunConfig, NumericalError
from .models import RunConfig

logger = logging.getLogger(__name__)


@dataclass
class Artifact:
    """One output file; ``write(path)`` is only called after the computation succeeded."""

    name: str
    write: Callable


@dataclass
class CommandResult:
    artifacts: list = field(default_factory=list)
    summary: str = ''
    timings: dict = field(default_factory=dict)


class LabCommand(BaseCommand):
    """
    Shared surface of the lab subcommands: --config, --out, --workers, --svg.
    Subclasses implement compute(run, workers, svg, out) -> CommandResult.
    Configuration errors exit with 2, numerical failures with 1; files are
    staged next to the output directory and moved in only on success.
    """

    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Run configuration (JSON)')
        parser.add_argument('--out', help='Output directory (default: config "output" or LAB_OUTPUT_DIR/<config name>)')
        parser.add_argument('--workers', type=int, help='Worker cap for grid scans (default: LAB_WORKERS)')
        parser.add_argument('--svg', action='store_true', help='Also write SVG plots')

    def compute(self, run: RunConfig, workers, svg, out):
        raise NotImplementedError

    def load(self, path):
        try:
            return RunConfig.from_json(path)
        except InvalidRunConfig as exc:
            for field_path, message in sorted(exc.errors.items()):
                self.stderr.write(f'{field_path}: {message}')
            raise CommandError(str(exc), returncode=2) from exc
        except ConfigurationError as exc:
            raise CommandError(str(exc), returncode=2) from exc

    def output_dir(self, run, options):
        if options.get('out'):
            return Path(options['out'])
        return run.output_dir(Path(settings.LAB_OUTPUT_DIR) / Path(options['config']).stem)

    def handle(self, *args, **options):
        run = self.load(options['config'])
        workers = options.get('workers')
        if workers is None:
            workers = settings.LAB_WORKERS
        if workers < 1:
            raise CommandError(f'--workers must be >= 1, got {workers}', returncode=2)
        out = self.output_dir(run, options)
        out.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=f'.{out.name}-', dir=out.parent))
        started = time.monotonic()
        try:
            with lab_overrides(run.overrides()):
                result = self.compute(run, workers=workers, svg=options.get('svg', False), out=out)
                for artifact in result.artifacts:
                    artifact.write(staging / artifact.name)
            elapsed = time.monotonic() - started
            self.write_meta(staging / f'{self.command_name()}_meta.json', run, workers, result, elapsed)
            self.publish(staging, out)
        except ConfigurationError as exc:
            raise CommandError(f'configuration error: {exc}', returncode=2) from exc
        except NumericalError as exc:
            raise CommandError(f'numerical failure ({type(exc).__name__}): {exc}', returncode=1) from exc
        finally:
            shutil.rmtree(staging, ignore_errors=True)

        if result.summary:
            self.stdout.write(result.summary)
        names = ', '.join(a.name for a in result.artifacts)
        self.stdout.write(self.style.SUCCESS(f'{self.command_name()}: wrote {names} to {out} in {elapsed:.1f}s'))

    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def write_meta(self, path, run, workers, result, elapsed):
        """Timestamps and host live here so the other files stay reproducible."""
        meta = {
            'command': self.command_name(),
            'config': run.source,
            'run': run.describe(),
            'timestamp': timezone.now().isoformat(),
            'host': socket.gethostname(),
            'workers': workers,
            'elapsed': elapsed,
            'timings': result.timings,
            'files': [a.name for a in result.artifacts],
        }
        path.write_text(json.dumps(meta, indent=2, default=str))

    def publish(self, staging, out):
        out.mkdir(parents=True, exist_ok=True)
        for item in staging.iterdir():
            os.replace(item, out / item.name)
        logger.info('published %s', out)

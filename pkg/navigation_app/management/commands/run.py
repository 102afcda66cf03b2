import contextlib

from django.core.management.base import BaseCommand, CommandError

from navigation_app.exceptions import NavigationError
from navigation_app.experiment_service import load_scenario_file, run_single
from navigation_app.models import RunRecord, Variant

from ._common import add_config_arguments, config_from_options, load_map


class Command(BaseCommand):
    help = 'Runs one scenario and reports the outcome; optionally writes the trace and the coordination event log.'

    def add_arguments(self, parser):
        parser.add_argument('map', help='Path to a MovingAI .map file.')
        parser.add_argument('scen', help='Path to a MovingAI .scen file.')
        parser.add_argument('--agents', type=int, help='Use only the first N start/goal pairs.')
        parser.add_argument('--trace', help='Write the per-step trace (JSON lines) here.')
        parser.add_argument('--events', help='Write the coordination event log (JSON lines) here.')
        parser.add_argument('--save', action='store_true', help='Store the outcome as a RunRecord.')
        add_config_arguments(parser)

    def handle(self, *args, **options):
        grid = load_map(options['map'])
        config = config_from_options(options)
        try:
            scenario = load_scenario_file(options['scen'])
            if options['agents']:
                scenario = scenario.prefix(options['agents'])
        except OSError as exc:
            raise CommandError(f"Cannot read scenario file {options['scen']}: {exc.strerror}") from exc
        except (NavigationError, ValueError) as exc:
            raise CommandError(f"Invalid scenario: {exc}") from exc

        variant = Variant.COORDINATION if config.coordination_enabled else Variant.BASELINE
        self.stdout.write(self.style.NOTICE(
            f"Running {len(scenario)} agent(s) on {grid.name} ({Variant(variant).label})..."
        ))
        try:
            with contextlib.ExitStack() as stack:
                trace = stack.enter_context(open(options['trace'], 'w', encoding='utf-8')) if options['trace'] else None
                events = stack.enter_context(open(options['events'], 'w', encoding='utf-8')) if options['events'] else None
                result = run_single(grid, scenario, config, trace, events)
        except OSError as exc:
            raise CommandError(f"Cannot write {exc.filename}: {exc.strerror}") from exc

        if options['save']:
            record = RunRecord(
                map_name=grid.name,
                scenario=options['scen'],
                agents=len(scenario),
                variant=variant,
                outcome=result.outcome,
                reason=result.reason or '',
                steps_used=result.steps_used,
                makespan=result.makespan,
                flowtime=result.flowtime,
                events=sum(result.event_counts.values()),
            )
            record.full_clean()
            record.save()

        style = self.style.SUCCESS if result.success else self.style.ERROR
        self.stdout.write(style(result.summary()))

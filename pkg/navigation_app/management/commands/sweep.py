import glob
import math
import os

from django.core.management.base import BaseCommand, CommandError
from django.db import transaction

from navigation_app.exceptions import NavigationError
from navigation_app.experiment_service import (
    VARIANTS,
    SweepSpec,
    generate_scenarios,
    load_scenario_file,
    run_sweep,
    sweep_csv_text,
    write_sweep_csv,
)
from navigation_app.models import SweepResult

from ._common import add_config_arguments, config_from_options, load_map


def _counts(text):
    try:
        return tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise CommandError(f"Agent counts must be comma-separated integers, got '{text}'.") from None


class Command(BaseCommand):
    help = 'Runs every map x variant x agent count x scenario and writes the success-rate table as CSV.'

    def add_arguments(self, parser):
        parser.add_argument('maps', nargs='+', help='MovingAI .map files.')
        source = parser.add_mutually_exclusive_group()
        source.add_argument('--scen-dir', help='Directory holding <map name>-*.scen files.')
        source.add_argument('--generate', choices=['gaps', 'rooms'], help='Generate scenarios of this kind instead.')
        parser.add_argument('--scenarios', type=int, default=250, help='Scenarios per map when generating.')
        parser.add_argument('--agents', default='5,10,15,20,25,30,35,40', help='Comma-separated agent counts.')
        parser.add_argument('--variant', choices=VARIANTS, action='append',
                            help='Pipeline variant; repeat for several (default: both).')
        parser.add_argument('--jobs', type=int, default=1, help='Parallel worker processes.')
        parser.add_argument('--output', '-o', help='CSV path (default: standard output).')
        parser.add_argument('--save', action='store_true', help='Store the rows as SweepResult records.')
        parser.add_argument('--label', default='sweep', help='Sweep name used with --save.')
        add_config_arguments(parser)

    def handle(self, *args, **options):
        config = config_from_options(options)
        counts = _counts(options['agents'])
        maps, scenarios = {}, {}
        for path in options['maps']:
            grid = load_map(path)
            maps[grid.name] = grid
            scenarios[grid.name] = self._scenarios(grid, options, counts, config)

        spec = SweepSpec(
            maps=maps,
            scenarios=scenarios,
            agent_counts=counts,
            variants=tuple(options['variant'] or VARIANTS),
            config=config,
            jobs=max(1, options['jobs']),
        )
        # status lines go to stderr when the CSV itself is on stdout
        status = self.stdout if options['output'] else self.stderr
        total = sum(len(s) for s in scenarios.values()) * len(spec.variants) * len(counts)
        status.write(self.style.NOTICE(f"Sweeping {total} run(s) with {spec.jobs} worker(s)..."))
        try:
            table = run_sweep(spec)
        except ValueError as exc:
            raise CommandError(str(exc)) from exc

        if options['output']:
            try:
                with open(options['output'], 'w', encoding='utf-8', newline='') as handle:
                    write_sweep_csv(table, handle)
            except OSError as exc:
                raise CommandError(f"Cannot write {options['output']}: {exc.strerror}") from exc
        else:
            self.stdout.write(sweep_csv_text(table), ending="")

        if options['save']:
            self._save(table, options['label'], scenarios)
        status.write(self.style.SUCCESS(f"Sweep complete: {len(table)} row(s)."))

    def _scenarios(self, grid, options, counts, config):
        needed = max(counts) if counts else 1
        try:
            if options['generate']:
                return generate_scenarios(
                    grid, options['generate'], options['scenarios'], needed, config.seed, config,
                )
            if not options['scen_dir']:
                return []
            paths = sorted(glob.glob(os.path.join(options['scen_dir'], f"{grid.name}-*.scen")))
            return [load_scenario_file(path) for path in paths]
        except OSError as exc:
            raise CommandError(f"Cannot read scenario file {exc.filename}: {exc.strerror}") from exc
        except (NavigationError, ValueError) as exc:
            raise CommandError(str(exc)) from exc

    @transaction.atomic
    def _save(self, table, label, scenarios):
        for row in table.itertuples(index=False):
            SweepResult.objects.update_or_create(
                label=label,
                map_name=row.map,
                variant=row.variant,
                agents=int(row.agents),
                defaults={
                    'scenarios': len(scenarios.get(row.map, [])),
                    'success_rate': float(row.success_rate),
                    'mean_makespan_success': _optional(row.mean_makespan_success),
                    'mean_flowtime_success': _optional(row.mean_flowtime_success),
                    'failures_by_reason': row.failures_by_reason,
                },
            )


def _optional(value):
    value = float(value)
    return None if math.isnan(value) else value

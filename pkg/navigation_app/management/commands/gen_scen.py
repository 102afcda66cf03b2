import os

from django.core.management.base import BaseCommand, CommandError

from navigation_app.exceptions import NavigationError
from navigation_app.experiment_service import generate_scenarios, write_scenario_file

from ._common import config_from_options, load_map


class Command(BaseCommand):
    help = 'Samples start/goal scenarios for a map and writes them as MovingAI .scen files.'

    def add_arguments(self, parser):
        parser.add_argument('map', help='Path to a MovingAI .map file.')
        parser.add_argument('kind', choices=['gaps', 'rooms'])
        parser.add_argument('--count', type=int, default=250, help='Number of scenarios.')
        parser.add_argument('--agents', type=int, default=40, help='Start/goal pairs per scenario.')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--config', help='Flat key=value file (radius and buffer set the spacing).')
        parser.add_argument('--output-dir', '-o', default='.')

    def handle(self, *args, **options):
        grid = load_map(options['map'])
        config = config_from_options({'config': options['config']})
        try:
            scenarios = generate_scenarios(
                grid, options['kind'], options['count'], options['agents'], options['seed'], config,
            )
        except (NavigationError, ValueError) as exc:
            raise CommandError(str(exc)) from exc

        directory = options['output_dir']
        try:
            os.makedirs(directory, exist_ok=True)
            for index, scenario in enumerate(scenarios):
                write_scenario_file(os.path.join(directory, f"{grid.name}-{index:03d}.scen"), scenario, grid)
        except OSError as exc:
            raise CommandError(f"Cannot write scenarios to {directory}: {exc.strerror}") from exc
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {len(scenarios)} scenario(s) of {options['agents']} agents to {directory}"
        ))

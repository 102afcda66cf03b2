from django.core.management.base import BaseCommand, CommandError

from navigation_app.grid_world import generate_gaps_map, generate_rooms_map, to_movingai_text


class Command(BaseCommand):
    help = 'Generates a gaps or rooms map in MovingAI .map format.'

    def add_arguments(self, parser):
        parser.add_argument('kind', choices=['gaps', 'rooms'])
        parser.add_argument('--size', type=int, default=64)
        parser.add_argument('--passages', type=int, default=1, help='gaps: number of wall passages (1-4).')
        parser.add_argument('--wall-thickness', type=int, default=1)
        parser.add_argument('--gap-width', type=int, default=1)
        parser.add_argument('--room-size', type=int, default=15, help='rooms: side of one room in cells.')
        parser.add_argument('--door-width', type=int, default=1)
        parser.add_argument('--seed', type=int, default=0, help='rooms: door placement seed.')
        parser.add_argument('--output', '-o', help='Write to this file instead of standard output.')

    def handle(self, *args, **options):
        try:
            if options['kind'] == 'gaps':
                grid = generate_gaps_map(
                    options['size'], options['passages'], options['wall_thickness'], options['gap_width'],
                )
            else:
                grid = generate_rooms_map(
                    options['size'], options['room_size'], options['door_width'], options['seed'],
                )
        except ValueError as exc:
            raise CommandError(str(exc)) from exc

        text = to_movingai_text(grid)
        if not options['output']:
            self.stdout.write(text, ending='')
            return
        try:
            with open(options['output'], 'w', encoding='utf-8') as handle:
                handle.write(text)
        except OSError as exc:
            raise CommandError(f"Cannot write {options['output']}: {exc.strerror}") from exc
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {grid.name} ({grid.width}x{grid.height}, {grid.blocked_count} blocked) to {options['output']}"
        ))

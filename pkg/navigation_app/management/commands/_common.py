from django.core.exceptions import ImproperlyConfigured
from django.core.management.base import CommandError

from navigation_app.config import parse_assignments, resolve_config
from navigation_app.exceptions import NavigationError
from navigation_app.grid_world import read_movingai_map


def add_config_arguments(parser):
    parser.add_argument('--config', help='Flat key=value file overriding the settings defaults.')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one simulation setting; may be repeated.')
    parser.add_argument('--seed', type=int, help='Random seed.')
    parser.add_argument('--max-steps', type=int, help='Step limit per run.')
    parser.add_argument('--no-coordination', action='store_true',
                        help='ORCA-only baseline: never form coordinated groups.')


def config_from_options(options):
    try:
        overrides = parse_assignments(options.get('set'))
        if options.get('seed') is not None:
            overrides['seed'] = options['seed']
        if options.get('max_steps') is not None:
            overrides['max_steps'] = options['max_steps']
        if options.get('no_coordination'):
            overrides['coordination_enabled'] = False
        return resolve_config(options.get('config'), **overrides)
    except ImproperlyConfigured as exc:
        raise CommandError(f"Invalid configuration: {exc}") from exc
    except OSError as exc:
        raise CommandError(f"Cannot read config file {exc.filename}: {exc.strerror}") from exc


def load_map(path):
    try:
        return read_movingai_map(path)
    except OSError as exc:
        raise CommandError(f"Cannot read map file {path}: {exc.strerror}") from exc
    except NavigationError as exc:
        raise CommandError(f"Invalid map file: {exc}") from exc

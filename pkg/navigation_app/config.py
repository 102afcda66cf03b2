import dataclasses
from dataclasses import dataclass, fields

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class SimConfig:
    """
    All tunable constants of one simulation run.

    Distances are in cell units (a grid cell is 1.0 wide) and times in
    simulation time units. The defaults here mirror settings.NAVIGATION so
    the library can be used without Django settings being configured.
    """
    dt: float = 0.25
    agent_radius: float = 0.3
    safe_buffer: float = 0.19
    max_speed: float = 1.0
    visibility_range: float = 3.0
    trigger_k: int = 3
    max_steps: int = 12800
    tau: float = 5.0
    tau_obst: float = 2.0
    max_neighbors: int = 10
    coordination_enabled: bool = True
    seed: int = 0
    waypoint_epsilon: float = 0.25
    goal_epsilon: float = 0.15
    start_epsilon: float = 0.1
    symmetry_perturbation: float = 1e-3
    formation_cooldown: int = 50
    dissolve_cooldown: int = 10
    square_area: bool = True
    trajectory_tolerance: float = 0.5

    @property
    def clearance(self):
        """Radius used by the planner and by ORCA: body plus safe buffer."""
        return self.agent_radius + self.safe_buffer

    @classmethod
    def from_settings(cls, **overrides):
        values = dict(getattr(settings, "NAVIGATION", {}))
        values.update(overrides)
        config = cls(**_coerce_all(values))
        config.validate()
        return config

    def replace(self, **overrides):
        """Returns a validated copy with the non-None overrides applied."""
        changes = {key: value for key, value in overrides.items() if value is not None}
        config = dataclasses.replace(self, **_coerce_all(changes))
        config.validate()
        return config

    def validate(self):
        if self.dt <= 0:
            raise ImproperlyConfigured("dt must be positive.")
        if self.max_steps <= 0:
            raise ImproperlyConfigured("max_steps must be positive.")
        if self.agent_radius <= 0 or self.max_speed <= 0:
            raise ImproperlyConfigured("agent_radius and max_speed must be positive.")
        if self.safe_buffer < 0:
            raise ImproperlyConfigured("safe_buffer cannot be negative.")
        if self.max_speed * self.dt > 2 * self.agent_radius + 1e-12:
            raise ImproperlyConfigured(
                f"max_speed*dt = {self.max_speed * self.dt} exceeds 2*agent_radius = "
                f"{2 * self.agent_radius}; agents could tunnel through each other."
            )
        if self.visibility_range <= self.agent_radius:
            raise ImproperlyConfigured("visibility_range must exceed agent_radius.")
        if self.trigger_k < 1:
            raise ImproperlyConfigured("trigger_k must be at least 1.")
        if self.tau <= 0 or self.tau_obst <= 0:
            raise ImproperlyConfigured("ORCA time horizons must be positive.")
        if self.max_neighbors < 1:
            raise ImproperlyConfigured("max_neighbors must be at least 1.")
        return self


def _field_types():
    return {f.name: f.type for f in fields(SimConfig)}


def _coerce(name, value):
    types = _field_types()
    if name not in types:
        raise ImproperlyConfigured(f"Unknown simulation setting '{name}'.")
    kind = types[name]
    if kind in (bool, "bool"):
        if isinstance(value, bool):
            return value
        word = str(value).strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise ValueError(f"'{value}' is not a boolean")
    if kind in (int, "int"):
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"'{value}' is not an integer")
        return int(value)
    return float(value)


def _coerce_all(values):
    coerced = {}
    for name, value in values.items():
        try:
            coerced[name] = _coerce(name, value)
        except ValueError as exc:
            raise ImproperlyConfigured(f"Setting '{name}': {exc}") from exc
    return coerced


def load_config_file(path):
    """
    Reads a flat key=value file into a dict of typed overrides.
    Blank lines and lines starting with '#' are ignored.
    """
    overrides = {}
    with open(path, encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ImproperlyConfigured(f"{path}:{number}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                overrides[key] = _coerce(key, value)
            except (ValueError, ImproperlyConfigured) as exc:
                raise ImproperlyConfigured(f"{path}:{number}: {exc}") from exc
    return overrides


def resolve_config(config_path=None, **overrides):
    """Settings, then the optional key=value file, then command-line overrides (None = not given)."""
    config = SimConfig.from_settings()
    if config_path:
        config = config.replace(**load_config_file(config_path))
    return config.replace(**overrides)


def parse_assignments(assignments):
    """['key=value', ...] from repeated --set flags into a dict."""
    values = {}
    for assignment in assignments or ():
        if "=" not in assignment:
            raise ImproperlyConfigured(f"Expected key=value, got '{assignment}'.")
        key, value = (part.strip() for part in assignment.split("=", 1))
        values[key] = _coerce(key, value)
    return values

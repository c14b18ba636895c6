"""Key-value experiment configuration.

Configs are INI files with a ``[model]`` and an ``[experiment]`` section.
Every key is optional; missing keys take the desk-scale defaults below.
Vector-valued keys use spaces between components and ``;`` between rows::

    [model]
    emitters = 40 40; -40 40; -40 -40; 40 -40; 0 0
    alphas = 0.95                # one value, or one per emitter
    powers = 1.0                 # P_0i, one value or one per emitter
    sample_period = 1.0          # T_s in seconds
    state_noise = 0.5            # Laplace scale of the position increments
    obs_noise = 0.5              # Laplace scale of the received-power errors
    prior_scale = 1.0            # x_0 ~ N(0, prior_scale^2 I)
    near_field = 1e-6            # distance clamp at the emitters
    speed_block = 60             # seconds per constant-velocity block
    speed_magnitude = 0.5        # m/s
    speed_directions = 1 0; 0 1; -1 0; 0 -1   # cycled block by block
    psi_centered = false         # centred logistic map for the Hilbert sort

    [experiment]
    horizon = 300                # T; times 0..T are filtered
    particle_counts = 256 1024 4096
    replicates = 20
    delta = 0.01
    reference_n = 32768
    reference_seeds = 10
    seed = 20240601
    workers = 1
"""

import configparser
from dataclasses import dataclass, field, replace

import numpy as np

from sqmc.lds import ConfigurationError, is_power_of_two
from sqmc.models import PositioningModel, loop_speeds

__all__ = ["ExperimentConfig", "ModelSettings", "load_config", "DESK_SCALE", "FULL_SCALE"]

DEFAULT_EMITTERS = ((40.0, 40.0), (-40.0, 40.0), (-40.0, -40.0), (40.0, -40.0), (0.0, 0.0))
DEFAULT_DIRECTIONS = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))

DESK_SCALE = dict(horizon=300, particle_counts=(256, 1024, 4096), replicates=20,
                  reference_n=32768)
FULL_SCALE = dict(horizon=899, particle_counts=tuple(2 ** k for k in range(8, 17)),
                  replicates=100, reference_n=2 ** 19)


@dataclass(frozen=True)
class ModelSettings:
    """Positioning-model parameters as read from a config file."""

    emitters: tuple = DEFAULT_EMITTERS
    alphas: tuple = (0.95,)
    powers: tuple = (1.0,)
    sample_period: float = 1.0
    state_noise: float = 0.5
    obs_noise: float = 0.5
    prior_scale: float = 1.0
    near_field: float = 1e-6
    speed_block: int = 60
    speed_magnitude: float = 0.5
    speed_directions: tuple = DEFAULT_DIRECTIONS
    psi_centered: bool = False

    def build(self, horizon):
        if self.speed_magnitude > 1.5:
            raise ConfigurationError("planned speed magnitude is limited to 1.5 m/s")
        speeds = loop_speeds(horizon, self.speed_block, self.speed_magnitude,
                             self.speed_directions)
        d_y = len(self.emitters)
        for name in ("alphas", "powers"):
            if len(getattr(self, name)) not in (1, d_y):
                raise ConfigurationError(f"{name} needs 1 or {d_y} values")
        try:
            return PositioningModel(
                emitters=np.array(self.emitters), speeds=speeds,
                alphas=np.array(self.alphas), powers=np.array(self.powers),
                sample_period=self.sample_period, state_noise=self.state_noise,
                obs_noise=self.obs_noise, prior_scale=self.prior_scale,
                near_field=self.near_field, psi_centered=self.psi_centered)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs of one benchmark study.

    ``model`` is any :class:`~sqmc.models.StateSpaceModel`; when it is None
    the positioning model described by ``model_settings`` is built for the
    configured horizon.
    """

    horizon: int = DESK_SCALE["horizon"]
    particle_counts: tuple = DESK_SCALE["particle_counts"]
    replicates: int = DESK_SCALE["replicates"]
    delta: float = 0.01
    reference_n: int = DESK_SCALE["reference_n"]
    reference_seeds: int = 10
    seed: int = 20240601
    trajectory_seed: int = None
    workers: int = 1
    model_settings: ModelSettings = field(default_factory=ModelSettings)
    model: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        counts = tuple(int(n) for n in self.particle_counts)
        object.__setattr__(self, "particle_counts", counts)
        if not counts or not all(is_power_of_two(n) for n in counts):
            raise ConfigurationError("particle counts must be powers of 2")
        if self.replicates < 2:
            raise ConfigurationError("at least 2 replicates are required")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if not is_power_of_two(self.reference_n) or self.reference_n < 8 * max(counts):
            raise ConfigurationError("reference_n must be a power of 2 and >= 8x the largest N")
        if self.reference_seeds < 2:
            raise ConfigurationError("reference needs at least 2 seeds")
        if self.horizon < 0:
            raise ConfigurationError("horizon must be nonnegative")
        if self.workers < 1:
            raise ConfigurationError("workers must be positive")

    def build_model(self):
        return self.model if self.model is not None else self.model_settings.build(self.horizon)

    def with_changes(self, **changes):
        return replace(self, **changes)


def _rows(text, width=None):
    rows = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            rows.append(tuple(float(v) for v in chunk.replace(",", " ").split()))
    if width is not None and any(len(r) != width for r in rows):
        raise ConfigurationError(f"expected rows of {width} numbers in {text!r}")
    return tuple(rows)


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def load_config(path=None, full_scale=False, **overrides):
    """Read an :class:`ExperimentConfig` from an INI file (or defaults).

    ``full_scale`` switches the experiment defaults to the long protocol
    (T = 899, N = 2^8..2^16, 100 replicates) before file values and
    ``overrides`` are applied.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    unknown = set(parser.sections()) - {"model", "experiment"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")

    model_kw = {}
    try:
        if parser.has_section("model"):
            sec = parser["model"]
            readers = {
                "emitters": lambda s: _rows(s, 2),
                "speed_directions": lambda s: _rows(s, 2),
                "alphas": _floats, "powers": _floats,
                "sample_period": float, "state_noise": float, "obs_noise": float,
                "prior_scale": float, "near_field": float, "speed_magnitude": float,
                "speed_block": int,
                "psi_centered": lambda s: sec.getboolean("psi_centered"),
            }
            for key, value in sec.items():
                if key not in readers:
                    raise ConfigurationError(f"unknown [model] key {key!r}")
                model_kw[key] = readers[key](value)

        exp_kw = dict(FULL_SCALE if full_scale else DESK_SCALE)
        if parser.has_section("experiment"):
            sec = parser["experiment"]
            readers = {
                "horizon": int, "replicates": int, "reference_n": int,
                "reference_seeds": int, "seed": int, "trajectory_seed": int,
                "workers": int, "delta": float,
                "particle_counts": lambda s: tuple(int(v) for v in _floats(s)),
            }
            for key, value in sec.items():
                if key not in readers:
                    raise ConfigurationError(f"unknown [experiment] key {key!r}")
                if full_scale and key in FULL_SCALE:
                    continue
                exp_kw[key] = readers[key](value)
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad config value: {exc}") from exc

    exp_kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(model_settings=ModelSettings(**model_kw), **exp_kw)

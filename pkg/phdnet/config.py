"""Scenario configuration

Defaults reproduce the reference simulation parameters. A configuration is
validated on construction; invalid values raise :py:class:`ConfigError`
naming the offending field.
"""
import dataclasses
from dataclasses import dataclass
import math
from typing import Any, Dict, Optional, Tuple

FILTER_NAMES = ('ms', 'dpphdf', 'local')
RESAMPLING_METHODS = ('multinomial', 'systematic')
BOUND_SCALES = ('component', 'trace')
KMEANS_INITS = ('k-means++', 'farthest')


class ConfigError(ValueError):
    """Invalid configuration value

    Attributes:
        field: Name of the offending configuration field
    """
    def __init__(self, field: str, reason: str, value: Any=None):
        self.field = field
        self.reason = reason
        self.value = value
        super().__init__(f"{field}: {reason} (got {value!r})")


@dataclass(frozen=True)
class ScenarioConfig(object):
    # model and sensing
    dt: float = 1.0
    n_nodes: int = 30
    sigma_r2: float = 0.1
    sigma_q2: float = 0.01
    # None keeps the per-node radii of the layout
    r_sen: Optional[float] = None
    r_com: Optional[float] = None
    # filters
    e_c: float = 6.0
    k_rough: float = 0.2
    n_p: int = 500
    p_b: float = 0.8
    p_d: float = 0.95
    p_s: float = 0.98
    lambda_fa: float = 0.1
    # evaluation
    ospa_c: float = 2.0
    ospa_p: float = 2.0
    # scenario sources, None selects the shipped reference files
    layout: Optional[str] = None
    waypoints: Optional[str] = None
    # Monte Carlo
    steps: int = 30
    runs: int = 100
    seed: int = 0
    filters: Tuple[str, ...] = FILTER_NAMES
    workers: int = 1
    # clustering
    cut_distance: float = 4.0
    fusion_cut: float = 4.0
    gate: Optional[float] = None
    weighted_centroids: bool = True
    min_cluster_mass: float = 0.5
    cloud_gap: Optional[float] = None
    kmeans_restarts: int = 10
    kmeans_init: str = 'k-means++'
    # birth
    birth_sigma_pos: Optional[float] = None
    birth_sigma_v: float = 1.0
    per_candidate_birth: bool = False
    candidate_floor: float = 0.0
    # distributed weighting and resampling
    unobserved_penalty: bool = True
    resampling: str = 'multinomial'
    # bound
    bound_per_target: bool = False
    bound_scale: str = 'component'

    def __post_init__(self):
        if isinstance(self.filters, str):
            object.__setattr__(self, 'filters', tuple(f.strip() for f in self.filters.split(',') if f.strip()))
        else:
            object.__setattr__(self, 'filters', tuple(self.filters))
        self.validate()

    @property
    def sigma_r(self) -> float:
        return math.sqrt(self.sigma_r2)

    @property
    def gate_distance(self) -> float:
        """Pre-clustering gate, 6 sigma_r unless configured"""
        return 6 * self.sigma_r if self.gate is None else self.gate

    @property
    def birth_spread(self) -> float:
        """Position standard deviation of newborn particles, sigma_r unless configured"""
        return self.sigma_r if self.birth_sigma_pos is None else self.birth_sigma_pos

    @property
    def cloud_gap_distance(self) -> float:
        """Largest gap inside one particle cloud, 3 sigma_r unless configured"""
        return 3 * self.sigma_r if self.cloud_gap is None else self.cloud_gap

    def validate(self):
        """Check every field

        Raises:
            ConfigError: for the first invalid field
        """
        def positive(name):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(name, "must be a positive number", v)

        def non_negative(name):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(name, "must be a non-negative number", v)

        def probability(name):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0 <= v <= 1):
                raise ConfigError(name, "must be a probability in [0, 1]", v)

        def integer(name, minimum):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
                raise ConfigError(name, f"must be an integer >= {minimum}", v)

        for name in ('dt', 'sigma_r2', 'e_c', 'ospa_c', 'cut_distance', 'fusion_cut', 'birth_sigma_v'):
            positive(name)
        for name in ('sigma_q2', 'k_rough', 'lambda_fa', 'min_cluster_mass', 'candidate_floor'):
            non_negative(name)
        for name in ('p_b', 'p_d', 'p_s'):
            probability(name)
        integer('n_nodes', 1)
        integer('n_p', 1)
        integer('steps', 0)
        integer('runs', 1)
        integer('seed', 0)
        integer('workers', 1)
        integer('kmeans_restarts', 1)
        if not (isinstance(self.ospa_p, (int, float)) and self.ospa_p >= 1):
            raise ConfigError('ospa_p', "must be at least 1", self.ospa_p)
        for name in ('r_sen', 'r_com', 'gate', 'cloud_gap'):
            if getattr(self, name) is not None:
                positive(name)
        if self.birth_sigma_pos is not None:
            positive('birth_sigma_pos')
        if len(self.filters) == 0:
            raise ConfigError('filters', "must name at least one filter", self.filters)
        for f in self.filters:
            if f not in FILTER_NAMES:
                raise ConfigError('filters', f"unknown filter '{f}', expected one of {FILTER_NAMES}", self.filters)
        if len(set(self.filters)) != len(self.filters):
            raise ConfigError('filters', "must not repeat a filter", self.filters)
        if self.kmeans_init not in KMEANS_INITS:
            raise ConfigError('kmeans_init', f"expected one of {KMEANS_INITS}", self.kmeans_init)
        if self.resampling not in RESAMPLING_METHODS:
            raise ConfigError('resampling', f"expected one of {RESAMPLING_METHODS}", self.resampling)
        if self.bound_scale not in BOUND_SCALES:
            raise ConfigError('bound_scale', f"expected one of {BOUND_SCALES}", self.bound_scale)

    def replace(self, **overrides) -> 'ScenarioConfig':
        """Return a validated copy with some fields replaced; None values are ignored
        """
        overrides = {k: v for k, v in overrides.items() if v is not None}
        for k in overrides:
            if k not in _FIELD_NAMES:
                raise ConfigError(k, "unknown configuration field", overrides[k])
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> Dict[str, Any]:
        ret = dataclasses.asdict(self)
        ret['filters'] = list(self.filters)
        return ret

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ScenarioConfig':
        """Build a configuration from a mapping, rejecting unknown keys
        """
        if data is None:
            data = {}
        for k in data:
            if k not in _FIELD_NAMES:
                raise ConfigError(k, "unknown configuration field", data[k])
        return cls(**data)


_FIELD_NAMES = frozenset(f.name for f in dataclasses.fields(ScenarioConfig))

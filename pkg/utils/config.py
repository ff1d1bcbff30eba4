import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from models.netstats import Partition
from models.rewire import RewiringPolicy
from models.spectral import SpectralConfig
from utils.degrees import DegreeModel

WORKERS_ENV = "REWIRE_WORKERS"

POLICY_KEYS = {
    "statistic", "p", "q", "sign", "k", "r_budget", "strict", "angle_filter", "angle_sample_size",
    "max_accepted", "max_proposals", "scc_guard", "cp_allow_peripheral_head", "max_tries", "core_fraction",
    "core_mode", "cycle_cap",
}
FRACTAL_KEYS = {"levels", "budgets", "branching"}


class ConfigError(ValueError):
    pass


def derive_seed(master_seed: int, index: Union[int, str]) -> int:
    """First 8 bytes of sha256("<master>:<index>") as an unsigned integer."""
    digest = hashlib.sha256(f"{master_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def digest_of(obj: dict) -> str:
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def resolve_steps(steps: Union[int, str], m: int) -> int:
    """An integer step count, or '<c>m' for c times the edge count."""
    if isinstance(steps, str) and steps.isdigit():
        steps = int(steps)
    if isinstance(steps, int) and not isinstance(steps, bool):
        if steps < 0:
            raise ConfigError("randomize_steps must be nonnegative")
        return steps
    if isinstance(steps, str) and steps.endswith("m"):
        try:
            c = float(steps[:-1])
        except ValueError:
            c = -1.0
        if c >= 0:
            return int(round(c * m))
    raise ConfigError(f"randomize_steps must be an integer or '<c>m', got {steps!r}")


@dataclass
class ExperimentConfig:
    n: int = 100
    degrees: str = "regular:3"
    graph: Optional[str] = None
    partition: Optional[str] = None
    randomize_steps: Union[int, str] = "10m"
    policy: dict = field(default_factory=dict)
    ensemble_size: int = 1
    stride: int = 10
    master_seed: int = 0
    tol: float = 1e-10
    max_iter: Optional[int] = None
    dense_cap: int = 2000
    output_dir: str = "runs"
    workers: Optional[int] = None

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be at least 1")
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")
        unknown = set(self.policy) - POLICY_KEYS - FRACTAL_KEYS
        if unknown:
            raise ConfigError(f"Unknown policy key(s): {sorted(unknown)}")
        self.degree_model()
        self.randomize_steps_for(1)
        for path in (self.graph, self.partition, self.degree_model().path):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"Referenced file does not exist: {path}")
        if self.policy.get("statistic") != "community" or self.partition is None:
            # community policies are checked once the partition file is read
            self.to_policy(None)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"Unknown config key(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest_dict(self) -> dict:
        """Fields that determine the outputs; worker count and output location do not."""
        d = self.to_dict()
        for key in ("workers", "output_dir"):
            d.pop(key)
        return d

    @property
    def digest(self) -> str:
        return digest_of(self.digest_dict())

    def degree_model(self) -> DegreeModel:
        return DegreeModel.parse(self.degrees)

    def randomize_steps_for(self, m: int) -> int:
        return resolve_steps(self.randomize_steps, m)

    def spectral_config(self) -> SpectralConfig:
        return SpectralConfig(tol=self.tol, max_iter=self.max_iter, dense_cap=self.dense_cap)

    @property
    def is_fractal(self) -> bool:
        return "levels" in self.policy

    def to_policy(self, partition: Optional[Partition]) -> RewiringPolicy:
        kwargs = {k: v for k, v in self.policy.items() if k in POLICY_KEYS}
        try:
            return RewiringPolicy(partition=partition, spectral=self.spectral_config(), **kwargs)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def fractal_budgets(self) -> list:
        levels = int(self.policy["levels"])
        budgets = self.policy.get("budgets")
        if budgets is None:
            budgets = [int(self.policy.get("r_budget", 3))] * levels
        if len(budgets) != levels:
            raise ConfigError(f"budgets must list {levels} values")
        return [int(b) for b in budgets]

    def resolve_workers(self) -> int:
        if self.workers is not None:
            return self.workers
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}")
            if workers < 1:
                raise ConfigError(f"{WORKERS_ENV} must be at least 1")
            return workers
        return 1

"""
Configuration loader for FedGCV experiments

Config files are YAML or JSON (JSON parses as YAML). Values of the form
${VAR} are substituted from the environment. Absent keys take the published
defaults listed in config/settings.example.yaml.
"""
import json
import os
from pathlib import Path
from typing import Any, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ConfigError
from .models import IsolatedNodePolicy, OptimizerName, Phase, Variant, WeightRule

DEFAULT_SEED = 2025

# environment variables allowed to override a parsed config
ENV_OUTPUT_DIR = "FEDGCV_OUTPUT_DIR"
ENV_WORKERS = "FEDGCV_WORKERS"

# short names accepted by `fedgcv sweep --param`
SWEEP_ALIASES = {
    "tau": "unlearn.drift_radius",
    "beta": "unlearn.npo_beta",
    "s_f": "unlearn.scale",
    "c_max": "unlearn.clip",
    "m": "unlearn.margin",
    "lambda_m": "unlearn.margin_weight",
    "gamma": "virtual.gamma",
    "tau_a": "virtual.gamma",
    "sigma_x": "virtual.sigma_x",
    "R_v": "virtual.repair_rounds",
}


class Config:
    """Raw YAML/JSON mapping with ${VAR} substitution applied"""

    def __init__(self, config_path):
        self._config_path = Path(config_path)
        self._config = self._load_config()

    @property
    def path(self) -> Path:
        return self._config_path

    def as_dict(self) -> dict:
        return self._config

    def _load_config(self) -> dict:
        """Load YAML/JSON configuration file"""
        try:
            with open(self._config_path, "r", encoding="utf-8") as f:
                config = yaml.safe_load(f)
        except OSError as e:
            raise ConfigError("<file>", f"cannot read {self._config_path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError("<file>", f"malformed config {self._config_path}: {e}") from e

        if config is None:
            config = {}
        if not isinstance(config, dict):
            raise ConfigError("<root>", "config must be a mapping")

        return self._substitute_env_vars(config)

    def _substitute_env_vars(self, obj: Any) -> Any:
        """Recursively substitute ${VAR} with environment variables"""
        if isinstance(obj, str):
            if obj.startswith("${") and obj.endswith("}"):
                var_name = obj[2:-1]
                return os.environ.get(var_name, obj)
            return obj
        elif isinstance(obj, dict):
            return {k: self._substitute_env_vars(v) for k, v in obj.items()}
        elif isinstance(obj, list):
            return [self._substitute_env_vars(item) for item in obj]
        return obj


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class TrainConfig(_Section):
    """Local client training"""
    lr: float = Field(1e-2, gt=0)
    weight_decay: float = Field(5e-4, ge=0)
    dropout: float = Field(0.5, ge=0, lt=1)
    epochs: int = Field(20, ge=0)
    batch: int = Field(128, ge=1)
    optimizer: OptimizerName = OptimizerName.SGD
    seed: Optional[int] = None


class FedConfig(_Section):
    """FedAvg training"""
    rounds: int = Field(30, ge=0)
    clients: int = Field(10, ge=2)
    participation: float = Field(1.0, gt=0, le=1)
    hidden: int = Field(64, ge=1)
    weight_rule: WeightRule = WeightRule.BY_NODE_COUNT
    train: TrainConfig = Field(default_factory=TrainConfig)
    workers: int = Field(1, ge=1)
    seed: Optional[int] = None


class UnlearnConfig(_Section):
    """Gradient-corrected NPO unlearning"""
    epochs: int = Field(30, ge=0)
    lr: float = Field(2e-2, gt=0)
    dropout: float = Field(0.3, ge=0, lt=1)
    npo_beta: float = Field(5.0, gt=0)
    scale: float = Field(50.0, ge=0)
    clip: float = Field(10.0, gt=0)
    drift_radius: float = Field(10.0, gt=0)
    margin: float = Field(0.5, ge=0)
    margin_weight: float = Field(3.0, ge=0)
    gradient_correction: bool = True
    retain_local_epochs: int = Field(1, ge=1)
    seed: Optional[int] = None


class VirtualConfig(_Section):
    """Virtual client synthesis and repair"""
    k: Optional[int] = Field(None, ge=1)
    gamma: float = Field(0.7, gt=0, lt=1)
    match_edge_count: bool = False
    sigma_x: float = Field(0.1, ge=0)
    z_dim: int = Field(16, ge=1)
    hidden: int = Field(32, ge=1)
    vgae_epochs: int = Field(200, ge=0)
    vgae_lr: float = Field(1e-2, gt=0)
    repair_rounds: int = Field(5, ge=0)
    seed: Optional[int] = None


class PartitionConfig(_Section):
    """How the dataset is split into client shards"""
    file: Optional[Path] = None
    seed: Optional[int] = None


class SweepConfig(_Section):
    """Sensitivity sweep over one hyperparameter"""
    param: str = "unlearn.drift_radius"
    values: list[float] = Field(default_factory=lambda: [2.0, 5.0, 10.0, 20.0, 50.0])
    seeds: int = Field(3, ge=1)


class ExperimentConfig(_Section):
    """Full experiment description; defaults are the published settings"""
    dataset: Path
    seed: int = DEFAULT_SEED
    target_client: int = Field(0, ge=0)
    extra_targets: list[int] = Field(default_factory=list)
    output_dir: Path = Path("./data/outputs/")
    variant: Variant = Variant.FULL
    phases: list[Phase] = Field(default_factory=lambda: [Phase.TRAIN, Phase.UNLEARN, Phase.REPAIR])
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    federation: FedConfig = Field(default_factory=FedConfig)
    unlearn: UnlearnConfig = Field(default_factory=UnlearnConfig)
    virtual: VirtualConfig = Field(default_factory=VirtualConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    workers: int = Field(1, ge=1)
    isolated_nodes: IsolatedNodePolicy = IsolatedNodePolicy.ZERO

    @model_validator(mode="after")
    def _fill_seeds(self) -> "ExperimentConfig":
        for section in (self.partition, self.federation, self.federation.train,
                        self.unlearn, self.virtual):
            if section.seed is None:
                section.seed = self.seed
        return self

    def snapshot(self) -> dict:
        """JSON-safe dump used in reports and for re-serialization"""
        return self.model_dump(mode="json")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed reset to `seed`"""
        data = self.snapshot()
        data["seed"] = seed
        for key in ("partition", "federation", "unlearn", "virtual"):
            data[key]["seed"] = None
        data["federation"]["train"]["seed"] = None
        return ExperimentConfig.model_validate(data)

    def with_override(self, key_path: str, value: Any) -> "ExperimentConfig":
        """Copy with one dotted key replaced, validated"""
        key_path = SWEEP_ALIASES.get(key_path, key_path)
        data = self.snapshot()
        node = data
        keys = key_path.split(".")
        for k in keys[:-1]:
            if k not in node or not isinstance(node[k], dict):
                raise ConfigError(key_path, "unknown key")
            node = node[k]
        if keys[-1] not in node:
            raise ConfigError(key_path, "unknown key")
        node[keys[-1]] = value
        return _validate(data, base_dir=None)


def _error_path(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def _validate(data: dict, base_dir: Optional[Path]) -> ExperimentConfig:
    if base_dir is not None:
        data = _resolve_paths(data, base_dir)
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_error_path(first), first["msg"]) from e

    clients = cfg.federation.clients
    for key, target in [("target_client", cfg.target_client)] + [
        (f"extra_targets.{i}", t) for i, t in enumerate(cfg.extra_targets)
    ]:
        if not 0 <= target < clients:
            raise ConfigError(key, f"client {target} outside [0, {clients})")
    return cfg


def _resolve_paths(data: dict, base_dir: Path) -> dict:
    data = json.loads(json.dumps(data))
    if isinstance(data.get("dataset"), str):
        path = Path(data["dataset"])
        data["dataset"] = str(path if path.is_absolute() else (base_dir / path).resolve())
    partition = data.get("partition")
    if isinstance(partition, dict) and isinstance(partition.get("file"), str):
        path = Path(partition["file"])
        partition["file"] = str(path if path.is_absolute() else (base_dir / path).resolve())
    return data


def _apply_env(data: dict) -> dict:
    load_dotenv()
    if os.environ.get(ENV_OUTPUT_DIR):
        data["output_dir"] = os.environ[ENV_OUTPUT_DIR]
    if os.environ.get(ENV_WORKERS):
        data["workers"] = os.environ[ENV_WORKERS]
    return data


def parse_config(path, overrides: Optional[dict] = None, check_files: bool = True) -> ExperimentConfig:
    """
    Parse and validate an experiment config file.

    Args:
        path: YAML or JSON config file
        overrides: top-level keys replacing file values (e.g. from the CLI)
        check_files: verify that the dataset / partition files exist

    Returns:
        Validated ExperimentConfig with defaults filled in

    Raises:
        ConfigError: with the offending key path
    """
    raw = Config(path)
    data = _apply_env(dict(raw.as_dict()))
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    if "dataset" not in data:
        raise ConfigError("dataset", "missing required key")

    cfg = _validate(data, base_dir=raw.path.parent)

    if check_files:
        if not cfg.dataset.exists():
            raise ConfigError("dataset", f"file not found: {cfg.dataset}")
        if cfg.partition.file is not None and not cfg.partition.file.exists():
            raise ConfigError("partition.file", f"file not found: {cfg.partition.file}")
    return cfg


def dump_config(cfg: ExperimentConfig, path) -> Path:
    """Write a config as JSON; parse_config on the result gives back `cfg`"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.snapshot(), f, indent=2, sort_keys=True)
    return path

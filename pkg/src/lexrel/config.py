"""Flat key=value experiment configuration with an include directive.

Grammar, one statement per line:

* ``key = value`` — later assignments override earlier ones;
* ``include <path>`` — splice another file (relative to the including
  file) at this point;
* lines starting with ``#`` and blank lines are ignored.

List-valued keys (tasks, regimes, seeds, hidden_layers) take
comma-separated values. Path keys may be overridden by the environment
variables ``LEXREL_DATASET``, ``LEXREL_EMBEDDINGS`` and
``LEXREL_OUT_DIR``.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

REGIMES = (
    "baseline_majority",
    "baseline_logreg",
    "nn_single",
    "self_learning",
    "multitask",
    "multitask_self_learning",
)
MULTITASK_REGIMES = ("multitask", "multitask_self_learning")

ENV_PATH_OVERRIDES = {
    "dataset": "LEXREL_DATASET",
    "embeddings": "LEXREL_EMBEDDINGS",
    "out_dir": "LEXREL_OUT_DIR",
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Resolve includes and return the flat key -> raw-string mapping."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    mapping: dict[str, str] = {}
    _parse_into(path, mapping, seen=set())
    return mapping


def _parse_into(path: Path, mapping: dict[str, str], seen: set[Path]) -> None:
    resolved = path.resolve()
    if resolved in seen:
        raise ConfigError(f"circular include of {path}")
    seen.add(resolved)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("include ") or stripped.startswith("include\t"):
            target = path.parent / stripped.split(None, 1)[1].strip()
            if not target.is_file():
                raise ConfigError(f"{path}:{lineno}: included file not found: {target}")
            _parse_into(target, mapping, seen)
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        mapping[key.strip()] = value.strip()
    seen.discard(resolved)


def _split_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


@dataclass
class ExperimentConfig:
    dataset: str
    embeddings: str
    tasks: tuple[str, ...]
    regimes: tuple[str, ...]
    seeds: tuple[int, ...]
    dataset_name: str = ""
    random_label: str = "random"
    out_dir: str = "runs"
    test_vocab_fraction: float = 0.4
    unlabeled_fraction: float = 0.6
    validation_fraction: float = 0.3
    split_seed: int | None = None
    hidden_layers: tuple[int, ...] = (50, 50)
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    learning_rate: float = 0.001
    rho: float = 0.9
    selflearn_n: int | None = None
    selflearn_max_iterations: int = 1000
    retrain_mode: str = "warm_start"
    logreg_lambda: float = 1.0
    logreg_epochs: int = 500
    logreg_learning_rate: float = 0.5

    def __post_init__(self) -> None:
        if not self.dataset_name:
            self.dataset_name = Path(self.dataset).stem
        if not 1 <= len(self.tasks) <= 3:
            raise ConfigError(f"tasks must list 1 to 3 relations, got {len(self.tasks)}")
        if self.random_label in self.tasks:
            raise ConfigError(f"the negative class {self.random_label!r} cannot also be a task")
        if not self.regimes:
            raise ConfigError("at least one regime is required")
        for regime in self.regimes:
            if regime not in REGIMES:
                raise ConfigError(f"unknown regime {regime!r}; expected one of {REGIMES}")
            if regime in MULTITASK_REGIMES and len(self.tasks) < 2:
                raise ConfigError(f"regime {regime!r} requires at least 2 tasks")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.retrain_mode not in ("warm_start", "from_scratch"):
            raise ConfigError(f"unknown retrain_mode {self.retrain_mode!r}")
        for path_key in ("dataset", "embeddings"):
            path = getattr(self, path_key)
            if not Path(path).is_file():
                raise ConfigError(f"{path_key} file not found: {path}")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], base_dir: str | Path = ".",
                     apply_env: bool = True) -> "ExperimentConfig":
        base = Path(base_dir)
        raw = dict(mapping)
        if apply_env:
            for key, env in ENV_PATH_OVERRIDES.items():
                if os.environ.get(env):
                    raw[key] = os.environ[env]

        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for required in ("dataset", "embeddings", "tasks", "regimes", "seeds"):
            if required not in raw:
                raise ConfigError(f"missing required config key: {required}")

        def resolve(p: str) -> str:
            q = Path(p)
            return str(q if q.is_absolute() else base / q)

        try:
            kwargs: dict = {
                "dataset": resolve(raw["dataset"]),
                "embeddings": resolve(raw["embeddings"]),
                "tasks": tuple(_split_list(raw["tasks"])),
                "regimes": tuple(_split_list(raw["regimes"])),
                "seeds": tuple(int(s) for s in _split_list(raw["seeds"])),
            }
            if "hidden_layers" in raw:
                kwargs["hidden_layers"] = tuple(int(w) for w in _split_list(raw["hidden_layers"]))
            for name, cast in (
                ("dataset_name", str), ("random_label", str), ("retrain_mode", str),
                ("test_vocab_fraction", float), ("unlabeled_fraction", float),
                ("validation_fraction", float), ("learning_rate", float), ("rho", float),
                ("logreg_lambda", float), ("logreg_learning_rate", float),
                ("batch_size", int), ("epochs", int), ("patience", int),
                ("selflearn_max_iterations", int), ("logreg_epochs", int),
            ):
                if name in raw:
                    kwargs[name] = cast(raw[name])
            if "out_dir" in raw:
                kwargs["out_dir"] = resolve(raw["out_dir"])
            if "split_seed" in raw and raw["split_seed"]:
                kwargs["split_seed"] = int(raw["split_seed"])
            # selflearn_n = 0 means "auto"
            if "selflearn_n" in raw and raw["selflearn_n"] not in ("", "0"):
                kwargs["selflearn_n"] = int(raw["selflearn_n"])
        except ValueError as exc:
            raise ConfigError(f"bad config value: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path, apply_env: bool = True) -> "ExperimentConfig":
        return cls.from_mapping(parse_config_file(path), base_dir=Path(path).parent,
                                apply_env=apply_env)

    def canonical_lines(self) -> list[str]:
        """Stable 'key=value' lines (sorted) used for the config hash."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return lines

    def config_hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.canonical_lines()).encode("utf-8"))
        return digest.hexdigest()[:16]

"""
Run configuration: INI files and command-line overrides

Values are resolved in three layers: dataclass defaults, then the config
file, then command-line flags. Section names map onto the configuration
dataclasses::

    [run]      seed, seeds, out_dir, checkpoint
    [dataset]  path, task
    [train]    TrainConfig scalars (mode, epochs, lr, embed_dim, ...)
    [loss]     gamma, constraint_mode, invariance_reduction
    [batch]    kind, fanouts, batch_size
    [probe]    epochs, lr, standardize
    [synth]    SbmConfig fields
    [bench]    BenchConfig fields
"""

import configparser
import dataclasses
import logging
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Tuple, Union

from .bench import BenchConfig
from .dataio import SbmConfig
from .exceptions import ConfigError
from .graph import read_text_lines
from .objective import ConstraintMode
from .probe import ProbeConfig, TaskKind
from .trainer import AugmentMode, TrainConfig

logger = logging.getLogger(__name__)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}
_ALL_NEIGHBORS = {"all", "-1", "none"}


@dataclass
class RunConfig:
    """
    Everything one CLI invocation needs

    Attributes:
        dataset: Dataset directory
        task: Expected task kind of the dataset (checked at evaluation)
        out_dir: Output directory of the command
        checkpoint: Checkpoint to evaluate or embed with (defaults to
            ``out_dir/best.gsrg``)
        seed: Seed shared by training, probing and data generation
        seeds: Seeds of a sweep
    """

    dataset: Optional[str] = None
    task: Optional[TaskKind] = None
    out_dir: str = "runs/latest"
    checkpoint: Optional[str] = None
    seed: int = 0
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    synth: SbmConfig = field(default_factory=SbmConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def apply_seed(self, seed: int) -> None:
        """Propagate the run seed to every seeded component"""
        self.seed = seed
        self.train.seed = seed
        self.synth.seed = seed

    def validate(self) -> None:
        if self.task is not None:
            self.task = TaskKind(self.task)
        self.train.validate()
        self.probe.validate()
        self.synth.validate()
        self.bench.validate()

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else Path(self.out_dir) / "best.gsrg"


# Section -> (attribute path on RunConfig, key aliases)
_SECTIONS = {
    "run": ((), {"out": "out_dir"}),
    "dataset": ((), {"path": "dataset", "dir": "dataset"}),
    "train": (("train",), {"d": "aug_dim"}),
    "loss": (("train", "loss"),
             {"constraint": "constraint_mode", "reduction": "invariance_reduction"}),
    "batch": (("train", "batch"), {"kind": "kind"}),
    "probe": (("probe",), {}),
    "synth": (("synth",), {}),
    "bench": (("bench",), {}),
}

_RUN_KEYS = {"run": {"seed", "seeds", "out_dir", "checkpoint"}, "dataset": {"dataset", "task"}}


def _parse_scalar(text: str, hint, key: str):
    text = text.strip()
    if hint is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(hint, type) and issubclass(hint, Enum):
        try:
            return hint(text.lower())
        except ValueError:
            choices = ", ".join(member.value for member in hint)
            raise ValueError(f"expected one of {choices}, got {text!r}") from None
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    if hint is str:
        return text
    raise ValueError(f"unsupported option type {hint} for {key}")


def parse_value(text: str, hint, key: str = "value") -> Any:
    """
    Convert option text to the type named by a dataclass field hint

    Supports ``Optional[...]`` (``none`` or empty gives None), homogeneous
    tuples (comma separated), enums, bools, ints, floats and strings.
    Fanout entries accept ``all`` for "every neighbor".
    """
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if text.strip().lower() in ("", "none", "null"):
            return None
        return parse_value(text, inner[0], key)
    if origin in (tuple, Tuple):
        element = args[0] if args else str
        items = [item for item in text.split(",") if item.strip()]
        if key == "fanouts":
            return tuple(None if item.strip().lower() in _ALL_NEIGHBORS else int(item)
                         for item in items)
        return tuple(parse_value(item, element, key) for item in items)
    return _parse_scalar(text, hint, key)


def _set_field(target, key: str, text: str, section: str) -> None:
    hints = typing.get_type_hints(type(target))
    if key not in {f.name for f in dataclasses.fields(target)}:
        raise ConfigError(f"unknown key '{key}' in section [{section}]")
    try:
        value = parse_value(text, hints[key], key)
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: {e}") from None
    setattr(target, key, value)


def _resolve(config: RunConfig, path: Tuple[str, ...]):
    target = config
    for attribute in path:
        target = getattr(target, attribute)
    return target


def apply_section(config: RunConfig, section: str, items) -> None:
    """Apply ``key = value`` pairs of one section to ``config``"""
    if section not in _SECTIONS:
        raise ConfigError(f"unknown section [{section}]")
    path, aliases = _SECTIONS[section]
    target = _resolve(config, path)
    for raw_key, text in items:
        key = raw_key.strip().lower()
        key = aliases.get(key, key)
        if section in _RUN_KEYS and key not in _RUN_KEYS[section]:
            raise ConfigError(f"unknown key '{raw_key}' in section [{section}]")
        if key == "seed" and section == "run":
            try:
                config.apply_seed(int(text))
            except ValueError:
                raise ConfigError(f"[run] seed: expected an integer, got {text!r}") from None
            continue
        _set_field(target, key, text, section)


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Build a :class:`RunConfig` from defaults and an optional INI file

    Raises:
        ConfigError: Unreadable file, unknown section or key, or a value
            that does not parse
    """
    config = RunConfig()
    if path is None:
        return config
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("\n".join(read_text_lines(path, ConfigError)), source=str(path))
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path=path) from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}", path=path) from e
    for section in parser.sections():
        try:
            apply_section(config, section.lower(), parser.items(section))
        except ConfigError as e:
            raise ConfigError(str(e), path=path) from e
    logger.debug(f"Loaded config {path}")
    return config


def apply_overrides(config: RunConfig, args) -> RunConfig:
    """
    Apply command-line flags on top of file values

    ``args`` is an argparse namespace; attributes left as None are ignored.
    """
    if getattr(args, "seed", None) is not None:
        config.apply_seed(args.seed)
    if getattr(args, "mode", None) is not None:
        config.train.mode = AugmentMode(args.mode)
    if getattr(args, "constraint", None) is not None:
        config.train.loss.constraint_mode = ConstraintMode(args.constraint)
    if getattr(args, "gamma", None) is not None:
        config.train.loss.gamma = args.gamma
    if getattr(args, "epochs", None) is not None:
        config.train.epochs = args.epochs
    if getattr(args, "out", None) is not None:
        config.out_dir = args.out
    if getattr(args, "dataset", None) is not None:
        config.dataset = args.dataset
    if getattr(args, "checkpoint", None) is not None:
        config.checkpoint = args.checkpoint
    for flag in ("scaling", "batch_sizes", "embed_dims"):
        text = getattr(args, flag, None)
        if text is not None:
            try:
                setattr(config.bench, flag, parse_value(text, Tuple[int, ...], flag))
            except ValueError as e:
                raise ConfigError(f"--{flag.replace('_', '-')}: {e}") from None
    config.validate()
    return config

import argparse
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from pydantic import ValidationError

from src.core.exceptions import ConfigError
from src.schemas.channel import KernelFamily
from src.schemas.run_config import RunConfig

GRID_KEYS = ("tc", "s", "kernel")
BOOLEAN_KEYS = {"strict", "mc"}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def float_list(text: str) -> List[float]:
    """argparse type: comma-separated floats; an empty string is an empty list"""
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def kernel_list(text: str) -> List[KernelFamily]:
    """argparse type: comma-separated kernel families"""
    try:
        return [KernelFamily(item.strip().lower()) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected kernels from {[k.value for k in KernelFamily]}, got {text!r}"
        )


def load_config_file(path: Path) -> Dict[str, str]:
    """
    Read a flat key=value config file

    Blank lines and lines starting with '#' are skipped; keys may use
    dashes or underscores.

    Args:
        path: Config file location

    Returns:
        Dict mapping argparse destinations to raw string values
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e

    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def apply_config_defaults(
    subparser: argparse.ArgumentParser, values: Dict[str, str]
) -> None:
    """Install config-file values as subparser defaults so explicit flags still win"""
    actions = {action.dest: action for action in subparser._actions}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise ConfigError(f"unknown config keys for this command: {unknown}")

    defaults = {}
    for key, value in values.items():
        if key in BOOLEAN_KEYS:
            lowered = value.lower()
            if lowered not in _TRUE | _FALSE:
                raise ConfigError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[key] = lowered in _TRUE
        elif actions[key].nargs in ("+", "*"):
            defaults[key] = value.split()
        else:
            # argparse runs string defaults through the option's type
            defaults[key] = value
    subparser.set_defaults(**defaults)


def parse_grid_filter(tokens: Sequence[str]) -> Dict[str, Set[str]]:
    """
    Parse subset selectors such as ["tc=2", "s=0,0.5", "kernel=sqexp"]

    Returns:
        Dict mapping grid key to the set of admissible normalized values
    """
    selectors: Dict[str, Set[str]] = {}
    for token in tokens:
        if "=" not in token:
            raise ConfigError(f"grid selector {token!r} is not key=value")
        key, value = (part.strip().lower() for part in token.split("=", 1))
        if key not in GRID_KEYS:
            raise ConfigError(f"unknown grid key {key!r}; use one of {GRID_KEYS}")
        items = [item for item in value.split(",") if item]
        if not items:
            raise ConfigError(f"grid selector {token!r} selects nothing")
        normalized = set()
        for item in items:
            if key == "kernel":
                try:
                    normalized.add(KernelFamily(item).value)
                except ValueError:
                    raise ConfigError(f"unknown kernel {item!r} in grid selector")
            else:
                try:
                    normalized.add(repr(float(item)))
                except ValueError:
                    raise ConfigError(f"grid value {item!r} for {key!r} is not a number")
        selectors.setdefault(key, set()).update(normalized)
    return selectors


def select_grid(
    points: Iterable[Tuple[float, float, KernelFamily]],
    selectors: Dict[str, Set[str]],
) -> List[Tuple[float, float, KernelFamily]]:
    """Keep (tc, s, kernel) points matching every selector"""
    selected = []
    for tc, s, kernel in points:
        if "tc" in selectors and repr(float(tc)) not in selectors["tc"]:
            continue
        if "s" in selectors and repr(float(s)) not in selectors["s"]:
            continue
        if "kernel" in selectors and kernel.value not in selectors["kernel"]:
            continue
        selected.append((tc, s, kernel))
    return selected


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Validate parsed arguments into a RunConfig"""
    data = {key: value for key, value in vars(args).items() if value is not None}
    data.pop("config", None)
    data.pop("log_level", None)
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid arguments: {e.errors(include_url=False)}") from e

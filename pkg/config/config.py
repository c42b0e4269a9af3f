"""Environment settings and the plain-text key=value config format."""
import os
import logging
from pathlib import Path
from typing import Dict, Mapping, Union

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# --- Environment settings (module-level) ---
LOG_LEVEL = os.getenv("TEMPLINK_LOG", "INFO").upper()

_raw_debug = os.getenv("TEMPLINK_DEBUG", "False").lower()
DEBUG = _raw_debug in ("true", "1", "yes", "on")

_default_threads = 1
try:
    DEFAULT_THREADS = int(os.getenv("TEMPLINK_THREADS", str(_default_threads)))
except ValueError:
    logging.warning(f"Invalid value for TEMPLINK_THREADS env var. Using default: {_default_threads}")
    DEFAULT_THREADS = _default_threads

try:
    PROJECT_ROOT = Path(__file__).resolve().parent.parent
except NameError:
    PROJECT_ROOT = Path(".").resolve()
    logging.warning(f"__file__ not defined. Assuming project root is current dir: {PROJECT_ROOT}")

DEFAULT_OUT_DIR = Path(os.getenv("TEMPLINK_OUT_DIR", "runs"))
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config" / "default.cfg"


def read_key_values(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a key=value file.

    Blank lines and lines starting with ``#`` are skipped. Keys may be dotted
    (``model.conv_dims``). A repeated key keeps the last value.

    Args:
        path: File to read

    Returns:
        Mapping of raw string values

    Raises:
        ConfigError: On a line without ``=`` or an empty key
    """
    values: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            values[key] = value.strip()
    return values


def write_key_values(path: Union[str, Path], mapping: Mapping[str, object]) -> None:
    """Write a mapping as sorted key=value lines (byte-stable for equal input)."""
    lines = [f"{key}={_format_value(mapping[key])}\n" for key in sorted(mapping)]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.writelines(lines)


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def setup_directories(out_dir: Union[str, Path]) -> Path:
    """Create the run directory and its ``logs/`` child."""
    out_path = Path(out_dir)
    try:
        (out_path / "logs").mkdir(parents=True, exist_ok=True)
        logger.debug(f"Ensured output directory exists: {out_path}")
    except OSError as e:
        logger.error(f"Failed to create output directory {out_path}: {e}")
        raise
    return out_path


def validate_config(cfg: object) -> None:
    """
    Check an experiment config before any command runs.

    Every section is validated; settings that are legal but likely unintended
    are logged as warnings.

    Args:
        cfg: ``ExperimentConfig``

    Raises:
        ConfigError: If any section holds an invalid value
    """
    validate = getattr(cfg, "validate", None)
    if validate is None:
        raise ConfigError(f"Not an experiment config: {type(cfg).__name__}")
    validate()

    seeds = {name: getattr(cfg, name).seed for name in ("gen", "split", "model")}
    if len(set(seeds.values())) > 1:
        listed = ", ".join(f"{name}.seed={seed}" for name, seed in seeds.items())
        logger.warning(f"Seeds differ across sections ({listed}); result rows record gen.seed")
    if DEFAULT_THREADS <= 0:
        logger.warning(f"TEMPLINK_THREADS value ({DEFAULT_THREADS}) should be positive.")

# app/config.py
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv
from dotenv.parser import parse_stream
from pydantic import ValidationError

from app.errors import ConfigError
from app.schemas import RunConfig

# --- Load environment variables ---
load_dotenv()

logger = logging.getLogger("config")

PATH_KEYS = ("curve.table", "twist.table", "fiber.mask_file")


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None:
        return default
    try:
        return int(float(raw))
    except ValueError:
        logger.warning(f"⚠️ {name}={raw!r} is not a number. Using fallback {default}.")
        return default


# --- Environment settings ---
LOG_LEVEL = os.getenv("WAVEGUIDE_LOG_LEVEL", "INFO").upper()
THREADS = max(_int_env("WAVEGUIDE_THREADS", 1), 1)
MAX_UNKNOWNS = _int_env("WAVEGUIDE_MAX_UNKNOWNS", 2_000_000)
OUTPUT_DIR = os.getenv("WAVEGUIDE_OUTPUT_DIR", "output")


# --- Flat run configuration ---
def _first_line(original) -> int:
    """Line of the first non-blank character; bindings start at the blank
    lines that precede them."""
    text = original.string
    return original.line + text[: len(text) - len(text.lstrip())].count("\n")


def parse_flat(text: str) -> tuple[dict, dict[str, int]]:
    """Nest ``a.b = value`` lines into a tree; returns (tree, key -> line)."""
    tree: dict = {}
    lines: dict[str, int] = {}
    for binding in parse_stream(io.StringIO(text)):
        line = _first_line(binding.original)
        if binding.error:
            raise ConfigError(f"cannot parse {binding.original.string.strip()!r}", line)
        if binding.key is None:
            continue
        key = binding.key.strip()
        if binding.value is None:
            raise ConfigError(f"key '{key}' has no value", line)
        if key in lines:
            raise ConfigError(f"duplicate key '{key}' (first set on line {lines[key]})", line)
        lines[key] = line
        node = tree
        *parents, leaf = key.split(".")
        for name in parents:
            node = node.setdefault(name, {})
            if not isinstance(node, dict):
                raise ConfigError(f"'{name}' is a value, not a namespace", line)
        if isinstance(node.get(leaf), dict):
            raise ConfigError(f"'{key}' is a namespace, not a value", line)
        node[leaf] = binding.value
    return tree, lines


def _line_of(loc: tuple, lines: dict[str, int]) -> int | None:
    key = ".".join(str(part) for part in loc)
    if key in lines:
        return lines[key]
    nested = [line for k, line in lines.items() if k.startswith(key + ".")]
    return min(nested) if nested else None


def validate_tree(tree: dict, lines: dict[str, int]) -> RunConfig:
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "config"
        message = first["msg"]
        if first["type"] == "extra_forbidden":
            message = "unknown key"
        logger.error(f"❌ Invalid configuration: {key}: {message}")
        raise ConfigError(f"{key}: {message}", _line_of(first["loc"], lines)) from None


def _resolve_paths(tree: dict, base: Path) -> None:
    for key in PATH_KEYS:
        namespace, leaf = key.split(".")
        node = tree.get(namespace)
        if isinstance(node, dict) and isinstance(node.get(leaf), str) and not Path(node[leaf]).is_absolute():
            node[leaf] = str(base / node[leaf])


def load_run_config(path: str | None = None) -> RunConfig:
    """Validated run configuration; defaults only when ``path`` is None.

    Relative table paths are taken relative to the configuration file.
    """
    if path is None:
        logger.info("⚠️ No configuration file given. Using defaults.")
        return RunConfig()
    source = Path(path)
    if not source.is_file():
        raise ConfigError(f"configuration file '{path}' not found")
    tree, lines = parse_flat(source.read_text(encoding="utf-8"))
    _resolve_paths(tree, source.parent)
    config = validate_tree(tree, lines)
    logger.info(f"✅ Configuration loaded from {path} ({len(lines)} keys)")
    return config


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON dump of the validated configuration."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# --- Per-invocation context handed to every subcommand ---
@dataclass(frozen=True)
class RunContext:
    config: RunConfig
    config_hash: str
    out_dir: Path
    threads: int = THREADS
    max_unknowns: int = MAX_UNKNOWNS

    @classmethod
    def create(cls, config: RunConfig, out: str | None = None, threads: int | None = None) -> "RunContext":
        out_dir = Path(out or config.output.directory or OUTPUT_DIR)
        return cls(config, config_hash(config), out_dir, max(threads or THREADS, 1), MAX_UNKNOWNS)

    def path(self, name: str) -> Path:
        return self.out_dir / f"{name}.{self.config.output.format}"

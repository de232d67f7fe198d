# app/storage.py
"""CSV output with "#" metadata headers and plain-text table input."""
import csv
import io
import logging
from pathlib import Path

import numpy as np

from app.errors import ConfigError, DimensionError

logger = logging.getLogger("storage")


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, np.ndarray):
        return " ".join(format_value(v) for v in value.ravel())
    return str(value)


def write_csv(path: Path, columns: dict, config_hash: str, metadata: dict | None = None) -> Path:
    """Comma-separated table with a config-hash comment line and a header row."""
    lengths = {len(v) for v in columns.values()}
    if len(lengths) > 1:
        raise DimensionError(f"columns of {path.name} have different lengths {sorted(lengths)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    buffer.write(f"# config_hash={config_hash}\n")
    for key, value in (metadata or {}).items():
        buffer.write(f"# {key}={format_value(value)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(columns))
    for row in zip(*columns.values()):
        writer.writerow([format_value(v) for v in row])
    path.write_text(buffer.getvalue(), encoding="utf-8")
    logger.info(f"✅ Wrote {path} ({lengths.pop() if lengths else 0} rows)")
    return path


def write_text(path: Path, lines: list[str], config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([f"# config_hash={config_hash}", *lines]) + "\n", encoding="utf-8")
    logger.info(f"✅ Wrote {path}")
    return path


def read_metadata(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition("=")
        out[key] = value
    return out


def read_csv(path: Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Load a table written by ``write_csv``: (metadata, column arrays).

    Numeric columns come back as float arrays, the rest as strings.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = [line for line in lines if not line.startswith("#")]
    rows = list(csv.reader(body))
    header, records = rows[0], rows[1:]
    columns = {}
    for i, name in enumerate(header):
        values = [r[i] for r in records]
        try:
            columns[name] = np.array([float(v) for v in values])
        except ValueError:
            columns[name] = np.array(values)
    return read_metadata(path), columns


# ------------------ Table input ------------------
def load_table(path: str, n_columns: int) -> np.ndarray:
    """Numeric table, comma or whitespace separated, "#" comments."""
    source = Path(path)
    if not source.is_file():
        raise ConfigError(f"table '{path}' not found")
    text = source.read_text(encoding="utf-8").replace(",", " ")
    try:
        table = np.loadtxt(io.StringIO(text), comments="#", ndmin=2)
    except ValueError as e:
        raise ConfigError(f"table '{path}' is not numeric: {e}") from None
    if table.shape[1] != n_columns:
        raise ConfigError(f"table '{path}' has {table.shape[1]} columns, expected {n_columns}")
    return table


def load_curve_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    """(x, points) from columns x, c1, c2, c3; rows are ordered by x."""
    table = load_table(path, 4)
    order = np.argsort(table[:, 0], kind="stable")
    return table[order, 0], table[order, 1:]


def load_twist_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    table = load_table(path, 2)
    order = np.argsort(table[:, 0], kind="stable")
    x, omega = table[order, 0], table[order, 1]
    if np.any(np.diff(x) <= 0):
        raise ConfigError(f"twist table '{path}' has repeated x values")
    return x, omega


def load_mask(path: str) -> np.ndarray:
    """0/1 grid, one row per line; whitespace between cells is optional."""
    source = Path(path)
    if not source.is_file():
        raise ConfigError(f"mask file '{path}' not found")
    rows = []
    for number, line in enumerate(source.read_text(encoding="utf-8").splitlines(), start=1):
        cells = line.split("#", 1)[0].replace(" ", "").replace(",", "").strip()
        if not cells:
            continue
        if set(cells) - {"0", "1"}:
            raise ConfigError(f"mask '{path}' may only contain 0 and 1", number)
        rows.append([c == "1" for c in cells])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"mask '{path}' must be a non-empty rectangular grid")
    return np.array(rows, dtype=bool)

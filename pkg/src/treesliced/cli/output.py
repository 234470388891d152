"""
CSV emission: a commented schema/config line, a header row, then records.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def format_value(value: Any) -> str:
    """Round-trip float formatting; everything else through str()."""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(
    path: Path,
    schema: str,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config_echo: dict
) -> Path:
    """
    Write a results CSV.

    The first line is ``# schema=<schema>/<version> config=<compact JSON>``
    so a file is self-describing; the header row follows.

    Args:
        path: Destination
        schema: Schema name, e.g. ``distance``
        header: Column names
        rows: Records
        config_echo: Configuration that produced the rows

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    echo = json.dumps(config_echo, sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# schema=treesliced.{schema}/{SCHEMA_VERSION} config={echo}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([format_value(value) for value in row])
            count += 1
    logger.info(f"Wrote {count} {schema} rows to {path}")
    return path


def read_csv(path: Path) -> tuple:
    """
    Read a results CSV back.

    Returns:
        (schema line without the leading '# ', header, rows as string lists)
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        comment = f.readline().rstrip("\n")
        reader = csv.reader(f)
        header = next(reader)
        rows = [row for row in reader]
    return comment[2:], header, rows

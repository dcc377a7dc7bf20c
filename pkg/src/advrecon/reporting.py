"""Deterministic CSV output with a provenance header.

Every file starts with ``#``-prefixed comment lines (package version, config
hash, seed, and whatever else the caller passes), followed by plain CSV.
Floats are written with ``repr`` so reruns produce byte-identical files.
"""

import csv
import hashlib
import io
from pathlib import Path

from . import __version__


def config_hash(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def format_value(value):
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):  # numpy scalars
        return format_value(value.item())
    return str(value)


def render_csv(sections, provenance=None):
    """Render one or more ``(header, rows)`` blocks into CSV text.

    ``provenance`` is a mapping echoed as ``# key=value`` lines; insertion order
    is kept, so callers control the layout.
    """
    buf = io.StringIO()
    buf.write("# advrecon %s\n" % __version__)
    for key, value in (provenance or {}).items():
        buf.write("# %s=%s\n" % (key, format_value(value)))
    writer = csv.writer(buf, lineterminator="\n")
    for header, rows in sections:
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, sections, provenance=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(sections, provenance))
    return path


def read_csv_rows(path):
    """Parse a file written by :func:`write_csv`, skipping comment lines."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))

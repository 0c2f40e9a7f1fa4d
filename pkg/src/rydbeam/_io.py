"""Atomic text output and small CSV helpers."""
import os
import tempfile


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv_columns(path, header):
    """Read a numeric CSV whose first line must equal ``header``.

    Returns one list of floats per column.
    """
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != header:
        raise ValueError(f"{path}: expected header {header!r}")
    ncol = len(header.split(","))
    cols = [[] for _ in range(ncol)]
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != ncol:
            raise ValueError(f"{path}:{lineno}: expected {ncol} fields")
        try:
            for c, p in zip(cols, parts):
                c.append(float(p))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    return cols

"""Atomic file replacement: write to a sibling temp file, then rename."""

from __future__ import annotations

import os
import tempfile


def atomic_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_text(path: str | os.PathLike, text: str) -> None:
    atomic_bytes(path, text.encode("utf-8"))

from __future__ import annotations

import csv
import datetime as _dt
import io
import re
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .. import config


def utcstamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def safe_filename(s: str) -> str:
    s = re.sub(r"[^A-Za-z0-9._-]+", "_", s or "")
    return s.strip("_") or "file"


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as f:
        f.write(data)
    tmp.replace(path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def parse_kv(text: str, source: str = "<text>") -> dict[str, str]:
    """Flat `key=value` lines; blank lines and `#` comments are skipped."""
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{n}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"{source}:{n}: empty key")
        out[key] = value.strip()
    return out


def read_kv(path: Path) -> dict[str, str]:
    return parse_kv(path.read_text(encoding="utf-8"), source=str(path))


def format_kv(values: Mapping[str, Any], header: str | None = None) -> str:
    lines = [f"# {header}"] if header else []
    lines += [f"{k}={values[k]}" for k in sorted(values)]
    return "\n".join(lines) + "\n"


def write_kv(path: Path, values: Mapping[str, Any], header: str | None = None) -> None:
    atomic_write_text(path, format_kv(values, header))


def _csv_text(columns: Sequence[str], rows: Iterable[Mapping[str, Any]], with_header: bool) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    if with_header:
        w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _fmt(v: Any) -> Any:
    return repr(v) if isinstance(v, float) else v


def append_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    """Append rows, writing the header first if the file is new. Rewrites the file atomically."""
    existing = path.read_text(encoding="utf-8") if path.exists() else ""
    atomic_write_text(path, existing + _csv_text(columns, rows, with_header=not existing))


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    atomic_write_text(path, _csv_text(columns, rows, with_header=True))


def read_csv(path: Path) -> list[dict[str, str]]:
    with path.open("r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def ensure_state_dirs() -> None:
    for d in (config.STATE_DIR, config.DATA_DIR, config.RUNS_DIR):
        d.mkdir(parents=True, exist_ok=True)


def run_dir_for(name: str | None = None, ts_utc: str | None = None) -> Path:
    """Fresh directory under RUNS_DIR; `name` defaults to a timestamp."""
    ts = (ts_utc or utcstamp()).replace(":", "-")
    p = config.RUNS_DIR / safe_filename(name or f"run_{ts}")
    p.mkdir(parents=True, exist_ok=True)
    return p

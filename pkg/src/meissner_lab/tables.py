"""Result tables written as CSV with a ``#`` provenance block."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .discrete_calculus import fmt
from .errors import InvalidSpec, MissingColumn


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON text of ``config`` (first 16 hex digits)."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt(v)
    s = str(v)
    if any(c in s for c in ",\n\r\""):
        raise InvalidSpec(f"cell {s!r} needs quoting; table cells are plain tokens")
    return s


def _parse(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if text in ("true", "false"):
        return text == "true"
    return text


@dataclass
class ResultsTable:
    """Named columns, typed rows and provenance.

    ``provenance`` holds ``config_hash``, ``code_version`` and ``wall_time``;
    every entry is written as a ``# key: value`` comment line before the
    header.  ``body()`` is the CSV without comments, which is what the
    determinism checks compare.
    """

    columns: Sequence[str]
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        if len(set(self.columns)) != len(self.columns):
            raise InvalidSpec("duplicate column names", columns=list(self.columns))
        for r in self.rows:
            self._check(r)

    def _check(self, row):
        if len(row) != len(self.columns):
            raise InvalidSpec(f"row has {len(row)} values for {len(self.columns)} columns")

    def append(self, row) -> None:
        row = tuple(row)
        self._check(row)
        self.rows.append(row)

    def column(self, name: str) -> list:
        if name not in self.columns:
            raise MissingColumn(f"no column {name!r}", column=name, available=list(self.columns))
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def stamp(self, config=None, wall_time: float | None = None) -> "ResultsTable":
        self.provenance.setdefault("code_version", __version__)
        if config is not None:
            self.provenance["config_hash"] = config_hash(config)
        if wall_time is not None:
            self.provenance["wall_time"] = f"{wall_time:.3f}s"
        return self

    def body(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(_cell(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        head = "".join(f"# {k}: {self.provenance[k]}\n" for k in sorted(self.provenance))
        return head + self.body()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8", newline="\n")
        return path

    @classmethod
    def from_csv(cls, text: str) -> "ResultsTable":
        prov = {}
        lines = []
        for ln in text.splitlines():
            if ln.startswith("#"):
                key, _, val = ln[1:].strip().partition(":")
                prov[key.strip()] = val.strip()
            elif ln.strip():
                lines.append(ln)
        if not lines:
            return cls((), [], prov)
        cols = lines[0].split(",")
        rows = [tuple(_parse(c) for c in ln.split(",")) for ln in lines[1:]]
        return cls(cols, rows, prov)

    @classmethod
    def read(cls, path) -> "ResultsTable":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def finite_or_text(x: float):
    """Keep finite floats, spell out infinities and NaN for CSV cells."""
    return x if math.isfinite(x) else repr(float(x))

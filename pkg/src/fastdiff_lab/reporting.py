"""Report bundles: CSV tables plus a JSON summary with provenance.

CSV dialect: comma-separated, '.' decimal, 17-significant-digit floats,
header row, newline-terminated rows.  Identical configs (including seeds)
produce byte-identical CSV bodies; wall time and versions live only in the
summary's provenance block.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

__all__ = ["Table", "ReportBundle", "default_output_dir"]

ENV_OUT = "FASTDIFF_LAB_OUT"


def default_output_dir() -> str:
    return os.environ.get(ENV_OUT, "fastdiff-lab-out")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list]

    def to_csv(self) -> str:
        lines = [",".join(self.header)]
        lines.extend(",".join(_fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"


@dataclass
class ReportBundle:
    command: str
    config: dict
    summary: dict = field(default_factory=dict)
    tables: list[Table] = field(default_factory=list)
    started: float = field(default_factory=time.time)

    def add_table(self, name: str, header: list[str], rows: list[list]):
        self.tables.append(Table(name, header, rows))

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def write(self, directory: str, formats=("csv", "json")) -> list[str]:
        os.makedirs(directory, exist_ok=True)
        written = []
        if "csv" in formats:
            for t in self.tables:
                path = os.path.join(directory, f"{self.command}_{t.name}.csv")
                with open(path, "w") as fh:
                    fh.write(t.to_csv())
                written.append(path)
        if "json" in formats:
            payload = {
                "command": self.command,
                "summary": self.summary,
                "provenance": {
                    "config": self.config,
                    "code_version": _code_version(),
                    "wall_time_s": time.time() - self.started,
                },
            }
            path = os.path.join(directory, f"{self.command}_summary.json")
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True, default=_fmt)
                fh.write("\n")
            written.append(path)
        return written


def _code_version() -> str:
    from . import __version__
    return __version__

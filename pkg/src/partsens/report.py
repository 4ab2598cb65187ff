"""Report records written by the CLI, and their CSV/JSON forms."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__

COMPLETED = "completed"
RESOURCE_LIMIT = "resource-limit"
ERROR = "error"


def plain(value: Any) -> Any:
    """Recursively convert to JSON-native types (exact values become strings)."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if value is None or isinstance(value, str):
        return value
    return str(value)


@dataclass
class Series:
    columns: List[str]
    rows: List[list] = field(default_factory=list)

    def __post_init__(self):
        self.columns = [str(c) for c in self.columns]
        self.rows = plain(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


@dataclass
class Report:
    name: str
    kind: str
    engine: str
    config: Dict[str, Any]
    status: str
    verdict: str
    result: Dict[str, Any]
    series: Optional[Series] = None
    seed: Optional[int] = None
    wall_time: float = 0.0
    expectations: Dict[str, Any] = field(default_factory=dict)
    artifact_version: str = __version__
    message: str = ""

    def __post_init__(self):
        self.config = plain(self.config)
        self.result = plain(self.result)
        self.expectations = plain(self.expectations)
        if isinstance(self.series, dict):
            self.series = Series(**self.series)

    @property
    def expectations_met(self) -> Optional[bool]:
        if not self.expectations:
            return None
        return all(v["ok"] for v in self.expectations.values())

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls(**json.loads(text))


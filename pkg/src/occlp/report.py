"""Pass/fail records returned by the diagnostic operations."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Report:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def status(self):
        return "PASS" if self.passed else "FAIL"

    def to_dict(self):
        return {"name": self.name, "status": self.status, "metrics": _plain(self.metrics), "notes": list(self.notes)}

    def __str__(self):
        parts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())
        return f"{self.name}: {self.status} ({parts})"


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _plain(obj):
    """Convert numpy scalars/arrays to JSON-friendly Python values."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj

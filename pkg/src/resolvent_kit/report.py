"""Residual reports shared by every checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ResidualReport:
    """Outcome of one residual check.

    ``residuals`` holds the per-point values (any shape), ``locations`` the
    matching sample coordinates when they make sense.  ``parts`` carries
    sub-reports for checks made of several identities.
    """

    name: str
    residuals: np.ndarray
    tolerance: float
    locations: np.ndarray | None = None
    scale: float = 1.0
    metadata: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    parts: dict = field(default_factory=dict)

    def __post_init__(self):
        self.residuals = np.atleast_1d(np.asarray(self.residuals, dtype=float))

    @property
    def max(self) -> float:
        vals = [float(np.nanmax(self.residuals))] if self.residuals.size else [0.0]
        vals += [p.max for p in self.parts.values()]
        return max(vals)

    @property
    def argmax(self):
        if not self.residuals.size:
            return None
        i = int(np.nanargmax(self.residuals))
        if self.locations is not None:
            loc = np.asarray(self.locations)[i]
            return tuple(np.atleast_1d(loc).tolist())
        return i

    @property
    def relative_max(self) -> float:
        return self.max / max(self.scale, 1.0)

    @property
    def passed(self) -> bool:
        own = bool(np.all(np.isfinite(self.residuals))) and self.relative_max <= self.tolerance
        return own and all(p.passed for p in self.parts.values())

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.name}: max={self.max:.3e} tol={self.tolerance:.1e} {verdict}"

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "max_residual": self.max,
            "argmax": self.argmax,
            "tolerance": self.tolerance,
            "scale": self.scale,
            "pass": self.passed,
            "flags": list(self.flags),
            "metadata": _jsonable(self.metadata),
        }
        if self.parts:
            out["parts"] = {k: v.to_dict() for k, v in self.parts.items()}
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def combine(name: str, parts: dict, tolerance: float, **metadata) -> ResidualReport:
    """Report whose verdict is the conjunction of ``parts``."""
    return ResidualReport(name, np.zeros(0), tolerance, parts=dict(parts), metadata=metadata)

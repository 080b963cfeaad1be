"""Run configuration shared by the CLI and the output writers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .errors import MoireError


@dataclass
class RunConfig:
    """All knobs that affect numerical output, serialized into every file."""

    cutoff_radius: float = 8.0
    solver_rtol: float = 1e-10
    touch_tol: float = 1e-8
    gap_floor: float = 1e-3
    coarse_n: int = 24
    winding_samples: int = 128
    threads: int = 1
    out_dir: str = "."

    def __post_init__(self):
        for name in ("cutoff_radius", "solver_rtol", "touch_tol", "gap_floor"):
            if getattr(self, name) <= 0:
                raise MoireError(f"config field {name} must be positive")
        if self.threads < 1:
            raise MoireError("threads must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


def load_config_file(path) -> dict:
    """Parse a simple ``key = value`` config file into override kwargs."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise MoireError(f"{path}:{line_no}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in RunConfig.__dataclass_fields__:
                raise MoireError(f"{path}:{line_no}: unknown config key {key!r}")
            kind = RunConfig.__dataclass_fields__[key].type
            if key in ("coarse_n", "winding_samples", "threads"):
                out[key] = int(value)
            elif key == "out_dir":
                out[key] = value
            else:
                out[key] = float(value)
    return out

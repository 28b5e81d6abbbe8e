"""Published cavity centerline profiles used as comparison targets.

These tables are inputs, not artifact output; the loader verifies the
shipped checksum so silent edits are caught.  Availability follows the
sources: ghia1982 covers Re in {100, 400, 1000}, erturk2009 covers
Re in {1000, 2500, 5000, 7500, 10000}.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

__all__ = ["ReferenceProfile", "load_reference_profiles", "reference_for", "available_sources"]


@dataclass(frozen=True)
class ReferenceProfile:
    source: str
    re: float
    ux_at_x05: np.ndarray  # (n, 2) rows (y, u)
    uy_at_y05: np.ndarray  # (n, 2) rows (x, v)


def _data_text() -> str:
    pkg = resources.files("vemflow") / "data"
    text = (pkg / "reference_profiles.csv").read_text()
    expected = (pkg / "reference_profiles.sha256").read_text().split()[0]
    digest = hashlib.sha256(text.encode()).hexdigest()
    if digest != expected:
        raise RuntimeError(
            f"reference_profiles.csv checksum mismatch: {digest} != {expected}"
        )
    return text


@lru_cache(maxsize=1)
def load_reference_profiles() -> dict[tuple[str, float], ReferenceProfile]:
    rows: dict[tuple[str, float], dict[str, list]] = {}
    for line in _data_text().splitlines():
        if not line or line.startswith("#") or line.startswith("source,"):
            continue
        source, re_s, axis, coord, value = line.split(",")
        key = (source, float(re_s))
        rows.setdefault(key, {"u": [], "v": []})[axis].append((float(coord), float(value)))
    out = {}
    for (source, re), data in rows.items():
        ux = np.array(sorted(data["u"]))
        uy = np.array(sorted(data["v"]))
        if np.any(np.diff(ux[:, 0]) <= 0) or np.any(np.diff(uy[:, 0]) <= 0):
            raise RuntimeError(f"non-increasing sample ordinates for {source} Re={re}")
        out[(source, re)] = ReferenceProfile(source, re, ux, uy)
    return out


def available_sources(re: float) -> list[str]:
    return [src for (src, r) in load_reference_profiles() if r == float(re)]


def reference_for(re: float, source: str | None = None) -> ReferenceProfile:
    """Profile for one Reynolds number; erturk2009 preferred when both exist."""
    profiles = load_reference_profiles()
    if source is not None:
        try:
            return profiles[(source, float(re))]
        except KeyError:
            raise KeyError(f"no {source} reference data for Re={re}") from None
    for src in ("erturk2009", "ghia1982"):
        if (src, float(re)) in profiles:
            return profiles[(src, float(re))]
    raise KeyError(f"no reference data for Re={re}")

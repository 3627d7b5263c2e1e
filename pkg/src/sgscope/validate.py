"""Core-periphery profiles of candidate subgraphs and their random-walk baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .graph import PropertyGraph, largest_component
from .interestingness import DiscoveryError, sample_background
from .metrics import core_numbers, project


class ValidationError(ValueError):
    pass


def _pair_density(edges: int, n: int) -> float:
    return 2.0 * edges / (n * (n - 1)) if n >= 2 else 0.0


@dataclass
class CorePeripheryProfile:
    core: list[str]
    periphery: list[str]
    core_density: float
    periphery_density: float
    cross_density: float
    max_core: int
    degenerate: bool = False
    baseline: dict[str, Any] | None = None

    @property
    def ratio(self) -> float:
        """Core density over periphery density."""
        if self.periphery_density == 0:
            return math.inf if self.core_density > 0 else math.nan
        return self.core_density / self.periphery_density

    def to_json(self) -> dict[str, Any]:
        def num(x: float):
            return x if math.isfinite(x) else str(x)

        return {"core": self.core, "periphery": self.periphery,
                "core_density": self.core_density, "periphery_density": self.periphery_density,
                "cross_density": self.cross_density, "max_core": self.max_core,
                "degenerate_single_shell": self.degenerate, "ratio": num(self.ratio),
                "baseline": self.baseline}


def core_periphery_profile(g: PropertyGraph) -> CorePeripheryProfile:
    """Split nodes into the maximum-coreness shell and the rest, with densities."""
    if len(g) < 3:
        raise ValidationError("graph too small for a core-periphery profile")
    p = project(g)
    mu = core_numbers(p)
    top = max(mu.values())
    core = {n for n, c in mu.items() if c == top}
    periphery = set(p.ids) - core
    within_c = within_p = cross = 0
    for i, j in p.edges:
        a, b = p.ids[i] in core, p.ids[j] in core
        if a and b:
            within_c += 1
        elif a or b:
            cross += 1
        else:
            within_p += 1
    nc, np_ = len(core), len(periphery)
    return CorePeripheryProfile(
        core=sorted(core), periphery=sorted(periphery),
        core_density=_pair_density(within_c, nc),
        periphery_density=_pair_density(within_p, np_),
        cross_density=cross / (nc * np_) if nc and np_ else 0.0,
        max_core=int(top), degenerate=np_ == 0,
    )


def compare_to_baseline(g: PropertyGraph, background: PropertyGraph, n_samples: int = 10,
                        seed: int = 0) -> CorePeripheryProfile:
    """Profile ``g`` and random-walk samples of the same size from ``background``."""
    prof = core_periphery_profile(g)
    try:
        samples = sample_background(background, len(g), n_samples, seed)
    except DiscoveryError as exc:
        raise ValidationError(f"background too small: {exc}") from None
    fields = ("core_density", "periphery_density", "cross_density")
    rows = {f: [] for f in fields}
    ratios = []
    for s in samples:
        sp = core_periphery_profile(s)
        for f in fields:
            rows[f].append(getattr(sp, f))
        ratios.append(sp.ratio)
    finite = np.asarray([r for r in ratios if math.isfinite(r)], dtype=float)
    base: dict[str, Any] = {f: float(np.mean(v)) for f, v in rows.items()}
    base.update({
        "n_samples": n_samples, "seed": seed,
        "sample_ratios": [r if math.isfinite(r) else str(r) for r in ratios],
        "ratio_mean": float(finite.mean()) if len(finite) else math.nan,
        "ratio_std": float(finite.std(ddof=1)) if len(finite) > 1 else 0.0,
    })
    prof.baseline = base
    return prof


def stands_out_low(profile: CorePeripheryProfile, n_sigma: float = 2.0) -> bool:
    """Candidate ratio below the baseline mean by more than ``n_sigma`` deviations."""
    if profile.baseline is None:
        raise ValidationError("profile has no baseline")
    r = profile.ratio
    if not math.isfinite(r):
        return False
    return r < profile.baseline["ratio_mean"] - n_sigma * profile.baseline["ratio_std"]


def profile_component(g: PropertyGraph, background: PropertyGraph, n_samples: int = 10,
                      seed: int = 0) -> CorePeripheryProfile:
    return compare_to_baseline(largest_component(g), background, n_samples, seed)

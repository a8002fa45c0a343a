"""Insertion-loss budgets for the loop processor across fabrication platforms.

All bookkeeping is in dB. A splitter that keeps power fraction r on a path
contributes -10 log10(r) dB to that path; n loop passes traverse the chip n
times and the delay line n - 1 times.
"""

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .loopchip import ChipConfig


@dataclass(frozen=True)
class PlatformSpec:
    """Loss figures of one integration platform.

    alpha_db_per_cm is waveguide propagation loss; mzi_extra_db is excess
    loss per mesh cell; offchip_per_loop_db is the penalty per mesh pass
    when the delay line lives off the chip (coupling in and out).
    """

    name: str
    alpha_db_per_cm: float
    mzi_extra_db: float = 0.0
    offchip_per_loop_db: float = 0.0

    def __post_init__(self):
        if not self.name:
            raise ValueError("name must be non-empty")
        for field in ("alpha_db_per_cm", "mzi_extra_db", "offchip_per_loop_db"):
            if getattr(self, field) < 0:
                raise ValueError(f"{field} must be >= 0")


@dataclass(frozen=True)
class LossBudget:
    """Total loss after each step count for one platform."""

    platform: str
    per_step_db: tuple

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.per_step_db, self.per_step_db[1:])):
            raise ValueError("per_step_db must be strictly increasing")


def load_platforms(path=None) -> list[PlatformSpec]:
    """Platform table from a JSON file; the bundled defaults when path is None."""
    if path is None:
        text = resources.files("loopsim.data").joinpath("platforms.json").read_text()
    else:
        text = Path(path).read_text()
    rows = json.loads(text)
    return [PlatformSpec(**row) for row in rows]


def ratio_loss_db(ratio: float) -> float:
    """dB cost of keeping power fraction ratio on a path."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must lie in (0, 1]")
    return -10.0 * np.log10(ratio)


def total_loss_db(platform: PlatformSpec, geometry: ChipConfig,
                  ratios: tuple, n: int) -> float:
    """Total insertion loss, in dB, of the step-n output path.

    ratios = (r_loop, r_end): r_loop is the power fraction each splitter
    keeps on the recirculating path, r_end the fraction routed in at the
    start and out at the end. The path crosses the chip n times, the delay
    line n - 1 times, both splitters' end taps once and their loop taps
    n - 1 times each, plus the fixed detection-path losses and, for
    off-chip delay, one coupling penalty per pass.
    """
    r_loop, r_end = ratios
    if n < 1:
        raise ValueError("n must be >= 1")
    for name, r in (("r_loop", r_loop), ("r_end", r_end)):
        if not 0.0 < r < 1.0:
            raise ValueError(f"{name} must lie strictly between 0 and 1")
    cells = geometry.dim * (geometry.dim - 1) // 2
    l_chip = platform.alpha_db_per_cm * geometry.chip_length_cm + platform.mzi_extra_db * cells
    l_loop = platform.alpha_db_per_cm * geometry.loop_length_cm
    per_loop = 2.0 * ratio_loss_db(r_loop) + l_chip + l_loop
    return (
        2.0 * ratio_loss_db(r_end)
        + (n - 1) * per_loop
        + l_chip
        + geometry.others_loss_db
        + platform.offchip_per_loop_db * n
    )


def optimal_splitters(n: int) -> tuple:
    """Splitter ratios maximizing the step-n output power.

    The step-n path keeps (1 - r) r^(n-1) per splitter, maximized at
    r = (n - 1)/n. The analytic value is cross-checked on every call by
    bracketing the objective's stationary point numerically (a direct
    bounded maximizer cannot do better than ~1e-8 here because the
    objective is flat at its peak).
    """
    if n < 2:
        raise ValueError("n must be >= 2 (step 1 wants no recirculation at all)")
    r_loop = (n - 1.0) / n

    def transmitted(r):
        return (1.0 - r) * r ** (n - 1)

    h = 1e-6
    numerical = brentq(lambda r: transmitted(r + h) - transmitted(r - h),
                       0.5 / n, 1.0, xtol=1e-12)
    if abs(numerical - r_loop) > 1e-9:
        raise RuntimeError(
            f"numerical maximizer disagrees with analytic optimum: {numerical} vs {r_loop}"
        )
    return r_loop, 1.0 - r_loop


def platform_comparison(platforms, geometry: ChipConfig, ratios: tuple,
                        max_loops: int) -> list[LossBudget]:
    """Loss budget per platform for every step count 1..max_loops."""
    if max_loops < 1:
        raise ValueError("max_loops must be >= 1")
    return [
        LossBudget(
            p.name,
            tuple(total_loss_db(p, geometry, ratios, n) for n in range(1, max_loops + 1)),
        )
        for p in platforms
    ]


def mode_scaling_loss(n_modes: int, platform: PlatformSpec,
                      cell_length_cm: float = 0.5) -> float:
    """Single-pass mesh loss as the mode count grows.

    A rectangular mesh is n_modes columns deep, so the traversal length is
    n_modes * cell_length_cm and the per-cell excess is charged n_modes
    times. Mode counts are even (one spin pair per boson level) and >= 2.
    """
    if n_modes < 2 or n_modes % 2 != 0:
        raise ValueError("n_modes must be even and >= 2")
    if cell_length_cm <= 0:
        raise ValueError("cell_length_cm must be positive")
    return (
        platform.alpha_db_per_cm * n_modes * cell_length_cm
        + platform.mzi_extra_db * n_modes
    )


def comparison_to_csv(budgets: list[LossBudget], fileobj) -> None:
    """Write budgets as platform,n,loss_db rows."""
    import csv

    writer = csv.writer(fileobj)
    writer.writerow(["platform", "n", "loss_db"])
    for budget in budgets:
        for n, db in enumerate(budget.per_step_db, start=1):
            writer.writerow([budget.platform, n, repr(float(db))])

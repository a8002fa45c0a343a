"""Recirculating-loop processor: one mesh traversed repeatedly via a delay loop.

Light enters through an input splitter, crosses the mesh, and at the output
splitter part of it leaves toward the detectors while the rest re-enters the
mesh through the delay loop. Amplitude conventions: a power ratio r scales an
amplitude by sqrt(r); a propagation loss of d dB scales it by 10^(-d/20).
Losses are tracked as scalar prefactors on a unitary core propagation, so
uniform per-step loss cancels exactly in conditional distributions.
"""

import csv
from dataclasses import dataclass

import numpy as np


class DegenerateStepError(RuntimeError):
    """A step's total output power is numerically zero; cannot normalize."""


@dataclass(frozen=True)
class ChipConfig:
    """Geometry, splitter ratios and loss figures of the loop processor.

    ratio_in is the input splitter's power fraction sent into the mesh on
    the first pass; ratio_out is the output splitter's power fraction sent
    to the detectors each pass. alpha_db_per_cm and the lengths set the
    propagation losses; others_loss_db lumps the remaining fixed losses on
    the detection path. lossless=True zeroes every dB figure but keeps the
    splitters.
    """

    dim: int = 6
    ratio_in: float = 2.0 / 3.0
    ratio_out: float = 2.0 / 3.0
    alpha_db_per_cm: float = 0.6
    chip_length_cm: float = 5.0
    loop_length_cm: float = 4.0
    others_loss_db: float = 5.0
    loop_delay_ps: float = 400.0
    rep_rate_mhz: float = 500.0
    lossless: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        for name in ("ratio_in", "ratio_out"):
            r = getattr(self, name)
            if not 0.0 < r < 1.0:
                raise ValueError(f"{name} must lie strictly between 0 and 1")
        if self.alpha_db_per_cm < 0:
            raise ValueError("alpha_db_per_cm must be >= 0")
        if self.others_loss_db < 0:
            raise ValueError("others_loss_db must be >= 0")
        if self.chip_length_cm <= 0:
            raise ValueError("chip_length_cm must be positive")
        if self.loop_length_cm < 4.0:
            raise ValueError("loop_length_cm must be >= 4 (minimum feasible loop)")
        if self.loop_delay_ps <= 0:
            raise ValueError("loop_delay_ps must be positive")
        if self.rep_rate_mhz <= 0:
            raise ValueError("rep_rate_mhz must be positive")


@dataclass
class StageRecord:
    """Amplitudes of one run: input, per-step loop contents, per-step outputs.

    intermediates[n-1] is the field just after mesh pass n; outputs[n-1] is
    the field on the detection arm after pass n; probabilities = |outputs|^2.
    """

    x: np.ndarray
    intermediates: np.ndarray
    outputs: np.ndarray
    probabilities: np.ndarray


@dataclass
class PowerMatrix:
    """Input-to-output power map at a fixed step.

    entries[k, l] is the power seen on channel l for input channel k, either
    renormalized per input row ("row") or as raw detected fractions ("raw").
    """

    step: int
    entries: np.ndarray
    normalization: str


def _db_to_amplitude(db: float) -> float:
    return 10.0 ** (-db / 20.0)


def _amplitude_factors(config: ChipConfig):
    if config.lossless:
        return 1.0, 1.0, 1.0
    amp_chip = _db_to_amplitude(config.alpha_db_per_cm * config.chip_length_cm)
    amp_loop = _db_to_amplitude(config.alpha_db_per_cm * config.loop_length_cm)
    amp_others = _db_to_amplitude(config.others_loss_db)
    return amp_chip, amp_loop, amp_others


def run_loop(config: ChipConfig, mesh: np.ndarray, input_channel: int, n_steps: int) -> StageRecord:
    """Propagate a single-channel input through n_steps loop passes.

    Step n applies the mesh for the n-th time; the output splitter taps
    sqrt(ratio_out) of the circulating field toward the detectors (times the
    detection-path loss), while sqrt((1-ratio_out)(1-ratio_in)) of it, times
    loop and chip propagation losses, re-enters the mesh.
    """
    m = np.asarray(mesh, dtype=complex)
    if m.ndim != 2 or m.shape != (config.dim, config.dim):
        raise ValueError("mesh must be a dim x dim matrix")
    if not 0 <= input_channel < config.dim:
        raise ValueError("input_channel out of range")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")

    amp_chip, amp_loop, amp_others = _amplitude_factors(config)
    in_scalar = np.sqrt(config.ratio_in) * amp_chip
    loop_scalar = (
        np.sqrt((1.0 - config.ratio_in) * (1.0 - config.ratio_out)) * amp_loop * amp_chip
    )
    out_scalar = np.sqrt(config.ratio_out) * amp_others

    x = np.zeros(config.dim, dtype=complex)
    x[input_channel] = 1.0
    core = x
    scale = in_scalar
    intermediates = np.empty((n_steps, config.dim), dtype=complex)
    outputs = np.empty((n_steps, config.dim), dtype=complex)
    for n in range(n_steps):
        core = m @ core
        intermediates[n] = scale * core
        outputs[n] = out_scalar * intermediates[n]
        scale *= loop_scalar
    probabilities = np.abs(outputs) ** 2
    return StageRecord(x, intermediates, outputs, probabilities)


def conditional_probabilities(record: StageRecord) -> np.ndarray:
    """Per-step output distributions, renormalized over channels.

    Uniform per-step loss cancels here, so for a unitary mesh these match
    the lossless unitary evolution. Raises DegenerateStepError if a step
    carries no power at all.
    """
    totals = record.probabilities.sum(axis=1)
    if np.any(totals < 1e-300):
        step = int(np.argmax(totals < 1e-300)) + 1
        raise DegenerateStepError(f"step {step} has vanishing total output power")
    return record.probabilities / totals[:, None]


def step_power_matrices(config: ChipConfig, mesh: np.ndarray, n_steps: int,
                        normalization: str = "row") -> np.ndarray:
    """All-inputs power matrices for steps 1..n_steps, shape (n_steps, dim, dim).

    Equivalent to stacking run_loop over every input channel, but done as one
    matrix propagation. Row k of matrix n is input k's step-n distribution.
    """
    if normalization not in ("row", "raw"):
        raise ValueError("normalization must be 'row' or 'raw'")
    m = np.asarray(mesh, dtype=complex)
    if m.ndim != 2 or m.shape != (config.dim, config.dim):
        raise ValueError("mesh must be a dim x dim matrix")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    amp_chip, amp_loop, amp_others = _amplitude_factors(config)
    in_scalar = np.sqrt(config.ratio_in) * amp_chip
    loop_scalar = (
        np.sqrt((1.0 - config.ratio_in) * (1.0 - config.ratio_out)) * amp_loop * amp_chip
    )
    out_scalar = np.sqrt(config.ratio_out) * amp_others

    core = np.eye(config.dim, dtype=complex)
    scale = in_scalar
    out = np.empty((n_steps, config.dim, config.dim))
    for n in range(n_steps):
        core = m @ core
        power = np.abs(out_scalar * scale * core.T) ** 2
        if normalization == "row":
            totals = power.sum(axis=1)
            if np.any(totals < 1e-300):
                raise DegenerateStepError(f"step {n + 1} has vanishing total output power")
            power = power / totals[:, None]
        out[n] = power
        scale *= loop_scalar
    return out


def power_matrix(config: ChipConfig, mesh: np.ndarray, step: int,
                 normalization: str = "row") -> PowerMatrix:
    """Input-to-output power map at one step, one run_loop per input row."""
    if step < 1:
        raise ValueError("step must be >= 1")
    if normalization not in ("row", "raw"):
        raise ValueError("normalization must be 'row' or 'raw'")
    entries = np.empty((config.dim, config.dim))
    for k in range(config.dim):
        record = run_loop(config, mesh, k, step)
        if normalization == "row":
            entries[k] = conditional_probabilities(record)[step - 1]
        else:
            entries[k] = record.probabilities[step - 1]
    return PowerMatrix(step, entries, normalization)


def record_to_csv(record: StageRecord, fileobj) -> None:
    """Write per-step output amplitudes as step,channel,re,im,prob rows."""
    writer = csv.writer(fileobj)
    writer.writerow(["step", "channel", "re", "im", "prob"])
    n_steps, dim = record.outputs.shape
    for n in range(n_steps):
        for l in range(dim):
            y = record.outputs[n, l]
            writer.writerow([n + 1, l, repr(float(y.real)), repr(float(y.imag)),
                             repr(float(record.probabilities[n, l]))])


def power_matrix_to_csv(pm: PowerMatrix, fileobj) -> None:
    """Write a power matrix as step,k,l,value rows."""
    writer = csv.writer(fileobj)
    writer.writerow(["step", "k", "l", "value"])
    dim = pm.entries.shape[0]
    for k in range(dim):
        for l in range(dim):
            writer.writerow([pm.step, k, l, repr(float(pm.entries[k, l]))])

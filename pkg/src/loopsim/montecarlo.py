"""Photon-counting simulation: arrival-time histograms and probability recovery.

Each heralded pair is timed relative to its own pump pulse, so step n's
photons arrive near (n - 1) * loop_delay_ps, smeared by detector jitter, on
top of a uniform background. Every channel owns an independent random
substream, so adding or changing one channel never perturbs another's counts.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .loopchip import StageRecord


@dataclass(frozen=True)
class CountingConfig:
    """Source, detector and histogram settings."""

    pair_rate_hz: float = 1e4
    duration_s: float = 10.0
    jitter_ps: float = 50.0
    bin_ps: float = 20.0
    background_rate_hz: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.pair_rate_hz < 0:
            raise ValueError("pair_rate_hz must be >= 0")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.jitter_ps < 0:
            raise ValueError("jitter_ps must be >= 0")
        if self.bin_ps <= 0:
            raise ValueError("bin_ps must be positive")
        if self.background_rate_hz < 0:
            raise ValueError("background_rate_hz must be >= 0")


@dataclass
class ArrivalHistogram:
    """Binned arrival times for one output channel.

    bin_edges_ps has one more entry than counts; bin i covers
    [bin_edges_ps[i], bin_edges_ps[i+1]). Counts are integers from sampling
    and floats from the analytic expectation path.
    """

    channel: int
    bin_edges_ps: np.ndarray
    counts: np.ndarray


@dataclass
class ProbabilityEstimates:
    """Recovered per-step distributions with binomial standard errors.

    low_statistics flags steps whose gated raw counts fall below 100.
    """

    p_hat: np.ndarray
    stderr: np.ndarray
    low_statistics: tuple


def _histogram_edges(n_steps: int, cfg: CountingConfig, loop_delay_ps: float) -> np.ndarray:
    """Bin edges spanning all peaks plus 6 sigma of jitter, aligned to bin_ps."""
    pad = 6.0 * cfg.jitter_ps + cfg.bin_ps
    lo = np.floor(-pad / cfg.bin_ps) * cfg.bin_ps
    hi = np.ceil(((n_steps - 1) * loop_delay_ps + pad) / cfg.bin_ps) * cfg.bin_ps
    n_bins = int(round((hi - lo) / cfg.bin_ps))
    return lo + cfg.bin_ps * np.arange(n_bins + 1)


def _check_record(record: StageRecord):
    total = float(record.probabilities.sum())
    if total > 1.0 + 1e-9:
        raise ValueError(f"total detection probability {total} exceeds 1")


def sample_run(record: StageRecord, cfg: CountingConfig, loop_delay_ps: float) -> list:
    """Sample arrival-time histograms for one experimental run.

    Signal counts per (step, channel) are Poisson with mean
    pair_rate_hz * duration_s * probability, centered at the step's delay
    with Gaussian jitter; background is uniform over the histogram span.
    Channel c draws from SeedSequence(cfg.seed, spawn_key=(c,)).
    """
    if loop_delay_ps <= 0:
        raise ValueError("loop_delay_ps must be positive")
    _check_record(record)
    n_steps, dim = record.probabilities.shape
    edges = _histogram_edges(n_steps, cfg, loop_delay_ps)
    span = (edges[0], edges[-1])
    expected_pairs = cfg.pair_rate_hz * cfg.duration_s
    expected_bg = cfg.background_rate_hz * cfg.duration_s
    out = []
    for channel in range(dim):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(channel,)))
        times = []
        for n in range(n_steps):
            count = rng.poisson(expected_pairs * record.probabilities[n, channel])
            if count:
                center = n * loop_delay_ps
                times.append(rng.normal(center, cfg.jitter_ps, size=count)
                             if cfg.jitter_ps > 0 else np.full(count, center))
        bg_count = rng.poisson(expected_bg)
        if bg_count:
            times.append(rng.uniform(span[0], span[1], size=bg_count))
        all_times = np.concatenate(times) if times else np.empty(0)
        counts, _ = np.histogram(all_times, bins=edges)
        out.append(ArrivalHistogram(channel, edges.copy(), counts))
    return out


def expected_histograms(record: StageRecord, cfg: CountingConfig, loop_delay_ps: float) -> list:
    """Infinite-statistics limit of sample_run: expected counts per bin."""
    if loop_delay_ps <= 0:
        raise ValueError("loop_delay_ps must be positive")
    _check_record(record)
    n_steps, dim = record.probabilities.shape
    edges = _histogram_edges(n_steps, cfg, loop_delay_ps)
    expected_pairs = cfg.pair_rate_hz * cfg.duration_s
    bg_per_bin = (cfg.background_rate_hz * cfg.duration_s) * cfg.bin_ps / (edges[-1] - edges[0])
    out = []
    for channel in range(dim):
        counts = np.full(edges.size - 1, bg_per_bin)
        for n in range(n_steps):
            mean = expected_pairs * record.probabilities[n, channel]
            center = n * loop_delay_ps
            if cfg.jitter_ps > 0:
                mass = np.diff(norm.cdf(edges, loc=center, scale=cfg.jitter_ps))
            else:
                mass = np.zeros(edges.size - 1)
                idx = np.searchsorted(edges, center, side="right") - 1
                if 0 <= idx < mass.size:
                    mass[idx] = 1.0
            counts = counts + mean * mass
        out.append(ArrivalHistogram(channel, edges.copy(), counts))
    return out


def default_windows(n_steps: int, cfg: CountingConfig, loop_delay_ps: float) -> list:
    """Symmetric per-step gates: 6 sigma of jitter or 2 bins, non-overlapping."""
    half = max(3.0 * cfg.jitter_ps, cfg.bin_ps)
    half = np.ceil(half / cfg.bin_ps) * cfg.bin_ps
    if 2 * half >= loop_delay_ps:
        raise ValueError("jitter too large for non-overlapping gates at this delay")
    return [((n * loop_delay_ps) - half, (n * loop_delay_ps) + half) for n in range(n_steps)]


def estimate_probabilities(histograms: list, windows: list, cfg: CountingConfig) -> ProbabilityEstimates:
    """Recover per-step channel distributions from gated histogram counts.

    Counts inside each step's gate are summed per channel, the expected
    uniform background inside the gate is subtracted (clipped at zero), and
    each step is renormalized. Standard errors are binomial,
    sqrt(p (1 - p) / N), with N the step's background-subtracted total.
    """
    if not histograms:
        raise ValueError("need at least one histogram")
    edges = histograms[0].bin_edges_ps
    for h in histograms:
        if not np.array_equal(h.bin_edges_ps, edges):
            raise ValueError("histograms must share bin edges")
    lows = [w[0] for w in windows]
    his = [w[1] for w in windows]
    order = np.argsort(lows)
    for a, b in zip(order[:-1], order[1:]):
        if his[a] > lows[b]:
            raise ValueError("windows must not overlap")
    width_needed = 6.0 * cfg.jitter_ps
    span = edges[-1] - edges[0]
    bg_total = cfg.background_rate_hz * cfg.duration_s
    n_steps = len(windows)
    dim = len(histograms)
    p_hat = np.zeros((n_steps, dim))
    stderr = np.zeros((n_steps, dim))
    flags = []
    for n, (lo, hi) in enumerate(windows):
        if hi <= lo:
            raise ValueError("window must have positive width")
        if hi - lo < width_needed:
            raise ValueError("window narrower than 6 sigma of jitter")
        sel = (edges[:-1] >= lo) & (edges[1:] <= hi)
        gate_width = float(np.sum(edges[1:][sel] - edges[:-1][sel]))
        bg_in_gate = bg_total * gate_width / span if span > 0 else 0.0
        raw = np.array([float(h.counts[sel].sum()) for h in histograms])
        signal = np.maximum(raw - bg_in_gate, 0.0)
        total = signal.sum()
        flags.append(bool(raw.sum() < 100))
        if total <= 0:
            continue
        p = signal / total
        p_hat[n] = p
        stderr[n] = np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / total)
    return ProbabilityEstimates(p_hat, stderr, tuple(flags))


def peak_separation_check(histograms: list, loop_delay_ps: float, jitter_ps: float):
    """Whether adjacent step peaks stay resolvable: margin = delay - 6 jitter.

    Requires the histogram span to cover at least two peaks; returns
    (ok, margin_ps).
    """
    if loop_delay_ps <= 0:
        raise ValueError("loop_delay_ps must be positive")
    if jitter_ps < 0:
        raise ValueError("jitter_ps must be >= 0")
    if not histograms:
        raise ValueError("need at least one histogram")
    edges = histograms[0].bin_edges_ps
    if edges[-1] - edges[0] <= loop_delay_ps:
        raise ValueError("histogram span covers fewer than two peaks")
    margin = loop_delay_ps - 6.0 * jitter_ps
    return margin >= 0.0, float(margin)


def histograms_to_csv(histograms: list, fileobj) -> None:
    """Write histograms as channel,bin_start_ps,count rows."""
    writer = csv.writer(fileobj)
    writer.writerow(["channel", "bin_start_ps", "count"])
    for h in histograms:
        for start, count in zip(h.bin_edges_ps[:-1], h.counts):
            writer.writerow([h.channel, repr(float(start)),
                             int(count) if float(count).is_integer() else repr(float(count))])


def estimates_to_csv(est: ProbabilityEstimates, fileobj) -> None:
    """Write estimates as step,channel,p_hat,stderr rows."""
    writer = csv.writer(fileobj)
    writer.writerow(["step", "channel", "p_hat", "stderr"])
    n_steps, dim = est.p_hat.shape
    for n in range(n_steps):
        for l in range(dim):
            writer.writerow([n + 1, l, repr(float(est.p_hat[n, l])),
                             repr(float(est.stderr[n, l]))])

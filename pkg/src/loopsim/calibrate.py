"""Phase training against theoretical targets, and the mitigation comparison.

A fabricated mesh realizes its plan imperfectly. Training keeps the noise
frozen (it models fixed fabrication error) and adjusts the commanded cell
phases so the chip's conditional output distributions, across every input
channel and loop step jointly, approach the ideal model's distributions
under a KL objective.
"""

import csv
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .loopchip import ChipConfig, step_power_matrices
from .mesh import MeshNoise, MeshPlan, MZICell, clements_decompose, forward_arrays, noise_offsets
from .model import SpinBosonParams, build_hamiltonian, step_unitary


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer settings for phase training."""

    learning_rate: float = 0.01
    max_iters: int = 2000
    tol: float = 1e-6
    grad_eps: float = 1e-6
    optimizer: str = "adam"
    clamp_eps: float = 1e-12

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        for name in ("tol", "grad_eps", "clamp_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.clamp_eps >= 1e-6:
            raise ValueError("clamp_eps must be below 1e-6")


@dataclass
class TrainResult:
    """Trained plan, loss trace (initial value first), convergence flag."""

    plan: MeshPlan
    trace: np.ndarray
    converged: bool


@dataclass(frozen=True)
class ErrorReport:
    """Per-step relative errors of one method on one parameter row."""

    per_step: tuple
    method: str
    params_id: int


@dataclass
class MethodComparison:
    """Paired decomposition/trained reports plus non-convergence flags."""

    decomposition: list
    trained: list
    non_converged: tuple


@dataclass(frozen=True)
class ParamTable:
    """Benchmark Hamiltonian parameter rows (epsilon, omega_hbar, lam)."""

    rows: tuple


def load_param_table(path=None) -> ParamTable:
    """Parameter table from CSV; the bundled 20-row benchmark when path is None."""
    if path is None:
        text = resources.files("loopsim.data").joinpath("hamiltonian_params.csv").read_text()
    else:
        text = Path(path).read_text()
    reader = csv.DictReader(text.splitlines())
    expected = {"epsilon", "omega_hbar", "lambda"}
    if reader.fieldnames is None or set(reader.fieldnames) != expected:
        raise ValueError("parameter table must have columns epsilon,omega_hbar,lambda")
    rows = tuple(
        (float(r["epsilon"]), float(r["omega_hbar"]), float(r["lambda"])) for r in reader
    )
    if len(rows) != 20:
        raise ValueError(f"parameter table must have exactly 20 rows, got {len(rows)}")
    return ParamTable(rows)


def kl_loss(t: np.ndarray, e: np.ndarray, clamp_eps: float = 1e-12) -> float:
    """sum(e * ln(e / t)) with both arguments clamped below at clamp_eps.

    t is the theoretical target, e the chip estimate; the estimate carries
    the weights. Not symmetric.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    if t.shape != e.shape:
        raise ValueError("t and e must have the same shape")
    if np.any(t < 0) or np.any(e < 0):
        raise ValueError("probabilities must be non-negative")
    tc = np.maximum(t, clamp_eps)
    ec = np.maximum(e, clamp_eps)
    return float(np.sum(ec * np.log(ec / tc)))


def theory_step_matrices(unitary: np.ndarray, n_steps: int) -> np.ndarray:
    """Ideal conditional power matrices: entry [n, k, l] = |(U^(n+1))[l, k]|^2."""
    u = np.asarray(unitary, dtype=complex)
    dim = u.shape[0]
    out = np.empty((n_steps, dim, dim))
    acc = np.eye(dim, dtype=complex)
    for n in range(n_steps):
        acc = u @ acc
        out[n] = (np.abs(acc) ** 2).T
    return out


def flatten_step_matrices(mats: np.ndarray) -> np.ndarray:
    """Flatten (n_steps, dim, dim) matrices input-major, then step, then channel."""
    mats = np.asarray(mats)
    return np.ascontiguousarray(np.transpose(mats, (1, 0, 2))).ravel()


def forward_all_inputs(plan: MeshPlan, noise, config: ChipConfig, n_steps: int) -> np.ndarray:
    """Chip conditional distributions for every input channel, flattened.

    Concatenates conditional_probabilities over input channels (input-major,
    then step, then output channel) into one vector of length
    dim^2 * n_steps, suitable as the training estimate.
    """
    mats = step_power_matrices(config, _realized(plan, noise), n_steps, "row")
    return flatten_step_matrices(mats)


def _realized(plan: MeshPlan, noise) -> np.ndarray:
    from .mesh import mesh_forward

    return mesh_forward(plan, noise)


def _plan_with_phases(plan: MeshPlan, thetas, phis) -> MeshPlan:
    cells = tuple(
        MZICell(c.lo, c.hi, float(th), float(ph), c.column)
        for c, th, ph in zip(plan.cells, thetas, phis)
    )
    return MeshPlan(plan.dim, cells, plan.output_phases)


def finite_diff_gradient(fn, x: np.ndarray, eps: float) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (fn(xp) - fn(xm)) / (2.0 * eps)
    return g


def train(plan: MeshPlan, noise, target: np.ndarray, tc: TrainingConfig,
          config: ChipConfig | None = None) -> TrainResult:
    """Adjust commanded cell phases to pull the noisy chip toward the target.

    The target is a flattened all-inputs distribution vector (see
    forward_all_inputs); its length fixes the step count. Noise offsets are
    frozen for the whole run. The best parameters seen are returned, so the
    final loss never exceeds the initial one; convergence means reaching
    tc.tol. An already-converged start returns immediately with a
    one-entry trace.
    """
    dim = plan.dim
    n_steps, rem = divmod(target.size, dim * dim)
    if rem != 0 or n_steps < 1:
        raise ValueError("target length must be a positive multiple of dim^2")
    if config is None:
        config = ChipConfig(dim=dim, lossless=True)
    if config.dim != dim:
        raise ValueError("config.dim must match plan.dim")

    n_cells = len(plan.cells)
    los = np.fromiter((c.lo for c in plan.cells), dtype=int, count=n_cells)
    offsets = noise_offsets(noise, n_cells)
    out_phases = plan.output_phases

    def loss_of(x):
        mesh_mat = forward_arrays(dim, los, x[:n_cells], x[n_cells:], out_phases, offsets)
        mats = step_power_matrices(config, mesh_mat, n_steps, "row")
        return kl_loss(target, flatten_step_matrices(mats), tc.clamp_eps)

    x = np.concatenate([
        np.fromiter((c.theta for c in plan.cells), dtype=float, count=n_cells),
        np.fromiter((c.phi for c in plan.cells), dtype=float, count=n_cells),
    ])
    loss = loss_of(x)
    trace = [loss]
    best_x, best_loss = x.copy(), loss
    if loss <= tc.tol:
        return TrainResult(plan, np.array(trace), True)

    m = np.zeros_like(x)
    v = np.zeros_like(x)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    converged = False
    for it in range(1, tc.max_iters + 1):
        g = finite_diff_gradient(loss_of, x, tc.grad_eps)
        if tc.optimizer == "adam":
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * g * g
            m_hat = m / (1.0 - beta1 ** it)
            v_hat = v / (1.0 - beta2 ** it)
            x = x - tc.learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
            loss = loss_of(x)
        else:
            step = tc.learning_rate
            for _ in range(100):
                candidate = x - step * g
                cand_loss = loss_of(candidate)
                if cand_loss <= loss:
                    x, loss = candidate, cand_loss
                    break
                step *= 0.5
            # else: no non-increasing step found, stay put this iteration
        trace.append(loss)
        if loss < best_loss:
            best_loss, best_x = loss, x.copy()
        if loss <= tc.tol:
            converged = True
            break
    trained = _plan_with_phases(plan, best_x[:n_cells], best_x[n_cells:])
    return TrainResult(trained, np.array(trace), converged)


def error_metric(t_mats: np.ndarray, e_mats: np.ndarray, n: int) -> float:
    """Relative RMS deviation of step n: sqrt(sum((t - e)^2) / sum(t^2))."""
    t_mats = np.asarray(t_mats, dtype=float)
    e_mats = np.asarray(e_mats, dtype=float)
    if t_mats.shape != e_mats.shape:
        raise ValueError("t and e must have the same shape")
    if not 1 <= n <= t_mats.shape[0]:
        raise ValueError("step index out of range")
    t = t_mats[n - 1]
    e = e_mats[n - 1]
    denom = np.sum(t * t)
    if denom == 0.0:
        raise ValueError("target power at this step is identically zero")
    return float(np.sqrt(np.sum((t - e) ** 2) / denom))


def compare_methods(table: ParamTable, noise: MeshNoise, tc: TrainingConfig,
                    n_steps: int = 3, seeds: int = 1,
                    config: ChipConfig | None = None) -> MethodComparison:
    """Decomposition-only vs trained errors over the benchmark table.

    For each parameter row the ideal step propagator is compiled to a plan;
    'decomposition' evaluates that plan under noise as-is, 'trained' first
    optimizes the phases against the ideal target. seeds counts independent
    noise realizations per row; realization k of row r uses a seed derived
    from (noise.seed, r, k), so results are reproducible.
    """
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    if config is None:
        config = ChipConfig(lossless=True)
    dec_reports = []
    tr_reports = []
    flagged = []
    for row_id, (eps, omega, lam) in enumerate(table.rows, start=1):
        params = SpinBosonParams(eps, omega, lam, n_boson=config.dim // 2)
        u = step_unitary(build_hamiltonian(params), params.dt)
        plan = clements_decompose(u)
        t_mats = theory_step_matrices(u, n_steps)
        target = flatten_step_matrices(t_mats)
        for k in range(seeds):
            child = np.random.SeedSequence(noise.seed, spawn_key=(row_id, k))
            noise_k = replace(noise, seed=int(child.generate_state(1)[0]))
            e_dec = step_power_matrices(config, _realized(plan, noise_k), n_steps, "row")
            result = train(plan, noise_k, target, tc, config)
            e_tr = step_power_matrices(config, _realized(result.plan, noise_k), n_steps, "row")
            dec_reports.append(ErrorReport(
                tuple(error_metric(t_mats, e_dec, n) for n in range(1, n_steps + 1)),
                "decomposition", row_id))
            tr_reports.append(ErrorReport(
                tuple(error_metric(t_mats, e_tr, n) for n in range(1, n_steps + 1)),
                "trained", row_id))
            if not result.converged:
                flagged.append(row_id)
    return MethodComparison(dec_reports, tr_reports, tuple(flagged))


def win_stats(comparison: MethodComparison):
    """(wins, ties, losses) of trained vs decomposition over all (pair, step)."""
    wins = ties = losses = 0
    for dec, tr in zip(comparison.decomposition, comparison.trained):
        for a, b in zip(dec.per_step, tr.per_step):
            if b < a:
                wins += 1
            elif b == a:
                ties += 1
            else:
                losses += 1
    return wins, ties, losses


def reports_to_csv(comparison: MethodComparison, fileobj) -> None:
    """Write reports as params_id,method,step,error rows."""
    writer = csv.writer(fileobj)
    writer.writerow(["params_id", "method", "step", "error"])
    for report in comparison.decomposition + comparison.trained:
        for step, err in enumerate(report.per_step, start=1):
            writer.writerow([report.params_id, report.method, step, repr(float(err))])


def trace_to_csv(trace: np.ndarray, fileobj) -> None:
    """Write a loss trace as iter,loss rows (iteration 0 is the initial loss)."""
    writer = csv.writer(fileobj)
    writer.writerow(["iter", "loss"])
    for i, value in enumerate(trace):
        writer.writerow([i, repr(float(value))])

"""Seeded Monte-Carlo experiments.

Every trial draws from its own stream ``trial_rng(master_seed, index)``
(a :class:`numpy.random.SeedSequence` spawned by counter), so results do not
depend on the number of workers or the order in which trials finish.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from circsense.errors import ConfigurationError, DomainError, RangeError
from circsense.operators import (
    CirculantOperator,
    GeneratorKind,
    GeneratorSpec,
    SampleMode,
    SampleSet,
    partial_operator,
    sample_generator,
    sample_omega,
)
from circsense.recovery import SolverConfig, relative_error, solve
from circsense.rip import SandwichParams, isometry_defect, sandwich_bounds


def trial_rng(master_seed: int, *counter: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(counter)))


def resolve_threads(threads: int) -> int:
    if threads < 0:
        raise ConfigurationError("threads must be >= 0")
    return threads or os.cpu_count() or 1


def parallel_map(fn, items, threads: int = 1):
    """Ordered map; ``threads > 1`` fans out to worker processes."""
    items = list(items)
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers <= 1:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


# --------------------------------------------------------------------------
# Recovery trials and phase curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    s: int
    m: int
    generator: GeneratorSpec = GeneratorSpec()
    omega_mode: SampleMode = SampleMode.MULTISET
    solver: str = "basis_pursuit"
    trials: int = 100
    master_seed: int = 0
    success_tol: float = 1e-4
    operator: str = "circulant"
    solver_config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        object.__setattr__(self, "omega_mode", SampleMode(self.omega_mode))
        if self.n < 1 or self.s < 1 or self.m < 1 or self.trials < 0:
            raise ConfigurationError("n, s and m must be positive and trials non-negative")
        if self.s > self.n:
            raise ConfigurationError(f"s={self.s} exceeds n={self.n}")
        if not self.success_tol > 0:
            raise ConfigurationError("success_tol must be positive")


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    seed: int
    n: int
    s: int
    m: int
    solver: str
    success: bool
    rel_error: float
    residual: float
    iterations: int

    HEADER = ("trial_index", "seed", "n", "s", "m", "solver", "success", "rel_error", "residual", "iterations")

    def csv_row(self):
        return [
            str(self.trial_index),
            str(self.seed),
            str(self.n),
            str(self.s),
            str(self.m),
            self.solver,
            str(int(self.success)),
            repr(self.rel_error),
            repr(self.residual),
            str(self.iterations),
        ]


def planted_signal(n: int, s: int, rng: np.random.Generator) -> np.ndarray:
    """``s``-sparse vector: uniform support, standard Gaussian amplitudes."""
    x = np.zeros(n)
    x[rng.choice(n, size=s, replace=False)] = rng.standard_normal(s)
    return x


def _trial_seed(master_seed, index):
    return int(np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def run_single_trial(cfg: ExperimentConfig, index: int) -> TrialRecord:
    seed = _trial_seed(cfg.master_seed, index)
    rng = np.random.default_rng(seed)
    phi = partial_operator(cfg.operator, cfg.generator, cfg.n, cfg.m, cfg.omega_mode, rng)
    x0 = planted_signal(cfg.n, cfg.s, rng)
    y = phi.matvec(x0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = solve(cfg.solver, phi, y, cfg.s, cfg.solver_config)
        err = relative_error(res.x_hat, x0)
        residual, iterations = res.residual, res.iterations
    except (np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        err, residual, iterations = math.inf, math.inf, 0
    return TrialRecord(index, seed, cfg.n, cfg.s, cfg.m, cfg.solver, bool(err <= cfg.success_tol), err, residual, iterations)


def run_recovery_trials(cfg: ExperimentConfig, threads: int = 1) -> list[TrialRecord]:
    if cfg.trials == 0:
        return []
    return parallel_map(partial(run_single_trial, cfg), range(cfg.trials), threads)


def success_rate(records) -> float:
    records = list(records)
    if not records:
        raise DomainError("success_rate of an empty record list")
    return sum(r.success for r in records) / len(records)


@dataclass(frozen=True)
class PhaseCurve:
    n: int
    s: int
    solver: str
    points: tuple[tuple[int, float, int], ...]

    HEADER = ("m", "success_rate", "trials")


def probe_config(cfg: ExperimentConfig, m: int) -> ExperimentConfig:
    # Each m gets its own stream family, independent of the search path.
    seed = int(np.random.SeedSequence(cfg.master_seed, spawn_key=(1 << 20, m)).generate_state(1, np.uint32)[0])
    return replace(cfg, m=m, master_seed=seed)


def phase_curve(cfg: ExperimentConfig, m_values, threads: int = 1) -> PhaseCurve:
    points = []
    for m in sorted(set(int(v) for v in m_values)):
        rate = success_rate(run_recovery_trials(probe_config(cfg, m), threads))
        points.append((m, rate, cfg.trials))
    return PhaseCurve(cfg.n, cfg.s, cfg.solver, tuple(points))


def bisect_grid(grid, rate_of, target: float):
    """Smallest grid value whose rate reaches ``target``, by bisection.

    Returns ``(m_star, rates)`` where ``rates`` maps every probed grid value
    to its measured rate. The grid predecessor of ``m_star`` is always probed
    and below target (unless ``m_star`` is the grid minimum).
    """
    grid = sorted(set(int(g) for g in grid))
    if not grid:
        raise ConfigurationError("empty m grid")
    rates = {}

    def rate(i):
        if grid[i] not in rates:
            rates[grid[i]] = rate_of(grid[i])
        return rates[grid[i]]

    if rate(len(grid) - 1) < target:
        raise RangeError(
            f"largest m={grid[-1]} only reaches rate {rates[grid[-1]]:.3f} < target {target}",
            {grid[-1]: rates[grid[-1]]},
        )
    if rate(0) >= target:
        return grid[0], rates
    lo, hi = 0, len(grid) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rate(mid) >= target:
            hi = mid
        else:
            lo = mid
    return grid[hi], rates


def find_min_m(cfg: ExperimentConfig, m_grid, target_rate: float, threads: int = 1) -> int:
    rate_of = lambda m: success_rate(run_recovery_trials(probe_config(cfg, m), threads))  # noqa: E731
    return bisect_grid(m_grid, rate_of, target_rate)[0]


# --------------------------------------------------------------------------
# Scaling fits
# --------------------------------------------------------------------------


FEATURES = {
    "new": lambda s, n: s * math.log(s) ** 2 * math.log(n),
    "old": lambda s, n: s * math.log(s) ** 2 * math.log(n) ** 2,
}


@dataclass(frozen=True)
class ScalingFit:
    points: tuple[tuple[int, int, float], ...]
    feature: str
    slope: float
    relative_residual: float


def fit_scaling(points, feature: str) -> ScalingFit:
    """Least-squares fit ``m_star ~ slope * feature(s, n)`` through the origin."""
    if feature not in FEATURES:
        raise ConfigurationError(f"unknown feature {feature!r}")
    points = tuple((int(s), int(n), float(m)) for s, n, m in points)
    if len(points) < 2:
        raise ConfigurationError("fit_scaling needs at least two points")
    f = np.array([FEATURES[feature](s, n) for s, n, _ in points])
    if np.any(f <= 0):
        raise DomainError("scaling features must be positive (s >= 2)")
    y = np.array([m for _, _, m in points])
    if np.ptp(f) == 0:
        warnings.warn("all scaling features are equal; the fit is degenerate", RuntimeWarning, stacklevel=2)
    slope = float(f @ y / (f @ f))
    resid = float(np.linalg.norm(y - slope * f) / np.linalg.norm(y))
    return ScalingFit(points, feature, slope, resid)


def scaling_grid(s_values, n_values, base: ExperimentConfig, target_rate: float, m_grid_for, threads: int = 1):
    """``(s, n, m_star)`` for each pair, using ``m_grid_for(s, n)`` as the search grid."""
    rows = []
    for s in s_values:
        for n in n_values:
            cfg = replace(base, n=n, s=s, master_seed=int(np.random.SeedSequence(base.master_seed, spawn_key=(s, n)).generate_state(1, np.uint32)[0]))
            rows.append((s, n, find_min_m(cfg, m_grid_for(s, n), target_rate, threads)))
    return rows


# --------------------------------------------------------------------------
# Isolated claims
# --------------------------------------------------------------------------


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class Prop31Report:
    """Small-energy event for the flat unit vector.

    ``theoretical_p0`` is ``2 (1 - Phi(sqrt(eps)))``. The event
    ``zeta^2 < eps`` for ``zeta ~ N(0, 1)`` has probability
    ``2 Phi(sqrt(eps)) - 1 = 1 - theoretical_p0``, reported as
    ``gaussian_limit``.
    """

    n: int
    epsilon: float
    trials: int
    empirical_prob: float
    theoretical_p0: float
    gaussian_limit: float
    zeta_mean: float
    zeta_variance: float
    max_crosscheck_error: float

    HEADER = ("n", "epsilon", "trials", "empirical_prob", "theoretical_p0")

    def csv_row(self):
        return [str(self.n), repr(self.epsilon), str(self.trials), repr(self.empirical_prob), repr(self.theoretical_p0)]


def _prop31_trial(spec, n, master_seed, crosscheck, index):
    rng = trial_rng(master_seed, index)
    xi = sample_generator(spec, n, rng)
    zeta = float(np.sum(xi)) / math.sqrt(n)
    err = 0.0
    if crosscheck:
        x = np.full(n, 1.0 / math.sqrt(n))
        ax = CirculantOperator(xi).matvec(x)
        err = abs(float(ax @ ax) / n - zeta * zeta)
    return zeta, err


def prop31_experiment(n: int, epsilon: float, trials: int, generator: GeneratorSpec, seed: int, threads: int = 1, crosscheck_trials: int = 64) -> Prop31Report:
    if generator.kind not in (GeneratorKind.RADEMACHER, GeneratorKind.GAUSSIAN) or generator.field.value != "real":
        raise ConfigurationError("the flat-vector experiment supports real Rademacher or Gaussian generators only")
    if n < 1 or trials < 1 or not epsilon > 0:
        raise ConfigurationError("need n >= 1, trials >= 1 and epsilon > 0")

    blocks = [range(i, min(i + 1000, trials)) for i in range(0, trials, 1000)]
    out = [pair for part in parallel_map(partial(_prop31_block, generator, n, seed, crosscheck_trials), blocks, threads) for pair in part]
    zeta = np.array([z for z, _ in out])
    p0 = math.erfc(math.sqrt(epsilon) / math.sqrt(2.0))
    return Prop31Report(
        n,
        epsilon,
        trials,
        float(np.count_nonzero(zeta * zeta < epsilon)) / trials,
        p0,
        1.0 - p0,
        float(zeta.mean()),
        float(zeta.var()),
        max(e for _, e in out),
    )


def _prop31_block(spec, n, seed, crosscheck_trials, block):
    return [_prop31_trial(spec, n, seed, i < crosscheck_trials, i) for i in block]


def random_sparse_unit(n: int, s: int, rng: np.random.Generator) -> np.ndarray:
    x = planted_signal(n, s, rng)
    return x / np.linalg.norm(x)


@dataclass(frozen=True)
class Cor23Summary:
    n: int
    s: int
    trials: int
    mean_energy: float
    mean_defect: float
    max_defect: float
    p99_defect: float

    HEADER = ("n", "s", "trials", "mean_energy", "mean_defect", "max_defect", "p99_defect")

    def csv_row(self):
        vals = [self.mean_energy, self.mean_defect, self.max_defect, self.p99_defect]
        return [str(self.n), str(self.s), str(self.trials)] + [repr(v) for v in vals]


def _cor23_trial(spec, n, s, seed, index):
    rng = trial_rng(seed, index)
    op = CirculantOperator(sample_generator(spec, n, rng))
    x = random_sparse_unit(n, s, rng)
    ax = op.matvec(x)
    energy = float(np.vdot(ax, ax).real) / n
    return energy, isometry_defect(op, x)


def corollary23_experiment(n: int, s: int, trials: int, generator: GeneratorSpec, seed: int, threads: int = 1) -> Cor23Summary:
    """Isometry defect of ``A_xi / sqrt(n)`` on random ``s``-sparse unit vectors."""
    if not 1 <= s <= n or trials < 1:
        raise ConfigurationError("need 1 <= s <= n and trials >= 1")
    out = parallel_map(partial(_cor23_trial, generator, n, s, seed), range(trials), threads)
    energy = np.array([e for e, _ in out])
    defect = np.array([d for _, d in out])
    return Cor23Summary(n, s, trials, float(energy.mean()), float(defect.mean()), float(defect.max()), float(np.percentile(defect, 99)))


@dataclass(frozen=True)
class SandwichSummary:
    n: int
    m: int
    s: int
    trials: int
    eps: float
    eta: float
    frequency: float

    HEADER = ("n", "m", "s", "trials", "eps", "eta", "frequency")

    def csv_row(self):
        return [str(self.n), str(self.m), str(self.s), str(self.trials), repr(self.eps), repr(self.eta), repr(self.frequency)]


def _sandwich_trial(spec, n, m, s, params, mode, seed, index):
    rng = trial_rng(seed, index)
    op = CirculantOperator(sample_generator(spec, n, rng))
    omega = SampleSet.full(n) if mode == "full" else sample_omega(n, m, mode, rng)
    x = random_sparse_unit(n, s, rng)
    lower, middle, upper = sandwich_bounds(op, omega, x, params)
    return lower <= middle <= upper


def sandwich_experiment(
    n: int,
    m: int,
    trials: int,
    params: SandwichParams,
    seed: int,
    s: int = 4,
    generator: GeneratorSpec = GeneratorSpec(),
    omega_mode: str = "multiset",
    threads: int = 1,
) -> SandwichSummary:
    """Fraction of trials whose subsampled energy lies inside the sandwich bounds.

    ``omega_mode='full'`` uses every row exactly once.
    """
    if trials < 1 or not 1 <= s <= n:
        raise ConfigurationError("need trials >= 1 and 1 <= s <= n")
    if omega_mode == "full":
        m = n
    else:
        omega_mode = SampleMode(omega_mode)
    hits = parallel_map(partial(_sandwich_trial, generator, n, m, s, params, omega_mode, seed), range(trials), threads)
    return SandwichSummary(n, m, s, trials, params.eps, params.eta, sum(hits) / trials)

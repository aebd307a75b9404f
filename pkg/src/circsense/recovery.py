"""Matrix-free sparse recovery: basis pursuit plus OMP, CoSaMP, IHT and HTP.

All solvers take any :class:`~circsense.operators.LinearOperator` and only
touch it through ``matvec``/``rmatvec`` (least-squares refits materialise the
handful of columns on the current support). Ties in every top-k selection
go to the smallest index so repeated runs are bitwise reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import linalg as sla

from circsense.errors import ConfigurationError, ContractError
from circsense.operators import LinearOperator

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 1000
    tol_residual: float = 1e-6
    step_size: float | None = None
    bp_penalty: float = 1.0
    power_iters: int = 50

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.tol_residual > 0:
            raise ConfigurationError("tol_residual must be positive")
        if not self.bp_penalty > 0:
            raise ConfigurationError("bp_penalty must be positive")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError("step_size must be positive")


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    support: tuple[int, ...]
    residual: float
    iterations: int
    converged: bool
    flags: list[str] = field(default_factory=list)

    HEADER = ("solver", "n", "m", "s", "iterations", "converged", "residual", "rel_error_vs_truth", "support")

    def csv_row(self, solver: str, m: int, s: int, truth=None) -> list[str]:
        rel = ""
        if truth is not None:
            rel = repr(relative_error(self.x_hat, truth))
        return [
            solver,
            str(self.x_hat.size),
            str(m),
            str(s),
            str(self.iterations),
            str(int(self.converged)),
            repr(self.residual),
            rel,
            ";".join(str(i + 1) for i in self.support),
        ]


def relative_error(x_hat, truth) -> float:
    scale = float(np.linalg.norm(truth))
    err = float(np.linalg.norm(np.asarray(x_hat) - truth))
    return err / scale if scale > 0 else err


def _finish(phi, y, x, iterations, converged, flags, support=None):
    residual = float(np.linalg.norm(phi.matvec(x) - y))
    if support is None:
        support = np.flatnonzero(x)
    support = tuple(sorted(int(i) for i in support if x[i] != 0))
    return RecoveryResult(x, support, residual, iterations, converged, flags)


def _check_inputs(phi, y, s=None):
    y = np.asarray(y)
    if y.shape != (phi.shape[0],):
        raise ContractError(f"measurement vector of shape {y.shape} does not match operator rows {phi.shape[0]}")
    if s is not None and not 1 <= s <= phi.shape[1]:
        raise ContractError(f"sparsity s={s} must lie in 1..{phi.shape[1]}")
    return y


def _zeros(phi, y):
    return np.zeros(phi.shape[1], dtype=np.result_type(y, np.float64))


def top_indices(v, k: int) -> np.ndarray:
    """Indices of the ``k`` largest ``|v|``; equal magnitudes favour smaller indices."""
    if k <= 0:
        return np.zeros(0, dtype=np.intp)
    return np.argsort(-np.abs(v), kind="stable")[:k]


def hard_threshold(x, s: int) -> np.ndarray:
    x = np.asarray(x)
    if not 0 <= s <= x.size:
        raise ContractError(f"cannot keep {s} entries of a length-{x.size} vector")
    out = np.zeros_like(x)
    keep = top_indices(x, s)
    out[keep] = x[keep]
    return out


def soft_threshold(x, gamma: float) -> np.ndarray:
    mag = np.abs(x)
    shrink = np.maximum(mag - gamma, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mag > 0, x / np.where(mag > 0, mag, 1.0) * shrink, 0.0)


def columns(phi: LinearOperator, support) -> np.ndarray:
    support = np.asarray(support, dtype=np.intp)
    basis = np.zeros((phi.shape[1], support.size))
    basis[support, np.arange(support.size)] = 1.0
    return np.asarray(phi.matvec(basis))


def _lstsq(a, y):
    # Minimum-norm solution, so collinear columns stay well defined.
    return np.linalg.lstsq(a, y, rcond=None)[0]


def spectral_norm_sq(phi: LinearOperator, iters: int = 50) -> float:
    """Power-iteration estimate of ``||Phi||_2^2`` from a fixed start vector."""
    n = phi.shape[1]
    v = np.ones(n) / math.sqrt(n)
    v = v + np.cos(np.arange(n)) * 1e-3
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = phi.rmatvec(phi.matvec(v))
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def _step(phi, cfg):
    if cfg.step_size is not None:
        return cfg.step_size
    lip = spectral_norm_sq(phi, cfg.power_iters)
    return 0.98 / lip if lip > 0 else 1.0


# --------------------------------------------------------------------------
# Basis pursuit
# --------------------------------------------------------------------------


class _AffineProjector:
    """Projection onto ``{z : Phi z = y}`` with CG solves of ``Phi Phi^*``."""

    def __init__(self, phi, y, cg_tol=1e-10):
        self.phi = phi
        self.y = y
        self.cg_tol = cg_tol
        m = phi.shape[0]
        dtype = np.result_type(y, np.float64)
        self.gram = sla.LinearOperator((m, m), matvec=lambda w: phi.matvec(phi.rmatvec(w)), dtype=dtype)
        self.w = np.zeros(m, dtype=dtype)
        self.regularize = 0.0
        self.flags = []

    def __call__(self, z):
        r = self.phi.matvec(z) - self.y
        w, info = sla.cg(self.gram, r, x0=self.w, rtol=self.cg_tol, atol=0.0, maxiter=10 * self.gram.shape[0])
        if info != 0 and self.regularize == 0.0:
            self.regularize = 1e-10 * spectral_norm_sq(self.phi, 20)
            self.flags.append("regularized")
            op = self.gram
            reg = self.regularize
            self.gram = sla.LinearOperator(op.shape, matvec=lambda v: op.matvec(v) + reg * v, dtype=op.dtype)
            w, info = sla.cg(self.gram, r, x0=self.w, rtol=self.cg_tol, atol=0.0, maxiter=10 * self.gram.shape[0])
        self.w = w
        return z - self.phi.rmatvec(w)


def basis_pursuit(phi: LinearOperator, y, cfg: SolverConfig = SolverConfig()) -> RecoveryResult:
    """Approximately solve ``min ||z||_1`` subject to ``Phi z = y``.

    Douglas-Rachford splitting between soft thresholding (penalty
    ``cfg.bp_penalty``) and exact projection onto the affine feasible set.
    The returned iterate is the projected (feasible) point, replaced by a
    least-squares refit on the thresholded support when that refit is
    feasible and has no larger l1 norm.
    """
    y = _check_inputs(phi, y)
    ynorm = float(np.linalg.norm(y))
    x = _zeros(phi, y)
    if ynorm == 0.0:
        return _finish(phi, y, x, 0, True, [])
    project = _AffineProjector(phi, y)
    gamma = cfg.bp_penalty
    z = x.copy()
    x_prev = project(z)
    converged = False
    it = 0
    u = x
    for it in range(1, cfg.max_iters + 1):
        u = soft_threshold(2.0 * x_prev - z, gamma)
        # u - x is the fixed-point residual; it vanishes exactly at a solution.
        step = u - x_prev
        z = z + step
        x = project(z)
        change = max(float(np.linalg.norm(x - x_prev)), float(np.linalg.norm(step)))
        x_prev = x
        if change <= cfg.tol_residual * max(float(np.linalg.norm(x)), ynorm):
            residual = float(np.linalg.norm(phi.matvec(x) - y))
            if residual <= cfg.tol_residual * ynorm:
                converged = True
                break
    if converged:
        x_prev = _polish(phi, y, x_prev, u, cfg.tol_residual * ynorm)
    return _finish(phi, y, x_prev, it, converged, project.flags)


def _polish(phi, y, x, u, tol):
    # The projected iterate carries O(tol) mass off the support of u.
    support = np.flatnonzero(u)
    if support.size == 0 or support.size > phi.shape[0]:
        return x
    cand = _zeros(phi, y)
    cand[support] = _lstsq(columns(phi, support), y)
    if float(np.linalg.norm(phi.matvec(cand) - y)) > tol or np.abs(cand).sum() > np.abs(x).sum():
        return x
    return cand


# --------------------------------------------------------------------------
# Greedy and thresholding solvers
# --------------------------------------------------------------------------


def _initial(phi, y, init_support):
    x = _zeros(phi, y)
    if init_support is not None and len(init_support):
        init_support = np.sort(np.asarray(init_support, dtype=np.intp))
        x[init_support] = _lstsq(columns(phi, init_support), y)
    return x


def omp(phi: LinearOperator, y, s: int, cfg: SolverConfig = SolverConfig(), init_support=None) -> RecoveryResult:
    """Orthogonal matching pursuit, ``s`` selections (fewer if the residual vanishes).

    ``init_support`` seeds the selected set before the greedy steps.
    """
    y = _check_inputs(phi, y, s)
    ynorm = float(np.linalg.norm(y))
    x = _zeros(phi, y)
    support: list[int] = [] if init_support is None else [int(i) for i in init_support]
    cols = columns(phi, support).astype(np.result_type(y, np.float64))
    coef = _lstsq(cols, y) if support else None
    residual = y - cols @ coef if support else y.copy()
    it = 0
    while len(support) < s:
        if float(np.linalg.norm(residual)) <= cfg.tol_residual * ynorm or ynorm == 0.0:
            break
        corr = np.abs(phi.rmatvec(residual))
        corr[support] = -1.0
        j = int(np.argmax(corr))
        support.append(j)
        cols = np.column_stack([cols, columns(phi, [j])[:, 0]])
        coef = _lstsq(cols, y)
        residual = y - cols @ coef
        it += 1
    if support:
        x[support] = coef
    converged = float(np.linalg.norm(residual)) <= cfg.tol_residual * ynorm
    return _finish(phi, y, x, it, converged, [], support)


def cosamp(phi: LinearOperator, y, s: int, cfg: SolverConfig = SolverConfig(), init_support=None) -> RecoveryResult:
    y = _check_inputs(phi, y, s)
    flags = []
    if phi.shape[0] < 2 * s:
        warnings.warn(f"CoSaMP with m={phi.shape[0]} < 2s={2 * s}", RuntimeWarning, stacklevel=2)
        flags.append("m<2s")
    ynorm = float(np.linalg.norm(y))
    x = _zeros(phi, y)
    if ynorm == 0.0:
        return _finish(phi, y, x, 0, True, flags)
    x = _initial(phi, y, init_support)
    residual = y - phi.matvec(x)
    prev_support = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        proxy = phi.rmatvec(residual)
        merged = np.union1d(top_indices(proxy, 2 * s), np.flatnonzero(x))
        coef = _lstsq(columns(phi, merged), y)
        keep = np.sort(top_indices(coef, s))
        x = _zeros(phi, y)
        x[merged[keep]] = coef[keep]
        residual = y - phi.matvec(x)
        if float(np.linalg.norm(residual)) <= cfg.tol_residual * ynorm:
            converged = True
            break
        support = tuple(merged[keep])
        if support == prev_support:
            break
        prev_support = support
    return _finish(phi, y, x, it, converged, flags)


def iht(phi: LinearOperator, y, s: int, cfg: SolverConfig = SolverConfig()) -> RecoveryResult:
    """Iterative hard thresholding ``x <- H_s(x + mu Phi^*(y - Phi x))``."""
    y = _check_inputs(phi, y, s)
    ynorm = float(np.linalg.norm(y))
    x = _zeros(phi, y)
    if ynorm == 0.0:
        return _finish(phi, y, x, 0, True, [])
    mu = _step(phi, cfg)
    flags = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        x = hard_threshold(x + mu * phi.rmatvec(y - phi.matvec(x)), s)
        xnorm = float(np.linalg.norm(x))
        if not math.isfinite(xnorm) or xnorm > DIVERGENCE_LIMIT:
            flags.append("diverged")
            x = np.nan_to_num(x)
            break
        if float(np.linalg.norm(phi.matvec(x) - y)) <= cfg.tol_residual * ynorm:
            converged = True
            break
    return _finish(phi, y, x, it, converged, flags)


def htp(phi: LinearOperator, y, s: int, cfg: SolverConfig = SolverConfig(), init_support=None) -> RecoveryResult:
    """Hard thresholding pursuit: IHT support step, then least squares on it."""
    y = _check_inputs(phi, y, s)
    ynorm = float(np.linalg.norm(y))
    x = _zeros(phi, y)
    if ynorm == 0.0:
        return _finish(phi, y, x, 0, True, [])
    mu = _step(phi, cfg)
    x = _initial(phi, y, init_support)
    prev_support = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        support = np.sort(top_indices(x + mu * phi.rmatvec(y - phi.matvec(x)), s))
        x = _zeros(phi, y)
        x[support] = _lstsq(columns(phi, support), y)
        if not np.all(np.isfinite(x)):
            return _finish(phi, y, np.nan_to_num(x), it, False, ["diverged"])
        if float(np.linalg.norm(phi.matvec(x) - y)) <= cfg.tol_residual * ynorm:
            converged = True
            break
        key = tuple(support)
        if key == prev_support:
            break
        prev_support = key
    return _finish(phi, y, x, it, converged, [])


SOLVERS = {
    "basis_pursuit": lambda phi, y, s, cfg: basis_pursuit(phi, y, cfg),
    "omp": omp,
    "cosamp": cosamp,
    "iht": iht,
    "htp": htp,
}


def solve(name: str, phi: LinearOperator, y, s: int, cfg: SolverConfig = SolverConfig()) -> RecoveryResult:
    try:
        fn = SOLVERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown solver {name!r} (choose from {', '.join(SOLVERS)})") from None
    return fn(phi, y, s, cfg)

"""Restricted isometry constants, sample-complexity formulas and sandwich checks.

The RIP constant of order ``s`` is computed per support as
``max(lambda_max - 1, 1 - lambda_min)`` of the ``s x s`` Gram block and then
maximised over supports. Exact enumeration uses the compiled kernel when it
was built and NumPy otherwise; set ``CIRCSENSE_PURE_PYTHON=1`` to force the
NumPy path.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass

import numpy as np

from circsense import _rip_fallback
from circsense.errors import ConfigurationError, ContractError, DomainError, ResourceError
from circsense.operators import CirculantOperator, LinearOperator, SampleSet, dense_materialize

try:
    from circsense import _rip_kernel
except ImportError:  # pragma: no cover - depends on the build
    _rip_kernel = None

ENUMERATION_CAP = 10**6


def extension_available() -> bool:
    return _rip_kernel is not None


def resolve_backend(backend: str = "auto") -> str:
    if backend == "auto":
        if _rip_kernel is not None and os.environ.get("CIRCSENSE_PURE_PYTHON") != "1":
            return "extension"
        return "python"
    if backend == "extension" and _rip_kernel is None:
        raise ConfigurationError("compiled RIP kernel is not available in this build")
    if backend not in ("extension", "python"):
        raise ConfigurationError(f"unknown backend {backend!r}")
    return backend


class RipKind(str, enum.Enum):
    EXACT = "exact"
    LOWER_BOUND = "lower_bound"


@dataclass(frozen=True)
class RipReport:
    s: int
    delta: float
    kind: RipKind
    worst_support: tuple[int, ...]
    sigma_min_sq: float
    sigma_max_sq: float
    supports_examined: int
    n: int
    m: int

    @property
    def rip_violated(self) -> bool:
        return self.delta >= 1.0

    HEADER = ("n", "m", "s", "kind", "delta", "sigma_min_sq", "sigma_max_sq", "worst_support", "supports_examined")

    def csv_row(self) -> list[str]:
        return [
            str(self.n),
            str(self.m),
            str(self.s),
            self.kind.value,
            repr(self.delta),
            repr(self.sigma_min_sq),
            repr(self.sigma_max_sq),
            ";".join(str(i + 1) for i in self.worst_support),
            str(self.supports_examined),
        ]


@dataclass(frozen=True)
class SandwichParams:
    eps: float
    eta: float

    def __post_init__(self):
        if not (0 < self.eps < 1):
            raise ConfigurationError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.eta > 0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")


def _gram(phi: LinearOperator, cap: int) -> np.ndarray:
    a = dense_materialize(phi, cap)
    g = a.conj().T @ a
    if not np.iscomplexobj(g):
        return np.ascontiguousarray(g, dtype=np.float64)
    return g


def _check_support(support, n):
    support = [int(i) for i in support]
    if len(set(support)) != len(support):
        raise ContractError(f"support {support} has duplicate indices")
    if any(i < 0 or i >= n for i in support):
        raise ContractError(f"support {support} out of range for n={n}")
    return support


def gram_submatrix_extremes(phi: LinearOperator, support) -> tuple[float, float]:
    """Extreme eigenvalues of ``Phi_S^* Phi_S`` for a (0-based) support."""
    support = _check_support(support, phi.shape[1])
    basis = np.zeros((phi.shape[1], len(support)))
    basis[support, np.arange(len(support))] = 1.0
    cols = np.asarray(phi.matvec(basis))
    ev = np.linalg.eigvalsh(cols.conj().T @ cols)
    return max(float(ev[0]), 0.0), max(float(ev[-1]), 0.0)


def exact_rip_constant(phi: LinearOperator, s: int, cap: int = ENUMERATION_CAP, backend: str = "auto") -> RipReport:
    """Exact ``delta_s`` by enumerating all supports in lexicographic order."""
    m, n = phi.shape
    if not 1 <= s <= n:
        raise DomainError(f"need 1 <= s <= n, got s={s}, n={n}")
    total = math.comb(n, s)
    if total > cap:
        raise ResourceError(
            f"C({n},{s}) = {total} supports exceeds the enumeration cap {cap}; use mc_rip_lower_bound instead"
        )
    gram = _gram(phi, max(cap, max(phi.shape)))
    if resolve_backend(backend) == "extension" and not np.iscomplexobj(gram):
        delta, worst, lo, hi, count = _rip_kernel.enumerate_supports(gram, s)
    else:
        delta, worst, lo, hi, count = _rip_fallback.enumerate_supports(gram, s)
    return RipReport(s, float(delta), RipKind.EXACT, tuple(int(i) for i in worst), float(lo), float(hi), int(count), n, m)


def _random_supports(n, s, trials, rng, chunk=4096):
    # Rows of uniform keys, argsorted: each row's first s entries are a
    # uniform s-subset. Drawing row blocks sequentially keeps the stream
    # prefix-stable, so fewer trials always sample a prefix of more trials.
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        keys = rng.random((k, n))
        yield np.sort(np.argsort(keys, axis=1)[:, :s], axis=1)
        done += k


def mc_rip_lower_bound(phi: LinearOperator, s: int, trials: int, rng: np.random.Generator) -> RipReport:
    """Lower bound on ``delta_s`` from ``trials`` random supports (duplicates examined once)."""
    m, n = phi.shape
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    if not 1 <= s <= n:
        raise DomainError(f"need 1 <= s <= n, got s={s}, n={n}")
    gram = _gram(phi, max(phi.shape))
    seen = set()

    def fresh(chunks):
        for chunk in chunks:
            keep = []
            for row in chunk:
                key = tuple(row)
                if key not in seen:
                    seen.add(key)
                    keep.append(row)
            if keep:
                yield np.array(keep)

    delta, worst, lo, hi, count = _rip_fallback.scan(gram, fresh(_random_supports(n, s, trials, rng)))
    return RipReport(s, float(delta), RipKind.LOWER_BOUND, tuple(int(i) for i in worst), float(lo), float(hi), int(count), n, m)


def recovery_condition_ok(delta_ts: float, t: float) -> bool:
    """Whether ``delta_ts < sqrt(1 - 1/t)``, the l1-recovery condition (needs ``t > 4/3``)."""
    if not t > 4.0 / 3.0:
        raise DomainError(f"t must exceed 4/3, got {t}")
    return delta_ts < math.sqrt(1.0 - 1.0 / t)


def _check_bound_domain(s, n, delta, C, min_s):
    if not (s >= min_s and n > s and 0 < delta < 1 and C > 0):
        raise ConfigurationError(f"invalid bound arguments s={s}, n={n}, delta={delta}, C={C}")


def required_m_new(s: float, n: float, delta: float, C: float = 1.0) -> int:
    """``ceil(C log^2(1/delta) delta^-2 s log^2(s/delta) log n)``."""
    _check_bound_domain(s, n, delta, C, 2)
    value = C * math.log(1 / delta) ** 2 / delta**2 * s * math.log(s / delta) ** 2 * math.log(n)
    return math.ceil(value)


def required_m_old(s: float, n: float, delta: float, C: float = 1.0) -> int:
    """``ceil(C delta^-2 s log^2 s log^2 n)``."""
    _check_bound_domain(s, n, delta, C, 2)
    return math.ceil(C / delta**2 * s * math.log(s) ** 2 * math.log(n) ** 2)


def sandwich_bounds(M: LinearOperator, omega: SampleSet, x, params: SandwichParams, max_entry: float | None = None):
    """Evaluate ``(lower, middle, upper)`` of the subsampled-energy sandwich.

    ``middle`` is the mean of ``|(Mx)_j|^2`` over the multiset ``omega``;
    the bounds are ``(1 -/+ eps)/n ||Mx||^2 -/+ eta ||x||_1^2 ||M||_max^2``.
    """
    n = M.shape[0]
    x = np.asarray(x)
    if M.shape[0] != M.shape[1] or omega.n != n or x.shape != (n,):
        raise ContractError("sandwich_bounds needs a square operator, matching sample set and vector")
    if max_entry is None:
        max_entry = M.max_entry_magnitude()
    mx = M.matvec(x)
    energy = float(np.vdot(mx, mx).real)
    middle = float(np.mean(np.abs(mx[omega.indices]) ** 2))
    slack = params.eta * float(np.sum(np.abs(x))) ** 2 * max_entry**2
    return (1 - params.eps) / n * energy - slack, middle, (1 + params.eps) / n * energy + slack


def isometry_defect(A: CirculantOperator, x) -> float:
    """``|(1/n) ||A x||^2 - ||x||^2|``."""
    x = np.asarray(x)
    if x.shape != (A.shape[1],):
        raise ContractError(f"vector of shape {x.shape} does not match operator {A.shape}")
    ax = A.matvec(x)
    return abs(float(np.vdot(ax, ax).real) / A.shape[0] - float(np.vdot(x, x).real))

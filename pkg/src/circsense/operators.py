"""Random generators, sampling sets and matrix-free structured operators.

Every operator here acts on column vectors (``(n,)`` arrays) or on stacks of
columns (``(n, k)`` arrays). Circulant products run through the FFT, Toeplitz
and Hankel products through a circulant embedding of dimension ``2n - 1``.
Indices are 0-based internally; :class:`SampleSet` converts to the 1-based
convention used in files.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from circsense.errors import ConfigurationError, ContractError, ResourceError

DENSE_CAP = 4096


class GeneratorKind(str, enum.Enum):
    RADEMACHER = "rademacher"
    UNIFORM_SYM = "uniform"
    GAUSSIAN = "gaussian"
    TRUNCATED_SUBGAUSSIAN = "truncated"


class Field(str, enum.Enum):
    REAL = "real"
    COMPLEX = "complex"


@dataclass(frozen=True)
class GeneratorSpec:
    """Law of the i.i.d. entries of a generator vector.

    All kinds are zero mean and unit variance. ``subgauss_L`` is the
    subgaussian parameter; for the truncated kind it also fixes the entry
    bound ``L * sqrt(2 log n)``.
    """

    kind: GeneratorKind = GeneratorKind.RADEMACHER
    subgauss_L: float = 1.0
    field: Field = Field.REAL

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind(self.kind))
        object.__setattr__(self, "field", Field(self.field))
        if not (self.subgauss_L > 0 and math.isfinite(self.subgauss_L)):
            raise ConfigurationError(f"subgauss_L must be positive, got {self.subgauss_L}")
        if self.kind is GeneratorKind.RADEMACHER and self.field is Field.COMPLEX:
            raise ConfigurationError("complex Rademacher generators are not supported")

    @classmethod
    def parse(cls, name: str, subgauss_L: float = 1.0, field: str = "real") -> "GeneratorSpec":
        try:
            kind = GeneratorKind(name.lower())
        except ValueError:
            choices = ", ".join(k.value for k in GeneratorKind)
            raise ConfigurationError(f"unknown generator {name!r} (choose from {choices})") from None
        return cls(kind, subgauss_L, Field(field))

    def bound(self, n: int | None = None) -> float:
        """Almost-sure bound on entry magnitudes (``inf`` for Gaussian)."""
        if self.kind is GeneratorKind.RADEMACHER:
            return 1.0
        if self.kind is GeneratorKind.UNIFORM_SYM:
            return math.sqrt(3.0)
        if self.kind is GeneratorKind.GAUSSIAN:
            return math.inf
        if n is None:
            raise ContractError("the truncated generator bound depends on n")
        return self.subgauss_L * math.sqrt(2.0 * math.log(n))

    @property
    def bound_c(self) -> float:
        return self.bound()


def _truncation_point(target_bound: float) -> tuple[float, float]:
    # Find a with a / sd(N(0,1) | |Z|<=a) == target_bound; returns (a, sd).
    # a / sd(a) rises from sqrt(3) (a -> 0) to infinity, so a root exists
    # exactly when target_bound > sqrt(3).
    def sd(a):
        if a < 1e-3:
            return a / math.sqrt(3.0)
        mass = math.erf(a / math.sqrt(2.0))
        return math.sqrt(1.0 - 2.0 * a * stats.norm.pdf(a) / mass)

    if target_bound <= math.sqrt(3.0) + 1e-9:
        raise ConfigurationError(
            f"truncation bound {target_bound:.4g} must exceed sqrt(3) for a unit-variance "
            "truncated Gaussian; increase n or subgauss_L"
        )
    a = optimize.brentq(lambda a: a / sd(a) - target_bound, 1e-3, target_bound, xtol=1e-14)
    return a, sd(a)


def _real_samples(spec: GeneratorSpec, size: int, n: int, rng: np.random.Generator) -> np.ndarray:
    kind = spec.kind
    if kind is GeneratorKind.RADEMACHER:
        return rng.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
    if kind is GeneratorKind.UNIFORM_SYM:
        r3 = math.sqrt(3.0)
        return rng.uniform(-r3, r3, size=size)
    if kind is GeneratorKind.GAUSSIAN:
        return rng.standard_normal(size)
    a, sd = _truncation_point(spec.bound(max(n, 1)))
    draws = stats.truncnorm(-a, a).rvs(size=size, random_state=rng) / sd
    return np.clip(draws, -spec.bound(n), spec.bound(n))


def sample_generator(spec: GeneratorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a length-``n`` generator with i.i.d. entries from ``spec``."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    if spec.field is Field.REAL:
        return _real_samples(spec, n, n, rng)
    parts = _real_samples(spec, 2 * n, n, rng).reshape(2, n)
    return (parts[0] + 1j * parts[1]) / math.sqrt(2.0)


# --------------------------------------------------------------------------
# Linear operators
# --------------------------------------------------------------------------


class LinearOperator:
    """Minimal matrix-free operator interface.

    Subclasses implement ``_matvec`` and ``_rmatvec`` (the adjoint) for
    arrays whose first axis matches the operator's input dimension.
    """

    shape: tuple[int, int]

    def matvec(self, x):
        x = np.asarray(x)
        if x.ndim not in (1, 2) or x.shape[0] != self.shape[1]:
            raise ContractError(f"operator of shape {self.shape} cannot act on array of shape {x.shape}")
        return self._matvec(x)

    def rmatvec(self, y):
        y = np.asarray(y)
        if y.ndim not in (1, 2) or y.shape[0] != self.shape[0]:
            raise ContractError(f"adjoint of shape {self.shape[::-1]} cannot act on array of shape {y.shape}")
        return self._rmatvec(y)

    def __matmul__(self, x):
        return self.matvec(x)

    def max_entry_magnitude(self) -> float:
        """Largest entry magnitude ``max_ij |M_ij|``."""
        return float(np.max(np.abs(dense_materialize(self))))

    def _matvec(self, x):
        raise NotImplementedError

    def _rmatvec(self, y):
        raise NotImplementedError


class MatrixOperator(LinearOperator):
    """Wraps an explicit matrix."""

    def __init__(self, matrix):
        matrix = np.array(matrix)
        if matrix.ndim != 2:
            raise ContractError("MatrixOperator needs a 2-D array")
        matrix.setflags(write=False)
        self.matrix = matrix
        self.shape = matrix.shape

    def _matvec(self, x):
        return self.matrix @ x

    def _rmatvec(self, y):
        return self.matrix.conj().T @ y

    def max_entry_magnitude(self):
        return float(np.max(np.abs(self.matrix)))


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


class CirculantOperator(LinearOperator):
    """Circulant matrix whose first column is ``xi``.

    ``(A x)_k = sum_j xi[(k - j) mod n] x_j`` evaluated as
    ``ifft(fft(xi) * fft(x))``.
    """

    def __init__(self, xi):
        xi = np.asarray(xi)
        if xi.ndim != 1 or xi.size < 1:
            raise ContractError("circulant generator must be a non-empty vector")
        if not np.iscomplexobj(xi):
            xi = xi.astype(np.float64)
        self.n = xi.size
        self.shape = (self.n, self.n)
        self.xi = _frozen(xi)
        self.spectrum = _frozen(np.fft.fft(xi))
        self._real = not np.iscomplexobj(xi)
        self._half_spectrum = _frozen(np.fft.rfft(xi)) if self._real else None

    def _apply(self, x, adjoint):
        col = (slice(None), None) if x.ndim == 2 else slice(None)
        if self._real and not np.iscomplexobj(x):
            spec = self._half_spectrum.conj() if adjoint else self._half_spectrum
            return np.fft.irfft(spec[col] * np.fft.rfft(x, axis=0), n=self.n, axis=0)
        spec = self.spectrum.conj() if adjoint else self.spectrum
        return np.fft.ifft(spec[col] * np.fft.fft(x, axis=0), axis=0)

    def _matvec(self, x):
        return self._apply(x, adjoint=False)

    def _rmatvec(self, y):
        return self._apply(y, adjoint=True)

    def max_entry_magnitude(self):
        return float(np.max(np.abs(self.xi)))


class ToeplitzOperator(LinearOperator):
    """Toeplitz matrix ``T[i, j] = xi[n - 1 + i - j]`` (0-based).

    Stored as the leading ``n x n`` block of a circulant of dimension
    ``2n - 1``.
    """

    def __init__(self, xi, n: int):
        xi = np.asarray(xi)
        if xi.ndim != 1 or n < 1 or xi.size != 2 * n - 1:
            raise ContractError(f"Toeplitz generator for n={n} must have length {2 * n - 1}, got {xi.shape}")
        self.n = n
        self.shape = (n, n)
        self.xi = _frozen(xi)
        # column 0 of the embedding: xi[n-1], ..., xi[2n-2], then xi[0], ..., xi[n-2]
        self.embedded = CirculantOperator(np.concatenate([xi[n - 1:], xi[: n - 1]]))

    def _pad(self, x):
        pad = [(0, self.n - 1)] + [(0, 0)] * (x.ndim - 1)
        return np.pad(x, pad)

    def _matvec(self, x):
        return self.embedded.matvec(self._pad(x))[: self.n]

    def _rmatvec(self, y):
        return self.embedded.rmatvec(self._pad(y))[: self.n]

    def max_entry_magnitude(self):
        return float(np.max(np.abs(self.xi)))


class HankelOperator(LinearOperator):
    """``H = T J`` where ``J`` reverses coordinates; H x = T (reversed x)."""

    def __init__(self, base: ToeplitzOperator):
        if not isinstance(base, ToeplitzOperator):
            raise ContractError("HankelOperator needs a ToeplitzOperator base")
        self.base = base
        self.n = base.n
        self.shape = base.shape

    def _matvec(self, x):
        return self.base.matvec(x[::-1])

    def _rmatvec(self, y):
        return self.base.rmatvec(y)[::-1]

    def max_entry_magnitude(self):
        return self.base.max_entry_magnitude()


def make_toeplitz(xi, n: int) -> ToeplitzOperator:
    return ToeplitzOperator(xi, n)


def make_hankel(t: ToeplitzOperator) -> HankelOperator:
    return HankelOperator(t)


def dense_materialize(op: LinearOperator, cap: int = DENSE_CAP) -> np.ndarray:
    """Explicit matrix whose columns are ``op`` applied to the basis vectors."""
    if max(op.shape) > cap:
        raise ResourceError(f"operator of shape {op.shape} exceeds the dense cap {cap}")
    return np.asarray(op.matvec(np.eye(op.shape[1])))


# --------------------------------------------------------------------------
# Sampling sets
# --------------------------------------------------------------------------


class SampleMode(str, enum.Enum):
    MULTISET = "multiset"
    SUBSET = "subset"
    FIXED = "fixed"


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Row selection Omega, kept in draw order (0-based internally)."""

    indices: np.ndarray
    n: int
    mode: SampleMode = SampleMode.FIXED

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if idx.size < 1:
            raise ContractError("a sample set needs at least one index")
        if idx.min() < 0 or idx.max() >= self.n:
            raise ContractError(f"sample indices must lie in 1..{self.n}")
        mode = SampleMode(self.mode)
        if mode is SampleMode.SUBSET and np.unique(idx).size != idx.size:
            raise ContractError("subset sample sets cannot repeat indices")
        object.__setattr__(self, "indices", _frozen(idx))
        object.__setattr__(self, "mode", mode)

    @property
    def m(self) -> int:
        return int(self.indices.size)

    @property
    def one_based(self) -> list[int]:
        return [int(i) + 1 for i in self.indices]

    @classmethod
    def from_one_based(cls, indices, n: int) -> "SampleSet":
        return cls(np.asarray(list(indices), dtype=np.int64) - 1, n, SampleMode.FIXED)

    @classmethod
    def full(cls, n: int) -> "SampleSet":
        return cls(np.arange(n), n, SampleMode.SUBSET)

    def to_string(self) -> str:
        return ",".join(str(i) for i in self.one_based)

    @classmethod
    def parse(cls, text: str, n: int) -> "SampleSet":
        try:
            values = [int(tok) for tok in text.replace("\n", ",").split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse sample set: {exc}") from None
        return cls.from_one_based(values, n)


def sample_omega(n: int, m: int, mode, rng: np.random.Generator) -> SampleSet:
    mode = SampleMode(mode)
    if m < 1 or n < 1:
        raise ConfigurationError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if mode is SampleMode.MULTISET:
        idx = rng.integers(0, n, size=m)
    elif mode is SampleMode.SUBSET:
        if m > n:
            raise ConfigurationError(f"cannot draw {m} distinct indices out of {n}")
        idx = rng.choice(n, size=m, replace=False)
    else:
        raise ConfigurationError("fixed sample sets are built with SampleSet.from_one_based")
    return SampleSet(idx, n, mode)


class SubsampledOperator(LinearOperator):
    """``(1/sqrt(m)) P_Omega base``; rows follow the order of ``omega``."""

    def __init__(self, base: LinearOperator, omega: SampleSet):
        if base.shape[0] != omega.n:
            raise ContractError(f"sample set over 1..{omega.n} does not match operator rows {base.shape[0]}")
        self.base = base
        self.omega = omega
        self.scale = 1.0 / math.sqrt(omega.m)
        self.shape = (omega.m, base.shape[1])

    def _matvec(self, x):
        return self.base.matvec(x)[self.omega.indices] * self.scale

    def _rmatvec(self, y):
        z = np.zeros((self.base.shape[0],) + y.shape[1:], dtype=np.result_type(y, np.float64))
        np.add.at(z, self.omega.indices, y)
        return self.base.rmatvec(z) * self.scale

    def max_entry_magnitude(self):
        return self.base.max_entry_magnitude() * self.scale


def subsample(base: LinearOperator, omega: SampleSet) -> SubsampledOperator:
    return SubsampledOperator(base, omega)


def circulant_matvec(op: CirculantOperator, x):
    return op.matvec(x)


def circulant_adjoint_matvec(op: CirculantOperator, y):
    return op.rmatvec(y)


def build_operator(kind: str, xi, n: int) -> LinearOperator:
    """Square operator of ``kind`` ('circulant', 'toeplitz', 'hankel') from ``xi``."""
    if kind == "circulant":
        op = CirculantOperator(xi)
        if op.n != n:
            raise ContractError(f"circulant generator has length {op.n}, expected {n}")
        return op
    if kind == "toeplitz":
        return ToeplitzOperator(xi, n)
    if kind == "hankel":
        return HankelOperator(ToeplitzOperator(xi, n))
    raise ConfigurationError(f"unknown operator kind {kind!r}")


def generator_length(kind: str, n: int) -> int:
    return n if kind == "circulant" else 2 * n - 1


def partial_operator(kind: str, spec: GeneratorSpec, n: int, m: int, mode, rng) -> SubsampledOperator:
    """Draw xi, then Omega, from ``rng`` and return the scaled partial operator."""
    xi = sample_generator(spec, generator_length(kind, n), rng)
    omega = sample_omega(n, m, mode, rng)
    return subsample(build_operator(kind, xi, n), omega)

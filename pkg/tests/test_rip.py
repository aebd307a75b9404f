import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circsense import operators as ops
from circsense import rip
from circsense.errors import ConfigurationError, ContractError, DomainError, ResourceError

BACKENDS = ["python"] + (["extension"] if rip.extension_available() else [])


def brute_force_delta(matrix, s):
    """Independent oracle: singular values of every column subset."""
    best = -1.0
    for cols in itertools.combinations(range(matrix.shape[1]), s):
        sv = np.linalg.svd(matrix[:, cols], compute_uv=False)
        lo = sv[-1] ** 2 if len(sv) == s else 0.0
        best = max(best, sv[0] ** 2 - 1, 1 - lo)
    return best


def partial_circulant(n, m, seed, kind="rademacher"):
    return ops.partial_operator("circulant", ops.GeneratorSpec(kind), n, m, "multiset", np.random.default_rng(seed))


# -- Gram extremes ---------------------------------------------------------


def test_gram_identity():
    assert rip.gram_submatrix_extremes(ops.MatrixOperator(np.eye(4)), [0, 2]) == pytest.approx((1.0, 1.0))


def test_gram_scaled():
    assert rip.gram_submatrix_extremes(ops.MatrixOperator(2 * np.eye(4)), [1]) == pytest.approx((4.0, 4.0))


def test_gram_matches_svd():
    phi = partial_circulant(8, 4, 0)
    a = ops.dense_materialize(phi)
    sv = np.linalg.svd(a[:, [0, 1]], compute_uv=False)
    lo, hi = rip.gram_submatrix_extremes(phi, [0, 1])
    assert lo == pytest.approx(sv[-1] ** 2, abs=1e-10)
    assert hi == pytest.approx(sv[0] ** 2, abs=1e-10)


def test_gram_duplicate_support():
    with pytest.raises(ContractError):
        rip.gram_submatrix_extremes(ops.MatrixOperator(np.eye(3)), [1, 1])


# -- exact constants -------------------------------------------------------


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("s", [1, 2, 3])
def test_identity_has_zero_delta(backend, s):
    r = rip.exact_rip_constant(ops.MatrixOperator(np.eye(5)), s, backend=backend)
    assert r.delta == pytest.approx(0.0, abs=1e-14)
    assert r.kind is rip.RipKind.EXACT
    assert r.supports_examined == math.comb(5, s)


@pytest.mark.parametrize("backend", BACKENDS)
def test_diagonal_example(backend):
    r = rip.exact_rip_constant(ops.MatrixOperator(np.diag([1.0, 0.5])), 1, backend=backend)
    assert r.delta == pytest.approx(0.75)
    assert r.worst_support == (1,)
    assert r.sigma_min_sq == pytest.approx(0.25)
    assert r.sigma_max_sq == pytest.approx(1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_exact_matches_brute_force(backend):
    phi = partial_circulant(12, 8, 2024)
    r = rip.exact_rip_constant(phi, 2, backend=backend)
    assert r.supports_examined == 66
    assert r.delta == pytest.approx(brute_force_delta(ops.dense_materialize(phi), 2), abs=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_worst_support_attains_delta(backend):
    phi = partial_circulant(10, 6, 5, "gaussian")
    r = rip.exact_rip_constant(phi, 3, backend=backend)
    lo, hi = rip.gram_submatrix_extremes(phi, r.worst_support)
    assert max(hi - 1, 1 - lo) == pytest.approx(r.delta, abs=1e-10)
    assert r.delta == pytest.approx(max(r.sigma_max_sq - 1, 1 - r.sigma_min_sq), abs=1e-12)


def test_ties_report_first_support():
    # Every support of the identity has delta 0; the first one is reported.
    r = rip.exact_rip_constant(ops.MatrixOperator(np.eye(6)), 3)
    assert r.worst_support == (0, 1, 2)


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    for seed in range(5):
        phi = partial_circulant(14, 7, seed, "gaussian")
        for s in (2, 4, 6):
            a = rip.exact_rip_constant(phi, s, backend="python")
            b = rip.exact_rip_constant(phi, s, backend="extension")
            assert a.delta == pytest.approx(b.delta, abs=1e-10)
            assert a.sigma_min_sq == pytest.approx(b.sigma_min_sq, abs=1e-10)
            assert a.sigma_max_sq == pytest.approx(b.sigma_max_sq, abs=1e-10)


def test_complex_operator_uses_python_path():
    xi = ops.sample_generator(ops.GeneratorSpec("gaussian", field="complex"), 8, np.random.default_rng(1))
    phi = ops.subsample(ops.CirculantOperator(xi), ops.SampleSet.from_one_based([1, 3, 5, 7, 8], 8))
    r = rip.exact_rip_constant(phi, 2)
    assert r.delta == pytest.approx(brute_force_delta(ops.dense_materialize(phi), 2), abs=1e-10)


def test_enumeration_cap():
    with pytest.raises(ResourceError, match="mc_rip_lower_bound"):
        rip.exact_rip_constant(ops.MatrixOperator(np.eye(30)), 10, cap=1000)


def test_rip_violation_flag():
    r = rip.exact_rip_constant(ops.MatrixOperator(np.diag([2.0, 1.0])), 1)
    assert r.delta == pytest.approx(3.0)
    assert r.rip_violated


def test_csv_row_uses_one_based_support():
    r = rip.exact_rip_constant(ops.MatrixOperator(np.diag([1.0, 1.0, 0.5])), 1)
    row = r.csv_row()
    assert row[rip.RipReport.HEADER.index("worst_support")] == "3"
    assert len(row) == len(rip.RipReport.HEADER)


@pytest.mark.parametrize("seed", range(5))
def test_monotone_in_order(seed):
    phi = partial_circulant(10, 6, seed)
    deltas = [rip.exact_rip_constant(phi, s).delta for s in (1, 2, 3)]
    assert deltas[0] <= deltas[1] + 1e-12 <= deltas[2] + 2e-12


@pytest.mark.parametrize("seed", range(5))
def test_toeplitz_hankel_equal(seed):
    rng = np.random.default_rng(seed)
    t = ops.make_toeplitz(ops.sample_generator(ops.GeneratorSpec("rademacher"), 19, rng), 10)
    omega = ops.sample_omega(10, 6, "multiset", rng)
    a = rip.exact_rip_constant(ops.subsample(t, omega), 2)
    b = rip.exact_rip_constant(ops.subsample(ops.make_hankel(t), omega), 2)
    assert a.delta == pytest.approx(b.delta, abs=1e-12)


# -- Monte-Carlo lower bound -----------------------------------------------


def test_mc_identity():
    r = rip.mc_rip_lower_bound(ops.MatrixOperator(np.eye(8)), 3, 50, np.random.default_rng(0))
    assert r.delta == pytest.approx(0.0, abs=1e-14)
    assert r.kind is rip.RipKind.LOWER_BOUND


def test_mc_covering_equals_exact():
    phi = partial_circulant(12, 8, 11)
    mc = rip.mc_rip_lower_bound(phi, 2, 5000, np.random.default_rng(3))
    assert mc.supports_examined == 66
    assert mc.delta == pytest.approx(rip.exact_rip_constant(phi, 2).delta, abs=1e-12)


def test_mc_monotone_in_trials():
    phi = partial_circulant(20, 10, 4, "gaussian")
    few = rip.mc_rip_lower_bound(phi, 3, 10, np.random.default_rng(8))
    many = rip.mc_rip_lower_bound(phi, 3, 1000, np.random.default_rng(8))
    assert few.delta <= many.delta


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), s=st.integers(1, 3), trials=st.integers(1, 40))
def test_mc_never_exceeds_exact(seed, s, trials):
    phi = partial_circulant(9, 5, seed, "gaussian")
    mc = rip.mc_rip_lower_bound(phi, s, trials, np.random.default_rng(seed + 1))
    assert mc.delta <= rip.exact_rip_constant(phi, s).delta + 1e-12


def test_mc_rejects_zero_trials():
    with pytest.raises(ConfigurationError):
        rip.mc_rip_lower_bound(ops.MatrixOperator(np.eye(3)), 1, 0, np.random.default_rng(0))


# -- recovery condition and bound formulas -----------------------------------


@pytest.mark.parametrize("delta,t,expected", [(0.5, 2, True), (0.71, 2, False), (0.0, 1.5, True)])
def test_recovery_condition(delta, t, expected):
    assert rip.recovery_condition_ok(delta, t) is expected


def test_recovery_condition_domain():
    with pytest.raises(DomainError):
        rip.recovery_condition_ok(0.1, 4 / 3)


def test_required_m_new_pinned():
    # ln^2(2) * 4 * 10 * ln^2(20) * ln(1024) = 1195.48...
    assert rip.required_m_new(10, 1024, 0.5) == 1196


def test_required_m_old_pinned():
    # 4 * 10 * ln^2(10) * ln^2(1024) = 10189.25...
    assert rip.required_m_old(10, 1024, 0.5) == 10190


def test_required_m_new_symbolic():
    e = math.e
    # delta = 1/e, s = e^2, n = e^4: 1 * e^2 * e^2 * 3^2 * 4
    assert rip.required_m_new(e**2, e**4, 1 / e) == math.ceil(36 * e**4)


def test_required_m_new_rejects_n_below_s():
    with pytest.raises(ConfigurationError):
        rip.required_m_new(math.e**2, math.e, 1 / math.e)


def test_required_m_new_log_n_linear():
    a = rip.required_m_new(10, 1000, 0.3)
    b = rip.required_m_new(10, 1000**2, 0.3)
    assert abs(b - 2 * a) <= 1


def test_old_new_ratio_doubles_with_squared_n():
    s, delta = 10, 0.3
    r1 = rip.required_m_old(s, 1000, delta) / rip.required_m_new(s, 1000, delta)
    r2 = rip.required_m_old(s, 1000**2, delta) / rip.required_m_new(s, 1000**2, delta)
    assert r2 / r1 == pytest.approx(2.0, rel=1e-3)


@pytest.mark.parametrize("fn", [rip.required_m_new, rip.required_m_old])
@pytest.mark.parametrize("args", [(1, 100, 0.5), (10, 5, 0.5), (10, 100, 1.0), (10, 100, 0.0), (10, 100, 0.5, 0.0)])
def test_bound_domain(fn, args):
    with pytest.raises(ConfigurationError):
        fn(*args)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(2, 200), n_extra=st.floats(1, 1e6), delta=st.floats(0.01, 0.9))
def test_bounds_monotone(s, n_extra, delta):
    n = s + n_extra
    for fn in (rip.required_m_new, rip.required_m_old):
        base = fn(s, n, delta)
        assert base > 0
        assert fn(s, 2 * n, delta) >= base
        assert fn(s, n, delta * 0.9) >= base
        if s + 1 < n:
            assert fn(s + 1, n, delta) >= base


# -- sandwich and isometry defect --------------------------------------------


def test_sandwich_full_sampling_strictly_inside(rng):
    op = ops.CirculantOperator(ops.sample_generator(ops.GeneratorSpec("rademacher"), 16, rng))
    x = rng.standard_normal(16)
    lower, middle, upper = rip.sandwich_bounds(op, ops.SampleSet.full(16), x, rip.SandwichParams(0.1, 0.01))
    assert middle == pytest.approx(np.sum(op.matvec(x) ** 2) / 16)
    assert lower < middle < upper


def test_sandwich_zero_vector():
    op = ops.CirculantOperator(np.ones(4))
    assert rip.sandwich_bounds(op, ops.SampleSet.full(4), np.zeros(4), rip.SandwichParams(0.5, 0.5)) == (0.0, 0.0, 0.0)


def test_sandwich_multiset_multiplicity():
    op = ops.CirculantOperator([1.0, 0.0, 0.0])
    x = np.array([1.0, 2.0, 3.0])
    _, middle, _ = rip.sandwich_bounds(op, ops.SampleSet.from_one_based([3, 3, 1], 3), x, rip.SandwichParams(0.5, 0.5))
    assert middle == pytest.approx((9 + 9 + 1) / 3)


def test_sandwich_formula():
    xi = np.array([1.0, -2.0, 0.5, 1.0])
    op = ops.CirculantOperator(xi)
    x = np.array([1.0, 0.0, -1.0, 0.0])
    params = rip.SandwichParams(0.2, 0.05)
    lower, middle, upper = rip.sandwich_bounds(op, ops.SampleSet.from_one_based([2], 4), x, params)
    mx = op.matvec(x)
    energy = mx @ mx
    slack = 0.05 * 2.0**2 * 2.0**2
    assert lower == pytest.approx(0.8 / 4 * energy - slack)
    assert upper == pytest.approx(1.2 / 4 * energy + slack)
    assert middle == pytest.approx(mx[1] ** 2)


@pytest.mark.parametrize("eps,eta", [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0)])
def test_sandwich_params_validation(eps, eta):
    with pytest.raises(ConfigurationError):
        rip.SandwichParams(eps, eta)


def test_defect_permutation_generator():
    n = 6
    xi = np.zeros(n)
    xi[1] = 1.0
    x = np.random.default_rng(0).standard_normal(n)
    x /= np.linalg.norm(x)
    assert rip.isometry_defect(ops.CirculantOperator(xi), x) == pytest.approx(1 - 1 / n)


def test_defect_all_ones():
    x = np.zeros(5)
    x[0] = 1
    assert rip.isometry_defect(ops.CirculantOperator(np.ones(5)), x) == pytest.approx(0.0, abs=1e-14)


def test_defect_flat_vector(rng):
    n = 50
    xi = ops.sample_generator(ops.GeneratorSpec("rademacher"), n, rng)
    zeta = xi.sum() / math.sqrt(n)
    x = np.full(n, 1 / math.sqrt(n))
    assert rip.isometry_defect(ops.CirculantOperator(xi), x) == pytest.approx(abs(zeta**2 - 1), abs=1e-12)

"""Least-squares estimator: loss, gradient, projections, descent loops."""

import numpy as np
import pytest

from mpoqst.estimator import (
    STEP_PRESETS,
    EstimatorConfig,
    admissible_init_radius,
    admissible_step_interval,
    empirical_operator,
    gamma_t_factor,
    loss,
    loss_dense,
    outcome_sum_tt,
    pgd,
    preset_schedule,
    project_mpo,
    project_to_simplex,
    psd_project,
    psgd,
    random_init,
    recovery_error,
    spectral_init,
    wirtinger_gradient,
)
from mpoqst.povm import ProductPOVM, dense_from_product, iter_outcomes
from mpoqst.sampling import population_record, sample_enumerate, sample_sequential
from mpoqst.states import MPDOGenConfig, maximally_mixed, random_mpdo
from mpoqst.tt import (
    DenseOperator,
    NumericalError,
    is_hermitian,
    random_tt,
    tt_scale,
    tt_to_dense,
    tt_trace,
)

# Frozen from the dense reference run (n=3, rank 1, M=1e5, random init,
# diminishing schedule, seeds below): final recovery error of the descent.
PGD_N3_REFERENCE_ERROR = 0.009651


def _mpdo(n, seed, kappa=2, purity=10):
    return random_mpdo(MPDOGenConfig(n=n, kappa=kappa, purity=purity,
                                     seed=seed))


def random_hermitian(dim, rng):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (m + m.conj().T) / 2


# ---------------------------------------------------------------------------
# outcome sums / empirical operator


def test_outcome_sum_matches_kron_sum():
    povm = ProductPOVM.local_sic(2)
    dense_els = dense_from_product(povm).elements
    outcomes = [(1, 1), (2, 3), (4, 4), (3, 1)]
    weights = [0.5, -0.25, 1.5, 0.1]
    got = tt_to_dense(outcome_sum_tt(outcomes, weights, povm)).matrix
    flat = {o: i for i, o in enumerate(iter_outcomes(povm))}
    want = sum(w * dense_els[flat[o]] for o, w in zip(outcomes, weights))
    assert np.abs(got - want).max() < 1e-12


def test_outcome_sum_single_site():
    povm = ProductPOVM.local_sic(1)
    got = tt_to_dense(outcome_sum_tt([(1,), (3,)], [2.0, 1.0], povm)).matrix
    want = 2.0 * povm.sites[0].elements[0] + povm.sites[0].elements[2]
    assert np.abs(got - want).max() < 1e-13


def test_empirical_operator_matches_brute_force():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=1)
    rec = sample_enumerate(povm, rho, 700, seed=2)
    got = tt_to_dense(empirical_operator(rec, povm)).matrix
    dense_els = dense_from_product(povm).elements
    flat = {o: i for i, o in enumerate(iter_outcomes(povm))}
    want = sum(w * dense_els[flat[o]] for o, w in rec.weights().items())
    assert np.abs(got - want).max() < 1e-12


def test_empirical_operator_rank_caps():
    povm = ProductPOVM.local_sic(6)
    rho = _mpdo(6, seed=3, kappa=1)
    rec = sample_sequential(povm, rho, 3000, seed=4)
    emp = empirical_operator(rec, povm)
    caps = (4, 16, 64, 16, 4)
    assert all(r <= c for r, c in zip(emp.ranks[1:-1], caps))


# ---------------------------------------------------------------------------
# loss


def test_loss_zero_on_population_record():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=5)
    rec = population_record(povm, rho)
    assert loss(rho, rec, povm) <= 1e-12


def test_loss_matches_dense_enumeration():
    povm = ProductPOVM.local_sic(2)
    rho = _mpdo(2, seed=6)
    rec = sample_enumerate(povm, rho, 2000, seed=7)
    state = _mpdo(2, seed=8)
    tt_val = loss(state, rec, povm)
    dense_val = loss_dense(tt_to_dense(state), rec, povm)
    assert abs(tt_val - dense_val) < 1e-10


def test_loss_nonnegative():
    povm = ProductPOVM.local_sic(2)
    rho = _mpdo(2, seed=9)
    rec = sample_enumerate(povm, rho, 100, seed=10)
    for seed in range(10):
        state = _mpdo(2, seed=100 + seed)
        assert loss(state, rec, povm) >= 0.0


# ---------------------------------------------------------------------------
# gradient


def test_gradient_zero_at_truth_with_population_record():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=11)
    handle = wirtinger_gradient(rho, population_record(povm, rho), povm)
    assert handle.norm() <= 1e-10


def test_gradient_zero_for_mixed_state_uniform_record():
    povm = ProductPOVM.local_sic(2)
    mm = maximally_mixed(2)
    handle = wirtinger_gradient(mm, population_record(povm, mm), povm)
    assert handle.norm() <= 1e-10


def test_gradient_finite_differences():
    povm = ProductPOVM.local_sic(2)
    rho = _mpdo(2, seed=12)
    rec = sample_enumerate(povm, rho, 3000, seed=13)
    state = _mpdo(2, seed=14)
    grad = wirtinger_gradient(state, rec, povm).to_dense().matrix
    dm = tt_to_dense(state).matrix
    rng = np.random.default_rng(15)
    eps = 1e-5
    for _ in range(20):
        h = random_hermitian(4, rng)
        lp = loss_dense(DenseOperator.from_matrix(dm + eps * h), rec, povm)
        lm = loss_dense(DenseOperator.from_matrix(dm - eps * h), rec, povm)
        fd = (lp - lm) / (2 * eps)
        analytic = 2 * np.vdot(h, grad).real
        assert abs(fd - analytic) <= 1e-6 * max(abs(fd), 1e-6)


def test_gradient_structured_terms():
    povm = ProductPOVM.local_sic(2)
    rho = _mpdo(2, seed=16)
    rec = sample_enumerate(povm, rho, 50, seed=17)
    state = _mpdo(2, seed=18)
    handle = wirtinger_gradient(state, rec, povm)
    assert handle.channel.ranks == state.ranks
    assert len(handle.terms) == len(rec.counts)
    assert len(handle.terms) <= min(rec.m_shots, povm.k_total)


# ---------------------------------------------------------------------------
# projection


def test_project_fixed_point():
    rho = _mpdo(3, seed=19)
    out = project_mpo(rho, (4, 4))
    diff = np.abs(tt_to_dense(out).matrix - tt_to_dense(rho).matrix).max()
    assert diff < 1e-10


def test_project_removes_scale():
    rho = _mpdo(3, seed=20)
    out = project_mpo(tt_scale(rho, 2.0), (4, 4))
    diff = np.abs(tt_to_dense(out).matrix - tt_to_dense(rho).matrix).max()
    assert diff < 1e-10


def test_project_accepts_dense_and_array():
    rho = _mpdo(2, seed=21)
    dm = tt_to_dense(rho)
    for raw in (dm, dm.matrix):
        out = project_mpo(raw, (4,))
        assert np.abs(tt_to_dense(out).matrix - dm.matrix).max() < 1e-10


def test_project_near_truth_error_controlled():
    rng = np.random.default_rng(22)
    rho = _mpdo(3, seed=23)
    e = random_hermitian(8, rng)
    e *= 1e-3 / np.linalg.norm(e)
    perturbed = DenseOperator.from_matrix(tt_to_dense(rho).matrix + e)
    out = project_mpo(perturbed, (4, 4))
    err = np.linalg.norm(tt_to_dense(out).matrix - tt_to_dense(rho).matrix)
    # rounding plus trace renormalization at most doubles the perturbation
    assert err <= 2.5 * np.linalg.norm(e)


def test_project_degenerate_trace_errors():
    rng = np.random.default_rng(24)
    traceless = random_hermitian(4, rng)
    traceless -= np.trace(traceless) / 4 * np.eye(4)
    with pytest.raises(NumericalError):
        project_mpo(DenseOperator.from_matrix(traceless), (4,))


def test_output_is_hermitian_unit_trace():
    raw = random_tt(3, 2, (3, 3), seed=25)
    out = project_mpo(raw, (2, 2))
    assert abs(tt_trace(out) - 1.0) < 1e-10
    assert is_hermitian(out, 1e-8)


# ---------------------------------------------------------------------------
# initializations


def test_spectral_init_preprojection_identity_single_qubit():
    # with exact probabilities, 6 sum p_k B_k = rho + I
    povm = ProductPOVM.local_sic(1)
    rho = _mpdo(1, seed=26, kappa=1, purity=3)
    rec = population_record(povm, rho)
    emp = tt_to_dense(tt_scale(empirical_operator(rec, povm), 6.0)).matrix
    want = tt_to_dense(rho).matrix + np.eye(2)
    assert np.abs(emp - want).max() < 1e-10


def test_spectral_init_recovers_maximally_mixed():
    povm = ProductPOVM.local_sic(2)
    mm = maximally_mixed(2)
    rec = sample_enumerate(povm, mm, 10 ** 5, seed=27)
    init = spectral_init(rec, povm, (1,))
    assert recovery_error(init, mm) <= 0.05


def test_spectral_init_respects_rank_cap():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=28)
    rec = sample_sequential(povm, rho, 2000, seed=29)
    init = spectral_init(rec, povm, (2, 2))
    assert all(r <= c for r, c in zip(init.ranks[1:-1], (2, 2)))


def test_random_init_properties():
    init = random_init((4, 4), n=3, d=2, seed=30)
    assert abs(tt_trace(init) - 1.0) < 1e-10
    assert is_hermitian(init, 1e-10)
    diffs = 0
    for seed in range(20):
        a = random_init((2, 2), 3, 2, seed=seed)
        b = random_init((2, 2), 3, 2, seed=seed + 1000)
        if recovery_error(a, b) > 0.01:
            diffs += 1
    assert diffs == 20


# ---------------------------------------------------------------------------
# physical projection


def test_psd_project_fixed_point():
    rho = tt_to_dense(_mpdo(2, seed=31))
    out = psd_project(rho)
    assert np.abs(out.matrix - rho.matrix).max() < 1e-10


def test_psd_project_simple_diag():
    out = psd_project(np.diag([1.2, -0.2]).astype(complex))
    assert np.abs(out.matrix - np.diag([1.0, 0.0])).max() < 1e-12


def test_psd_project_nonexpansive():
    rng = np.random.default_rng(32)
    for _ in range(100):
        w = rng.dirichlet(np.ones(4))
        u = np.linalg.qr(rng.standard_normal((4, 4))
                         + 1j * rng.standard_normal((4, 4)))[0]
        truth = (u * w) @ u.conj().T
        rho_hat = truth + 0.3 * random_hermitian(4, rng)
        projected = psd_project(rho_hat)
        before = np.linalg.norm(rho_hat - truth)
        after = np.linalg.norm(projected.matrix - truth)
        assert after <= before + 1e-12


def test_psd_project_rejects_non_hermitian():
    rng = np.random.default_rng(33)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    with pytest.raises(ValueError):
        psd_project(m)


def test_simplex_projection_properties():
    rng = np.random.default_rng(34)
    for _ in range(50):
        v = rng.standard_normal(8) * 2
        p = project_to_simplex(v)
        assert abs(p.sum() - 1.0) < 1e-10
        assert p.min() >= 0
        # projecting a point already on the simplex is the identity
        q = project_to_simplex(p)
        assert np.abs(p - q).max() < 1e-10


# ---------------------------------------------------------------------------
# recovery error


def test_recovery_error_identical_states():
    rho = _mpdo(3, seed=35)
    assert recovery_error(rho, rho) <= 1e-7


def test_recovery_error_matches_dense():
    a, b = _mpdo(3, seed=36), _mpdo(3, seed=37)
    want = np.linalg.norm(tt_to_dense(a).matrix - tt_to_dense(b).matrix)
    assert abs(recovery_error(a, b) - want) < 1e-10


def test_recovery_error_triangle_inequality():
    for seed in range(5):
        a, b, c = (_mpdo(2, seed=40 + seed), _mpdo(2, seed=50 + seed),
                   _mpdo(2, seed=60 + seed))
        assert recovery_error(a, c) <= (recovery_error(a, b)
                                        + recovery_error(b, c) + 1e-10)


# ---------------------------------------------------------------------------
# descent loops


def test_pgd_fixed_point_at_truth():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=41)
    rec = population_record(povm, rho)
    config = EstimatorConfig(ranks=4, init="provided", init_state=rho,
                             max_iters=10, mu0=5 / 8, plateau_rel_tol=0,
                             check_iterates=True)
    out = pgd(rec, povm, config, truth=rho)
    diff = np.abs(tt_to_dense(out.state).matrix
                  - tt_to_dense(rho).matrix).max()
    assert diff < 1e-10
    assert out.iterations_run == 10


def test_pgd_regression_target_n3():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=21, kappa=1)
    rec = sample_sequential(povm, rho, 10 ** 5, seed=5)
    config = EstimatorConfig(ranks=1, init="random", init_seed=1,
                             **STEP_PRESETS["pgd-random-rank1"])
    out = pgd(rec, povm, config, truth=rho)
    init_error = out.trace_log[0].error
    final_error = out.trace_log[-1].error
    assert final_error < 0.1 * init_error
    assert abs(final_error - PGD_N3_REFERENCE_ERROR) <= \
        0.2 * PGD_N3_REFERENCE_ERROR


def test_pgd_smoothed_loss_monotone():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=21, kappa=1)
    rec = sample_sequential(povm, rho, 10 ** 5, seed=5)
    config = EstimatorConfig(ranks=1, init="random", init_seed=1,
                             **STEP_PRESETS["pgd-random-rank1"])
    out = pgd(rec, povm, config, truth=rho)
    losses = np.array([r.loss for r in out.trace_log])
    smooth = np.convolve(losses, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smooth) <= 1e-12)


def test_backend_equivalence_over_20_steps():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=7)
    rec = sample_enumerate(povm, rho, 5000, seed=8)
    init = _mpdo(3, seed=9)
    base = dict(ranks=4, init="provided", init_state=init, max_iters=20,
                mu0=5 / 8, lam=0.9, plateau_rel_tol=0)
    out_tt = pgd(rec, povm, EstimatorConfig(backend="tt", **base))
    out_dn = pgd(rec, povm, EstimatorConfig(backend="dense", **base))
    diff = np.abs(tt_to_dense(out_tt.state).matrix
                  - tt_to_dense(out_dn.state).matrix).max()
    assert diff < 1e-8


def test_pgd_iterate_invariants_every_step():
    povm = ProductPOVM.local_sic(2)
    rho = _mpdo(2, seed=43)
    rec = sample_enumerate(povm, rho, 1000, seed=44)
    config = EstimatorConfig(ranks=4, init="random", init_seed=45,
                             max_iters=15, mu0=5 / 8, check_iterates=True)
    out = pgd(rec, povm, config, truth=rho)  # raises if any iterate drifts
    assert abs(tt_trace(out.state) - 1.0) < 1e-10
    assert is_hermitian(out.state, 1e-8)


def test_pgd_divergence_reports_iteration():
    # a catastrophically large step overflows the iterate scale; the loop
    # reports the offending iteration instead of looping on garbage
    povm = ProductPOVM.local_sic(2)
    rho = _mpdo(2, seed=46)
    rec = sample_enumerate(povm, rho, 1000, seed=47)
    config = EstimatorConfig(ranks=4, init="random", init_seed=48,
                             max_iters=50, mu0=1e300, lam=1.0)
    with pytest.raises(NumericalError, match="iteration"):
        pgd(rec, povm, config)


def test_psgd_degenerate_batching_equals_pgd():
    povm = ProductPOVM.local_sic(2)
    rho = _mpdo(2, seed=1)
    rec = sample_enumerate(povm, rho, 2000, seed=2)
    init = _mpdo(2, seed=3)
    k = povm.k_total
    base = dict(ranks=4, init="provided", init_state=init,
                plateau_rel_tol=0)
    out_pgd = pgd(rec, povm, EstimatorConfig(max_iters=1, **base))
    out_psgd = psgd(rec, povm, EstimatorConfig(epoch_size=k, batch_size=k,
                                               max_epochs=1, **base))
    diff = np.abs(tt_to_dense(out_pgd.state).matrix
                  - tt_to_dense(out_psgd.state).matrix).max()
    assert diff < 1e-10


def test_psgd_epoch_accounting_and_metadata():
    povm = ProductPOVM.local_sic(4)
    rho = _mpdo(4, seed=49)
    rec = sample_sequential(povm, rho, 500, seed=50)
    config = EstimatorConfig(ranks=4, init="random", init_seed=51,
                             batch_size=32, max_epochs=2)
    out = psgd(rec, povm, config, truth=rho)
    n_epoch = out.metadata["epoch_size"]
    # defaults follow 10 d^2 n rbar^2 clipped to the outcome space
    assert n_epoch == min(max(10 * 4 * 4 * 16, len(rec.counts)), 256)
    assert out.metadata["batch_size"] == 32
    assert out.iterations_run == 2 * (n_epoch // 32)


def test_psgd_requires_epoch_covering_nonzeros():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=52)
    rec = sample_sequential(povm, rho, 1000, seed=53)
    config = EstimatorConfig(ranks=1, epoch_size=2, batch_size=2)
    with pytest.raises(ValueError):
        psgd(rec, povm, config)


def test_psgd_close_to_pgd_at_n5():
    povm = ProductPOVM.local_sic(5)
    rho = _mpdo(5, seed=42)
    rec = sample_sequential(povm, rho, 3000, seed=43)
    cfg_p = EstimatorConfig(ranks=4, init="random", init_seed=7,
                            max_iters=250,
                            **STEP_PRESETS["pgd-random-rank4"])
    cfg_s = EstimatorConfig(ranks=4, init="random", init_seed=7,
                            **STEP_PRESETS["psgd-random"])
    err_p = pgd(rec, povm, cfg_p, truth=rho).trace_log[-1].error
    err_s = psgd(rec, povm, cfg_s, truth=rho).trace_log[-1].error
    assert err_s <= 2.0 * err_p


# ---------------------------------------------------------------------------
# presets and diagnostics


def test_preset_lookup():
    assert preset_schedule("pgd", "random", 1)["mu0"] == 5 / 4
    assert preset_schedule("pgd", "spectral", 4)["mu0"] == 5 / 16
    assert preset_schedule("psgd", "random", 4)["mu0"] == 5 / 4
    assert preset_schedule("psgd", "spectral", 4)["scale_2n"] is False


def test_gamma_t_factor():
    assert gamma_t_factor(3.5, 2) == 3.5
    assert gamma_t_factor(3.5, 3) == 1.0


def test_admissible_step_interval_shape():
    lo, hi = admissible_step_interval(n=3, d=2, k_total=64, sigma_min=0.3,
                                      init_error=1e-5)
    assert 0 < lo < hi
    radius = admissible_init_radius(n=3, d=2, sigma_min=0.3)
    assert radius > 0
    # within the theory's radius the window is non-empty
    lo2, _ = admissible_step_interval(n=3, d=2, k_total=64, sigma_min=0.3,
                                      init_error=radius * 0.9)
    assert lo2 < hi


def test_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(lam=0.0)
    with pytest.raises(ValueError):
        EstimatorConfig(init="other")
    with pytest.raises(ValueError):
        EstimatorConfig(backend="gpu")
    config = EstimatorConfig(ranks=7)
    assert config.rank_vector(3, 2) == (4, 4)


def test_tt_round_tol_compresses_iterates():
    povm = ProductPOVM.local_sic(3)
    rho = _mpdo(3, seed=54, kappa=1)
    rec = sample_sequential(povm, rho, 2000, seed=55)
    base = dict(ranks=4, init="random", init_seed=56, max_iters=10,
                mu0=5 / 8)
    loose = pgd(rec, povm, EstimatorConfig(tt_round_tol=0.5, **base),
                truth=rho)
    tight = pgd(rec, povm, EstimatorConfig(**base), truth=rho)
    # aggressive compression keeps the state valid but with smaller bonds
    assert abs(tt_trace(loose.state) - 1.0) < 1e-10
    assert max(loose.state.ranks) <= max(tight.state.ranks)

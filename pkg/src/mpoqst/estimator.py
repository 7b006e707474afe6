"""Constrained least-squares state estimator.

Minimizes  g(rho) = || A(rho) - p_hat ||_2^2  over unit-trace Hermitian
MPOs of fixed ranks by projected gradient descent: each step follows the
conjugate-coordinate (Wirtinger) gradient

    grad g(rho) = sum_k (<A_k, rho> - p_hat_k) A_k

and projects back by TT rounding to the target ranks, Hermitian
symmetrization, and trace normalization rho / trace(rho).

The gradient splits into an iteration-dependent channel term
sum_k <A_k, rho> A_k (a site-local superoperator, rank-preserving) and a
data term sum_k p_hat_k A_k that is fixed for a given record.  The data
term is assembled once as an exact MPO whose bond bases are the distinct
observed outcome prefixes/suffixes, so a step never touches more than
O(r + r_data) bond dimensions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .povm import (
    ProductPOVM,
    dense_from_product,
    outcome_amplitude,
    sum_channel,
)
from .states import MPDOGenConfig, random_mpdo
from .tt import (
    N_DENSE_MAX,
    DenseOperator,
    NumericalError,
    TTTensor,
    cap_ranks,
    tt_add,
    tt_adjoint,
    tt_from_dense,
    tt_inner,
    tt_round,
    tt_scale,
    tt_to_dense,
    tt_trace,
)

TRACE_FLOOR = 1e-8

# Step-size presets (mu is mu0 * 2^n * lam^tau unless scale_2n is off).
# The diminishing schedules suit fixed-M runs; the fixed-step variants
# (lam = 1) suit sweeps over the shot count.
STEP_PRESETS = {
    "pgd-random-rank1": dict(mu0=5 / 4, lam=0.9, scale_2n=True),
    "pgd-random-rank4": dict(mu0=5 / 8, lam=0.9, scale_2n=True),
    "pgd-spectral-rank1": dict(mu0=5 / 8, lam=0.9, scale_2n=True),
    "pgd-spectral-rank4": dict(mu0=5 / 16, lam=0.9, scale_2n=True),
    "pgd-fixed-random": dict(mu0=5 / 32, lam=1.0, scale_2n=True),
    "pgd-fixed-spectral": dict(mu0=1 / 16, lam=1.0, scale_2n=True),
    "psgd-random": dict(mu0=5 / 4, lam=0.9, scale_2n=True),
    "psgd-spectral": dict(mu0=10.0, lam=0.9, scale_2n=False),
}


def preset_schedule(algorithm: str, init: str, max_rank: int) -> dict:
    """Named step-size schedule for an (algorithm, init, rank) setting."""
    if algorithm == "psgd":
        return dict(STEP_PRESETS["psgd-spectral" if init == "spectral"
                                 else "psgd-random"])
    suffix = "rank1" if max_rank <= 1 else "rank4"
    kind = "spectral" if init == "spectral" else "random"
    return dict(STEP_PRESETS[f"pgd-{kind}-{suffix}"])


@dataclass
class EstimatorConfig:
    """Estimator hyperparameters.

    ranks may be a single max rank or an explicit internal rank vector;
    either is clipped to the structural caps.  design_order_t documents
    the order t of the design inducing the POVM: the uniformity factor in
    sample-complexity diagnostics is gamma for t == 2 and 1 for t >= 3.
    """

    ranks: object = 1
    mu0: float = 5 / 4
    lam: float = 0.9
    scale_2n: bool = True
    max_iters: int = 200
    init: str = "random"  # spectral | random | provided
    init_seed: int = 0
    init_state: TTTensor = None
    backend: str = "tt"  # tt | dense
    epoch_size: int = None  # N; defaults to 10 d^2 n rbar^2 clipped to [U, K]
    batch_size: int = 32  # B
    tt_round_tol: float = None  # extra tolerance compression per projection
    max_epochs: int = 50
    plateau_rel_tol: float = 1e-10
    plateau_window: int = 10
    record_trace: bool = True
    check_iterates: bool = False
    design_order_t: int = 2

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError("lam must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.init not in ("spectral", "random", "provided"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.backend not in ("tt", "dense"):
            raise ValueError(f"unknown backend {self.backend!r}")

    def rank_vector(self, n: int, d: int) -> tuple:
        return cap_ranks(self.ranks, n, d)

    def max_rank(self) -> int:
        if np.isscalar(self.ranks):
            return int(self.ranks)
        return max(int(r) for r in self.ranks)


@dataclass(frozen=True)
class IterateStats:
    iteration: int
    loss: float
    error: float  # nan when no ground truth supplied
    step: float
    wall_ms: float


@dataclass
class Estimate:
    """Recovered state plus per-iterate diagnostics."""

    state: TTTensor
    trace_log: list
    iterations_run: int
    converged_reason: str
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# sparse outcome sums as exact MPOs


def outcome_sum_tt(outcomes, weights, povm: ProductPOVM) -> TTTensor:
    """Exact MPO for sum_k w_k B_{i_1(k)} x ... x B_{i_n(k)}.

    Bond bases are the distinct outcome prefixes left of a bridge site and
    the distinct suffixes right of it, so the representation is exact with
    bond dimensions min(#prefixes, #suffixes) and never grows with the
    number of terms beyond the enumeration caps.
    """
    n, d = povm.n, povm.d
    dd = d * d
    pairs = sorted(zip((tuple(o) for o in outcomes), weights))
    if not pairs:
        raise ValueError("need at least one outcome")
    for o, _ in pairs:
        if len(o) != n:
            raise ValueError(f"outcome {o} has wrong length")
    bridge = (n + 1) // 2  # 1-based site carrying the weights
    fused = [site.fused() for site in povm.sites]  # (k_loc, d*d) each

    def prefix_basis(l):
        return sorted({o[:l] for o, _ in pairs})

    def suffix_basis(l):
        return sorted({o[l:] for o, _ in pairs})

    cores = []
    for l in range(1, n + 1):
        if l < bridge:
            left = prefix_basis(l - 1)
            right = prefix_basis(l)
            idx_l = {q: i for i, q in enumerate(left)}
            core = np.zeros((len(left), dd, len(right)), dtype=complex)
            for ridx, q in enumerate(right):
                core[idx_l[q[:-1]], :, ridx] = fused[l - 1][q[-1] - 1]
        elif l == bridge:
            left = prefix_basis(l - 1)
            right = suffix_basis(l)
            idx_l = {q: i for i, q in enumerate(left)}
            idx_r = {c: i for i, c in enumerate(right)}
            core = np.zeros((len(left), dd, len(right)), dtype=complex)
            for o, w in pairs:
                core[idx_l[o[:l - 1]], :, idx_r[o[l:]]] += (
                    w * fused[l - 1][o[l - 1] - 1])
        else:
            left = suffix_basis(l - 1)
            right = suffix_basis(l)
            idx_r = {c: i for i, c in enumerate(right)}
            core = np.zeros((len(left), dd, len(right)), dtype=complex)
            for lidx, c in enumerate(left):
                core[lidx, :, idx_r[c[1:]]] = fused[l - 1][c[0] - 1]
        cores.append(core)
    out = TTTensor(tuple(cores), d=d)
    caps = [min(dd ** l, dd ** (n - l)) for l in range(1, n)]
    if any(r > c for r, c in zip(out.ranks[1:-1], caps)):
        out = tt_round(out, truncation_tol=1e-15)
    return out


def empirical_operator(record, povm: ProductPOVM) -> TTTensor:
    """The adjoint-map image sum_k p_hat_k A_k of the recorded weights."""
    weights = record.weights()
    outcomes = sorted(weights)
    return outcome_sum_tt(outcomes, [weights[o] for o in outcomes], povm)


# ---------------------------------------------------------------------------
# loss and gradient


def _loss_from_parts(state, channel, empirical, weight_sq: float) -> float:
    quad = tt_inner(state, channel).real
    cross = tt_inner(empirical, state).real
    return max(quad - 2.0 * cross + weight_sq, 0.0)


def loss(state: TTTensor, record, povm: ProductPOVM,
         empirical: TTTensor = None) -> float:
    """|| A(rho) - p_hat ||_2^2 without enumerating zero-count outcomes:
    <rho, Phi(rho)> - 2 <data, rho> + sum p_hat^2 with Phi the measurement
    channel and data the empirical-operator MPO."""
    if empirical is None:
        empirical = empirical_operator(record, povm)
    channel = sum_channel(povm, state)
    weight_sq = float(sum(w * w for w in record.weights().values()))
    return _loss_from_parts(state, channel, empirical, weight_sq)


def loss_dense(state: DenseOperator, record, povm: ProductPOVM) -> float:
    """Direct K-vector evaluation for cross-checks (small n)."""
    from .povm import measure_map_dense

    probs = measure_map_dense(povm, state)
    residual = probs.copy()
    k_locs = povm.k_locs
    for outcome, w in record.weights().items():
        flat = np.ravel_multi_index(tuple(i - 1 for i in outcome), k_locs)
        residual[flat] -= w
    return float(residual @ residual)


@dataclass(frozen=True)
class GradientHandle:
    """Structured gradient: channel MPO (ranks of the iterate) minus the
    weighted product-operator data terms, pre-summed into one exact MPO.
    Supports step-and-project without materializing a dense operator."""

    channel: TTTensor
    empirical: TTTensor
    terms: tuple  # (weight, outcome) pairs of the data sum

    def norm(self) -> float:
        val = (tt_inner(self.channel, self.channel).real
               - 2.0 * tt_inner(self.channel, self.empirical).real
               + tt_inner(self.empirical, self.empirical).real)
        return float(np.sqrt(max(val, 0.0)))

    def to_dense(self, n_dense: int = N_DENSE_MAX) -> DenseOperator:
        c = tt_to_dense(self.channel, n_dense=n_dense).matrix
        e = tt_to_dense(self.empirical, n_dense=n_dense).matrix
        return DenseOperator.from_matrix(c - e, d=self.channel.d,
                                         n_dense=n_dense)


def wirtinger_gradient(state: TTTensor, record, povm: ProductPOVM,
                       empirical: TTTensor = None) -> GradientHandle:
    """Gradient sum_k (<A_k, rho> - p_hat_k) A_k as a lazy structured sum."""
    if empirical is None:
        empirical = empirical_operator(record, povm)
    channel = sum_channel(povm, state)
    terms = tuple(sorted(record.weights().items()))
    return GradientHandle(channel=channel, empirical=empirical, terms=terms)


# ---------------------------------------------------------------------------
# projection


def project_mpo(raw, ranks, d: int = 2, round_tol: float = None) -> TTTensor:
    """Two-step projection onto unit-trace rank-constrained MPOs: TT
    rounding to the target ranks, Hermitian symmetrization (to control
    floating-point drift), then division by the trace.

    An optional round_tol compresses further below the target ranks when
    the iterate allows it, trading a relative error of that size for
    smaller bonds.
    """
    if isinstance(raw, DenseOperator):
        tt = tt_from_dense(raw, target_ranks=cap_ranks(ranks, raw.n, raw.d))
    elif isinstance(raw, np.ndarray):
        dense = DenseOperator.from_matrix(raw, d=d)
        tt = tt_from_dense(dense, target_ranks=cap_ranks(ranks, dense.n, dense.d))
    else:
        tt = tt_round(raw, target_ranks=cap_ranks(ranks, raw.n, raw.d))
    if round_tol is not None and tt.n > 1:
        tt = tt_round(tt, truncation_tol=round_tol)
    capped = cap_ranks(ranks, tt.n, tt.d)
    sym = tt_scale(tt_add(tt, tt_adjoint(tt)), 0.5)
    if tt.n > 1:
        sym = tt_round(sym, target_ranks=capped)
    tr = tt_trace(sym)
    if abs(tr) < TRACE_FLOOR:
        raise NumericalError(
            f"trace {abs(tr):.3e} below {TRACE_FLOOR}; normalization "
            "is degenerate")
    return tt_scale(sym, 1.0 / tr)


def gradient_step(state: TTTensor, handle: GradientHandle, mu: float,
                  ranks, round_tol: float = None) -> TTTensor:
    acc = tt_add(state, tt_scale(handle.channel, -mu))
    acc = tt_add(acc, tt_scale(handle.empirical, mu))
    return project_mpo(acc, ranks, round_tol=round_tol)


# ---------------------------------------------------------------------------
# initialization


def spectral_init(record, povm: ProductPOVM, ranks) -> TTTensor:
    """Project the rescaled adjoint map K (d^n + 1) / d^n sum p_hat_k A_k
    of the empirical probabilities onto the constraint set."""
    if not record.weights():
        raise ValueError("record is empty")
    emp = empirical_operator(record, povm)
    n, d = povm.n, povm.d
    scale = povm.k_total * (d ** n + 1) / d ** n
    return project_mpo(tt_scale(emp, scale), ranks)


def random_init(ranks, n: int, d: int, seed: int) -> TTTensor:
    """Random mixed-state start: a random PSD MPO with Kraus bond
    ceil(sqrt(rbar)), projected to the requested ranks."""
    max_rank = int(np.max(np.atleast_1d(ranks)))
    kappa = int(np.ceil(np.sqrt(max_rank)))
    state = random_mpdo(MPDOGenConfig(n=n, kappa=kappa, purity=10,
                                      seed=seed, d=d))
    return project_mpo(state, ranks)


def _initial_state(record, povm, config: EstimatorConfig, ranks) -> TTTensor:
    if config.init == "provided":
        if config.init_state is None:
            raise ValueError("init='provided' requires init_state")
        return project_mpo(config.init_state, ranks)
    if config.init == "spectral":
        return spectral_init(record, povm, ranks)
    return random_init(ranks, povm.n, povm.d, config.init_seed)


# ---------------------------------------------------------------------------
# error metric and physical projection


def recovery_error(a: TTTensor, b: TTTensor) -> float:
    """Frobenius distance ||a - b||_F via Gram terms, clamped at zero."""
    val = (tt_inner(a, a).real + tt_inner(b, b).real
           - 2.0 * tt_inner(a, b).real)
    return float(np.sqrt(max(val, 0.0)))


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(v) + 1)
    k = idx[u - (css - 1.0) / idx > 0][-1]
    tau = (css[k - 1] - 1.0) / k
    return np.maximum(v - tau, 0.0)


def psd_project(state, n_dense: int = N_DENSE_MAX) -> DenseOperator:
    """Nearest physical state: eigenvalues projected onto the simplex.

    The eigenbasis is kept; the output is PSD with unit trace, and the map
    is non-expansive in Frobenius norm (projection onto a convex set)."""
    if isinstance(state, np.ndarray):
        state = DenseOperator.from_matrix(state, n_dense=n_dense)
    if not state.is_hermitian(1e-10):
        raise ValueError("psd_project requires a Hermitian input")
    evals, vecs = np.linalg.eigh(state.matrix)
    projected = project_to_simplex(evals)
    matrix = (vecs * projected) @ vecs.conj().T
    return DenseOperator(matrix=matrix, n=state.n, d=state.d)


# ---------------------------------------------------------------------------
# iteration loops


def _step_size(config: EstimatorConfig, n: int, tau: int) -> float:
    mu = config.mu0 * (config.lam ** tau)
    if config.scale_2n:
        mu *= 2.0 ** n
    return mu


def _plateaued(losses, window: int, rel_tol: float) -> bool:
    if len(losses) < window + 1:
        return False
    recent = losses[-(window + 1):]
    for prev, cur in zip(recent, recent[1:]):
        if abs(cur - prev) > rel_tol * max(abs(prev), 1e-300):
            return False
    return True


def _check_iterate(state: TTTensor):
    tr = tt_trace(state)
    if abs(tr - 1.0) > 1e-10:
        raise NumericalError(f"iterate trace {tr} deviates from 1")
    from .tt import is_hermitian

    if not is_hermitian(state, 1e-8):
        raise NumericalError("iterate lost Hermiticity")


def _log_row(log, iteration, loss_val, state, truth, step, t0):
    err = recovery_error(state, truth) if truth is not None else float("nan")
    log.append(IterateStats(iteration=iteration, loss=loss_val, error=err,
                            step=step,
                            wall_ms=(time.perf_counter() - t0) * 1e3))


def pgd(record, povm: ProductPOVM, config: EstimatorConfig,
        truth: TTTensor = None) -> Estimate:
    """Full-gradient projected descent with the diminishing step schedule
    mu_tau = mu0 * 2^n * lam^tau.  Stops on max_iters or when the relative
    loss change stays within plateau_rel_tol over plateau_window
    iterations.  Raises NumericalError on a non-finite loss (step too
    large), reporting the offending iteration."""
    if config.backend == "dense":
        return _pgd_dense(record, povm, config, truth)
    n, d = povm.n, povm.d
    ranks = config.rank_vector(n, d)
    t0 = time.perf_counter()
    state = _initial_state(record, povm, config, ranks)
    emp = empirical_operator(record, povm)
    weight_sq = float(sum(w * w for w in record.weights().values()))
    terms = tuple(sorted(record.weights().items()))
    log = []
    channel = sum_channel(povm, state)
    cur_loss = _loss_from_parts(state, channel, emp, weight_sq)
    _log_row(log, 0, cur_loss, state, truth, float("nan"), t0)
    losses = [cur_loss]
    reason = "max_iters"
    iterations = 0
    for tau in range(config.max_iters):
        mu = _step_size(config, n, tau)
        handle = GradientHandle(channel=channel, empirical=emp, terms=terms)
        try:
            state = gradient_step(state, handle, mu, ranks,
                                  round_tol=config.tt_round_tol)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"decomposition failed at iteration {tau + 1} "
                f"(step {mu:.3g} too large): {exc}") from exc
        channel = sum_channel(povm, state)
        cur_loss = _loss_from_parts(state, channel, emp, weight_sq)
        iterations = tau + 1
        if not np.isfinite(cur_loss):
            raise NumericalError(
                f"non-finite loss at iteration {iterations} "
                f"(step {mu:.3g} too large)")
        if config.check_iterates:
            _check_iterate(state)
        if config.record_trace:
            _log_row(log, iterations, cur_loss, state, truth, mu, t0)
        losses.append(cur_loss)
        if _plateaued(losses, config.plateau_window, config.plateau_rel_tol):
            reason = "loss_plateau"
            break
    return Estimate(state=state, trace_log=log, iterations_run=iterations,
                    converged_reason=reason,
                    metadata={"algorithm": "pgd", "backend": "tt",
                              "ranks": list(ranks), "final_loss": losses[-1]})


def _pgd_dense(record, povm, config, truth):
    """Dense-matrix reference path: materialized POVM elements, explicit
    gradient, identical projection.  Cross-check backend for small n."""
    n, d = povm.n, povm.d
    if povm.k_total * (d ** n) ** 2 > 2_000_000:
        raise ValueError("dense backend limited to small systems")
    ranks = config.rank_vector(n, d)
    t0 = time.perf_counter()
    state = _initial_state(record, povm, config, ranks)
    elements = np.stack([a for a in dense_from_product(povm).elements])
    k_locs = povm.k_locs
    p_hat = np.zeros(len(elements))
    for outcome, w in record.weights().items():
        p_hat[np.ravel_multi_index(tuple(i - 1 for i in outcome), k_locs)] = w
    log = []
    dense_state = tt_to_dense(state).matrix
    probs = np.einsum("kij,ij->k", elements.conj(), dense_state).real
    cur_loss = float(((probs - p_hat) ** 2).sum())
    _log_row(log, 0, cur_loss, state, truth, float("nan"), t0)
    losses = [cur_loss]
    reason = "max_iters"
    iterations = 0
    for tau in range(config.max_iters):
        mu = _step_size(config, n, tau)
        grad = np.einsum("k,kij->ij", probs - p_hat, elements)
        stepped = dense_state - mu * grad
        state = project_mpo(DenseOperator.from_matrix(stepped, d=d), ranks)
        dense_state = tt_to_dense(state).matrix
        probs = np.einsum("kij,ij->k", elements.conj(), dense_state).real
        cur_loss = float(((probs - p_hat) ** 2).sum())
        iterations = tau + 1
        if not np.isfinite(cur_loss):
            raise NumericalError(
                f"non-finite loss at iteration {iterations} "
                f"(step {mu:.3g} too large)")
        if config.check_iterates:
            _check_iterate(state)
        if config.record_trace:
            _log_row(log, iterations, cur_loss, state, truth, mu, t0)
        losses.append(cur_loss)
        if _plateaued(losses, config.plateau_window, config.plateau_rel_tol):
            reason = "loss_plateau"
            break
    return Estimate(state=state, trace_log=log, iterations_run=iterations,
                    converged_reason=reason,
                    metadata={"algorithm": "pgd", "backend": "dense",
                              "ranks": list(ranks), "final_loss": losses[-1]})


def _zero_outcome_filler(povm: ProductPOVM, nonzero: set, count: int,
                         rng: np.random.Generator) -> list:
    """Seeded choice of zero-count outcomes to pad a stochastic epoch."""
    if count <= 0:
        return []
    k_locs = povm.k_locs
    k_total = povm.k_total
    if k_total <= 2 ** 20:
        pool = []
        for flat in range(k_total):
            idx = np.unravel_index(flat, k_locs)
            outcome = tuple(int(i) + 1 for i in idx)
            if outcome not in nonzero:
                pool.append(outcome)
        take = min(count, len(pool))
        chosen = rng.choice(len(pool), size=take, replace=False)
        return [pool[i] for i in sorted(chosen)]
    chosen = []
    seen = set(nonzero)
    while len(chosen) < count:
        draw = rng.integers(1, np.array(k_locs) + 1)
        outcome = tuple(int(i) for i in draw)
        if outcome not in seen:
            seen.add(outcome)
            chosen.append(outcome)
    return chosen


def psgd(record, povm: ProductPOVM, config: EstimatorConfig,
         truth: TTTensor = None) -> Estimate:
    """Stochastic variant: each epoch assembles a subset of N outcomes
    containing every nonzero-count outcome plus seeded zero-count filler,
    then runs floor(N/B) iterations on sequential batches of B, each using
    the partial gradient sum_{k in batch} (<A_k, rho> - p_hat_k) A_k.

    The nonzero outcomes are deliberately oversampled relative to a
    uniform pass over all K outcomes, and the batch gradient is used
    unscaled; the decaying step absorbs the resulting scale.  The step
    schedule decays per epoch (each epoch makes one effective pass), so
    iteration tau within epoch e uses mu0 * 2^n * lam^e.
    """
    n, d = povm.n, povm.d
    ranks = config.rank_vector(n, d)
    weights = record.weights()
    nonzero = sorted(weights)
    n_obs = len(nonzero)
    k_total = povm.k_total
    max_rank = max(ranks) if ranks else 1
    if config.epoch_size is not None:
        n_epoch = config.epoch_size
        if n_epoch < n_obs:
            raise ValueError(
                f"epoch_size {n_epoch} below nonzero outcome count {n_obs}")
    else:
        n_epoch = min(max(10 * d * d * n * max_rank ** 2, n_obs), k_total)
    batch = min(config.batch_size, n_epoch)
    t0 = time.perf_counter()
    state = _initial_state(record, povm, config, ranks)
    emp = empirical_operator(record, povm)
    weight_sq = float(sum(w * w for w in weights.values()))
    log = []
    cur_loss = _loss_from_parts(state, sum_channel(povm, state), emp,
                                weight_sq)
    _log_row(log, 0, cur_loss, state, truth, float("nan"), t0)
    epoch_losses = [cur_loss]
    reason = "max_epochs"
    tau = 0
    for epoch in range(config.max_epochs):
        rng = np.random.Generator(np.random.Philox(
            key=((int(config.init_seed) << 64) + 0xE0C + epoch)))
        filler = _zero_outcome_filler(povm, set(nonzero),
                                      n_epoch - n_obs, rng)
        subset = nonzero + filler
        order = rng.permutation(len(subset))
        iters = max(len(subset) // batch, 1)
        mu = _step_size(config, n, epoch)
        for it in range(iters):
            chosen = [subset[i] for i in order[it * batch:(it + 1) * batch]]
            if not chosen:
                break
            coeffs = [outcome_amplitude(povm, state, o).real
                      - weights.get(o, 0.0) for o in chosen]
            grad_tt = outcome_sum_tt(chosen, coeffs, povm)
            acc = tt_add(state, tt_scale(grad_tt, -mu))
            state = project_mpo(acc, ranks, round_tol=config.tt_round_tol)
            tau += 1
            if config.check_iterates:
                _check_iterate(state)
        cur_loss = _loss_from_parts(state, sum_channel(povm, state), emp,
                                    weight_sq)
        if not np.isfinite(cur_loss):
            raise NumericalError(
                f"non-finite loss in epoch {epoch + 1}")
        if config.record_trace:
            _log_row(log, tau, cur_loss, state, truth, mu, t0)
        epoch_losses.append(cur_loss)
        if _plateaued(epoch_losses, config.plateau_window,
                      config.plateau_rel_tol):
            reason = "loss_plateau"
            break
    return Estimate(state=state, trace_log=log, iterations_run=tau,
                    converged_reason=reason,
                    metadata={"algorithm": "psgd", "backend": "tt",
                              "ranks": list(ranks), "epoch_size": n_epoch,
                              "batch_size": batch,
                              "final_loss": epoch_losses[-1]})


# ---------------------------------------------------------------------------
# theory diagnostics


def gamma_t_factor(gamma_value: float, design_order_t: int) -> float:
    """Uniformity factor entering sample-complexity diagnostics: the
    measured gamma for 2-designs, 1 for higher designs."""
    return float(gamma_value) if design_order_t == 2 else 1.0


def admissible_step_interval(n: int, d: int, k_total: int, sigma_min: float,
                             init_error: float, delta: float = 0.0) -> tuple:
    """Step-size window (lo, hi) under which the local convergence theory
    applies, given the smallest TT singular value of the target and the
    initialization error.  Diagnostic only; the empirical schedules in
    STEP_PRESETS are what the optimizer actually uses."""
    scale = 600.0 * n / sigma_min * init_error
    lo = scale / (1.0 + scale) * k_total * (d ** n + 1) / (
        d ** n * (1.0 - delta))
    hi = (d - 1) * (d ** n + 1) * (1.0 - delta) * k_total / (
        (1.0 + delta) ** 2 * d ** (n + 1))
    return lo, hi


def admissible_init_radius(n: int, d: int, sigma_min: float,
                           delta: float = 0.0) -> float:
    """Initialization-error radius for the local convergence theory."""
    return sigma_min * (d - 1) * (1.0 - delta) ** 2 / (
        600.0 * n * (1.0 + delta ** 2 + (4 * d - 2) * delta))

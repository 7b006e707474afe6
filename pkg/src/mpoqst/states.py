"""Ground-truth state generation: random MPDOs and reference states.

The random generator draws per-site Kraus-like cores A_l^{i,a} of bond
dimension kappa with entries uniform on [-1, 1] (real and imaginary parts)
and forms the MPO cores

    X_l^{i,j} = sum_a A_l^{i,a} (x) conj(A_l^{j,a})

which makes the operator PSD by construction with MPO bond dimension
kappa^2.  The purity parameter controls how mixed the state is (1 gives a
pure state).  The trace is evaluated by chaining the per-site diagonal
sums and divided out as trace^{-1/n} per core.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tt import NumericalError, TTTensor, fuse_index, tt_inner

# Offset used to derive the one retry seed on a non-positive trace draw.
_RESEED_OFFSET = 0x9E3779B9


@dataclass(frozen=True)
class MPDOGenConfig:
    """Random-MPDO generator parameters.

    kappa is the Kraus bond dimension (MPO bond = kappa^2); purity >= 1
    sets the number of Kraus terms per site (1 = pure state).
    """

    n: int
    kappa: int = 1
    purity: int = 10
    seed: int = 0
    d: int = 2

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.purity < 1:
            raise ValueError("purity must be >= 1")


def _draw_mpdo(config: MPDOGenConfig, seed: int) -> TTTensor:
    n, d, kappa, kl = config.n, config.d, config.kappa, config.purity
    rng = np.random.default_rng(seed)
    cores = []
    for l in range(n):
        kl_left = 1 if l == 0 else kappa
        kl_right = 1 if l == n - 1 else kappa
        # a_cores[i, a] is a (kl_left, kl_right) matrix
        a_cores = (rng.uniform(-1.0, 1.0, size=(d, kl, kl_left, kl_right))
                   + 1j * rng.uniform(-1.0, 1.0, size=(d, kl, kl_left, kl_right)))
        core = np.zeros((kl_left ** 2, d * d, kl_right ** 2), dtype=complex)
        for i in range(d):
            for j in range(d):
                x = np.zeros((kl_left ** 2, kl_right ** 2), dtype=complex)
                for a in range(kl):
                    x += np.kron(a_cores[i, a], a_cores[j, a].conj())
                core[:, fuse_index(i, j, d), :] = x
        cores.append(core)
    return TTTensor(tuple(cores), d=d)


def mpo_trace_chain(state: TTTensor) -> complex:
    """Trace via the chain of per-site diagonal-slice sums."""
    d = state.d
    diag = [fuse_index(i, i, d) for i in range(d)]
    v = np.ones((1, 1), dtype=complex)
    for core in state.cores:
        v = v @ core[:, diag, :].sum(axis=1)
    return complex(v[0, 0])


def random_mpdo(config: MPDOGenConfig) -> TTTensor:
    """Random PSD unit-trace MPO with bond dimension kappa^2.

    The Kraus structure forces a strictly positive trace in exact
    arithmetic; a non-positive draw is retried once with a derived seed
    before failing.
    """
    seed = config.seed
    for attempt in range(2):
        state = _draw_mpdo(config, seed)
        tr = mpo_trace_chain(state)
        if tr.real > 0 and abs(tr.imag) <= 1e-10 * tr.real:
            scale = tr.real ** (-1.0 / config.n)
            cores = tuple(c * scale for c in state.cores)
            return TTTensor(cores, d=config.d)
        seed = (seed + _RESEED_OFFSET) % (2 ** 63)
    raise NumericalError(
        f"random MPDO trace not positive after retry (trace={tr})")


def purity(state: TTTensor) -> float:
    """trace(rho^2) = ||rho||_F^2 for Hermitian rho; in (0, 1] for
    physical states."""
    return float(tt_inner(state, state).real)


# ---------------------------------------------------------------------------
# reference states


def maximally_mixed(n: int, d: int = 2) -> TTTensor:
    """I / d^n as an all-ranks-1 MPO."""
    core = (np.eye(d, dtype=complex) / d).reshape(1, d * d, 1, order="F")
    return TTTensor((core,) * n, d=d)


def pure_product(bits: str, d: int = 2) -> TTTensor:
    """|b_1...b_n><b_1...b_n| for a digit string, ranks all 1."""
    cores = []
    for ch in bits:
        b = int(ch)
        if not 0 <= b < d:
            raise ValueError(f"digit {ch!r} out of range for d={d}")
        core = np.zeros((1, d * d, 1), dtype=complex)
        core[0, fuse_index(b, b, d), 0] = 1.0
        cores.append(core)
    return TTTensor(tuple(cores), d=d)


def ghz_density(n: int) -> TTTensor:
    """|GHZ><GHZ| on n qubits, built from the bond-2 pure-state chain (the
    density MPO carries the squared bond, rank 4 internally)."""
    if n < 2:
        raise ValueError("GHZ needs n >= 2")
    # Pure-state MPS cores: psi(b_1..b_n) = M_1[b_1] ... M_n[b_n]
    mps = []
    for l in range(n):
        m = np.zeros((2, 1 if l == 0 else 2, 1 if l == n - 1 else 2),
                     dtype=complex)
        if l == 0:
            m[0, 0, 0] = 1.0
            m[1, 0, 1] = 1.0
        elif l == n - 1:
            m[0, 0, 0] = 1.0
            m[1, 1, 0] = 1.0
        else:
            m[0, 0, 0] = 1.0
            m[1, 1, 1] = 1.0
        mps.append(m)
    cores = []
    for l, m in enumerate(mps):
        rl, rr = m.shape[1], m.shape[2]
        core = np.zeros((rl * rl, 4, rr * rr), dtype=complex)
        for i in range(2):
            for j in range(2):
                core[:, fuse_index(i, j, 2), :] = np.kron(m[i], m[j].conj())
        if l == 0:
            core = core / 2.0  # normalization (|GHZ> has norm sqrt(2) here)
        cores.append(core)
    return TTTensor(tuple(cores), d=2)

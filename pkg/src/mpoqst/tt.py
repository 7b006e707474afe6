"""Tensor-train / matrix-product-operator (MPO) arithmetic.

An operator rho on n sites with local dimension d is stored as a chain of
order-3 cores X_1, ..., X_n where core X_l has shape (r_{l-1}, d*d, r_l)
and r_0 = r_n = 1.  Entry (i_1...i_n, j_1...j_n) of the dense operator is
the matrix product

    rho(i_1...i_n, j_1...j_n) = X_1[:, s_1, :] @ X_2[:, s_2, :] @ ...

with the per-site fused physical index

    s_l = i_l + d * j_l        (0-based row i, column j)

i.e. column-major over the (row, column) pair.  This fusion convention is
fixed package-wide, including the JSON serialization format, so that
adjoint and trace slice arithmetic is unambiguous.

All operations are pure functions of immutable inputs; returned tensors
never alias their arguments' core data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Largest site count for which dense materialization (dim d**n) is allowed.
N_DENSE_MAX = 10

# Tensors with Frobenius norm at or below this are treated as exactly zero
# by the rounding routines (avoids SVD on all-zero unfoldings).
ZERO_NORM_TOL = 1e-14


class NumericalError(RuntimeError):
    """A numerical contract was violated (degenerate trace, residues, ...)."""


def fuse_index(i: int, j: int, d: int) -> int:
    """Fused physical index of the (row i, column j) pair, 0-based."""
    return i + d * j


def fuse_local_operator(op: np.ndarray) -> np.ndarray:
    """Flatten a (d, d) matrix into the fused d*d vector (column-major)."""
    return np.asarray(op, dtype=complex).reshape(-1, order="F")


@dataclass(frozen=True)
class TTTensor:
    """Tensor-train operator: cores[l] has shape (r_{l-1}, d*d, r_l)."""

    cores: tuple
    d: int = 2

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"local dimension must be >= 2, got {self.d}")
        if not self.cores:
            raise ValueError("need at least one core")
        cores = tuple(np.ascontiguousarray(c, dtype=complex) for c in self.cores)
        dd = self.d * self.d
        for l, c in enumerate(cores):
            if c.ndim != 3 or c.shape[1] != dd:
                raise ValueError(
                    f"core {l} has shape {c.shape}, expected (r, {dd}, r')")
            c.flags.writeable = False
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for l in range(len(cores) - 1):
            if cores[l].shape[2] != cores[l + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {l} and {l + 1}")
        object.__setattr__(self, "cores", cores)

    @property
    def n(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> tuple:
        return tuple(c.shape[0] for c in self.cores) + (1,)

    def __repr__(self):
        return f"TTTensor(n={self.n}, d={self.d}, ranks={self.ranks})"


@dataclass(frozen=True)
class DenseOperator:
    """Explicit d**n x d**n matrix, guarded by the N_DENSE_MAX site cap."""

    matrix: np.ndarray
    n: int
    d: int = 2

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=complex)
        dim = self.d ** self.n
        if m.shape != (dim, dim):
            raise ValueError(f"matrix shape {m.shape} != ({dim}, {dim})")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.d ** self.n

    @classmethod
    def from_matrix(cls, matrix, d: int = 2, n_dense: int = N_DENSE_MAX):
        matrix = np.asarray(matrix)
        dim = matrix.shape[0]
        n = round(np.log(dim) / np.log(d))
        if d ** n != dim:
            raise ValueError(f"matrix dimension {dim} is not a power of {d}")
        if n > n_dense:
            raise ValueError(f"n={n} exceeds dense cap {n_dense}")
        return cls(matrix=matrix, n=n, d=d)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return np.abs(self.matrix - self.matrix.conj().T).max() <= tol


def max_tt_ranks(n: int, d: int) -> tuple:
    """Structural rank cap min(d^{2l}, d^{2(n-l)}) at each internal cut."""
    dd = d * d
    return tuple(min(dd ** l, dd ** (n - l)) for l in range(1, n))


def cap_ranks(ranks, n: int, d: int) -> tuple:
    """Clip a requested rank vector (or uniform rank) to the structural caps."""
    caps = max_tt_ranks(n, d)
    if np.isscalar(ranks):
        return tuple(min(int(ranks), c) for c in caps)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != n - 1:
        raise ValueError(f"rank vector length {len(ranks)} != n-1 = {n - 1}")
    return tuple(min(r, c) for r, c in zip(ranks, caps))


def _validate_ranks(ranks, n: int, d: int) -> tuple:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != n - 1:
        raise ValueError(f"rank vector length {len(ranks)} != n-1 = {n - 1}")
    caps = max_tt_ranks(n, d)
    for l, (r, c) in enumerate(zip(ranks, caps)):
        if r < 1:
            raise ValueError(f"rank at cut {l + 1} must be >= 1")
        if r > c:
            raise ValueError(
                f"rank {r} at cut {l + 1} exceeds structural cap {c}")
    return ranks


# ---------------------------------------------------------------------------
# dense <-> fused tensor <-> TT conversions


def fuse_dense_to_tensor(matrix: np.ndarray, n: int, d: int) -> np.ndarray:
    """Reshape a d**n x d**n matrix into the order-n fused tensor."""
    t = np.asarray(matrix, dtype=complex).reshape((d,) * (2 * n))
    perm = []
    for l in range(n):
        perm.extend([n + l, l])  # (j_l, i_l) so C-order fuse gives i + d*j
    return t.transpose(perm).reshape((d * d,) * n)


def unfuse_tensor_to_dense(tensor: np.ndarray, n: int, d: int) -> np.ndarray:
    """Inverse of :func:`fuse_dense_to_tensor`."""
    t = np.asarray(tensor).reshape((d, d) * n)  # (j_1, i_1, j_2, i_2, ...)
    perm = [2 * l + 1 for l in range(n)] + [2 * l for l in range(n)]
    return t.transpose(perm).reshape(d ** n, d ** n)


def _zero_tt(n: int, d: int) -> TTTensor:
    return TTTensor(tuple(np.zeros((1, d * d, 1), dtype=complex)
                          for _ in range(n)), d=d)


def _choose_rank(s: np.ndarray, cap, per_cut_budget):
    """Number of singular values kept at one cut.

    With a rank cap, keep min(cap, available).  With an error budget, keep
    the smallest count whose discarded tail mass is within the budget.
    Singular values arrive sorted descending (numpy), so ties keep the
    earlier columns.
    """
    if cap is not None:
        return max(1, min(int(cap), len(s)))
    tail = np.cumsum((s ** 2)[::-1])[::-1]  # tail[r] = sum_{i>=r} s_i^2
    budget = per_cut_budget ** 2
    r = len(s)
    while r > 1 and tail[r - 1] <= budget:
        r -= 1
    if tail[r - 1] > budget:
        return r
    return max(1, r)


def _tt_svd_sweep(tensor: np.ndarray, n: int, d: int, target_ranks,
                  truncation_tol) -> list:
    """Left-to-right truncated-SVD sweep over the fused tensor."""
    dd = d * d
    fro = float(np.linalg.norm(tensor))
    if fro <= ZERO_NORM_TOL:
        return [np.zeros((1, dd, 1), dtype=complex) for _ in range(n)]
    per_cut = None
    if truncation_tol is not None:
        per_cut = truncation_tol * fro / np.sqrt(max(n - 1, 1))
    cores = []
    r_prev = 1
    c = tensor.reshape(dd, -1)
    for l in range(n - 1):
        u, s, vt = np.linalg.svd(c, full_matrices=False)
        cap = target_ranks[l] if target_ranks is not None else None
        r = _choose_rank(s, cap, per_cut)
        cores.append(u[:, :r].reshape(r_prev, dd, r))
        c = (s[:r, None] * vt[:r]).reshape(r * dd, -1)
        r_prev = r
    cores.append(c.reshape(r_prev, dd, 1))
    return cores


def tt_from_dense(dense, target_ranks=None, truncation_tol=None, d: int = 2,
                  n_dense: int = N_DENSE_MAX) -> TTTensor:
    """Sequential truncated-SVD decomposition of a dense operator.

    Exactly one of ``target_ranks`` / ``truncation_tol`` must be given.
    With a tolerance, the per-cut discarded singular mass is budgeted so
    the total Frobenius error is at most ``truncation_tol * ||dense||_F``.
    """
    if (target_ranks is None) == (truncation_tol is None):
        raise ValueError("supply exactly one of target_ranks, truncation_tol")
    if isinstance(dense, DenseOperator):
        matrix, n, d = dense.matrix, dense.n, dense.d
    else:
        op = DenseOperator.from_matrix(dense, d=d, n_dense=n_dense)
        matrix, n = op.matrix, op.n
    if n > n_dense:
        raise ValueError(f"n={n} exceeds dense cap {n_dense}")
    if target_ranks is not None:
        target_ranks = _validate_ranks(target_ranks, n, d)
    tensor = fuse_dense_to_tensor(matrix, n, d)
    return TTTensor(tuple(_tt_svd_sweep(tensor, n, d, target_ranks,
                                        truncation_tol)), d=d)


def tt_to_dense(tt: TTTensor, n_dense: int = N_DENSE_MAX) -> DenseOperator:
    """Materialize the dense operator (guarded by the site cap)."""
    if tt.n > n_dense:
        raise ValueError(f"n={tt.n} exceeds dense cap {n_dense}")
    acc = tt.cores[0].reshape(tt.d * tt.d, -1)
    for core in tt.cores[1:]:
        acc = np.tensordot(acc, core, axes=[[-1], [0]])
        acc = acc.reshape(-1, core.shape[2])
    tensor = acc.reshape((tt.d * tt.d,) * tt.n)
    return DenseOperator(matrix=unfuse_tensor_to_dense(tensor, tt.n, tt.d),
                         n=tt.n, d=tt.d)


def tt_element(tt: TTTensor, rows, cols) -> complex:
    """Single dense entry via the core matrix product (0-based indices)."""
    v = np.ones((1, 1), dtype=complex)
    for l, core in enumerate(tt.cores):
        v = v @ core[:, fuse_index(rows[l], cols[l], tt.d), :]
    return complex(v[0, 0])


# ---------------------------------------------------------------------------
# contractions


def _check_compatible(a: TTTensor, b: TTTensor):
    if a.n != b.n or a.d != b.d:
        raise ValueError(f"incompatible shapes: (n={a.n}, d={a.d}) vs "
                         f"(n={b.n}, d={b.d})")


def tt_inner(a: TTTensor, b: TTTensor) -> complex:
    """Hilbert-Schmidt inner product trace(A^dag B) by transfer contraction.

    Costs O(n d^2 r_a r_b (r_a + r_b)); never materializes dense operators.
    """
    _check_compatible(a, b)
    env = np.ones((1, 1), dtype=complex)  # (r_a, r_b)
    for ca, cb in zip(a.cores, b.cores):
        tmp = np.tensordot(env, ca.conj(), axes=[[0], [0]])  # (r_b, dd, r_a')
        env = np.tensordot(tmp, cb, axes=[[0, 1], [0, 1]])   # (r_a', r_b')
    return complex(env[0, 0])


def tt_norm(a: TTTensor) -> float:
    """Frobenius norm, equal to sqrt(<A, A>).

    Computed by a right-to-left orthogonalization sweep rather than the
    Gram contraction: the sweep is backward stable, so tiny norms of
    block-structured sums (a - a, rounding residuals) come out at the
    true scale instead of drowning in cancellation noise.
    """
    n, d = a.n, a.d
    dd = d * d
    if n == 1:
        return float(np.linalg.norm(a.cores[0]))
    carry = None
    for l in range(n - 1, 0, -1):
        core = a.cores[l]
        if carry is not None:
            core = np.tensordot(core, carry, axes=[[2], [0]])
        r0 = core.shape[0]
        _, rmat = np.linalg.qr(core.reshape(r0, -1).T)
        carry = rmat.T  # (r0, k)
    first = np.tensordot(a.cores[0], carry, axes=[[2], [0]])
    return float(np.linalg.norm(first))


def tt_trace(a: TTTensor) -> complex:
    """Operator trace: chain product of per-site diagonal-slice sums."""
    d = a.d
    diag = [fuse_index(i, i, d) for i in range(d)]
    v = np.ones((1, 1), dtype=complex)
    for core in a.cores:
        v = v @ core[:, diag, :].sum(axis=1)
    return complex(v[0, 0])


# ---------------------------------------------------------------------------
# linear structure


def tt_add(a: TTTensor, b: TTTensor) -> TTTensor:
    """Exact sum with block-concatenated cores (ranks add, no truncation)."""
    _check_compatible(a, b)
    n, dd = a.n, a.d * a.d
    if n == 1:
        return TTTensor((a.cores[0] + b.cores[0],), d=a.d)
    cores = []
    for l in range(n):
        ca, cb = a.cores[l], b.cores[l]
        if l == 0:
            cores.append(np.concatenate([ca, cb], axis=2))
        elif l == n - 1:
            cores.append(np.concatenate([ca, cb], axis=0))
        else:
            ra0, _, ra1 = ca.shape
            rb0, _, rb1 = cb.shape
            block = np.zeros((ra0 + rb0, dd, ra1 + rb1), dtype=complex)
            block[:ra0, :, :ra1] = ca
            block[ra0:, :, ra1:] = cb
            cores.append(block)
    return TTTensor(tuple(cores), d=a.d)


def tt_scale(a: TTTensor, c: complex) -> TTTensor:
    """Scalar multiple; the first core absorbs the factor."""
    cores = list(a.cores)
    cores[0] = cores[0] * c
    return TTTensor(tuple(cores), d=a.d)


def tt_sub(a: TTTensor, b: TTTensor) -> TTTensor:
    return tt_add(a, tt_scale(b, -1.0))


# ---------------------------------------------------------------------------
# rounding / compression


def tt_round(a: TTTensor, target_ranks=None, truncation_tol=None) -> TTTensor:
    """Recompress: right-to-left orthogonalization then left-to-right
    truncated SVDs.  Same error contract as :func:`tt_from_dense`, computed
    fully in TT form at cost O(n d^2 r^3).
    """
    if (target_ranks is None) == (truncation_tol is None):
        raise ValueError("supply exactly one of target_ranks, truncation_tol")
    n, d = a.n, a.d
    dd = d * d
    if target_ranks is not None:
        target_ranks = _validate_ranks(target_ranks, n, d)
    if n == 1:
        return TTTensor((a.cores[0].copy(),), d=d)
    cores = [c.copy() for c in a.cores]
    # right-to-left orthogonalization
    for l in range(n - 1, 0, -1):
        r0, _, r1 = cores[l].shape
        q, rmat = np.linalg.qr(cores[l].reshape(r0, dd * r1).T)
        k = q.shape[1]
        cores[l] = q.T.reshape(k, dd, r1)
        cores[l - 1] = np.tensordot(cores[l - 1], rmat.T, axes=[[2], [0]])
    fro = float(np.linalg.norm(cores[0]))
    if fro <= ZERO_NORM_TOL:
        return _zero_tt(n, d)
    per_cut = None
    if truncation_tol is not None:
        per_cut = truncation_tol * fro / np.sqrt(max(n - 1, 1))
    # left-to-right truncation
    for l in range(n - 1):
        r0, _, r1 = cores[l].shape
        u, s, vt = np.linalg.svd(cores[l].reshape(r0 * dd, r1),
                                 full_matrices=False)
        cap = target_ranks[l] if target_ranks is not None else None
        r = _choose_rank(s, cap, per_cut)
        cores[l] = u[:, :r].reshape(r0, dd, r)
        carry = s[:r, None] * vt[:r]
        cores[l + 1] = np.tensordot(carry, cores[l + 1], axes=[[1], [0]])
    return TTTensor(tuple(cores), d=d)


# ---------------------------------------------------------------------------
# adjoint / hermiticity


def tt_adjoint(a: TTTensor) -> TTTensor:
    """Hermitian adjoint: per-site (i, j) slice swap with conjugation."""
    d = a.d
    cores = []
    for core in a.cores:
        r0, _, r1 = core.shape
        c = core.reshape(r0, d, d, r1)        # (r, j, i, r')
        cores.append(c.transpose(0, 2, 1, 3).conj().reshape(r0, d * d, r1))
    return TTTensor(tuple(cores), d=d)


def is_hermitian(a: TTTensor, tol: float = 1e-10) -> bool:
    nrm = tt_norm(a)
    if nrm == 0.0:
        return True
    return tt_norm(tt_sub(a, tt_adjoint(a))) <= tol * nrm


# ---------------------------------------------------------------------------
# TT singular values


def smallest_tt_singular_value(a: TTTensor, ranks,
                               n_dense: int = N_DENSE_MAX) -> float:
    """min over cuts l of the r_l-th singular value of the l-th unfolding.

    Computed from dense unfoldings of the fused tensor, so it is limited to
    n <= n_dense.  For n == 1 there are no internal cuts and +inf is
    returned.
    """
    if a.n > n_dense:
        raise ValueError(f"n={a.n} exceeds dense cap {n_dense}")
    if a.n == 1:
        return float("inf")
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != a.n - 1:
        raise ValueError(f"rank vector length {len(ranks)} != {a.n - 1}")
    tensor = fuse_dense_to_tensor(tt_to_dense(a, n_dense=n_dense).matrix,
                                  a.n, a.d)
    dd = a.d * a.d
    smallest = np.inf
    for l in range(1, a.n):
        sv = np.linalg.svd(tensor.reshape(dd ** l, -1), compute_uv=False)
        r = ranks[l - 1]
        val = float(sv[r - 1]) if r <= len(sv) else 0.0
        smallest = min(smallest, val)
    return smallest


# ---------------------------------------------------------------------------
# random tensors (test / benchmark utility)


def random_tt(n: int, d: int, ranks, seed: int, hermitian: bool = False) -> TTTensor:
    """Random TT with the given internal ranks; optionally hermitized."""
    ranks = _validate_ranks(ranks, n, d) if n > 1 else ()
    full = (1,) + tuple(ranks) + (1,)
    rng = np.random.default_rng(seed)
    cores = []
    for l in range(n):
        shape = (full[l], d * d, full[l + 1])
        cores.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    out = TTTensor(tuple(cores), d=d)
    if hermitian:
        out = tt_round(tt_scale(tt_add(out, tt_adjoint(out)), 0.5),
                       target_ranks=ranks if n > 1 else None,
                       truncation_tol=None if n > 1 else 0.0)
    return out


# ---------------------------------------------------------------------------
# serialization


def tt_to_json_dict(tt: TTTensor) -> dict:
    """JSON container {n, d, ranks, cores}; core entries are [re, im] pairs
    in (left-rank, fused-physical, right-rank) index order."""
    cores = [np.stack([c.real, c.imag], axis=-1).tolist() for c in tt.cores]
    return {"n": tt.n, "d": tt.d, "ranks": list(tt.ranks), "cores": cores}


def tt_from_json_dict(data: dict) -> TTTensor:
    d = int(data["d"])
    cores = []
    for raw in data["cores"]:
        arr = np.asarray(raw, dtype=float)
        cores.append(arr[..., 0] + 1j * arr[..., 1])
    tt = TTTensor(tuple(cores), d=d)
    if list(tt.ranks) != list(data["ranks"]):
        raise ValueError("stored ranks do not match core shapes")
    return tt


def save_tt(tt: TTTensor, path) -> None:
    with open(path, "w") as fh:
        json.dump(tt_to_json_dict(tt), fh)


def load_tt(path) -> TTTensor:
    with open(path) as fh:
        return tt_from_json_dict(json.load(fh))

"""Experimental design over a finite arm set.

Builds the vectorized covariance ``Q(pi)``, evaluates the E-optimality
criterion ``lambda_min(Q)`` and the low-rank criterion ``B(Q)``, and
optimizes either one over the probability simplex with exponentiated
gradient (entropic mirror descent).
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DimensionError, SingularityError, SpanningError
from .matcore import vec_batch

COND_LIMIT = 1e14


class Criterion(str, enum.Enum):
    E_OPT = "emin"
    B_OPT = "bmin"

    @classmethod
    def parse(cls, value) -> "Criterion":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"emin": cls.E_OPT, "e_opt": cls.E_OPT, "cmin": cls.E_OPT,
                   "bmin": cls.B_OPT, "b_opt": cls.B_OPT}
        if key not in aliases:
            raise ValueError(f"unknown design criterion {value!r}")
        return aliases[key]


@dataclass(frozen=True, eq=False)
class ArmSet:
    """Finite ordered collection of ``d1 x d2`` arms, stored as ``(n, d1, d2)``."""

    arms: np.ndarray

    def __post_init__(self):
        arms = np.array(self.arms, dtype=float)
        if arms.ndim != 3 or arms.shape[0] == 0:
            raise DimensionError(f"arm set must have shape (n, d1, d2) with n >= 1, got {arms.shape}")
        if not np.all(np.isfinite(arms)):
            raise ContractError("arm set contains non-finite entries")
        arms.setflags(write=False)
        object.__setattr__(self, "arms", arms)

    @classmethod
    def from_vecs(cls, vecs, d1: int, d2: int) -> "ArmSet":
        vecs = np.atleast_2d(np.asarray(vecs, dtype=float))
        if vecs.shape[1] != d1 * d2:
            raise DimensionError(f"rows of length {vecs.shape[1]} do not match {d1}x{d2}")
        return cls(vecs.reshape(len(vecs), d2, d1).transpose(0, 2, 1))

    def __len__(self) -> int:
        return self.arms.shape[0]

    @property
    def d1(self) -> int:
        return self.arms.shape[1]

    @property
    def d2(self) -> int:
        return self.arms.shape[2]

    @property
    def dim(self) -> int:
        return self.d1 * self.d2

    @cached_property
    def vecs(self) -> np.ndarray:
        v = vec_batch(self.arms)
        v.setflags(write=False)
        return v

    @cached_property
    def spanning(self) -> bool:
        return bool(np.linalg.matrix_rank(self.vecs) == self.dim)

    def transpose(self) -> "ArmSet":
        return ArmSet(self.arms.transpose(0, 2, 1))


class ArmSetReport(NamedTuple):
    count: int
    max_op_norm: float
    spanning: bool
    within_unit_op_ball: bool


@dataclass(frozen=True)
class DesignOptions:
    max_iters: int = 2000
    # log-weight move per step is at most step_cap / sqrt(t)
    step_cap: float = float(np.log(1.1))
    ridge: float = 1e-9
    tol: float = 1e-6
    patience: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.step_cap <= 0 or self.ridge < 0 or self.tol <= 0 or self.patience < 1:
            raise ContractError("design options must be positive")


@dataclass(eq=False)
class Design:
    arm_set: ArmSet
    weights: np.ndarray
    Q: np.ndarray
    criterion_value: float
    criterion_kind: Criterion
    iterations: int = 0
    converged: bool = True
    history: list = field(default_factory=list, repr=False)

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to arm indices by inverse CDF."""
        return sample_indices(self.weights, u)


def sample_indices(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(weights) - 1)


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise DimensionError(f"expected {n} weights, got shape {w.shape}")
    if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-6:
        raise ContractError(f"weights are not on the simplex (sum {w.sum():.8f})")
    return w


def covariance(arm_set: ArmSet, weights) -> np.ndarray:
    """``Q = sum_j w_j vec(a_j) vec(a_j)^T``."""
    w = _check_weights(weights, len(arm_set))
    V = arm_set.vecs
    Q = (V.T * w) @ V
    return 0.5 * (Q + Q.T)


def col_block(Q_inv: np.ndarray, i: int, d1: int, d2: int) -> np.ndarray:
    """``i``-th contiguous ``d1 x d1`` diagonal block (0-based ``i < d2``)."""
    if not 0 <= i < d2:
        raise IndexError(f"column block index {i} out of range for d2={d2}")
    return Q_inv[i * d1:(i + 1) * d1, i * d1:(i + 1) * d1].copy()


def row_block(Q_inv: np.ndarray, j: int, d1: int, d2: int) -> np.ndarray:
    """``d2 x d2`` submatrix at indices ``{j + d1*l}`` (0-based ``j < d1``)."""
    if not 0 <= j < d1:
        raise IndexError(f"row block index {j} out of range for d1={d1}")
    return Q_inv[j::d1, j::d1][:d2, :d2].copy()


def block_sums(Q_inv: np.ndarray, d1: int, d2: int) -> tuple[np.ndarray, np.ndarray]:
    """Sums of all column blocks (``d1 x d1``) and all row blocks (``d2 x d2``)."""
    Q4 = Q_inv.reshape(d2, d1, d2, d1)
    return np.einsum("iaib->ab", Q4), np.einsum("ajbj->ab", Q4)


def _sym_inverse(Q: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh(0.5 * (Q + Q.T))
    if lam[-1] <= 0 or lam[0] <= lam[-1] / COND_LIMIT:
        raise SingularityError(f"covariance is numerically singular (eigenvalues in [{lam[0]:.3e}, {lam[-1]:.3e}])")
    return (U / lam) @ U.T


def regularized_inverse(Q: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    return _sym_inverse(Q + ridge * np.eye(Q.shape[0]))


def b_criterion(Q: np.ndarray, d1: int, d2: int, ridge: float = 0.0) -> float:
    """``max(lambda_max(sum of column blocks), lambda_max(sum of row blocks))`` of ``(Q + ridge I)^-1``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (d1 * d2, d1 * d2):
        raise DimensionError(f"Q has shape {Q.shape}, expected {(d1 * d2, d1 * d2)}")
    col, row = block_sums(regularized_inverse(Q, ridge), d1, d2)
    return float(max(np.linalg.eigvalsh(col)[-1], np.linalg.eigvalsh(row)[-1]))


def e_criterion(Q: np.ndarray) -> float:
    """Smallest eigenvalue of ``Q`` (clipped at zero)."""
    lam = np.linalg.eigvalsh(0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T))
    return float(max(lam[0], 0.0))


def _relative_ridge(Q: np.ndarray, ridge: float) -> float:
    return ridge * float(np.trace(Q)) / Q.shape[0]


def _b_value_and_grad(w, V, d1, d2, ridge):
    Q = (V.T * w) @ V
    Qi = regularized_inverse(Q, _relative_ridge(Q, ridge))
    col, row = block_sums(Qi, d1, d2)
    lc, uc = np.linalg.eigh(col)
    lr, ur = np.linalg.eigh(row)
    # G[i, r, j] = (Q^-1 vec(a_j)) at vec index i*d1 + r
    G = (Qi @ V.T).reshape(d2, d1, -1)
    f_col, f_row = lc[-1], lr[-1]
    scale = max(abs(f_col), abs(f_row))

    def grad_col():
        return -np.sum(np.einsum("r,irj->ij", uc[:, -1], G) ** 2, axis=0)

    def grad_row():
        return -np.sum(np.einsum("i,irj->rj", ur[:, -1], G) ** 2, axis=0)

    if abs(f_col - f_row) <= 1e-12 * scale:
        return max(f_col, f_row), 0.5 * (grad_col() + grad_row())
    if f_col > f_row:
        return f_col, grad_col()
    return f_row, grad_row()


def _neg_e_value_and_grad(w, V):
    Q = (V.T * w) @ V
    lam, U = np.linalg.eigh(0.5 * (Q + Q.T))
    u = U[:, 0]
    return -lam[0], -(V @ u) ** 2


def optimize_design(arm_set: ArmSet, kind=Criterion.B_OPT, opts: DesignOptions | None = None) -> Design:
    """Minimize ``B(Q(pi))`` or maximize ``lambda_min(Q(pi))`` over the simplex.

    Exponentiated-gradient iterations with a step whose largest log-weight
    move is ``opts.step_cap / sqrt(t)``; the best iterate is returned.
    ``converged`` is False when the best value was still improving by more
    than ``opts.tol`` (relative) over the last ``opts.patience`` iterations
    when ``opts.max_iters`` ran out.
    """
    kind = Criterion.parse(kind)
    opts = opts or DesignOptions()
    if kind is Criterion.B_OPT and not arm_set.spanning:
        raise SpanningError("B-optimal design needs an arm set spanning R^(d1*d2)")
    V = np.asarray(arm_set.vecs)
    n = len(arm_set)
    d1, d2 = arm_set.d1, arm_set.d2

    rng = np.random.default_rng(opts.seed)
    w = np.full(n, 1.0 / n) * (1.0 + 1e-6 * rng.random(n))
    w /= w.sum()

    if kind is Criterion.B_OPT:
        def objective(x):
            return _b_value_and_grad(x, V, d1, d2, opts.ridge)
    else:
        def objective(x):
            return _neg_e_value_and_grad(x, V)

    best_f, best_w = np.inf, w.copy()
    last_improve_f, last_improve_t = np.inf, 0
    converged = False
    history = []
    t = 0
    for t in range(1, opts.max_iters + 1):
        f, g = objective(w)
        history.append(f)
        if f < best_f:
            best_f, best_w = f, w.copy()
        if best_f < last_improve_f - opts.tol * abs(last_improve_f) or not np.isfinite(last_improve_f):
            last_improve_f, last_improve_t = best_f, t
        elif t - last_improve_t >= opts.patience:
            converged = True
            break
        spread = g.max() - g.min()
        if not spread > 0:
            converged = True
            break
        eta = opts.step_cap / (np.sqrt(t) * spread)
        logw = np.log(w) - eta * (g - g.min())
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()

    Q = covariance(arm_set, best_w)
    if kind is Criterion.B_OPT:
        value = b_criterion(Q, d1, d2, _relative_ridge(Q, opts.ridge))
    else:
        value = e_criterion(Q)
    return Design(arm_set=arm_set, weights=best_w, Q=Q, criterion_value=value,
                  criterion_kind=kind, iterations=t, converged=converged, history=history)


def validate_arm_set(arm_set: ArmSet) -> ArmSetReport:
    ops = np.linalg.norm(arm_set.arms, ord=2, axis=(1, 2))
    max_op = float(ops.max())
    return ArmSetReport(count=len(arm_set), max_op_norm=max_op, spanning=arm_set.spanning,
                        within_unit_op_ball=bool(max_op <= 1.0 + 1e-12))


# -- file formats -----------------------------------------------------------

def save_arm_set(arm_set: ArmSet, path) -> None:
    """CSV: first line ``d1,d2``, then one row per arm in vec order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([arm_set.d1, arm_set.d2])
        for row in arm_set.vecs:
            writer.writerow([repr(float(x)) for x in row])


def load_arm_set(path) -> ArmSet:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ContractError(f"{path}: empty arm file")
    try:
        d1, d2 = (int(x) for x in rows[0])
        vecs = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ContractError(f"{path}: malformed arm file ({exc})") from exc
    if vecs.ndim != 2 or len(vecs) == 0:
        raise ContractError(f"{path}: no arms listed")
    return ArmSet.from_vecs(vecs, d1, d2)


def save_design(design: Design, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm_index", "weight"])
        for i, w in enumerate(design.weights):
            writer.writerow([i, repr(float(w))])


def load_design_weights(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        pairs = sorted((int(r["arm_index"]), float(r["weight"])) for r in reader)
    return np.array([w for _, w in pairs])

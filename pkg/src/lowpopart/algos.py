"""Low-rank bandit algorithms and pseudo-regret accounting.

Explore-then-commit with Warm-LowPopArt (LPA-ETC) or nuclear-norm least
squares (Nuc-ETC), explore-subspace-then-refine (LPA-ESTR) on top of
LowOFUL, and plain OFUL as a baseline.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .design import ArmSet, Criterion, Design, DesignOptions, optimize_design
from .envs import Environment, pull_many
from .errors import ContractError
from .estimators import SampleSizeWarning, TraceDataset, nuclear_norm_pls, warm_lowpopart
from .matcore import _check_orthonormal, orthogonal_complement, svd, vec

EXPLORE, EXPLOIT = 0, 1
NORM_REFRESH = 1024


# -- exploration lengths ----------------------------------------------------

def _round_length(x: float, T: int) -> int:
    return int(min(T, max(1, round(x))))


def etc_exploration_length(sigma: float, r: int, B_min: float, T: int, R_max: float) -> int:
    """``min(T, (sigma^2 r^2 B_min T^2 / R_max^2)^(1/3))``, rounded, at least 1."""
    if min(sigma, r, B_min, T, R_max) <= 0:
        raise ContractError("exploration-length inputs must be positive")
    return _round_length((sigma ** 2 * r ** 2 * B_min * T ** 2 / R_max ** 2) ** (1.0 / 3.0), T)


def nuc_exploration_length(sigma: float, r: int, C_min: float, T: int, S_star: float) -> int:
    """``min(T, (sigma^2 r^2 T^2 / (C_min^2 S*^2))^(1/3))``, rounded, at least 1."""
    if min(sigma, r, C_min, T, S_star) <= 0:
        raise ContractError("exploration-length inputs must be positive")
    return _round_length((sigma ** 2 * r ** 2 * T ** 2 / (C_min ** 2 * S_star ** 2)) ** (1.0 / 3.0), T)


def estr_exploration_length(d: int, B_min: float, T: int, S_r: float) -> int:
    """``sqrt(sqrt(d) B_min T / S_r^2)``, rounded, at least 1 (not clipped at ``T``)."""
    if min(d, B_min, T, S_r) <= 0:
        raise ContractError("exploration-length inputs must be positive")
    return max(1, int(round(np.sqrt(np.sqrt(d) * B_min * T / S_r ** 2))))


# -- traces -----------------------------------------------------------------

@dataclass(eq=False)
class RunTrace:
    algo: str
    arm_index: np.ndarray
    reward: np.ndarray
    phase: np.ndarray
    n0: int = 0
    instant_regret: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.arm_index.shape[0]

    @property
    def cumulative_regret(self) -> np.ndarray:
        if self.instant_regret is None:
            raise ContractError("regret not computed; call regret_of first")
        return np.cumsum(self.instant_regret)

    @property
    def final_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if len(self) else 0.0


def regret_of(trace: RunTrace, env: Environment) -> RunTrace:
    """Fill ``instant_regret`` from the true means; noise never enters."""
    idx = np.asarray(trace.arm_index, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= len(env.arm_set)):
        raise IndexError("trace contains arm indices outside the arm set")
    trace.instant_regret = env.best_mean - env.means[idx]
    return trace


def thinned_rows(n: int, stride: int) -> np.ndarray:
    """0-based rows ``stride-1, 2*stride-1, ...`` plus the last row."""
    if stride < 1:
        raise ContractError("stride must be at least 1")
    if n == 0:
        return np.zeros(0, dtype=int)
    rows = np.arange(stride - 1, n, stride)
    if rows.size == 0 or rows[-1] != n - 1:
        rows = np.append(rows, n - 1)
    return rows


def save_trace(trace: RunTrace, path, stride: int = 1) -> None:
    """CSV ``t, arm_index, reward, instant_regret, cumulative_regret, phase`` with 1-based ``t``."""
    cum = trace.cumulative_regret
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "arm_index", "reward", "instant_regret", "cumulative_regret", "phase"])
        for i in thinned_rows(len(trace), stride):
            writer.writerow([i + 1, int(trace.arm_index[i]), repr(float(trace.reward[i])),
                             repr(float(trace.instant_regret[i])), repr(float(cum[i])), int(trace.phase[i])])


def load_trace(path, algo: str = "") -> RunTrace:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    arm = np.array([int(r["arm_index"]) for r in rows])
    tr = RunTrace(algo=algo, arm_index=arm, reward=np.array([float(r["reward"]) for r in rows]),
                  phase=np.array([int(r["phase"]) for r in rows]))
    tr.instant_regret = np.array([float(r["instant_regret"]) for r in rows])
    tr.info["t"] = np.array([int(r["t"]) for r in rows])
    return tr


# -- LowOFUL ----------------------------------------------------------------

class LowOFUL:
    """Ridge-UCB with a diagonal regularizer: ``lam`` on the first ``k`` coordinates, ``lam_perp`` after.

    ``sqrt(beta_t) = sigma sqrt(log(|V|/(|Lambda| delta^2))) + sqrt(lam) B + sqrt(lam_perp) B_perp``.
    ``V^-1`` is kept by Sherman-Morrison updates and ``log|V|`` incrementally.
    """

    def __init__(self, dim: int, k: int, lam: float, lam_perp: float, sigma: float, delta: float,
                 B: float, B_perp: float, arms: np.ndarray | None = None):
        if not 0 <= k <= dim:
            raise ContractError(f"k={k} must lie in [0, {dim}]")
        if lam <= 0 or lam_perp <= 0:
            raise ContractError("regularizers must be positive")
        if not 0 < delta < 1:
            raise ContractError("delta must lie in (0, 1)")
        self.dim, self.k = dim, k
        self.lam, self.lam_perp = float(lam), float(lam_perp)
        self.sigma, self.delta = float(sigma), float(delta)
        self.B, self.B_perp = float(B), float(B_perp)
        self.Lambda = np.concatenate([np.full(k, self.lam), np.full(dim - k, self.lam_perp)])
        self.V = np.diag(self.Lambda)
        self.V_inv = np.diag(1.0 / self.Lambda)
        self.b = np.zeros(dim)
        self.theta = np.zeros(dim)
        self.logdet_Lambda = float(np.sum(np.log(self.Lambda)))
        self.logdet = self.logdet_Lambda
        self.t = 0
        self._arms = None
        self._norms2 = None
        self._since_refresh = 0
        if arms is not None:
            self.attach(arms)

    def attach(self, arms: np.ndarray) -> None:
        """Cache ``||a||^2_{V^-1}`` for a fixed arm matrix with rows in ``R^dim``."""
        arms = np.asarray(arms, dtype=float)
        if arms.ndim != 2 or arms.shape[1] != self.dim:
            raise ContractError(f"arms must have shape (K, {self.dim})")
        self._arms = arms
        self._refresh()

    def _refresh(self):
        self._norms2 = np.einsum("ij,jk,ik->i", self._arms, self.V_inv, self._arms)
        self._since_refresh = 0

    def sqrt_beta(self) -> float:
        inner = self.logdet - self.logdet_Lambda - 2.0 * np.log(self.delta)
        return float(self.sigma * np.sqrt(max(inner, 0.0)) + np.sqrt(self.lam) * self.B
                     + np.sqrt(self.lam_perp) * self.B_perp)

    def ucb(self, arms: np.ndarray | None = None) -> np.ndarray:
        if arms is None:
            if self._arms is None:
                raise ContractError("no arm set attached")
            arms, norms2 = self._arms, self._norms2
        else:
            arms = np.asarray(arms, dtype=float)
            norms2 = np.einsum("ij,jk,ik->i", arms, self.V_inv, arms)
        return arms @ self.theta + self.sqrt_beta() * np.sqrt(np.maximum(norms2, 0.0))

    def select(self, arms: np.ndarray | None = None) -> int:
        """Index of the arm with the largest optimistic value; ties go to the lowest index."""
        return int(np.argmax(self.ucb(arms)))

    def update(self, a: np.ndarray, reward: float) -> None:
        a = np.asarray(a, dtype=float)
        Va = self.V_inv @ a
        s = float(a @ Va)
        self.t += 1
        if s == 0.0:
            return
        self.V += np.outer(a, a)
        self.V_inv -= np.outer(Va, Va) / (1.0 + s)
        self.V_inv = 0.5 * (self.V_inv + self.V_inv.T)
        self.logdet += float(np.log1p(s))
        self.b += reward * a
        self.theta = self.V_inv @ self.b
        if self._arms is not None:
            self._since_refresh += 1
            if self._since_refresh >= NORM_REFRESH:
                self._refresh()
            else:
                proj = self._arms @ Va
                self._norms2 -= proj * proj / (1.0 + s)


def lowoful_select(state: LowOFUL, arms: np.ndarray) -> int:
    return state.select(arms)


def lowoful_update(state: LowOFUL, a: np.ndarray, reward: float) -> LowOFUL:
    state.update(a, reward)
    return state


# -- rotation ---------------------------------------------------------------

class RotatedArms(NamedTuple):
    vecs: np.ndarray
    U_full: np.ndarray
    V_full: np.ndarray
    r: int
    k: int


def _rearrange(M: np.ndarray, r: int) -> np.ndarray:
    """Stack ``(n, d1, d2)`` blocks as ``[:r,:r]``, ``[r:,:r]``, ``[:r,r:]``, ``[r:,r:]`` in vec order."""
    n = M.shape[0]
    parts = [M[:, :r, :r], M[:, r:, :r], M[:, :r, r:], M[:, r:, r:]]
    return np.concatenate([p.transpose(0, 2, 1).reshape(n, -1) for p in parts], axis=1)


def rotate_and_rearrange(arms, U_hat: np.ndarray, V_hat: np.ndarray) -> RotatedArms:
    """Map each arm ``A`` to the rearranged vec of ``[U U_perp]^T A [V V_perp]``.

    The first ``k = r(d1 + d2 - r)`` coordinates touch ``span(U_hat)`` or
    ``span(V_hat)``; the rest live in both complements. Row ``i`` of the
    output corresponds to arm ``i``.
    """
    A = arms.arms if isinstance(arms, ArmSet) else np.asarray(arms, dtype=float)
    if A.ndim == 2:
        A = A[None]
    U_hat = np.asarray(U_hat, dtype=float)
    V_hat = np.asarray(V_hat, dtype=float)
    _check_orthonormal(U_hat, "U_hat")
    _check_orthonormal(V_hat, "V_hat")
    r = U_hat.shape[1]
    if V_hat.shape[1] != r:
        raise ContractError("U_hat and V_hat must have the same number of columns")
    d1, d2 = A.shape[1:]
    U_full = np.hstack([U_hat, orthogonal_complement(U_hat)])
    V_full = np.hstack([V_hat, orthogonal_complement(V_hat)])
    rot = np.einsum("ai,nab,bj->nij", U_full, A, V_full)
    return RotatedArms(_rearrange(rot, r), U_full, V_full, r, r * (d1 + d2 - r))


def rotate_parameter(theta: np.ndarray, rotated: RotatedArms) -> np.ndarray:
    """Rotated, rearranged parameter; inner products with rotated arms match the originals."""
    rot = rotated.U_full.T @ np.asarray(theta, dtype=float) @ rotated.V_full
    return _rearrange(rot[None], rotated.r)[0]


# -- runners ----------------------------------------------------------------

@dataclass(frozen=True)
class EtcConfig:
    T: int
    sigma: float = 1.0
    delta: float = 0.05
    S_star: float = 1.0
    r: int = 1
    R_max: float | None = None
    n0: int | None = None
    design_opts: DesignOptions = DesignOptions()

    def __post_init__(self):
        if self.T < 1 or self.r < 1 or not 0 < self.delta < 1 or self.sigma <= 0 or self.S_star <= 0:
            raise ContractError("invalid explore-then-commit configuration")


@dataclass(frozen=True)
class EstrConfig:
    T: int
    sigma: float = 1.0
    delta: float = 0.05
    S_star: float = 1.0
    S_r: float = 1.0
    r: int = 1
    n0: int | None = None
    design_opts: DesignOptions = DesignOptions()

    def __post_init__(self):
        if self.T < 1 or self.r < 1 or not 0 < self.delta < 1 or self.sigma <= 0 or self.S_star <= 0 \
                or self.S_r <= 0:
            raise ContractError("invalid ESTR configuration")


@dataclass(frozen=True)
class OfulConfig:
    T: int
    sigma: float = 1.0
    delta: float = 0.05
    lam: float = 1.0
    S: float = 1.0

    def __post_init__(self):
        if self.T < 1 or not 0 < self.delta < 1 or self.lam <= 0:
            raise ContractError("invalid OFUL configuration")


def _streams(seed: int):
    arm_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(arm_ss), np.random.default_rng(noise_ss)


def _ensure_design(arm_set: ArmSet, kind: Criterion, design: Design | None, opts: DesignOptions) -> Design:
    if design is None:
        return optimize_design(arm_set, kind, opts)
    if design.arm_set is not arm_set and design.weights.shape[0] != len(arm_set):
        raise ContractError("design does not belong to this arm set")
    if design.criterion_kind is not kind:
        raise ContractError(f"expected a {kind.name} design, got {design.criterion_kind.name}")
    return design


def _explore(env: Environment, design: Design, n0: int, rng_arm, rng_noise):
    idx = design.sample(rng_arm.random(n0))
    y = pull_many(env, idx, rng_noise)
    return idx, y, TraceDataset(env.arm_set.arms[idx], y)


def _rank_r(M: np.ndarray, r: int) -> np.ndarray:
    U, s, Vt = svd(M)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def _commit(env, idx, y, n0, T, commit, rng_noise, algo, info):
    rest = T - n0
    cidx = np.full(rest, commit, dtype=int)
    cy = pull_many(env, cidx, rng_noise)
    trace = RunTrace(algo=algo, arm_index=np.concatenate([idx, cidx]), reward=np.concatenate([y, cy]),
                     phase=np.concatenate([np.full(n0, EXPLORE), np.full(rest, EXPLOIT)]), n0=n0, info=info)
    return regret_of(trace, env)


def run_lpa_etc(env: Environment, config: EtcConfig, seed: int = 0, design: Design | None = None) -> RunTrace:
    """Explore with the B-optimal design, estimate by Warm-LowPopArt, commit greedily.

    When the estimate is thresholded to zero the commit uses the best
    rank-``r`` approximation of the un-thresholded Catoni aggregate, the
    same fallback LPA-ESTR uses for its subspaces.
    """
    arm_set = env.arm_set
    design = _ensure_design(arm_set, Criterion.B_OPT, design, config.design_opts)
    B = design.criterion_value
    max_op = float(np.linalg.norm(arm_set.arms, ord=2, axis=(1, 2)).max())
    R_max = config.R_max if config.R_max is not None else max_op * config.S_star
    n0 = config.n0 if config.n0 is not None else etc_exploration_length(config.sigma, config.r, B, config.T, R_max)
    n0 = int(min(n0, config.T))
    rng_arm, rng_noise = _streams(seed)
    idx, y, ds = _explore(env, design, n0, rng_arm, rng_noise)
    info = {"B": B, "R_max": R_max, "oracle_R_max": config.R_max is not None}
    if n0 >= 2 and n0 < config.T:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SampleSizeWarning)
            est = warm_lowpopart(ds, design.Q, config.sigma, config.S_star, config.delta / 2, B_value=B,
                                 rank=config.r)
        info.update(rank=est.rank, tau=est.tau, small_sample=bool(caught))
        theta = est.theta
        info["fallback"] = est.rank == 0
        if est.rank == 0:
            theta = _rank_r(est.theta1, config.r)
        commit = int(np.argmax(arm_set.vecs @ vec(theta)))
    else:
        commit = 0
    info["commit"] = commit
    return _commit(env, idx, y, n0, config.T, commit, rng_noise, "LPA-ETC", info)


def nuc_lambda(sigma: float, n0: int, d: int, delta: float) -> float:
    """Penalty for the summed squared loss: ``n0 * 2 sigma sqrt(ln(2d/delta)/n0)``."""
    return float(n0 * 2.0 * sigma * np.sqrt(np.log(2.0 * d / delta) / n0))


def run_nuc_etc(env: Environment, config: EtcConfig, seed: int = 0, design: Design | None = None) -> RunTrace:
    """Explore with the E-optimal design, estimate by nuclear-norm least squares, commit greedily."""
    arm_set = env.arm_set
    design = _ensure_design(arm_set, Criterion.E_OPT, design, config.design_opts)
    C = design.criterion_value
    if not C > 0:
        raise ContractError("E-optimal value is zero; arm set does not span")
    n0 = config.n0 if config.n0 is not None else nuc_exploration_length(config.sigma, config.r, C, config.T,
                                                                          config.S_star)
    n0 = int(min(n0, config.T))
    rng_arm, rng_noise = _streams(seed)
    idx, y, ds = _explore(env, design, n0, rng_arm, rng_noise)
    info = {"C": C}
    if n0 < config.T:
        lam = nuc_lambda(config.sigma, n0, arm_set.d1 + arm_set.d2, config.delta)
        est = nuclear_norm_pls(ds, lam)
        info.update(rank=est.rank, lam=lam, converged=est.converged)
        commit = int(np.argmax(arm_set.vecs @ vec(est.theta)))
    else:
        commit = 0
    info["commit"] = commit
    return _commit(env, idx, y, n0, config.T, commit, rng_noise, "Nuc-ETC", info)


def _run_lowoful(env: Environment, learner: LowOFUL, arm_vecs: np.ndarray, steps: int, rng_noise):
    learner.attach(arm_vecs)
    means = env.means
    idx = np.empty(steps, dtype=int)
    y = np.empty(steps)
    z = rng_noise.standard_normal(steps)
    for t in range(steps):
        i = learner.select()
        idx[t] = i
        y[t] = means[i] + env.sigma * z[t]
        learner.update(arm_vecs[i], y[t])
    return idx, y


def run_lpa_estr(env: Environment, config: EstrConfig, seed: int = 0, design: Design | None = None) -> RunTrace:
    """Explore subspaces with Warm-LowPopArt, rotate the arms, refine with LowOFUL."""
    arm_set = env.arm_set
    d1, d2, r = arm_set.d1, arm_set.d2, config.r
    if r > min(d1, d2):
        raise ContractError("rank exceeds matrix dimensions")
    design = _ensure_design(arm_set, Criterion.B_OPT, design, config.design_opts)
    B = design.criterion_value
    d = max(d1, d2)
    T = config.T
    n0 = config.n0 if config.n0 is not None else estr_exploration_length(d, B, T, config.S_r)
    if n0 >= T:
        raise ContractError(f"exploration length n0={n0} is not below the horizon T={T}")
    rng_arm, rng_noise = _streams(seed)
    idx, y, ds = _explore(env, design, n0, rng_arm, rng_noise)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SampleSizeWarning)
        est = warm_lowpopart(ds, design.Q, config.sigma, config.S_star, config.delta / 2, B_value=B, rank=r)
    source = est.theta if est.rank >= r else est.theta1
    U, _, Vt = svd(source)
    rotated = rotate_and_rearrange(arm_set, U[:, :r], Vt[:r].T)

    sigma, S = config.sigma, config.S_star
    lam = sigma ** 2 * d * r / S ** 2
    lam_perp = T / (r * np.log1p(d * T / lam))
    B_perp = B * sigma ** 2 * S / (n0 * config.S_r ** 2)
    learner = LowOFUL(d1 * d2, rotated.k, lam, lam_perp, sigma, config.delta / 2, S, B_perp)
    idx2, y2 = _run_lowoful(env, learner, rotated.vecs, T - n0, rng_noise)
    info = {"B": B, "rank": est.rank, "tau": est.tau, "fallback": est.rank < r, "k": rotated.k,
            "lam": lam, "lam_perp": lam_perp, "B_perp": B_perp, "small_sample": bool(caught)}
    trace = RunTrace(algo="LPA-ESTR", arm_index=np.concatenate([idx, idx2]), reward=np.concatenate([y, y2]),
                     phase=np.concatenate([np.full(n0, EXPLORE), np.full(T - n0, EXPLOIT)]), n0=n0, info=info)
    return regret_of(trace, env)


def run_oful(env: Environment, config: OfulConfig, seed: int = 0) -> RunTrace:
    """OFUL: LowOFUL with ``k`` equal to the full dimension and a single regularizer."""
    p = env.arm_set.dim
    _, rng_noise = _streams(seed)
    learner = LowOFUL(p, p, config.lam, config.lam, config.sigma, config.delta, config.S, 0.0)
    idx, y = _run_lowoful(env, learner, np.asarray(env.arm_set.vecs), config.T, rng_noise)
    trace = RunTrace(algo="OFUL", arm_index=idx, reward=y, phase=np.full(config.T, EXPLOIT), n0=0,
                     info={"lam": config.lam})
    return regret_of(trace, env)


__all__ = [
    "etc_exploration_length", "nuc_exploration_length", "estr_exploration_length", "RunTrace", "regret_of",
    "save_trace", "load_trace", "thinned_rows", "LowOFUL", "lowoful_select", "lowoful_update",
    "RotatedArms", "rotate_and_rearrange", "rotate_parameter", "EtcConfig", "EstrConfig", "OfulConfig",
    "run_lpa_etc", "run_nuc_etc", "run_lpa_estr", "run_oful", "nuc_lambda",
]

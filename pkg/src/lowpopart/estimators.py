"""Trace-regression estimators.

LowPopArt aggregates one-sample estimators ``Q^-1 r_i vec(X_i)`` with the
matrix Catoni transform applied to their dilations and hard-thresholds
the singular values of the result. Warm-LowPopArt runs it twice, using the
first half of the data as a pilot. A nuclear-norm penalized least-squares
estimator (accelerated proximal gradient) serves as the baseline.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import b_criterion, regularized_inverse
from .errors import ContractError, DimensionError
from .matcore import (dilation, hard_threshold_svd, ht_extract, matrix_psi, nuclear_norm,
                      numerical_rank, reshape, reshape_batch, svd, vec, vec_batch)

CATONI_CHUNK = 4096


class SampleSizeWarning(UserWarning):
    """Sample size below the level the two-stage guarantee asks for."""


@dataclass(frozen=True, eq=False)
class TraceDataset:
    """Measurements ``X`` with shape ``(n, d1, d2)`` and responses ``y`` with shape ``(n,)``."""

    X: np.ndarray
    y: np.ndarray
    sigma: float | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim != 3:
            raise DimensionError(f"measurements must have shape (n, d1, d2), got {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"{X.shape[0]} measurements but {y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ContractError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_vecs(cls, vecs, y, d1: int, d2: int, sigma=None) -> "TraceDataset":
        return cls(reshape_batch(np.atleast_2d(vecs), d1, d2), y, sigma)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def d1(self) -> int:
        return self.X.shape[1]

    @property
    def d2(self) -> int:
        return self.X.shape[2]

    @property
    def vecs(self) -> np.ndarray:
        return vec_batch(self.X)

    def split(self, k: int) -> tuple["TraceDataset", "TraceDataset"]:
        """First ``k`` samples and the remainder, order preserved."""
        return (TraceDataset(self.X[:k], self.y[:k], self.sigma),
                TraceDataset(self.X[k:], self.y[k:], self.sigma))


def save_dataset(ds: TraceDataset, path) -> None:
    """CSV with columns ``y, x_1, ..., x_{d1*d2}`` (``x`` in vec order); dims in a comment line."""
    p = ds.d1 * ds.d2
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# d1={ds.d1},d2={ds.d2}\n")
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"x_{k + 1}" for k in range(p)])
        for yi, xi in zip(ds.y, ds.vecs):
            writer.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])


def load_dataset(path, d1: int | None = None, d2: int | None = None) -> TraceDataset:
    text = Path(path).read_text().splitlines()
    if text and text[0].startswith("#"):
        meta = dict(kv.split("=") for kv in text[0][1:].strip().split(","))
        d1 = int(meta["d1"]) if d1 is None else d1
        d2 = int(meta["d2"]) if d2 is None else d2
        text = text[1:]
    if d1 is None or d2 is None:
        raise ContractError(f"{path}: matrix dimensions unknown")
    rows = [r for r in csv.reader(text) if r]
    data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float).reshape(-1, 1 + d1 * d2)
    return TraceDataset.from_vecs(data[:, 1:], data[:, 0], d1, d2)


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning inputs: noise scale, pilot estimate ``theta0`` with error bound ``R0``, failure rate."""

    sigma: float
    R0: float
    delta: float
    B_value: float | None = None
    theta0: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma < 0 or self.R0 < 0:
            raise ContractError("sigma and R0 must be nonnegative")
        if not self.sigma + self.R0 > 0:
            raise ContractError("sigma + R0 must be positive (nu is undefined otherwise)")
        if not 0 < self.delta < 1:
            raise ContractError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(eq=False)
class Estimate:
    theta: np.ndarray
    rank: int
    nu: float | None
    tau: float | None
    B: float | None
    name: str
    theta1: np.ndarray | None = None
    n0: int = 0
    converged: bool = True
    iterations: int = 0
    info: dict = field(default_factory=dict)

    def diagnostics(self) -> dict:
        out = {"estimator_name": self.name, "rank": self.rank, "nu": self.nu, "tau": self.tau,
               "B": self.B, "n0": self.n0, "converged": self.converged, "iterations": self.iterations}
        out.update(self.info)
        return out


def save_estimate(est: Estimate, path) -> tuple[Path, Path]:
    """Write the estimate as a matrix CSV and a JSON sidecar next to it."""
    path = Path(path)
    np.savetxt(path, est.theta, delimiter=",", fmt="%.17g")
    side = path.with_suffix(".json")
    side.write_text(json.dumps(est.diagnostics(), indent=2, sort_keys=True))
    return path, side


def one_sample(X: np.ndarray, Y: float, Q_inv: np.ndarray, theta0: np.ndarray | None = None) -> np.ndarray:
    """``reshape(Q^-1 (Y - <theta0, X>) vec(X))``."""
    X = np.asarray(X, dtype=float)
    d1, d2 = X.shape
    resid = Y - (float(np.sum(theta0 * X)) if theta0 is not None else 0.0)
    return reshape(Q_inv @ vec(X) * resid, d1, d2)


def log_term(d: int, delta: float) -> float:
    return float(np.log(2.0 * d / delta))


def nu_and_tau(config: EstimatorConfig, n0: int, d: int, B: float | None = None) -> tuple[float, float]:
    """Catoni scale ``nu`` and singular-value threshold ``tau``.

    With ``L = ln(2d/delta)``: ``nu = sqrt(2L/(B n0))/(sigma+R0)`` and
    ``tau = 2 (R0+sigma) sqrt(B L/n0)``.
    """
    B = config.B_value if B is None else B
    if B is None or not B > 0:
        raise ContractError("a positive B value is required")
    if n0 < 1:
        raise ContractError("n0 must be at least 1")
    s = config.sigma + config.R0
    L = log_term(d, config.delta)
    nu = np.sqrt(2.0 * L / (B * n0)) / s
    tau = 2.0 * s * np.sqrt(B * L / n0)
    return float(nu), float(tau)


def catoni_aggregate(M: np.ndarray, nu: float, chunk: int = CATONI_CHUNK) -> np.ndarray:
    """``ht(sum_i psi(nu H(M_i)))`` for a stack ``M`` of shape ``(n, d1, d2)``.

    Chunks are summed in a fixed order so the result is reproducible.
    """
    n, d1, d2 = M.shape
    total = np.zeros((d1, d2))
    for start in range(0, n, chunk):
        block = matrix_psi(dilation(M[start:start + chunk]), nu)
        total += ht_extract(block, d1, d2).sum(axis=0)
    return total


def lowpopart(dataset: TraceDataset, Q: np.ndarray, config: EstimatorConfig, ridge: float = 0.0,
              name: str = "lowpopart") -> Estimate:
    """Catoni-aggregated one-sample estimators followed by hard thresholding.

    ``Q`` is the covariance of the sampling design. When ``config.B_value``
    is None it is computed from ``Q``. The log term uses ``d = d1 + d2``.
    """
    n = len(dataset)
    if n == 0:
        raise ContractError("empty dataset")
    d1, d2 = dataset.d1, dataset.d2
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (d1 * d2, d1 * d2):
        raise DimensionError(f"Q has shape {Q.shape}, expected {(d1 * d2, d1 * d2)}")
    Q_inv = regularized_inverse(Q, ridge)
    B = config.B_value if config.B_value is not None else b_criterion(Q, d1, d2, ridge)
    theta0 = np.zeros((d1, d2)) if config.theta0 is None else np.asarray(config.theta0, dtype=float)
    if theta0.shape != (d1, d2):
        raise DimensionError(f"pilot has shape {theta0.shape}, expected {(d1, d2)}")

    V = dataset.vecs
    resid = dataset.y - V @ vec(theta0)
    M = reshape_batch((V @ Q_inv) * resid[:, None], d1, d2)
    nu, tau = nu_and_tau(config, n, d1 + d2, B)
    theta1 = theta0 + catoni_aggregate(M, nu) / (n * nu)
    theta_hat, rank = hard_threshold_svd(theta1, tau)
    return Estimate(theta=theta_hat, rank=rank, nu=nu, tau=tau, B=float(B), name=name, theta1=theta1,
                    n0=n, info={"delta": config.delta, "log_dim": d1 + d2, "R0": config.R0,
                                "sigma": config.sigma})


def warm_lowpopart(dataset: TraceDataset, Q: np.ndarray, sigma: float, s_star: float, delta: float,
                   B_value: float | None = None, rank: int = 1, ridge: float = 0.0) -> Estimate:
    """Two-stage LowPopArt: the first half builds a pilot for the second.

    Stage one uses ``theta0 = 0``, ``R0 = s_star``; stage two uses the stage-one
    output as pilot with ``R0 = sigma``. Each stage gets ``delta / 2``.
    """
    n = len(dataset)
    if n < 2:
        raise ContractError("Warm-LowPopArt needs at least 2 samples")
    if not sigma > 0:
        raise ContractError("Warm-LowPopArt needs sigma > 0")
    d1, d2 = dataset.d1, dataset.d2
    B = B_value if B_value is not None else b_criterion(np.asarray(Q, dtype=float), d1, d2, ridge)
    need = rank ** 2 * B * ((sigma + s_star) / sigma) ** 2
    if n < need:
        warnings.warn(f"n0={n} is below r^2 B ((sigma+S*)/sigma)^2 = {need:.1f}", SampleSizeWarning,
                      stacklevel=2)
    first, second = dataset.split(n // 2)
    stage1 = lowpopart(first, Q, EstimatorConfig(sigma=sigma, R0=s_star, delta=delta / 2, B_value=B),
                       ridge=ridge, name="lowpopart-stage1")
    cfg2 = EstimatorConfig(sigma=sigma, R0=sigma, delta=delta / 2, B_value=B, theta0=stage1.theta)
    est = lowpopart(second, Q, cfg2, ridge=ridge, name="warm-lowpopart")
    est.n0 = n
    est.info["stage1_rank"] = stage1.rank
    est.info["stage1_tau"] = stage1.tau
    return est


def svt(M: np.ndarray, lam: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``lam * ||.||_*``."""
    if lam < 0:
        raise ContractError("lambda must be nonnegative")
    U, s, Vt = svd(M)
    return (U * np.maximum(s - lam, 0.0)) @ Vt


def pls_objective(theta: np.ndarray, dataset: TraceDataset, lam: float) -> float:
    r = dataset.vecs @ vec(theta) - dataset.y
    return float(0.5 * r @ r + lam * nuclear_norm(theta))


def nuclear_norm_pls(dataset: TraceDataset, lam: float, iters: int = 5000, tol: float = 1e-10,
                     theta_init: np.ndarray | None = None) -> Estimate:
    """Minimize ``0.5 sum_t (<theta, X_t> - y_t)^2 + lam ||theta||_*``.

    FISTA with step ``1/lambda_max(sum vec(X_t) vec(X_t)^T)`` and
    function-value restarts; returns the best iterate. Stops once the
    relative change of the best objective falls below ``tol``.
    """
    if lam < 0:
        raise ContractError("lambda must be nonnegative")
    n = len(dataset)
    if n == 0:
        raise ContractError("empty dataset")
    d1, d2 = dataset.d1, dataset.d2
    V = dataset.vecs
    G = V.T @ V
    h = V.T @ dataset.y
    c = 0.5 * float(dataset.y @ dataset.y)
    L = float(np.linalg.eigvalsh(G)[-1])
    if L <= 0:
        theta = np.zeros((d1, d2))
        return Estimate(theta=theta, rank=0, nu=None, tau=None, B=None, name="nuclear-pls", n0=n,
                        info={"lambda": lam})

    def objective(x):
        return 0.5 * x @ G @ x - h @ x + c + lam * nuclear_norm(reshape(x, d1, d2))

    def prox_step(y):
        z = y - (G @ y - h) / L
        return vec(svt(reshape(z, d1, d2), lam / L))

    x = np.zeros(d1 * d2) if theta_init is None else vec(theta_init)
    f = objective(x)
    best_x, best_f = x.copy(), f
    y, t = x.copy(), 1.0
    converged = False
    k = 0
    for k in range(1, iters + 1):
        x_new = prox_step(y)
        f_new = objective(x_new)
        if f_new > f:
            # restart momentum from the last accepted point
            y, t = x.copy(), 1.0
            x_new = prox_step(y)
            f_new = objective(x_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        change = abs(f - f_new)
        x, f, t = x_new, f_new, t_new
        if f < best_f:
            best_x, best_f = x.copy(), f
        if change <= tol * max(1.0, abs(f)):
            converged = True
            break
    theta = reshape(best_x, d1, d2)
    return Estimate(theta=theta, rank=numerical_rank(theta), nu=None, tau=None, B=None, name="nuclear-pls",
                    n0=n, converged=converged, iterations=k, info={"lambda": lam, "objective": best_f})


__all__ = [
    "TraceDataset", "EstimatorConfig", "Estimate", "SampleSizeWarning", "one_sample", "nu_and_tau",
    "catoni_aggregate", "lowpopart", "warm_lowpopart", "svt", "nuclear_norm_pls", "pls_objective",
    "save_dataset", "load_dataset", "save_estimate",
]

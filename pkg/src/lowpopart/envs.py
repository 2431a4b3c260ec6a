"""Bandit environments, synthetic arm sets and the lower-bound hard instance."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import ArmSet, load_arm_set, save_arm_set
from .errors import ContractError
from .matcore import nuclear_norm, numerical_rank, vec


@dataclass(frozen=True, eq=False)
class Environment:
    """Fixed arm set with reward matrix ``theta`` and Gaussian noise of scale ``sigma``."""

    theta: np.ndarray
    arm_set: ArmSet
    sigma: float = 1.0
    rank: int | None = None
    seed: int = 0
    noise_kind: str = "GAUSSIAN"
    generator: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (self.arm_set.d1, self.arm_set.d2):
            raise ContractError(f"theta has shape {theta.shape}, arms are {self.arm_set.d1}x{self.arm_set.d2}")
        if self.sigma < 0:
            raise ContractError("noise level must be nonnegative")
        if self.noise_kind != "GAUSSIAN":
            raise ContractError(f"unsupported noise kind {self.noise_kind!r}")
        rank = numerical_rank(theta) if self.rank is None else int(self.rank)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rank", rank)
        means = self.arm_set.vecs @ vec(theta)
        means.setflags(write=False)
        object.__setattr__(self, "means", means)

    @property
    def best_mean(self) -> float:
        return float(self.means.max())

    @property
    def best_arm(self) -> int:
        return int(np.argmax(self.means))

    @property
    def gaps(self) -> np.ndarray:
        return self.best_mean - self.means


def pull(env: Environment, arm_index: int, rng: np.random.Generator) -> float:
    """Noisy reward ``<theta, A> + sigma * z``; advances ``rng`` by one normal draw."""
    if not 0 <= arm_index < len(env.arm_set):
        raise IndexError(f"arm index {arm_index} out of range for {len(env.arm_set)} arms")
    z = rng.standard_normal()
    return float(env.means[arm_index] + env.sigma * z)


def pull_many(env: Environment, arm_indices: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`pull`; consumes the stream exactly as repeated single pulls would."""
    idx = np.asarray(arm_indices, dtype=int)
    z = rng.standard_normal(idx.shape[0])
    return env.means[idx] + env.sigma * z


# -- generators -------------------------------------------------------------

def _unit(rng, n):
    x = rng.standard_normal(n)
    return x / np.linalg.norm(x)


def gen_theta_rank_one(d1: int, d2: int, seed: int) -> np.ndarray:
    """``u v^T`` with ``u``, ``v`` uniform on the unit spheres."""
    rng = np.random.default_rng(seed)
    u = _unit(rng, d1)
    v = _unit(rng, d2)
    return np.outer(u, v)


def gen_arms_frobenius_ball(count: int, d1: int, d2: int, seed: int) -> ArmSet:
    """``count`` arms drawn uniformly from the unit Frobenius ball."""
    if count < 1:
        raise ContractError("count must be at least 1")
    p = d1 * d2
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, p))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.random(count) ** (1.0 / p)
    return ArmSet.from_vecs(g * radius[:, None], d1, d2)


def gen_arms_bilinear(x_count: int, z_count: int, d1: int, d2: int, seed: int) -> ArmSet:
    """Arms ``x z^T`` for unit vectors ``x`` (``x_count`` draws) and ``z``; ``x``-major order."""
    if x_count < 1 or z_count < 1:
        raise ContractError("counts must be at least 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((x_count, d1))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    Z = rng.standard_normal((z_count, d2))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    arms = np.einsum("ia,jb->ijab", X, Z).reshape(x_count * z_count, d1, d2)
    return ArmSet(arms)


def gen_arms_canonical(d1: int, d2: int) -> ArmSet:
    """One-hot arms ``reshape(e_k)`` in vec order."""
    return ArmSet.from_vecs(np.eye(d1 * d2), d1, d2)


def gen_a_hard(d: int, l: float | None = None, m: float = 1.0) -> ArmSet:
    """``reshape(l e_1)`` followed by ``reshape(e_1 + m e_i)`` for ``i = 2..d^2``.

    ``l`` defaults to ``1/sqrt(d)``.
    """
    if d < 2:
        raise ContractError("A_hard needs d >= 2")
    p = d * d
    l = 1.0 / np.sqrt(d) if l is None else float(l)
    vecs = np.zeros((p, p))
    vecs[0, 0] = l
    vecs[1:, 0] = 1.0
    vecs[np.arange(1, p), np.arange(1, p)] = m
    return ArmSet.from_vecs(vecs, d, d)


# -- lower-bound instance ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class LowerBoundInstance:
    d: int
    r: int
    eps: float
    r_max: float
    C: float
    theta: np.ndarray
    theta_alt: np.ndarray
    Z: np.ndarray
    Z_alt: np.ndarray
    arm_set: ArmSet
    h_count: int
    s_count: int
    seed: int

    @property
    def h_slice(self) -> slice:
        return slice(0, self.h_count)

    @property
    def s_slice(self) -> slice:
        return slice(self.h_count, self.h_count + self.s_count)

    @property
    def z_index(self) -> int:
        return self.h_count + self.s_count

    @property
    def z_alt_index(self) -> int:
        return self.h_count + self.s_count + 1


def _haar_frame(rng, n: int, k: int) -> np.ndarray:
    """``n x k`` matrix with orthonormal columns, Haar distributed."""
    if k == 0:
        return np.zeros((n, 0))
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    return q * s


def gen_lower_bound_instance(d: int, r: int, eps: float, r_max: float, C: float,
                             h_count: int, s_count: int, seed: int) -> LowerBoundInstance:
    """Hard instance built from sign arms ``H``, bordered dyads ``S`` and ``Z``, ``Z~``.

    Arm order: ``h_count`` sign arms, ``s_count`` dyads, then ``Z`` and ``Z~``.
    """
    if not 2 * r - 1 <= d - 1:
        raise ContractError(f"need 2r-1 <= d-1 (got r={r}, d={d})")
    if r < 2:
        raise ContractError(f"need r >= 2 so the support matrix is nonzero (got r={r})")
    if not r * eps <= r_max / 24:
        raise ContractError(f"need r*eps <= R_max/24 (got {r * eps} > {r_max / 24})")
    if not 0 < C <= 1.0 / (10 * d):
        raise ContractError(f"need 0 < C <= 1/(10d) (got C={C}, 1/(10d)={1.0 / (10 * d)})")
    if eps <= 0 or r_max <= 0:
        raise ContractError("eps and R_max must be positive")
    if h_count < 0 or s_count < 0:
        raise ContractError("arm counts must be nonnegative")

    rng = np.random.default_rng(seed)
    scale = np.sqrt(2.0 * C)
    H = []
    tries = 0
    max_tries = 100 * max(h_count, 1)
    while len(H) < h_count:
        if tries >= max_tries:
            raise ContractError(f"operator-norm filter ||X||_op <= 1 accepted only {len(H)} of {tries} sign arms")
        batch = min(max_tries - tries, 2 * (h_count - len(H)) + 8)
        X = scale * rng.choice([-1.0, 1.0], size=(batch, d, d))
        X[:, d - 1, d - 1] = 0.5
        tries += batch
        ok = np.linalg.norm(X, ord=2, axis=(1, 2)) <= 1.0
        H.extend(X[ok][: h_count - len(H)])

    S = np.zeros((s_count, d, d))
    for k in range(s_count):
        U = _haar_frame(rng, d - 1, r - 1)
        V = _haar_frame(rng, d - 1, r - 1)
        S[k, : d - 1, : d - 1] = U @ V.T

    theta = np.zeros((d, d))
    theta[np.arange(r - 1), np.arange(r - 1)] = eps
    theta[d - 1, d - 1] = -r_max / 2
    Z = np.zeros((d, d))
    Z[np.arange(r - 1), np.arange(r - 1)] = 1.0
    Z_alt = np.zeros((d, d))
    U = _haar_frame(rng, d - r, r - 1)
    V = _haar_frame(rng, d - r, r - 1)
    Z_alt[r - 1: d - 1, r - 1: d - 1] = U @ V.T
    theta_alt = theta + 2 * eps * Z_alt

    arms = np.concatenate([np.array(H).reshape(h_count, d, d), S, Z[None], Z_alt[None]])
    return LowerBoundInstance(d=d, r=r, eps=eps, r_max=r_max, C=C, theta=theta, theta_alt=theta_alt,
                              Z=Z, Z_alt=Z_alt, arm_set=ArmSet(arms), h_count=h_count,
                              s_count=s_count, seed=seed)


def lower_bound_report(inst: LowerBoundInstance, tol: float = 1e-12) -> list[tuple[str, float, float, bool]]:
    """Enumerate the construction's identities; rows are ``(check, value, target, ok)``."""
    V = inst.arm_set.vecs
    rew = V @ vec(inst.theta)
    rew_alt = V @ vec(inst.theta_alt)
    r, eps, R = inst.r, inst.eps, inst.r_max
    rows = []
    best = float(rew.max())
    rows.append(("max reward under theta = (r-1)eps", best, (r - 1) * eps, abs(best - (r - 1) * eps) <= 1e-10))
    z_ok = bool(abs(rew[inst.z_index] - best) <= 1e-10)
    rows.append(("argmax under theta is Z", float(rew[inst.z_index]), best, z_ok))
    best_alt = float(rew_alt.max())
    rows.append(("max reward under theta~ = 2(r-1)eps", best_alt, 2 * (r - 1) * eps,
                 abs(best_alt - 2 * (r - 1) * eps) <= 1e-10))
    rows.append(("argmax under theta~ is Z~", float(rew_alt[inst.z_alt_index]), best_alt,
                 bool(abs(rew_alt[inst.z_alt_index] - best_alt) <= 1e-10)))
    h_max = float(rew[inst.h_slice].max()) if inst.h_count else -np.inf
    rows.append(("H rewards <= -R_max/8", h_max, -R / 8, h_max <= -R / 8 + tol))
    nuc = nuclear_norm(inst.theta)
    rows.append(("||theta||_* = R_max/2 + (r-1)eps", nuc, R / 2 + (r - 1) * eps,
                 abs(nuc - (R / 2 + (r - 1) * eps)) <= 1e-10 and nuc <= R))
    nuc_alt = nuclear_norm(inst.theta_alt)
    rows.append(("||theta~||_* = R_max/2 + 3(r-1)eps", nuc_alt, R / 2 + 3 * (r - 1) * eps,
                 abs(nuc_alt - (R / 2 + 3 * (r - 1) * eps)) <= 1e-10 and nuc_alt <= R))
    max_op = float(np.linalg.norm(inst.arm_set.arms, ord=2, axis=(1, 2)).max())
    rows.append(("all arms ||A||_op <= 1", max_op, 1.0, max_op <= 1.0 + tol))
    return rows


# -- serialization ----------------------------------------------------------

def save_environment(env: Environment, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "theta.csv", env.theta, delimiter=",", fmt="%.17g")
    save_arm_set(env.arm_set, directory / "arms.csv")
    meta = {"sigma": env.sigma, "rank": env.rank, "seed": env.seed, "noise_kind": env.noise_kind,
            "generator": env.generator, "params": env.params}
    (directory / "env.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory


def load_environment(directory) -> Environment:
    directory = Path(directory)
    arm_set = load_arm_set(directory / "arms.csv")
    theta = np.loadtxt(directory / "theta.csv", delimiter=",", ndmin=2)
    meta = json.loads((directory / "env.json").read_text())
    return Environment(theta=theta.reshape(arm_set.d1, arm_set.d2), arm_set=arm_set,
                       sigma=float(meta["sigma"]), rank=meta.get("rank"), seed=int(meta.get("seed", 0)),
                       noise_kind=meta.get("noise_kind", "GAUSSIAN"),
                       generator=meta.get("generator", "custom"), params=meta.get("params", {}))


__all__ = [
    "Environment", "LowerBoundInstance", "pull", "pull_many", "gen_theta_rank_one",
    "gen_arms_frobenius_ball", "gen_arms_bilinear", "gen_arms_canonical", "gen_a_hard",
    "gen_lower_bound_instance", "lower_bound_report", "save_environment", "load_environment",
]

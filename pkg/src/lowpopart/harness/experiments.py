"""Seeded recovery and bandit experiments with aggregation and CSV output."""
from __future__ import annotations

import csv
import hashlib
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import algos
from ..design import ArmSet, Criterion, Design, optimize_design
from ..envs import (Environment, gen_a_hard, gen_arms_bilinear, gen_arms_canonical, gen_arms_frobenius_ball,
                    gen_theta_rank_one)
from ..estimators import (EstimatorConfig, SampleSizeWarning, TraceDataset, lowpopart, nuclear_norm_pls,
                          warm_lowpopart)
from ..matcore import nuclear_norm
from .config import ExperimentSpec
from .seeds import derive_seed, instance_seed, run_seed

METHOD_LABELS = {"bmin": "Bmin", "emin": "Cmin", "lpa": "LPA", "wlpa": "WLPA", "nuc": "nuc"}
ALGO_LABELS = {"lpa-etc": "LPA-ETC", "nuc-etc": "Nuc-ETC", "lpa-estr": "LPA-ESTR", "oful": "OFUL"}


def method_label(method: str) -> str:
    if ":" in method:
        kind, est = method.split(":")
        return f"{METHOD_LABELS[kind]}-{METHOD_LABELS[est]}"
    return ALGO_LABELS.get(method, method)


@dataclass
class AggregateResult:
    """Per-(x, method) mean and std (``n - 1`` denominator) with the raw values kept."""

    x_name: str
    raw: dict = field(default_factory=dict)

    def add(self, x, method: str, value: float) -> None:
        self.raw.setdefault((x, method), []).append(float(value))

    def rows(self):
        for (x, method), vals in self.raw.items():
            v = np.asarray(vals)
            std = float(v.std(ddof=1)) if v.size > 1 else 0.0
            yield x, method, float(v.mean()), std

    def mean(self, x, method: str) -> float:
        return float(np.mean(self.raw[(x, method)]))

    def std(self, x, method: str) -> float:
        v = np.asarray(self.raw[(x, method)])
        return float(v.std(ddof=1)) if v.size > 1 else 0.0


def _atomic_write(path: Path, rows, header) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return repr(float(x))


# -- instances --------------------------------------------------------------

def make_arm_set(spec: ExperimentSpec, seed: int) -> ArmSet:
    if spec.generator == "frobenius":
        return gen_arms_frobenius_ball(spec.arm_count, spec.d1, spec.d2, seed)
    if spec.generator == "bilinear":
        return gen_arms_bilinear(spec.x_count, spec.z_count, spec.d1, spec.d2, seed)
    if spec.generator == "a_hard":
        return gen_a_hard(spec.d1, spec.a_hard_l, spec.a_hard_m)
    return gen_arms_canonical(spec.d1, spec.d2)


def make_environment(spec: ExperimentSpec, rep: int) -> Environment:
    """Arm set and rank-one reward matrix for one repetition (shared by all methods)."""
    inst = instance_seed(spec.seed, rep)
    arms = make_arm_set(spec, derive_seed(inst, "arms"))
    theta = gen_theta_rank_one(spec.d1, spec.d2, derive_seed(inst, "theta"))
    return Environment(theta=theta, arm_set=arms, sigma=spec.sigma, rank=1, seed=inst, generator=spec.generator)


class DesignCache:
    """Optimized designs keyed by arm-set content and criterion."""

    def __init__(self):
        self._store = {}

    def get(self, arm_set: ArmSet, kind) -> Design:
        kind = Criterion.parse(kind)
        key = (hashlib.blake2b(arm_set.arms.tobytes(), digest_size=16).hexdigest(), arm_set.arms.shape, kind)
        if key not in self._store:
            self._store[key] = optimize_design(arm_set, kind)
        return self._store[key]


# -- recovery ---------------------------------------------------------------

def recover_cell(spec: ExperimentSpec, env: Environment, design: Design, estimator: str, n0: int,
                 seed: int) -> float:
    """Nuclear-norm error of one estimate built from ``n0`` design samples."""
    rng = np.random.default_rng(seed)
    idx = design.sample(rng.random(n0))
    y = env.means[idx] + env.sigma * rng.standard_normal(n0)
    ds = TraceDataset(env.arm_set.arms[idx], y)
    arm_set = env.arm_set
    max_op = float(np.linalg.norm(arm_set.arms, ord=2, axis=(1, 2)).max())
    if estimator == "lpa":
        cfg = EstimatorConfig(sigma=spec.sigma, R0=spec.s_star * max_op, delta=spec.delta)
        est = lowpopart(ds, design.Q, cfg)
    elif estimator == "wlpa":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SampleSizeWarning)
            est = warm_lowpopart(ds, design.Q, spec.sigma, spec.s_star * max_op, spec.delta, rank=spec.rank)
    else:
        lam = algos.nuc_lambda(spec.sigma, n0, arm_set.d1 + arm_set.d2, spec.delta)
        est = nuclear_norm_pls(ds, lam)
    return nuclear_norm(est.theta - env.theta)


def run_recover(spec: ExperimentSpec, out: str | Path | None = None, progress=None) -> AggregateResult:
    """Error-vs-sample-size curves; writes ``raw.csv`` and ``aggregate.csv`` under ``out``."""
    cache = DesignCache()
    result = AggregateResult("n0")
    raw_rows = []
    for rep in range(spec.reps):
        env = make_environment(spec, rep)
        for gi, n0 in enumerate(spec.grid):
            for mi, method in enumerate(spec.methods):
                kind, est = method.split(":")
                seed = run_seed(spec.seed, gi, mi, rep)
                err = recover_cell(spec, env, cache.get(env.arm_set, kind), est, int(n0), seed)
                label = method_label(method)
                result.add(int(n0), label, err)
                raw_rows.append([int(n0), label, rep, seed, _fmt(err)])
                if progress:
                    progress(f"n0={n0} {label} rep={rep} err={err:.4g}")
    if out is not None:
        out = Path(out)
        _atomic_write(out / "raw.csv", raw_rows, ["n0", "method", "rep", "seed", "err"])
        rows = sorted(result.rows(), key=lambda r: (r[0], spec_order(spec, r[1])))
        _atomic_write(out / "aggregate.csv", [[x, m, _fmt(mu), _fmt(sd)] for x, m, mu, sd in rows],
                      ["n0", "method", "mean_err", "std_err"])
    return result


def spec_order(spec: ExperimentSpec, label: str) -> int:
    labels = [method_label(m) for m in spec.methods]
    return labels.index(label) if label in labels else len(labels)


# -- bandits ----------------------------------------------------------------

def bandit_run(spec: ExperimentSpec, env: Environment, algo: str, T: int, seed: int,
               cache: DesignCache) -> algos.RunTrace:
    if algo == "lpa-etc":
        cfg = algos.EtcConfig(T=T, sigma=spec.sigma, delta=spec.delta, S_star=spec.s_star, r=spec.rank)
        return algos.run_lpa_etc(env, cfg, seed, cache.get(env.arm_set, "bmin"))
    if algo == "nuc-etc":
        cfg = algos.EtcConfig(T=T, sigma=spec.sigma, delta=spec.delta, S_star=spec.s_star, r=spec.rank)
        return algos.run_nuc_etc(env, cfg, seed, cache.get(env.arm_set, "emin"))
    if algo == "lpa-estr":
        cfg = algos.EstrConfig(T=T, sigma=spec.sigma, delta=spec.delta, S_star=spec.s_star, S_r=spec.s_r,
                               r=spec.rank)
        return algos.run_lpa_estr(env, cfg, seed, cache.get(env.arm_set, "bmin"))
    cfg = algos.OfulConfig(T=T, sigma=spec.sigma, delta=spec.delta, S=spec.s_star)
    return algos.run_oful(env, cfg, seed)


@dataclass
class BanditResult:
    T: int
    curves: dict = field(default_factory=dict)  # label -> list of cumulative-regret arrays
    n0: dict = field(default_factory=dict)

    def final(self, label: str) -> np.ndarray:
        return np.array([c[-1] for c in self.curves[label]])

    def mean_curve(self, label: str) -> np.ndarray:
        return np.mean(self.curves[label], axis=0)


def run_bandit(spec: ExperimentSpec, out: str | Path | None = None, progress=None) -> BanditResult:
    """Cumulative-regret curves; writes traces, ``finals.csv`` and ``aggregate.csv`` under ``out``."""
    T = int(spec.grid[0])
    cache = DesignCache()
    result = BanditResult(T=T)
    finals = []
    for rep in range(spec.reps):
        env = make_environment(spec, rep)
        for mi, algo in enumerate(spec.methods):
            seed = run_seed(spec.seed, 0, mi, rep)
            trace = bandit_run(spec, env, algo, T, seed, cache)
            label = method_label(algo)
            result.curves.setdefault(label, []).append(trace.cumulative_regret)
            result.n0.setdefault(label, []).append(trace.n0)
            finals.append([label, rep, seed, trace.n0, _fmt(trace.final_regret)])
            if out is not None:
                tdir = Path(out) / "traces"
                tdir.mkdir(parents=True, exist_ok=True)
                algos.save_trace(trace, tdir / f"{algo}_rep{rep:03d}.csv", stride=spec.stride)
            if progress:
                progress(f"{label} rep={rep} n0={trace.n0} regret={trace.final_regret:.4g}")
    if out is not None:
        out = Path(out)
        _atomic_write(out / "finals.csv", finals, ["algo", "rep", "seed", "n0", "final_regret"])
        rows = []
        idx = algos.thinned_rows(T, spec.stride)
        for algo in spec.methods:
            label = method_label(algo)
            C = np.array(result.curves[label])
            mu = C.mean(axis=0)
            sd = C.std(axis=0, ddof=1) if C.shape[0] > 1 else np.zeros(T)
            rows.extend([i + 1, label, _fmt(mu[i]), _fmt(sd[i])] for i in idx)
        _atomic_write(out / "aggregate.csv", rows, ["t", "algo", "mean_cumreg", "std_cumreg"])
    return result

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lowpopart.design import covariance
from lowpopart.envs import (Environment, gen_a_hard, gen_arms_bilinear, gen_arms_canonical, gen_arms_frobenius_ball,
                            gen_lower_bound_instance, gen_theta_rank_one, load_environment, lower_bound_report, pull,
                            pull_many, save_environment)
from lowpopart.errors import ContractError
from lowpopart.matcore import norms, numerical_rank, vec


def ks_distance(a, b):
    grid = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), grid, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), grid, side="right") / len(b)
    return np.abs(fa - fb).max()


# -- generators -------------------------------------------------------------

@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_theta_rank_one(d1, d2, seed):
    theta = gen_theta_rank_one(d1, d2, seed)
    s = np.linalg.svd(theta, compute_uv=False)
    assert abs(np.linalg.norm(theta) - 1) <= 1e-12
    assert len(s) == 1 or s[1] < 1e-10
    assert np.array_equal(theta, gen_theta_rank_one(d1, d2, seed))


def test_theta_seeds_differ():
    assert not np.allclose(gen_theta_rank_one(3, 3, 0), gen_theta_rank_one(3, 3, 1))


def test_frobenius_ball_basic():
    arms = gen_arms_frobenius_ball(150, 3, 3, seed=0)
    assert len(arms) == 150 and arms.arms.shape == (150, 3, 3)
    assert np.all(np.linalg.norm(arms.arms, axis=(1, 2)) <= 1)
    assert np.array_equal(arms.arms, gen_arms_frobenius_ball(150, 3, 3, seed=0).arms)
    with pytest.raises(ContractError):
        gen_arms_frobenius_ball(0, 2, 2, seed=0)


def test_frobenius_ball_radius_law_against_rejection_sampler():
    n = 10_000
    arms = gen_arms_frobenius_ball(n, 2, 2, seed=1)
    ours = np.linalg.norm(arms.arms, axis=(1, 2))
    # independent sampler: uniform points in the cube, keep those inside the ball
    rng = np.random.default_rng(2)
    ref = []
    while len(ref) < n:
        x = rng.uniform(-1, 1, size=(4 * n, 4))
        r = np.linalg.norm(x, axis=1)
        ref.extend(r[r <= 1])
    assert ks_distance(ours, np.array(ref[:n])) < 0.05
    # directions are isotropic: second moment of each coordinate is E r^2 / p
    v = arms.vecs
    assert np.allclose((v ** 2).mean(axis=0), (ours ** 2).mean() / 4, atol=0.01)


def test_bilinear_arms():
    arms = gen_arms_bilinear(24, 24, 6, 6, seed=0)
    assert len(arms) == 576
    ops = np.linalg.norm(arms.arms, ord=2, axis=(1, 2))
    assert np.allclose(ops, 1, atol=1e-12)
    assert all(numerical_rank(a) == 1 for a in arms.arms[:50])
    small = gen_arms_bilinear(2, 3, 2, 4, seed=1)
    # x-major order: arm k uses x_{k // z_count}
    u0 = np.linalg.svd(small.arms[0])[0][:, 0]
    u2 = np.linalg.svd(small.arms[2])[0][:, 0]
    u3 = np.linalg.svd(small.arms[3])[0][:, 0]
    assert abs(abs(u0 @ u2) - 1) < 1e-12 and abs(abs(u0 @ u3) - 1) > 1e-6


def test_canonical_arms():
    arms = gen_arms_canonical(2, 2)
    assert len(arms) == 4 and arms.spanning
    assert np.allclose(covariance(arms, np.full(4, 0.25)), np.eye(4) / 4)
    for a in arms.arms:
        assert np.allclose(norms(a), (1, 1, 1))
    assert np.array_equal(arms.vecs, np.eye(4))


def test_a_hard_structure():
    arms = gen_a_hard(2)
    assert len(arms) == 4 and arms.spanning
    assert np.allclose(arms.arms[0], [[1 / np.sqrt(2), 0], [0, 0]])
    for d in (2, 3, 4):
        V = gen_a_hard(d).vecs
        assert V.shape == (d * d, d * d)
        assert V[0, 0] == pytest.approx(1 / np.sqrt(d)) and not V[0, 1:].any()
        assert np.all(V[1:, 0] == 1) and np.array_equal(V[1:, 1:], np.eye(d * d - 1))
    with pytest.raises(ContractError):
        gen_a_hard(1)


# -- lower-bound instance ---------------------------------------------------

def test_lower_bound_small_example():
    inst = gen_lower_bound_instance(4, 2, 0.1, 6.0, 1 / 40, h_count=300, s_count=50, seed=0)
    assert np.allclose(inst.theta, np.diag([0.1, 0, 0, -3]))
    assert np.allclose(inst.Z, np.diag([1.0, 0, 0, 0]))
    assert np.sum(inst.Z * inst.theta) == pytest.approx(0.1)
    assert np.sum(inst.Z_alt * inst.theta_alt) == pytest.approx(0.2)
    ops = np.linalg.norm(inst.arm_set.arms, ord=2, axis=(1, 2))
    assert ops.max() <= 1 + 1e-12
    assert len(inst.arm_set) == 352


@pytest.mark.parametrize("seed", range(5))
def test_lower_bound_claims_by_enumeration(seed):
    inst = gen_lower_bound_instance(8, 2, 0.1, 6.0, 1 / 80, h_count=1000, s_count=100, seed=seed)
    rew = inst.arm_set.vecs @ vec(inst.theta)
    assert rew.max() == pytest.approx((inst.r - 1) * inst.eps, abs=1e-12)
    assert np.argmax(rew) == inst.z_index
    assert np.all(rew[inst.h_slice] <= -inst.r_max / 8 + 1e-12)
    rew_alt = inst.arm_set.vecs @ vec(inst.theta_alt)
    assert rew_alt[inst.z_alt_index] == pytest.approx(rew_alt.max(), abs=1e-12)
    assert all(row[3] for row in lower_bound_report(inst))


def test_lower_bound_h_arms_well_conditioned():
    lams = []
    for seed in range(20):
        inst = gen_lower_bound_instance(8, 2, 0.1, 6.0, 1 / 80, h_count=2000, s_count=0, seed=seed)
        H = inst.arm_set.vecs[inst.h_slice]
        lams.append(np.linalg.eigvalsh(H.T @ H / len(H))[0])
    assert min(lams) >= 0.7 / 80


@pytest.mark.parametrize("kwargs,needle", [
    (dict(d=4, r=3), "2r-1 <= d-1"),
    (dict(r=1), "r >= 2"),
    (dict(eps=1.0), "r*eps <= R_max/24"),
    (dict(C=0.5), "C <= 1/(10d)"),
])
def test_lower_bound_preconditions(kwargs, needle):
    base = dict(d=8, r=2, eps=0.1, r_max=6.0, C=1 / 80, h_count=10, s_count=10, seed=0)
    base.update(kwargs)
    with pytest.raises(ContractError, match=needle.replace("*", r"\*").replace("(", r"\(").replace(")", r"\)")):
        gen_lower_bound_instance(**base)


def test_lower_bound_deterministic():
    a = gen_lower_bound_instance(6, 2, 0.1, 6.0, 1 / 60, h_count=50, s_count=20, seed=3)
    b = gen_lower_bound_instance(6, 2, 0.1, 6.0, 1 / 60, h_count=50, s_count=20, seed=3)
    assert np.array_equal(a.arm_set.arms, b.arm_set.arms)


# -- environment and pulls --------------------------------------------------

def make_env(sigma=1.0, seed=0):
    arms = gen_arms_frobenius_ball(10, 2, 3, seed=seed)
    return Environment(gen_theta_rank_one(2, 3, seed), arms, sigma=sigma)


def test_environment_means_and_rank():
    env = make_env()
    ref = np.array([np.sum(a * env.theta) for a in env.arm_set.arms])
    assert np.allclose(env.means, ref)
    assert env.rank == 1 and env.best_mean == pytest.approx(ref.max()) and env.gaps.min() == 0
    with pytest.raises(ContractError):
        Environment(np.eye(2), env.arm_set)


def test_pull_noiseless_and_range():
    env = make_env(sigma=0.0)
    rng = np.random.default_rng(0)
    for i in range(len(env.arm_set)):
        assert pull(env, i, rng) == env.means[i]
    with pytest.raises(IndexError):
        pull(env, len(env.arm_set), rng)


def test_pull_monte_carlo_mean():
    env = make_env(sigma=1.0)
    rng = np.random.default_rng(1)
    y = pull_many(env, np.full(100_000, 3), rng)
    assert abs(y.mean() - env.means[3]) <= 0.02


def test_pull_deterministic_and_batch_consistent():
    env = make_env()
    idx = np.arange(20) % 10
    a = [pull(env, i, np.random.default_rng(5)) for i in idx[:1]]
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    single = np.array([pull(env, i, r1) for i in idx])
    batch = pull_many(env, idx, r2)
    assert np.allclose(single, batch, rtol=0, atol=1e-15)
    assert a == [pull(env, 0, np.random.default_rng(5))]


def test_environment_roundtrip(tmp_path):
    env = make_env(sigma=0.5, seed=4)
    save_environment(env, tmp_path / "env")
    back = load_environment(tmp_path / "env")
    assert np.array_equal(back.theta, env.theta) and np.array_equal(back.arm_set.arms, env.arm_set.arms)
    assert back.sigma == 0.5 and back.rank == env.rank
    assert sorted(p.name for p in (tmp_path / "env").iterdir()) == ["arms.csv", "env.json", "theta.csv"]

"""Independent reference computations used by the tests.

Everything here is written from the definitions with plain loops or a
generic convex solver, deliberately avoiding the package's own helpers.
"""
import numpy as np


def vec_loop(M):
    d1, d2 = M.shape
    return np.array([M[i, j] for j in range(d2) for i in range(d1)])


def b_loop(Q, d1, d2):
    """B(Q) with explicit index sets for the column and row blocks."""
    Qi = np.linalg.inv(Q)
    col = np.zeros((d1, d1))
    for i in range(d2):
        idx = [i * d1 + a for a in range(d1)]
        col += Qi[np.ix_(idx, idx)]
    row = np.zeros((d2, d2))
    for j in range(d1):
        idx = [j + d1 * l for l in range(d2)]
        row += Qi[np.ix_(idx, idx)]
    return max(np.linalg.eigvalsh(col)[-1], np.linalg.eigvalsh(row)[-1])


def sdp_b_min(V, d1, d2):
    """Exact ``min_pi B(Q(pi))`` via Schur complements (cvxpy)."""
    import cvxpy as cp

    n, p = V.shape
    w = cp.Variable(n, nonneg=True)
    t = cp.Variable()
    Q = sum(w[j] * np.outer(V[j], V[j]) for j in range(n))
    I = np.eye(p)
    cons = [cp.sum(w) == 1]
    Xc = [cp.Variable((d1, d1), symmetric=True) for _ in range(d2)]
    Xr = [cp.Variable((d2, d2), symmetric=True) for _ in range(d1)]
    for i in range(d2):
        S = I[i * d1:(i + 1) * d1]
        cons.append(cp.bmat([[Xc[i], S], [S.T, Q]]) >> 0)
    for j in range(d1):
        S = I[j::d1]
        cons.append(cp.bmat([[Xr[j], S], [S.T, Q]]) >> 0)
    cons += [sum(Xc) << t * np.eye(d1), sum(Xr) << t * np.eye(d2)]
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver="CLARABEL")
    return float(prob.value)


def sdp_c_min(V):
    import cvxpy as cp

    n, p = V.shape
    w = cp.Variable(n, nonneg=True)
    Q = sum(w[j] * np.outer(V[j], V[j]) for j in range(n))
    prob = cp.Problem(cp.Maximize(cp.lambda_min(Q)), [cp.sum(w) == 1])
    prob.solve(solver="CLARABEL")
    return float(prob.value)


def a_hard_grid_b(d, steps=400):
    """Grid search over the symmetric slice pi_1 = a, pi_{d j + 1} = b (j = 1..d-1), others c."""
    p = d * d
    V = np.zeros((p, p))
    V[0, 0] = 1 / np.sqrt(d)
    V[1:, 0] = 1.0
    V[np.arange(1, p), np.arange(1, p)] = 1.0
    b_idx = [d * j for j in range(1, d)]  # 0-based positions of pi_{d j + 1}
    c_idx = [k for k in range(1, p) if k not in b_idx]
    best = np.inf
    grid = np.linspace(1e-4, 1 - 1e-4, steps)
    for a in grid:
        for b in grid:
            rest = 1 - a - (d - 1) * b
            if rest <= 1e-6:
                break
            w = np.empty(p)
            w[0], w[b_idx], w[c_idx] = a, b, rest / len(c_idx)
            Q = (V.T * w) @ V
            best = min(best, b_loop(Q, d, d))
    return best


def ols(V, y):
    return np.linalg.lstsq(V, y, rcond=None)[0]

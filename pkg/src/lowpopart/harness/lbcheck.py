"""Numerical check of the lower-bound instance identities."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..envs import gen_lower_bound_instance, lower_bound_report

WELL_CONDITIONED_SLACK = 0.3


def lbcheck(d: int = 8, r: int = 2, eps: float = 0.1, r_max: float = 6.0, C: float | None = None,
            h_count: int = 2000, s_count: int = 200, seed: int = 0, corrupt: bool = False):
    """Build the instance and return ``(instance, rows)``.

    Each row is ``(check, value, target, ok)``. With ``corrupt=True`` the sign
    of ``eps`` in the null hypothesis is flipped as a negative control.
    """
    C = 1.0 / (10 * d) if C is None else C
    inst = gen_lower_bound_instance(d, r, eps, r_max, C, h_count, s_count, seed)
    if corrupt:
        theta = inst.theta.copy()
        theta[np.arange(r - 1), np.arange(r - 1)] = -eps
        inst = replace(inst, theta=theta, theta_alt=theta + 2 * eps * inst.Z_alt)
    rows = lower_bound_report(inst)
    if h_count:
        V = inst.arm_set.vecs[inst.h_slice]
        lam = float(np.linalg.eigvalsh(V.T @ V / h_count)[0])
        target = C * (1 - WELL_CONDITIONED_SLACK)
        rows.append(("uniform design on H: lambda_min(Q) >= 0.7 C", lam, target, lam >= target))
    return inst, rows


def format_table(rows) -> str:
    width = max(len(r[0]) for r in rows)
    lines = [f"{'check':<{width}}  {'value':>12}  {'target':>12}  result"]
    for name, value, target, ok in rows:
        lines.append(f"{name:<{width}}  {value:>12.6g}  {target:>12.6g}  {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines)

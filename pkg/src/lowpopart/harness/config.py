"""Experiment specifications, the flat ``key = value`` config format and built-in profiles.

Config schema (one ``key = value`` per line, ``#`` starts a comment,
lists are comma separated)::

    name        experiment label
    kind        recover | bandit
    generator   frobenius | a_hard | bilinear | canonical
    d1, d2      matrix dimensions
    arm_count   number of arms (frobenius)
    x_count     left factors, z_count right factors (bilinear)
    a_hard_l    optional first-arm scale for a_hard (default 1/sqrt(d))
    a_hard_m    optional second-coordinate scale for a_hard (default 1)
    methods     recover: design:estimator pairs, e.g. bmin:lpa, emin:nuc
                bandit: algorithms among lpa-etc, nuc-etc, lpa-estr, oful
    grid        recover: sample sizes n0; bandit: a single horizon T
    reps        repetitions per grid point
    seed        base seed
    sigma       noise level (also used for tuning)
    delta       failure rate
    s_star      nuclear-norm bound on the reward matrix
    s_r         smallest nonzero singular value bound (lpa-estr)
    rank        rank of the reward matrix
    stride      trace thinning stride for bandit output
    out         output directory
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..errors import ContractError

GENERATORS = ("frobenius", "a_hard", "bilinear", "canonical")
RECOVER_ESTIMATORS = ("lpa", "wlpa", "nuc")
DESIGN_KINDS = ("bmin", "emin")
BANDIT_ALGOS = ("lpa-etc", "nuc-etc", "lpa-estr", "oful")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    kind: str
    generator: str
    d1: int
    d2: int
    methods: tuple
    grid: tuple
    reps: int = 60
    seed: int = 0
    arm_count: int = 0
    x_count: int = 0
    z_count: int = 0
    a_hard_l: float | None = None
    a_hard_m: float = 1.0
    sigma: float = 1.0
    delta: float = 0.05
    s_star: float = 1.0
    s_r: float = 1.0
    rank: int = 1
    stride: int = 100
    out: str = "out"

    def __post_init__(self):
        if self.kind not in ("recover", "bandit"):
            raise ContractError(f"kind must be recover or bandit, got {self.kind!r}")
        if self.generator not in GENERATORS:
            raise ContractError(f"unknown generator {self.generator!r}")
        if self.reps < 1:
            raise ContractError("reps must be at least 1")
        if not self.grid:
            raise ContractError("grid must be nonempty")
        if any(int(g) < 1 for g in self.grid):
            raise ContractError("grid values must be positive")
        if not self.methods:
            raise ContractError("at least one method is required")
        for m in self.methods:
            if self.kind == "recover":
                kind, _, est = m.partition(":")
                if kind not in DESIGN_KINDS or est not in RECOVER_ESTIMATORS:
                    raise ContractError(f"recover method must be <bmin|emin>:<lpa|wlpa|nuc>, got {m!r}")
            elif m not in BANDIT_ALGOS:
                raise ContractError(f"unknown bandit algorithm {m!r}")
        if self.kind == "bandit" and len(self.grid) != 1:
            raise ContractError("bandit experiments take a single horizon")
        if self.generator == "frobenius" and self.arm_count < 1:
            raise ContractError("frobenius generator needs arm_count >= 1")
        if self.generator == "bilinear" and (self.x_count < 1 or self.z_count < 1):
            raise ContractError("bilinear generator needs x_count, z_count >= 1")
        if self.generator == "a_hard" and self.d1 != self.d2:
            raise ContractError("a_hard needs square matrices")


_INT = {"d1", "d2", "reps", "seed", "arm_count", "x_count", "z_count", "rank", "stride"}
_FLOAT = {"sigma", "delta", "s_star", "s_r", "a_hard_m"}


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in _INT:
        return int(float(raw))
    if key in _FLOAT:
        return float(raw)
    if key == "a_hard_l":
        return None if raw.lower() in ("", "none", "default") else float(raw)
    if key == "grid":
        return tuple(int(float(x)) for x in raw.split(",") if x.strip())
    if key == "methods":
        return tuple(x.strip().lower() for x in raw.split(",") if x.strip())
    return raw


def parse_config(text: str) -> ExperimentSpec:
    known = {f.name for f in fields(ExperimentSpec)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ContractError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ContractError(f"line {lineno}: bad value for {key}: {raw!r}") from exc
    missing = {"name", "kind", "generator", "d1", "d2", "methods", "grid"} - values.keys()
    if missing:
        raise ContractError(f"config is missing keys: {', '.join(sorted(missing))}")
    return ExperimentSpec(**values)


def load_config(path) -> ExperimentSpec:
    return parse_config(Path(path).read_text())


def format_config(spec: ExperimentSpec) -> str:
    lines = []
    for k, v in asdict(spec).items():
        if isinstance(v, (tuple, list)):
            v = ",".join(str(x) for x in v)
        elif v is None:
            v = "none"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# -- profiles ---------------------------------------------------------------

RECOVER_METHODS = ("bmin:lpa", "bmin:nuc", "emin:lpa", "emin:nuc")

_DESK = {
    "recover-frobenius": ExperimentSpec(name="recover-frobenius", kind="recover", generator="frobenius", d1=3, d2=3,
                                arm_count=150, methods=RECOVER_METHODS, grid=(1000, 2500, 5000, 10000), reps=12),
    "recover-ahard": ExperimentSpec(name="recover-ahard", kind="recover", generator="a_hard", d1=3, d2=3,
                                 methods=RECOVER_METHODS, grid=(10000, 50000, 100000), reps=12),
    "bandit-etc": ExperimentSpec(name="bandit-etc", kind="bandit", generator="frobenius", d1=5, d2=5,
                                arm_count=100, methods=("lpa-etc", "nuc-etc"), grid=(20000,), reps=12),
    "bandit-estr": ExperimentSpec(name="bandit-estr", kind="bandit", generator="bilinear", d1=6, d2=6,
                                 x_count=24, z_count=24, methods=("lpa-estr", "oful"), grid=(20000,), reps=12),
}

_FULL = {
    "recover-frobenius": dict(grid=tuple(range(1000, 10001, 1000)), reps=60),
    "recover-ahard": dict(grid=tuple(range(10000, 100001, 10000)), reps=60),
    "bandit-etc": dict(grid=(100000,), reps=60),
    "bandit-estr": dict(grid=(100000,), reps=60),
}

PROFILES = tuple(_DESK)


def profile(name: str, full: bool = False) -> ExperimentSpec:
    """Built-in experiment; desk scale by default, full scale with ``full=True``."""
    if name not in _DESK:
        raise ContractError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    spec = _DESK[name]
    return replace(spec, **_FULL[name]) if full else spec

"""Scoring an error source by reserve cost and real-time security.

For every test day the reserve OPF is solved on the DA load with the candidate
error; its DA energy cost adds to ``c_total``. The plain DC-OPF on the realised
RT load then gives the dispatch the system actually needed. A day counts as
upward-secure when every unit's required deviation ``R = P_rt - P_da`` is
covered by its upward reserve, and downward-secure when ``R >= -r_dn``.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataprep import DaySample, ErrorField, ErrorKind, SignMode, error_mw
from .errors import ConfigError, DimensionMismatch, InfeasibleDispatch, InfeasibleReserve, \
    ValidationError
from .grid import GridModel
from .opf import solve_dcopf, solve_reserve_opf
from .parallel import pmap

MW_TOL = 1e-5  # slack on reserve coverage, well above solver round-off


class DownwardTest(str, enum.Enum):
    SIGNED = "signed"      # R >= -r_dn
    VERBATIM = "verbatim"  # R >= r_dn, sign taken literally


@dataclass(frozen=True)
class RobustLevel:
    r: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValidationError(f"robust level must be nonnegative, got {self.r}")


@dataclass
class EvalMetrics:
    c_total: float
    i_up: float
    i_dn: float
    n_infeasible: int
    n_samples: int = 0
    sign_mode: str = SignMode.ROUND_TRIP.value
    case_id: str = ""

    def record(self) -> dict:
        return {"case_id": self.case_id, "c_total": self.c_total, "i_up": self.i_up,
                "i_dn": self.i_dn, "n_infeasible": self.n_infeasible,
                "n_samples": self.n_samples, "sign_mode": self.sign_mode}

    def to_json(self) -> str:
        return json.dumps(self.record(), sort_keys=True)


@dataclass
class DayResult:
    date: str
    feasible: bool
    cost: float
    up_ok: bool
    dn_ok: bool
    max_shortfall_up: float
    max_shortfall_dn: float


def robust_error(sample: DaySample, r) -> ErrorField:
    r = r if isinstance(r, RobustLevel) else RobustLevel(float(r))
    return ErrorField(r.r * sample.da_real, ErrorKind.PHYSICAL_MW)


def _as_mw(err, sample: DaySample, sign: SignMode) -> ErrorField:
    if not isinstance(err, ErrorField):
        raise ValidationError("errors must be ErrorField instances")
    if err.values.shape != sample.da_real.shape:
        raise DimensionMismatch(f"error field {err.values.shape} does not match day {sample.da_real.shape}")
    if err.kind is ErrorKind.NORMALIZED:
        return error_mw(err, sample, sign=sign)
    return err


def evaluate_day(sample: DaySample, err: ErrorField, grid: GridModel,
                 downward: DownwardTest = DownwardTest.SIGNED,
                 formulation: str = "physical", allocation: str = "tiebreak") -> DayResult:
    try:
        res = solve_reserve_opf(grid, sample.da_real, err.values, formulation=formulation,
                                allocation=allocation)
        rt = solve_dcopf(grid, sample.rt_real)
    except (InfeasibleReserve, InfeasibleDispatch):
        return DayResult(sample.date.isoformat(), False, float("nan"), False, False,
                         float("nan"), float("nan"))
    R = rt.p_star - res.p_da
    short_up = float(np.max(R - res.r_up))
    if downward is DownwardTest.SIGNED:
        short_dn = float(np.max(-res.r_dn - R))
    else:
        short_dn = float(np.max(res.r_dn - R))
    return DayResult(sample.date.isoformat(), True, res.cost, short_up <= MW_TOL,
                     short_dn <= MW_TOL, short_up, short_dn)


def evaluate(test_set, errors, grid: GridModel, sign: SignMode = SignMode.ROUND_TRIP,
             downward: DownwardTest = DownwardTest.SIGNED, formulation: str = "physical",
             case_id: str = "", details: list | None = None,
             allocation: str = "tiebreak") -> EvalMetrics:
    """Cost and security levels of ``errors`` (one per test day).

    Normalised errors are converted to MW with ``sign`` first. Infeasible days
    are counted in ``n_infeasible`` and left out of every other metric. If
    ``details`` is a list, per-day ``DayResult`` rows are appended to it.
    """
    test_set, errors = list(test_set), list(errors)
    if len(errors) != len(test_set):
        raise DimensionMismatch(f"{len(errors)} error fields for {len(test_set)} test days")
    if not test_set:
        raise ValidationError("test set is empty")
    sign, downward = SignMode(sign), DownwardTest(downward)
    mw = [_as_mw(e, s, sign) for s, e in zip(test_set, errors)]
    rows = pmap(lambda a: evaluate_day(a[0], a[1], grid, downward, formulation, allocation),
                zip(test_set, mw))
    if details is not None:
        details.extend(rows)
    ok = [r for r in rows if r.feasible]
    n_ok = len(ok)
    return EvalMetrics(
        c_total=float(sum(r.cost for r in ok)),
        i_up=sum(r.up_ok for r in ok) / n_ok if n_ok else 0.0,
        i_dn=sum(r.dn_ok for r in ok) / n_ok if n_ok else 0.0,
        n_infeasible=len(rows) - n_ok,
        n_samples=len(rows),
        sign_mode=sign.value,
        case_id=case_id,
    )


# -- case tables --------------------------------------------------------

@dataclass(frozen=True)
class NoneCase:
    def case_id(self) -> str:
        return "none"

    def errors(self, test_set, sign):
        return [ErrorField(np.zeros_like(s.da_real), ErrorKind.PHYSICAL_MW) for s in test_set]


@dataclass(frozen=True)
class RobustCase:
    r: float

    def case_id(self) -> str:
        return f"robust:{self.r!r}"

    def errors(self, test_set, sign):
        return [robust_error(s, self.r) for s in test_set]


@dataclass(frozen=True)
class GeneratedCase:
    """Errors drawn from a trained generator, one per test day with that day's label."""
    g_spec: object
    theta_g: object
    k: float
    noise: object
    seed: int = 0
    tag: str = ""
    fields: tuple = field(default=(), compare=False)

    def case_id(self) -> str:
        return self.tag or f"generated:k={self.k!r}"

    def errors(self, test_set, sign):
        from .oacgan import generate
        out = []
        for j, s in enumerate(test_set):
            out.extend(generate(self.g_spec, self.theta_g, s.label, 1, self.noise,
                                [self.seed, j], s.da_real.shape))
        return out


@dataclass(frozen=True)
class FieldsCase:
    """Precomputed error fields, aligned with the test set."""
    fields: tuple
    tag: str = "fields"

    def case_id(self) -> str:
        return self.tag

    def errors(self, test_set, sign):
        return list(self.fields)


def run_case_table(test_set, grid: GridModel, cases, sign: SignMode = SignMode.ROUND_TRIP,
                   downward: DownwardTest = DownwardTest.SIGNED) -> list[EvalMetrics]:
    test_set = list(test_set)
    rows = []
    for case in cases:
        if case is None:
            case = NoneCase()
        if not hasattr(case, "errors"):
            raise ConfigError(f"unsupported case {case!r}")
        rows.append(evaluate(test_set, case.errors(test_set, sign), grid, sign, downward,
                             case_id=case.case_id()))
    return rows


TABLE_HEADER = ("case_id", "c_total", "i_up", "i_dn", "n_infeasible", "sign_mode")


def write_case_table(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for m in rows:
            w.writerow([m.case_id, repr(m.c_total), repr(m.i_up), repr(m.i_dn),
                        m.n_infeasible, m.sign_mode])


DETAIL_HEADER = tuple(DayResult.__dataclass_fields__)


def write_details(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETAIL_HEADER)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])

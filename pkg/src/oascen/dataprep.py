"""Training-data preparation: normalised DA/RT loads and forecast errors.

Per node and day the DA forecast is centred on its daily mean and divided by
its daily range; RT actuals are normalised with the *same* DA statistics.
The normalised forecast error is ``da_norm - rt_norm``.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataIOError, DegenerateDay, InsufficientData, ParseError, ValidationError

log = logging.getLogger(__name__)

N_LABELS = 4


class SignMode(str, enum.Enum):
    """How a normalised error is mapped back to an RT load.

    ``PAPER_PLUS``: ``d = DA + eps * range`` (additive form).
    ``ROUND_TRIP``: ``d = DA - eps * range``, the exact inverse of
    ``eps = da_norm - rt_norm``.
    """

    PAPER_PLUS = "paper_plus"
    ROUND_TRIP = "round_trip"

    @property
    def direction(self) -> float:
        """``d(load)/d(eps)`` per MW of daily DA range."""
        return 1.0 if self is SignMode.PAPER_PLUS else -1.0


class ErrorKind(str, enum.Enum):
    NORMALIZED = "normalized"
    PHYSICAL_MW = "mw"


@dataclass(frozen=True)
class ErrorField:
    values: np.ndarray    # (N, T)
    kind: ErrorKind = ErrorKind.NORMALIZED

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValidationError("error field contains non-finite values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", ErrorKind(self.kind))


@dataclass(frozen=True)
class DaySample:
    date: dt.date
    da_real: np.ndarray   # (N, T) MW
    rt_real: np.ndarray   # (N, T) MW
    label: int

    def __post_init__(self):
        da = np.asarray(self.da_real, dtype=float)
        rt = np.asarray(self.rt_real, dtype=float)
        if da.ndim != 2 or da.shape != rt.shape:
            raise ValidationError(f"DA {da.shape} and RT {rt.shape} must be equal 2-D arrays")
        if not (np.all(np.isfinite(da)) and np.all(np.isfinite(rt))):
            raise ValidationError(f"non-finite load values on {self.date}")
        object.__setattr__(self, "da_real", da)
        object.__setattr__(self, "rt_real", rt)
        object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True)
class DayStats:
    da_min: np.ndarray
    da_ave: np.ndarray
    da_max: np.ndarray

    @property
    def span(self) -> np.ndarray:
        return self.da_max - self.da_min


def day_stats(s: DaySample) -> DayStats:
    da = s.da_real
    st = DayStats(da.min(axis=1), da.mean(axis=1), da.max(axis=1))
    flat = st.da_max == st.da_min
    if flat.any():
        raise DegenerateDay(f"flat DA forecast on {s.date} at node rows {np.flatnonzero(flat).tolist()}")
    return st


def normalize_day(s: DaySample, st: DayStats | None = None):
    """``(x - DA_ave) / (DA_max - DA_min)`` for DA and RT, both with DA stats.

    Evaluated as ``(x - DA_min) / range - c`` with ``c = (DA_ave - DA_min) / range``
    snapped to a multiple of 2**-53. The DA peak then maps to exactly ``1 - c``
    and the trough to ``-c``, so the normalised DA range is 1 bit for bit.
    """
    st = day_stats(s) if st is None else st
    span = st.span[:, None]
    c = np.round((st.da_ave - st.da_min) / st.span * 2.0 ** 53) * 2.0 ** -53
    da_norm = (s.da_real - st.da_min[:, None]) / span - c[:, None]
    rt_norm = (s.rt_real - st.da_min[:, None]) / span - c[:, None]
    return da_norm, rt_norm


def forecast_error(da_norm, rt_norm) -> ErrorField:
    da_norm, rt_norm = np.asarray(da_norm, float), np.asarray(rt_norm, float)
    if da_norm.shape != rt_norm.shape:
        raise ValidationError("normalised DA and RT fields differ in shape")
    return ErrorField(da_norm - rt_norm, ErrorKind.NORMALIZED)


def normalized_error(s: DaySample) -> ErrorField:
    return forecast_error(*normalize_day(s))


def denormalize_error(eps, s: DaySample, st: DayStats | None = None,
                      sign: SignMode = SignMode.ROUND_TRIP) -> np.ndarray:
    """RT net load (N x T MW) implied by a normalised error field."""
    if isinstance(eps, ErrorField):
        if eps.kind is not ErrorKind.NORMALIZED:
            raise ValidationError("denormalize_error expects a normalised error field")
        eps = eps.values
    st = day_stats(s) if st is None else st
    sign = SignMode(sign)
    return s.da_real + sign.direction * np.asarray(eps, float) * st.span[:, None]


def error_mw(eps, s: DaySample, st: DayStats | None = None,
             sign: SignMode = SignMode.ROUND_TRIP) -> ErrorField:
    """Physical error (extra RT net load over DA) for a normalised field."""
    d = denormalize_error(eps, s, st, sign)
    return ErrorField(d - s.da_real, ErrorKind.PHYSICAL_MW)


def assign_label(date: dt.date) -> int:
    """Calendar quarter, 0 for Jan-Mar through 3 for Oct-Dec."""
    return (date.month - 1) // 3


def split_dataset(samples, n_train: int, seed: int = 0):
    n = len(samples)
    if not 0 < n_train < n:
        raise InsufficientData(f"need 0 < n_train < {n}, got n_train={n_train}")
    perm = np.random.default_rng(seed).permutation(n)
    train = [samples[i] for i in sorted(perm[:n_train])]
    test = [samples[i] for i in sorted(perm[n_train:])]
    return train, test


# -- CSV ingestion -------------------------------------------------------

LOAD_HEADER = ("date", "zone", "hour", "da_mw", "rt_mw")


@dataclass
class IngestReport:
    zones: tuple
    samples: list
    dropped_incomplete: list
    dropped_flat: list


def load_csv(path, zones=None, horizon: int = 24) -> IngestReport:
    """Read ``date,zone,hour,da_mw,rt_mw`` rows into complete DaySamples.

    Days missing any (zone, hour) cell are dropped, as are days with a flat
    DA forecast at some zone. ``zones`` fixes the row order (e.g. the grid's
    node order); by default zones are taken in order of first appearance.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataIOError(f"cannot read load CSV {path}: {exc}") from exc
    cells = defaultdict(dict)
    seen_zones = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path} is empty")
        missing = set(LOAD_HEADER) - set(f.strip() for f in reader.fieldnames)
        if missing:
            raise ParseError(f"{path} lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                date = dt.date.fromisoformat(row["date"].strip())
                zone = row["zone"].strip()
                hour = int(row["hour"])
                da, rt = float(row["da_mw"]), float(row["rt_mw"])
            except (ValueError, AttributeError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if not 1 <= hour <= horizon:
                raise ParseError(f"{path}:{lineno}: hour {hour} outside 1..{horizon}")
            if zone not in seen_zones:
                seen_zones.append(zone)
            cells[date][(zone, hour)] = (da, rt)
    if not cells:
        raise InsufficientData(f"{path} contains no data rows")
    zones = tuple(str(z) for z in (zones or seen_zones))
    unknown = set(seen_zones) - set(zones)
    if unknown:
        raise ValidationError(f"zones {sorted(unknown)} in {path} are not grid nodes")
    samples, incomplete, flat = [], [], []
    for date in sorted(cells):
        day = cells[date]
        if len(day) != len(zones) * horizon or any(
                (z, h) not in day for z in zones for h in range(1, horizon + 1)):
            incomplete.append(date)
            continue
        arr = np.array([[day[(z, h)] for h in range(1, horizon + 1)] for z in zones])
        s = DaySample(date, arr[..., 0], arr[..., 1], assign_label(date))
        try:
            day_stats(s)
        except DegenerateDay:
            flat.append(date)
            continue
        samples.append(s)
    if incomplete:
        log.warning("dropped %d incomplete day(s)", len(incomplete))
    if flat:
        log.warning("dropped %d day(s) with flat DA forecast", len(flat))
    return IngestReport(zones, samples, incomplete, flat)


def write_load_csv(path, zones, samples) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOAD_HEADER)
        for s in samples:
            for i, z in enumerate(zones):
                for t in range(s.da_real.shape[1]):
                    w.writerow([s.date.isoformat(), z, t + 1, repr(float(s.da_real[i, t])),
                                repr(float(s.rt_real[i, t]))])


def write_errors_csv(path, zones, dates, fields) -> None:
    """Error fields as ``date,zone,hour,eps`` rows; ``dates`` may hold any tag."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date", "zone", "hour", "eps"))
        for tag, f in zip(dates, fields):
            vals = f.values if isinstance(f, ErrorField) else np.asarray(f)
            for i, z in enumerate(zones):
                for t in range(vals.shape[1]):
                    w.writerow([tag, z, t + 1, repr(float(vals[i, t]))])


def read_errors_csv(path, zones, horizon: int = 24):
    """Inverse of :func:`write_errors_csv`; returns ``(tags, arrays)`` in file order."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataIOError(f"cannot read error CSV {path}: {exc}") from exc
    fields: dict[str, np.ndarray] = {}
    zidx = {str(z): i for i, z in enumerate(zones)}
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(("date", "zone", "hour", "eps")) - set(reader.fieldnames):
            raise ParseError(f"{path} is not an error CSV")
        for lineno, row in enumerate(reader, start=2):
            try:
                tag, zone, hour, eps = row["date"], row["zone"], int(row["hour"]), float(row["eps"])
            except (ValueError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if zone not in zidx or not 1 <= hour <= horizon:
                raise ValidationError(f"{path}:{lineno}: unexpected zone/hour {zone}/{hour}")
            arr = fields.setdefault(tag, np.full((len(zones), horizon), np.nan))
            arr[zidx[zone], hour - 1] = eps
    for tag, arr in fields.items():
        if np.isnan(arr).any():
            raise ValidationError(f"{path}: error field {tag!r} is incomplete")
    return list(fields), list(fields.values())

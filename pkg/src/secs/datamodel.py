"""Gridded daily weather and yield series, CSV ingestion and alignment checks.

Everything runs on a 365-day no-leap calendar: Feb 29 rows are dropped on
ingest and dates live in memory as (year, day-of-year 1..365). Loaded series
are immutable and safe to share across workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, BoundsError, ContinuityError, SchemaError

Array = np.ndarray

DAYS_PER_YEAR = 365

WEATHER_HEADER = ["cell_id", "lat", "lon", "date", "tmax_c", "tmin_c", "precip_mm"]
YIELD_HEADER = ["cell_id", "date", "twso_kg_ha"]

_MONTH_LENGTHS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_MONTH_STARTS = tuple(np.cumsum((0,) + _MONTH_LENGTHS[:-1]))


def doy_from_month_day(month: int, day: int) -> int:
    """No-leap day-of-year in 1..365; Feb 29 is not representable."""
    if not (1 <= month <= 12 and 1 <= day <= _MONTH_LENGTHS[month - 1]):
        raise ValueError(f"invalid no-leap calendar date: month={month} day={day}")
    return _MONTH_STARTS[month - 1] + day


def month_day_from_doy(doy: int) -> tuple[int, int]:
    if not 1 <= doy <= DAYS_PER_YEAR:
        raise ValueError(f"day-of-year out of range: {doy}")
    month = int(np.searchsorted(_MONTH_STARTS, doy, side="left"))
    return month, int(doy - _MONTH_STARTS[month - 1])


def format_date(year: int, doy: int) -> str:
    month, day = month_day_from_doy(doy)
    return f"{year:04d}-{month:02d}-{day:02d}"


def parse_date(text: str) -> tuple[int, int, int]:
    """Parse an ISO-8601 date into (year, month, day) without a leap check."""
    parts = text.strip().split("-")
    if len(parts) != 3:
        raise SchemaError(f"not an ISO-8601 date: {text!r}")
    try:
        year, month, day = (int(p) for p in parts)
    except ValueError as exc:
        raise SchemaError(f"not an ISO-8601 date: {text!r}") from exc
    return year, month, day


@dataclass(frozen=True)
class CellId:
    """Grid cell identity plus coordinates in degrees."""

    id: str
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not self.id:
            raise BoundsError("cell id must be non-empty")
        if not -90.0 <= self.lat <= 90.0:
            raise BoundsError(f"cell {self.id}: lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise BoundsError(f"cell {self.id}: lon {self.lon} outside [-180, 180]")


def _as_readonly(values, name: str) -> Array:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise BoundsError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise BoundsError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeatherSeries:
    """Daily tmax/tmin (degC) and precip (mm/day) for one cell over whole years."""

    cell: CellId
    start_year: int
    tmax: Array
    tmin: Array
    precip: Array

    def __post_init__(self) -> None:
        object.__setattr__(self, "tmax", _as_readonly(self.tmax, "tmax"))
        object.__setattr__(self, "tmin", _as_readonly(self.tmin, "tmin"))
        object.__setattr__(self, "precip", _as_readonly(self.precip, "precip"))
        n = len(self.tmax)
        if len(self.tmin) != n or len(self.precip) != n:
            raise BoundsError(f"cell {self.cell.id}: weather arrays differ in length")
        if n == 0 or n % DAYS_PER_YEAR != 0:
            raise BoundsError(
                f"cell {self.cell.id}: length {n} is not a positive multiple of {DAYS_PER_YEAR}"
            )
        bad = np.nonzero(self.tmax < self.tmin)[0]
        if bad.size:
            d = int(bad[0])
            raise BoundsError(
                f"cell {self.cell.id} {self._date_at(d)}: tmax {self.tmax[d]} < tmin {self.tmin[d]}"
            )
        bad = np.nonzero(self.precip < 0)[0]
        if bad.size:
            d = int(bad[0])
            raise BoundsError(
                f"cell {self.cell.id} {self._date_at(d)}: negative precip {self.precip[d]}"
            )

    def _date_at(self, index: int) -> str:
        year = self.start_year + index // DAYS_PER_YEAR
        return format_date(year, index % DAYS_PER_YEAR + 1)

    @property
    def n_days(self) -> int:
        return len(self.tmax)

    @property
    def n_years(self) -> int:
        return self.n_days // DAYS_PER_YEAR

    @property
    def years(self) -> range:
        return range(self.start_year, self.start_year + self.n_years)

    def year_slice(self, year_index: int) -> slice:
        if not 0 <= year_index < self.n_years:
            raise IndexError(f"year index {year_index} outside 0..{self.n_years - 1}")
        return slice(year_index * DAYS_PER_YEAR, (year_index + 1) * DAYS_PER_YEAR)


@dataclass(frozen=True)
class YieldSeries:
    """Daily cumulative storage-organ weight (kg/ha) for one cell.

    Nonnegativity is a hard invariant here; per-year monotonicity is enforced
    where series enter from files or the simulator, since network predictions
    may legitimately wiggle.
    """

    cell: CellId
    start_year: int
    twso: Array

    def __post_init__(self) -> None:
        object.__setattr__(self, "twso", _as_readonly(self.twso, "twso"))
        n = len(self.twso)
        if n == 0 or n % DAYS_PER_YEAR != 0:
            raise BoundsError(
                f"cell {self.cell.id}: length {n} is not a positive multiple of {DAYS_PER_YEAR}"
            )
        bad = np.nonzero(self.twso < 0)[0]
        if bad.size:
            d = int(bad[0])
            raise BoundsError(
                f"cell {self.cell.id} {self._date_at(d)}: negative twso {self.twso[d]}"
            )

    def _date_at(self, index: int) -> str:
        year = self.start_year + index // DAYS_PER_YEAR
        return format_date(year, index % DAYS_PER_YEAR + 1)

    @property
    def n_days(self) -> int:
        return len(self.twso)

    @property
    def n_years(self) -> int:
        return self.n_days // DAYS_PER_YEAR

    @property
    def years(self) -> range:
        return range(self.start_year, self.start_year + self.n_years)

    def year_slice(self, year_index: int) -> slice:
        if not 0 <= year_index < self.n_years:
            raise IndexError(f"year index {year_index} outside 0..{self.n_years - 1}")
        return slice(year_index * DAYS_PER_YEAR, (year_index + 1) * DAYS_PER_YEAR)

    def year_values(self, year_index: int) -> Array:
        return self.twso[self.year_slice(year_index)]

    def end_of_year(self) -> Array:
        """Final TWSO of each year, the per-year scalar yield."""
        return self.twso.reshape(self.n_years, DAYS_PER_YEAR)[:, -1].copy()

    def check_monotone(self) -> None:
        """Raise unless twso is nondecreasing within every year."""
        per_year = self.twso.reshape(self.n_years, DAYS_PER_YEAR)
        drops = np.nonzero(np.diff(per_year, axis=1) < 0)
        if drops[0].size:
            y, d = int(drops[0][0]), int(drops[1][0])
            raise BoundsError(
                f"cell {self.cell.id} {format_date(self.start_year + y, d + 2)}: "
                "twso decreases within the year"
            )


@dataclass(frozen=True)
class EnsembleYield:
    """One ensemble member's yield series."""

    member_id: int
    series: YieldSeries

    def __post_init__(self) -> None:
        if self.member_id < 0:
            raise BoundsError(f"member id must be >= 0, got {self.member_id}")


@dataclass
class AlignmentReport:
    """Cell/year coverage comparison between a weather and a yield collection."""

    aligned: bool
    common_cells: list[str]
    weather_only: list[str]
    yield_only: list[str]
    year_mismatches: list[tuple[str, tuple[int, int], tuple[int, int]]] = field(
        default_factory=list
    )


def _read_rows(path: str | Path, expected_header: list[str], optional: tuple[str, ...] = ()):
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        base = header[: len(expected_header)]
        extra = header[len(expected_header):]
        if base != expected_header or any(col not in optional for col in extra):
            raise SchemaError(
                f"{path}: header {header} does not match required columns {expected_header}"
                + (f" (+ optional {list(optional)})" if optional else "")
            )
        yield header
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield row


def _parse_float(text: str, what: str, where: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise SchemaError(f"{where}: cannot parse {what} value {text!r}") from exc


class _DateCursor:
    """Tracks the expected next no-leap date for one cell while streaming rows."""

    def __init__(self, cell_id: str):
        self.cell_id = cell_id
        self.year: int | None = None
        self.doy: int | None = None
        self.start_year: int | None = None

    def advance(self, year: int, month: int, day: int, where: str) -> None:
        doy = doy_from_month_day(month, day)
        if self.year is None:
            if doy != 1:
                raise ContinuityError(
                    f"{where}: cell {self.cell_id} starts at {format_date(year, doy)}, expected Jan 1"
                )
            self.start_year = year
        else:
            nxt = (self.year, self.doy + 1) if self.doy < DAYS_PER_YEAR else (self.year + 1, 1)
            if (year, doy) != nxt:
                raise ContinuityError(
                    f"{where}: cell {self.cell_id} jumps from "
                    f"{format_date(self.year, self.doy)} to {format_date(year, doy)}"
                )
        self.year, self.doy = year, doy

    def finish(self, where: str) -> None:
        if self.doy != DAYS_PER_YEAR:
            raise ContinuityError(
                f"{where}: cell {self.cell_id} ends at {format_date(self.year, self.doy)}, "
                "expected Dec 31"
            )


def load_weather_table(path: str | Path) -> list[WeatherSeries]:
    """Load a weather CSV into per-cell series.

    Feb 29 rows are silently dropped; remaining dates per cell must run
    gap-free from a Jan 1 to a Dec 31. Rows may interleave cells but must be
    date-ordered within each cell.
    """
    rows = _read_rows(path, WEATHER_HEADER)
    next(rows)  # header already validated
    coords: dict[str, tuple[float, float]] = {}
    cursors: dict[str, _DateCursor] = {}
    data: dict[str, list[tuple[float, float, float]]] = {}
    for lineno, row in enumerate(_strip(rows), start=2):
        where = f"{path}:{lineno}"
        cell_id, lat_s, lon_s, date_s, tmax_s, tmin_s, pr_s = row
        year, month, day = parse_date(date_s)
        if (month, day) == (2, 29):
            continue
        lat = _parse_float(lat_s, "lat", where)
        lon = _parse_float(lon_s, "lon", where)
        if cell_id not in coords:
            coords[cell_id] = (lat, lon)
            cursors[cell_id] = _DateCursor(cell_id)
            data[cell_id] = []
        elif coords[cell_id] != (lat, lon):
            raise SchemaError(f"{where}: cell {cell_id} changes coordinates mid-file")
        cursors[cell_id].advance(year, month, day, where)
        tmax = _parse_float(tmax_s, "tmax_c", where)
        tmin = _parse_float(tmin_s, "tmin_c", where)
        precip = _parse_float(pr_s, "precip_mm", where)
        if tmax < tmin:
            raise BoundsError(f"{where}: cell {cell_id} {date_s}: tmax {tmax} < tmin {tmin}")
        if precip < 0:
            raise BoundsError(f"{where}: cell {cell_id} {date_s}: negative precip {precip}")
        data[cell_id].append((tmax, tmin, precip))

    out = []
    for cell_id in sorted(data):
        cursors[cell_id].finish(str(path))
        values = np.asarray(data[cell_id], dtype=np.float64)
        lat, lon = coords[cell_id]
        out.append(
            WeatherSeries(
                cell=CellId(cell_id, lat, lon),
                start_year=cursors[cell_id].start_year,
                tmax=values[:, 0],
                tmin=values[:, 1],
                precip=values[:, 2],
            )
        )
    if not out:
        raise SchemaError(f"{path}: no data rows")
    return out


def _strip(rows):
    for row in rows:
        yield [f.strip() for f in row]


def load_yield_table(
    path: str | Path, require_monotone: bool = True
) -> list[EnsembleYield]:
    """Load a yield CSV into per-(cell, member) series.

    A missing `member` column means member 0 throughout. Set
    ``require_monotone=False`` when loading network predictions, which are
    nonnegative but not forced to accumulate.
    """
    rows = _read_rows(path, YIELD_HEADER, optional=("member",))
    header = next(rows)
    has_member = len(header) == 4
    cursors: dict[tuple[str, int], _DateCursor] = {}
    data: dict[tuple[str, int], list[float]] = {}
    for lineno, row in enumerate(_strip(rows), start=2):
        where = f"{path}:{lineno}"
        if has_member:
            cell_id, date_s, twso_s, member_s = row
            try:
                member = int(member_s)
            except ValueError as exc:
                raise SchemaError(f"{where}: cannot parse member {member_s!r}") from exc
        else:
            cell_id, date_s, twso_s = row
            member = 0
        year, month, day = parse_date(date_s)
        if (month, day) == (2, 29):
            continue
        key = (cell_id, member)
        if key not in data:
            cursors[key] = _DateCursor(cell_id)
            data[key] = []
        cursors[key].advance(year, month, day, where)
        twso = _parse_float(twso_s, "twso_kg_ha", where)
        if twso < 0:
            raise BoundsError(f"{where}: cell {cell_id} {date_s}: negative twso {twso}")
        data[key].append(twso)

    out = []
    for cell_id, member in sorted(data):
        key = (cell_id, member)
        cursors[key].finish(str(path))
        series = YieldSeries(
            cell=CellId(cell_id, 0.0, 0.0),
            start_year=cursors[key].start_year,
            twso=np.asarray(data[key], dtype=np.float64),
        )
        if require_monotone:
            series.check_monotone()
        out.append(EnsembleYield(member_id=member, series=series))
    if not out:
        raise SchemaError(f"{path}: no data rows")
    return out


def write_weather_table(series: list[WeatherSeries], path: str | Path) -> None:
    """Write per-cell weather back to the canonical CSV schema.

    Floats are written with repr so a reload reproduces them bit-for-bit.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(WEATHER_HEADER)
        for ws in sorted(series, key=lambda s: s.cell.id):
            for d in range(ws.n_days):
                year = ws.start_year + d // DAYS_PER_YEAR
                date = format_date(year, d % DAYS_PER_YEAR + 1)
                writer.writerow(
                    [
                        ws.cell.id,
                        repr(ws.cell.lat),
                        repr(ws.cell.lon),
                        date,
                        repr(float(ws.tmax[d])),
                        repr(float(ws.tmin[d])),
                        repr(float(ws.precip[d])),
                    ]
                )


def write_yield_table(
    members: list[EnsembleYield], path: str | Path, with_member: bool | None = None
) -> None:
    if with_member is None:
        with_member = any(m.member_id != 0 for m in members)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(YIELD_HEADER + (["member"] if with_member else []))
        for em in sorted(members, key=lambda m: (m.series.cell.id, m.member_id)):
            ys = em.series
            for d in range(ys.n_days):
                year = ys.start_year + d // DAYS_PER_YEAR
                date = format_date(year, d % DAYS_PER_YEAR + 1)
                row = [ys.cell.id, date, repr(float(ys.twso[d]))]
                if with_member:
                    row.append(str(em.member_id))
                writer.writerow(row)


def _year_range(series) -> tuple[int, int]:
    return series.start_year, series.start_year + series.n_years - 1


def validate_alignment(
    weather: list[WeatherSeries],
    yields: list[EnsembleYield] | list[YieldSeries],
) -> AlignmentReport:
    """Compare cell sets and year ranges; report-only, never raises."""
    wmap = {w.cell.id: _year_range(w) for w in weather}
    ymap: dict[str, tuple[int, int]] = {}
    for item in yields:
        series = item.series if isinstance(item, EnsembleYield) else item
        ymap[series.cell.id] = _year_range(series)

    common = sorted(set(wmap) & set(ymap))
    weather_only = sorted(set(wmap) - set(ymap))
    yield_only = sorted(set(ymap) - set(wmap))
    mismatches = [
        (cid, wmap[cid], ymap[cid]) for cid in common if wmap[cid] != ymap[cid]
    ]
    aligned = not weather_only and not yield_only and not mismatches
    return AlignmentReport(
        aligned=aligned,
        common_cells=common,
        weather_only=weather_only,
        yield_only=yield_only,
        year_mismatches=mismatches,
    )


def require_aligned(weather, yields) -> AlignmentReport:
    """validate_alignment, but raise AlignmentError on any mismatch."""
    report = validate_alignment(weather, yields)
    if not report.aligned:
        raise AlignmentError(
            f"weather/yield misaligned: weather-only={report.weather_only} "
            f"yield-only={report.yield_only} year-mismatches={report.year_mismatches}"
        )
    return report

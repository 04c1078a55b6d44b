"""Likert rating data model and the paired-sample analysis that goes with it:
CSV ingest with validation and exclusion flags, paired t-tests with exact
two-sided p-values via the regularized incomplete beta function, condition
summaries, and the per-participant speed-preference partition.

Scores are integers 1..7 (4 is the neutral midpoint) on three dimensions:
likability, aesthetic pleasantness, artistic value. One record per
(participant, pair, speed) cell; participants missing any of the four cells
are flagged for exclusion rather than silently dropped.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .errors import DataFormatError, ValidationError

PAIRS = ("abstract", "portrait")
SPEEDS = ("slow", "fast")
DIMENSIONS = ("likability", "aesthetic_pleasantness", "artistic_value")

CSV_COLUMNS = [
    "participant_id", "pair_id", "speed", "presentation_index",
    "likability", "aesthetic_pleasantness", "artistic_value",
    "timestamp_iso8601",
]

PARTITION_KEYS = (
    "always_slow", "always_fast",
    "slow_abstract_fast_portrait", "slow_portrait_fast_abstract",
    "tied",
)


class StatsError(ValidationError):
    pass


@dataclass(frozen=True)
class RatingRecord:
    participant_id: str
    pair_id: str
    speed: str
    presentation_index: int
    likability: int
    aesthetic_pleasantness: int
    artistic_value: int
    timestamp: str = ""

    def __post_init__(self):
        if not self.participant_id:
            raise StatsError("empty participant_id")
        if self.pair_id not in PAIRS:
            raise StatsError(f"unknown pair_id {self.pair_id!r}")
        if self.speed not in SPEEDS:
            raise StatsError(f"unknown speed {self.speed!r}")
        if not isinstance(self.presentation_index, int) or self.presentation_index < 0:
            raise StatsError(f"bad presentation_index {self.presentation_index!r}")
        for dim in DIMENSIONS:
            score = getattr(self, dim)
            if not isinstance(score, int) or not 1 <= score <= 7:
                raise StatsError(f"{dim} score {score!r} outside 1..7")
        if self.timestamp:
            try:
                datetime.fromisoformat(self.timestamp.replace("Z", "+00:00"))
            except ValueError:
                raise StatsError(f"bad timestamp {self.timestamp!r}") from None

    def score(self, dimension: str) -> int:
        if dimension not in DIMENSIONS:
            raise StatsError(f"unknown dimension {dimension!r}")
        return getattr(self, dimension)

    @property
    def cell(self):
        return (self.participant_id, self.pair_id, self.speed)


def record_from_row(row: dict) -> RatingRecord:
    """Build a record from CSV string fields; scores must be integral."""
    try:
        return RatingRecord(
            participant_id=row["participant_id"].strip(),
            pair_id=row["pair_id"].strip(),
            speed=row["speed"].strip(),
            presentation_index=_int_field(row["presentation_index"], "presentation_index"),
            likability=_int_field(row["likability"], "likability"),
            aesthetic_pleasantness=_int_field(row["aesthetic_pleasantness"],
                                              "aesthetic_pleasantness"),
            artistic_value=_int_field(row["artistic_value"], "artistic_value"),
            timestamp=row["timestamp_iso8601"].strip(),
        )
    except KeyError as exc:
        raise StatsError(f"missing column {exc}") from None


def _int_field(text: str, name: str) -> int:
    try:
        return int(text.strip())
    except (ValueError, AttributeError):
        raise StatsError(f"{name} is not an integer: {text!r}") from None


@dataclass
class IngestResult:
    records: list
    rejected: list  # (line_number, reason)
    excluded: set   # participant ids with incomplete cells

    @property
    def complete_records(self) -> list:
        return [r for r in self.records if r.participant_id not in self.excluded]


def ingest_ratings(source) -> IngestResult:
    """Parse and validate a ratings CSV.

    Bad rows land in `rejected` with their 1-based line number; duplicate
    (participant, pair, speed) cells are rejected; participants missing any
    of the four cells are flagged in `excluded` but their valid records are
    kept (callers decide whether to analyze them).
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, newline="") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != CSV_COLUMNS:
        raise DataFormatError(f"bad ratings header: expected {CSV_COLUMNS}, got {header}")

    records, rejected = [], []
    seen_cells = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not field.strip() for field in row):
            continue
        if len(row) != len(CSV_COLUMNS):
            rejected.append((line_no, f"expected {len(CSV_COLUMNS)} fields, got {len(row)}"))
            continue
        try:
            record = record_from_row(dict(zip(CSV_COLUMNS, row)))
        except StatsError as exc:
            rejected.append((line_no, str(exc)))
            continue
        if record.cell in seen_cells:
            rejected.append(
                (line_no, f"duplicate cell {record.cell} (first at line {seen_cells[record.cell]})")
            )
            continue
        seen_cells[record.cell] = line_no
        records.append(record)

    excluded = set()
    by_participant = {}
    for r in records:
        by_participant.setdefault(r.participant_id, set()).add((r.pair_id, r.speed))
    full = {(p, s) for p in PAIRS for s in SPEEDS}
    for pid, cells in by_participant.items():
        if cells != full:
            excluded.add(pid)
    return IngestResult(records, rejected, excluded)


def write_ratings_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(rating_row(r))


def rating_row(r: RatingRecord) -> list:
    return [r.participant_id, r.pair_id, r.speed, r.presentation_index,
            r.likability, r.aesthetic_pleasantness, r.artistic_value, r.timestamp]


# -- paired t ------------------------------------------------------------------


@dataclass(frozen=True)
class TTestResult:
    n: int
    df: int
    mean_diff: float
    sd_diff: float
    t: float
    p: float


def paired_t(x, y) -> TTestResult:
    """Paired t-test on differences d = x - y, two-sided p."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise StatsError(f"paired samples must be equal-length vectors: {x.shape} vs {y.shape}")
    n = len(x)
    if n < 2:
        raise StatsError("need at least 2 pairs")
    d = x - y
    mean_diff = float(d.mean())
    sd_diff = float(d.std(ddof=1))
    if sd_diff == 0.0:
        raise StatsError("degenerate variance: all differences identical")
    t = mean_diff / (sd_diff / math.sqrt(n))
    return TTestResult(n, n - 1, mean_diff, sd_diff, t, t_two_sided_p(t, n - 1))


def t_two_sided_p(t: float, df: int) -> float:
    """Two-sided p = I_{df/(df+t^2)}(df/2, 1/2), regularized incomplete beta."""
    if df < 1:
        raise StatsError(f"df must be >= 1, got {df}")
    if not math.isfinite(t):
        raise StatsError(f"t must be finite, got {t}")
    if t == 0.0:
        return 1.0
    return _betainc_reg(df / 2.0, 0.5, df / (df + t * t))


def _betainc_reg(a: float, b: float, x: float) -> float:
    """Continued-fraction regularized incomplete beta (Lentz's algorithm)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 3e-16) -> float:
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise StatsError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


# -- summaries ---------------------------------------------------------------


@dataclass(frozen=True)
class SummaryCell:
    dimension: str
    speed: str
    pair: str | None  # None = pooled over both pairs
    n: int
    mean: float
    sd: float | None  # None (flagged) when n < 2
    flagged: bool


def summarize(records) -> list:
    """Mean and sample SD per dimension x speed, pooled and per pair."""
    if not records:
        raise StatsError("no records to summarize")
    cells = []
    for dimension in DIMENSIONS:
        for speed in SPEEDS:
            for pair in (None, *PAIRS):
                scores = [
                    r.score(dimension) for r in records
                    if r.speed == speed and (pair is None or r.pair_id == pair)
                ]
                if not scores:
                    raise StatsError(f"empty cell: {dimension}/{speed}/{pair or 'pooled'}")
                # sorting makes the reduction order, and therefore the floats,
                # independent of record order
                arr = np.sort(np.asarray(scores, dtype=np.float64))
                if len(arr) < 2:
                    cells.append(SummaryCell(dimension, speed, pair, len(arr),
                                             float(arr.mean()), None, True))
                else:
                    cells.append(SummaryCell(dimension, speed, pair, len(arr),
                                             float(arr.mean()), float(arr.std(ddof=1)),
                                             False))
    return cells


def format_summary_table(cells) -> str:
    header = f"{'dimension':<24}{'speed':<6}{'pair':<10}{'n':>4}  {'mean':>6}  {'sd':>6}"
    lines = [header, "-" * len(header)]
    for c in cells:
        sd = "  n<2" if c.sd is None else f"{c.sd:6.2f}"
        lines.append(
            f"{c.dimension:<24}{c.speed:<6}{c.pair or 'both':<10}{c.n:>4}  {c.mean:6.2f}  {sd}"
        )
    return "\n".join(lines)


def summary_csv(cells) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["dimension", "speed", "pair", "n", "mean", "sd"])
    for c in cells:
        writer.writerow([
            c.dimension, c.speed, c.pair or "both", c.n,
            f"{c.mean:.6f}", "" if c.sd is None else f"{c.sd:.6f}",
        ])
    return out.getvalue()


def speed_contrast(records, dimension: str, pair: str | None = None) -> TTestResult:
    """Paired t of slow vs fast scores on one dimension, paired over
    participants (per-participant means when pooling both pairs)."""
    if dimension not in DIMENSIONS:
        raise StatsError(f"unknown dimension {dimension!r}")
    if pair is not None and pair not in PAIRS:
        raise StatsError(f"unknown pair {pair!r}")
    by_participant = {}
    for r in records:
        if pair is not None and r.pair_id != pair:
            continue
        by_participant.setdefault(r.participant_id, {}).setdefault(r.speed, []).append(
            r.score(dimension)
        )
    slow, fast = [], []
    for pid in sorted(by_participant):
        sides = by_participant[pid]
        if "slow" not in sides or "fast" not in sides:
            raise StatsError(f"participant {pid} missing a speed condition")
        slow.append(float(np.mean(sides["slow"])))
        fast.append(float(np.mean(sides["fast"])))
    return paired_t(slow, fast)


# -- preference partition --------------------------------------------------------


def preference_partition(records) -> dict:
    """Classify each participant by which speed they scored higher (mean of
    the three dimensions) for each pair. Exact ties get their own bucket."""
    by_participant = {}
    for r in records:
        by_participant.setdefault(r.participant_id, {})[(r.pair_id, r.speed)] = r
    counts = {key: 0 for key in PARTITION_KEYS}
    for pid in sorted(by_participant):
        cells = by_participant[pid]
        if set(cells) != {(p, s) for p in PAIRS for s in SPEEDS}:
            raise StatsError(f"participant {pid} has incomplete cells")
        prefs = {}
        for pair in PAIRS:
            slow = np.mean([cells[(pair, "slow")].score(d) for d in DIMENSIONS])
            fast = np.mean([cells[(pair, "fast")].score(d) for d in DIMENSIONS])
            prefs[pair] = "tie" if slow == fast else ("slow" if slow > fast else "fast")
        if "tie" in prefs.values():
            counts["tied"] += 1
        elif prefs["abstract"] == "slow" and prefs["portrait"] == "slow":
            counts["always_slow"] += 1
        elif prefs["abstract"] == "fast" and prefs["portrait"] == "fast":
            counts["always_fast"] += 1
        elif prefs["abstract"] == "slow":
            counts["slow_abstract_fast_portrait"] += 1
        else:
            counts["slow_portrait_fast_abstract"] += 1
    return counts

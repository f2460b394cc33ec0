"""Offline handover-trace ingestion and parameter estimation.

A trace log is a CSV of ``(ue_id, event, timestamp_seconds)`` rows, one
session per UE: a ``session_start``, alternating ``femto_enter`` /
``femto_exit`` boundary crossings observed while the session is active, and
a ``session_end``. A session that begins inside a femtocell opens with a
bare ``femto_exit``; a session that ends inside one closes with a dangling
``femto_enter``.

Estimation uses only uncensored intervals: full enter-to-exit femtocell
visits, full exit-to-enter macrocell gaps, and complete session lengths.
Partial intervals at either end of a session (the residual the session
started inside, and whatever residence it ended inside) are censored and
excluded, so each reported mean is a plain unbiased sample mean of complete
residences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

from .errors import TraceFormatError
from .residence import DistributionSpec, RandomStream, residual_sample, sample

__all__ = [
    "EVENTS",
    "TRACE_HEADER",
    "EstimatedMoment",
    "TraceEstimates",
    "estimate_from_rows",
    "estimate_trace_file",
    "generate_trace",
    "write_trace",
]

EVENTS = ("session_start", "femto_enter", "femto_exit", "session_end")
TRACE_HEADER = ("ue_id", "event", "timestamp_seconds")


@dataclass(frozen=True)
class EstimatedMoment:
    """Sample mean/variance of one interval population."""

    mean: float
    variance: float  # ddof=1 sample variance; NaN when count < 2
    count: int

    @property
    def stderr(self) -> float:
        if self.count < 2 or not math.isfinite(self.variance):
            return math.inf
        return math.sqrt(self.variance / self.count)


@dataclass(frozen=True)
class TraceEstimates:
    femto: EstimatedMoment    # mean femtocell residence, seconds
    macro: EstimatedMoment    # mean macrocell residence, seconds
    session: EstimatedMoment  # mean session length, seconds


def _moment(samples: list[float]) -> EstimatedMoment:
    n = len(samples)
    if n == 0:
        return EstimatedMoment(mean=math.nan, variance=math.nan, count=0)
    mean = math.fsum(samples) / n
    if n < 2:
        return EstimatedMoment(mean=mean, variance=math.nan, count=n)
    var = math.fsum((x - mean) ** 2 for x in samples) / (n - 1)
    return EstimatedMoment(mean=mean, variance=var, count=n)


def _parse_rows(rows: Iterable[Iterable[str]]) -> dict[str, list[tuple[str, float, int]]]:
    per_ue: dict[str, list[tuple[str, float, int]]] = {}
    n_rows = 0
    for lineno, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        if not cells or (len(cells) == 1 and not cells[0]):
            continue
        if lineno == 1 and tuple(c.lower() for c in cells) == TRACE_HEADER:
            continue
        if len(cells) != 3:
            raise TraceFormatError(f"row {lineno}: expected 3 columns, got {len(cells)}")
        ue_id, event, stamp = cells
        if event not in EVENTS:
            raise TraceFormatError(f"row {lineno}: unknown event {event!r}")
        try:
            t = float(stamp)
        except ValueError:
            raise TraceFormatError(f"row {lineno}: bad timestamp {stamp!r}") from None
        if not math.isfinite(t):
            raise TraceFormatError(f"row {lineno}: non-finite timestamp {stamp!r}")
        per_ue.setdefault(ue_id, []).append((event, t, lineno))
        n_rows += 1
    if n_rows == 0:
        raise TraceFormatError("empty trace: no event rows found")
    return per_ue


def estimate_from_rows(rows: Iterable[Iterable[str]]) -> TraceEstimates:
    """Estimate residence and session means from raw CSV rows.

    Raises :class:`TraceFormatError` anchored to the offending row on
    unpaired enters/exits, out-of-order timestamps, or events outside a
    session.
    """
    per_ue = _parse_rows(rows)
    femto: list[float] = []
    macro: list[float] = []
    session: list[float] = []

    for ue_id, events in per_ue.items():
        prev_t = -math.inf
        for _, t, lineno in events:
            if t < prev_t:
                raise TraceFormatError(
                    f"row {lineno}: timestamps for UE {ue_id} are out of order"
                )
            prev_t = t
        first_ev, start_t, first_row = events[0]
        if first_ev != "session_start":
            raise TraceFormatError(
                f"row {first_row}: UE {ue_id} must begin with session_start"
            )
        last_ev, end_t, last_row = events[-1]
        if last_ev != "session_end":
            raise TraceFormatError(
                f"row {last_row}: UE {ue_id} must end with session_end"
            )

        pending_enter: float | None = None
        last_exit: float | None = None
        seen_crossing = False
        for event, t, lineno in events[1:-1]:
            if event == "session_start" or event == "session_end":
                raise TraceFormatError(
                    f"row {lineno}: duplicate {event} for UE {ue_id}"
                )
            if event == "femto_enter":
                if pending_enter is not None:
                    raise TraceFormatError(
                        f"row {lineno}: femto_enter without a femto_exit for UE {ue_id}"
                    )
                pending_enter = t
                if last_exit is not None:
                    macro.append(t - last_exit)
                    last_exit = None
            else:  # femto_exit
                if pending_enter is None:
                    if seen_crossing:
                        raise TraceFormatError(
                            f"row {lineno}: femto_exit without a femto_enter for UE {ue_id}"
                        )
                    # session started inside a femtocell: left-censored visit
                    last_exit = t
                else:
                    femto.append(t - pending_enter)
                    pending_enter = None
                    last_exit = t
            seen_crossing = True
        # a dangling femto_enter is the censored final visit: dropped
        session.append(end_t - start_t)

    return TraceEstimates(femto=_moment(femto), macro=_moment(macro),
                          session=_moment(session))


def estimate_trace_file(path: str) -> TraceEstimates:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return estimate_from_rows(csv.reader(fh))
    except OSError as exc:
        raise TraceFormatError(f"cannot read trace file {path}: {exc}") from exc


def generate_trace(macro: DistributionSpec, femto: DistributionSpec,
                   session_mean: float, n_sessions: int, seed: int,
                   ) -> Iterator[tuple[str, str, float]]:
    """Yield synthetic trace rows for ``n_sessions`` sessions (one UE each).

    Sessions follow the same stochastic model as the simulator: stationary
    start cell and equilibrium initial residence, alternating full
    residences afterwards, truncated by an exponential session length.
    Timestamps are per-UE, starting at 0 at session start.
    """
    # stationary start cell: weight by mean residence length
    pr_macro = macro.mean / (macro.mean + femto.mean)
    rs = RandomStream(seed)
    width = len(str(max(n_sessions - 1, 1)))
    for i in range(n_sessions):
        ue = f"ue{i:0{width}d}"
        t_s = -math.log1p(-rs.next_double()) * session_mean
        in_femto = rs.next_double() >= pr_macro
        r = residual_sample(femto if in_femto else macro, rs)
        yield (ue, "session_start", 0.0)
        now = 0.0
        while now + r < t_s:
            now += r
            yield (ue, "femto_exit" if in_femto else "femto_enter", now)
            in_femto = not in_femto
            r = sample(femto if in_femto else macro, rs)
        yield (ue, "session_end", t_s)


def write_trace(rows: Iterable[tuple[str, str, float]], fh: TextIO) -> int:
    """Write trace rows as CSV with header; returns the row count."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    n = 0
    for ue_id, event, t in rows:
        writer.writerow((ue_id, event, f"{t:.6f}"))
        n += 1
    return n

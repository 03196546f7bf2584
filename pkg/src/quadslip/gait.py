"""Footfall timing encoding, phase-lag metrics, and gallop classification.

A stride is described by normalized touchdown/liftoff times for the four legs,
anchored at the midpoint of the extended flight phase.  Asymmetric gallops are
labelled by the sign pair of the forelimb and hindlimb phase lags:

    (+, +) -> TL   transverse, left-leading
    (-, -) -> TR   transverse, right-leading
    (+, -) -> RL   rotary, left-leading
    (-, +) -> RR   rotary, right-leading

A lag within ``eps_lag`` of 0 (bounding) or +-0.5 (trot/pace) is not a gallop.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Anatomical leg order used everywhere (also the CSV column order).
LEGS = ("LH", "LF", "RF", "RH")
LEG_INDEX = {leg: i for i, leg in enumerate(LEGS)}

# Indices into the per-leg arrays.
LH, LF, RF, RH = 0, 1, 2, 3

#: Left-right mirror permutation (LH<->RH, LF<->RF) on per-leg arrays.
MIRROR_PERM = (RH, RF, LF, LH)

EPS_LAG_DEFAULT = 1e-3
_EPS_STANCE = 1e-9


class InvalidTimingError(ValueError):
    """Raised for degenerate or out-of-range stride timing data."""


class EmptyStatsError(ValueError):
    """Raised when a sequence has too few labelled strides for statistics."""


class GaitLabel(Enum):
    TL = "TL"
    TR = "TR"
    RL = "RL"
    RR = "RR"
    NON_GALLOP = "NonGallop"

    def mirrored(self) -> "GaitLabel":
        pairs = {
            GaitLabel.TL: GaitLabel.TR,
            GaitLabel.TR: GaitLabel.TL,
            GaitLabel.RL: GaitLabel.RR,
            GaitLabel.RR: GaitLabel.RL,
        }
        return pairs.get(self, GaitLabel.NON_GALLOP)


def wrap_half(x: float) -> float:
    """Wrap a cyclic difference into [-0.5, 0.5)."""
    return (x + 0.5) % 1.0 - 0.5


def wrap_lag(x: float) -> float:
    """Wrap a phase lag into (-0.5, 0.5]; the boundary maps to +0.5."""
    y = wrap_half(x)
    return 0.5 if y == -0.5 else y


@dataclass(frozen=True)
class StrideTiming:
    """Normalized touchdown/liftoff times for one stride.

    ``t_td`` and ``t_lo`` are per-leg times in [0, 1) in LH, LF, RF, RH order,
    measured from the stride anchor; ``duration`` is the stride time in
    seconds (model output uses normalized time units instead).
    """

    t_td: tuple[float, float, float, float]
    t_lo: tuple[float, float, float, float]
    duration: float

    def __post_init__(self):
        if len(self.t_td) != 4 or len(self.t_lo) != 4:
            raise InvalidTimingError("need exactly one touchdown and one liftoff per leg")
        if not (self.duration > 0.0):
            raise InvalidTimingError(f"stride duration must be positive, got {self.duration}")
        for name, vals in (("touchdown", self.t_td), ("liftoff", self.t_lo)):
            for leg, t in zip(LEGS, vals):
                if not (0.0 <= t < 1.0) or not np.isfinite(t):
                    raise InvalidTimingError(f"{name} time of {leg} outside [0,1): {t}")
        for i, leg in enumerate(LEGS):
            d = (self.t_lo[i] - self.t_td[i]) % 1.0
            if d <= _EPS_STANCE or d >= 1.0 - _EPS_STANCE:
                raise InvalidTimingError(f"degenerate stance duration for {leg}: {d}")

    def vector(self) -> np.ndarray:
        """Timing entries interleaved as (td, lo) per leg in anatomical order."""
        out = np.empty(8)
        out[0::2] = self.t_td
        out[1::2] = self.t_lo
        return out

    def shifted(self, delta: float) -> "StrideTiming":
        """Rotate all timing entries by ``delta`` (mod 1)."""
        td = tuple((t + delta) % 1.0 for t in self.t_td)
        lo = tuple((t + delta) % 1.0 for t in self.t_lo)
        return StrideTiming(td, lo, self.duration)

    def mirrored(self) -> "StrideTiming":
        """Swap left and right legs."""
        td = tuple(self.t_td[j] for j in MIRROR_PERM)
        lo = tuple(self.t_lo[j] for j in MIRROR_PERM)
        return StrideTiming(td, lo, self.duration)


@dataclass(frozen=True)
class GaitMetrics:
    """Duty factors and phase lags derived from one stride."""

    duty: tuple[float, float, float, float]
    d_f: float
    d_h: float
    d_p: float


@dataclass
class StrideSequence:
    strides: list[StrideTiming]
    labels: list[GaitLabel] = field(default_factory=list)
    subject_id: str = ""

    def __post_init__(self):
        if self.labels and len(self.labels) != len(self.strides):
            raise ValueError("labels length must equal strides length")


@dataclass
class TransitionStats:
    """Consecutive-pair transition counts over gallop-labelled strides."""

    gaits: tuple[str, ...]
    counts: np.ndarray  # (4, 4) int
    usage: dict[str, int]
    row_percentages: np.ndarray  # (4, 4) float, rows sum to 1 where defined

    def as_dict(self) -> dict:
        return {
            "gaits": list(self.gaits),
            "counts": self.counts.tolist(),
            "usage": dict(self.usage),
            "row_percentages": self.row_percentages.tolist(),
        }


def duty_factor(timing: StrideTiming, leg: str | int) -> float:
    """Stance fraction of the stride for one leg, wrap-aware."""
    i = LEG_INDEX[leg] if isinstance(leg, str) else int(leg)
    d = (timing.t_lo[i] - timing.t_td[i]) % 1.0
    if d <= _EPS_STANCE or d >= 1.0 - _EPS_STANCE:
        raise InvalidTimingError(f"degenerate stance duration: {d}")
    return d


def _mid_stance(timing: StrideTiming, i: int) -> float:
    """Mid-stance time on the unwrapped stance interval, mapped back to [0,1)."""
    td, lo = timing.t_td[i], timing.t_lo[i]
    if lo < td:
        lo += 1.0
    return 0.5 * (td + lo) % 1.0


def phase_lags(timing: StrideTiming) -> GaitMetrics:
    """Duty factors plus forelimb, hindlimb, and fore-hind phase lags."""
    duty = tuple(duty_factor(timing, i) for i in range(4))
    d_f = wrap_lag(timing.t_td[LF] - timing.t_td[RF])
    d_h = wrap_lag(timing.t_td[LH] - timing.t_td[RH])
    tbar = [_mid_stance(timing, i) for i in range(4)]
    d_p = wrap_half(0.5 * (tbar[LH] + tbar[RH] - tbar[LF] - tbar[RF]))
    return GaitMetrics(duty=duty, d_f=d_f, d_h=d_h, d_p=d_p)


def classify(metrics: GaitMetrics, eps_lag: float = EPS_LAG_DEFAULT) -> GaitLabel:
    """Map the (d_f, d_h) sign pair to a gallop label.

    Lags within ``eps_lag`` of 0 or +-0.5 are degenerate (bounding or
    symmetric gaits) and classify as NonGallop.
    """
    for d in (metrics.d_f, metrics.d_h):
        if not np.isfinite(d) or abs(d) <= eps_lag or abs(d) >= 0.5 - eps_lag:
            return GaitLabel.NON_GALLOP
    if metrics.d_f > 0:
        return GaitLabel.TL if metrics.d_h > 0 else GaitLabel.RL
    return GaitLabel.RR if metrics.d_h > 0 else GaitLabel.TR


def classify_timing(timing: StrideTiming, eps_lag: float = EPS_LAG_DEFAULT) -> GaitLabel:
    return classify(phase_lags(timing), eps_lag)


def footfall_order(timing: StrideTiming) -> list[str]:
    """Legs sorted by touchdown time from the stride anchor.

    Ties are broken by anatomical order LH, LF, RF, RH.
    """
    return [LEGS[i] for i in sorted(range(4), key=lambda i: (timing.t_td[i], i))]


def label_sequence(seq: StrideSequence, eps_lag: float = EPS_LAG_DEFAULT) -> StrideSequence:
    """Populate labels for every stride via phase lags + sign-pair rule."""
    labels = []
    for k, stride in enumerate(seq.strides):
        try:
            labels.append(classify_timing(stride, eps_lag))
        except InvalidTimingError as exc:
            raise InvalidTimingError(f"stride {k}: {exc}") from exc
    return StrideSequence(strides=list(seq.strides), labels=labels, subject_id=seq.subject_id)


GALLOP_ORDER = ("TL", "TR", "RL", "RR")


def transition_stats(seq: StrideSequence) -> TransitionStats:
    """Count consecutive same/different-gait pairs over gallop strides.

    NonGallop strides break adjacency: a pair is counted only when two
    gallop-labelled strides are direct neighbours in the sequence.
    """
    if not seq.labels:
        raise EmptyStatsError("sequence has no labels; run label_sequence first")
    idx = {g: i for i, g in enumerate(GALLOP_ORDER)}
    counts = np.zeros((4, 4), dtype=int)
    usage = {g: 0 for g in GALLOP_ORDER}
    n_gallop = 0
    for lab in seq.labels:
        if lab is not GaitLabel.NON_GALLOP:
            usage[lab.value] += 1
            n_gallop += 1
    if n_gallop < 2:
        raise EmptyStatsError("need at least 2 gallop-labelled strides")
    for a, b in zip(seq.labels[:-1], seq.labels[1:]):
        if a is GaitLabel.NON_GALLOP or b is GaitLabel.NON_GALLOP:
            continue
        counts[idx[a.value], idx[b.value]] += 1
    row_pct = np.zeros((4, 4))
    row_sums = counts.sum(axis=1)
    for i in range(4):
        if row_sums[i] > 0:
            row_pct[i] = counts[i] / row_sums[i]
    return TransitionStats(gaits=GALLOP_ORDER, counts=counts, usage=usage, row_percentages=row_pct)


# ---------------------------------------------------------------------------
# Stride CSV interface: one row per stride with a mandatory header.
# ---------------------------------------------------------------------------

STRIDE_CSV_HEADER = [
    "subject_id", "duration_T",
    "td_LH", "lo_LH", "td_LF", "lo_LF", "td_RF", "lo_RF", "td_RH", "lo_RH",
]


def read_stride_csv(path_or_text) -> StrideSequence:
    """Read a stride CSV (header mandatory, UTF-8, decimal point)."""
    if hasattr(path_or_text, "read"):
        fh = path_or_text
        rows = list(csv.reader(fh))
    else:
        with open(path_or_text, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    if not rows:
        raise InvalidTimingError("empty stride CSV: header row is mandatory")
    header = [c.strip() for c in rows[0]]
    if header != STRIDE_CSV_HEADER:
        raise InvalidTimingError(f"bad stride CSV header: {header}")
    strides, subject = [], ""
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(STRIDE_CSV_HEADER):
            raise InvalidTimingError(f"row {r}: expected {len(STRIDE_CSV_HEADER)} columns, got {len(row)}")
        try:
            subject = row[0].strip() or subject
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise InvalidTimingError(f"row {r}: {exc}") from exc
        try:
            strides.append(StrideTiming(
                t_td=(vals[1], vals[3], vals[5], vals[7]),
                t_lo=(vals[2], vals[4], vals[6], vals[8]),
                duration=vals[0],
            ))
        except InvalidTimingError as exc:
            raise InvalidTimingError(f"row {r}: {exc}") from exc
    return StrideSequence(strides=strides, subject_id=subject)


def write_stride_csv(path, seq: StrideSequence) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STRIDE_CSV_HEADER)
    for s in seq.strides:
        row = [seq.subject_id, repr(s.duration)]
        for td, lo in zip(s.t_td, s.t_lo):
            row.extend([repr(td), repr(lo)])
        w.writerow(row)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(buf.getvalue())

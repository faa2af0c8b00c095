"""Gear controller: Doppler report -> coherent symbols -> gear, with hysteresis and UE clustering.

Hysteresis lives in coherent-symbol space. Moving to a heavier gear is
immediate; moving to a lighter one needs ``nc`` to clear the lighter gear's
lower boundary by ``hysteresis_margin`` symbols.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .ddchannel import NC_CAP, NC_SENTINEL, format_nc
from .estimate import DopplerReport
from .numerology import Numerology

GEAR1_MIN_NC = 10
GEAR2_MIN_NC = 3


class Gear(enum.IntEnum):
    GEAR1 = 1
    GEAR2 = 2
    GEAR3 = 3

    @property
    def color(self) -> str:
        return {Gear.GEAR1: "green", Gear.GEAR2: "yellow", Gear.GEAR3: "red"}[self]


def nc_from_report(report: DopplerReport, numerology: Numerology) -> float:
    """``floor(scs / spread)``; zero spread or counts above the cap give the sentinel."""
    if report.spread_hz < 0:
        raise ValueError("negative Doppler spread")
    ratio = numerology.scs / report.spread_hz if report.spread_hz else math.inf
    if ratio >= NC_CAP + 1:
        return NC_SENTINEL
    nc = math.floor(ratio)
    return NC_SENTINEL if nc > NC_CAP else nc


def base_gear(nc: float) -> Gear:
    if nc >= GEAR1_MIN_NC:
        return Gear.GEAR1
    if nc >= GEAR2_MIN_NC:
        return Gear.GEAR2
    return Gear.GEAR3


def _lower_bound(gear: Gear) -> float:
    return {Gear.GEAR1: GEAR1_MIN_NC, Gear.GEAR2: GEAR2_MIN_NC, Gear.GEAR3: -math.inf}[gear]


@dataclass(frozen=True)
class GearState:
    gear: Gear = Gear.GEAR1
    last_nc: float = NC_SENTINEL
    hysteresis_margin: int = 2
    history: tuple[tuple[float, Gear], ...] = ()

    def __post_init__(self):
        if self.hysteresis_margin < 0:
            raise ValueError("hysteresis margin must be non-negative")
        object.__setattr__(self, "gear", Gear(self.gear))


def select_gear(nc: float, state: GearState) -> GearState:
    """Next controller state for a new coherent-symbol estimate."""
    if not (nc == NC_SENTINEL or nc >= 0):
        raise ValueError(f"invalid coherent-symbol count {nc!r}")
    target = base_gear(nc)
    if target >= state.gear:
        new = target
    else:
        # Lightest gear whose boundary nc clears by the margin, never lighter than target.
        new = state.gear
        for g in sorted(Gear, reverse=True):
            if target <= g < state.gear and nc >= _lower_bound(g) + state.hysteresis_margin:
                new = g
    return replace(state, gear=new, last_nc=nc, history=state.history + ((nc, new),))


@dataclass(frozen=True)
class UeContext:
    ue_id: int
    report: DopplerReport
    cluster_id: int = -1
    gear: Gear | None = None


def cluster_ues(reports: Sequence[DopplerReport], tolerance_hz: float) -> list[list[DopplerReport]]:
    """1-D single-linkage clustering on spread, split where the sorted gap exceeds the tolerance."""
    if tolerance_hz <= 0:
        raise ValueError("tolerance must be positive")
    ordered = sorted(reports, key=lambda r: (r.spread_hz, r.ue_id))
    clusters: list[list[DopplerReport]] = []
    for r in ordered:
        if clusters and r.spread_hz - clusters[-1][-1].spread_hz <= tolerance_hz:
            clusters[-1].append(r)
        else:
            clusters.append([r])
    return clusters


def worst_case(cluster: Sequence[DopplerReport], numerology: Numerology) -> Gear:
    """Gear of the member with the largest spread."""
    top = max(cluster, key=lambda r: r.spread_hz)
    return base_gear(nc_from_report(top, numerology))


POLICIES: dict[str, Callable[[Sequence[DopplerReport], Numerology], Gear]] = {"worst_case": worst_case}


def assign_cluster_gear(cluster: Sequence[DopplerReport], numerology: Numerology, policy: str = "worst_case") -> Gear:
    if not cluster:
        raise ValueError("empty cluster")
    try:
        return POLICIES[policy](cluster, numerology)
    except KeyError:
        raise ValueError(f"unknown cluster policy {policy!r}") from None


def assign_contexts(reports: Iterable[DopplerReport], numerology: Numerology, tolerance_hz: float) -> list[UeContext]:
    """Cluster the reports and give each UE its cluster's gear, in ue_id order."""
    out = []
    for cid, cluster in enumerate(cluster_ues(list(reports), tolerance_hz)):
        gear = assign_cluster_gear(cluster, numerology)
        out.extend(UeContext(r.ue_id, r, cid, gear) for r in cluster)
    return sorted(out, key=lambda c: c.ue_id)


DECISION_LOG_FIELDS = ("frame", "ue_id", "spread_hz", "nc", "prior_gear", "new_gear")


@dataclass(frozen=True)
class Decision:
    frame: int
    ue_id: int
    spread_hz: float
    nc: float
    prior_gear: Gear
    new_gear: Gear

    def row(self) -> list[str]:
        return [str(self.frame), str(self.ue_id), f"{self.spread_hz:.6g}", format_nc(self.nc),
                str(int(self.prior_gear)), str(int(self.new_gear))]


@dataclass
class DecisionLog:
    entries: list[Decision] = field(default_factory=list)

    def record(self, frame: int, report: DopplerReport, nc: float, prior: Gear, new: Gear) -> None:
        self.entries.append(Decision(frame, report.ue_id, report.spread_hz, nc, prior, new))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DECISION_LOG_FIELDS)
        for e in self.entries:
            w.writerow(e.row())
        return buf.getvalue()

    @staticmethod
    def parse(text: str) -> list[Decision]:
        rows = list(csv.DictReader(io.StringIO(text)))
        out = []
        for r in rows:
            nc = NC_SENTINEL if r["nc"].startswith(">") else int(r["nc"])
            out.append(Decision(int(r["frame"]), int(r["ue_id"]), float(r["spread_hz"]), nc,
                                Gear(int(r["prior_gear"])), Gear(int(r["new_gear"]))))
        return out


class GearController:
    """Single-owner wrapper: one :class:`GearState` per UE plus a decision log."""

    def __init__(self, numerology: Numerology, hysteresis_margin: int = 2, initial: Gear = Gear.GEAR1):
        self.numerology = numerology
        self.margin = hysteresis_margin
        self.initial = Gear(initial)
        self.states: dict[int, GearState] = {}
        self.log = DecisionLog()

    def gear(self, ue_id: int = 0) -> Gear:
        st = self.states.get(ue_id)
        return st.gear if st else self.initial

    def ingest(self, frame: int, report: DopplerReport) -> Gear:
        st = self.states.get(report.ue_id) or GearState(self.initial, hysteresis_margin=self.margin)
        nc = nc_from_report(report, self.numerology)
        new = select_gear(nc, st)
        self.states[report.ue_id] = new
        self.log.record(frame, report, nc, st.gear, new.gear)
        return new.gear

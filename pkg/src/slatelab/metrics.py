"""Session-level measurements, correlation and exit tables, hitrates, A/B lifts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import InputError
from .worldsim import SessionLog, SlotOutcome, World

IPV_SECONDS = 2.0
TABLE1_BUCKETS = ((0.0, 2.0), (2.0, 5.0), (5.0, 25.0), (25.0, math.inf))
EXIT_WINDOWS = (("immediate", 1), ("within_3", 3), ("within_5", 5))
REPORT_METRICS = ("ipv_f", "ipv_e", "ipv", "purchases_f", "purchases_e", "purchases",
                  "dau_proxy", "depth_at_conversion", "fstage_entries")


class UndefinedCorrelationError(InputError):
    pass


def _average_ranks(x: np.ndarray) -> np.ndarray:
    return stats.rankdata(x, method="average")


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("x and y must be 1-d of equal length")
    if len(x) < 2:
        raise InputError("need at least two points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    rx = _average_ranks(x) - (len(x) + 1) / 2.0
    ry = _average_ranks(y) - (len(y) + 1) / 2.0
    rho = float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))
    return max(-1.0, min(1.0, rho))


@dataclass(frozen=True)
class BucketRow:
    low: float
    high: float
    count: int
    rho: float | None


def bucketed_spearman_arrays(view_times: np.ndarray, converted: np.ndarray,
                             buckets=TABLE1_BUCKETS) -> list[BucketRow]:
    """Spearman rho(conversion, view time) within view-time buckets ``(low, high]``.

    Degenerate buckets report ``rho=None`` instead of failing.
    """
    t = np.asarray(view_times, dtype=np.float64)
    y = np.asarray(converted, dtype=np.float64)
    rows = []
    for low, high in buckets:
        mask = (t > low) & (t <= high) if low > 0 else (t >= low) & (t <= high)
        rho = None
        if mask.sum() >= 2:
            try:
                rho = spearman_rho(y[mask], t[mask])
            except UndefinedCorrelationError:
                rho = None
        rows.append(BucketRow(low, high, int(mask.sum()), rho))
    return rows


def bucketed_spearman(slots: Iterable[SlotOutcome], buckets=TABLE1_BUCKETS) -> list[BucketRow]:
    exposed = [s for s in slots if s.exposed]
    return bucketed_spearman_arrays(np.array([s.view_time for s in exposed]),
                                    np.array([s.converted for s in exposed]), buckets)


def exit_probability_table(sessions: Iterable[SessionLog], population: str = "all"
                           ) -> dict[str, dict[int, float | None]]:
    """P(exposure ends within k PVs counted from a slot | that slot's conversion).

    ``population="first"`` restricts the conditioning slots to position 1.
    Reaching the end of the returned list is not an exit.
    """
    if population not in ("all", "first"):
        raise InputError("population must be 'all' or 'first'")
    hits = {name: {0: 0, 1: 0} for name, _ in EXIT_WINDOWS}
    totals = {0: 0, 1: 0}
    any_session = False
    for log in sessions:
        any_session = True
        exposed = log.exposed_slots
        for s in exposed:
            if population == "first" and s.position != 1:
                continue
            totals[s.converted] += 1
            if log.exited_at is None:
                continue
            for name, k in EXIT_WINDOWS:
                if log.exited_at <= s.position + k - 1:
                    hits[name][s.converted] += 1
    if not any_session:
        raise InputError("no sessions")
    return {name: {c: (hits[name][c] / totals[c] if totals[c] else None) for c in (0, 1)}
            for name, _ in EXIT_WINDOWS}


def hitrate_at_k(reranked: Sequence[int], pointwise: Sequence[int], k: int) -> float:
    if not 1 <= k <= min(len(reranked), len(pointwise)):
        raise InputError(f"k={k} exceeds a list length")
    return len(set(reranked[:k]) & set(pointwise[:k])) / k


@dataclass
class MetricReport:
    ipv_f: int = 0
    ipv_e: int = 0
    purchases_f: int = 0
    purchases_e: int = 0
    fstage_entries: int = 0
    sessions: int = 0
    days: int = 0
    active_user_days: int = 0
    conversion_positions: int = 0
    per_category: dict[int, dict[str, float]] = field(default_factory=dict)

    @property
    def ipv(self) -> int:
        return self.ipv_f + self.ipv_e

    @property
    def purchases(self) -> int:
        return self.purchases_f + self.purchases_e

    @property
    def dau_proxy(self) -> float:
        return self.active_user_days / self.days if self.days else 0.0

    @property
    def depth_at_conversion(self) -> float:
        return self.conversion_positions / self.purchases_f if self.purchases_f else 0.0

    def metric(self, name: str) -> float:
        return float(getattr(self, name))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_category"] = {str(k): v for k, v in sorted(self.per_category.items())}
        for name in REPORT_METRICS:
            out[name] = self.metric(name)
        return out


def session_metrics(logs: Sequence[SessionLog], world: World) -> MetricReport:
    """Aggregate IPV, purchases, DAU proxy and depth at conversion over complete days."""
    if not logs:
        raise InputError("empty logs")
    rep = MetricReport()
    users_by_day: dict[int, set[int]] = {}
    per_cat: dict[int, dict[str, float]] = {}
    items = world.items
    for log in logs:
        rep.sessions += 1
        users_by_day.setdefault(log.day, set()).add(log.user_id)
        rep.ipv_e += log.clicked
        if log.estage_converted:
            rep.purchases_e += 1
            c = per_cat.setdefault(items[log.trigger_item_id].category_id,
                                   {"purchases": 0, "depth_sum": 0, "purchases_f": 0})
            c["purchases"] += 1
        rep.fstage_entries += log.entered_fstage
        for s in log.fstage_slots:
            if not s.exposed:
                continue
            if s.view_time > IPV_SECONDS:
                rep.ipv_f += 1
            if s.converted:
                rep.purchases_f += 1
                rep.conversion_positions += s.position
                c = per_cat.setdefault(items[s.item_id].category_id,
                                       {"purchases": 0, "depth_sum": 0, "purchases_f": 0})
                c["purchases"] += 1
                c["purchases_f"] += 1
                c["depth_sum"] += s.position
    rep.days = len(users_by_day)
    rep.active_user_days = sum(len(u) for u in users_by_day.values())
    for c in per_cat.values():
        c["depth_at_conversion"] = c["depth_sum"] / c["purchases_f"] if c["purchases_f"] else 0.0
    rep.per_category = per_cat
    return rep


@dataclass(frozen=True)
class LiftRow:
    metric: str
    a_total: float
    b_total: float
    pooled_lift: float | None
    mean_lift: float | None
    ci_low: float | None
    ci_high: float | None
    p_greater: float | None
    p_less: float | None
    n: int


@dataclass(frozen=True)
class LiftTable:
    rows: tuple[LiftRow, ...]
    label: str = ""

    def row(self, metric: str) -> LiftRow:
        for r in self.rows:
            if r.metric == metric:
                return r
        raise KeyError(metric)

    def to_dict(self) -> dict:
        return {"label": self.label, "rows": [asdict(r) for r in self.rows]}

    def to_text(self) -> str:
        head = f"{'metric':<22}{'A':>12}{'B':>12}{'lift':>10}{'95% CI':>22}{'n':>5}"
        lines = [self.label, head] if self.label else [head]
        for r in self.rows:
            lift = "n/a" if r.mean_lift is None else f"{100 * r.mean_lift:+.2f}%"
            ci = ("" if r.ci_low is None else
                  f"[{100 * r.ci_low:+.2f}%, {100 * r.ci_high:+.2f}%]")
            name = "dau_proxy (DAU proxy)" if r.metric == "dau_proxy" else r.metric
            lines.append(f"{name:<22}{r.a_total:>12.1f}{r.b_total:>12.1f}{lift:>10}{ci:>22}{r.n:>5}")
        return "\n".join(lines) + "\n"


def paired_lifts(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ok = b > 0
    return (a[ok] - b[ok]) / b[ok]


def _summary(values: np.ndarray, level: float = 0.95):
    n = len(values)
    if n == 0:
        return None, None, None, None, None
    mean = float(values.mean())
    if n == 1:
        return mean, None, None, None, None
    sd = float(values.std(ddof=1))
    if sd == 0.0:
        p_gt = 0.0 if mean > 0 else 1.0
        p_lt = 0.0 if mean < 0 else 1.0
        return mean, mean, mean, p_gt, p_lt
    se = sd / math.sqrt(n)
    half = float(stats.t.ppf(0.5 + level / 2, n - 1)) * se
    t = mean / se
    return (mean, mean - half, mean + half,
            float(stats.t.sf(t, n - 1)), float(stats.t.cdf(t, n - 1)))


def compare(reports_a: Sequence[MetricReport], reports_b: Sequence[MetricReport],
            metrics: Sequence[str] = REPORT_METRICS, label: str = "") -> LiftTable:
    """Per-metric relative lift (A-B)/B over paired replicates with a t interval."""
    if len(reports_a) != len(reports_b):
        raise InputError("replicate counts differ")
    rows = []
    for name in metrics:
        a = [r.metric(name) for r in reports_a]
        b = [r.metric(name) for r in reports_b]
        lifts = paired_lifts(a, b)
        mean, lo, hi, p_gt, p_lt = _summary(lifts)
        b_total = float(sum(b))
        pooled = (float(sum(a)) - b_total) / b_total if b_total > 0 else None
        rows.append(LiftRow(name, float(sum(a)), b_total, pooled, mean, lo, hi, p_gt, p_lt,
                            len(lifts)))
    return LiftTable(tuple(rows), label)


def paired_test(a: Sequence[float], b: Sequence[float]) -> dict[str, float]:
    """Paired t statistics on the raw differences a - b."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    mean, lo, hi, p_gt, p_lt = _summary(d)
    if mean is None:
        raise InputError("no pairs")
    p_two = 1.0 if p_gt is None else min(1.0, 2 * min(p_gt, p_lt))
    return {"mean_diff": mean, "ci_low": lo, "ci_high": hi,
            "p_greater": p_gt, "p_less": p_lt, "p_two_sided": p_two, "n": len(d)}


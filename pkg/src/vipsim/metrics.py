"""Run metrics, per-run summaries and the drift-bound constants B, B-hat and G_max."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .congestion import UtilityFunction
from .topology import Catalog, Topology

SUMMARY_FIELDS = ("algorithm", "topology", "lambda", "W", "z", "seed", "slots", "total_delay",
                  "mean_delay", "sum_utility", "mean_backlog", "backlog_slope", "drops", "stale",
                  "unroutable", "unfinished")


class InvariantViolation(AssertionError):
    pass


@dataclass
class RunMetrics:
    delay_records: list = field(default_factory=list)  # (origin, object, created, fulfilled)
    backlog_series: list = field(default_factory=list)  # sum of V(t) per slot
    admitted_total: np.ndarray | None = None  # cumulative alpha per (n, k)
    admitted_slots: int = 0
    utility_mask: np.ndarray | None = None  # pairs that enter the sum utility
    dropped: float = 0.0
    stale: int = 0
    unroutable: int = 0
    unfinished: int = 0
    retransmissions: int = 0
    cache_hits: int = 0
    source_hits: int = 0

    def record_delay(self, origin, obj, created, fulfilled) -> None:
        if fulfilled < created:
            raise InvariantViolation(f"request fulfilled at {fulfilled} before creation at {created}")
        self.delay_records.append((origin, obj, created, fulfilled))

    def record_admissions(self, alpha: np.ndarray) -> None:
        if self.admitted_total is None:
            self.admitted_total = np.zeros_like(alpha, dtype=float)
        self.admitted_total += alpha
        self.admitted_slots += 1

    @property
    def admitted_avg(self) -> np.ndarray | None:
        """Time-averaged admissions (1/t) sum_tau alpha(tau)."""
        if self.admitted_total is None:
            return None
        return self.admitted_total / max(self.admitted_slots, 1)


def achieved_utility(admitted_avg, utility: UtilityFunction, mask=None, floor=None) -> float:
    """sum g(alpha-bar) over the masked pairs.

    ``floor`` (per pair) keeps g finite for pairs that admitted nothing; -1/x
    is singular at zero.
    """
    if admitted_avg is None:
        return 0.0
    x = np.asarray(admitted_avg, dtype=float)
    if floor is not None:
        x = np.maximum(x, floor)
    if mask is not None:
        x = x[mask]
    return float(np.sum(np.asarray(utility(x), dtype=float)))


def backlog_slope(series, tail_fraction: float = 0.1) -> float:
    """Least-squares slope of the last ``tail_fraction`` of the backlog series."""
    y = np.asarray(series, dtype=float)
    n = max(2, int(round(len(y) * tail_fraction)))
    if len(y) < 2:
        return 0.0
    y = y[-n:]
    x = np.arange(len(y), dtype=float)
    return float(np.polyfit(x, y, 1)[0])


def summarize(run: RunMetrics, utility: UtilityFunction | None = None, utility_floor=None,
              requests_expected: bool = True) -> dict:
    """Total/mean delay, sum utility, mean backlog and final-window backlog slope.

    An empty run warns unless ``requests_expected`` is false (virtual plane only).
    """
    out = {}
    if run.delay_records:
        rec = np.asarray([(c, f) for _, _, c, f in run.delay_records], dtype=float)
        delays = rec[:, 1] - rec[:, 0]
        out["total_delay"] = float(delays.sum())
        out["mean_delay"] = float(delays.mean())
        out["empty"] = False
    else:
        if requests_expected:
            warnings.warn("run completed no requests", stacklevel=2)
        out["total_delay"] = 0.0
        out["mean_delay"] = 0.0
        out["empty"] = True
    out["completed"] = len(run.delay_records)
    if utility is not None and run.admitted_total is not None:
        out["sum_utility"] = achieved_utility(run.admitted_avg, utility, run.utility_mask, utility_floor)
    else:
        out["sum_utility"] = 0.0
    series = run.backlog_series
    out["mean_backlog"] = float(np.mean(series)) if len(series) else 0.0
    out["backlog_slope"] = backlog_slope(series) if len(series) >= 2 else 0.0
    out["drops"] = float(run.dropped)
    out["stale"] = run.stale
    out["unroutable"] = run.unroutable
    out["unfinished"] = run.unfinished
    return out


def aggregate(rows: list[dict], keys=("total_delay", "mean_delay", "sum_utility", "mean_backlog",
                                      "backlog_slope")) -> dict:
    """Mean and standard deviation over runs."""
    out = {}
    for k in keys:
        vals = np.array([r[k] for r in rows], dtype=float)
        out[k] = float(vals.mean()) if len(vals) else 0.0
        out[k + "_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    out["runs"] = len(rows)
    return out


@dataclass
class DriftConstants:
    B: float
    B_hat: float
    G_max: float | None
    mu_in_max: np.ndarray
    mu_out_max: np.ndarray
    A_n_max: np.ndarray
    alpha_n_max: np.ndarray
    r_max: float
    C_max: float

    def as_dict(self) -> dict:
        return {
            "B": self.B, "B_hat": self.B_hat, "G_max": self.G_max, "C_max": self.C_max,
            "r_max": self.r_max, "mu_in_max": self.mu_in_max.tolist(),
            "mu_out_max": self.mu_out_max.tolist(), "A_n_max": self.A_n_max.tolist(),
            "alpha_n_max": self.alpha_n_max.tolist(),
        }


def compute_drift_constants(topo: Topology, catalog: Catalog, a_max, cache_rate=None, alpha_max=None,
                            utility: UtilityFunction | None = None) -> DriftConstants:
    """Evaluate the constants in the stability and utility-delay bounds.

    ``a_max`` and ``alpha_max`` are per-(node, object) bounds: scalars or
    N x K arrays.  ``cache_rate`` r_n defaults to floor(L_n / D).
    """
    N, K, D = topo.num_nodes, catalog.object_count, catalog.object_size
    norm = topo.normalized_capacity(D)
    mu_out = np.zeros(N)
    mu_in = np.zeros(N)
    np.add.at(mu_out, topo.link_src, norm)
    np.add.at(mu_in, topo.link_dst, norm)
    A = np.broadcast_to(np.asarray(a_max, dtype=float), (N, K)).sum(axis=1)
    r = topo.cache_slots(D).astype(float) if cache_rate is None else \
        np.broadcast_to(np.asarray(cache_rate, dtype=float), (N,)).astype(float)
    B = float(np.sum(mu_out ** 2 + (A + mu_in + K * r) ** 2 + 2 * mu_out * K * r) / (2 * N))
    if alpha_max is None:
        alpha = np.zeros(N)
        B_hat = float("nan")
        G = None
    else:
        alpha_nk = np.broadcast_to(np.asarray(alpha_max, dtype=float), (N, K))
        alpha = alpha_nk.sum(axis=1)
        B_hat = float(np.sum(mu_out ** 2 + (alpha + mu_in + K * r) ** 2 + 2 * alpha ** 2
                             + 2 * mu_out * K * r) / (2 * N))
        G = None
        if utility is not None:
            G = float(np.sum(utility(alpha_nk)))
            if G < 0:
                warnings.warn(f"G_max = {G:.6g} is negative for utility {utility.name}", stacklevel=2)
    return DriftConstants(B=B, B_hat=B_hat, G_max=G, mu_in_max=mu_in, mu_out_max=mu_out, A_n_max=A,
                          alpha_n_max=alpha, r_max=float(r.max()) if N else 0.0,
                          C_max=topo.c_max(D))

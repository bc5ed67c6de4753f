"""Run metrics, UPT computation and CSV/JSON emission."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .traffic import FileRecord

NODE_CLASSES = ("wifi_ap", "wifi_sta", "enb", "ue")
# the node class whose transmissions carry each (tech, direction)
FLOW_CLASS = {("wifi", "dl"): "wifi_ap", ("wifi", "ul"): "wifi_sta", ("mf", "dl"): "enb", ("mf", "ul"): "ue"}
CSV_COLUMNS = (
    "tech", "direction", "files_generated", "files_completed", "mean_upt_mbps",
    "bytes_delivered", "access_attempts", "access_successes", "collisions", "wasted_grants",
)


def compute_upt(records: Iterable[FileRecord]) -> dict:
    """Mean UPT in Mbps per (tech, direction) over completed files.

    A file's UPT is its size in bits over its sojourn time.  Groups without a
    completed file are absent from the result.
    """
    sums: dict = {}
    for r in records:
        if r.completion_us is None:
            continue
        dt = r.completion_us - r.arrival_us
        if dt <= 0:
            raise ValueError(f"file {r.seq} completes no later than it arrives")
        s = sums.setdefault((r.tech, r.direction), [0.0, 0])
        s[0] += 8.0 * r.size_bytes / dt  # bits per microsecond == Mbps
        s[1] += 1
    return {k: v[0] / v[1] for k, v in sums.items()}


def _counter():
    return {c: 0 for c in NODE_CLASSES}


@dataclass
class RunMetrics:
    """Outcome of one simulation run.

    Per-class counters are keyed by ``wifi_ap``, ``wifi_sta``, ``enb`` and
    ``ue``.  An access attempt is a transmission started after LBT (for a
    scheduled UE, a single-slot LBT performed); it succeeds when its first
    subframe is received clean.
    """

    sim_duration_s: float
    access_attempts: dict = field(default_factory=_counter)
    access_successes: dict = field(default_factory=_counter)
    collisions: dict = field(default_factory=_counter)
    wasted_grants: dict = field(default_factory=_counter)
    nodes: dict = field(default_factory=_counter)
    airtime_us: int = 0
    bytes_generated: int = 0
    bytes_delivered: int = 0
    files: list = field(default_factory=list)

    def upt(self) -> dict:
        return compute_upt(self.files)

    def _upt(self, tech, direction) -> Optional[float]:
        return self.upt().get((tech, direction))

    @property
    def mean_upt_ul_mf(self):
        return self._upt("mf", "ul")

    @property
    def mean_upt_dl_mf(self):
        return self._upt("mf", "dl")

    @property
    def mean_upt_ul_wifi(self):
        return self._upt("wifi", "ul")

    @property
    def mean_upt_dl_wifi(self):
        return self._upt("wifi", "dl")

    def success_rate_per_node(self, cls: str) -> float:
        """Successful accesses per node per second."""
        n = self.nodes[cls]
        if n == 0 or self.sim_duration_s == 0:
            return 0.0
        return self.access_successes[cls] / n / self.sim_duration_s

    def rows(self) -> list[dict]:
        upt = self.upt()
        out = []
        for (tech, direction), cls in FLOW_CLASS.items():
            mine = [f for f in self.files if f.tech == tech and f.direction == direction]
            out.append({
                "tech": tech,
                "direction": direction,
                "files_generated": len(mine),
                "files_completed": sum(f.completion_us is not None for f in mine),
                "mean_upt_mbps": upt.get((tech, direction)),
                "bytes_delivered": sum(f.delivered for f in mine),
                "access_attempts": self.access_attempts[cls],
                "access_successes": self.access_successes[cls],
                "collisions": self.collisions[cls],
                "wasted_grants": self.wasted_grants[cls],
            })
        return out


def fmt_value(v) -> str:
    """Fixed 9-significant-digit rendering; empty for absent values."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt_value(r[c]) for c in columns])
    return buf.getvalue()


def metrics_csv(m: RunMetrics) -> str:
    return to_csv(m.rows(), CSV_COLUMNS)


def metrics_summary(m: RunMetrics, config: dict) -> str:
    summary = {
        "config": config,
        "seed": config.get("seed"),
        "threshold_note": "energy-detection threshold is a threshold-to-noise ratio in dB",
        "flows": m.rows(),
        "airtime_us": m.airtime_us,
        "bytes_generated": m.bytes_generated,
        "bytes_delivered": m.bytes_delivered,
        "nodes": m.nodes,
    }
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"

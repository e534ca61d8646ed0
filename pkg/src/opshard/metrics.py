"""Job metrics and their ``metric,slot_or_task,value`` CSV form.

Deterministic quantities such as loads and byte counts, and wall-clock
measurements are kept apart: ``to_rows(timings=False)`` yields only the
former, so a metrics file is byte-identical across runs with the same seed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import relative_stddev

HEADER = ("metric", "slot_or_task", "value")

_SCALARS_INT = ("m", "n", "map_tasks", "trackers", "max_load", "total_load", "collect_bytes",
                "broadcast_bytes", "wire_bytes", "network_bound", "outputs")
_SCALARS_FLOAT = ("ideal_load", "ratio", "load_rsd")
_SCALARS_STR = ("scheduler",)
_TIMING_SCALARS = ("scheduler_time", "map_phase_time", "reduce_phase_time", "job_time")
_PER_SLOT_INT = ("slot_load",)
_TIMING_PER_SLOT = ("reduce_time", "sort_delay", "run_delay")
_TIMING_PER_TASK = ("map_time",)


@dataclass
class MetricsBundle:
    scheduler: str = ""
    m: int = 0
    n: int = 0
    map_tasks: int = 0
    trackers: int = 0
    max_load: int = 0
    total_load: int = 0
    ideal_load: float = 0.0
    ratio: float = 1.0
    load_rsd: float = 0.0
    collect_bytes: int = 0
    broadcast_bytes: int = 0
    wire_bytes: int = 0
    network_bound: int = 0
    outputs: int = 0
    slot_load: list[int] = field(default_factory=list)
    scheduler_time: float = 0.0
    map_phase_time: float = 0.0
    reduce_phase_time: float = 0.0
    job_time: float = 0.0
    reduce_time: list[float] = field(default_factory=list)
    sort_delay: list[float] = field(default_factory=list)
    run_delay: list[float] = field(default_factory=list)
    map_time: list[float] = field(default_factory=list)

    @property
    def reduce_time_mean(self) -> float:
        return _mean(self.reduce_time)

    @property
    def reduce_time_rsd(self) -> float:
        return relative_stddev(self.reduce_time)

    @property
    def map_time_mean(self) -> float:
        return _mean(self.map_time)

    @property
    def map_time_rsd(self) -> float:
        return relative_stddev(self.map_time)

    @property
    def mean_sort_delay(self) -> float:
        return _mean([d for d in self.sort_delay if not math.isnan(d)])

    @property
    def mean_run_delay(self) -> float:
        return _mean([d for d in self.run_delay if not math.isnan(d)])

    @property
    def measured_bytes(self) -> int:
        return self.collect_bytes + self.broadcast_bytes

    def to_rows(self, timings: bool = False) -> list[tuple[str, str, str]]:
        rows = []
        for name in _SCALARS_STR + _SCALARS_INT + _SCALARS_FLOAT:
            rows.append((name, "", _fmt(getattr(self, name))))
        for name in _PER_SLOT_INT:
            rows.extend((name, str(i), _fmt(v)) for i, v in enumerate(getattr(self, name), 1))
        if timings:
            for name in _TIMING_SCALARS:
                rows.append((name, "", _fmt(getattr(self, name))))
            for name in _TIMING_PER_SLOT + _TIMING_PER_TASK:
                rows.extend((name, str(i), _fmt(v)) for i, v in enumerate(getattr(self, name), 1))
        return rows

    def to_csv(self, timings: bool = False) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        writer.writerows(self.to_rows(timings))
        return buf.getvalue()

    def write(self, path: str | Path, timings: bool = False) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(timings), encoding="utf-8")
        return path

    @classmethod
    def from_csv(cls, text: str) -> "MetricsBundle":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if tuple(header or ()) != HEADER:
            raise ValueError(f"unexpected metrics header {header!r}")
        bundle = cls()
        types = {f.name: f.type for f in fields(cls)}
        for metric, index, value in reader:
            if metric not in types:
                raise ValueError(f"unknown metric {metric!r}")
            current = getattr(bundle, metric)
            if isinstance(current, list):
                conv = int if metric in _PER_SLOT_INT else float
                if int(index) != len(current) + 1:
                    raise ValueError(f"{metric}: index {index} out of order")
                current.append(conv(value))
            elif metric in _SCALARS_STR:
                setattr(bundle, metric, value)
            elif metric in _SCALARS_INT:
                setattr(bundle, metric, int(value))
            else:
                setattr(bundle, metric, float(value))
        return bundle

    @classmethod
    def read(cls, path: str | Path) -> "MetricsBundle":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _mean(values) -> float:
    return sum(values) / len(values) if values else 0.0

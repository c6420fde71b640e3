"""Cluster layout, all-reduce counting, throughput and carbon arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ClusterTopology:
    nodes: int
    gpus_per_node: int

    def __post_init__(self):
        if self.nodes < 1 or self.gpus_per_node < 1:
            raise ValueError("nodes and gpus_per_node must be >= 1")

    @property
    def total_gpus(self) -> int:
        return self.nodes * self.gpus_per_node


@dataclass(frozen=True)
class ParallelLayout:
    tp: int
    pp: int
    dp: int
    intra_node: bool

    @property
    def world_size(self) -> int:
        return self.tp * self.pp * self.dp


def derive_layout(topo: ClusterTopology, tp: int, pp: int) -> ParallelLayout:
    """Data-parallel degree left over after tensor and pipeline splits.

    ``intra_node`` is true when each tp*pp model replica packs whole into nodes,
    i.e. tensor and pipeline traffic never crosses a node boundary.
    """
    if tp < 1 or pp < 1:
        raise ValueError("tp and pp must be >= 1")
    total = topo.total_gpus
    group = tp * pp
    if total % group:
        raise ValueError(
            f"tp*pp={group} does not divide {total} GPUs (remainder {total % group})"
        )
    intra = group <= topo.gpus_per_node and topo.gpus_per_node % group == 0
    return ParallelLayout(tp, pp, total // group, intra)


def allreduce_count(num_layers: int, mode: str) -> tuple[int, int]:
    """Residual-boundary all-reduces per (forward, backward) pass under tensor parallelism."""
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    if mode == "serial":
        n = 2 * num_layers
    elif mode == "parallel":
        n = num_layers
    else:
        raise ValueError(f"mode must be 'serial' or 'parallel', got {mode!r}")
    return n, n


# Published shares carry 0.1% precision over seven sources and sum to 100.1%.
SHARE_TOLERANCE = 5e-3


@dataclass(frozen=True)
class EnergySource:
    name: str
    share: float
    intensity: float  # t CO2 / MWh


@dataclass(frozen=True)
class EnergyMix:
    sources: tuple[EnergySource, ...]
    tolerance: float = SHARE_TOLERANCE

    def __post_init__(self):
        for s in self.sources:
            if s.share < 0 or s.intensity < 0:
                raise ValueError(f"{s.name}: share and intensity must be >= 0")
        total = sum(s.share for s in self.sources)
        if abs(total - 1.0) > self.tolerance:
            raise ValueError(f"shares sum to {total:.6f}, not 1 (tolerance {self.tolerance})")

    @property
    def share_total(self) -> float:
        return math.fsum(s.share for s in self.sources)


def mix_intensity(mix: EnergyMix) -> float:
    """Share-weighted carbon intensity (t CO2 / MWh). Shares are used as given."""
    return math.fsum(s.share * s.intensity for s in mix.sources)


def emissions(mwh: float, intensity: float) -> float:
    if mwh < 0 or intensity < 0:
        raise ValueError("energy and intensity must be >= 0")
    return mwh * intensity


ILLINOIS_MIX = EnergyMix(
    (
        EnergySource("Coal", 0.3040, 0.95),
        EnergySource("Gas", 0.3130, 0.6078),
        EnergySource("Hydroelectric", 0.0130, 0.0),
        EnergySource("Nuclear", 0.1740, 0.0),
        EnergySource("Solar", 0.0030, 0.0),
        EnergySource("Wind", 0.1810, 0.0),
        EnergySource("Other Renewables", 0.0130, 0.0),
    )
)
TRAINING_MWH = 43.92
TOTAL_MWH = 66.24


def parse_mix(text: str, tolerance: float = SHARE_TOLERANCE) -> EnergyMix:
    """Lines of ``name share intensity``; the name may contain spaces, the share
    may be a fraction or a percentage like ``30.40%``. ``#`` starts a comment."""
    sources = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ValueError(f"line {lineno}: expected 'name share intensity'")
        name = " ".join(parts[:-2])
        share_s, inten_s = parts[-2], parts[-1]
        try:
            share = float(share_s[:-1]) / 100 if share_s.endswith("%") else float(share_s)
            inten = float(inten_s)
        except ValueError:
            raise ValueError(f"line {lineno}: share and intensity must be numbers") from None
        sources.append(EnergySource(name, share, inten))
    if not sources:
        raise ValueError("mix file lists no sources")
    return EnergyMix(tuple(sources), tolerance)


def load_mix(path: str | Path, tolerance: float = SHARE_TOLERANCE) -> EnergyMix:
    return parse_mix(Path(path).read_text(encoding="utf-8"), tolerance)


@dataclass(frozen=True)
class ThroughputSummary:
    gpu_count: int
    per_gpu_tflops: float
    aggregate_tflops: float
    tokens_per_sec: float


def throughput_report(
    gpu_count: int, per_gpu_tflops: float, step_tokens: float, step_time: float
) -> ThroughputSummary:
    if gpu_count <= 0 or per_gpu_tflops <= 0 or step_tokens <= 0 or step_time <= 0:
        raise ValueError("all throughput inputs must be positive")
    return ThroughputSummary(
        gpu_count, per_gpu_tflops, gpu_count * per_gpu_tflops, step_tokens / step_time
    )

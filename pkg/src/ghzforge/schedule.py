"""Pulse-schedule and run-result containers shared by protocol and propagator."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

TAGS = ("prep-pulse", "prep-ramp", "pi/2-step", "pi-step", "aux1", "aux2", "precess",
        "reverse-pi", "final-pi/2")


@dataclass(frozen=True)
class RampProfile:
    """Detuning ramp ``delta(t)`` over ``[0, t_ramp]``.

    ``kind="printed"``:    delta0 * (tanh((t_ramp/2 - t) J) - 1)
    ``kind="descending"``: delta0 / 2 * (tanh((t_ramp/2 - t) J) + 1)
    """

    delta0: float
    t_ramp: float
    kind: str = "descending"
    J: float = 1.0

    def __post_init__(self):
        if self.kind not in ("printed", "descending"):
            raise ValueError(f"unknown ramp profile {self.kind!r}")

    def __call__(self, t: float) -> float:
        x = np.tanh((self.t_ramp / 2 - t) * self.J)
        if self.kind == "printed":
            return self.delta0 * (x - 1)
        return self.delta0 / 2 * (x + 1)


@dataclass(frozen=True)
class Segment:
    tag: str
    omega: float
    duration: float
    frame: str = "rotated"
    step: int | None = None
    delta: float = 0.0
    omega_p: float = 0.0
    pulse_phase: float = -np.pi / 2
    ramp: RampProfile | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown segment tag {self.tag!r}")
        if self.duration < 0:
            raise ValueError("segment duration must be non-negative")

    @property
    def label(self) -> str:
        return self.tag if self.step is None else f"{self.tag}({self.step})"

    def record(self) -> dict[str, Any]:
        d = {"tag": self.tag, "step": self.step, "omega": float(self.omega),
             "duration": float(self.duration), "frame": self.frame}
        if self.delta:
            d["delta"] = float(self.delta)
        if self.omega_p:
            d["omega_p"] = float(self.omega_p)
            d["pulse_phase"] = float(self.pulse_phase)
        if self.ramp is not None:
            d["ramp"] = asdict(self.ramp)
        return d

    @classmethod
    def from_record(cls, d: dict[str, Any]) -> "Segment":
        d = dict(d)
        if "ramp" in d:
            d["ramp"] = RampProfile(**d["ramp"])
        return cls(**d)


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple[Segment, ...] = ()

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, k):
        return self.segments[k]

    def __add__(self, other: "PulseSchedule") -> "PulseSchedule":
        return PulseSchedule(self.segments + other.segments)

    @property
    def total_time(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def to_text(self) -> str:
        """One JSON record per line; floats use ``repr`` so output is exact."""
        return "".join(json.dumps(s.record(), sort_keys=True) + "\n" for s in self.segments)

    @classmethod
    def from_text(cls, text: str) -> "PulseSchedule":
        return cls(tuple(Segment.from_record(json.loads(line))
                         for line in text.splitlines() if line.strip()))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


@dataclass
class RunResult:
    """Observable traces plus trajectory statistics and run metadata."""

    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    labels: list[str] = field(default_factory=list)
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    state: np.ndarray | None = None
    fidelities: np.ndarray = field(default_factory=lambda: np.zeros(0))
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.fidelities)) if len(self.fidelities) else float("nan")

    @property
    def std(self) -> float:
        f = np.asarray(self.fidelities, dtype=float)
        # shifting by one sample keeps identical trajectories at exactly zero
        return float(np.std(f - f[0])) if len(f) else float("nan")

    @property
    def n(self) -> int:
        return len(self.fidelities)

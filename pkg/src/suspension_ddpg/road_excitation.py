"""Time-domain road excitation traces: raised-cosine bumps and ISO 8608 roads.

Every trace carries the analytic elevation rate alongside the elevation, so
the vehicle model never sees a finite-difference derivative.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np

from ._io import atomic_open
from .errors import SpecError
from .vehicle_dynamics import RoadInput

ISO_REFERENCE_FREQ = 0.1  # n0 [cycles/m]

# Geometric-mean displacement PSD at n0 per roughness class [m^3].
ISO_CLASS_PSD = {
    "A": 16e-6,
    "B": 64e-6,
    "C": 256e-6,
    "D": 1024e-6,
    "E": 4096e-6,
}


@dataclass(frozen=True)
class SingleBump:
    height: float = 0.1  # [m]
    length: float = 5.0  # [m]
    start_position: float = 25.0  # [m]


@dataclass(frozen=True)
class MultiHump:
    count: int = 3
    height: float = 0.1  # [m]
    length: float = 5.0  # [m]
    spacing: float = 15.0  # start-to-start distance [m]
    start_position: float = 25.0  # [m]


@dataclass(frozen=True)
class Iso8608:
    road_class: str = "E"
    n_components: int = 400
    spatial_freq_range: Tuple[float, float] = (0.011, 2.83)  # [cycles/m]
    seed: int = 0


RoadKind = Union[SingleBump, MultiHump, Iso8608]


@dataclass(frozen=True)
class RoadSpec:
    kind: RoadKind = field(default_factory=Iso8608)
    vehicle_speed: float = 20.0  # [m/s]
    duration: float = 10.0  # [s]
    dt: float = 1e-3  # [s]

    def __post_init__(self):
        if not self.vehicle_speed > 0:
            raise SpecError("vehicle_speed must be positive")
        if not self.duration > 0:
            raise SpecError("duration must be positive")
        if not self.dt > 0:
            raise SpecError("dt must be positive")
        k = self.kind
        if isinstance(k, (SingleBump, MultiHump)):
            if not k.height > 0:
                raise SpecError("bump height must be positive")
            if not k.length > 0:
                raise SpecError("bump length must be positive")
            if k.start_position < 0:
                raise SpecError("start_position must be non-negative")
        if isinstance(k, MultiHump):
            if k.count < 1:
                raise SpecError("hump count must be at least 1")
            if k.spacing < 0:
                raise SpecError("spacing must be non-negative")
        if isinstance(k, Iso8608):
            if k.road_class not in ISO_CLASS_PSD:
                raise SpecError(f"unknown ISO 8608 class {k.road_class!r}")
            if k.n_components < 1:
                raise SpecError("n_components must be at least 1")
            low, high = k.spatial_freq_range
            if not (0 < low < high):
                raise SpecError(f"empty spatial frequency range ({low}, {high})")

    @property
    def n_samples(self):
        return int(round(self.duration / self.dt)) + 1

    def with_seed(self, seed):
        if not isinstance(self.kind, Iso8608):
            return self
        kind = Iso8608(self.kind.road_class, self.kind.n_components, self.kind.spatial_freq_range, int(seed))
        return RoadSpec(kind, self.vehicle_speed, self.duration, self.dt)

    def with_duration(self, duration):
        return RoadSpec(self.kind, self.vehicle_speed, duration, self.dt)


@dataclass(frozen=True, eq=False)
class RoadTrace:
    """Sampled road with exact rate; ``at(t)`` interpolates between samples.

    Interpolation is cubic Hermite on (x_r, v_r), so sample instants return
    the stored values exactly and midpoints are fourth-order accurate.
    """

    dt: float
    x_r: np.ndarray
    v_r: np.ndarray
    spec: RoadSpec | None = None

    def __post_init__(self):
        x = np.asarray(self.x_r, dtype=np.float64)
        v = np.asarray(self.v_r, dtype=np.float64)
        if x.shape != v.shape or x.ndim != 1 or x.size < 2:
            raise SpecError("road trace needs matching 1-D x_r and v_r with >= 2 samples")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "x_r", x)
        object.__setattr__(self, "v_r", v)

    def __len__(self):
        return self.x_r.size

    @property
    def t(self):
        return np.arange(self.x_r.size) * self.dt

    @property
    def samples(self):
        return np.column_stack([self.x_r, self.v_r])

    @property
    def duration(self):
        return (self.x_r.size - 1) * self.dt

    def sample(self, i):
        return RoadInput(float(self.x_r[i]), float(self.v_r[i]))

    def at(self, t):
        u = t / self.dt
        i = int(math.floor(u + 1e-9))
        last = self.x_r.size - 1
        if i < 0 or i > last or (i == last and u - i > 1e-9):
            raise IndexError(f"t={t} outside road trace of duration {self.duration}")
        s = u - i
        if s <= 1e-9:
            return RoadInput(float(self.x_r[i]), float(self.v_r[i]))
        if s >= 1.0 - 1e-9:
            return RoadInput(float(self.x_r[i + 1]), float(self.v_r[i + 1]))
        x0, x1 = float(self.x_r[i]), float(self.x_r[i + 1])
        v0, v1 = float(self.v_r[i]), float(self.v_r[i + 1])
        h = self.dt
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        x = h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1
        dx = ((6 * s2 - 6 * s) * x0 + (3 * s2 - 4 * s + 1) * h * v0
              + (-6 * s2 + 6 * s) * x1 + (3 * s2 - 2 * s) * h * v1) / h
        return RoadInput(x, dx)

    __call__ = at

    def checksum(self):
        h = hashlib.sha256()
        h.update(self.x_r.tobytes())
        h.update(self.v_r.tobytes())
        return h.hexdigest()


def _bump_profile(s, start, length, height):
    """Raised-cosine elevation and its slope d x_r / d s over distance ``s``."""
    u = (s - start) / length
    inside = (u >= 0.0) & (u <= 1.0)
    phase = 2.0 * np.pi * u
    x = np.where(inside, 0.5 * height * (1.0 - np.cos(phase)), 0.0)
    slope = np.where(inside, 0.5 * height * (2.0 * np.pi / length) * np.sin(phase), 0.0)
    return x, slope


def _check_fits(spec, end_position):
    reach = spec.duration * spec.vehicle_speed
    if end_position > reach + 1e-9:
        raise SpecError(f"road feature ends at {end_position} m but the trace only covers {reach} m")


def generate_single_bump(spec: RoadSpec) -> RoadTrace:
    kind = spec.kind
    if not isinstance(kind, SingleBump):
        raise SpecError("generate_single_bump needs a SingleBump spec")
    _check_fits(spec, kind.start_position + kind.length)
    t = np.arange(spec.n_samples) * spec.dt
    s = spec.vehicle_speed * t
    x, slope = _bump_profile(s, kind.start_position, kind.length, kind.height)
    return RoadTrace(spec.dt, x, slope * spec.vehicle_speed, spec)


def generate_multi_hump(spec: RoadSpec) -> RoadTrace:
    kind = spec.kind
    if not isinstance(kind, MultiHump):
        raise SpecError("generate_multi_hump needs a MultiHump spec")
    if kind.count > 1 and kind.spacing < kind.length:
        raise SpecError(f"hump spacing {kind.spacing} m is shorter than hump length {kind.length} m")
    last_start = kind.start_position + (kind.count - 1) * kind.spacing
    _check_fits(spec, last_start + kind.length)
    t = np.arange(spec.n_samples) * spec.dt
    s = spec.vehicle_speed * t
    x = np.zeros_like(s)
    slope = np.zeros_like(s)
    for j in range(kind.count):
        xj, sj = _bump_profile(s, kind.start_position + j * kind.spacing, kind.length, kind.height)
        x += xj
        slope += sj
    return RoadTrace(spec.dt, x, slope * spec.vehicle_speed, spec)


def iso_psd(n, road_class="E"):
    """Displacement PSD G_d(n) [m^3] with waviness exponent 2."""
    return ISO_CLASS_PSD[road_class] * (np.asarray(n, dtype=np.float64) / ISO_REFERENCE_FREQ) ** -2.0


def iso_components(kind: Iso8608):
    """Component frequencies, amplitudes and phases for one ISO realization."""
    low, high = kind.spatial_freq_range
    if not (0 < low < high):
        raise SpecError(f"empty spatial frequency range ({low}, {high})")
    dn = (high - low) / kind.n_components
    n = low + dn * (np.arange(kind.n_components) + 0.5)
    amp = np.sqrt(2.0 * iso_psd(n, kind.road_class) * dn)
    rng = np.random.default_rng(kind.seed)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=kind.n_components)
    return n, amp, phase


def iso_variance(kind: Iso8608):
    """Variance of the synthesized profile, sum of G_d(n_i) * dn."""
    n, amp, _ = iso_components(kind)
    return float(np.sum(amp**2) / 2.0)


def generate_iso8608(spec: RoadSpec, chunk: int = 4096) -> RoadTrace:
    kind = spec.kind
    if not isinstance(kind, Iso8608):
        raise SpecError("generate_iso8608 needs an Iso8608 spec")
    n, amp, phase = iso_components(kind)
    omega = 2.0 * np.pi * n * spec.vehicle_speed  # temporal angular frequencies
    t = np.arange(spec.n_samples) * spec.dt
    x = np.empty_like(t)
    v = np.empty_like(t)
    for lo in range(0, t.size, chunk):
        arg = np.outer(t[lo:lo + chunk], omega) + phase
        x[lo:lo + chunk] = np.cos(arg) @ amp
        v[lo:lo + chunk] = -np.sin(arg) @ (amp * omega)
    return RoadTrace(spec.dt, x, v, spec)


def flat_road(duration, dt=1e-3):
    n = int(round(duration / dt)) + 1
    return RoadTrace(dt, np.zeros(n), np.zeros(n))


def generate(spec: RoadSpec) -> RoadTrace:
    if isinstance(spec.kind, SingleBump):
        return generate_single_bump(spec)
    if isinstance(spec.kind, MultiHump):
        return generate_multi_hump(spec)
    if isinstance(spec.kind, Iso8608):
        return generate_iso8608(spec)
    raise SpecError(f"unknown road kind {type(spec.kind).__name__}")


def feature_end_time(spec: RoadSpec):
    """Time at which the last bump/hump ends, or ``None`` for stochastic roads."""
    k = spec.kind
    if isinstance(k, SingleBump):
        return (k.start_position + k.length) / spec.vehicle_speed
    if isinstance(k, MultiHump):
        return (k.start_position + (k.count - 1) * k.spacing + k.length) / spec.vehicle_speed
    return None


def write_csv(trace: RoadTrace, path):
    """Write ``t,x_r,v_r`` rows at full double precision."""
    t = trace.t
    with atomic_open(path) as fh:
        fh.write("t,x_r,v_r\n")
        for ti, xi, vi in zip(t.tolist(), trace.x_r.tolist(), trace.v_r.tolist()):
            fh.write(f"{ti!r},{xi!r},{vi!r}\n")


def read_csv(path) -> RoadTrace:
    """Parse a ``t,x_r,v_r`` file; raises SpecError naming the bad row."""
    ts, xs, vs = [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "t,x_r,v_r":
            raise SpecError(f"{path}: row 1: expected header 't,x_r,v_r', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise SpecError(f"{path}: row {lineno}: expected 3 columns, got {len(parts)}")
            try:
                t, x, v = (float(p) for p in parts)
            except ValueError:
                raise SpecError(f"{path}: row {lineno}: non-numeric value") from None
            if not all(math.isfinite(q) for q in (t, x, v)):
                raise SpecError(f"{path}: row {lineno}: non-finite value")
            ts.append(t)
            xs.append(x)
            vs.append(v)
    if len(ts) < 2:
        raise SpecError(f"{path}: need at least two samples")
    t = np.array(ts)
    steps = np.diff(t)
    dt = float(steps[0])
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, t[-1]):
        bad = int(np.argmax(np.abs(steps - dt))) + 3
        raise SpecError(f"{path}: row {bad}: samples are not uniformly spaced")
    # recover the nominal step from the total span to avoid one-sample rounding
    dt = float((t[-1] - t[0]) / (t.size - 1))
    return RoadTrace(dt, np.array(xs), np.array(vs))

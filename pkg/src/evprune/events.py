"""Event-camera data: streams, windowed accumulation, serialization, simulation.

Core objects
------------
- Event: one sensor record (t_us, x, y, polarity).
- EventStream: an immutable, time-sorted sequence of events with sensor bounds.
- EventFrame: a per-pixel accumulation of events over a temporal window.

File formats
------------
CSV: UTF-8 lines ``t_us,x,y,p``. The file may start with up to two directive
lines ``# width W`` and ``# height H``; without them the sensor dimensions
are inferred as max(x)+1, max(y)+1. One optional header line (first field
not an integer) is skipped after the directives. Polarity is given as -1/1
or 0/1, with 0 mapped to -1.

EVT1 binary: 16-byte header

    bytes 0..3   magic "EVT1"
    bytes 4..5   u16 LE version (= 1)
    bytes 6..7   u16 LE sensor_width
    bytes 8..9   u16 LE sensor_height
    bytes 10..11 u16 LE reserved (= 0)
    bytes 12..15 u32 LE record count

followed by 9-byte records: u32 LE t_us, u16 LE x, u16 LE y, i8 polarity.
Records must be sorted by t_us; files that read successfully round-trip
bit-exactly.

All values are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError

EVT1_MAGIC = b"EVT1"
EVT1_VERSION = 1
_HEADER = struct.Struct("<4sHHHHI")
_RECORD = struct.Struct("<IHHb")
_LOG_GUARD = 1e-3


@dataclass(frozen=True)
class Event:
    """One brightness-change record: time in microseconds, pixel, sign."""

    t_us: int
    x: int
    y: int
    polarity: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-sorted events within a fixed sensor extent.

    The constructor stable-sorts by timestamp (preserving the original
    order among equal timestamps) and validates every record against the
    sensor bounds.
    """

    sensor_width: int
    sensor_height: int
    events: tuple[Event, ...]

    def __post_init__(self):
        if self.sensor_width < 0 or self.sensor_height < 0:
            raise ValidationError("sensor dimensions must be non-negative")
        evs = tuple(self.events)
        if any(evs[i].t_us > evs[i + 1].t_us for i in range(len(evs) - 1)):
            evs = tuple(sorted(evs, key=lambda e: e.t_us))
        for e in evs:
            if e.t_us < 0:
                raise ValidationError(f"negative timestamp {e.t_us}")
            if not (0 <= e.x < self.sensor_width and 0 <= e.y < self.sensor_height):
                raise ValidationError(
                    f"event at ({e.x}, {e.y}) outside sensor "
                    f"{self.sensor_width}x{self.sensor_height}"
                )
            if e.polarity not in (-1, 1):
                raise ValidationError(f"polarity must be -1 or +1, got {e.polarity}")
        object.__setattr__(self, "events", evs)

    def __len__(self) -> int:
        return len(self.events)

    def extent_us(self) -> tuple[int, int]:
        """Half-open window [t_first, t_last + 1) covering all events."""
        if not self.events:
            return (0, 0)
        return (self.events[0].t_us, self.events[-1].t_us + 1)


@dataclass(frozen=True, eq=False)
class EventFrame:
    """Per-pixel non-negative accumulation, shape (height, width)."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError("counts must be a 2D array")
        if np.any(arr < 0):
            raise ValidationError("counts must be non-negative")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)

    @property
    def height(self) -> int:
        return self.counts.shape[0]

    @property
    def width(self) -> int:
        return self.counts.shape[1]

    def total(self) -> float:
        return float(self.counts.sum())


def read_events_csv(data: bytes | str) -> EventStream:
    """Parse the CSV event format described in the module docstring.

    Raises FormatError for malformed rows (wrong field count, non-integer
    fields) and ValidationError for domain violations (coordinates outside
    the declared dimensions, negative timestamps, bad polarity values),
    both with the offending line number.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    width = height = None

    idx = 0
    while idx < len(lines):
        parts = lines[idx].strip().split()
        if len(parts) == 3 and parts[0] == "#" and parts[1] in ("width", "height"):
            try:
                value = int(parts[2])
            except ValueError:
                raise FormatError(f"line {idx + 1}: bad {parts[1]} directive") from None
            if parts[1] == "width":
                width = value
            else:
                height = value
            idx += 1
        else:
            break

    rows: list[tuple[int, int, int, int, int]] = []
    header_allowed = True
    for lineno in range(idx, len(lines)):
        line = lines[lineno].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if header_allowed and fields and not _is_int(fields[0]):
            header_allowed = False
            continue
        header_allowed = False
        if len(fields) != 4:
            raise FormatError(f"line {lineno + 1}: expected 4 fields, got {len(fields)}")
        try:
            t, x, y, p = (int(f) for f in fields)
        except ValueError:
            raise FormatError(f"line {lineno + 1}: non-integer field in {line!r}") from None
        if t < 0:
            raise ValidationError(f"line {lineno + 1}: negative timestamp {t}")
        if p == 0:
            p = -1
        if p not in (-1, 1):
            raise ValidationError(f"line {lineno + 1}: polarity must be -1, 0 or 1, got {p}")
        rows.append((lineno + 1, t, x, y, p))

    if width is None:
        width = max((r[2] for r in rows), default=-1) + 1
    if height is None:
        height = max((r[3] for r in rows), default=-1) + 1
    for lineno, t, x, y, p in rows:
        if not (0 <= x < width and 0 <= y < height):
            raise ValidationError(
                f"line {lineno}: event at ({x}, {y}) outside declared "
                f"dimensions {width}x{height}"
            )
    return EventStream(width, height, tuple(Event(t, x, y, p) for _, t, x, y, p in rows))


def _is_int(field: str) -> bool:
    try:
        int(field)
        return True
    except ValueError:
        return False


def write_events_bin(stream: EventStream) -> bytes:
    """Serialize to EVT1. Bit-exact inverse of read_events_bin."""
    if not (0 <= stream.sensor_width <= 0xFFFF and 0 <= stream.sensor_height <= 0xFFFF):
        raise ValidationError("sensor dimensions do not fit u16")
    out = bytearray()
    out += _HEADER.pack(
        EVT1_MAGIC, EVT1_VERSION, stream.sensor_width, stream.sensor_height, 0,
        len(stream.events),
    )
    for e in stream.events:
        if e.t_us > 0xFFFFFFFF:
            raise ValidationError(f"timestamp {e.t_us} does not fit u32")
        out += _RECORD.pack(e.t_us, e.x, e.y, e.polarity)
    return bytes(out)


def read_events_bin(data: bytes) -> EventStream:
    """Parse EVT1 bytes. Rejects anything that would not round-trip."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, width, height, reserved, count = _HEADER.unpack_from(data, 0)
    if magic != EVT1_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != EVT1_VERSION:
        raise FormatError(f"unsupported version {version}")
    if reserved != 0:
        raise FormatError("reserved field must be 0")
    expected = _HEADER.size + count * _RECORD.size
    if len(data) != expected:
        raise FormatError(
            f"record count {count} implies {expected} bytes, file has {len(data)}"
        )
    events = []
    prev_t = -1
    for i in range(count):
        t, x, y, p = _RECORD.unpack_from(data, _HEADER.size + i * _RECORD.size)
        if p not in (-1, 1):
            raise FormatError(f"record {i}: polarity byte must be -1 or +1, got {p}")
        if t < prev_t:
            raise FormatError(f"record {i}: timestamps not sorted")
        prev_t = t
        events.append(Event(t, x, y, p))
    return EventStream(width, height, tuple(events))


def accumulate(stream: EventStream, t0_us: int, t1_us: int) -> EventFrame:
    """Count events per pixel over the half-open window [t0_us, t1_us).

    Counting is polarity-agnostic: opposite-polarity events at the same
    pixel add up instead of cancelling, so motion is never masked by
    alternating signs.
    """
    if t0_us > t1_us:
        raise ValidationError(f"window start {t0_us} after end {t1_us}")
    counts = np.zeros((stream.sensor_height, stream.sensor_width), dtype=np.float64)
    if stream.events:
        t = np.fromiter((e.t_us for e in stream.events), dtype=np.int64, count=len(stream))
        x = np.fromiter((e.x for e in stream.events), dtype=np.intp, count=len(stream))
        y = np.fromiter((e.y for e in stream.events), dtype=np.intp, count=len(stream))
        sel = (t >= t0_us) & (t < t1_us)
        np.add.at(counts, (y[sel], x[sel]), 1.0)
    return EventFrame(counts)


def resize_to(frame: EventFrame, width: int, height: int) -> EventFrame:
    """Rebin counts onto a width x height grid, conserving the total.

    Source pixel (x, y) lands in target bin (x*width//w, y*height//h);
    pure coordinate rebinning, no interpolation, so no fractional
    pseudo-events are introduced.
    """
    if width < 1 or height < 1:
        raise ValidationError("target dimensions must be >= 1")
    if width == frame.width and height == frame.height:
        return frame
    ys = (np.arange(frame.height, dtype=np.int64) * height) // frame.height
    xs = (np.arange(frame.width, dtype=np.int64) * width) // frame.width
    out = np.zeros((height, width), dtype=np.float64)
    np.add.at(out, (ys[:, None], xs[None, :]), frame.counts)
    return EventFrame(out)


def simulate_events(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    contrast: float,
    duration_us: int,
) -> EventStream:
    """Two-frame contrast-threshold event simulation.

    Per pixel, the brightness change in log space is quantized by the
    contrast threshold: n = floor(|log(b + g) - log(a + g)| / contrast)
    with log guard g = 1e-3. The pixel emits n events whose polarity is
    the sign of the log difference, timestamped k * duration_us // n for
    k = 0..n-1 (evenly spaced in [0, duration_us)). Deterministic; equal
    frames produce the empty stream.
    """
    a = np.asarray(frame_a, dtype=np.float64)
    b = np.asarray(frame_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValidationError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if contrast <= 0:
        raise ValidationError("contrast threshold must be > 0")
    if duration_us < 0:
        raise ValidationError("duration must be non-negative")
    if np.any(a < 0) or np.any(a > 1) or np.any(b < 0) or np.any(b > 1):
        raise ValidationError("pixel intensities must lie in [0, 1]")

    dlog = np.log(b + _LOG_GUARD) - np.log(a + _LOG_GUARD)
    n = np.floor(np.abs(dlog) / contrast).astype(np.int64)
    pol = np.where(dlog >= 0, 1, -1)

    height, width = a.shape
    events: list[Event] = []
    for y, x in zip(*np.nonzero(n)):
        count = int(n[y, x])
        p = int(pol[y, x])
        for k in range(count):
            events.append(Event(k * duration_us // count, int(x), int(y), p))
    return EventStream(width, height, tuple(events))

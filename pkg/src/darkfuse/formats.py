"""On-disk formats: EVT1 event files, event CSV, 16/8-bit PGM, sidecars.

Every format is self-describing; reading an artifact never requires the
producing configuration.  Format violations raise FormatError naming the
offending byte offset where that is meaningful.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .sensor import PROV_UNKNOWN, EventStream, RawFrame

EVT_MAGIC = b"EVT1"
_HEADER = struct.Struct("<4sHHQd")  # magic, width, height, count, threshold
_RECORD_DTYPE = np.dtype([
    ("t", "<u8"),
    ("x", "<u2"),
    ("y", "<u2"),
    ("p", "i1"),
    ("provenance", "u1"),
    ("reserved", "<u2"),
])
assert _RECORD_DTYPE.itemsize == 16

EVENT_CSV_HEADER = "t_ns,x,y,p"


# ---------------------------------------------------------------------------
# Events: EVT1 binary
# ---------------------------------------------------------------------------

def write_events(path, stream: EventStream) -> None:
    header = _HEADER.pack(
        EVT_MAGIC, stream.width, stream.height, len(stream), stream.contrast_threshold
    )
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    records["provenance"] = stream.provenance
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def read_events(path) -> EventStream:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header, need {_HEADER.size} bytes at offset 0")
    magic, width, height, count, threshold = _HEADER.unpack_from(data, 0)
    if magic != EVT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0")
    payload = data[_HEADER.size:]
    expected = count * _RECORD_DTYPE.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes at offset {_HEADER.size}, "
            f"expected {expected} for {count} records"
        )
    records = np.frombuffer(payload, dtype=_RECORD_DTYPE)
    for name, bound in (("x", width), ("y", height)):
        bad = np.nonzero(records[name] >= bound)[0]
        if len(bad):
            i = int(bad[0])
            offset = _HEADER.size + i * _RECORD_DTYPE.itemsize
            raise FormatError(
                f"{path}: record {i} (byte offset {offset}) has {name}="
                f"{int(records[name][i])} outside sensor width/height"
            )
    bad_p = np.nonzero(~np.isin(records["p"], (-1, 1)))[0]
    if len(bad_p):
        i = int(bad_p[0])
        offset = _HEADER.size + i * _RECORD_DTYPE.itemsize
        raise FormatError(f"{path}: record {i} (byte offset {offset}) has invalid polarity")
    stream = EventStream(
        int(width), int(height), float(threshold),
        records["t"].astype(np.int64),
        records["x"].astype(np.int32),
        records["y"].astype(np.int32),
        records["p"].astype(np.int8),
        records["provenance"].astype(np.uint8),
    )
    if not stream.is_sorted():
        raise FormatError(f"{path}: records are not in (t, y, x, p) order")
    return stream


# ---------------------------------------------------------------------------
# Events: CSV
# ---------------------------------------------------------------------------

def write_events_csv(path, stream: EventStream) -> None:
    """Plain-text alternative; carries no provenance column."""
    with open(path, "w") as fh:
        fh.write(EVENT_CSV_HEADER + "\n")
        for t, x, y, p in zip(stream.t, stream.x, stream.y, stream.p):
            fh.write(f"{int(t)},{int(x)},{int(y)},{int(p)}\n")


def read_events_csv(path, width: int, height: int, contrast_threshold: float) -> EventStream:
    """CSV records get PROV_UNKNOWN; geometry comes from the caller."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != EVENT_CSV_HEADER:
            raise FormatError(f"{path}: expected header {EVENT_CSV_HEADER!r}, got {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    try:
        arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), 4)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed CSV row: {exc}") from exc
    if len(arr) == 0:
        arr = np.empty((0, 4), dtype=np.int64)
    return EventStream(
        width, height, contrast_threshold,
        arr[:, 0], arr[:, 1].astype(np.int32), arr[:, 2].astype(np.int32),
        arr[:, 3].astype(np.int8),
        np.full(len(arr), PROV_UNKNOWN, dtype=np.uint8),
    )


# ---------------------------------------------------------------------------
# PGM (P5) and sidecars
# ---------------------------------------------------------------------------

def _parse_pgm_header(data: bytes, path) -> tuple[int, int, int, int]:
    """Return (width, height, maxval, payload offset); handles '#' comments."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated PGM header at byte offset {pos}")
        ch = data[pos:pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise FormatError(f"{path}: unterminated comment at byte offset {pos}")
            pos = nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r} at byte offset 0)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric PGM header field: {exc}") from exc
    return width, height, maxval, pos


def write_pgm16(path, values: np.ndarray) -> None:
    """16-bit P5, maxval 65535, big-endian samples; values rounded and clipped."""
    arr = np.rint(np.asarray(values, dtype=np.float64))
    arr = np.clip(arr, 0, 65535).astype(">u2")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(arr.tobytes())


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, maxval, offset = _parse_pgm_header(data, path)
    if maxval != 65535:
        raise FormatError(f"{path}: unsupported maxval {maxval}, only 65535 is handled")
    expected = width * height * 2
    payload = data[offset:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes at offset {offset}, expected {expected}"
        )
    return np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.float64)


def write_pgm8(path, values: np.ndarray) -> None:
    """8-bit P5 for display outputs; values rounded and clipped to [0, 255]."""
    arr = np.rint(np.asarray(values, dtype=np.float64))
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())


def read_pgm8(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, maxval, offset = _parse_pgm_header(data, path)
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}, only 255 is handled")
    payload = data[offset:]
    if len(payload) != width * height:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {width * height}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).astype(np.float64)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_raw(path, frame: RawFrame, black_level: float = 0.0,
              exposure_ns: int = 0, extra: dict | None = None) -> None:
    """16-bit PGM plus a JSON sidecar carrying the acquisition metadata."""
    write_pgm16(path, frame.values)
    doc = {
        "gain": frame.gain,
        "black_level": black_level,
        "exposure_ns": exposure_ns,
        "timestamp_ns": frame.timestamp_ns,
    }
    if extra:
        doc.update(extra)
    with open(sidecar_path(path), "w") as fh:
        json.dump(doc, fh, indent=1)


def read_raw(path) -> tuple[RawFrame, dict]:
    values = read_pgm16(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(f"{side}: missing RAW sidecar")
    with open(side) as fh:
        doc = json.load(fh)
    try:
        frame = RawFrame(values=values, gain=float(doc["gain"]),
                         timestamp_ns=int(doc["timestamp_ns"]))
    except KeyError as exc:
        raise FormatError(f"{side}: sidecar missing field {exc}") from exc
    return frame, doc


def write_map_pgm(path, values: np.ndarray, extra: dict | None = None) -> None:
    """Inspection export of a real-valued map: affine-map to u16 + sidecar.

    stored = (value - offset) * scale; the sidecar records offset and scale
    so the map can be recovered.
    """
    values = np.asarray(values, dtype=np.float64)
    lo = float(values.min())
    hi = float(values.max())
    scale = 65535.0 / (hi - lo) if hi > lo else 1.0
    write_pgm16(path, (values - lo) * scale)
    doc = {"offset": lo, "scale": scale}
    if extra:
        doc.update(extra)
    with open(sidecar_path(path), "w") as fh:
        json.dump(doc, fh, indent=1)


def read_map_pgm(path) -> np.ndarray:
    stored = read_pgm16(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(f"{side}: missing map sidecar")
    with open(side) as fh:
        doc = json.load(fh)
    return stored / doc["scale"] + doc["offset"]


# ---------------------------------------------------------------------------
# Radiance sequences
# ---------------------------------------------------------------------------

def write_radiance_dir(directory, radiance, electrons_per_dn: float = 1.0) -> None:
    """Persist a radiance sequence as 16-bit PGM frames plus one sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(radiance.num_frames):
        name = f"frame_{i:05d}.pgm"
        write_pgm16(directory / name, radiance.frames[i] / electrons_per_dn)
        names.append(name)
    doc = {
        "frame_times_ns": radiance.frame_times.tolist(),
        "electrons_per_dn": electrons_per_dn,
        "frames": names,
    }
    with open(directory / "radiance.json", "w") as fh:
        json.dump(doc, fh, indent=1)


def load_radiance_dir(directory):
    """Read a radiance sequence from PGM frames + radiance.json sidecar."""
    from .sensor import RadianceSequence

    directory = Path(directory)
    side = directory / "radiance.json"
    if not side.exists():
        raise FormatError(f"{side}: missing radiance sidecar")
    with open(side) as fh:
        doc = json.load(fh)
    try:
        times = np.asarray(doc["frame_times_ns"], dtype=np.int64)
        scale = float(doc["electrons_per_dn"])
        names = doc["frames"]
    except KeyError as exc:
        raise FormatError(f"{side}: sidecar missing field {exc}") from exc
    if len(names) != len(times):
        raise FormatError(f"{side}: frame list and timestamps disagree in length")
    frames = np.stack([read_pgm16(directory / n) * scale for n in names])
    return RadianceSequence(frame_times=times, frames=frames)

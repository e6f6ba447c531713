"""Chunked per-channel binary episode container.

Layout (little-endian throughout, f32 = IEEE-754):

    magic "RMBE" | version u16 | header_len u32 | header JSON
    per channel, in header order: chunks of 64 timesteps (last ragged),
        each chunk = raw_len u32 | stored_len u32 | codec u8 (0 raw,
        1 deflate) | payload | crc32(payload) u32
    footer: one u64 per channel = offset of its first chunk

The header JSON carries the env spec, the channel table (dtype, per-step
shape, compression flag), T, seed, source, and the success flag. Chunking
lets a reader seek to one channel and stream it without touching the
rest; the per-chunk codec is chosen by trial, deflate only when it earns
at least a 10% reduction. Files are immutable once written.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Optional

import numpy as np

from ..core import EnvSpec
from ..errors import (BadMagic, CrcMismatch, InvariantViolation,
                      TruncatedFile, VersionUnsupported)

MAGIC = b"RMBE"
FORMAT_VERSION = 1
CHUNK_STEPS = 64
CODEC_RAW = 0
CODEC_DEFLATE = 1
DEFLATE_GAIN = 0.9  # deflate wins only if stored <= 0.9 * raw

ACTION_CHANNEL = "action"
SOURCES = ("scripted", "keyboard", "web")

_DTYPE_TO_TAG = {np.dtype("<f4"): "f32", np.dtype("u1"): "u8", np.dtype("<i4"): "i32"}
_TAG_TO_DTYPE = {v: k for k, v in _DTYPE_TO_TAG.items()}


@dataclass
class Episode:
    """One recorded trajectory: per-channel tensors plus the action rows."""

    env_spec: EnvSpec
    channels: dict[str, np.ndarray]   # name -> [T, *shape]
    actions: np.ndarray               # [T, action_dim] f32
    seed: int
    source: str
    success: bool

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])

    def check(self) -> None:
        if self.actions.ndim != 2 or self.actions.shape[0] < 1:
            raise InvariantViolation("actions must be [T >= 1, action_dim]")
        if self.source not in SOURCES:
            raise InvariantViolation(f"unknown source {self.source!r}")
        t = self.length
        for name, arr in self.channels.items():
            if name == ACTION_CHANNEL:
                raise InvariantViolation(f"{ACTION_CHANNEL!r} is a reserved channel name")
            if arr.shape[0] != t:
                raise InvariantViolation(
                    f"channel {name!r} has {arr.shape[0]} rows, expected {t}")
            if arr.dtype not in _DTYPE_TO_TAG:
                raise InvariantViolation(
                    f"channel {name!r} dtype {arr.dtype} unsupported")


def _normalize(arr: np.ndarray) -> np.ndarray:
    """Force little-endian contiguous layout without changing bits."""
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    return np.ascontiguousarray(arr, dtype=dt)


def _chunk_spans(t: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + CHUNK_STEPS, t)) for lo in range(0, t, CHUNK_STEPS)]


def _write_channel(f: BinaryIO, arr: np.ndarray, compress: bool) -> None:
    for lo, hi in _chunk_spans(arr.shape[0]):
        raw = _normalize(arr[lo:hi]).tobytes()
        codec, payload = CODEC_RAW, raw
        if compress:
            deflated = zlib.compress(raw, 6)
            if len(deflated) <= DEFLATE_GAIN * len(raw):
                codec, payload = CODEC_DEFLATE, deflated
        f.write(struct.pack("<IIB", len(raw), len(payload), codec))
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


def write_episode(ep: Episode, path: str | Path, compress: bool = True) -> None:
    """Serialize an episode; the file parses back bit-identically."""
    ep.check()
    path = Path(path)
    actions = np.ascontiguousarray(ep.actions, dtype="<f4")
    table = []
    arrays: list[np.ndarray] = []
    for name, arr in ep.channels.items():
        arr = _normalize(arr)
        table.append({"name": name, "dtype": _DTYPE_TO_TAG[arr.dtype],
                      "shape": list(arr.shape[1:]), "compress": compress})
        arrays.append(arr)
    table.append({"name": ACTION_CHANNEL, "dtype": "f32",
                  "shape": [int(actions.shape[1])], "compress": compress})
    arrays.append(actions)

    header = json.dumps({
        "env_spec": ep.env_spec.to_dict(),
        "channels": table,
        "T": ep.length,
        "seed": int(ep.seed),
        "source": ep.source,
        "success": bool(ep.success),
    }).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, len(header)))
        f.write(header)
        offsets = []
        for entry, arr in zip(table, arrays):
            offsets.append(f.tell())
            _write_channel(f, arr, entry["compress"])
        for off in offsets:
            f.write(struct.pack("<Q", off))


@dataclass
class _Header:
    spec_dict: dict
    table: list[dict]
    t: int
    seed: int
    source: str
    success: bool
    end_offset: int


def _read_header(f: BinaryIO) -> _Header:
    magic = f.read(4)
    if len(magic) < 4 or magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    fixed = f.read(6)
    if len(fixed) < 6:
        raise TruncatedFile("file ends inside the fixed header")
    version, hlen = struct.unpack("<HI", fixed)
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"format version {version} unsupported")
    raw = f.read(hlen)
    if len(raw) < hlen:
        raise TruncatedFile("file ends inside the header JSON")
    h = json.loads(raw.decode("utf-8"))
    return _Header(h["env_spec"], h["channels"], int(h["T"]), int(h["seed"]),
                   h["source"], bool(h["success"]), 10 + hlen)


def _read_channel(f: BinaryIO, entry: dict, t: int,
                  body_limit: Optional[int] = None) -> np.ndarray:
    name = entry["name"]
    dtype = _TAG_TO_DTYPE[entry["dtype"]]
    shape = tuple(entry["shape"])
    row_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
    buf = bytearray()
    for chunk_idx, (lo, hi) in enumerate(_chunk_spans(t)):
        head = f.read(9)
        if len(head) < 9 or (body_limit is not None and f.tell() > body_limit):
            raise TruncatedFile("file ends inside a chunk header", channel=name)
        raw_len, stored_len, codec = struct.unpack("<IIB", head)
        payload = f.read(stored_len)
        crc_bytes = f.read(4)
        if len(payload) < stored_len or len(crc_bytes) < 4 or \
                (body_limit is not None and f.tell() > body_limit):
            raise TruncatedFile("file ends inside a chunk", channel=name)
        if zlib.crc32(payload) != struct.unpack("<I", crc_bytes)[0]:
            raise CrcMismatch(name, chunk_idx)
        data = zlib.decompress(payload) if codec == CODEC_DEFLATE else payload
        if len(data) != raw_len or raw_len != (hi - lo) * row_bytes:
            raise TruncatedFile(
                f"chunk {chunk_idx} decodes to {len(data)} bytes, expected "
                f"{(hi - lo) * row_bytes}", channel=name)
        buf += data
    arr = np.frombuffer(bytes(buf), dtype=dtype)
    return arr.reshape((t,) + shape).copy()


def _read_footer(f: BinaryIO, n_channels: int) -> list[int]:
    f.seek(0, 2)
    size = f.tell()
    if size < 8 * n_channels:
        raise TruncatedFile("file too small to hold the channel offset table")
    f.seek(size - 8 * n_channels)
    return list(struct.unpack(f"<{n_channels}Q", f.read(8 * n_channels)))


def _assemble(header: _Header, decoded: dict[str, np.ndarray]) -> Episode:
    actions = decoded.pop(ACTION_CHANNEL)
    return Episode(env_spec=EnvSpec.from_dict(header.spec_dict),
                   channels=decoded, actions=actions, seed=header.seed,
                   source=header.source, success=header.success)


def read_episode(path: str | Path) -> Episode:
    """Parse a full episode file."""
    with open(path, "rb") as f:
        header = _read_header(f)
        f.seek(0, 2)
        body_limit = f.tell() - 8 * len(header.table)
        if body_limit < header.end_offset:
            raise TruncatedFile("file too small to hold the channel offset table")
        f.seek(header.end_offset)
        decoded = {}
        for entry in header.table:
            decoded[entry["name"]] = _read_channel(f, entry, header.t, body_limit)
    return _assemble(header, decoded)


def read_channels(path: str | Path, subset: Iterable[str]) -> dict[str, np.ndarray]:
    """Read only the requested channels, seeking via the offset footer.

    ``"action"`` may be requested like any channel. Touches just the
    header, the footer, and the selected channels' byte ranges.
    """
    wanted = set(subset)
    with open(path, "rb") as f:
        header = _read_header(f)
        names = [e["name"] for e in header.table]
        missing = wanted - set(names)
        if missing:
            raise KeyError(f"channels not in file: {sorted(missing)}")
        offsets = _read_footer(f, len(names))
        f.seek(0, 2)
        body_limit = f.tell() - 8 * len(names)
        out = {}
        for entry, off in zip(header.table, offsets):
            if entry["name"] not in wanted:
                continue
            if off < header.end_offset or off > body_limit:
                raise TruncatedFile("channel offset out of range", channel=entry["name"])
            f.seek(off)
            out[entry["name"]] = _read_channel(f, entry, header.t, body_limit)
    return out


def read_header(path: str | Path) -> dict:
    """Header metadata only (env spec dict, channel table, T, seed, ...)."""
    with open(path, "rb") as f:
        h = _read_header(f)
    return {"env_spec": h.spec_dict, "channels": h.table, "T": h.t,
            "seed": h.seed, "source": h.source, "success": h.success}


@dataclass
class ValidationReport:
    path: str
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def add(self, check: str, channel: Optional[str], detail: str) -> None:
        self.failures.append({"check": check, "channel": channel, "detail": detail})


def validate(path: str | Path) -> ValidationReport:
    """Integrity report: CRC per chunk, shapes, footer, abs/rel duality.

    Never raises for content problems; every failed check becomes a
    report entry.
    """
    from .dataset import to_absolute  # local import to avoid a cycle

    report = ValidationReport(str(path))
    try:
        with open(path, "rb") as f:
            header = _read_header(f)
            f.seek(0, 2)
            body_limit = f.tell() - 8 * len(header.table)
            f.seek(header.end_offset)
            decoded: dict[str, np.ndarray] = {}
            walked: list[int] = []
            for entry in header.table:
                walked.append(f.tell())
                try:
                    decoded[entry["name"]] = _read_channel(f, entry, header.t, body_limit)
                except CrcMismatch as e:
                    report.add("crc", e.channel, str(e))
                    return report  # stream position is unreliable past a bad chunk
                except TruncatedFile as e:
                    report.add("truncated", e.channel, str(e))
                    return report
            footer = _read_footer(f, len(header.table))
            if footer != walked:
                report.add("footer", None, f"offset table {footer} != walked {walked}")
    except (BadMagic, VersionUnsupported, TruncatedFile, OSError, ValueError) as e:
        report.add("parse", None, f"{type(e).__name__}: {e}")
        return report

    declared = {c["name"] for c in header.spec_dict.get("observation_channels", [])}
    for name in sorted(declared - set(decoded)):
        report.add("missing_channel", name, "declared in env spec but absent from file")

    for name, arr in decoded.items():
        if arr.shape[0] != header.t:
            report.add("shape", name, f"{arr.shape[0]} rows != T={header.t}")

    for name in sorted(decoded):
        if not name.endswith("_rel"):
            continue
        abs_name = name[:-4] + "_abs"
        if abs_name not in decoded:
            report.add("pairing", name, f"no matching {abs_name}")
            continue
        rel, abs_arr = decoded[name], decoded[abs_name]
        if not np.all(rel[0] == 0):
            report.add("rel_start", name, "first relative row is not zero")
        recon = to_absolute(rel, abs_arr[0])
        err = float(np.max(np.abs(recon.astype(np.float64) - abs_arr.astype(np.float64))))
        if err > 1e-9:
            report.add("abs_rel", name, f"reconstruction error {err:.3e} > 1e-9")
    return report

import struct
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

from src.core.exceptions import DomainError
from src.schemas.reports import BinaryTrace
from src.schemas.run_config import TraceFormat

MAGIC = b"GEB1"
_HEADER = struct.Struct("<4sI")


# Text codec: one 0/1 per line
def encode_text(trace: BinaryTrace) -> str:
    """Newline-delimited 0/1 text"""
    return "".join("1\n" if bit else "0\n" for bit in trace.bits.tolist())


def decode_text(text: str) -> BinaryTrace:
    """Parse newline-delimited 0/1 text; blank lines are ignored"""
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    invalid = [line for line in lines if line not in ("0", "1")]
    if invalid:
        raise DomainError(f"trace text holds non-binary entries, e.g. {invalid[0]!r}")
    return BinaryTrace(bits=np.array([int(line) for line in lines], dtype=np.uint8))


# Binary codec: magic, little-endian u32 length, LSB-first packed bits
def encode_binary(trace: BinaryTrace) -> bytes:
    """GEB1 container"""
    if len(trace) >= 2**32:
        raise DomainError(f"trace of {len(trace)} slots exceeds the u32 length field")
    packed = np.packbits(trace.bits, bitorder="little")
    return _HEADER.pack(MAGIC, len(trace)) + packed.tobytes()


def decode_binary(data: bytes) -> BinaryTrace:
    """Parse a GEB1 container"""
    if len(data) < _HEADER.size:
        raise DomainError("truncated trace: missing GEB1 header")
    magic, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DomainError(f"bad trace magic {magic!r}, expected {MAGIC!r}")
    payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if payload.size * 8 < length:
        raise DomainError(
            f"truncated trace: header says {length} slots, payload holds {payload.size * 8}"
        )
    bits = np.unpackbits(payload, count=length, bitorder="little")
    return BinaryTrace(bits=bits)


def write_traces(
    directory: Union[str, Path],
    traces: Iterable[BinaryTrace],
    fmt: TraceFormat = TraceFormat.TXT,
) -> List[Path]:
    """Write one file per replication, trace_<rep>.<txt|geb>"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fmt = TraceFormat(fmt)
    written = []
    for index, trace in enumerate(traces):
        rep = trace.rep if trace.rep is not None else index
        path = directory / f"trace_{rep:04d}.{fmt.value}"
        if fmt is TraceFormat.GEB:
            path.write_bytes(encode_binary(trace))
        else:
            path.write_text(encode_text(trace), encoding="utf-8")
        written.append(path)
    return written


def read_trace(path: Union[str, Path]) -> BinaryTrace:
    """Read a trace file, choosing the codec from its suffix"""
    path = Path(path)
    if path.suffix == f".{TraceFormat.GEB.value}":
        return decode_binary(path.read_bytes())
    return decode_text(path.read_text(encoding="utf-8"))

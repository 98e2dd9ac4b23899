"""Pure-Python reader and writer for DFFV feature files.

Layout (little-endian): b"DFFV", u32 version, u32 dim, u32 count, then per
entry a u32 id length, the UTF-8 id and dim float32 values; an optional JSON
trailer fills the rest of the file. Offline extractors use write_dffv to hand
hidden states to the router.
"""

import json
import struct

MAGIC = b"DFFV"
VERSION = 1


def write_dffv(path, dim, entries, trailer=None):
    """entries: mapping or iterable of (id, sequence of dim floats)."""
    entries = list(entries.items() if hasattr(entries, "items") else entries)
    out = bytearray(MAGIC)
    out += struct.pack("<III", VERSION, dim, len(entries))
    seen = set()
    for ident, values in entries:
        values = list(values)
        if len(values) != dim:
            raise ValueError(f"feature {ident!r} has dim {len(values)}, expected {dim}")
        if ident in seen:
            raise ValueError(f"duplicate feature id {ident!r}")
        seen.add(ident)
        raw = ident.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack(f"<{dim}f", *values)
    if trailer:
        out += json.dumps(trailer).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def read_dffv(path):
    """Returns (dim, {id: [float, ...]}, trailer dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError("not a feature file (bad magic)")
    version, dim, count = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported feature file version {version}")
    pos = 16
    features = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        ident = data[pos : pos + n].decode("utf-8")
        pos += n
        features[ident] = list(struct.unpack_from(f"<{dim}f", data, pos))
        pos += 4 * dim
    rest = data[pos:]
    trailer = json.loads(rest) if rest else {}
    return dim, features, trailer

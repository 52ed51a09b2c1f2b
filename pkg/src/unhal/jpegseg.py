"""Segment-level JPEG parsing and metadata embedding.

The container travels in APP11 (0xFFEB) segments tagged with a private
identifier. Each segment payload is:

    "UHALMETA\\0"  (9 bytes)
    chunk_index    u16 big-endian (0-based)
    chunk_total    u16 big-endian
    up to 65,000 container bytes

Big-endian matches JPEG's own length fields. 9 + 4 + 65,000 + 2 stays under
the 65,533 segment-length ceiling. Embedding only splices whole segments
into the stream, after the last existing APPn marker (or right after SOI if
there is none), so the entropy-coded image data is untouched and any
standard decoder produces pixel-identical output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import ChunkGap, JpegStructureError, MetadataNotFound

SOI = 0xD8
EOI = 0xD9
SOS = 0xDA
APP11 = 0xEB
IDENTIFIER = b"UHALMETA\x00"
MAX_CHUNK_PAYLOAD = 65_000

_STANDALONE = {0x01} | set(range(0xD0, 0xD8))  # TEM, RST0-7


@dataclass
class Segment:
    marker: int          # second marker byte (0xD8 for SOI, ...)
    offset: int          # offset of the 0xFF marker byte
    length: int          # total bytes including marker (and entropy data
    #                      for SOS)
    payload: bytes | None


def iter_segments(data: bytes):
    """Walk a JPEG stream segment by segment.

    Yields ``Segment`` records up to and including EOI. The SOS segment's
    length spans its entropy-coded data (restart markers and byte stuffing
    handled), so consecutive segments tile the stream.
    """
    if len(data) < 2 or data[0] != 0xFF or data[1] != SOI:
        raise JpegStructureError("missing SOI marker; not a JPEG stream")
    yield Segment(marker=SOI, offset=0, length=2, payload=None)
    pos = 2
    n = len(data)
    while True:
        if pos + 2 > n:
            raise JpegStructureError(
                f"truncated JPEG: expected a marker at offset {pos}")
        if data[pos] != 0xFF:
            raise JpegStructureError(
                f"expected marker byte 0xFF at offset {pos}, found "
                f"{data[pos]:#04x}")
        start = pos
        # skip fill bytes
        while pos + 1 < n and data[pos + 1] == 0xFF:
            pos += 1
        if pos + 2 > n:
            raise JpegStructureError("truncated JPEG inside marker fill")
        marker = data[pos + 1]
        pos += 2
        if marker == EOI:
            yield Segment(marker=EOI, offset=start, length=pos - start,
                          payload=None)
            return
        if marker in _STANDALONE:
            yield Segment(marker=marker, offset=start, length=pos - start,
                          payload=None)
            continue
        if pos + 2 > n:
            raise JpegStructureError(
                f"truncated JPEG: marker {marker:#04x} missing its length")
        (seg_len,) = struct.unpack(">H", data[pos:pos + 2])
        if seg_len < 2 or pos + seg_len > n:
            raise JpegStructureError(
                f"segment {marker:#04x} at offset {start} overruns the "
                "stream")
        payload = data[pos + 2:pos + seg_len]
        pos += seg_len
        if marker == SOS:
            # entropy-coded data runs until the next real marker
            scan_start = pos
            while True:
                if pos + 1 >= n:
                    raise JpegStructureError(
                        "truncated JPEG inside entropy-coded data")
                if data[pos] == 0xFF and data[pos + 1] != 0x00 and \
                        data[pos + 1] not in range(0xD0, 0xD8):
                    break
                pos += 1
            del scan_start
            yield Segment(marker=SOS, offset=start, length=pos - start,
                          payload=payload)
        else:
            yield Segment(marker=marker, offset=start, length=pos - start,
                          payload=payload)


def _is_appn(marker: int) -> bool:
    return 0xE0 <= marker <= 0xEF


def _chunk_segments(container: bytes) -> bytes:
    total = max(1, -(-len(container) // MAX_CHUNK_PAYLOAD))
    if total > 0xFFFF:
        raise ChunkGap(f"container needs {total} chunks; limit is 65535")
    out = bytearray()
    for index in range(total):
        part = container[index * MAX_CHUNK_PAYLOAD:
                         (index + 1) * MAX_CHUNK_PAYLOAD]
        seg_len = 2 + len(IDENTIFIER) + 4 + len(part)
        out += bytes([0xFF, APP11])
        out += struct.pack(">H", seg_len)
        out += IDENTIFIER
        out += struct.pack(">HH", index, total)
        out += part
    return bytes(out)


def jpeg_embed(jpeg: bytes, container: bytes) -> bytes:
    """Insert the container as APP11 chunks after the last APPn segment."""
    insert_at = 2  # directly after SOI when no APPn exists
    for seg in iter_segments(jpeg):
        if _is_appn(seg.marker):
            insert_at = seg.offset + seg.length
        if seg.marker == SOS:
            break
    return jpeg[:insert_at] + _chunk_segments(container) + jpeg[insert_at:]


def _own_chunks(jpeg: bytes):
    for seg in iter_segments(jpeg):
        if seg.marker == APP11 and seg.payload and \
                seg.payload.startswith(IDENTIFIER):
            yield seg


def jpeg_extract(jpeg: bytes) -> bytes:
    """Reassemble container bytes from the stream's APP11 chunks."""
    chunks = {}
    total = None
    for seg in _own_chunks(jpeg):
        body = seg.payload[len(IDENTIFIER):]
        if len(body) < 4:
            raise ChunkGap(f"metadata chunk at offset {seg.offset} too "
                           "short for its header")
        index, this_total = struct.unpack(">HH", body[:4])
        if total is None:
            total = this_total
        elif total != this_total:
            raise ChunkGap(f"inconsistent chunk totals: {total} vs "
                           f"{this_total}")
        if index in chunks:
            raise ChunkGap(f"duplicate metadata chunk index {index}")
        chunks[index] = body[4:]
    if total is None:
        raise MetadataNotFound("metadata not found: no UHALMETA segments "
                               "in this JPEG")
    missing = [i for i in range(total) if i not in chunks]
    if missing:
        raise ChunkGap(f"metadata chunk gap: missing indices {missing}")
    return b"".join(chunks[i] for i in range(total))


def jpeg_strip(jpeg: bytes) -> bytes:
    """Remove this package's metadata segments, reversing jpeg_embed."""
    spans = [(seg.offset, seg.offset + seg.length)
             for seg in _own_chunks(jpeg)]
    if not spans:
        return jpeg
    out = bytearray()
    pos = 0
    for start, end in spans:
        out += jpeg[pos:start]
        pos = end
    out += jpeg[pos:]
    return bytes(out)


def validate_structure(jpeg: bytes) -> list:
    """Fully walk the stream; returns the segment list or raises."""
    segs = list(iter_segments(jpeg))
    if segs[-1].marker != EOI:
        raise JpegStructureError("JPEG does not end with EOI")
    return segs

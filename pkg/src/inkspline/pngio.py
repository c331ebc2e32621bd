"""PNG read/write for float canvases: 8- and 16-bit gray/RGB/RGBA.

Pillow handles every 8-bit case.  Pillow has no 16-bit color modes, so
16-bit images go through a small codec for the fixed subset we emit:
non-interlaced, no palette, filter type 0.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np
from PIL import Image

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_COLOR_TYPE = {1: 0, 3: 2, 4: 6}  # channels -> PNG color type
_CHANNELS = {0: 1, 2: 3, 4: 3, 6: 4}


class PngError(ValueError):
    """Unsupported or malformed PNG content."""


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload))
    )


def write_png(path, pixels: np.ndarray, bit_depth: int = 8) -> None:
    """Write a float image in [0, 1] (H, W) or (H, W, C) as PNG."""
    px = np.asarray(pixels, dtype=float)
    if px.ndim == 2:
        px = px[:, :, None]
    if px.ndim != 3 or px.shape[2] not in (1, 3, 4):
        raise PngError(f"expected (H, W, C in 1|3|4), got {px.shape}")
    if bit_depth not in (8, 16):
        raise PngError(f"bit depth must be 8 or 16, got {bit_depth}")
    scale = 255 if bit_depth == 8 else 65535
    q = np.round(np.clip(px, 0.0, 1.0) * scale).astype(
        np.uint8 if bit_depth == 8 else np.uint16
    )
    c = q.shape[2]
    if bit_depth == 8:
        mode = {1: "L", 3: "RGB", 4: "RGBA"}[c]
        Image.fromarray(q[:, :, 0] if c == 1 else q, mode=mode).save(path, "PNG")
        return
    h, w = q.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, 16, _COLOR_TYPE[c], 0, 0, 0)
    raw = q.astype(">u2").tobytes()
    stride = w * c * 2
    body = b"".join(
        b"\x00" + raw[r * stride : (r + 1) * stride] for r in range(h)
    )
    with open(path, "wb") as fh:
        fh.write(_PNG_SIG)
        fh.write(_chunk(b"IHDR", ihdr))
        fh.write(_chunk(b"IDAT", zlib.compress(body, 6)))
        fh.write(_chunk(b"IEND", b""))


def read_png(path) -> np.ndarray:
    """Read a PNG into a float array in [0, 1], shape (H, W, C)."""
    with open(path, "rb") as fh:
        head = fh.read(len(_PNG_SIG))
        if head != _PNG_SIG:
            raise PngError("not a PNG file")
        depth = None
        color_type = None
        w = h = 0
        idat = b""
        while True:
            hdr = fh.read(8)
            if len(hdr) < 8:
                break
            (length,) = struct.unpack(">I", hdr[:4])
            tag = hdr[4:]
            payload = fh.read(length)
            fh.read(4)  # crc
            if tag == b"IHDR":
                w, h, depth, color_type, comp, filt, inter = struct.unpack(
                    ">IIBBBBB", payload
                )
                if inter != 0:
                    raise PngError("interlaced PNG not supported")
            elif tag == b"IDAT":
                idat += payload
            elif tag == b"IEND":
                break
    if depth == 8:
        img = Image.open(path)
        if img.mode == "P":
            img = img.convert("RGBA" if "transparency" in img.info else "RGB")
        arr = np.asarray(img, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return arr / 255.0
    if depth != 16:
        raise PngError(f"unsupported bit depth {depth}")
    if color_type not in _CHANNELS:
        raise PngError(f"unsupported 16-bit color type {color_type}")
    c = _CHANNELS[color_type]
    body = zlib.decompress(idat)
    stride = w * c * 2
    rows = np.empty((h, w, c), dtype=np.uint16)
    prev = np.zeros(stride, dtype=np.uint8)
    for r in range(h):
        off = r * (stride + 1)
        filt = body[off]
        line = np.frombuffer(body[off + 1 : off + 1 + stride], dtype=np.uint8).copy()
        line = _unfilter(filt, line, prev, c * 2)
        prev = line
        rows[r] = line.view(">u2").astype(np.uint16).reshape(w, c)
    return rows.astype(float) / 65535.0


def _unfilter(filt: int, line: np.ndarray, prev: np.ndarray, bpp: int) -> np.ndarray:
    if filt == 0:
        return line
    if filt == 2:  # up
        return (line + prev).astype(np.uint8)
    if filt == 1:  # sub
        out = line.copy()
        for i in range(bpp, len(out)):
            out[i] = (out[i] + out[i - bpp]) & 0xFF
        return out
    if filt == 3:  # average
        out = line.copy()
        for i in range(len(out)):
            left = out[i - bpp] if i >= bpp else 0
            out[i] = (out[i] + ((int(left) + int(prev[i])) >> 1)) & 0xFF
        return out
    if filt == 4:  # paeth
        out = line.copy()
        for i in range(len(out)):
            a = int(out[i - bpp]) if i >= bpp else 0
            b = int(prev[i])
            cc = int(prev[i - bpp]) if i >= bpp else 0
            p = a + b - cc
            pa, pb, pc = abs(p - a), abs(p - b), abs(p - cc)
            pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else cc)
            out[i] = (out[i] + pred) & 0xFF
        return out
    raise PngError(f"unsupported PNG filter {filt}")

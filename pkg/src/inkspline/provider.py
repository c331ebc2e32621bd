"""External image-gradient provider: subprocess wire protocol (version EGP1).

Keeps neural image losses out of the core: the engine sends each rendered
frame to a provider process and receives a dense image-space gradient (and
optionally a scalar loss) to splice into the canvas gradient.

Wire format, over the provider's stdin/stdout:

  request:  ASCII header line  b"EGP1 REQ <step> <png_bytes>\n"
            followed by exactly <png_bytes> bytes of an 8-bit PNG encoding
            of the rendered canvas.
  response: ASCII header line  b"EGP1 RES <loss> <H> <W> <C>\n"
            where <loss> is a decimal float or the word "none",
            followed by H*W*C little-endian float32 values, row-major,
            channel-minor: the gradient of the provider's loss w.r.t. the
            image.

A version tag other than EGP1, a gradient shape that does not match the
canvas, or non-finite values abort the optimization.
"""

from __future__ import annotations

import subprocess
import tempfile
from pathlib import Path

import numpy as np

from .pngio import read_png, write_png

PROTOCOL_VERSION = b"EGP1"


class ProviderError(RuntimeError):
    """Protocol violation or provider failure."""


def encode_image_png(image: np.ndarray) -> bytes:
    """8-bit PNG bytes for a float image in [0, 1]."""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "frame.png"
        write_png(path, image, bit_depth=8)
        return path.read_bytes()


def decode_image_png(data: bytes) -> np.ndarray:
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "frame.png"
        path.write_bytes(data)
        return read_png(path)


class GradientProvider:
    """Client half of the EGP1 protocol; spawns and talks to the provider."""

    def __init__(self, command: list[str]):
        self.command = list(command)
        self.proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )

    def query(self, step: int, image: np.ndarray):
        """Send one rendered frame; returns (loss or None, gradient array)."""
        if self.proc.poll() is not None:
            raise ProviderError("provider process has exited")
        img = np.asarray(image, dtype=float)
        if img.ndim == 2:
            img = img[:, :, None]
        png = encode_image_png(img)
        header = b"%s REQ %d %d\n" % (PROTOCOL_VERSION, step, len(png))
        self.proc.stdin.write(header)
        self.proc.stdin.write(png)
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        parts = line.split()
        if len(parts) != 6 or parts[0] != PROTOCOL_VERSION or parts[1] != b"RES":
            raise ProviderError(f"bad response header: {line!r}")
        loss = None if parts[2] == b"none" else float(parts[2])
        h, w, c = (int(v) for v in parts[3:6])
        if (h, w, c) != img.shape:
            raise ProviderError(
                f"gradient shape {(h, w, c)} does not match canvas {img.shape}"
            )
        nbytes = h * w * c * 4
        raw = self.proc.stdout.read(nbytes)
        if len(raw) != nbytes:
            raise ProviderError("truncated gradient payload")
        grad = np.frombuffer(raw, dtype="<f4").astype(float).reshape(h, w, c)
        if not np.all(np.isfinite(grad)) or (loss is not None and not np.isfinite(loss)):
            raise ProviderError("provider returned non-finite values")
        return loss, grad

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(handler, stdin=None, stdout=None):
    """Provider-side loop: calls handler(step, image) -> (loss or None, grad).

    Useful for writing providers in Python; reads EGP1 requests until EOF.
    """
    import sys

    fin = stdin or sys.stdin.buffer
    fout = stdout or sys.stdout.buffer
    while True:
        line = fin.readline()
        if not line:
            return
        parts = line.split()
        if len(parts) != 4 or parts[0] != PROTOCOL_VERSION or parts[1] != b"REQ":
            raise ProviderError(f"bad request header: {line!r}")
        step = int(parts[2])
        nbytes = int(parts[3])
        img = decode_image_png(fin.read(nbytes))
        loss, grad = handler(step, img)
        grad = np.ascontiguousarray(np.asarray(grad, dtype="<f4"))
        if grad.shape != img.shape:
            raise ProviderError("handler gradient shape mismatch")
        loss_txt = b"none" if loss is None else (b"%.17g" % loss)
        h, w, c = grad.shape
        fout.write(b"%s RES %s %d %d %d\n" % (PROTOCOL_VERSION, loss_txt, h, w, c))
        fout.write(grad.tobytes())
        fout.flush()

"""PCM containers and RIFF/WAVE reading and writing."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ChannelCountError, DimensionError, FormatError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

ENCODINGS = ("pcm16", "float32", "float64")


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Planar audio: ``samples`` has shape ``(channels, n)``.

    Channel 0 is left and channel 1 is right for stereo. The array is made
    read-only on construction so buffers can be shared freely.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise DimensionError(f"samples must be 1-D or (channels, n), got shape {arr.shape}")
        if arr.shape[0] not in (1, 2):
            raise ChannelCountError(f"channels must be 1 or 2, got {arr.shape[0]}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if int(self.sample_rate) <= 0:
            raise DimensionError(f"sample_rate must be positive, got {self.sample_rate}")
        if arr.flags.writeable:
            arr = arr.copy()
            arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @classmethod
    def mono(cls, x, sample_rate: int) -> "AudioBuffer":
        return cls(np.asarray(x)[None, :], sample_rate)

    @classmethod
    def stereo(cls, left, right, sample_rate: int) -> "AudioBuffer":
        left, right = np.asarray(left), np.asarray(right)
        if left.shape != right.shape:
            raise DimensionError(f"left/right lengths differ: {left.shape} vs {right.shape}")
        return cls(np.stack([left, right]), sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def dtype(self):
        return self.samples.dtype

    def __len__(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def data(self) -> np.ndarray:
        """The single channel of a mono buffer as a 1-D array."""
        if self.channels != 1:
            raise ChannelCountError(f"expected mono buffer, got {self.channels} channels")
        return self.samples[0]

    @property
    def left(self) -> np.ndarray:
        self._require_stereo()
        return self.samples[0]

    @property
    def right(self) -> np.ndarray:
        self._require_stereo()
        return self.samples[1]

    def _require_stereo(self):
        if self.channels != 2:
            raise ChannelCountError(f"expected stereo buffer, got {self.channels} channel(s)")

    def astype(self, dtype) -> "AudioBuffer":
        return AudioBuffer(self.samples.astype(dtype), self.sample_rate)

    def __repr__(self):
        return (f"AudioBuffer(channels={self.channels}, n={len(self)}, "
                f"sample_rate={self.sample_rate}, dtype={self.dtype})")


def _read_chunks(blob: bytes, path):
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file (bad 'RIFF'/'WAVE' header)")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        size = struct.unpack_from("<I", blob, pos + 4)[0]
        body = blob[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            if len(body) < size:
                raise FormatError(f"{path}: 'data' chunk truncated ({len(body)} of {size} bytes)")
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise FormatError(f"{path}: missing 'fmt ' chunk")
    if data is None:
        raise FormatError(f"{path}: missing 'data' chunk")
    return fmt, data


def read_wav(path) -> AudioBuffer:
    """Read a PCM-16, PCM-24 or IEEE float WAV file into a float64 buffer.

    Integer samples are divided by ``2**(bits-1)``.
    """
    path = Path(path)
    blob = path.read_bytes()
    fmt, data = _read_chunks(blob, path)
    if len(fmt) < 16:
        raise FormatError(f"{path}: 'fmt ' chunk too short ({len(fmt)} bytes)")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise FormatError(f"{path}: extensible 'fmt ' chunk too short")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels not in (1, 2):
        raise FormatError(f"{path}: unsupported channel count {channels} (field 'channels')")
    if rate == 0:
        raise FormatError(f"{path}: sample rate is zero (field 'sample_rate')")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(data[:len(data) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_PCM and bits == 24:
        raw = np.frombuffer(data[:len(data) // 3 * 3], dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        x = ints.astype(np.float64) / float(1 << 23)
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(data[:len(data) // 4 * 4], dtype="<f4").astype(np.float64)
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 64:
        x = np.frombuffer(data[:len(data) // 8 * 8], dtype="<f8").astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported encoding (format tag {tag:#06x}, "
                          f"bits_per_sample {bits})")
    n = len(x) // channels
    return AudioBuffer(x[:n * channels].reshape(n, channels).T, rate)


def _pcm16_words(x: np.ndarray) -> np.ndarray:
    words = np.rint(np.asarray(x, dtype=np.float64) * 32768.0)
    return np.clip(words, -32768, 32767).astype("<i2")


def write_wav(buffer: AudioBuffer, path, encoding: str = "float32") -> None:
    """Write ``buffer`` as interleaved little-endian WAV.

    ``pcm16`` rounds to nearest and clips to ``[-1, 1 - 2**-15]``.
    ``float64`` is offered so that mid/side-derived stereo keeps every bit.
    """
    if encoding not in ENCODINGS:
        raise FormatError(f"unknown encoding {encoding!r}; expected one of {ENCODINGS}")
    inter = buffer.samples.T.reshape(-1)
    if encoding == "pcm16":
        payload, tag, bits = _pcm16_words(inter).tobytes(), WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        payload, tag, bits = inter.astype("<f4").tobytes(), WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        payload, tag, bits = inter.astype("<f8").tobytes(), WAVE_FORMAT_IEEE_FLOAT, 64
    ch = buffer.channels
    block = ch * bits // 8
    fmt = struct.pack("<HHIIHH", tag, ch, buffer.sample_rate, buffer.sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    try:
        Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    except OSError as exc:
        raise OSError(f"cannot write WAV to {path}: {exc}") from exc

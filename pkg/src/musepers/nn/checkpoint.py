"""Binary checkpoint format (all integers and floats little-endian).

    magic        8 bytes  b"MUSEPCK\\0"
    version      u32      currently 1
    payload_len  u64      number of bytes after the crc field
    crc32        u32      zlib.crc32 of the payload
    payload:
      u32 n, n bytes      model config as compact sorted-key JSON
      u32 k               number of normalised modalities (0 = no stats)
      k x (u32 n, name, u32 dim, dim f64 mean, dim f64 std)
      u32 p               number of parameter arrays (documented model order)
      p x (u32 n, name, u32 ndim, ndim x u32 shape, f64 data in C order)
"""
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import BadMagic, CorruptPayload, UnsupportedVersion
from ..seqdata import NormStats
from .model import Model, ModelConfig, param_shapes

MAGIC = b"MUSEPCK\x00"
VERSION = 1
_HEAD = struct.Struct("<8sIQI")


def _put_str(out, s):
    b = s.encode("utf-8")
    out += struct.pack("<I", len(b))
    out += b


def _put_f64(out, a):
    out += np.ascontiguousarray(a, dtype="<f8").tobytes()


def to_bytes(model, stats=None):
    body = bytearray()
    _put_str(body, json.dumps(model.config.to_dict(), sort_keys=True, separators=(",", ":")))
    if stats is None:
        body += struct.pack("<I", 0)
    else:
        body += struct.pack("<I", len(stats.names))
        for name, mean, std in zip(stats.names, stats.means, stats.stds):
            _put_str(body, name)
            body += struct.pack("<I", mean.shape[0])
            _put_f64(body, mean)
            _put_f64(body, std)
    body += struct.pack("<I", len(model.params))
    for name, arr in model.params.items():
        _put_str(body, name)
        body += struct.pack("<I", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        _put_f64(body, arr)
    body = bytes(body)
    return _HEAD.pack(MAGIC, VERSION, len(body), zlib.crc32(body)) + body


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CorruptPayload("payload ends early")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def shape(self, ndim):
        return struct.unpack(f"<{ndim}I", self.take(4 * ndim))

    def text(self):
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptPayload("bad string in payload") from exc

    def f64(self, count):
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def from_bytes(data):
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise BadMagic("not a checkpoint file (bad magic bytes)")
    if len(data) < _HEAD.size:
        raise CorruptPayload("checkpoint header is truncated")
    _, version, length, crc = _HEAD.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersion(f"checkpoint version {version}, this build reads {VERSION}")
    body = data[_HEAD.size:]
    if len(body) != length:
        raise CorruptPayload(f"payload is {len(body)} bytes, header says {length}")
    if zlib.crc32(body) != crc:
        raise CorruptPayload("payload checksum mismatch")

    r = _Reader(body)
    try:
        config = ModelConfig.from_dict(json.loads(r.text()))
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptPayload(f"bad model config: {exc}") from exc
    n_stats = r.u32()
    stats = None
    if n_stats:
        names, means, stds = [], [], []
        for _ in range(n_stats):
            names.append(r.text())
            dim = r.u32()
            means.append(r.f64(dim))
            stds.append(r.f64(dim))
        stats = NormStats(names, means, stds)
    params = {}
    for _ in range(r.u32()):
        name = r.text()
        shape = r.shape(r.u32())
        params[name] = r.f64(int(np.prod(shape))).reshape(shape)
    if r.pos != len(body):
        raise CorruptPayload("trailing bytes after parameters")
    expected = param_shapes(config)
    if [(n, tuple(s)) for n, s in expected] != [(n, a.shape) for n, a in params.items()]:
        raise CorruptPayload("parameter layout does not match the stored config")
    return Model(config, params), stats


def save_checkpoint(model, stats, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(model, stats))


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())


class Checkpoint:
    """A trained model bundled with the normalisation it expects."""

    def __init__(self, model, stats=None):
        self.model = model
        self.stats = stats

    @property
    def config(self):
        return self.model.config

    def to_bytes(self):
        return to_bytes(self.model, self.stats)

    def save(self, path):
        save_checkpoint(self.model, self.stats, path)

    @classmethod
    def load(cls, path):
        return cls(*load_checkpoint(path))

    def copy(self):
        return Checkpoint(self.model.copy(), self.stats)

"""Binary snapshot container and CSV export.

Layout (all little-endian)::

    header   b"MFUQSNAP" | version u32 | N_h u32 | count u32 | nx u32 | ny u32 | spacing f64
             | seed u64 | tag_len u32 | tag utf-8
    record   id u64 | label_len u32 | label utf-8
             | n_phys u32 | phys f64[n_phys] | n_desc u32 | desc f64[n_desc]
             | values f64[N_h]

Network descriptors are written through their ``to_array()`` method and
rebuilt on read by the caller-supplied ``decode_descriptor``.
"""

import csv
import struct

import numpy as np

from .errors import SnapshotFormatError
from .model import FieldSolution, Grid, ParameterSample, SnapshotSet

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "SnapshotVersionError",
    "snapshot_store_write",
    "snapshot_store_read",
    "export_field_csv",
]

MAGIC = b"MFUQSNAP"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<8sIIIIId")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class SnapshotVersionError(SnapshotFormatError):
    pass


def _descriptor_array(descriptor):
    if descriptor is None:
        return np.zeros(0)
    if hasattr(descriptor, "to_array"):
        return np.asarray(descriptor.to_array(), dtype="<f8").ravel()
    return np.asarray(descriptor, dtype="<f8").ravel()


def _pack_text(text):
    raw = text.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def snapshot_store_write(snapshots, path):
    grid = snapshots.grid
    n_h = grid.size if grid is not None else 0
    nx, ny, h = (grid.nx, grid.ny, grid.spacing) if grid is not None else (0, 0, 0.0)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n_h, len(snapshots), nx, ny, h))
            fh.write(_U64.pack(int(snapshots.seed)))
            fh.write(_pack_text(snapshots.solver_version))
            for mu, sol in snapshots:
                phys = np.asarray(mu.physical, dtype="<f8")
                desc = _descriptor_array(mu.network_descriptor)
                fh.write(_U64.pack(mu.id))
                fh.write(_pack_text(mu.stream_label))
                fh.write(_U32.pack(phys.size) + phys.tobytes())
                fh.write(_U32.pack(desc.size) + desc.tobytes())
                fh.write(np.asarray(sol.values, dtype="<f8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write snapshot file {path}: {exc}") from exc


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise SnapshotFormatError(
                f"{self.path}: truncated snapshot file (need {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos})"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return _U32.unpack(self.take(4))[0]

    def u64(self):
        return _U64.unpack(self.take(8))[0]

    def text(self):
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SnapshotFormatError(f"{self.path}: corrupt text field") from exc

    def floats(self, n):
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)


def snapshot_store_read(path, decode_descriptor=None):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read snapshot file {path}: {exc}") from exc
    r = _Reader(data, path)
    magic, version, n_h, count, nx, ny, h = _HEADER.unpack(r.take(_HEADER.size))
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: not a snapshot file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise SnapshotVersionError(
            f"{path}: unsupported snapshot format version {version} (expected {FORMAT_VERSION})"
        )
    seed = r.u64()
    tag = r.text()
    grid = Grid(nx, ny, h) if count else None
    if grid is not None and grid.size != n_h:
        raise SnapshotFormatError(f"{path}: header N_h={n_h} inconsistent with {nx}x{ny} grid")
    entries = []
    for _ in range(count):
        sid = r.u64()
        label = r.text()
        phys = r.floats(r.u32())
        desc = r.floats(r.u32())
        values = r.floats(n_h)
        if desc.size == 0:
            descriptor = None
        elif decode_descriptor is not None:
            descriptor = decode_descriptor(desc)
        else:
            descriptor = desc
        mu = ParameterSample(id=sid, physical=tuple(phys), network_descriptor=descriptor,
                             stream_label=label)
        entries.append((mu, FieldSolution(values, grid)))
    if r.pos != len(data):
        raise SnapshotFormatError(f"{path}: {len(data) - r.pos} trailing bytes after last record")
    return SnapshotSet(entries, seed=seed, solver_version=tag)


def export_field_csv(solution, path):
    """Write a field as ``i,j,x,y,value`` rows (metres, native units)."""
    xs, ys = solution.grid.coordinates()
    vals = solution.as_array()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "value"])
        for j in range(solution.grid.ny):
            for i in range(solution.grid.nx):
                w.writerow([i, j, repr(float(xs[j, i])), repr(float(ys[j, i])), repr(float(vals[j, i]))])

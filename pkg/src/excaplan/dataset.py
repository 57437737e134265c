"""Binary dataset container for labeled excavation samples.

Layout (little-endian): magic "EXCV", version u16, sample count u64, then
per record: episode_id u32, trial_index u16, bit-packed voxel occupancy
(ceil(nx*ny*nz / 8) bytes; 16384 at the default 64x64x32 grid), trajectory
6xf64, captured volume f64 [cm^3], valid u8, label u8.
"""

from __future__ import annotations

import struct

from .errors import DataError
from .geometry import GridSpec
from .kinematics import TaskTrajectory
from .learning import ExcavationSample
from .simulator import label_outcome

DATASET_MAGIC = b"EXCV"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sHQ")
_REC_HEAD = struct.Struct("<IH")
_REC_TAIL = struct.Struct("<dBB")


def _payload_bytes(spec: GridSpec) -> int:
    n = spec.dims[0] * spec.dims[1] * spec.dims[2]
    return (n + 7) // 8


def write_dataset(path, samples, grid_spec: GridSpec) -> None:
    nbytes = _payload_bytes(grid_spec)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, len(samples)))
        for s in samples:
            if len(s.voxel_bits) != nbytes:
                raise DataError(
                    f"sample {s.episode_id}/{s.trial_index}: voxel payload "
                    f"{len(s.voxel_bits)} bytes, expected {nbytes}"
                )
            f.write(_REC_HEAD.pack(s.episode_id, s.trial_index))
            f.write(s.voxel_bits)
            f.write(s.traj.to_bytes())
            f.write(_REC_TAIL.pack(s.volume, int(s.valid), int(s.label)))


def read_dataset(path, grid_spec: GridSpec) -> list[ExcavationSample]:
    nbytes = _payload_bytes(grid_spec)
    rec_size = _REC_HEAD.size + nbytes + 48 + _REC_TAIL.size
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size or data[:4] != DATASET_MAGIC:
        raise DataError(f"{path}: not a dataset file")
    magic, version, count = _HEADER.unpack_from(data, 0)
    if version != DATASET_VERSION:
        raise DataError(f"{path}: unsupported dataset version {version}")
    if len(data) != _HEADER.size + count * rec_size:
        raise DataError(
            f"{path}: {len(data)} bytes inconsistent with {count} records "
            f"of {rec_size} bytes (check grid dims)"
        )
    samples = []
    off = _HEADER.size
    for _ in range(count):
        episode, trial = _REC_HEAD.unpack_from(data, off)
        off += _REC_HEAD.size
        bits = data[off:off + nbytes]
        off += nbytes
        traj = TaskTrajectory.from_bytes(data[off:off + 48])
        off += 48
        volume, valid, label = _REC_TAIL.unpack_from(data, off)
        off += _REC_TAIL.size
        samples.append(ExcavationSample(
            bits, grid_spec, traj, volume, bool(valid), bool(label), episode, trial,
        ))
    return samples


def verify_dataset(samples, threshold_cm3: float = 134.0) -> int:
    """Re-derive every label from (volume, valid); DataError on any mismatch.

    Returns the number of records checked.
    """

    class _Outcome:
        def __init__(self, volume, valid):
            self.captured_volume = volume
            self.valid = valid

    bad = []
    for i, s in enumerate(samples):
        expect = label_outcome(_Outcome(s.volume, s.valid), threshold_cm3)
        if expect != s.label:
            bad.append(i)
    if bad:
        raise DataError(
            f"{len(bad)} records have labels inconsistent with (volume, valid): "
            f"first at index {bad[0]}"
        )
    return len(samples)

"""On-disk formats.

Feature file (``.csnf``), all little-endian::

    offset  size  field
    0       4     magic b"CSNF"
    4       2     version (u16, currently 1)
    6       4     M, number of clips (u32)
    10      4     D, feature dimension (u32)
    14      2     f_clip, frames per clip (u16)
    16      4     f_total, total frames (u32)
    20      M*D*4 features, float32, row-major by clip

Annotation file: UTF-8 text, one value per frame. Values that are all 0/1 are
a key-frame mask; any other values in [0, 1] are importance scores and are
binarized with ``score >= threshold`` (median of the scores by default).

Checkpoint file (``.csnp``), all little-endian::

    0       4     magic b"CSNP"
    4       2     version (u16, currently 1)
    6       2     number of arrays (u16)
    then, per array in order:
            2     name length n (u16)
            n     name, ASCII
            1     ndim (u8)
            4*ndim  shape (u32 each)
    then every array's values as float64, in the same order, C order.

All writers go through a temporary file and ``os.replace``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ClipTrack, CosnetError, validate_track
from .evaluation import Summary
from .policy import PARAM_NAMES, PolicyParameters

FEATURE_MAGIC = b"CSNF"
FEATURE_VERSION = 1
FEATURE_HEADER = struct.Struct("<4sHIIHI")
CHECKPOINT_MAGIC = b"CSNP"
CHECKPOINT_VERSION = 1


class FormatError(CosnetError):
    pass


def atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write(path, text.encode("utf-8"))


def encode_features(track: ClipTrack) -> bytes:
    header = FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, track.M, track.D, track.f_clip, track.f_total)
    return header + np.ascontiguousarray(track.features, dtype="<f4").tobytes()


def decode_features(data: bytes, source: str = "<bytes>"):
    """Parse a feature container; returns ``(features, f_clip, f_total)``."""
    if len(data) < FEATURE_HEADER.size:
        raise FormatError(f"{source}: corrupt header, expected {FEATURE_HEADER.size} bytes, got {len(data)}")
    magic, version, M, D, f_clip, f_total = FEATURE_HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r} at byte 0, expected {FEATURE_MAGIC!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{source}: unsupported version {version} at byte 4")
    expected = M * D * 4
    body = data[FEATURE_HEADER.size:]
    if len(body) != expected:
        raise FormatError(
            f"{source}: body length mismatch, expected {expected} bytes for M={M}, D={D}, got {len(body)}"
        )
    features = np.frombuffer(body, dtype="<f4").reshape(M, D).astype(np.float64)
    bad = np.argwhere(~np.isfinite(features))
    if len(bad):
        row, col = bad[0]
        offset = FEATURE_HEADER.size + 4 * (int(row) * D + int(col))
        raise FormatError(f"{source}: non-finite value for clip {row}, component {col} at byte {offset}")
    return features, f_clip, f_total


def save_track(track: ClipTrack, feature_path, annotation_path=None):
    atomic_write(feature_path, encode_features(track))
    if annotation_path is not None:
        if track.annotations is None:
            raise FormatError(f"track {track.video_id!r} has no annotations to save")
        atomic_write_text(annotation_path, "".join(f"{int(v)}\n" for v in track.annotations))


def read_annotations(path, f_total: Optional[int] = None, threshold: Optional[float] = None):
    """Read a per-frame annotation file.

    Returns ``(mask, importance)``; ``importance`` is ``None`` for 0/1 files.
    """
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                value = float(text)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not a number: {text!r}") from None
            if not np.isfinite(value):
                raise FormatError(f"{path}:{lineno}: non-finite value {text!r}")
            if not 0.0 <= value <= 1.0:
                raise FormatError(f"{path}:{lineno}: value {value} outside [0, 1]")
            values.append(value)
    arr = np.asarray(values, dtype=np.float64)
    if f_total is not None and len(arr) != f_total:
        raise FormatError(f"{path}: length mismatch, expected {f_total} lines, got {len(arr)}")
    if np.all((arr == 0) | (arr == 1)):
        return arr.astype(np.int8), None
    return binarize_scores(arr, threshold), arr


def binarize_scores(scores, threshold: Optional[float] = None) -> np.ndarray:
    """Key frame iff score >= threshold; the threshold defaults to the median score."""
    scores = np.asarray(scores, dtype=np.float64)
    cut = float(np.median(scores)) if threshold is None else threshold
    return (scores >= cut).astype(np.int8)


def load_track(feature_path, annotation_path=None, video_id: Optional[str] = None,
               threshold: Optional[float] = None) -> ClipTrack:
    feature_path = Path(feature_path)
    features, f_clip, f_total = decode_features(feature_path.read_bytes(), str(feature_path))
    mask = importance = None
    if annotation_path is not None:
        mask, importance = read_annotations(annotation_path, f_total, threshold)
    track = ClipTrack(
        features=features,
        f_clip=f_clip,
        f_total=f_total,
        annotations=mask,
        importance=importance,
        video_id=video_id or feature_path.name.split(".")[0],
    )
    problems = validate_track(track)
    if problems:
        raise FormatError(f"{feature_path}: " + "; ".join(problems))
    return track


def import_text_features(text_path, f_clip: int = 16, f_total: Optional[int] = None, video_id=None) -> ClipTrack:
    """Whitespace-separated rows, one clip per line, into a track."""
    rows = np.loadtxt(text_path, dtype=np.float64, ndmin=2)
    return ClipTrack(features=rows, f_clip=f_clip, f_total=f_total,
                     video_id=video_id or Path(text_path).name.split(".")[0])


def encode_checkpoint(params: PolicyParameters) -> bytes:
    parts = [struct.pack("<4sHH", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(PARAM_NAMES))]
    for name, arr in params.items():
        encoded = name.encode("ascii")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
    for _, arr in params.items():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> PolicyParameters:
    try:
        magic, version, count = struct.unpack_from("<4sHH", data, 0)
    except struct.error:
        raise FormatError(f"{source}: corrupt checkpoint header") from None
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{source}: unsupported checkpoint version {version}")
    offset = 8
    shapes = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, offset)
            name = data[offset + 2:offset + 2 + n].decode("ascii")
            offset += 2 + n
            (ndim,) = struct.unpack_from("<B", data, offset)
            shapes[name] = struct.unpack_from(f"<{ndim}I", data, offset + 1)
            offset += 1 + 4 * ndim
    except (struct.error, UnicodeDecodeError):
        raise FormatError(f"{source}: corrupt checkpoint shape table at byte {offset}") from None
    if list(shapes) != list(PARAM_NAMES):
        raise FormatError(f"{source}: unexpected parameter names {list(shapes)}")
    arrays = []
    for name in PARAM_NAMES:
        size = int(np.prod(shapes[name], dtype=np.int64))
        end = offset + 8 * size
        if end > len(data):
            raise FormatError(f"{source}: truncated checkpoint, {name} needs bytes up to {end}, file has {len(data)}")
        arrays.append(np.frombuffer(data[offset:end], dtype="<f8").reshape(shapes[name]).astype(np.float64))
        offset = end
    if offset != len(data):
        raise FormatError(f"{source}: {len(data) - offset} trailing bytes after checkpoint body")
    params = PolicyParameters(*arrays)
    if not params.all_finite():
        raise FormatError(f"{source}: checkpoint holds non-finite values")
    return params


def save_checkpoint(params: PolicyParameters, path):
    atomic_write(path, encode_checkpoint(params))


def load_checkpoint(path) -> PolicyParameters:
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), str(path))


def summary_to_json(summary: Summary, f_score: Optional[float] = None) -> dict:
    doc = {
        "video_id": summary.video_id,
        "selected_clips": [int(j) for j in summary.selected],
        "frame_intervals": [list(iv) for iv in summary.intervals()],
        "f_clip": summary.f_clip,
        "f_total": int(len(summary.mask)),
    }
    if f_score is not None:
        doc["f_score"] = round(float(f_score), 6)
    return doc


def write_summary(path, summary: Summary, f_score: Optional[float] = None):
    atomic_write_text(path, json.dumps(summary_to_json(summary, f_score), indent=2) + "\n")


def read_generated_mask(path, f_total: Optional[int] = None) -> np.ndarray:
    """A generated summary as a frame mask, from summary JSON or a 0/1 text file."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        n = int(doc.get("f_total", f_total or 0))
        mask = np.zeros(n, dtype=np.int8)
        for start, stop in doc["frame_intervals"]:
            mask[start:stop] = 1
        if f_total is not None and n != f_total:
            raise FormatError(f"{path}: summary covers {n} frames, ground truth has {f_total}")
        return mask
    mask, importance = read_annotations(path, f_total)
    if importance is not None:
        raise FormatError(f"{path}: generated summaries must be 0/1 masks")
    return mask

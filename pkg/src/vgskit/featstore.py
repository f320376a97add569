"""Feature and manifest I/O.

Everything that touches disk lives here: the FVF1 feature container,
JSON-lines manifests (caption/image pairs, evaluation triplets, human
similarity judgments), and whitespace-delimited unit-sequence files.
Loaded objects are plain numpy arrays or frozen dataclasses; they are
immutable and safe to share across concurrent readers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    BadMagicError,
    EmptyManifestError,
    FeatureFormatError,
    ManifestError,
    NonFiniteValueError,
    TruncatedFileError,
)

MAGIC = b"FVF1"
_PAYLOAD_DTYPE = np.dtype("<f4")


def write_features(array, path) -> None:
    """Write a vector or matrix to ``path`` in the FVF1 container.

    Layout: 4 magic bytes ``FVF1``, one rank byte (1 or 2), ``rank``
    little-endian uint64 dimension sizes, then the row-major
    little-endian float32 payload.  Input is cast to float32, so pass
    float32 data when bit-exact round trips matter.  Writing is
    deterministic: the same array always produces identical bytes.
    """
    a = np.ascontiguousarray(array, dtype=_PAYLOAD_DTYPE)
    if a.ndim not in (1, 2):
        raise FeatureFormatError(f"FVF1 stores rank 1 or 2 arrays, got rank {a.ndim}")
    if a.size == 0:
        raise FeatureFormatError("refusing to write an empty feature array")
    if not np.isfinite(a).all():
        raise NonFiniteValueError("feature array contains NaN or Inf")
    header = MAGIC + struct.pack("<B", a.ndim)
    header += b"".join(struct.pack("<Q", n) for n in a.shape)
    Path(path).write_bytes(header + a.tobytes())


def read_features(path) -> np.ndarray:
    """Read an FVF1 file written by :func:`write_features`.

    Returns a float32 array with the stored rank (1-D or 2-D).  The
    payload is validated on load: wrong magic raises BadMagicError, a
    short payload raises TruncatedFileError, and NaN/Inf values raise
    NonFiniteValueError so downstream kernels can assume finiteness.
    """
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC):
        raise TruncatedFileError(f"{path}: shorter than the magic header")
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}, got {data[:4]!r}")
    if len(data) < 5:
        raise TruncatedFileError(f"{path}: missing rank byte")
    rank = data[4]
    if rank not in (1, 2):
        raise FeatureFormatError(f"{path}: rank must be 1 or 2, got {rank}")
    header_end = 5 + 8 * rank
    if len(data) < header_end:
        raise TruncatedFileError(f"{path}: incomplete dimension header")
    dims = struct.unpack(f"<{rank}Q", data[5:header_end])
    if any(d == 0 for d in dims):
        raise FeatureFormatError(f"{path}: zero-sized dimension in {dims}")
    count = 1
    for d in dims:
        count *= d
    expected = header_end + 4 * count
    if len(data) < expected:
        have = (len(data) - header_end) // 4
        raise TruncatedFileError(f"{path}: payload holds {have} of {count} values")
    if len(data) > expected:
        raise FeatureFormatError(f"{path}: {len(data) - expected} trailing bytes")
    values = np.frombuffer(data, dtype=_PAYLOAD_DTYPE, offset=header_end)
    values = values.reshape(dims).copy()
    if not np.isfinite(values).all():
        raise NonFiniteValueError(f"{path}: payload contains NaN or Inf")
    return values


@dataclass(frozen=True)
class FrameSequence:
    """Time-major feature matrix for one utterance (frames x dims)."""

    matrix: np.ndarray
    utterance_id: str = ""
    frame_rate_hz: float = 100.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"frame matrix must be 2-D and non-empty, got shape {m.shape}")
        if not np.isfinite(m).all():
            raise NonFiniteValueError("frame matrix contains NaN or Inf")
        if not (np.isfinite(self.frame_rate_hz) and self.frame_rate_hz > 0):
            raise ValueError("frame_rate_hz must be finite and positive")
        object.__setattr__(self, "matrix", m)

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class UnitSequence:
    """Discrete cluster ids for one utterance."""

    units: np.ndarray
    utterance_id: str = ""

    def __post_init__(self):
        u = np.asarray(self.units)
        if u.ndim != 1 or u.size < 1:
            raise ValueError("units must be a non-empty 1-D sequence")
        if not np.issubdtype(u.dtype, np.integer):
            if not np.all(u == np.round(u)):
                raise ValueError("unit ids must be integers")
        u = u.astype(np.int64)
        if (u < 0).any():
            raise ValueError("unit ids must be non-negative")
        object.__setattr__(self, "units", u)

    def __len__(self) -> int:
        return self.units.size


@dataclass(frozen=True)
class PairRecord:
    """One caption paired with the image it describes."""

    caption_id: str
    image_id: str
    speaker_id: str | None = None
    feature_path: str | None = None


class PairManifest:
    """Caption-to-image pairing records.

    Record order fixes the caption axis of score matrices; the image
    axis uses each image id's first appearance.  Several captions may
    share one image (multi-caption datasets), so the image axis is
    usually shorter than the caption axis.
    """

    def __init__(self, records: Sequence[PairRecord]):
        records = list(records)
        seen: set[str] = set()
        for r in records:
            if not r.caption_id:
                raise ManifestError("caption_id must be non-empty")
            if not r.image_id:
                raise ManifestError(f"caption {r.caption_id!r}: image_id must be non-empty")
            if r.caption_id in seen:
                raise ManifestError(f"duplicate caption_id {r.caption_id!r}")
            seen.add(r.caption_id)
        self.records = records
        image_ids: list[str] = []
        image_index: dict[str, int] = {}
        for r in records:
            if r.image_id not in image_index:
                image_index[r.image_id] = len(image_ids)
                image_ids.append(r.image_id)
        self._image_ids = image_ids
        self._image_index = image_index

    def __len__(self) -> int:
        return len(self.records)

    @property
    def caption_ids(self) -> list[str]:
        return [r.caption_id for r in self.records]

    @property
    def image_ids(self) -> list[str]:
        """Distinct image ids in first-appearance order."""
        return list(self._image_ids)

    def image_index(self, image_id: str) -> int:
        return self._image_index[image_id]

    def captions_of(self, image_id: str) -> list[int]:
        """Caption row indices paired with ``image_id``."""
        return [i for i, r in enumerate(self.records) if r.image_id == image_id]

    @classmethod
    def from_jsonl(cls, path) -> "PairManifest":
        records = []
        for obj in _read_jsonl(path):
            try:
                records.append(
                    PairRecord(
                        caption_id=str(obj["caption_id"]),
                        image_id=str(obj["image_id"]),
                        speaker_id=obj.get("speaker_id"),
                        feature_path=obj.get("feature_path"),
                    )
                )
            except KeyError as e:
                raise ManifestError(f"{path}: pair record missing field {e}") from e
        return cls(records)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for r in self.records:
                obj = {"caption_id": r.caption_id, "image_id": r.image_id}
                if r.speaker_id is not None:
                    obj["speaker_id"] = r.speaker_id
                if r.feature_path is not None:
                    obj["feature_path"] = r.feature_path
                f.write(json.dumps(obj, sort_keys=True) + "\n")


def build_positive_mask(manifest: PairManifest) -> np.ndarray:
    """Binary matrix over (captions x images): 0 marks a matched pair.

    Zeros exclude semantically matched caption/image pairs from the
    negative set of the matching loss; every other entry is 1.  Each row
    has exactly one zero because a caption pairs with exactly one image.
    """
    if len(manifest) == 0:
        raise EmptyManifestError("cannot build a mask from an empty manifest")
    mask = np.ones((len(manifest), len(manifest.image_ids)), dtype=np.float64)
    for i, r in enumerate(manifest.records):
        mask[i, manifest.image_index(r.image_id)] = 0.0
    return mask


@dataclass(frozen=True)
class Triplet:
    """One discriminability trial: is X closer to A than to B?"""

    a_id: str
    b_id: str
    x_id: str
    group_key: str

    def __post_init__(self):
        if not self.group_key:
            raise ManifestError("group_key must be non-empty")


def read_triplets(path) -> list[Triplet]:
    triplets = []
    for obj in _read_jsonl(path):
        try:
            triplets.append(
                Triplet(
                    a_id=str(obj["a_id"]),
                    b_id=str(obj["b_id"]),
                    x_id=str(obj["x_id"]),
                    group_key=str(obj["group_key"]),
                )
            )
        except KeyError as e:
            raise ManifestError(f"{path}: triplet record missing field {e}") from e
    return triplets


def write_triplets(triplets: Iterable[Triplet], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in triplets:
            obj = {"a_id": t.a_id, "b_id": t.b_id, "x_id": t.x_id, "group_key": t.group_key}
            f.write(json.dumps(obj, sort_keys=True) + "\n")


@dataclass(frozen=True)
class Judgment:
    """A human similarity judgment for a pair of utterances."""

    id_1: str
    id_2: str
    human_score: float

    def __post_init__(self):
        if not np.isfinite(self.human_score):
            raise ManifestError("human_score must be finite")


def read_judgments(path) -> list[Judgment]:
    judgments = []
    seen: set[tuple[str, str]] = set()
    for obj in _read_jsonl(path):
        try:
            j = Judgment(str(obj["id_1"]), str(obj["id_2"]), float(obj["human_score"]))
        except KeyError as e:
            raise ManifestError(f"{path}: judgment record missing field {e}") from e
        key = (j.id_1, j.id_2)
        if key in seen:
            raise ManifestError(f"{path}: duplicate judgment pair {key}")
        seen.add(key)
        judgments.append(j)
    return judgments


def write_judgments(judgments: Iterable[Judgment], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for j in judgments:
            obj = {"id_1": j.id_1, "id_2": j.id_2, "human_score": j.human_score}
            f.write(json.dumps(obj, sort_keys=True) + "\n")


def read_unit_sequences(path) -> list[UnitSequence]:
    """Read one utterance per line: ``<utterance_id> <id> <id> ...``."""
    sequences = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ManifestError(f"{path}:{lineno}: line has an id but no units")
            try:
                units = np.array([int(p) for p in parts[1:]], dtype=np.int64)
            except ValueError as e:
                raise ManifestError(f"{path}:{lineno}: non-integer unit id") from e
            sequences.append(UnitSequence(units=units, utterance_id=parts[0]))
    return sequences


def write_unit_sequences(sequences: Iterable[UnitSequence], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for seq in sequences:
            if any(ch.isspace() for ch in seq.utterance_id) or not seq.utterance_id:
                raise ManifestError(
                    f"utterance_id {seq.utterance_id!r} must be non-empty and whitespace-free"
                )
            f.write(seq.utterance_id + " " + " ".join(str(int(u)) for u in seq.units) + "\n")


def load_feature_dir(path, frame_rate_hz: float = 100.0) -> dict[str, FrameSequence]:
    """Load every ``*.fvf`` file under ``path`` keyed by file stem.

    Rank-1 files load as a single frame.  Files are visited in sorted
    order so repeated loads are deterministic.
    """
    root = Path(path)
    if not root.is_dir():
        raise NotADirectoryError(f"{path} is not a directory")
    store: dict[str, FrameSequence] = {}
    for fp in sorted(root.glob("*.fvf")):
        arr = read_features(fp)
        if arr.ndim == 1:
            arr = arr[None, :]
        store[fp.stem] = FrameSequence(arr, utterance_id=fp.stem, frame_rate_hz=frame_rate_hz)
    return store


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{lineno}: invalid JSON") from e
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            yield obj

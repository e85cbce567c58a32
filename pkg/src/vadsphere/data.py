"""Manifests, feature files, preprocessing and a synthetic dataset generator.

Manifest: UTF-8 text, one utterance per line, tab-separated
``id, feature_path, valence, arousal, dominance, category``. Lines starting
with ``#`` and blank lines are ignored. Relative feature paths resolve against
the manifest's directory. VAD values are on the raw 1..7 scale.

Feature file: 8-byte magic ``EMOFEAT1``, then little-endian uint32 T and D,
then T*D little-endian float32 values, frames outermost.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import logging
from pathlib import Path
import struct
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import geometry
from .errors import FormatError, ShapeError, ValidationError

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"EMOFEAT1"
X_LABEL = "X"

__all__ = [
    "Split",
    "UtteranceRecord",
    "Dataset",
    "load_manifest",
    "write_manifest",
    "filter_x_labels",
    "split_per_category",
    "compute_region_counts",
    "region_labels",
    "read_features",
    "write_features",
    "load_features",
    "synthesize_dataset",
]


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    feature_path: str
    vad_raw: Tuple[float, float, float]
    category: str
    split: Split = Split.UNASSIGNED

    @property
    def vad_norm(self) -> np.ndarray:
        return geometry.normalize_array(self.vad_raw)


@dataclass
class Dataset:
    """Records with their region statistics and optional in-memory features."""

    records: List[UtteranceRecord]
    partition: geometry.RegionPartition
    region_counts: np.ndarray = None
    features: Optional[List[np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.region_counts is None:
            self.region_counts = compute_region_counts(self.records, self.partition)

    def __len__(self):
        return len(self.records)

    def subset(self, split: Split) -> "Dataset":
        keep = [i for i, r in enumerate(self.records) if r.split is split]
        feats = None if self.features is None else [self.features[i] for i in keep]
        return Dataset([self.records[i] for i in keep], self.partition, features=feats)

    def vad_norm(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, 3))
        return geometry.normalize_array([r.vad_raw for r in self.records])

    def regions(self) -> np.ndarray:
        return region_labels(self.records, self.partition)

    def load_all_features(self, expected_dim: int, root=None) -> "Dataset":
        self.features = [load_features(r, expected_dim, root) for r in self.records]
        return self


# -- manifest ---------------------------------------------------------------


def load_manifest(path) -> List[UtteranceRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    records, problems, out_of_range, seen = [], [], [], set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            problems.append(f"line {lineno}: expected 6 tab-separated fields, got {len(fields)}")
            continue
        uid, feat, v, a, d, category = (f.strip() for f in fields)
        try:
            vad = (float(v), float(a), float(d))
        except ValueError:
            problems.append(f"line {lineno}: non-numeric VAD value")
            continue
        if uid in seen:
            problems.append(f"line {lineno}: duplicate id {uid!r}")
            continue
        seen.add(uid)
        if not all(1.0 <= x <= 7.0 for x in vad):
            out_of_range.append(uid)
        records.append(UtteranceRecord(uid, feat, vad, category))
    if problems:
        raise FormatError(f"malformed manifest {path}:\n  " + "\n  ".join(problems))
    if out_of_range:
        raise ValidationError(
            f"VAD outside [1, 7] for ids: {', '.join(out_of_range)}"
        )
    return records


def write_manifest(path, records: Sequence[UtteranceRecord]) -> None:
    lines = ["# id\tfeature_path\tvalence\tarousal\tdominance\tcategory"]
    for r in records:
        v, a, d = r.vad_raw
        lines.append(f"{r.id}\t{r.feature_path}\t{v!r}\t{a!r}\t{d!r}\t{r.category}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- preprocessing ------------------------------------------------------------


def filter_x_labels(records: Sequence[UtteranceRecord]) -> List[UtteranceRecord]:
    """Drop utterances whose category is the no-consensus label "X"."""
    kept = [r for r in records if r.category != X_LABEL]
    removed = len(records) - len(kept)
    if records and not kept:
        log.warning("all %d records carry the X label; nothing left", removed)
    elif removed:
        log.info("removed %d X-labelled records", removed)
    return kept


def split_per_category(records: Sequence[UtteranceRecord], per_class: int, seed: int = 0):
    """Sample ``per_class`` records of each category into val, the rest into test.

    Returns (val, test), each keeping the input order. Categories with fewer
    than ``per_class`` records go entirely to val.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    by_cat = {}
    for i, r in enumerate(records):
        by_cat.setdefault(r.category, []).append(i)
    to_val = set()
    for cat in sorted(by_cat):
        idx = by_cat[cat]
        if len(idx) < per_class:
            log.warning("category %r has %d records (< %d); all go to val", cat, len(idx), per_class)
            to_val.update(idx)
        else:
            to_val.update(int(i) for i in rng.choice(idx, size=per_class, replace=False))
    val = [replace(r, split=Split.VAL) for i, r in enumerate(records) if i in to_val]
    test = [replace(r, split=Split.TEST) for i, r in enumerate(records) if i not in to_val]
    return val, test


def region_labels(records: Sequence[UtteranceRecord], partition) -> np.ndarray:
    if not records:
        return np.zeros(0, dtype=np.int64)
    norm = geometry.normalize_array([r.vad_raw for r in records])
    _, az, el = geometry.spherical_array(norm)
    return geometry.assign_regions(partition, az, el)


def compute_region_counts(records: Sequence[UtteranceRecord], partition) -> np.ndarray:
    return np.bincount(region_labels(records, partition), minlength=partition.n_regions)


# -- feature files ------------------------------------------------------------


def write_features(path, frames) -> None:
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ShapeError(f"features must be (T>=1, D), got {frames.shape}")
    t, d = frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", t, d))
        fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_features(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated header")
    t, d = struct.unpack_from("<II", data, 8)
    expected = 16 + 4 * t * d
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for T={t}, D={d}, got {len(data)}")
    if t < 1:
        raise FormatError(f"{path}: zero frames")
    return np.frombuffer(data, dtype="<f4", offset=16).astype(np.float64).reshape(t, d)


def load_features(record: UtteranceRecord, expected_dim: int, root=None) -> np.ndarray:
    path = Path(record.feature_path)
    if root is not None and not path.is_absolute():
        path = Path(root) / path
    frames = read_features(path)
    if frames.shape[1] != expected_dim:
        raise ShapeError(f"{path}: feature dim {frames.shape[1]} != expected {expected_dim}")
    return frames


# -- synthetic data -----------------------------------------------------------


def synthesize_dataset(
    n: int,
    feat_dim: int = 16,
    frames: int = 10,
    noise: float = 0.05,
    seed: int = 0,
    angle_deg: float = 90.0,
    out_dir=None,
    fractions: Tuple[float, float] = (0.7, 0.15),
):
    """Random learnable dataset.

    Normalized VAD is uniform on [-1, 1]^3. Every frame equals a fixed seeded
    affine embedding ``embed @ vad + offset`` plus Gaussian noise of scale
    ``noise``. Categories are the region label as a string. Records are split
    train/val/test by ``fractions`` (train, val; test takes the rest).

    In-memory features are float64; files written to ``out_dir`` hold the
    float32 rounding required by the feature format.

    Returns ``(dataset, embed, offset)``. With ``out_dir`` the feature files,
    ``manifest.tsv`` (all records) and ``train.tsv``/``val.tsv``/``test.tsv``
    are written there.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    embed = rng.normal(size=(3, feat_dim))
    offset = rng.normal(size=feat_dim)
    norm = rng.uniform(-1.0, 1.0, size=(n, 3))
    raw = geometry.denormalize_array(norm)
    eps = rng.normal(size=(n, frames, feat_dim))
    feats = (norm @ embed + offset)[:, None, :] + noise * eps

    partition = geometry.make_partition(angle_deg)
    order = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    split_of = np.empty(n, dtype=object)
    split_of[order[:n_train]] = Split.TRAIN
    split_of[order[n_train:n_train + n_val]] = Split.VAL
    split_of[order[n_train + n_val:]] = Split.TEST

    # labels from the raw values so a manifest reload reproduces them exactly
    _, az, el = geometry.spherical_array(geometry.normalize_array(raw))
    labels = geometry.assign_regions(partition, az, el)
    width = len(str(n - 1))
    records = []
    for i in range(n):
        uid = f"utt{i:0{width}d}"
        records.append(UtteranceRecord(
            uid, f"{uid}.feat", tuple(float(x) for x in raw[i]), str(int(labels[i])), split_of[i]
        ))
    ds = Dataset(records, partition, features=list(feats))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for rec, f in zip(records, feats):
            write_features(out / rec.feature_path, f)
        write_manifest(out / "manifest.tsv", records)
        for split in (Split.TRAIN, Split.VAL, Split.TEST):
            write_manifest(out / f"{split.value}.tsv", [r for r in records if r.split is split])
    return ds, embed, offset

"""Multimodal dataset model, file formats, batching, and synthetic data.

Feature files ("DFM1") hold one matrix: 4-byte magic, rows and cols as
u32-LE, 4 reserved zero bytes, then rows*cols float32-LE values row-major.
Label files ("DLB1") hold class indices: magic, rows u32-LE, num_classes
u32-LE, then rows u32-LE indices. A manifest JSON ties the files of one
dataset together. Because the payload is float32, the synthetic generator
rounds features to float32 precision so write/read round trips are exact.
"""

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError
from .numerics import make_rng, random_orthogonal, split_seed

FEATURE_MAGIC = b"DFM1"
LABEL_MAGIC = b"DLB1"
_U32_MAX = 2**32 - 1
_MAX_ELEMS = 2**31  # sanity cap: reject absurd header dims before allocating

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class ModalityData:
    """One modality's raw feature matrix plus single-label class indices."""

    name: str
    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64, values in [0, C)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def validate(self, num_classes: int) -> None:
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise FormatError(f"modality {self.name!r}: features must be a nonempty 2-D matrix")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise FormatError(
                f"modality {self.name!r}: {self.features.shape[0]} feature rows "
                f"but {self.labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(self.features)):
            raise FormatError(f"modality {self.name!r}: non-finite feature values")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= num_classes):
            raise FormatError(
                f"modality {self.name!r}: class index out of range [0, {num_classes})"
            )

    def one_hot(self, num_classes: int) -> np.ndarray:
        """Expand labels to a dense (N, C) one-hot float matrix."""
        y = np.zeros((self.labels.shape[0], num_classes), dtype=np.float64)
        y[np.arange(self.labels.shape[0]), self.labels] = 1.0
        return y


@dataclass
class MultimodalDataset:
    """Train/val/test splits, each a list of K unpaired modalities."""

    num_classes: int
    splits: dict = field(default_factory=dict)  # split name -> list[ModalityData]

    @property
    def num_modalities(self) -> int:
        return len(self.splits["train"])

    def modality_names(self) -> list:
        return [m.name for m in self.splits["train"]]

    def validate(self) -> None:
        for split in SPLIT_NAMES:
            if split not in self.splits:
                raise FormatError(f"missing split {split!r}")
            for mod in self.splits[split]:
                mod.validate(self.num_classes)
        names = self.modality_names()
        for split in SPLIT_NAMES:
            if [m.name for m in self.splits[split]] != names:
                raise FormatError("splits disagree on modality names or order")


@dataclass
class SynthConfig:
    """Parameters of the synthetic multimodal generator."""

    num_modalities: int = 3
    num_classes: int = 5
    feature_dims: list = field(default_factory=lambda: [32, 24, 48])
    samples_per_class: int = 40
    separation: float = 6.0
    noise: list = field(default_factory=lambda: [0.1, 0.1, 0.1])
    seed: int = 0

    def validate(self) -> None:
        if self.num_modalities < 2:
            raise ConfigError("num_modalities: need at least 2 modalities")
        if self.num_classes < 2:
            raise ConfigError("num_classes: need at least 2 classes")
        if len(self.feature_dims) != self.num_modalities:
            raise ConfigError("feature_dims: need one dimension per modality")
        if any(d < 1 for d in self.feature_dims):
            raise ConfigError("feature_dims: dimensions must be >= 1")
        if self.samples_per_class < 3:
            raise ConfigError("samples_per_class: need >= 3 so every split is nonempty")
        if not self.separation > 0:
            raise ConfigError("separation: must be > 0")
        if len(self.noise) != self.num_modalities:
            raise ConfigError("noise: need one standard deviation per modality")
        if any(s < 0 for s in self.noise):
            raise ConfigError("noise: standard deviations must be >= 0")


def write_features_to(fh, features: np.ndarray) -> None:
    """Write one DFM1 matrix to an open binary stream."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise FormatError("features must be 2-D")
    rows, cols = features.shape
    if rows > _U32_MAX or cols > _U32_MAX:
        raise FormatError(f"dimension overflow: {rows}x{cols} exceeds u32 header range")
    fh.write(FEATURE_MAGIC)
    fh.write(struct.pack("<III", rows, cols, 0))
    fh.write(features.astype("<f4").tobytes(order="C"))


def write_features(path, features: np.ndarray) -> None:
    """Write one matrix in the DFM1 format."""
    with open(path, "wb") as fh:
        write_features_to(fh, features)


def read_features_from(fh) -> np.ndarray:
    """Read one DFM1 matrix from an open binary stream, consuming exactly its bytes."""
    magic = fh.read(4)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"malformed magic: expected {FEATURE_MAGIC!r}, got {magic!r}")
    header = fh.read(12)
    if len(header) != 12:
        raise FormatError("truncated payload: incomplete feature header")
    rows, cols, _reserved = struct.unpack("<III", header)
    if rows < 1 or cols < 1:
        raise FormatError(f"dimension overflow: invalid shape {rows}x{cols}")
    if rows * cols > _MAX_ELEMS:
        raise FormatError(f"dimension overflow: {rows}x{cols} exceeds element cap")
    want = rows * cols * 4
    if fh.seekable():
        pos = fh.tell()
        end = fh.seek(0, io.SEEK_END)
        fh.seek(pos)
        if want > end - pos:
            raise FormatError(
                f"truncated payload: header claims {rows}x{cols} but only "
                f"{end - pos} payload bytes remain"
            )
    payload = fh.read(want)
    if len(payload) != want:
        raise FormatError(
            f"truncated payload: header claims {rows}x{cols} but only "
            f"{len(payload)} of {want} payload bytes present"
        )
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(rows, cols)


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_features_from(fh)


def write_labels(path, labels: np.ndarray, num_classes: int) -> None:
    """Write class indices in the DLB1 format."""
    labels = np.asarray(labels)
    rows = labels.shape[0]
    if rows > _U32_MAX or num_classes > _U32_MAX:
        raise FormatError("dimension overflow: label header exceeds u32 range")
    if rows and (labels.min() < 0 or labels.max() >= num_classes):
        raise FormatError(f"label index outside [0, {num_classes})")
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<II", rows, num_classes))
        fh.write(labels.astype("<u4").tobytes(order="C"))


def read_labels(path):
    """Read a DLB1 file; returns (labels, num_classes)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != LABEL_MAGIC:
            raise FormatError(f"malformed magic: expected {LABEL_MAGIC!r}, got {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError("truncated payload: incomplete label header")
        rows, num_classes = struct.unpack("<II", header)
        payload = fh.read(rows * 4)
        if len(payload) != rows * 4:
            raise FormatError(
                f"truncated payload: header claims {rows} labels but payload is short"
            )
        labels = np.frombuffer(payload, dtype="<u4").astype(np.int64)
    if rows and labels.max() >= num_classes:
        raise FormatError(f"label index outside [0, {num_classes})")
    return labels, num_classes


def load_manifest(path) -> MultimodalDataset:
    """Load and fully validate a dataset from its manifest JSON.

    File paths inside the manifest are resolved relative to the manifest's
    directory.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "num_classes" not in doc or "splits" not in doc:
        raise FormatError("manifest must be an object with num_classes and splits")
    num_classes = doc["num_classes"]
    if not isinstance(num_classes, int) or num_classes < 1:
        raise FormatError("manifest num_classes must be a positive integer")
    base = os.path.dirname(os.path.abspath(path))
    splits = {}
    for split in SPLIT_NAMES:
        entries = doc["splits"].get(split)
        if not isinstance(entries, list) or not entries:
            raise FormatError(f"manifest split {split!r} missing or empty")
        mods = []
        for entry in entries:
            for key in ("name", "features", "labels"):
                if key not in entry:
                    raise FormatError(f"manifest entry missing key {key!r}")
            features = read_features(os.path.join(base, entry["features"]))
            labels, file_classes = read_labels(os.path.join(base, entry["labels"]))
            if file_classes != num_classes:
                raise FormatError(
                    f"label file for {entry['name']!r} declares {file_classes} classes, "
                    f"manifest says {num_classes}"
                )
            mods.append(ModalityData(entry["name"], features, labels))
        splits[split] = mods
    dataset = MultimodalDataset(num_classes=num_classes, splits=splits)
    dataset.validate()
    return dataset


def write_dataset(dataset: MultimodalDataset, out_dir) -> str:
    """Write all feature/label files plus the manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    doc = {"num_classes": dataset.num_classes, "splits": {}}
    for split in SPLIT_NAMES:
        doc["splits"][split] = []
        for mod in dataset.splits[split]:
            feat_name = f"{mod.name}_{split}.dfm"
            lab_name = f"{mod.name}_{split}.dlb"
            write_features(os.path.join(out_dir, feat_name), mod.features)
            write_labels(os.path.join(out_dir, lab_name), mod.labels, dataset.num_classes)
            doc["splits"][split].append(
                {"name": mod.name, "features": feat_name, "labels": lab_name}
            )
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def _split_counts(n: int):
    """80/10/10 split of n samples, every part nonempty."""
    n_val = max(1, n // 10)
    n_test = max(1, n // 10)
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ConfigError(f"samples_per_class={n} too small to fill all three splits")
    return n_train, n_val, n_test


def synth_generate(cfg: SynthConfig) -> MultimodalDataset:
    """Generate a fully seeded multimodal dataset with shared class structure.

    Class centers live in a latent space of dimension max(feature_dims) and
    are rescaled so the minimum pairwise distance is at least cfg.separation.
    Each modality applies its own seeded linear map to its feature dimension
    and adds Gaussian noise with its own standard deviation. Splits are
    class-stratified 80/10/10.
    """
    cfg.validate()
    latent_dim = max(cfg.feature_dims)
    rng_centers = make_rng(split_seed(cfg.seed, "centers"))
    centers = rng_centers.standard_normal((cfg.num_classes, latent_dim))
    dists = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    min_dist = dists[~np.eye(cfg.num_classes, dtype=bool)].min()
    attempts = 0
    while min_dist <= 0 and attempts < 16:
        centers = rng_centers.standard_normal((cfg.num_classes, latent_dim))
        dists = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        min_dist = dists[~np.eye(cfg.num_classes, dtype=bool)].min()
        attempts += 1
    if min_dist <= 0:
        raise ConfigError("could not draw distinct class centers")
    if min_dist < cfg.separation:
        centers *= cfg.separation / min_dist

    n = cfg.samples_per_class
    n_train, n_val, n_test = _split_counts(n)
    splits = {name: [] for name in SPLIT_NAMES}
    for k in range(cfg.num_modalities):
        dim = cfg.feature_dims[k]
        rng_map = make_rng(split_seed(cfg.seed, "map", k))
        lin_map = rng_map.standard_normal((latent_dim, dim)) / np.sqrt(latent_dim)
        rng_noise = make_rng(split_seed(cfg.seed, "noise", k))
        feats = []
        labels = []
        for c in range(cfg.num_classes):
            base = centers[c] @ lin_map
            block = np.tile(base, (n, 1))
            if cfg.noise[k] > 0:
                block = block + cfg.noise[k] * rng_noise.standard_normal((n, dim))
            feats.append(block)
            labels.append(np.full(n, c, dtype=np.int64))
        feats = np.concatenate(feats)
        labels = np.concatenate(labels)
        # stored payload is float32; round now so file round trips are exact
        feats = feats.astype(np.float32).astype(np.float64)

        parts = {name: ([], []) for name in SPLIT_NAMES}
        for c in range(cfg.num_classes):
            idx = np.flatnonzero(labels == c)
            cuts = {
                "train": idx[:n_train],
                "val": idx[n_train : n_train + n_val],
                "test": idx[n_train + n_val :],
            }
            for name, rows in cuts.items():
                parts[name][0].append(feats[rows])
                parts[name][1].append(labels[rows])
        for name in SPLIT_NAMES:
            splits[name].append(
                ModalityData(
                    name=f"mod{k}",
                    features=np.concatenate(parts[name][0]),
                    labels=np.concatenate(parts[name][1]),
                )
            )
    dataset = MultimodalDataset(num_classes=cfg.num_classes, splits=splits)
    dataset.validate()
    return dataset


def minibatch_iter(modality: ModalityData, batch_size: int, rng: np.random.Generator):
    """One epoch of index batches: a seeded permutation chunked into batches.

    A final batch of size 1 is merged into the previous batch because the
    mixing step needs a partner sample; a final batch of size >= 2 is kept.
    """
    if batch_size < 2:
        raise ConfigError("batch_size: must be >= 2 (mixing needs pairs)")
    num_samples = modality.num_samples
    perm = rng.permutation(num_samples)
    batches = [perm[i : i + batch_size] for i in range(0, num_samples, batch_size)]
    if len(batches) > 1 and batches[-1].shape[0] < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches

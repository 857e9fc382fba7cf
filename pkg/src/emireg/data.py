"""Datasets: on-disk formats, batch iteration, synthetic generation.

Feature files ("EMIF")
    magic ``EMIF`` | version u32 | frame count u32 | width u32 |
    frame-major little-endian float32 payload. Storage is 32-bit
    (matching typical upstream feature extractors); values are widened
    to float64 on read so all training math stays 64-bit.

Manifest CSV
    header ``sample_id,feature_path,admiration,amusement,determination,
    empathic_pain,excitement,joy,split``; UTF-8, decimal points, no
    thousands separators. ``feature_path`` is relative to the manifest's
    directory. Targets must already be normalized to [0, 1].

Synthetic data
    Targets are drawn per emotion from a two-component Beta mixture
    that reproduces the heavy skew of real mimicry-intensity ratings:
    most values near zero, a small minority near one. Features are
    Gaussian noise plus a planted signal living in fixed, documented
    dimension blocks (see GLOBAL_SIGNAL_DIMS / TEMPORAL_SIGNAL_DIMS),
    so learnability can be verified:

    * global-mean mode adds ``target_k`` to every frame in emotion k's
      global block; the mean over valid frames recovers the target.
    * temporal mode adds ``target_k * t/(T-1)`` to emotion k's temporal
      block, so only late frames carry signal and a recurrent summary
      is needed to read it.
    * both mode applies both encodings.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

import numpy as np

from .constants import EMOTIONS, FEATURE_DIM, NUM_EMOTIONS
from .errors import ConfigError, DataError
from .rng import Rng

FEATURE_MAGIC = b"EMIF"
FEATURE_VERSION = 1
_FEATURE_HEADER = 16  # magic + version + frames + width, 4 bytes each

MANIFEST_COLUMNS = ("sample_id", "feature_path") + EMOTIONS + ("split",)
SPLITS = ("train", "val", "test")

# Planted-signal layout: emotion k owns 6 feature dims per encoding.
GLOBAL_SIGNAL_DIMS = {k: range(6 * k, 6 * k + 6) for k in range(NUM_EMOTIONS)}
TEMPORAL_SIGNAL_DIMS = {k: range(36 + 6 * k, 36 + 6 * k + 6) for k in range(NUM_EMOTIONS)}
_MIN_SIGNAL_WIDTH = 72

SIGNAL_MODES = ("global-mean", "temporal", "both")


def write_features(path, frames) -> None:
    """Write one sample's frame matrix in the EMIF format."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise DataError(f"feature matrix must be [T>=1 x width>=1], got shape {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise DataError("feature matrix contains non-finite values")
    t_len, width = frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<3I", FEATURE_VERSION, t_len, width))
        fh.write(frames.astype("<f4").tobytes())


def read_features(path, expect_width: int | None = None) -> np.ndarray:
    """Read an EMIF file back as float64 [T x width]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _FEATURE_HEADER:
        raise DataError(
            f"{path}: truncated header, {len(blob)} bytes of {_FEATURE_HEADER}"
        )
    if blob[:4] != FEATURE_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r} at byte 0")
    version, t_len, width = struct.unpack("<3I", blob[4:_FEATURE_HEADER])
    if version != FEATURE_VERSION:
        raise DataError(f"{path}: unsupported version {version} at byte 4")
    if t_len < 1:
        raise DataError(f"{path}: zero frames declared at byte 8")
    if width < 1:
        raise DataError(f"{path}: zero width declared at byte 12")
    if expect_width is not None and width != expect_width:
        raise DataError(f"{path}: width {width} != expected {expect_width} (byte 12)")
    expected = _FEATURE_HEADER + 4 * t_len * width
    if len(blob) != expected:
        raise DataError(
            f"{path}: payload ends at byte {len(blob)}, header promises {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_FEATURE_HEADER).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite feature values")
    return data.reshape(t_len, width)


@dataclass
class ManifestRecord:
    sample_id: str
    feature_path: str
    targets: np.ndarray  # [6], fixed emotion order, values in [0, 1]
    split: str


@dataclass
class Manifest:
    records: list[ManifestRecord]
    root: Path  # directory feature_path entries are relative to

    def split(self, name: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def resolve(self, record: ManifestRecord) -> Path:
        return self.root / record.feature_path


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    lines = [",".join(MANIFEST_COLUMNS)]
    for r in manifest.records:
        cells = [r.sample_id, r.feature_path]
        cells += [repr(float(v)) for v in r.targets]
        cells.append(r.split)
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> Manifest:
    """Parse and fully validate a manifest CSV."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty manifest")
    header = tuple(lines[0].split(","))
    if header != MANIFEST_COLUMNS:
        raise DataError(
            f"{path}: bad header {','.join(header)!r}, expected {','.join(MANIFEST_COLUMNS)!r}"
        )
    root = path.parent
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(MANIFEST_COLUMNS):
            raise DataError(
                f"{path}:{lineno}: {len(cells)} columns, expected {len(MANIFEST_COLUMNS)}"
            )
        sample_id, feature_path = cells[0], cells[1]
        if sample_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate sample_id {sample_id!r}")
        seen.add(sample_id)
        targets = np.zeros(NUM_EMOTIONS)
        for k, name in enumerate(EMOTIONS):
            try:
                v = float(cells[2 + k])
            except ValueError as exc:
                raise DataError(
                    f"{path}:{lineno}: column {name}: not a number: {cells[2 + k]!r}"
                ) from exc
            if not np.isfinite(v) or not 0.0 <= v <= 1.0:
                raise DataError(
                    f"{path}:{lineno}: column {name}: target {v} outside [0, 1]"
                )
            targets[k] = v
        split = cells[-1]
        if split not in SPLITS:
            raise DataError(f"{path}:{lineno}: unknown split {split!r}")
        if not (root / feature_path).is_file():
            raise DataError(f"{path}:{lineno}: missing feature file {feature_path!r}")
        records.append(ManifestRecord(sample_id, feature_path, targets, split))
    return Manifest(records=records, root=root)


@dataclass
class SequenceDataset:
    """An in-memory split: parallel ids, variable-length sequences, targets."""

    sample_ids: list[str]
    sequences: list[np.ndarray]  # each [T_i x width] float64
    targets: np.ndarray          # [N x 6]

    def __len__(self) -> int:
        return len(self.sample_ids)

    @property
    def width(self) -> int:
        return self.sequences[0].shape[1] if self.sequences else 0


def load_split(manifest: Manifest, split: str) -> SequenceDataset:
    """Load every feature file of one split into memory."""
    records = manifest.split(split)
    if not records:
        raise DataError(f"manifest has no records in split {split!r}")
    sequences = []
    width = None
    for r in records:
        try:
            seq = read_features(manifest.resolve(r), expect_width=width)
        except DataError as exc:
            raise DataError(f"sample {r.sample_id!r}: {exc}") from exc
        width = seq.shape[1]
        sequences.append(seq)
    return SequenceDataset(
        sample_ids=[r.sample_id for r in records],
        sequences=sequences,
        targets=np.stack([r.targets for r in records]),
    )


@dataclass
class Batch:
    frames: np.ndarray      # [B x T_max x width], zero-padded
    valid_lens: np.ndarray  # [B]
    targets: np.ndarray     # [B x 6]
    sample_ids: list[str]


def make_batch(dataset: SequenceDataset, indices) -> Batch:
    seqs = [dataset.sequences[i] for i in indices]
    lens = np.array([s.shape[0] for s in seqs], dtype=np.int64)
    t_max = int(lens.max())
    frames = np.zeros((len(seqs), t_max, seqs[0].shape[1]))
    for row, seq in enumerate(seqs):
        frames[row, : seq.shape[0], :] = seq
    return Batch(
        frames=frames,
        valid_lens=lens,
        targets=dataset.targets[list(indices)],
        sample_ids=[dataset.sample_ids[i] for i in indices],
    )


def batches(dataset: SequenceDataset, batch_size: int,
            rng: Rng | None = None, shuffle: bool = False):
    """Yield padded batches covering the dataset exactly once.

    The last short batch is kept. Shuffling consumes one permutation
    from the rng, so epoch order is a pure function of the seed.
    """
    if len(dataset) == 0:
        raise DataError("cannot iterate an empty dataset")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle:
        if rng is None:
            raise ConfigError("shuffle=True requires an rng")
        order = rng.permutation(len(dataset))
    else:
        order = np.arange(len(dataset))
    for start in range(0, len(dataset), batch_size):
        yield make_batch(dataset, order[start : start + batch_size])


@dataclass
class SynthConfig:
    """Generator settings. Defaults reproduce the skewed-target regime."""

    n_samples: int = 100
    seq_len_range: tuple[int, int] = (5, 20)
    feature_dim: int = FEATURE_DIM
    high_prob: float = 0.15            # mixture weight of the near-one component
    beta_low: tuple[float, float] = (0.4, 3.0)
    beta_high: tuple[float, float] = (4.0, 1.5)
    signal_mode: str = "both"
    noise_std: float = 0.1
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        lo, hi = self.seq_len_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad seq_len_range {self.seq_len_range}")
        if self.feature_dim < _MIN_SIGNAL_WIDTH:
            raise ConfigError(
                f"feature_dim must be >= {_MIN_SIGNAL_WIDTH} to hold the signal blocks"
            )
        if self.signal_mode not in SIGNAL_MODES:
            raise ConfigError(f"signal_mode must be one of {SIGNAL_MODES}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0.0 <= self.high_prob <= 1.0:
            raise ConfigError(f"high_prob must be in [0, 1], got {self.high_prob}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


def draw_targets(cfg: SynthConfig, rng: Rng, n: int) -> np.ndarray:
    """[n x 6] targets from the Beta mixture, one independent draw per cell."""
    out = np.empty((n, NUM_EMOTIONS))
    for s in range(n):
        for k in range(NUM_EMOTIONS):
            if rng.uniform() < cfg.high_prob:
                out[s, k] = rng.beta(*cfg.beta_high)
            else:
                out[s, k] = rng.beta(*cfg.beta_low)
    return out


def plant_signal(frames: np.ndarray, targets: np.ndarray, mode: str) -> None:
    """Add the documented target encoding to one sample's frames, in place."""
    t_len = frames.shape[0]
    if mode in ("global-mean", "both"):
        for k in range(NUM_EMOTIONS):
            frames[:, GLOBAL_SIGNAL_DIMS[k]] += targets[k]
    if mode in ("temporal", "both"):
        ramp = np.ones(t_len) if t_len == 1 else np.arange(t_len) / (t_len - 1)
        for k in range(NUM_EMOTIONS):
            frames[:, TEMPORAL_SIGNAL_DIMS[k]] += ramp[:, None] * targets[k]


def synth_generate(cfg: SynthConfig, out_dir) -> Manifest:
    """Write a synthetic dataset under out_dir; returns its manifest.

    Layout: ``out_dir/features/s<index>.emif`` plus ``out_dir/manifest.csv``.
    The first (1 - val_fraction) of samples are the train split, the rest
    val. Identical configs produce byte-identical directories.
    """
    out_dir = Path(out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    rng = Rng(cfg.seed)
    lo, hi = cfg.seq_len_range
    n_train = int(round(cfg.n_samples * (1.0 - cfg.val_fraction)))
    records = []
    for idx in range(cfg.n_samples):
        targets = draw_targets(cfg, rng, 1)[0]
        t_len = int(rng.integers(lo, hi, 1)[0])
        if cfg.noise_std > 0.0:
            frames = cfg.noise_std * rng.normals(t_len * cfg.feature_dim)
            frames = frames.reshape(t_len, cfg.feature_dim)
        else:
            frames = np.zeros((t_len, cfg.feature_dim))
        plant_signal(frames, targets, cfg.signal_mode)
        name = f"s{idx:06d}"
        rel = str(PurePosixPath("features") / f"{name}.emif")
        write_features(out_dir / rel, frames)
        split = "train" if idx < n_train else "val"
        records.append(ManifestRecord(name, rel, targets, split))
    manifest = Manifest(records=records, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest

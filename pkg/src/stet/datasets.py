"""Synthetic sEMG-like datasets and on-disk interchange formats.

The gesture generator emits amplitude-modulated band-limited noise: each
class has a fixed per-channel activation envelope (smooth bumps drawn once
per class from the seed). One designated "twin" pair shares envelopes and
per-channel energy exactly, differing only in where (not how much) a short
burst occurs, so time-collapsed features cannot separate it.

Formats: a csv layout (one sample per row, blank line between recordings)
and a raw-f64 binary container that round-trips losslessly.
"""

from __future__ import annotations

import csv
import io
import struct
import warnings
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, ParseError
from .signal import Recording
from .tensor import RngState

__all__ = [
    "generate_synthetic_dataset",
    "generate_synthetic_angle_dataset",
    "TWIN_CLASSES",
    "save_dataset",
    "load_dataset",
]

TWIN_CLASSES = (0, 1)

_SMOOTH_TAPS = 5


def _bandlimited_noise(rng, shape):
    """Zero-mean unit-variance noise smoothed by a short moving average."""
    t, c = shape
    white = rng.normal(size=(t + _SMOOTH_TAPS - 1, c))
    kernel = np.ones(_SMOOTH_TAPS) / _SMOOTH_TAPS
    out = np.empty((t, c))
    for ch in range(c):
        out[:, ch] = np.convolve(white[:, ch], kernel, mode="valid")
    return out * np.sqrt(_SMOOTH_TAPS)


def _bump(steps, center, width, amp):
    i = np.arange(steps)
    return amp * np.exp(-0.5 * ((i - center) / width) ** 2)


def _class_envelope(k, n_channels, steps, rng):
    """Smooth activation profile (steps, c) for class k; floor everywhere."""
    env = np.full((steps, n_channels), 0.08)
    primary = k % n_channels
    secondary = (k + 3) % n_channels
    for ch in {primary, secondary}:
        crng = rng.derive("envelope", k, ch)
        for _ in range(2):
            center = crng.uniform(0.15, 0.85) * steps
            width = crng.uniform(0.10, 0.22) * steps
            amp = crng.uniform(0.6, 1.1)
            env[:, ch] += _bump(steps, center, width, amp)
    return env


def generate_synthetic_dataset(
    n_classes,
    n_channels,
    steps,
    samples_per_class,
    seed,
    sample_rate_hz=1000.0,
    twin_pair=True,
):
    """Desk-scale gesture corpus: one recording per window, label = class id.

    With ``twin_pair`` the first two classes become the short-term twins:
    identical envelopes except for an equal-energy burst placed early
    (class 0) versus late (class 1) on one otherwise-quiet channel.
    """
    if n_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
    if twin_pair and n_channels < 6:
        raise ConfigurationError("twin pair construction needs at least 6 channels")
    rng = RngState(seed).derive("synthetic-gestures")

    envelopes = [_class_envelope(k, n_channels, steps, rng) for k in range(n_classes)]
    if twin_pair:
        a, b = TWIN_CLASSES
        envelopes[b] = envelopes[a].copy()
        burst_channel = (a % n_channels + 5) % n_channels
        width = steps / 14.0
        amp = 0.9
        envelopes[a] = envelopes[a].copy()
        envelopes[a][:, burst_channel] += _bump(steps, 0.30 * steps, width, amp)
        envelopes[b][:, burst_channel] += _bump(steps, 0.70 * steps, width, amp)

    recordings = []
    for k in range(n_classes):
        for s in range(samples_per_class):
            srng = rng.derive("sample", k, s)
            x = envelopes[k] * _bandlimited_noise(srng, (steps, n_channels))
            x += 0.02 * srng.normal(size=(steps, n_channels))
            recordings.append(
                Recording(samples=x, sample_rate_hz=sample_rate_hz, label=k, subject_id="synthetic")
            )
    return recordings


def generate_synthetic_angle_dataset(
    n_recordings,
    n_channels,
    n_joints,
    recording_samples,
    seed,
    sample_rate_hz=1000.0,
):
    """Continuous-motion corpus: joint trajectories drive channel envelopes.

    Angles are small, moderately fast sinusoid mixtures (degrees); channel
    envelopes are a softplus of a fixed random linear read-out of the
    angles, modulating a per-channel tone plus band-limited noise. The
    partially deterministic carrier keeps window amplitudes precisely
    estimable, so a good regressor can track the angles smoothly.
    """
    rng = RngState(seed).derive("synthetic-angles")
    mixing = rng.derive("mixing").normal(size=(n_joints, n_channels)) / np.sqrt(n_joints)

    recordings = []
    for r in range(n_recordings):
        rrng = rng.derive("recording", r)
        i = np.arange(recording_samples)
        angles = np.zeros((recording_samples, n_joints))
        for j in range(n_joints):
            jrng = rrng.derive("joint", j)
            angles[:, j] = jrng.uniform(-3, 3)
            for _ in range(3):
                cycles = jrng.uniform(6.0, 14.0)
                amp = jrng.uniform(1.5, 3.5)
                phase = jrng.uniform(0, 2 * np.pi)
                angles[:, j] += amp * np.sin(2 * np.pi * cycles * i / recording_samples + phase)
        drive = (angles / 3.0) @ mixing
        envelope = np.logaddexp(0.0, drive) + 0.1

        noise_rng = rrng.derive("noise")
        tones = np.empty((recording_samples, n_channels))
        for ch in range(n_channels):
            freq_hz = 30.0 + 5.0 * ch
            phase = noise_rng.derive("phase", ch).uniform(0, 2 * np.pi)
            tones[:, ch] = np.sin(2 * np.pi * freq_hz * i / sample_rate_hz + phase)
        carrier = 0.9 * tones + 0.55 * _bandlimited_noise(noise_rng, (recording_samples, n_channels))
        x = envelope * carrier
        x += 0.02 * rrng.derive("floor").normal(size=(recording_samples, n_channels))
        recordings.append(
            Recording(samples=x, sample_rate_hz=sample_rate_hz, label=angles, subject_id="synthetic")
        )
    return recordings


# --- csv format -----------------------------------------------------------

def _csv_header(n_channels):
    return ["subject", "label", "rate"] + [f"channel_{i}" for i in range(n_channels)]


def _save_csv(recordings, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if recordings:
            writer.writerow(_csv_header(recordings[0].n_channels))
        for rec in recordings:
            if rec.is_regression:
                raise ConfigurationError(
                    "csv format stores class labels only; use raw-f64 for trajectories"
                )
            for row in rec.samples:
                writer.writerow(
                    [rec.subject_id, rec.label, f"{rec.sample_rate_hz:.12g}"]
                    + [f"{v:.12g}" for v in row]
                )
            writer.writerow([])


def _load_csv(path):
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or all(not ln.strip(",").strip() for ln in lines):
        warnings.warn(f"{path}: empty dataset file", stacklevel=3)
        return []
    header = next(csv.reader([lines[0]]))
    n_channels = len(header) - 3
    if header[:3] != ["subject", "label", "rate"] or n_channels < 1 or header[3:] != [
        f"channel_{i}" for i in range(n_channels)
    ]:
        raise ParseError(f"malformed header {header!r}", line=1)

    recordings = []
    block_rows, block_meta = [], None

    def flush(line_no):
        nonlocal block_rows, block_meta
        if not block_rows:
            return
        subject, label, rate = block_meta
        recordings.append(
            Recording(
                samples=np.array(block_rows, dtype=np.float64),
                sample_rate_hz=rate,
                label=label,
                subject_id=subject,
            )
        )
        block_rows, block_meta = [], None

    for line_no, raw in enumerate(lines[1:], start=2):
        if not raw.strip(",").strip():
            flush(line_no)
            continue
        cells = next(csv.reader([raw]))
        if len(cells) != len(header):
            raise ParseError(
                f"expected {len(header)} columns, found {len(cells)}", line=line_no
            )
        try:
            label = int(cells[1])
            rate = float(cells[2])
            values = [float(c) for c in cells[3:]]
        except ValueError as exc:
            raise ParseError(f"non-numeric cell ({exc})", line=line_no) from None
        meta = (cells[0], label, rate)
        if block_meta is not None and meta != block_meta:
            flush(line_no)
        block_meta = meta
        block_rows.append(values)
    flush(len(lines) + 1)
    return recordings


# --- raw-f64 binary format --------------------------------------------------

_MAGIC = b"SEMGF64\x00"
_VERSION = 1
_LABEL_CLASS = 0
_LABEL_TRAJECTORY = 1


def _save_raw(recordings, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, len(recordings)))
        for rec in recordings:
            subject = rec.subject_id.encode()
            fh.write(struct.pack("<I", len(subject)))
            fh.write(subject)
            fh.write(struct.pack("<dIQ", rec.sample_rate_hz, rec.n_channels, rec.n_samples))
            if rec.is_regression:
                fh.write(struct.pack("<BI", _LABEL_TRAJECTORY, rec.label.shape[1]))
                fh.write(np.ascontiguousarray(rec.label, dtype="<f8").tobytes())
            else:
                fh.write(struct.pack("<Bq", _LABEL_CLASS, int(rec.label)))
            fh.write(np.ascontiguousarray(rec.samples, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, fh):
        self.fh = fh
        self.offset = 0

    def read(self, n, what):
        data = self.fh.read(n)
        if len(data) != n:
            raise ParseError(f"truncated file while reading {what} at byte {self.offset}")
        self.offset += n
        return data

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt), what))


def _load_raw(path):
    with open(path, "rb") as fh:
        head = fh.read(len(_MAGIC))
        if head == b"":
            warnings.warn(f"{path}: empty dataset file", stacklevel=3)
            return []
        if head != _MAGIC:
            raise ParseError(f"bad magic bytes {head!r}; not a raw-f64 dataset")
        reader = _Reader(fh)
        reader.offset = len(_MAGIC)
        version, count = reader.unpack("<IQ", "file header")
        if version != _VERSION:
            raise ParseError(f"unsupported raw-f64 version {version}")
        recordings = []
        for _ in range(count):
            (subject_len,) = reader.unpack("<I", "subject length")
            subject = reader.read(subject_len, "subject").decode()
            rate, c, n = reader.unpack("<dIQ", "recording header")
            (kind,) = reader.unpack("<B", "label kind")
            if kind == _LABEL_CLASS:
                (label,) = reader.unpack("<q", "class label")
                label = int(label)
            elif kind == _LABEL_TRAJECTORY:
                (n_joints,) = reader.unpack("<I", "joint count")
                raw = reader.read(8 * n * n_joints, "trajectory")
                label = np.frombuffer(raw, dtype="<f8").reshape(n, n_joints).copy()
            else:
                raise ParseError(f"unknown label kind {kind} at byte {reader.offset}")
            raw = reader.read(8 * n * c, "samples")
            samples = np.frombuffer(raw, dtype="<f8").reshape(n, c).copy()
            recordings.append(
                Recording(samples=samples, sample_rate_hz=rate, label=label, subject_id=subject)
            )
        return recordings


def save_dataset(recordings, path, format=None):
    """Write recordings as ``csv`` or ``raw-f64`` (inferred from suffix)."""
    path = Path(path)
    format = format or ("csv" if path.suffix == ".csv" else "raw-f64")
    if format == "csv":
        _save_csv(recordings, path)
    elif format == "raw-f64":
        _save_raw(recordings, path)
    else:
        raise ConfigurationError(f"unknown dataset format {format!r}")
    return path


def load_dataset(path, format=None):
    path = Path(path)
    format = format or ("csv" if path.suffix == ".csv" else "raw-f64")
    if format == "csv":
        return _load_csv(path)
    if format == "raw-f64":
        return _load_raw(path)
    raise ConfigurationError(f"unknown dataset format {format!r}")

"""
Audio front end: 16 kHz mono WAV -> STFT -> spectral envelope -> 32-bin log Mel envelope gram,
plus per-bin standardisation and a naive envelope-ratio resynthesis back to audio.

The envelope estimator is an iterative cepstral smoothing approximation of a true-envelope
estimator: each pass replaces the log spectrum by max(log spectrum, smoothed) and low-pass
lifters the result; a final constant lift makes the envelope an upper bound of the spectrum.
"""

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence, Union

import librosa
import numpy as np
import scipy.fft
import soundfile as sf
from scipy.interpolate import interp1d

from src.errors import AudioFormatError, CorpusError, DimensionError, FormatError, NumericError
from src.storage import BinaryReader, BinaryWriter, read_bytes, write_atomic

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
N_FFT = 1024
HOP = 160
N_MELS = 32
CEPSTRAL_ORDER = 64
ENVELOPE_ITERATIONS = 20
MAG_FLOOR = 1e-10
STD_FLOOR = 1e-6
ENVELOPE_TOL = 1e-6

GRAM_MAGIC = b"EGRM"
STATS_MAGIC = b"NSTA"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioFormatError(f"expected mono samples, got shape {samples.shape}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # [n_mels, n_fft // 2 + 1], rows sum to 1
    centers_hz: np.ndarray
    edges_hz: np.ndarray
    sample_rate: int
    n_fft: int

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


@dataclass
class EnvelopeGram:
    """Log-amplitude Mel envelope, bins x frames."""

    values: np.ndarray
    hop_seconds: float = HOP / SAMPLE_RATE
    speaker: str = ""
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise DimensionError(f"gram must be bins x frames with at least one frame, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("gram contains non-finite values")

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    count: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DimensionError(f"stats mean {self.mean.shape} and std {self.std.shape} must be matching vectors")
        if np.any(self.std <= 0):
            raise NumericError("stats std must be positive in every bin")


# --- audio I/O ---


def read_wav(path: PathLike) -> AudioClip:
    """Read a 16-bit PCM mono 16 kHz WAV file; anything else is an AudioFormatError."""
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise AudioFormatError(f"{path}: not a readable audio file ({e})") from e
    if info.format != "WAV" or info.subtype != "PCM_16":
        raise AudioFormatError(f"{path}: expected WAV/PCM_16, got {info.format}/{info.subtype}")
    if info.channels != 1:
        raise AudioFormatError(f"{path}: expected mono, got {info.channels} channels")
    if info.samplerate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {info.samplerate} Hz")
    samples, rate = sf.read(str(path), dtype="float64")
    return AudioClip(samples, rate)


def write_wav(path: PathLike, clip: AudioClip) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(clip.samples, -1.0, 1.0), clip.sample_rate, subtype="PCM_16", format="WAV")
    return path


# --- analysis / synthesis ---


def stft(clip: AudioClip, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Centred Hann STFT with reflect padding, frames first: [T, n_fft // 2 + 1]."""
    if len(clip.samples) < n_fft:
        raise AudioFormatError(f"clip has {len(clip.samples)} samples, need at least n_fft={n_fft}")
    spec = librosa.stft(clip.samples, n_fft=n_fft, hop_length=hop, window="hann", center=True, pad_mode="reflect")
    return spec.T


def istft(spec: np.ndarray, length: int, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Overlap-add inverse of `stft`, trimmed or padded to `length` samples."""
    return librosa.istft(spec.T, hop_length=hop, n_fft=n_fft, window="hann", center=True, length=length)


def _lifter(log_spec: np.ndarray, order: int) -> np.ndarray:
    n_fft = 2 * (log_spec.shape[-1] - 1)
    cep = scipy.fft.irfft(log_spec, n=n_fft)
    cep[order + 1 : n_fft - order] = 0.0
    return scipy.fft.rfft(cep).real


def estimate_envelope(
    mag_frame: np.ndarray,
    cepstral_order: int = CEPSTRAL_ORDER,
    iterations: int = ENVELOPE_ITERATIONS,
) -> np.ndarray:
    """Log spectral envelope of one magnitude frame."""
    mag_frame = np.asarray(mag_frame, dtype=np.float64)
    if np.any(mag_frame < 0):
        raise NumericError("magnitude spectrum must be nonnegative")
    log_spec = np.log(np.maximum(mag_frame, MAG_FLOOR))
    env = _lifter(log_spec, cepstral_order)
    if iterations <= 0:
        return env

    for _ in range(iterations):
        env = _lifter(np.maximum(log_spec, env), cepstral_order)
        if np.max(log_spec - env) <= ENVELOPE_TOL:
            break
    # A constant shift only moves c0, so the envelope stays band-limited.
    return env + max(0.0, float(np.max(log_spec - env)))


@lru_cache(maxsize=8)
def build_mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = N_FFT,
    sr: int = SAMPLE_RATE,
    fmin: float = 0.0,
    fmax: float = SAMPLE_RATE / 2,
) -> MelFilterbank:
    """Triangular HTK-Mel filters, each row normalised to unit sum."""
    if n_mels < 2:
        raise DimensionError(f"need at least 2 Mel filters, got {n_mels}")
    weights = librosa.filters.mel(
        sr=sr, n_fft=n_fft, n_mels=n_mels, fmin=fmin, fmax=fmax, htk=True, norm=None, dtype=np.float64
    )
    sums = weights.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise DimensionError(f"{n_mels} Mel filters are too narrow for n_fft={n_fft}")
    weights = (weights / sums).astype(np.float64)
    weights.setflags(write=False)
    edges = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=fmin, fmax=fmax, htk=True)
    centers = edges[1:-1].copy()
    edges.setflags(write=False)
    centers.setflags(write=False)
    return MelFilterbank(weights=weights, centers_hz=centers, edges_hz=edges, sample_rate=sr, n_fft=n_fft)


def mel_envelope(log_env: np.ndarray, fb: Optional[MelFilterbank] = None) -> np.ndarray:
    """Integrate a log envelope over the filterbank in linear amplitude; log output. Works per frame or on [T, bins]."""
    fb = fb or build_mel_filterbank()
    log_env = np.asarray(log_env, dtype=np.float64)
    if log_env.shape[-1] != fb.n_bins:
        raise DimensionError(f"envelope has {log_env.shape[-1]} bins, filterbank expects {fb.n_bins}")
    linear = np.exp(log_env) @ fb.weights.T
    return np.log(np.maximum(linear, np.finfo(np.float64).tiny))


def extract_gram(
    clip: AudioClip,
    speaker: str = "",
    fb: Optional[MelFilterbank] = None,
    cepstral_order: int = CEPSTRAL_ORDER,
    iterations: int = ENVELOPE_ITERATIONS,
) -> EnvelopeGram:
    """Full feature chain for one clip."""
    fb = fb or build_mel_filterbank()
    mags = np.abs(stft(clip, n_fft=fb.n_fft))
    envelopes = np.stack([estimate_envelope(frame, cepstral_order, iterations) for frame in mags])
    return EnvelopeGram(mel_envelope(envelopes, fb).T, hop_seconds=HOP / clip.sample_rate, speaker=speaker)


def resynthesize(
    clip: AudioClip,
    src_gram: EnvelopeGram,
    conv_gram: EnvelopeGram,
    fb: Optional[MelFilterbank] = None,
) -> AudioClip:
    """Filter the source STFT by the converted/source envelope ratio, keeping the source phase."""
    fb = fb or build_mel_filterbank()
    spec = stft(clip, n_fft=fb.n_fft)
    if src_gram.frames != spec.shape[0] or conv_gram.frames != spec.shape[0]:
        raise DimensionError(
            f"frame mismatch: clip has {spec.shape[0]} frames, grams have {src_gram.frames} and {conv_gram.frames}"
        )
    if src_gram.bins != fb.n_mels or conv_gram.bins != fb.n_mels:
        raise DimensionError(f"grams must have {fb.n_mels} bins")

    diff = conv_gram.values - src_gram.values
    to_linear = interp1d(
        fb.centers_hz,
        diff,
        axis=0,
        kind="linear",
        bounds_error=False,
        fill_value=(diff[0], diff[-1]),
        assume_sorted=True,
    )
    freqs = librosa.fft_frequencies(sr=fb.sample_rate, n_fft=fb.n_fft)
    gain = np.exp(to_linear(freqs))  # [bins, T]
    samples = istft(spec * gain.T, length=len(clip.samples), n_fft=fb.n_fft)
    return AudioClip(samples, clip.sample_rate)


# --- normalisation ---


def fit_norm(grams: Sequence[EnvelopeGram]) -> NormStats:
    """Per-bin mean and (floored) standard deviation over every frame of every gram."""
    if not grams:
        raise CorpusError("cannot fit normalisation statistics on an empty corpus")
    stacked = np.concatenate([g.values for g in grams], axis=1)
    mean = stacked.mean(axis=1)
    std = np.maximum(stacked.std(axis=1), STD_FLOOR)
    return NormStats(mean=mean, std=std, count=stacked.shape[1])


def _check_stats(gram: EnvelopeGram, stats: NormStats) -> None:
    if stats.mean.shape[0] != gram.bins:
        raise DimensionError(f"stats cover {stats.mean.shape[0]} bins, gram has {gram.bins}")


def apply_norm(gram: EnvelopeGram, stats: NormStats) -> EnvelopeGram:
    _check_stats(gram, stats)
    values = (gram.values - stats.mean[:, None]) / stats.std[:, None]
    return replace(gram, values=values, normalized=True)


def invert_norm(gram: EnvelopeGram, stats: NormStats) -> EnvelopeGram:
    _check_stats(gram, stats)
    values = gram.values * stats.std[:, None] + stats.mean[:, None]
    return replace(gram, values=values, normalized=False)


# --- gram / stats files ---


def encode_gram(gram: EnvelopeGram) -> bytes:
    writer = BinaryWriter().raw(GRAM_MAGIC).u32(FORMAT_VERSION).u32(gram.bins).u32(gram.frames)
    # frame-contiguous: all bins of frame 0, then frame 1, ...
    return writer.f64(gram.hop_seconds).array(gram.values.T).getvalue()


def decode_gram(data: bytes, source: str = "gram", speaker: str = "") -> EnvelopeGram:
    reader = BinaryReader(data, source)
    reader.magic(GRAM_MAGIC)
    reader.version(FORMAT_VERSION)
    bins = reader.u32()
    frames = reader.u32()
    if bins == 0 or frames == 0:
        raise FormatError(f"{source}: empty gram ({bins} bins x {frames} frames)")
    hop_seconds = reader.f64()
    values = reader.array((frames, bins)).T.copy()
    reader.finish()
    return EnvelopeGram(values, hop_seconds=hop_seconds, speaker=speaker)


def write_gram(path: PathLike, gram: EnvelopeGram) -> Path:
    return write_atomic(path, encode_gram(gram))


def read_gram(path: PathLike) -> EnvelopeGram:
    path = Path(path)
    return decode_gram(read_bytes(path, "gram"), source=str(path), speaker=path.stem)


def encode_stats(stats: NormStats) -> bytes:
    if stats.mean.shape != (N_MELS,):
        raise DimensionError(f"stats files hold {N_MELS} bins, got {stats.mean.shape[0]}")
    return BinaryWriter().raw(STATS_MAGIC).u32(FORMAT_VERSION).array(stats.mean).array(stats.std).getvalue()


def decode_stats(data: bytes, source: str = "stats") -> NormStats:
    reader = BinaryReader(data, source)
    reader.magic(STATS_MAGIC)
    reader.version(FORMAT_VERSION)
    mean = reader.array((N_MELS,))
    std = reader.array((N_MELS,))
    reader.finish()
    if np.any(std <= 0):
        raise FormatError(f"{source}: nonpositive standard deviation")
    return NormStats(mean=mean, std=std, count=0)


def write_stats(path: PathLike, stats: NormStats) -> Path:
    return write_atomic(path, encode_stats(stats))


def read_stats(path: PathLike) -> NormStats:
    return decode_stats(read_bytes(path, "stats"), source=str(path))

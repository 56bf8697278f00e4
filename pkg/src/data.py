"""
Corpora: audio ingestion, on-disk persistence and the synthetic two-domain toy task.

On disk a corpus directory holds
    grams/<name>.egrm   one envelope gram per source (raw log amplitudes, not normalised)
    stats.nsta          per-bin statistics fitted over exactly those grams
    manifest.tsv        <relative_path>\t<frames>\t<status>, one line per source file
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import ADVGAN_WORKERS, TOY_PATCHES, TOY_X, TOY_Y, ToyDomainSpec
from src.errors import AdvGanError, CorpusError, DimensionError, FormatError
from src.features import (
    EnvelopeGram,
    NormStats,
    build_mel_filterbank,
    extract_gram,
    fit_norm,
    read_gram,
    read_stats,
    read_wav,
    write_gram,
    write_stats,
)
from src.storage import write_atomic

logger = logging.getLogger(__name__)

GRAMS_DIR = "grams"
STATS_FILE = "stats.nsta"
MANIFEST_FILE = "manifest.tsv"
STATUS_OK = "ok"
TOY_FRAMES = 128

PathLike = Union[str, Path]


@dataclass
class ManifestEntry:
    path: str
    frames: int
    status: str = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def line(self) -> str:
        return f"{self.path}\t{self.frames}\t{self.status}"


@dataclass
class Corpus:
    grams: List[EnvelopeGram]
    stats: NormStats
    speaker: str = ""
    manifest: List[ManifestEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.grams)

    @property
    def failures(self) -> List[ManifestEntry]:
        return [entry for entry in self.manifest if not entry.ok]

    def values(self) -> List[np.ndarray]:
        return [g.values for g in self.grams]


def gram_filename(rel_path: str) -> str:
    stem = Path(rel_path).with_suffix("").as_posix()
    return stem.replace("/", "__") + ".egrm"


def _status_text(error: Exception) -> str:
    text = re.sub(r"\s+", " ", str(error)).strip()
    return f"failed: {type(error).__name__}: {text}"


def _extract_one(path: Path, speaker: str) -> EnvelopeGram:
    return extract_gram(read_wav(path), speaker=speaker, fb=build_mel_filterbank())


def ingest(
    wav_dir: PathLike,
    out_dir: Optional[PathLike] = None,
    workers: int = ADVGAN_WORKERS,
    speaker: Optional[str] = None,
) -> Corpus:
    """
    Extract an envelope gram from every file under `wav_dir`.

    Files that cannot be read as 16 kHz mono PCM16 WAV are recorded as failures in the
    manifest and skipped. Results are assembled in sorted path order, so the corpus does not
    depend on which worker finished first.
    """
    wav_dir = Path(wav_dir)
    if not wav_dir.is_dir():
        raise CorpusError(f"{wav_dir} is not a directory")
    paths = sorted(p for p in wav_dir.rglob("*") if p.is_file())
    if not paths:
        raise CorpusError(f"{wav_dir} contains no files")
    speaker = speaker if speaker is not None else wav_dir.name

    results: Dict[Path, Union[EnvelopeGram, Exception]] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {executor.submit(_extract_one, path, speaker): path for path in paths}
        for future in as_completed(futures):
            path = futures[future]
            try:
                results[path] = future.result()
            except AdvGanError as e:
                logger.warning(f"[Ingest] Skipping {path}: {e}")
                results[path] = e

    grams: List[EnvelopeGram] = []
    manifest: List[ManifestEntry] = []
    for path in paths:
        rel = path.relative_to(wav_dir).as_posix()
        outcome = results[path]
        if isinstance(outcome, EnvelopeGram):
            grams.append(outcome)
            manifest.append(ManifestEntry(rel, outcome.frames))
        else:
            manifest.append(ManifestEntry(rel, 0, _status_text(outcome)))
    logger.info(f"[Ingest] {len(grams)}/{len(paths)} files extracted from {wav_dir}")

    if not grams:
        raise CorpusError(f"no usable WAV files in {wav_dir}")
    corpus = Corpus(grams=grams, stats=fit_norm(grams), speaker=speaker, manifest=manifest)
    if out_dir is not None:
        save_corpus(corpus, out_dir)
    return corpus


def save_corpus(corpus: Corpus, out_dir: PathLike) -> Path:
    out_dir = Path(out_dir)
    grams_dir = out_dir / GRAMS_DIR
    grams_dir.mkdir(parents=True, exist_ok=True)
    ok_entries = [entry for entry in corpus.manifest if entry.ok]
    if len(ok_entries) != len(corpus.grams):
        raise CorpusError(f"manifest lists {len(ok_entries)} grams, corpus holds {len(corpus.grams)}")
    for entry, gram in zip(ok_entries, corpus.grams):
        write_gram(grams_dir / gram_filename(entry.path), gram)
    write_stats(out_dir / STATS_FILE, corpus.stats)
    manifest_text = "".join(entry.line() + "\n" for entry in corpus.manifest)
    write_atomic(out_dir / MANIFEST_FILE, manifest_text.encode("utf-8"))
    logger.info(f"[Corpus] Saved {len(corpus.grams)} grams to {out_dir}")
    return out_dir


def _parse_manifest(text: str, source: str) -> List[ManifestEntry]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{source} line {lineno}: expected 3 tab-separated fields")
        try:
            frames = int(parts[1])
        except ValueError as e:
            raise FormatError(f"{source} line {lineno}: bad frame count '{parts[1]}'") from e
        entries.append(ManifestEntry(parts[0], frames, parts[2]))
    return entries


def load_corpus(corpus_dir: PathLike) -> Corpus:
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / MANIFEST_FILE
    if not manifest_path.is_file():
        raise CorpusError(f"{corpus_dir} has no {MANIFEST_FILE}")
    manifest = _parse_manifest(manifest_path.read_text(encoding="utf-8"), str(manifest_path))
    grams = []
    for entry in manifest:
        if not entry.ok:
            continue
        gram = read_gram(corpus_dir / GRAMS_DIR / gram_filename(entry.path))
        if gram.frames != entry.frames:
            raise FormatError(f"{entry.path}: manifest says {entry.frames} frames, gram has {gram.frames}")
        grams.append(gram)
    if not grams:
        raise CorpusError(f"{corpus_dir} holds no grams")
    stats_path = corpus_dir / STATS_FILE
    if not stats_path.is_file():
        raise CorpusError(f"{corpus_dir} has no {STATS_FILE}")
    return Corpus(grams=grams, stats=read_stats(stats_path), speaker=corpus_dir.name, manifest=manifest)


# --- synthetic toy domains ---


def synth_sample(
    spec: ToyDomainSpec, frames: int = TOY_FRAMES, rng: Optional[np.random.Generator] = None, speaker: str = ""
) -> EnvelopeGram:
    """
    One toy log-envelope patch: a flat floor plus two Gaussian formant bumps whose
    amplitudes drift sinusoidally over time and whose centres are jittered per patch.
    """
    rng = rng if rng is not None else np.random.default_rng()
    centres = np.array([spec.mu1, spec.mu2]) + rng.uniform(-spec.center_jitter, spec.center_jitter, size=2)
    amps = rng.uniform(spec.amp_low, spec.amp_high, size=2)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=2)

    t = np.arange(frames)
    bins = np.arange(spec.n_bins)
    values = np.full((spec.n_bins, frames), spec.floor, dtype=np.float64)
    for centre, amp, phase in zip(centres, amps, phases):
        envelope = amp * (1.0 + spec.mod_depth * np.sin(2.0 * np.pi * spec.mod_rate * t + phase))
        profile = np.exp(-((bins - centre) ** 2) / (2.0 * spec.sigma**2))
        values += profile[:, None] * envelope[None, :]
    return EnvelopeGram(values, speaker=speaker)


def toy_corpus(
    spec: ToyDomainSpec, patches: int, rng: np.random.Generator, speaker: str, frames: int = TOY_FRAMES
) -> Corpus:
    grams = [synth_sample(spec, frames, rng, speaker=speaker) for _ in range(patches)]
    manifest = [ManifestEntry(f"{speaker}_{i:05d}", frames) for i in range(patches)]
    return Corpus(grams=grams, stats=fit_norm(grams), speaker=speaker, manifest=manifest)


def make_toy_corpora(
    seed: int = 0,
    spec_x: ToyDomainSpec = TOY_X,
    spec_y: ToyDomainSpec = TOY_Y,
    patches: int = TOY_PATCHES,
    frames: int = TOY_FRAMES,
) -> Tuple[Corpus, Corpus]:
    seq_x, seq_y = np.random.SeedSequence(seed).spawn(2)
    corpus_x = toy_corpus(spec_x, patches, np.random.default_rng(seq_x), "toy_x", frames)
    corpus_y = toy_corpus(spec_y, patches, np.random.default_rng(seq_y), "toy_y", frames)
    return corpus_x, corpus_y


def peak_positions(values: np.ndarray) -> Tuple[int, int]:
    """Dominant bin of the time-averaged profile in the lower and the upper half of the bins."""
    profile = np.asarray(values, dtype=np.float64).mean(axis=1)
    half = profile.shape[0] // 2
    return int(np.argmax(profile[:half])), half + int(np.argmax(profile[half:]))


def peaks_match(values: np.ndarray, spec: ToyDomainSpec, tolerance: float = 1.0) -> bool:
    low, high = peak_positions(values)
    return abs(low - spec.mu1) <= tolerance and abs(high - spec.mu2) <= tolerance


def classify_domain(values: np.ndarray, spec_x: ToyDomainSpec = TOY_X, spec_y: ToyDomainSpec = TOY_Y) -> str:
    low, high = peak_positions(values)
    dist_x = abs(low - spec_x.mu1) + abs(high - spec_x.mu2)
    dist_y = abs(low - spec_y.mu1) + abs(high - spec_y.mu2)
    return "x" if dist_x <= dist_y else "y"


def energy_deviation(source: np.ndarray, converted: np.ndarray) -> float:
    """Mean over frames of |bin-mean(converted) - bin-mean(source)|."""
    source = np.asarray(source, dtype=np.float64)
    converted = np.asarray(converted, dtype=np.float64)
    if source.shape != converted.shape:
        raise DimensionError(f"energy_deviation: shapes {source.shape} and {converted.shape} differ")
    return float(np.mean(np.abs(converted.mean(axis=0) - source.mean(axis=0))))


def mean_energy(grams: Sequence[EnvelopeGram]) -> float:
    return float(np.mean([g.values.mean() for g in grams]))

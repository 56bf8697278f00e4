import numpy as np
import pytest

from src.config import TOY_X, TOY_Y, ToyDomainSpec
from src.data import (
    GRAMS_DIR,
    MANIFEST_FILE,
    STATS_FILE,
    classify_domain,
    energy_deviation,
    gram_filename,
    ingest,
    load_corpus,
    make_toy_corpora,
    mean_energy,
    peaks_match,
    save_corpus,
    synth_sample,
)
from src.errors import CorpusError, DimensionError
from src.features import fit_norm


def test_still_sample_peaks_exactly_at_centres():
    spec = ToyDomainSpec(mu1=6, mu2=20, center_jitter=0.0, mod_depth=0.0)
    values = synth_sample(spec, frames=16, rng=np.random.default_rng(0)).values
    assert np.all(values == values[:, :1])
    assert int(np.argmax(values[:16, 0])) == 6
    assert 16 + int(np.argmax(values[16:, 0])) == 20


def test_default_domain_x_peaks_stay_near_centres():
    for seed in range(5):
        values = synth_sample(TOY_X, rng=np.random.default_rng(seed)).values
        low = np.argmax(values[:16], axis=0)
        high = 16 + np.argmax(values[16:], axis=0)
        assert set(low.tolist()) <= {5, 6, 7}
        assert set(high.tolist()) <= {19, 20, 21}


def test_same_rng_seed_same_sample():
    a = synth_sample(TOY_Y, rng=np.random.default_rng(3)).values
    b = synth_sample(TOY_Y, rng=np.random.default_rng(3)).values
    np.testing.assert_array_equal(a, b)


def test_toy_corpora_defaults():
    corpus_x, corpus_y = make_toy_corpora(0)
    assert len(corpus_x) == len(corpus_y) == 200
    assert all(g.bins == 32 and g.frames == 128 for g in corpus_x.grams)
    np.testing.assert_array_equal(corpus_x.stats.mean, fit_norm(corpus_x.grams).mean)


def test_same_seed_same_corpora():
    a, _ = make_toy_corpora(4, patches=3)
    b, _ = make_toy_corpora(4, patches=3)
    c, _ = make_toy_corpora(5, patches=3)
    for ga, gb in zip(a.grams, b.grams):
        np.testing.assert_array_equal(ga.values, gb.values)
    assert not np.array_equal(a.grams[0].values, c.grams[0].values)


def test_peak_classifier_separates_the_domains():
    corpus_x, corpus_y = make_toy_corpora(99, patches=100)
    assert all(classify_domain(g.values) == "x" for g in corpus_x.grams)
    assert all(classify_domain(g.values) == "y" for g in corpus_y.grams)
    assert all(peaks_match(g.values, TOY_Y) for g in corpus_y.grams)
    assert not any(peaks_match(g.values, TOY_Y) for g in corpus_x.grams)


def test_domains_are_energy_matched():
    corpus_x, corpus_y = make_toy_corpora(0)
    assert abs(mean_energy(corpus_x.grams) - mean_energy(corpus_y.grams)) < 0.1


def test_energy_deviation():
    values = np.random.default_rng(0).standard_normal((32, 10))
    assert energy_deviation(values, values) == 0.0
    assert energy_deviation(values, values + 0.25) == pytest.approx(0.25)
    with pytest.raises(DimensionError):
        energy_deviation(values, values[:, :5])


def test_corpus_save_load_round_trip(tmp_path):
    corpus, _ = make_toy_corpora(1, patches=3, frames=20)
    save_corpus(corpus, tmp_path / "x")
    loaded = load_corpus(tmp_path / "x")
    assert len(loaded) == 3
    for a, b in zip(corpus.grams, loaded.grams):
        np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(loaded.stats.std, corpus.stats.std)
    manifest = (tmp_path / "x" / MANIFEST_FILE).read_text(encoding="utf-8").splitlines()
    assert manifest[0] == "toy_x_00000\t20\tok"


def test_ingest_records_failures_and_keeps_going(tmp_path, write_tone):
    write_tone("wavs/a.wav", seconds=0.5)
    write_tone("wavs/sub/b.wav", seconds=1.0, f0=210.0)
    (tmp_path / "wavs" / "readme.txt").write_text("not audio")
    corpus = ingest(tmp_path / "wavs", tmp_path / "corpus", workers=2)

    assert len(corpus) == 2
    assert [e.path for e in corpus.failures] == ["readme.txt"]
    assert corpus.failures[0].status.startswith("failed: AudioFormatError")
    lines = (tmp_path / "corpus" / MANIFEST_FILE).read_text(encoding="utf-8").splitlines()
    assert [line.split("\t")[0] for line in lines] == ["a.wav", "readme.txt", "sub/b.wav"]
    assert abs(int(lines[2].split("\t")[1]) - 100) <= 1
    assert (tmp_path / "corpus" / GRAMS_DIR / gram_filename("sub/b.wav")).is_file()
    assert (tmp_path / "corpus" / STATS_FILE).is_file()

    reloaded = load_corpus(tmp_path / "corpus")
    assert len(reloaded) == 2


def test_reingest_is_byte_identical(tmp_path, write_tone):
    write_tone("wavs/a.wav")
    ingest(tmp_path / "wavs", tmp_path / "one", workers=1)
    ingest(tmp_path / "wavs", tmp_path / "two", workers=3)
    for name in (f"{GRAMS_DIR}/a.egrm", STATS_FILE, MANIFEST_FILE):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_ingest_rejects_empty_or_unusable_directories(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(CorpusError):
        ingest(tmp_path / "empty")
    (tmp_path / "junk").mkdir()
    (tmp_path / "junk" / "x.txt").write_text("nope")
    with pytest.raises(CorpusError):
        ingest(tmp_path / "junk")
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "empty")

import numpy as np
import pytest

from lexigan.corpus import (AudioClip, DEFAULT_LEXICON_TEXT, LexiconSpec,
                            load_corpus_dir, pad_or_trim, parse_lexicon,
                            read_wav, synth_lexicon, write_wav)
from lexigan.errors import FormatError, ParseError, ValidationError


def write_raw_wav(path, payload, rate=16000, channels=1, bits=16, codec=1):
    import struct
    data = payload.astype("<i2").tobytes() if hasattr(payload, "astype") else payload
    hdr = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, codec, channels, rate,
                                 rate * channels * bits // 8, channels * bits // 8, bits)
    hdr += b"data" + struct.pack("<I", len(data))
    path.write_bytes(hdr + data)


class TestReadWav:
    def test_scale_extremes(self, tmp_path):
        p = tmp_path / "a.wav"
        write_raw_wav(p, np.array([32767, 0, -32768], dtype=np.int16))
        clip = read_wav(p)
        assert clip.samples[0] == 1.0
        assert clip.samples[1] == 0.0
        assert clip.samples[2] == -1.0  # -32768/32767 clamps to -1

    def test_rejects_stereo(self, tmp_path):
        p = tmp_path / "st.wav"
        write_raw_wav(p, np.zeros(4, dtype=np.int16), channels=2)
        with pytest.raises(FormatError, match="channels"):
            read_wav(p)

    def test_rejects_wrong_rate(self, tmp_path):
        p = tmp_path / "sr.wav"
        write_raw_wav(p, np.zeros(4, dtype=np.int16), rate=44100)
        with pytest.raises(FormatError, match="sample rate 44100"):
            read_wav(p)

    def test_rejects_non_pcm(self, tmp_path):
        p = tmp_path / "f.wav"
        write_raw_wav(p, np.zeros(4, dtype=np.int16), codec=3)
        with pytest.raises(FormatError, match="codec"):
            read_wav(p)

    def test_truncated_chunk(self, tmp_path):
        p = tmp_path / "t.wav"
        write_raw_wav(p, np.arange(100, dtype=np.int16))
        raw = p.read_bytes()
        p.write_bytes(raw[:60])
        with pytest.raises(ParseError, match="truncated"):
            read_wav(p)

    def test_not_riff(self, tmp_path):
        p = tmp_path / "n.wav"
        p.write_bytes(b"OGGS" + b"\x00" * 40)
        with pytest.raises(ParseError, match="RIFF"):
            read_wav(p)


class TestWriteWav:
    def test_rounding_half_away_from_zero(self, tmp_path):
        p = tmp_path / "r.wav"
        write_wav(np.array([0.5, 1.0, -1.0, 0.0]), p)
        ints = np.frombuffer(p.read_bytes()[44:], dtype="<i2")
        assert list(ints) == [16384, 32767, -32767, 0]

    def test_header_is_canonical_44_bytes(self, tmp_path):
        p = tmp_path / "h.wav"
        write_wav(np.zeros(8), p)
        raw = p.read_bytes()
        assert raw[:4] == b"RIFF" and raw[8:12] == b"WAVE"
        assert raw[12:16] == b"fmt " and raw[36:40] == b"data"
        assert len(raw) == 44 + 16

    def test_write_read_write_byte_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        ints = rng.integers(-32767, 32768, size=333).astype(np.int16)
        p1, p2 = tmp_path / "a.wav", tmp_path / "b.wav"
        write_raw_wav(p1, ints)
        write_wav(read_wav(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_out_of_range_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="lie in"):
            write_wav(np.array([1.5]), tmp_path / "x.wav")


class TestPadOrTrim:
    def test_pad_with_trailing_zeros(self):
        out = pad_or_trim(np.ones(1000, dtype=np.float32), 1024)
        assert out.shape == (1024,)
        assert np.all(out[1000:] == 0) and np.all(out[:1000] == 1)

    def test_trim_keeps_onset(self):
        out = pad_or_trim(np.arange(2000, dtype=np.float32), 1024)
        assert out.shape == (1024,)
        assert out[0] == 0 and out[-1] == 1023

    def test_exact_length_identity(self):
        x = np.random.default_rng(1).standard_normal(64).astype(np.float32)
        assert np.array_equal(pad_or_trim(x, 64), x)


class TestLoadCorpusDir:
    def _make_tree(self, root, spec):
        for cname, count in spec.items():
            d = root / cname
            d.mkdir(parents=True)
            for i in range(count):
                write_raw_wav(d / f"{i:04d}.wav",
                              np.full(8, fill_value=(i % 5) * 100, dtype=np.int16))

    def test_two_classes_three_files(self, tmp_path):
        self._make_tree(tmp_path, {"beta": 3, "alpha": 3})
        ds = load_corpus_dir(tmp_path, 16)
        assert ds.clips.shape == (6, 16)
        assert ds.class_names == ["alpha", "beta"]  # sorted
        assert list(ds.class_counts) == [3, 3]

    def test_five_word_corpus_layout(self, tmp_path):
        # directory-per-word tree at reference scale: five words, 3205 tokens
        counts = {"oily": 638, "rag": 638, "suit": 630, "water": 649, "year": 650}
        self._make_tree(tmp_path, counts)
        ds = load_corpus_dir(tmp_path, 8)
        assert ds.clips.shape[0] == 3205
        assert dict(zip(ds.class_names, ds.class_counts.tolist())) == counts

    def test_empty_class_rejected(self, tmp_path):
        (tmp_path / "empty_word").mkdir()
        with pytest.raises(ValidationError, match="no .wav files"):
            load_corpus_dir(tmp_path, 16)

    def test_no_classes_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="no class subdirectories"):
            load_corpus_dir(tmp_path, 16)

    def test_rerun_is_deterministic(self, tmp_path):
        self._make_tree(tmp_path, {"a": 2, "b": 2})
        d1 = load_corpus_dir(tmp_path, 16)
        d2 = load_corpus_dir(tmp_path, 16)
        assert d1.clips.tobytes() == d2.clips.tobytes()
        assert np.array_equal(d1.labels, d2.labels)


class TestParseLexicon:
    def test_parses_names_segments_counts(self):
        spec = parse_lexicon("w1 = tone_low,noise_burst x 3\nw2 = chirp x 2\n")
        assert spec.words == [("w1", ["tone_low", "noise_burst"], 3), ("w2", ["chirp"], 2)]

    def test_comments_and_blanks(self):
        spec = parse_lexicon("# hello\n\nw = tone_low x 1\n")
        assert len(spec.words) == 1

    def test_missing_count(self):
        with pytest.raises(ParseError, match="x count"):
            parse_lexicon("w = tone_low\n")

    def test_bad_segment(self):
        with pytest.raises(ValidationError, match="unknown segment"):
            parse_lexicon("w = warble x 2\n")

    def test_duplicate_sequences_rejected(self):
        with pytest.raises(ValidationError, match="distinct"):
            parse_lexicon("a = chirp x 1\nb = chirp x 1\n")

    def test_default_lexicon_parses(self):
        spec = parse_lexicon(DEFAULT_LEXICON_TEXT)
        assert [w[0] for w in spec.words] == ["buzz", "cmix", "hmix", "lmix"]
        assert all(w[2] == 50 for w in spec.words)


class TestSynthLexicon:
    def test_token_counts_exact(self):
        spec = LexiconSpec(words=[("a", ["tone_low"], 7), ("b", ["chirp"], 3)])
        ds = synth_lexicon(spec, 256, seed=1)
        assert list(ds.class_counts) == [7, 3]

    def test_same_seed_identical(self):
        spec = parse_lexicon(DEFAULT_LEXICON_TEXT)
        a = synth_lexicon(spec, 1024, seed=5)
        b = synth_lexicon(spec, 1024, seed=5)
        assert a.clips.tobytes() == b.clips.tobytes()

    def test_different_seed_differs(self):
        spec = parse_lexicon(DEFAULT_LEXICON_TEXT)
        a = synth_lexicon(spec, 1024, seed=5)
        b = synth_lexicon(spec, 1024, seed=6)
        assert a.clips.tobytes() != b.clips.tobytes()

    def test_peak_normalized(self):
        spec = LexiconSpec(words=[("a", ["tone_low", "tone_high"], 5)])
        ds = synth_lexicon(spec, 512, seed=2)
        for clip in ds.clips:
            assert abs(np.abs(clip).max() - 0.9) < 1e-3

    def test_overlong_word_rejected(self):
        spec = LexiconSpec(words=[("a", ["tone_low"] * 10, 1)], segment_len=200)
        with pytest.raises(ValidationError, match="exceeds slot"):
            synth_lexicon(spec, 1024, seed=0)

    def test_slot_length_uniform(self):
        spec = parse_lexicon(DEFAULT_LEXICON_TEXT)
        ds = synth_lexicon(spec, 1024, seed=3)
        assert ds.clips.shape == (200, 1024)

    def test_noise_then_tone_centroid_drops(self):
        # DFT-centroid oracle: broadband onset vs 300 Hz tail
        spec = LexiconSpec(words=[("nt", ["noise_burst", "tone_low"], 10)],
                           segment_len=400)
        ds = synth_lexicon(spec, 1024, seed=4)
        for clip in ds.clips:
            halves = []
            for seg in (clip[:512], clip[512:]):
                mag = np.abs(np.fft.rfft(seg))
                freqs = np.fft.rfftfreq(seg.shape[0], d=1 / 16000)
                halves.append((freqs * mag).sum() / mag.sum())
            assert halves[0] > halves[1]

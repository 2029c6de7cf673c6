import numpy as np
import pytest

from lexigan.corpus import DEFAULT_LEXICON_TEXT, LexiconSpec, parse_lexicon, synth_lexicon
from lexigan.errors import ValidationError
from lexigan.models import build_generator, latent_config_for_preset
from lexigan.probe import (ELSE_LABEL, ProbeReport, ProbeRow, build_templates,
                           classify, classify_batch, code_predictor_fits,
                           entropy_nats, extreme_probe, feature_association,
                           log_spectrogram, report_outcomes, spectral_features,
                           sweep_codes, tv_distance, tv_null_threshold)
from lexigan.regression import fit_binary, fit_multinomial
from lexigan.rng import Rng


@pytest.fixture(scope="module")
def corpus():
    return synth_lexicon(parse_lexicon(DEFAULT_LEXICON_TEXT), 1024, seed=7)


@pytest.fixture(scope="module")
def bank(corpus):
    return build_templates(corpus)


@pytest.fixture(scope="module")
def untrained_gen():
    cfg = latent_config_for_preset("fiw", 2, "desk")
    return build_generator(cfg, "desk", Rng(0))


class TestSpectrogram:
    def test_frame_count_arithmetic(self):
        # slot 1024, frame 256, hop 128 -> 1 + (1024-256)//128 = 7 frames, 129 bins
        assert log_spectrogram(np.zeros(1024)).shape == (7, 129)

    def test_too_short_clip(self):
        with pytest.raises(ValidationError, match="shorter"):
            log_spectrogram(np.zeros(100))


class TestTemplates:
    def test_single_clip_class_template_is_its_spectrogram(self):
        clips = np.stack([np.sin(np.arange(1024) * 0.1).astype(np.float32)])
        from lexigan.corpus import Dataset
        ds = Dataset(clips=clips, labels=np.array([0]), class_names=["w"])
        bank = build_templates(ds)
        assert np.allclose(bank.templates[0], log_spectrogram(clips[0]))

    def test_mean_idempotent_on_identical_clips(self):
        clip = np.sin(np.arange(1024) * 0.03).astype(np.float32)
        from lexigan.corpus import Dataset
        ds = Dataset(clips=np.stack([clip, clip]), labels=np.array([0, 0]),
                     class_names=["w"])
        bank = build_templates(ds)
        assert np.allclose(bank.templates[0], log_spectrogram(clip))

    def test_template_shapes(self, bank):
        assert bank.templates.shape == (4, 7, 129)
        assert bank.reject_tau.shape == (4,)


class TestClassify:
    def test_self_classification_accuracy(self, corpus, bank):
        labels = classify_batch(corpus.clips, bank)
        assert (labels == corpus.labels).mean() >= 0.99

    def test_template_source_clip_maps_to_its_class(self, corpus, bank):
        for j in range(4):
            clip = corpus.clips[corpus.labels == j][0]
            pred, dists = classify(clip, bank)
            assert pred == j
            assert dists.shape == (4,)

    def test_far_off_clip_rejected_as_else(self, bank):
        clip = np.clip(np.sin(np.arange(1024) * 2.0) * 0.9, -1, 1)  # 5 kHz tone
        pred, _ = classify(clip.astype(np.float32), bank)
        assert pred == ELSE_LABEL


class TestEntropy:
    def test_bounds_and_extremes(self):
        assert entropy_nats(np.array([10, 0, 0])) == 0.0
        k = 5
        h = entropy_nats(np.full(k, 20))
        assert abs(h - np.log(k)) < 1e-12
        rng = np.random.default_rng(0)
        for _ in range(50):
            counts = rng.integers(0, 30, size=6)
            if counts.sum() == 0:
                continue
            h = entropy_nats(counts)
            assert 0.0 <= h <= np.log(6) + 1e-12

    def test_zero_iff_single_class(self):
        assert entropy_nats(np.array([0, 7, 0, 0])) == 0.0
        assert entropy_nats(np.array([1, 7, 0, 0])) > 0.0


class TestSweepCodes:
    def test_row_count_and_sums(self, untrained_gen, bank):
        rep = sweep_codes(untrained_gen, bank, value=1.0, samples_per_code=3, seed=0)
        assert len(rep.rows) == 4  # fiw n=2 -> 4 codes
        for row in rep.rows:
            assert row.counts.sum() == 3
            assert 0.0 <= row.entropy <= np.log(5) + 1e-12

    def test_single_sample_rows(self, untrained_gen, bank):
        rep = sweep_codes(untrained_gen, bank, value=1.0, samples_per_code=1, seed=0)
        assert all(row.counts.sum() == 1 for row in rep.rows)

    def test_value_zero_rows_identical(self, untrained_gen, bank):
        # zero code carries no information and noise is shared across codes,
        # so all rows see identical audio
        rep = sweep_codes(untrained_gen, bank, value=0.0, samples_per_code=8, seed=1)
        first = rep.rows[0].counts
        for row in rep.rows[1:]:
            assert np.array_equal(row.counts, first)
            assert tv_distance(row.counts, first) == 0.0

    def test_non_finite_value_rejected(self, untrained_gen, bank):
        with pytest.raises(ValidationError):
            sweep_codes(untrained_gen, bank, value=np.nan, samples_per_code=1, seed=0)

    def test_csv_and_jsonl_format(self, untrained_gen, bank):
        rep = sweep_codes(untrained_gen, bank, value=2.0, samples_per_code=2, seed=3)
        csv = rep.to_csv()
        header = csv.splitlines()[0]
        assert header == "code,value,buzz,cmix,hmix,lmix,else,modal_class,modal_frac,entropy"
        assert len(csv.splitlines()) == 5
        import json
        rows = [json.loads(line) for line in rep.to_jsonl().splitlines()]
        assert len(rows) == 4
        assert rows[0]["class_names"] == ["buzz", "cmix", "hmix", "lmix", "else"]


class TestExtremeProbe:
    def test_values_must_increase(self, untrained_gen, bank):
        with pytest.raises(ValidationError, match="strictly increasing"):
            extreme_probe(untrained_gen, bank, [2.0, 1.0], 2, seed=0)

    def test_reports_variance_per_row(self, untrained_gen, bank):
        reports = extreme_probe(untrained_gen, bank, [1.0, 4.0], 3, seed=0)
        assert len(reports) == 2
        for rep in reports:
            for row in rep.rows:
                assert row.waveform_var is not None and row.waveform_var >= 0.0


class TestSpectralFeatures:
    def test_pure_tone_centroid(self):
        # integer-period sine so the plain DFT is leakage-free: 20 cycles of
        # 100 Hz in 3200 samples, bin width 5 Hz
        t = np.arange(3200) / 16000
        feats = spectral_features(0.5 * np.sin(2 * np.pi * 100 * t))
        assert abs(feats["centroid_hz"] - 100.0) <= 16000 / 3200  # within one bin

    def test_silence_definitions(self):
        feats = spectral_features(np.zeros(1024))
        assert feats["centroid_hz"] == 0.0 and feats["rms"] == 0.0

    def test_white_noise_centroid_high(self):
        noise = Rng(0).uniform(-0.9, 0.9, 1024)
        assert spectral_features(noise)["centroid_hz"] > 1000.0


class TestRegressionOracles:
    def test_empty_model_closed_form(self):
        # 100 outcomes, uniform over 2 classes: logL = 100 ln 0.5, k = 1
        outcomes = np.array([0, 1] * 50)
        fit = fit_multinomial(outcomes, None)
        want_aic = 2 - 200 * np.log(0.5)
        assert abs(fit.log_likelihood - 100 * np.log(0.5)) < 1e-8
        assert fit.k == 1
        assert abs(fit.aic - want_aic) < 1e-6
        assert abs(fit.aic - 140.6294361119891) < 1e-6

    def test_aic_identity_exact(self):
        rng = np.random.default_rng(1)
        outcomes = rng.integers(0, 3, 60)
        levels = rng.integers(0, 4, 60)
        for fit in (fit_multinomial(outcomes, levels),
                    fit_binary((outcomes > 0).astype(int), levels[:, None].astype(float))):
            assert fit.aic == 2 * fit.k - 2 * fit.log_likelihood

    def test_separable_multinomial_accuracy(self):
        levels = np.repeat(np.arange(4), 30)
        outcomes = levels.copy()  # outcome equals predictor level
        fit = fit_multinomial(outcomes, levels)
        X = np.zeros((120, 4))
        X[:, 0] = 1
        for lv in range(1, 4):
            X[:, lv] = levels == lv
        logits = np.concatenate([np.zeros((120, 1)), X @ fit.coef.T], axis=1)
        assert (np.argmax(logits, axis=1) == outcomes).mean() >= 0.99

    def test_predictor_model_beats_empty_on_associated_data(self):
        rng = np.random.default_rng(2)
        levels = rng.integers(0, 5, 500)
        outcomes = levels.copy()
        flip = rng.random(500) < 0.2
        outcomes[flip] = rng.integers(0, 5, int(flip.sum()))
        full = fit_multinomial(outcomes, levels)
        empty = fit_multinomial(outcomes, None)
        assert full.aic < empty.aic

    def test_multinomial_reduces_to_binary(self):
        rng = np.random.default_rng(3)
        levels = rng.integers(0, 2, 200)
        outcomes = (rng.random(200) < np.where(levels == 1, 0.8, 0.3)).astype(int)
        m = fit_multinomial(outcomes, levels)
        b = fit_binary(outcomes, levels.astype(float)[:, None])
        assert abs(m.log_likelihood - b.log_likelihood) < 1e-9

    def test_binary_all_ones_degenerate(self):
        fit = fit_binary(np.ones(40, dtype=int), None)
        assert fit.log_likelihood > -1e-4  # p_hat -> 1, logL -> 0

    def test_binary_null_coefficients_small(self):
        rng = np.random.default_rng(4)
        predictors = rng.integers(0, 2, (1000, 3)).astype(float)
        outcomes = rng.integers(0, 2, 1000)
        fit = fit_binary(outcomes, predictors)
        assert np.abs(fit.coef[1:]).max() < 0.2

    def test_complete_separation_flagged(self):
        bits = np.array([0, 1] * 40)
        fit = fit_binary(bits, bits.astype(float)[:, None])
        assert not fit.converged
        assert "separation" in fit.note

    def test_binary_recovers_known_coefficients(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((4000, 2))
        true = np.array([0.5, -1.0, 2.0])
        p = 1 / (1 + np.exp(-(true[0] + X @ true[1:])))
        y = (rng.random(4000) < p).astype(int)
        fit = fit_binary(y, X)
        assert np.abs(fit.coef - true).max() < 0.2


class TestReportStatistics:
    def _fake_report(self, counts_per_row):
        rows = []
        for i, counts in enumerate(counts_per_row):
            counts = np.asarray(counts)
            modal = int(np.argmax(counts))
            rows.append(ProbeRow(code=np.array([float(i)]), value=1.0, counts=counts,
                                 modal_class=modal,
                                 modal_frac=counts[modal] / counts.sum(),
                                 entropy=entropy_nats(counts)))
        return ProbeReport(rows=rows, class_names=["a", "b", "c"], seed=0)

    def test_outcome_flattening(self):
        rep = self._fake_report([[2, 1, 0, 0], [0, 3, 0, 1]])
        outcomes, levels = report_outcomes(rep)
        assert len(outcomes) == 7
        assert (levels == 0).sum() == 3 and (levels == 1).sum() == 4

    def test_code_predictor_fits_on_structured_report(self):
        rep = self._fake_report([[50, 2, 1, 0], [1, 48, 2, 1], [0, 3, 49, 0]])
        full, empty = code_predictor_fits(rep)
        assert full.aic < empty.aic

    def test_modal_tie_breaks_to_lower_index(self, untrained_gen, bank):
        counts = np.array([5, 5, 0, 0, 0])
        assert int(np.argmax(counts)) == 0


class TestFeatureAssociation:
    def test_known_bit_has_largest_coefficient(self):
        rng = np.random.default_rng(6)
        bits = rng.integers(0, 2, (600, 3)).astype(float)
        predicate = (rng.random(600) < np.where(bits[:, 1] > 0, 0.9, 0.1)).astype(int)
        fit = feature_association(bits, predicate)
        coefs = np.abs(fit.coef[1:])  # drop intercept
        assert np.argmax(coefs) == 1

    def test_constant_predicate_zero_information(self):
        # a constant outcome makes coefficients unidentifiable; the fit is
        # informationless: predictions saturate at 1 for every bit pattern
        bits = np.array([[0.0, 1.0], [1.0, 0.0]] * 20)
        fit = feature_association(bits, np.ones(40, dtype=int))
        assert fit.log_likelihood > -1e-4
        for pattern in ([1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [1.0, 0.0, 0.0]):
            p = 1 / (1 + np.exp(-np.dot(fit.coef, pattern)))
            assert p > 0.999

    def test_full_model_beats_ablations_when_all_bits_matter(self):
        rng = np.random.default_rng(7)
        bits = rng.integers(0, 2, (900, 3)).astype(float)
        score = 1.5 * bits[:, 0] - 1.2 * bits[:, 1] + 0.9 * bits[:, 2] - 0.5
        predicate = (rng.random(900) < 1 / (1 + np.exp(-score))).astype(int)
        full = feature_association(bits, predicate)
        for drop in range(3):
            keep = [i for i in range(3) if i != drop]
            ablated = feature_association(bits[:, keep], predicate)
            assert full.aic < ablated.aic


class TestTvDistance:
    def test_identical_rows_zero(self):
        a = np.array([10, 5, 5])
        assert tv_distance(a, a) == 0.0

    def test_disjoint_rows_one(self):
        assert tv_distance(np.array([10, 0]), np.array([0, 10])) == 1.0

    def test_null_threshold_scales(self):
        assert tv_null_threshold(5, 200) == pytest.approx(np.sqrt(5 / 200))
        same = np.array([100, 50, 50])
        jitter = np.array([98, 52, 50])
        assert tv_distance(same, jitter) < tv_null_threshold(3, 200)

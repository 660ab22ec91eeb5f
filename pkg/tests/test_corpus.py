import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtjudge.corpus import (Corpus, CorpusError, build_sft_dataset,
                            filter_low_quality_ref, load_corpus,
                            sample_demonstrations, sample_test_subset,
                            write_corpus)
from mtjudge.data import InputMode
from mtjudge.parsing import parse_automqm_errors
from mtjudge.scoring import WeightTable

from conftest import make_segment


def write_native(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def native_row(seg_id=1, system="sysA", errors=(), lp="en-de",
               translation="Das Wetter ist heute gut.", doc="doc1",
               reference="Das Wetter ist heute schön."):
    return {
        "lp": lp, "system": system, "doc": doc, "seg_id": seg_id,
        "source": "The weather is nice today.",
        "reference": reference,
        "translation": translation,
        "errors": [{"severity": s, "category": c, "span": sp}
                   for s, c, sp in errors],
    }


class TestLoadNative:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert len(load_corpus(path)) == 0

    def test_gold_score_recomputed(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_native(path, [native_row(errors=[
            ("major", "accuracy", "Wetter"),
            ("major", "fluency", "heute"),
            ("minor", "style", "gut"),
        ])])
        corpus = load_corpus(path)
        assert len(corpus) == 1
        segment = corpus.segments()[0]
        assert segment.gold_score == -11.0

    def test_unaligned_span_kept_with_flag(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_native(path, [native_row(errors=[("minor", "accuracy",
                                                "missing words")])])
        segment = load_corpus(path).segments()[0]
        assert not segment.gold_errors[0].aligned

    def test_unknown_severity_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_native(path, [native_row(errors=[("catastrophic", "accuracy",
                                                "gut")])])
        with pytest.raises(CorpusError, match="line 1"):
            load_corpus(path)

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        rows = [native_row(seg_id=1), native_row(seg_id=2)]
        del rows[1]["translation"]
        write_native(path, rows)
        with pytest.raises(CorpusError, match="line 2"):
            load_corpus(path)

    def test_duplicate_keys_keep_first(self, tmp_path):
        path = tmp_path / "c.jsonl"
        first = native_row(seg_id=1)
        second = native_row(seg_id=1, translation="Etwas anderes hier.")
        write_native(path, [first, second])
        corpus = load_corpus(path)
        assert len(corpus) == 1
        assert corpus.segments()[0].translation == first["translation"]

    def test_custom_weights(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_native(path, [native_row(errors=[("major", "accuracy", "gut")])])
        corpus = load_corpus(path, weights=WeightTable(major=-10.0))
        assert corpus.segments()[0].gold_score == -10.0

    def test_round_trip(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_native(path, [native_row(seg_id=i, errors=[("minor", "style",
                                                          "gut")])
                            for i in range(3)])
        corpus = load_corpus(path)
        out = tmp_path / "out.jsonl"
        write_corpus(out, corpus)
        again = load_corpus(out)
        assert again.keys() == corpus.keys()
        assert [s.gold_score for s in again] == [s.gold_score for s in corpus]


TSV_HEADER = "system\tdoc\tdoc_id\tseg_id\trater\tsource\ttarget\tcategory\tseverity\n"


class TestLoadWmtTsv:
    def _load(self, tmp_path, body, **kwargs):
        path = tmp_path / "ratings.tsv"
        path.write_text(TSV_HEADER + body, encoding="utf-8")
        return load_corpus(path, "wmt-mqm-tsv", lp="en-de", **kwargs)

    def test_basic_span_extraction(self, tmp_path):
        body = ("sysA\td1\t1\t7\trater1\tA source.\t"
                "Das ist <v>falsch</v> hier.\tAccuracy/Mistranslation\tMajor\n")
        corpus = self._load(tmp_path, body)
        segment = corpus.get(("en-de", "sysA", 7))
        assert segment.translation == "Das ist falsch hier."
        error = segment.gold_errors[0]
        assert error.span_text == "falsch"
        assert error.word_span == {3}
        assert error.category.canonical == "accuracy"
        assert segment.gold_score == -5.0

    def test_no_error_row(self, tmp_path):
        body = ("sysA\td1\t1\t7\trater1\tA source.\tAlles gut.\t"
                "No-error\tNo-error\n")
        corpus = self._load(tmp_path, body)
        segment = corpus.get(("en-de", "sysA", 7))
        assert segment.gold_errors == []
        assert segment.gold_score == 0.0

    def test_source_marked_span_unaligned(self, tmp_path):
        body = ("sysA\td1\t1\t7\trater1\tA <v>missing</v> source.\t"
                "Der Text.\tAccuracy/Omission\tMajor\n")
        corpus = self._load(tmp_path, body)
        error = corpus.get(("en-de", "sysA", 7)).gold_errors[0]
        assert not error.aligned
        assert error.span_text == "missing"

    def test_multi_rater_mean_score_first_rater_spans(self, tmp_path):
        body = (
            "sysA\td1\t1\t7\trater1\tsrc\tEin <v>Fehler</v> hier.\t"
            "Accuracy/Mistranslation\tMajor\n"
            "sysA\td1\t1\t7\trater2\tsrc\tEin Fehler <v>hier.</v>\t"
            "Fluency/Grammar\tMinor\n"
        )
        corpus = self._load(tmp_path, body)
        segment = corpus.get(("en-de", "sysA", 7))
        # rater1: -5, rater2: -1 -> mean -3; spans come from rater1
        assert segment.gold_score == -3.0
        assert [e.span_text for e in segment.gold_errors] == ["Fehler"]

    def test_multiple_errors_one_rater_summed(self, tmp_path):
        body = (
            "sysA\td1\t1\t7\trater1\tsrc\tEin <v>Fehler</v> hier.\t"
            "Accuracy/Mistranslation\tMajor\n"
            "sysA\td1\t1\t7\trater1\tsrc\t<v>Ein</v> Fehler hier.\t"
            "Fluency/Grammar\tMinor\n"
        )
        corpus = self._load(tmp_path, body)
        segment = corpus.get(("en-de", "sysA", 7))
        assert segment.gold_score == -6.0
        assert len(segment.gold_errors) == 2

    def test_severity_case_insensitive(self, tmp_path):
        body = ("sysA\td1\t1\t7\trater1\tsrc\t<v>Wort</v> hier.\t"
                "Style/Awkward\tMINOR\n")
        corpus = self._load(tmp_path, body)
        assert corpus.get(("en-de", "sysA", 7)).gold_score == -1.0

    def test_unknown_severity_named(self, tmp_path):
        body = "sysA\td1\t1\t7\trater1\tsrc\tWort hier.\tStyle\tSevere\n"
        with pytest.raises(CorpusError, match="[Ss]everity"):
            self._load(tmp_path, body)

    def test_lp_required(self, tmp_path):
        path = tmp_path / "ratings.tsv"
        path.write_text(TSV_HEADER, encoding="utf-8")
        with pytest.raises(CorpusError, match="lp"):
            load_corpus(path, "wmt-mqm-tsv")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusError):
            load_corpus(tmp_path / "nope.jsonl")


def grid_corpus(n_sources=5, n_systems=3, lp="en-de"):
    segments = []
    for seg_id in range(n_sources):
        for s in range(n_systems):
            segments.append(make_segment(
                seg_id=seg_id, system=f"sys{s}", lp=lp,
                doc=f"doc{seg_id % 2}",
                translation=f"Wort {seg_id} von System {s}."))
    return Corpus(segments)


class TestSampleTestSubset:
    def test_full_sample_is_identity(self):
        corpus = grid_corpus()
        subset = sample_test_subset(corpus, 5, seed=3)
        assert set(subset.keys()) == set(corpus.keys())

    def test_all_system_outputs_kept(self):
        corpus = grid_corpus(n_sources=200, n_systems=16)
        subset = sample_test_subset(corpus, 200, seed=0)
        assert len(subset) == 3200

    def test_partial_sample_keeps_systems_together(self):
        corpus = grid_corpus(n_sources=10, n_systems=4)
        subset = sample_test_subset(corpus, 3, seed=1)
        assert len(subset) == 12
        sampled_sources = {s.seg_id for s in subset}
        assert len(sampled_sources) == 3

    def test_deterministic(self):
        corpus = grid_corpus(n_sources=10)
        first = sample_test_subset(corpus, 4, seed=9).keys()
        second = sample_test_subset(corpus, 4, seed=9).keys()
        assert first == second

    def test_idempotent_under_reapplication(self):
        corpus = grid_corpus(n_sources=10)
        once = sample_test_subset(corpus, 4, seed=9)
        twice = sample_test_subset(once, 4, seed=9)
        assert set(twice.keys()) == set(once.keys())

    def test_too_many_sources_rejected(self):
        with pytest.raises(CorpusError):
            sample_test_subset(grid_corpus(n_sources=5), 6, seed=0)


def demo_pool_segments():
    segments = []
    for i in range(3):
        segments.append(make_segment(seg_id=100 + i, system="pool",
                                     translation=f"Alles gut Nummer {i}."))
        segments.append(make_segment(
            seg_id=200 + i, system="pool",
            translation=f"Kleiner Fehler Nummer {i}.",
            errors=[("minor", "fluency", "Fehler")]))
        segments.append(make_segment(
            seg_id=300 + i, system="pool",
            translation=f"Grosser Fehler Nummer {i}.",
            errors=[("major", "accuracy", "Grosser")]))
    return segments


class TestSampleDemonstrations:
    def test_all_strata_represented(self):
        pool = Corpus(demo_pool_segments())
        demos = sample_demonstrations(pool, 4, seed=5)
        profiles = {d.severity_profile() for d in demos}
        assert profiles == {"no-error", "minor-only", "has-major"}
        assert len(demos) == 4

    def test_single_stratum_pool(self):
        pool = Corpus(s for s in demo_pool_segments()
                      if not s.gold_errors)
        demos = sample_demonstrations(pool, 2, seed=0)
        assert all(d.severity_profile() == "no-error" for d in demos)

    def test_unaligned_stratum_errors_out(self):
        segments = [make_segment(
            seg_id=300 + i, system="pool",
            translation=f"Text Nummer {i}.",
            errors=[("major", "accuracy", "woanders")])
            for i in range(3)]
        pool = Corpus(segments)
        with pytest.raises(CorpusError, match="has-major"):
            sample_demonstrations(pool, 3, seed=1)

    def test_long_translations_rejected(self):
        long_text = " ".join(["Wort"] * 61)
        segments = [make_segment(seg_id=i, system="pool",
                                 translation=long_text)
                    for i in range(2)]
        with pytest.raises(CorpusError, match="no-error"):
            sample_demonstrations(Corpus(segments), 1, seed=0)

    def test_too_many_errors_rejected(self):
        words = " ".join(f"w{i}" for i in range(8))
        errors = [("minor", "fluency", f"w{i}") for i in range(6)]
        segment = make_segment(seg_id=1, system="pool", translation=words,
                               errors=errors)
        with pytest.raises(CorpusError):
            sample_demonstrations(Corpus([segment]), 1, seed=0)

    def test_deterministic(self):
        pool = Corpus(demo_pool_segments())
        first = [d.key for d in sample_demonstrations(pool, 4, seed=11)]
        second = [d.key for d in sample_demonstrations(pool, 4, seed=11)]
        assert first == second

    def test_empty_pool(self):
        with pytest.raises(CorpusError):
            sample_demonstrations(Corpus(), 1, seed=0)


def ref_corpus(scores):
    """Reference-as-system corpus with the given MQM scores by seg_id."""
    segments = []
    for seg_id, score in scores.items():
        n_minor = int(-score)
        words = " ".join(f"w{i}" for i in range(max(n_minor, 1)))
        errors = [("minor", "fluency", f"w{i}") for i in range(n_minor)]
        segments.append(make_segment(seg_id=seg_id, system="refA",
                                     translation=words, errors=errors))
    return Corpus(segments)


class TestFilterLowQualityRef:
    def test_keeps_only_low_quality_sources(self):
        corpus = grid_corpus(n_sources=3, n_systems=2)
        refs = ref_corpus({0: -1.0, 1: -2.0, 2: -5.0})
        kept = filter_low_quality_ref(corpus, refs, -2.0)
        assert {s.seg_id for s in kept} == {1, 2}
        assert len(kept) == 4

    def test_very_negative_threshold_empties(self):
        corpus = grid_corpus(n_sources=3, n_systems=2)
        refs = ref_corpus({0: -1.0, 1: -2.0, 2: -5.0})
        assert len(filter_low_quality_ref(corpus, refs, -1e9)) == 0

    def test_perfect_refs_all_kept_at_zero(self):
        corpus = grid_corpus(n_sources=3, n_systems=2)
        refs = ref_corpus({0: 0.0, 1: 0.0, 2: 0.0})
        kept = filter_low_quality_ref(corpus, refs, 0.0)
        assert set(kept.keys()) == set(corpus.keys())

    def test_missing_annotation_drops_segment(self):
        corpus = grid_corpus(n_sources=3, n_systems=2)
        refs = ref_corpus({0: -3.0})
        kept = filter_low_quality_ref(corpus, refs, -2.0)
        assert {s.seg_id for s in kept} == {0}

    @given(st.floats(min_value=-6, max_value=0),
           st.floats(min_value=-6, max_value=0))
    @settings(max_examples=20, deadline=None)
    def test_lower_threshold_keeps_subset(self, t1, t2):
        corpus = grid_corpus(n_sources=3, n_systems=1)
        refs = ref_corpus({0: -1.0, 1: -2.0, 2: -5.0})
        low, high = min(t1, t2), max(t1, t2)
        kept_low = set(filter_low_quality_ref(corpus, refs, low).keys())
        kept_high = set(filter_low_quality_ref(corpus, refs, high).keys())
        assert kept_low <= kept_high


def sft_corpus(n_no_error, n_with_error):
    segments = []
    for i in range(n_no_error):
        segments.append(make_segment(seg_id=i, system="sys",
                                     translation=f"Alles gut hier {i}."))
    for i in range(n_with_error):
        segments.append(make_segment(
            seg_id=10_000 + i, system="sys",
            translation=f"Der Fehler Nummer {i}.",
            errors=[("minor", "fluency", "Fehler")]))
    return Corpus(segments)


THREE_MODES = [InputMode.ST, InputMode.RT, InputMode.SRT]


class TestBuildSftDataset:
    def test_no_error_downsampled_to_target(self):
        corpus = sft_corpus(587, 413)
        records, stats = build_sft_dataset(corpus, seed=3,
                                           no_error_target=0.297,
                                           modes=THREE_MODES)
        rate = stats.no_error_rate("en-de")
        assert 0.277 <= rate <= 0.317

    def test_below_target_keeps_everything(self):
        corpus = sft_corpus(10, 90)
        records, stats = build_sft_dataset(corpus, seed=0,
                                           no_error_target=0.3,
                                           modes=THREE_MODES)
        assert stats.totals["en-de"] == 100

    def test_single_mode(self):
        corpus = sft_corpus(5, 5)
        records, _ = build_sft_dataset(corpus, seed=0, no_error_target=1.0,
                                       modes=[InputMode.RT])
        assert all(r.mode is InputMode.RT for r in records)

    def test_mode_counts_roughly_uniform(self):
        corpus = sft_corpus(0, 9000)
        _, stats = build_sft_dataset(corpus, seed=1, no_error_target=1.0,
                                     modes=THREE_MODES)
        for mode in THREE_MODES:
            assert 2800 <= stats.mode_counts["en-de"][mode.value] <= 3200

    def test_all_no_error_unreachable_target(self):
        corpus = sft_corpus(50, 0)
        with pytest.raises(CorpusError):
            build_sft_dataset(corpus, seed=0, no_error_target=0.3,
                              modes=THREE_MODES)

    def test_t_mode_rejected(self):
        with pytest.raises(CorpusError):
            build_sft_dataset(sft_corpus(1, 1), seed=0, no_error_target=1.0,
                              modes=[InputMode.T])

    def test_deterministic(self):
        corpus = sft_corpus(60, 40)
        first, _ = build_sft_dataset(corpus, seed=5, no_error_target=0.3,
                                     modes=THREE_MODES)
        second, _ = build_sft_dataset(corpus, seed=5, no_error_target=0.3,
                                      modes=THREE_MODES)
        assert first == second

    def test_record_keys_subset_of_corpus(self):
        corpus = sft_corpus(20, 20)
        records, _ = build_sft_dataset(corpus, seed=2, no_error_target=0.4,
                                       modes=THREE_MODES)
        corpus_keys = set(corpus.keys())
        assert {r.key for r in records} <= corpus_keys

    def test_outputs_round_trip_through_parser(self):
        corpus = sft_corpus(3, 5)
        records, _ = build_sft_dataset(corpus, seed=0, no_error_target=0.5,
                                       modes=THREE_MODES)
        for record in records:
            parsed = parse_automqm_errors(record.output)
            assert isinstance(parsed, list)

    def test_instruction_and_input_match_prompt_render(self):
        from mtjudge.prompting import render_automqm
        corpus = sft_corpus(0, 3)
        records, _ = build_sft_dataset(corpus, seed=0, no_error_target=1.0,
                                       modes=[InputMode.SRT])
        for record in records:
            segment = corpus.get(record.key)
            full = render_automqm(segment, record.mode, []).text
            assert record.instruction + "\n\n" + record.input == full

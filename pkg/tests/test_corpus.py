import numpy as np
import pandas as pd
import pytest

from core.errors import ManifestError
from corpus.manifest import COLUMNS, ingest_manifest, write_manifest
from corpus.synth import AGE_FRACTIONS, GENDER_FRACTIONS, allocate_counts, synth_corpus
from fusion.subgroups import AGE_BINS, age_bin
from text.transcripts import load_transcript


def _write_rows(tmp_path, rows):
    (tmp_path / "audio").mkdir(exist_ok=True)
    for name in ("audio/a.wav", "audio/b.wav", "t.cha"):
        (tmp_path / name).write_bytes(b"x")
    path = tmp_path / "manifest.csv"
    pd.DataFrame(rows, columns=list(COLUMNS)).fillna("").to_csv(path, index=False)
    return path


def _row(sid, label="AD", age="71", gender="female", audio="audio/a.wav", transcript="t.cha", asr=""):
    return {
        "subject_id": sid, "label": label, "age": age, "gender": gender,
        "audio_path": audio, "transcript_path": transcript, "asr_transcript_path": asr, "notes": "",
    }


class TestManifest:
    def test_valid_rows(self, tmp_path):
        path = _write_rows(tmp_path, [_row("S1"), _row("S2", label="hc", gender="Male", audio="audio/b.wav")])
        manifest = ingest_manifest(path)
        assert manifest.ids == ["S1", "S2"]
        assert manifest.labels == [1, 0]
        s2 = manifest.by_id()["S2"]
        assert s2.gender == "male"
        assert s2.age == 71
        assert s2.audio_path == tmp_path / "audio" / "b.wav"
        assert s2.asr_transcript_path is None
        assert manifest.diagnostics == []

    def test_transcript_source_selects_column(self, tmp_path):
        (tmp_path / "asr.txt").write_text("hello\n")
        path = _write_rows(tmp_path, [_row("S1", asr="asr.txt")])
        record = ingest_manifest(path).records[0]
        assert record.transcript_for("manual") == tmp_path / "t.cha"
        assert record.transcript_for("asr") == tmp_path / "asr.txt"

    def test_duplicate_subject(self, tmp_path):
        path = _write_rows(tmp_path, [_row("S1"), _row("S1")])
        with pytest.raises(ManifestError) as exc:
            ingest_manifest(path)
        assert len(exc.value.rows) == 1
        assert "duplicate subject_id" in exc.value.rows[0]

    @pytest.mark.parametrize(
        "override, fragment",
        [
            ({"label": "MCI"}, "not AD or HC"),
            ({"gender": "other"}, "not female or male"),
            ({"age": "-3"}, "positive integer"),
            ({"age": "seventy"}, "positive integer"),
            ({"audio": "", "transcript": ""}, "neither audio_path nor transcript_path"),
            ({"sid": ""}, "empty subject_id"),
        ],
    )
    def test_invalid_rows(self, tmp_path, override, fragment):
        kwargs = {"sid": "S1", **override}
        sid = kwargs.pop("sid")
        path = _write_rows(tmp_path, [_row("S0"), _row(sid, **kwargs)])
        with pytest.raises(ManifestError) as exc:
            ingest_manifest(path)
        assert any(fragment in row for row in exc.value.rows)
        assert all("row 3" in row for row in exc.value.rows)

    def test_missing_file_is_a_diagnostic(self, tmp_path):
        path = _write_rows(tmp_path, [_row("S1", audio="audio/gone.wav")])
        manifest = ingest_manifest(path)
        assert manifest.ids == ["S1"]
        assert len(manifest.diagnostics) == 1
        assert "gone.wav" in manifest.diagnostics[0]

    def test_missing_required_column(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("subject_id,label,age\nS1,AD,70\n")
        with pytest.raises(ManifestError, match="missing columns"):
            ingest_manifest(path)

    def test_unreadable_manifest(self, tmp_path):
        with pytest.raises(ManifestError):
            ingest_manifest(tmp_path / "absent.csv")

    def test_write_then_ingest(self, tmp_path):
        path = _write_rows(tmp_path, [_row("S1"), _row("S2", label="HC", audio="", transcript="t.cha")])
        first = ingest_manifest(path)
        copy = write_manifest(tmp_path / "copy.csv", first.records)
        assert "audio/a.wav" in copy.read_text()
        assert ingest_manifest(copy).records == first.records


class TestSynthCorpus:
    def test_deterministic(self, tmp_path):
        a = synth_corpus(6, seed=11, out_dir=tmp_path / "a", duration=1.5, utterances=4)
        b = synth_corpus(6, seed=11, out_dir=tmp_path / "b", duration=1.5, utterances=4)
        for ra, rb in zip(a.records, b.records, strict=True):
            assert (ra.label, ra.age, ra.gender) == (rb.label, rb.age, rb.gender)
            for pa, pb in ((ra.audio_path, rb.audio_path), (ra.transcript_path, rb.transcript_path),
                           (ra.asr_transcript_path, rb.asr_transcript_path)):
                assert pa.read_bytes() == pb.read_bytes()
        assert (tmp_path / "a" / "manifest.csv").read_bytes() == (tmp_path / "b" / "manifest.csv").read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a = synth_corpus(4, seed=1, out_dir=tmp_path / "a", duration=1.0, utterances=3)
        b = synth_corpus(4, seed=2, out_dir=tmp_path / "b", duration=1.0, utterances=3)
        assert a.records[0].audio_path.read_bytes() != b.records[0].audio_path.read_bytes()

    @pytest.mark.parametrize("n", [8, 9])
    def test_labels_balanced(self, tmp_path, n):
        manifest = synth_corpus(n, seed=3, out_dir=tmp_path, duration=1.0, utterances=3)
        assert sum(manifest.labels) == (n + 1) // 2
        assert manifest.ids[0] == "S001"
        assert manifest.diagnostics == []

    def test_files_and_tiers(self, small_corpus):
        for record in small_corpus.records:
            assert record.audio_path.is_file()
            assert record.notes == "synthetic"
            raw = record.transcript_path.read_text()
            assert "*INV:" in raw and "*PAR:" in raw
            asr = record.asr_transcript_path.read_text()
            assert asr == asr.lower()
            manual = load_transcript(record.transcript_path, record.subject_id, "manual")
            assert manual.tokens
            assert not any(t.startswith("&") or t == "[/]" for t in manual.tokens)

    def test_ages_within_bins(self, tmp_path):
        manifest = synth_corpus(20, seed=4, out_dir=tmp_path, duration=0.5, utterances=2)
        lo, hi = AGE_BINS[0][0], AGE_BINS[-1][1]
        assert all(lo <= r.age <= hi for r in manifest.records)
        bins = [age_bin(r.age) for r in manifest.records]
        # 20 subjects by largest remainder: 1, 7, 8, 4, 0
        assert [bins.count(f"{a}-{b}") for a, b in AGE_BINS] == [1, 7, 8, 4, 0]

    def test_allocation_matches_cohort(self):
        assert allocate_counts(GENDER_FRACTIONS, 477) == [310, 167]
        assert allocate_counts(AGE_FRACTIONS, 477) == [32, 154, 193, 88, 10]
        assert allocate_counts(GENDER_FRACTIONS, 3) == [2, 1]

    def test_genders_follow_cohort(self, tmp_path):
        manifest = synth_corpus(20, seed=4, out_dir=tmp_path, duration=0.5, utterances=2)
        genders = [r.gender for r in manifest.records]
        # 12.998 / 7.002 by largest remainder
        assert (genders.count("female"), genders.count("male")) == (13, 7)

    def test_ad_transcripts_repeat_more(self, tmp_path):
        manifest = synth_corpus(12, seed=9, out_dir=tmp_path, duration=0.5, utterances=10)
        rate = {0: [], 1: []}
        for r in manifest.records:
            raw = r.transcript_path.read_text()
            rate[r.label].append(raw.count("&") + raw.count("[/]"))
        assert np.mean(rate[1]) > np.mean(rate[0])

    def test_too_few_subjects(self, tmp_path):
        with pytest.raises(ValueError):
            synth_corpus(3, seed=0, out_dir=tmp_path)

import json
from pathlib import Path

import pytest

from claimcheck.corpus import (
    Annotation,
    Claim,
    Corpus,
    CorpusError,
    CorpusProfile,
    Document,
    Relation,
    Section,
    extract_parameter,
    load_corpus,
    load_relation_file,
    parse_numeric_cell,
    save_corpus,
)


def test_parse_numeric_cell_strips_separators():
    assert parse_numeric_cell("22 209") == 22209.0
    assert parse_numeric_cell("22,209") == 22209.0
    assert parse_numeric_cell("22 209") == 22209.0
    assert parse_numeric_cell(" 3.5 ") == 3.5
    assert parse_numeric_cell("-41") == -41.0


@pytest.mark.parametrize("bad", ["", "   ", "n/a", "12x", "--3"])
def test_parse_numeric_cell_rejects(bad):
    with pytest.raises(CorpusError):
        parse_numeric_cell(bad)


def test_load_table(ged):
    assert ged.name == "GED"
    assert ged.key_attribute == "Index"
    assert ged.attributes == ("2016", "2017", "2018", "2030", "2040")
    assert ged.cell("PGElecDemand", "2017") == 22209.0
    assert ged.cell("PGINCoal", "2040") == 2353.0
    assert ged.cell("TFCelec", "2030") == 28566.0
    assert ged.has_cell("PGElecDemand", "2016")
    assert not ged.has_cell("PGElecDemand", "1990")
    assert not ged.has_cell("Nope", "2017")
    assert ged.keys() == ["PGElecDemand", "PGINCoal", "TFCelec"]


def test_load_table_duplicate_key(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("K,2017\nrow,1\nrow,2\n")
    with pytest.raises(CorpusError, match="duplicate key"):
        load_relation_file(f)


def test_load_table_ragged_row(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("K,2017,2018\nrow,1\n")
    with pytest.raises(CorpusError, match="fields"):
        load_relation_file(f)


def test_load_table_non_numeric(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("K,2017\nrow,abc\n")
    with pytest.raises(CorpusError, match="non-numeric"):
        load_relation_file(f)


def test_load_table_empty(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("K,2017\n")
    with pytest.raises(CorpusError, match="no rows"):
        load_relation_file(f)
    f.write_text("")
    with pytest.raises(CorpusError):
        load_relation_file(f)


def test_load_table_semicolon_delimiter(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("K;2017;2018\nrow;1;2\n")
    rel = load_relation_file(f)
    assert rel.cell("row", "2018") == 2.0


def _claim(**overrides):
    base = dict(
        id="c1",
        sentence_text="Demand grew by 3% between 2016 and 2017.",
        claim_span=(0, 40),
        section_id="s1",
        kind="explicit",
        parameter=0.03,
        comparison="=",
    )
    base.update(overrides)
    return Claim(**base)


def test_claim_validation():
    _claim().validate()  # fine
    with pytest.raises(CorpusError, match="without parameter"):
        _claim(parameter=None).validate()
    with pytest.raises(CorpusError, match="equality"):
        _claim(comparison=">").validate()
    with pytest.raises(CorpusError, match="kind"):
        _claim(kind="fuzzy").validate()
    with pytest.raises(CorpusError, match="tolerance"):
        _claim(tolerance=0.0).validate()
    with pytest.raises(CorpusError, match="tolerance"):
        _claim(tolerance=1.0).validate()
    with pytest.raises(CorpusError, match="span"):
        _claim(claim_span=(5, 200)).validate()
    with pytest.raises(CorpusError, match="comparison"):
        _claim(kind="general", parameter=None, comparison="~").validate()


def test_general_claim_needs_no_parameter():
    claim = _claim(kind="general", parameter=None, comparison=None)
    claim.validate()
    assert claim.claim_text.startswith("Demand grew")


def test_claim_text_is_span():
    claim = _claim(claim_span=(7, 14))
    assert claim.claim_text == "grew by"


def test_extract_parameter_percent():
    text = "Electricity demand is expected to grow by 3% between 2016 and 2017."
    got = extract_parameter(text, (0, len(text)))
    assert got == (0.03, "=")


def test_extract_parameter_fold_word():
    text = "Wind capacity saw a nine-fold increase since 2000."
    assert extract_parameter(text, (0, len(text))) == (9.0, "=")
    text2 = "Output rose 2.5-fold over the decade."
    assert extract_parameter(text2, (0, len(text2))) == (2.5, "=")


def test_extract_parameter_grouped_number():
    text = "Demand reached 22 209 GWh in 2017."
    assert extract_parameter(text, (0, len(text))) == (22209.0, "=")


def test_extract_parameter_absent_for_vague_wording():
    text = "Wind capacity expanded aggressively after 2000."
    assert extract_parameter(text, (0, len(text))) is None


def test_extract_parameter_lexicon():
    text = "Coal generation nearly doubled."
    lex = {"doubled": (2.0, "=")}
    assert extract_parameter(text, (0, len(text)), lexicon=lex) == (2.0, "=")
    assert extract_parameter(text, (0, len(text))) is None


def test_extract_parameter_respects_span():
    text = "In 2017 it held 10% of the market."
    assert extract_parameter(text, (0, len(text))) == (0.1, "=")
    # span excludes the percentage; the bare year is a label, not a parameter
    assert extract_parameter(text, (0, 7)) is None


def _tiny_corpus(ged):
    doc = Document(sections=[
        Section("s1", "Demand", ["Electricity demand is expected to grow by 3%."]),
        Section("s2", "Coal", ["Coal stays flat."]),
    ])
    claims = [
        _claim(id="c1", section_id="s1"),
        _claim(id="c2", section_id="s2", kind="general", parameter=None,
               comparison=None, sentence_text="Coal stays flat.", claim_span=(0, 16)),
    ]
    anns = {
        "c1": Annotation(
            claim_id="c1",
            relations=["GED"],
            key_values=["PGElecDemand"],
            attributes=["2017", "2016"],
            check_expression="POWER(a.2017 / b.2016, 1 / (2017 - 2016)) - 1",
            verdict="correct",
        )
    }
    return Corpus({"GED": ged}, doc, claims, anns)


def test_corpus_validate(ged):
    corpus = _tiny_corpus(ged)
    corpus.validate()
    assert corpus.claim_by_id("c2").kind == "general"
    with pytest.raises(KeyError):
        corpus.claim_by_id("nope")


def test_corpus_rejects_unknown_section(ged):
    corpus = _tiny_corpus(ged)
    corpus.claims[0].section_id = "missing"
    with pytest.raises(CorpusError, match="unknown section"):
        corpus.validate()


def test_corpus_rejects_duplicate_claim_ids(ged):
    corpus = _tiny_corpus(ged)
    corpus.claims[1].id = "c1"
    with pytest.raises(CorpusError, match="duplicate claim"):
        corpus.validate()


def test_corpus_round_trip(ged, tmp_path):
    corpus = _tiny_corpus(ged)
    save_corpus(corpus, tmp_path)
    loaded = load_corpus(tmp_path)
    assert loaded.relations["GED"].rows == ged.rows
    assert loaded.relations["GED"].attributes == ged.attributes
    assert [c.id for c in loaded.claims] == ["c1", "c2"]
    assert loaded.claims[0].parameter == 0.03
    assert loaded.annotations["c1"].check_expression == \
        "POWER(a.2017 / b.2016, 1 / (2017 - 2016)) - 1"
    assert loaded.annotations["c1"].verdict == "correct"


def test_annotation_validation():
    ann = Annotation("c", ["R"], ["k"], ["a"], "a.x", "correct")
    ann.validate()
    with pytest.raises(CorpusError, match="verdict"):
        Annotation("c", ["R"], ["k"], ["a"], "a.x", "maybe").validate()
    with pytest.raises(CorpusError, match="empty context"):
        Annotation("c", [], ["k"], ["a"], "a.x", "correct").validate()


def test_profile_round_trip():
    raw = {
        "counts": {"relations": 4, "keys": 8, "attributes": 5, "formulas": 3,
                   "claims": 20, "sections": 2},
        "frequency_percentiles": {
            "relation": {"10": 2, "25": 4, "50": 10, "95": 199, "99": 532},
        },
        "explicit_fraction": 0.6,
        "error_rate": 0.1,
    }
    profile = CorpusProfile.from_dict(raw)
    assert profile.n_claims == 20
    assert profile.frequency_percentiles["relation"][50] == 10.0
    again = CorpusProfile.from_dict(json.loads(json.dumps(profile.to_dict())))
    assert again == profile


def test_profile_rejects_bad_counts():
    with pytest.raises(CorpusError):
        CorpusProfile.from_dict({"counts": {"claims": 0}})


def test_profile_rejects_decreasing_percentiles():
    raw = {"counts": {"claims": 5}, "frequency_percentiles": {"key": {"10": 5, "50": 2}}}
    with pytest.raises(CorpusError, match="non-decreasing"):
        CorpusProfile.from_dict(raw)

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from retrocorpus.corpus import Document, ParallelPair
from retrocorpus.errors import ConfigError
from retrocorpus.filters import (
    Block,
    BoilerplateFilter,
    CharsetFilter,
    DuplicateFilter,
    PatternFilter,
    boilerplate_filter,
    charset_filter,
    classify_block,
    dedup_filter,
    length_filter,
    misc_filter,
    parse_blocklist,
    pattern_filter,
    reclassify,
    segment_blocks,
)
from retrocorpus.pipeline import PipelineConfig, run_pipeline

from .conftest import good_text, link_list


def doc(text, id="x"):
    return Document(id, text)


def pair(src_words, tgt_words):
    return ParallelPair("p", " ".join(["w"] * src_words), " ".join(["p"] * tgt_words))


class TestBlocks:
    def test_segmentation(self):
        assert len(segment_blocks("uma frase só")) == 1
        assert len(segment_blocks("para1\n\npara2")) == 2
        assert len(segment_blocks("para1\n   \npara2\n\n\n")) == 2
        assert segment_blocks("") == []

    def test_density(self):
        (b,) = segment_blocks("o gato e a casa")
        assert b.word_count == 5
        assert b.stopword_density == pytest.approx(3 / 5)

    def test_density_ignores_edge_punctuation(self):
        (b,) = segment_blocks("(o) gato, E")
        assert b.stopword_density == pytest.approx(2 / 3)

    @pytest.mark.parametrize("words,density,expected", [
        (100, 0.40, "good"),
        (10, 0.90, "short"),
        (10, 0.0, "short"),
        (100, 0.05, "bad"),
        (40, 0.40, "near-good"),
        (100, 0.28, "near-good"),
        (100, 0.25, "near-good"),
        (70, 0.32, "good"),
        (15, 0.0, "bad"),
    ])
    def test_classify(self, words, density, expected):
        assert classify_block(Block("", words, density)) == expected

    def test_classify_rejects_inverted_thresholds(self):
        with pytest.raises(ConfigError):
            classify_block(Block("", 10, 0.5), length_low=80, length_high=70)
        with pytest.raises(ConfigError):
            classify_block(Block("", 10, 0.5), density_low=0.5, density_high=0.3)

    def test_reclassify(self):
        assert reclassify(["short", "good", "near-good", "bad"]) == ["good", "good", "good", "bad"]
        assert reclassify(["near-good"]) == ["bad"]
        # no cascading: a short block two steps from a good one stays bad
        assert reclassify(["good", "short", "short"]) == ["good", "good", "bad"]


class TestBoilerplate:
    def test_long_stopword_rich_paragraph_kept(self):
        assert boilerplate_filter(doc(good_text("a"))).kept

    def test_link_list_dropped(self):
        v = boilerplate_filter(doc(link_list()))
        assert not v.kept and v.stage == "boilerplate"

    def test_header_next_to_good_block_is_promoted(self):
        text = "Título da notícia\n\n" + good_text("a")
        f = BoilerplateFilter().fit()
        cats = [b.category for b in f.blocks(text)]
        assert cats == ["good", "good"]

    def test_keep_fraction(self):
        text = good_text("a", repeats=4) + "\n\n" + "\n\n".join(
            " ".join(f"Menu{i}{j}" for j in range(20)) for i in range(5))
        # 88 good words vs 100 bad words
        assert not boilerplate_filter(doc(text)).kept
        assert boilerplate_filter(doc(text), keep_fraction=0.4).kept

    def test_sklearn_api(self):
        f = BoilerplateFilter(keep_fraction=0.7)
        assert f.get_params()["keep_fraction"] == 0.7
        assert clone(f).keep_fraction == 0.7
        docs = [doc(good_text("a"), "1"), doc(link_list(), "2")]
        assert f.fit(docs).predict(docs).tolist() == [True, False]
        assert [d.id for d in f.transform(docs)] == ["1"]


class TestDedup:
    def test_first_occurrence_wins(self):
        a, b, a2 = doc("A", "1"), doc("B", "2"), doc("A", "3")
        kept, verdicts = dedup_filter([a, b, a2])
        assert [d.id for d in kept] == ["1", "2"]
        assert [v.kept for v in verdicts] == [True, True, False]

    def test_distinct_identity(self):
        docs = [doc(str(i), str(i)) for i in range(5)]
        assert dedup_filter(docs)[0] == docs

    def test_exact_match_only(self):
        kept, _ = dedup_filter([doc("Olá", "1"), doc("olá", "2")])
        assert len(kept) == 2

    def test_transform_resets_state(self):
        f = DuplicateFilter()
        docs = [doc("A", "1"), doc("A", "2")]
        assert len(f.fit_transform(docs)) == 1
        assert len(f.transform(docs)) == 1


class TestCharset:
    @pytest.mark.parametrize("text,kept", [
        ("João coração", True),
        ("ÁGUA à vista, 3.º andar, 2.ª vez", True),
        ("smørrebrød", False),
        ("Žižek", False),
        ("año", False),
        ("Straße", False),
        ("emoji 😀 and € 10", True),
        ("Привет", False),
    ])
    def test_letter_allowlist(self, text, kept):
        assert charset_filter(doc(text)).kept is kept

    def test_non_letters_configurable(self):
        assert not CharsetFilter(allow_non_letters=False).check(doc("olá 😀"))[0]
        assert CharsetFilter(allow_non_letters=False).check(doc("«olá» – disse"))[0]

    def test_reason_names_character(self):
        assert "ø" in charset_filter(doc("smørrebrød")).reason


class TestPatterns:
    def test_default_prefixes(self):
        assert not pattern_filter(doc("Lista de alterações recentes da página")).kept
        assert not pattern_filter(doc("Filtrar por preço")).kept
        assert pattern_filter(doc("O governo aprovou a lei.")).kept

    def test_prefix_only_at_start(self):
        assert pattern_filter(doc("Pode filtrar por preço")).kept

    def test_regex(self):
        assert not pattern_filter(doc("Página 3 de 10"), patterns=[r"^Página \d+ de \d+$"]).kept

    def test_malformed_regex_is_config_error(self):
        with pytest.raises(ConfigError):
            PatternFilter(patterns=["(unclosed"]).fit()

    def test_blocklist_parsing(self):
        prefixes, patterns = parse_blocklist(["# comment", "Ver também", "re:^\\d+$", ""])
        assert prefixes == ["Ver também"]
        assert patterns == ["^\\d+$"]


class TestLength:
    def test_boundaries(self):
        assert length_filter(pair(450, 450)).kept
        assert not length_filter(pair(500, 401)).kept
        assert length_filter(pair(1, 899)).kept
        assert not length_filter(pair(1, 900)).kept

    def test_documents_rejected(self):
        with pytest.raises(TypeError):
            length_filter(doc("a"))


class TestMisc:
    @pytest.mark.parametrize("text,kept", [
        ("(a) [b]", True),
        ("(a", False),
        ("a]", False),
        ("{a}", True),
        ("«citação»", True),
        ("«citação", False),
        ('"a" e "b"', True),
        ('"a', False),
        ("“a”", True),
        ("“a", False),
        (")(", True),
    ])
    def test_balance(self, text, kept):
        assert misc_filter(doc(text)).kept is kept


class TestPipeline:
    def test_engineered_funnel(self, funnel_docs):
        res = run_pipeline(funnel_docs)
        assert res.report.counts() == [10, 9, 8, 7, 6, 5]
        assert [n for n, _ in res.report.stages] == ["boilerplate", "duplicates", "invalid-chars",
                                                     "patterns", "misc"]
        assert [d.id for d in res.kept] == ["d02", "d07", "d08", "d09", "d10"]
        dropped = {v.doc_id: v.stage for v in res.verdicts if not v.kept}
        assert dropped == {"d01": "boilerplate", "d03": "duplicates", "d04": "invalid-chars",
                           "d05": "patterns", "d06": "misc"}

    def test_engineered_funnel_with_pairs(self, funnel_pairs):
        res = run_pipeline(funnel_pairs)
        assert res.report.counts() == [10, 9, 8, 7, 6, 5, 4]
        assert res.report.drops()["length"] == 1
        assert "d07" not in [p.id for p in res.kept]

    def test_no_verdicts_after_drop(self, funnel_docs):
        res = run_pipeline(funnel_docs)
        d01 = [v for v in res.verdicts if v.doc_id == "d01"]
        assert [v.stage for v in d01] == ["boilerplate"]
        d10 = [v.stage for v in res.verdicts if v.doc_id == "d10"]
        assert d10 == ["boilerplate", "duplicates", "invalid-chars", "patterns", "misc"]

    def test_empty_input(self):
        res = run_pipeline([])
        assert res.kept == []
        assert res.report.initial == 0
        assert all(n == 0 for _, n in res.report.stages)

    def test_disabled_stage(self, funnel_docs):
        cfg = PipelineConfig(enabled={"duplicates": False})
        res = run_pipeline(funnel_docs, cfg)
        assert "duplicates" not in dict(res.report.stages)
        assert res.report.final == 6

    def test_workers_do_not_change_result(self, funnel_pairs):
        one = run_pipeline(funnel_pairs, workers=1)
        many = run_pipeline(funnel_pairs * 3, workers=3)
        # the repeated copies are all duplicates of the first pass
        assert [p.id for p in many.kept] == [p.id for p in one.kept]
        three = run_pipeline(funnel_pairs * 3, workers=1)
        assert many.verdicts == three.verdicts
        assert many.report == three.report

    def test_report_json_shape(self, funnel_docs):
        d = run_pipeline(funnel_docs).report.to_dict()
        assert d["initial"] == 10
        assert d["stages"][0] == {"name": "boilerplate", "remaining": 9, "dropped": 1}

    def test_config_validation(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig(max_total_tokens=0)
        with pytest.raises(ConfigError):
            PipelineConfig(blocklist_path=str(tmp_path / "missing.txt"))
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"stages": {"nonsense": True}})
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"boilerplate": {"length_low": 90}}).build_stages()

    def test_config_from_yaml(self, tmp_path):
        (tmp_path / "block.txt").write_text("Ver também\n", encoding="utf-8")
        (tmp_path / "cfg.yaml").write_text(
            "stages: {misc: false}\n"
            "patterns: {blocklist: block.txt}\n"
            "length: {max_total_tokens: 50}\n", encoding="utf-8")
        cfg = PipelineConfig.from_file(tmp_path / "cfg.yaml")
        assert cfg.enabled["misc"] is False
        assert cfg.max_total_tokens == 50
        res = run_pipeline([doc("Ver também " + good_text("q"), "1")], cfg)
        assert res.report.drops()["patterns"] == 1

    def test_config_hash_stable(self):
        assert PipelineConfig().config_hash() == PipelineConfig().config_hash()
        assert PipelineConfig().config_hash() != PipelineConfig(max_total_tokens=800).config_hash()


def random_corpus(rng: random.Random, n: int) -> list[Document]:
    pool = [good_text("k"), good_text("m"), link_list(), "Filtrar por nada", good_text("n") + " ø",
            good_text("p") + " (", "curto", "Lista de alterações recentes"]
    return [Document(f"r{i}", rng.choice(pool) if rng.random() < 0.7 else good_text(f"u{i}"))
            for i in range(n)]


def test_conservation_and_monotonicity_randomized():
    rng = random.Random(20240601)
    for _ in range(200):
        docs = random_corpus(rng, rng.randint(0, 30))
        res = run_pipeline(docs)
        counts = res.report.counts()
        assert all(a >= b for a, b in zip(counts, counts[1:]))
        assert res.report.initial == res.report.final + sum(res.report.drops().values())
        assert res.report.final == len(res.kept)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([good_text("a"), good_text("b"), link_list(), "(x", "año"]), max_size=8))
def test_single_doc_stages_are_position_independent(texts):
    docs = [Document(str(i), t) for i, t in enumerate(texts)]
    stages = PipelineConfig().build_stages()
    for name in ("boilerplate", "invalid-chars", "patterns", "misc"):
        forward = [stages[name].check(d) for d in docs]
        backward = [stages[name].check(d) for d in reversed(docs)][::-1]
        assert forward == backward

import json

import pytest

from retrocorpus.corpus import DomainTag, Variety
from retrocorpus.errors import ConfigError
from retrocorpus.ingest import IngestSpec, IngestStats, ingest, load_corpus, select_variety
from retrocorpus.corpus import Document


def test_plain_text_ids_and_domain(tmp_path):
    p = tmp_path / "laws.txt"
    p.write_text("primeira linha\nsegunda  linha\nterceira\n", encoding="utf-8")
    spec = IngestSpec(str(p), "plain-text-per-line", default_domain=DomainTag.LEGAL, source="dre")
    docs = list(load_corpus(spec))
    assert [d.id for d in docs] == ["dre:1", "dre:2", "dre:3"]
    assert docs[1].text == "segunda linha"
    assert all(d.domain is DomainTag.LEGAL for d in docs)


def test_jsonl_variety_label(tmp_path):
    p = tmp_path / "dsl.jsonl"
    rows = [{"text": "a", "label": "European Portuguese"}, {"text": "b", "label": "Brazilian Portuguese"},
            {"text": "c", "label": "Both"}]
    p.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
    spec = IngestSpec(str(p), "jsonl", {"text": "text", "variety": "label"}, source="dsl")
    docs = list(load_corpus(spec))
    assert [d.variety for d in docs] == [Variety.TARGET, Variety.OTHER, Variety.BOTH]


def test_csv_short_row_is_error_record(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("texto,rotulo\nolá,PT-PT\nsó uma coluna\nadeus,PT-BR\n", encoding="utf-8")
    spec = IngestSpec(str(p), "csv", {"text": "texto", "variety": "rotulo"}, source="c")
    stats = IngestStats()
    docs = list(load_corpus(spec, stats))
    assert [d.id for d in docs] == ["c:2", "c:4"]
    assert [e.line for e in stats.errors] == [3]


def test_csv_header_must_contain_mapping(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("texto\nolá\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        list(load_corpus(IngestSpec(str(p), "csv", {"text": "body"})))


def test_fail_soft_malformed_lines(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_bytes(b'{"text": "um"}\n{broken\n\xff\xfe\n{"text": "   "}\n{"text": "dois"}\n')
    stats = IngestStats()
    docs = list(load_corpus(IngestSpec(str(p), source="x"), stats))
    assert [d.text for d in docs] == ["um", "dois"]
    assert [e.line for e in stats.errors] == [2, 3, 4]
    assert "offset" in stats.errors[1].reason
    assert stats.rows == 5


def test_duplicate_explicit_ids_rejected(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text('{"id": "a", "text": "um"}\n{"id": "a", "text": "dois"}\n', encoding="utf-8")
    stats = IngestStats()
    assert len(list(load_corpus(IngestSpec(str(p), fields={"text": "text", "id": "id"}), stats))) == 1
    assert "id.duplicate" in stats.errors[0].reason


def test_unknown_domain_kept_as_other(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text('{"text": "um", "dom": "culinária"}\n', encoding="utf-8")
    (d,) = load_corpus(IngestSpec(str(p), fields={"text": "text", "domain": "dom"}))
    assert d.domain is DomainTag.OTHER
    assert d.meta["domain_raw"] == "culinária"


def _docs(*varieties):
    return [Document(str(i), "t", v) for i, v in enumerate(varieties)]


def test_select_variety():
    docs = _docs(Variety.TARGET, Variety.OTHER, Variety.BOTH)
    stats = IngestStats()
    kept = list(select_variety(docs, {Variety.TARGET, Variety.BOTH}, stats))
    assert [d.id for d in kept] == ["0", "2"]
    assert stats.dropped_by_label == 1
    assert list(select_variety(docs, set(Variety))) == docs
    stats = IngestStats()
    assert list(select_variety(docs, set(), stats)) == []
    assert stats.dropped_by_label == 3


def test_ingest_conservation(tmp_path):
    p = tmp_path / "x.jsonl"
    lines = ['{"text": "a", "v": "pt-pt"}', '{"text": "b", "v": "pt-br"}', "{bad",
             '{"text": "c", "v": "both"}', '{"text": "d", "v": "??"}']
    p.write_text("\n".join(lines), encoding="utf-8")
    spec = IngestSpec(str(p), fields={"text": "text", "variety": "v"},
                      accept=frozenset({Variety.TARGET, Variety.BOTH}))
    stats = IngestStats()
    kept = list(ingest(spec, stats))
    assert [d.text for d in kept] == ["a", "c"]
    assert stats.kept + stats.dropped_by_label + len(stats.errors) == stats.rows == 5


def test_spec_file(tmp_path):
    (tmp_path / "data.txt").write_text("x\n", encoding="utf-8")
    (tmp_path / "spec.yaml").write_text(
        "path: data.txt\nformat: plain-text-per-line\ndefault_domain: politics\n"
        "default_variety: target-variety\naccept: [target-variety]\n", encoding="utf-8")
    spec = IngestSpec.from_file(tmp_path / "spec.yaml")
    assert spec.path == str(tmp_path / "data.txt")
    (d,) = ingest(spec)
    assert d.domain is DomainTag.POLITICS and d.id == "data:1"


def test_spec_validation():
    with pytest.raises(ConfigError):
        IngestSpec("x", "xml")
    with pytest.raises(ConfigError):
        IngestSpec("x", "jsonl", {"variety": "label"})
    with pytest.raises(ConfigError):
        IngestSpec.from_dict({"path": "x", "accept": ["martian"]})

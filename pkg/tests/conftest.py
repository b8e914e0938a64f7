import pytest

from retrocorpus.corpus import Document, DomainTag, ParallelPair, Variety

# 22 words, 11 of them default stopwords (density 0.5).
_SENTENCE = ("o tribunal {w} decidiu que a lei não se aplica ao caso e os cidadãos "
             "podem recorrer da decisão junto do ministério")


def good_text(tag: str, repeats: int = 4) -> str:
    """A stopword-rich paragraph of 22 * repeats words, unique per ``tag``."""
    return " ".join(_SENTENCE.format(w=f"{tag}{i}") for i in range(repeats))


def link_list(n_lines: int = 6) -> str:
    return "\n".join(f"Início Notícias Desporto Economia Cultura{i}" for i in range(n_lines))


def funnel_fixture() -> list[Document]:
    """Ten documents; each filter stage (length excluded) drops exactly one.

    Hand trace: d01 boilerplate, d03 duplicate of d02, d04 invalid-chars,
    d05 patterns, d06 misc; d07-d10 survive -> funnel [10, 9, 8, 7, 6, 5].
    """
    texts = [
        ("d01", link_list()),
        ("d02", good_text("alfa")),
        ("d03", good_text("alfa")),
        ("d04", good_text("beta") + " smørrebrød"),
        ("d05", "Filtrar por " + good_text("gama")),
        ("d06", good_text("delta") + " (nota"),
        ("d07", good_text("epsilon")),
        ("d08", good_text("zeta")),
        ("d09", good_text("eta")),
        ("d10", good_text("teta")),
    ]
    return [Document(i, t, Variety.TARGET, DomainTag.LEGAL, "fixture") for i, t in texts]


def pair_funnel_fixture() -> list[ParallelPair]:
    """The same ten records as pairs, with d07 made long enough (> 900 combined
    whitespace tokens) for the length stage -> funnel [10, 9, 8, 7, 6, 5, 4]."""
    pairs = []
    for doc in funnel_fixture():
        text = good_text("epsilon", repeats=23) if doc.id == "d07" else doc.text
        pairs.append(ParallelPair(doc.id, "english " + text, text, doc.domain, "mock-identity"))
    return pairs


@pytest.fixture
def funnel_docs():
    return funnel_fixture()


@pytest.fixture
def funnel_pairs():
    return pair_funnel_fixture()


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)

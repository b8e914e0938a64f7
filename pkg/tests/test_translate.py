import json
import threading
from datetime import datetime, timezone

import httpx
import pytest

from retrocorpus.corpus import Document, DomainTag, ParallelPair
from retrocorpus.errors import ConfigError, DataError
from retrocorpus.translate import (
    BackendSpec,
    Direction,
    HttpBackend,
    RateLimiter,
    TranslationCache,
    Translator,
    translate_batch,
    variety_invariance_audit,
)

from . import oracles

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)


def docs(*texts):
    return [Document(f"d{i}", t, domain=DomainTag.WEB) for i, t in enumerate(texts)]


def pair(i, en, pt="x"):
    return ParallelPair(f"p{i}", en, pt, DomainTag.WEB, "mock", T0)


def test_identity_backend_produces_pairs():
    pairs, dead = translate_batch(docs("olá", "adeus"), BackendSpec("mock-identity"), created_at=T0)
    assert dead == []
    assert [(p.id, p.source_text, p.target_text) for p in pairs] == [("d0", "olá", "olá"), ("d1", "adeus", "adeus")]
    assert pairs[0].domain is DomainTag.WEB and pairs[0].backend_id == "mock-identity"


def test_table_backend_and_missing_entry_dead_letter():
    spec = BackendSpec("tbl", "mock-table", table={"olá": "hello"})
    pairs, dead = translate_batch(docs("olá", "nada"), spec, created_at=T0)
    assert [p.source_text for p in pairs] == ["hello"]
    assert [(d.id, d.status, d.attempts) for d in dead] == [("d1", 404, 1)]


def test_warm_cache_makes_no_backend_calls(tmp_path):
    spec = BackendSpec("tbl", "mock-table", table={"um": "one", "dois": "two"})
    cold = Translator(spec, TranslationCache(tmp_path), created_at=T0)
    first = list(cold.translate_batch(docs("um", "dois", "um")))
    assert cold.backend.calls <= 3
    warm = Translator(spec, TranslationCache(tmp_path), created_at=T0)
    second = list(warm.translate_batch(docs("um", "dois", "um")))
    assert warm.backend.calls == 0 and warm.stats.cache_hits == 3
    assert first == second
    files = sorted(p.name for p in tmp_path.rglob("*.json"))
    assert len(files) == 2
    entry = json.loads(next(tmp_path.rglob("*.json")).read_text(encoding="utf-8"))
    assert set(entry) == {"key", "value", "timestamp"}


def test_cache_key_depends_on_backend_and_direction():
    k = TranslationCache.key
    d = Direction()
    assert k("a", d, "texto") == k("a", d, " texto ")
    assert k("a", d, "texto") != k("b", d, "texto")
    assert k("a", d, "texto") != k("a", Direction("pt-BR", "en"), "texto")


def run_http(spec, backend, sleeps, texts=("olá",)):
    tr = Translator(spec, backend=backend, sleep=sleeps.append, created_at=T0)
    return list(tr.translate_batch(docs(*texts))), tr.dead_letters


def _http(handler, **kw):
    spec = BackendSpec("svc", "http-service", url="http://mt.local/translate", backoff_ms=100, **kw)
    backend = HttpBackend(spec, httpx.Client(transport=httpx.MockTransport(handler)))
    sleeps = []
    return spec, backend, sleeps


def test_http_retries_with_exponential_backoff():
    statuses = iter([429, 503, 200])
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        status = next(statuses)
        return httpx.Response(status, json={"translation": "hello"} if status == 200 else {})

    spec, backend, sleeps = _http(handler, rate_limit=1e9)
    pairs, dead = run_http(spec, backend, sleeps)
    assert [p.source_text for p in pairs] == ["hello"] and dead == []
    assert [s for s in sleeps if s >= 0.1] == [0.1, 0.2]
    assert seen[0] == {"text": "olá", "source_lang": "pt-PT", "target_lang": "en"}


def test_http_gives_up_after_max_retries():
    spec, backend, sleeps = _http(lambda r: httpx.Response(500), max_retries=2, rate_limit=1e9)
    pairs, dead = run_http(spec, backend, sleeps)
    assert pairs == [] and dead[0].attempts == 3 and dead[0].status == 500


def test_http_client_error_is_not_retried():
    spec, backend, sleeps = _http(lambda r: httpx.Response(404), rate_limit=1e9)
    pairs, dead = run_http(spec, backend, sleeps)
    assert dead[0].attempts == 1 and backend.calls == 1


def test_http_timeout_is_retryable():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            raise httpx.ReadTimeout("slow", request=request)
        return httpx.Response(200, json={"translation": "ok"})

    spec, backend, sleeps = _http(handler, rate_limit=1e9)
    pairs, _ = run_http(spec, backend, sleeps)
    assert pairs[0].source_text == "ok"


def test_auth_env_must_exist(monkeypatch):
    monkeypatch.delenv("NO_SUCH_TOKEN", raising=False)
    with pytest.raises(ConfigError):
        HttpBackend(BackendSpec("s", "http-service", url="http://x", auth_env="NO_SUCH_TOKEN"))


def test_conservation_and_order_under_concurrency():
    table = {f"t{i}": f"e{i}" for i in range(0, 300, 2)}
    spec = BackendSpec("tbl", "mock-table", table=table, concurrency=8, rate_limit=1e9)
    inp = docs(*[f"t{i}" for i in range(300)])
    pairs, dead = translate_batch(inp, spec, created_at=T0)
    assert len(pairs) + len(dead) == len(inp)
    assert [p.id for p in pairs] == [d.id for d in inp if d.text in table]


def test_rate_limiter_spacing_with_fake_clock():
    now = [0.0]
    sleeps = []

    def sleep(s):
        sleeps.append(s)
        now[0] += s

    rl = RateLimiter(4.0, clock=lambda: now[0], sleep=sleep)
    for _ in range(5):
        rl.acquire()
    assert now[0] == pytest.approx(1.0)
    assert sleeps == pytest.approx([0.25] * 4)


def test_rate_limiter_is_thread_safe():
    now = [0.0]
    lock = threading.Lock()
    slots = []

    def sleep(s):
        with lock:
            slots.append(s)

    rl = RateLimiter(10.0, clock=lambda: now[0], sleep=sleep)
    threads = [threading.Thread(target=rl.acquire) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(slots) == pytest.approx([0.1 * k for k in range(1, 8)])


def test_backend_spec_validation(tmp_path):
    with pytest.raises(ConfigError):
        BackendSpec("x", "carrier-pigeon")
    with pytest.raises(ConfigError):
        BackendSpec("x", "http-service")
    with pytest.raises(ConfigError):
        BackendSpec.from_dict({"kind": "mock-identity", "colour": "red"})
    (tmp_path / "table.json").write_text('{"olá": "hi"}', encoding="utf-8")
    (tmp_path / "b.yaml").write_text("backend_id: t\nkind: mock-table\ntable_path: table.json\n", encoding="utf-8")
    assert BackendSpec.load(str(tmp_path / "b.yaml")).table == {"olá": "hi"}
    assert Direction.parse("pt-BR->en") == Direction("pt-BR", "en")


def test_audit_identical_lists():
    a = [pair(i, f"the minister spoke about item {i} today") for i in range(10)]
    r = variety_invariance_audit(a, list(a))
    assert r.exact_match_rate == 1.0 and r.bleu == 100.0


def test_audit_half_identical_matches_oracle():
    a = [pair(0, "the cat sat on the mat"), pair(1, "rain falls in the north"),
         pair(2, "good morning to you"), pair(3, "we met at noon")]
    b = [a[0], a[1], pair(2, "xyz uvw rst"), pair(3, "lorem ipsum dolor sit")]
    r = variety_invariance_audit(a, b)
    assert r.exact_match_rate == 0.5
    want = oracles.bleu([(x.source_text, [y.source_text]) for x, y in zip(a, b)])
    assert r.bleu == pytest.approx(want, abs=1e-9)


def test_audit_rate_872_of_1000():
    a = [pair(i, f"sentence number {i} about lisbon") for i in range(1000)]
    b = [p if i < 872 else pair(i, f"another rendering {i}") for i, p in enumerate(a)]
    assert variety_invariance_audit(a, b).exact_match_rate == 0.872


def test_audit_misalignment_errors():
    a = [pair(0, "x"), pair(1, "y")]
    with pytest.raises(DataError):
        variety_invariance_audit(a, a[:1])
    with pytest.raises(DataError):
        variety_invariance_audit(a, [a[1], a[0]])

import base64

import pytest
from fastapi.testclient import TestClient

from caloraify.service import ServiceConfig, SessionStore, config_from_env, create_app
from caloraify.vlm import ChatSession, NO_ANALYSIS_MESSAGE, StubBackend, TransportError
from conftest import FIXTURE_TOTAL_KCAL, STUB_FIXTURES


@pytest.fixture()
def app_client(fixture_kb, fixture_index):
    config = ServiceConfig(stub_fixture_path=str(STUB_FIXTURES))
    app = create_app(config, kb=fixture_kb, index=fixture_index)
    with TestClient(app) as client:
        yield client


def post_image(client, data, media_type="image/png", instruction=None):
    files = {"image": ("dish.png", data, media_type)}
    form = {"instruction": instruction} if instruction else None
    return client.post("/v1/analyze", files=files, data=form)


class TestHealthz:
    def test_ready(self, app_client, fixture_kb):
        response = app_client.get("/healthz")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"
        assert body["kb_digest"] == fixture_kb.source_digest
        assert body["vlm_mode"] == "stub"
        assert body["max_image_bytes"] > 0

    def test_not_ready_is_503(self):
        app = create_app(ServiceConfig())
        with TestClient(app) as client:
            response = client.get("/healthz")
        assert response.status_code == 503
        assert response.json()["status"] == "loading"


class TestKbSearch:
    def test_exact_text_first(self, app_client):
        response = app_client.get("/v1/kb/search", params={"q": "flour; grains; cup", "k": 2})
        assert response.status_code == 200
        body = response.json()
        assert body["hits"][0]["doc_id"] == "flour-01"
        assert body["hits"][0]["score"] == pytest.approx(1.0, abs=1e-9)
        assert body["k_requested"] == 2

    def test_missing_q(self, app_client):
        assert app_client.get("/v1/kb/search").status_code == 400

    def test_kb_not_loaded_is_500(self):
        app = create_app(ServiceConfig())
        with TestClient(app) as client:
            response = client.get("/v1/kb/search", params={"q": "flour"})
        assert response.status_code == 500


class TestAnalyze:
    def test_fixture_image(self, app_client, fixture_image_bytes):
        response = post_image(app_client, fixture_image_bytes)
        assert response.status_code == 200
        body = response.json()
        assert body["report"]["total_kcal"] == FIXTURE_TOTAL_KCAL
        assert len(body["parsed"]) == 2
        assert len(body["evidence"]) == 2
        assert "TOTAL: 820 kcal" in body["final_answer"]
        assert body["report"]["estimates"][0]["matched_food_id"] == "flour-01"

    def test_replay_byte_identical(self, app_client, fixture_image_bytes):
        first = post_image(app_client, fixture_image_bytes)
        second = post_image(app_client, fixture_image_bytes)
        assert first.content == second.content

    def test_oversize_is_413(self, fixture_kb, fixture_index, fixture_image_bytes):
        config = ServiceConfig(max_image_bytes=16, stub_fixture_path=str(STUB_FIXTURES))
        app = create_app(config, kb=fixture_kb, index=fixture_index)
        with TestClient(app) as client:
            response = post_image(client, fixture_image_bytes)
        assert response.status_code == 413

    def test_bad_media_type_is_415(self, app_client, fixture_image_bytes):
        response = post_image(app_client, fixture_image_bytes, media_type="text/plain")
        assert response.status_code == 415

    def test_zero_ingredients_is_422_with_stage1(self, app_client, other_image_bytes):
        response = post_image(app_client, other_image_bytes)
        assert response.status_code == 422
        body = response.json()
        assert "stage1_text" in body
        assert body["parsed"] == []

    def test_backend_failure_is_502(self, fixture_kb, fixture_index, fixture_image_bytes):
        class FailingBackend:
            def generate(self, prompt, image, max_tokens=512):
                raise TransportError("backend down", retries=2)

        app = create_app(ServiceConfig(), kb=fixture_kb, index=fixture_index, backend=FailingBackend())
        with TestClient(app) as client:
            response = post_image(client, fixture_image_bytes)
        assert response.status_code == 502
        assert response.json()["retries"] == 2

    def test_instruction_override(self, fixture_kb, fixture_index, fixture_image_bytes):
        prompts = []

        class RecordingBackend(StubBackend):
            def generate(self, prompt, image, max_tokens=512):
                prompts.append(prompt)
                return "- 1 cup milk"

        app = create_app(ServiceConfig(), kb=fixture_kb, index=fixture_index, backend=RecordingBackend())
        with TestClient(app) as client:
            response = post_image(client, fixture_image_bytes, instruction="list every item")
        assert response.status_code == 200
        assert "list every item" in prompts[0]


class TestChat:
    def test_new_session_and_followup(self, app_client, fixture_image_bytes):
        image_b64 = base64.b64encode(fixture_image_bytes).decode("ascii")
        first = app_client.post(
            "/v1/chat", json={"text": "what is this dish?", "image_b64": image_b64}
        )
        assert first.status_code == 200
        body = first.json()
        session_id = body["session_id"]
        assert session_id
        assert "TOTAL: 820 kcal" in body["assistant_text"]

        second = app_client.post(
            "/v1/chat",
            json={"session_id": session_id, "text": "how many calories in the flour?"},
        )
        assert second.status_code == 200
        assert second.json()["assistant_text"] == "flour: 700 kcal"
        assert second.json()["session_id"] == session_id

    def test_followup_without_analysis(self, app_client):
        response = app_client.post("/v1/chat", json={"text": "hello?"})
        assert response.status_code == 200
        assert response.json()["assistant_text"] == NO_ANALYSIS_MESSAGE

    def test_empty_turn_is_400(self, app_client):
        assert app_client.post("/v1/chat", json={"text": "  "}).status_code == 400
        assert app_client.post("/v1/chat", json={}).status_code == 400

    def test_unknown_session_is_404(self, app_client):
        response = app_client.post(
            "/v1/chat", json={"session_id": "missing", "text": "hi"}
        )
        assert response.status_code == 404

    def test_bad_base64_is_400(self, app_client):
        response = app_client.post(
            "/v1/chat", json={"text": "x", "image_b64": "!!!not-base64!!!"}
        )
        assert response.status_code == 400


class TestDeterminism:
    def test_fresh_apps_agree(self, fixture_kb, fixture_index, fixture_image_bytes):
        config = ServiceConfig(stub_fixture_path=str(STUB_FIXTURES))
        bodies = []
        for _ in range(2):
            app = create_app(config, kb=fixture_kb, index=fixture_index)
            with TestClient(app) as client:
                bodies.append(post_image(client, fixture_image_bytes).content)
        assert bodies[0] == bodies[1]

    def test_chat_replay_from_fresh_state(self, fixture_kb, fixture_index, fixture_image_bytes):
        config = ServiceConfig(stub_fixture_path=str(STUB_FIXTURES))
        image_b64 = base64.b64encode(fixture_image_bytes).decode("ascii")
        bodies = []
        for _ in range(2):
            app = create_app(config, kb=fixture_kb, index=fixture_index)
            with TestClient(app) as client:
                bodies.append(
                    client.post("/v1/chat", json={"text": "go", "image_b64": image_b64}).content
                )
        assert bodies[0] == bodies[1]


class TestSessionStore:
    def test_get_after_put(self):
        store = SessionStore(capacity=4)
        session = ChatSession(session_id="a")
        store.put(session)
        assert store.get("a") is session

    def test_eviction_only_over_capacity(self):
        store = SessionStore(capacity=2)
        for sid in ("a", "b"):
            store.put(ChatSession(session_id=sid))
        assert len(store) == 2
        store.put(ChatSession(session_id="c"))
        assert len(store) == 2
        assert store.get("a") is None  # least recently used was evicted
        assert store.get("b") is not None

    def test_lru_ordering_on_get(self):
        store = SessionStore(capacity=2)
        store.put(ChatSession(session_id="a"))
        store.put(ChatSession(session_id="b"))
        store.get("a")  # refresh
        store.put(ChatSession(session_id="c"))
        assert store.get("a") is not None
        assert store.get("b") is None

    def test_new_session_ids_unique(self):
        store = SessionStore()
        ids = {store.new_session_id("same seed") for _ in range(50)}
        assert len(ids) == 50


def test_config_from_env_overrides():
    environ = {"CALORAIFY_PORT": "9999", "CALORAIFY_MIN_SCORE": "0.5"}
    config = config_from_env(ServiceConfig(), environ)
    assert config.port == 9999
    assert config.min_score == 0.5
    assert config.retrieval_k == 3  # untouched default


def test_config_validation():
    with pytest.raises(ValueError):
        ServiceConfig(max_image_bytes=0)
    with pytest.raises(ValueError):
        ServiceConfig(retrieval_k=0)
    with pytest.raises(ValueError):
        ServiceConfig(vlm_mode="http")
    ServiceConfig(vlm_mode="http", vlm_endpoint="http://vlm.local")

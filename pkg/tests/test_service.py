import json
import threading
from collections import Counter

import pytest
from fastapi.testclient import TestClient

from geoarena.config import ArenaConfig, ServiceConfig, default_registry
from geoarena.core import BattleLog, ImageStore, ModelId, ModelRegistry, Outcome, RegistryEntry
from geoarena.providers import ProviderPool, ProviderStatus, GenerationResult
from geoarena.rating import BTConfig
from geoarena.service import (
    ArenaService,
    BattleAborted,
    ImageRejected,
    RateLimited,
    SessionExpired,
    SessionNotFound,
    VoteConflict,
    create_app,
)

from conftest import png_bytes

SMALL_REGISTRY = ModelRegistry(
    entries=[
        RegistryEntry(ModelId.parse("sim/alpha"), "Alpha Model"),
        RegistryEntry(ModelId.parse("sim/beta"), "Beta Model"),
    ]
)


def make_service(tmp_path, registry=None, seed=1234, rate_limit=0, pool=None, bt=None):
    config = ArenaConfig()
    config.registry = registry or SMALL_REGISTRY
    config.service = ServiceConfig(
        rate_limit_battles_per_hour=rate_limit,
        sampling_seed=seed,
        bootstrap_rounds=10,
        leaderboard_refresh_seconds=300.0,
    )
    if bt is not None:
        config.bt = bt
    pool = pool or ProviderPool.mock(config.registry)
    return ArenaService(
        config,
        pool,
        BattleLog(tmp_path / "battles.jsonl"),
        ImageStore(tmp_path / "images"),
    )


class TestBattleLifecycle:
    def test_create_vote_reveal_happy_path(self, tmp_path, tiny_png):
        service = make_service(tmp_path)
        view = service.create_battle(tiny_png, "image/png")
        assert set(view) == {"battle_id", "response_left", "response_right"}
        assert view["response_left"] and view["response_right"]

        reveal = service.submit_vote(view["battle_id"], "left")
        assert {reveal["model_left"], reveal["model_right"]} == {"sim/alpha", "sim/beta"}
        assert reveal["outcome"] in ("model_a", "model_b")

        records = service.log.read()
        assert len(records) == 1
        assert records[0].battle_id == view["battle_id"]

    def test_vote_maps_through_side_assignment(self, tmp_path, tiny_png):
        service = make_service(tmp_path)
        for choice in ("left", "right", "tie"):
            view = service.create_battle(tiny_png, "image/png")
            session = service._sessions[view["battle_id"]]
            reveal = service.submit_vote(view["battle_id"], choice)
            if choice == "tie":
                expected = Outcome.TIE
            elif (choice == "left") == session.left_is_a:
                expected = Outcome.WIN_A
            else:
                expected = Outcome.WIN_B
            assert reveal["outcome"] == expected.value
        records = service.log.read()
        assert len(records) == 3

    def test_two_model_registry_always_picks_both(self, tmp_path, tiny_png):
        service = make_service(tmp_path)
        for _ in range(10):
            a, b = service.sample_pair()
            assert {a, b} == {ModelId.parse("sim/alpha"), ModelId.parse("sim/beta")}

    def test_default_prompt_used_and_stored(self, tmp_path, tiny_png):
        from geoarena.providers import DEFAULT_PROMPT

        service = make_service(tmp_path)
        view = service.create_battle(tiny_png, "image/png", prompt=None)
        service.submit_vote(view["battle_id"], "tie")
        assert service.log.read()[0].prompt == DEFAULT_PROMPT

    def test_custom_prompt_stored(self, tmp_path, tiny_png):
        service = make_service(tmp_path)
        view = service.create_battle(tiny_png, "image/png", prompt="which country?")
        service.submit_vote(view["battle_id"], "tie")
        assert service.log.read()[0].prompt == "which country?"

    def test_image_stored_with_matching_hash(self, tmp_path, tiny_png):
        service = make_service(tmp_path)
        view = service.create_battle(tiny_png, "image/png")
        service.submit_vote(view["battle_id"], "left")
        ref = service.log.read()[0].image_ref
        assert service.image_store.exists(ref)
        service.image_store.get(ref)  # raises if hash mismatched

    def test_oversized_image_rejected(self, tmp_path):
        service = make_service(tmp_path)
        service.config.service.max_image_bytes = 100
        with pytest.raises(ImageRejected):
            service.create_battle(b"x" * 200, "image/png")
        assert service.log.read() == []

    def test_provider_failure_aborts_without_logging(self, tmp_path, tiny_png):
        class FailingClient:
            def generate(self, request):
                return GenerationResult(request.model, "", 0.0, ProviderStatus.TIMEOUT)

        pool = ProviderPool(SMALL_REGISTRY, default_client=FailingClient(), backoff_seconds=0.0)
        service = make_service(tmp_path, pool=pool)
        with pytest.raises(BattleAborted):
            service.create_battle(tiny_png, "image/png")
        assert service.log.read() == []
        assert service._sessions == {}

    def test_unknown_battle_id(self, tmp_path):
        service = make_service(tmp_path)
        with pytest.raises(SessionNotFound):
            service.submit_vote("nope", "left")

    def test_double_vote_conflict_first_stands(self, tmp_path, tiny_png):
        service = make_service(tmp_path)
        view = service.create_battle(tiny_png, "image/png")
        first = service.submit_vote(view["battle_id"], "left")
        with pytest.raises(VoteConflict) as excinfo:
            service.submit_vote(view["battle_id"], "right")
        assert excinfo.value.reveal == first
        assert len(service.log.read()) == 1

    def test_racing_votes_yield_exactly_one_record(self, tmp_path, tiny_png):
        service = make_service(tmp_path)
        view = service.create_battle(tiny_png, "image/png")
        outcomes, errors = [], []
        barrier = threading.Barrier(2)

        def vote(choice):
            barrier.wait()
            try:
                outcomes.append(service.submit_vote(view["battle_id"], choice))
            except VoteConflict as exc:
                errors.append(exc)

        threads = [threading.Thread(target=vote, args=(c,)) for c in ("left", "right")]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(outcomes) == 1 and len(errors) == 1
        assert len(service.log.read()) == 1

    def test_expired_session_rejected_and_not_logged(self, tmp_path, tiny_png):
        from datetime import timedelta

        service = make_service(tmp_path)
        view = service.create_battle(tiny_png, "image/png")
        session = service._sessions[view["battle_id"]]
        session.expiry = session.created_at - timedelta(seconds=1)
        with pytest.raises(SessionExpired):
            service.submit_vote(view["battle_id"], "left")
        assert service.log.read() == []
        assert service.sweep_expired() == 1
        assert view["battle_id"] not in service._sessions

    def test_rate_limit_enforced(self, tmp_path, tiny_png):
        service = make_service(tmp_path, rate_limit=2)
        service.create_battle(tiny_png, "image/png", client_id="1.2.3.4")
        service.create_battle(tiny_png, "image/png", client_id="1.2.3.4")
        with pytest.raises(RateLimited):
            service.create_battle(tiny_png, "image/png", client_id="1.2.3.4")
        # other clients are unaffected
        service.create_battle(tiny_png, "image/png", client_id="5.6.7.8")


class TestAnonymity:
    def _registry_names(self, registry):
        names = set()
        for entry in registry.entries:
            names.add(entry.model.canonical.lower())
            names.add(entry.display_name.lower())
        return names

    def test_pre_vote_payload_never_names_models(self, tmp_path, tiny_png):
        registry = default_registry()
        service = make_service(tmp_path, registry=registry)
        names = self._registry_names(registry)
        for _ in range(20):
            view = service.create_battle(tiny_png, "image/png")
            payload = json.dumps(view).lower()
            for name in names:
                assert name not in payload

    def test_side_randomization_near_half(self, tmp_path, tiny_png):
        service = make_service(tmp_path, seed=42)
        n = 300
        left_a = 0
        for _ in range(n):
            view = service.create_battle(tiny_png, "image/png")
            if service._sessions[view["battle_id"]].left_is_a:
                left_a += 1
        sigma = (n * 0.25) ** 0.5
        assert abs(left_a - n / 2) <= 3 * sigma

    def test_pair_sampling_uniform_over_unordered_pairs(self, tmp_path):
        registry = default_registry()  # 17 models, 136 unordered pairs
        service = make_service(tmp_path, registry=registry, seed=7)
        n = 10000
        counts = Counter(frozenset(service.sample_pair()) for _ in range(n))
        assert len(counts) == 136
        p = 1 / 136
        sigma = (n * p * (1 - p)) ** 0.5
        for pair, count in counts.items():
            assert abs(count - n * p) <= 3 * sigma, f"pair {pair}: {count}"


class TestLeaderboardReads:
    def test_zero_battles_insufficient_data(self, tmp_path):
        service = make_service(tmp_path)
        snapshot = service.get_leaderboard()
        assert snapshot["status"] == "insufficient data"
        rated = [row for row in snapshot["leaderboard"] if row["elo"] is not None]
        assert rated == []

    def test_single_battle_orders_winner_first(self, tmp_path, tiny_png):
        bt = BTConfig(l2_penalty=0.01)  # regularized: one battle is degenerate
        service = make_service(tmp_path, bt=bt)
        view = service.create_battle(tiny_png, "image/png")
        session = service._sessions[view["battle_id"]]
        winner = session.model_a  # vote for whichever side maps to model_a
        service.submit_vote(view["battle_id"], "left" if session.left_is_a else "right")
        snapshot = service.get_leaderboard(force=True)
        assert snapshot["status"] == "ok"
        rows = [row for row in snapshot["leaderboard"] if row["elo"] is not None]
        assert rows[0]["model"] == winner.canonical
        assert rows[0]["elo"] > rows[1]["elo"]

    def test_snapshot_cached_within_interval(self, tmp_path, tiny_png):
        service = make_service(tmp_path)
        first = service.get_leaderboard()
        view = service.create_battle(tiny_png, "image/png")
        service.submit_vote(view["battle_id"], "tie")
        second = service.get_leaderboard()
        assert second is first  # cache hit, no recompute
        third = service.get_leaderboard(force=True)
        assert third is not first


class TestHttpApi:
    @pytest.fixture
    def client(self, tmp_path, request):
        service = make_service(tmp_path, bt=BTConfig(l2_penalty=0.01))
        app = create_app(service)
        test_client = TestClient(app)
        test_client.service = service
        return test_client

    def test_health(self, client):
        response = client.get("/healthz")
        assert response.status_code == 200

    def test_create_battle_multipart(self, client, tiny_png):
        response = client.post(
            "/api/battles",
            files={"image": ("photo.png", tiny_png, "image/png")},
            data={"prompt": "where was this taken?"},
        )
        assert response.status_code == 201
        body = response.json()
        assert set(body) == {"battle_id", "response_left", "response_right"}

    def test_vote_flow_and_conflict(self, client, tiny_png):
        created = client.post(
            "/api/battles", files={"image": ("p.png", tiny_png, "image/png")}
        ).json()
        vote = client.post(
            f"/api/battles/{created['battle_id']}/vote", json={"choice": "right"}
        )
        assert vote.status_code == 200
        body = vote.json()
        assert set(body) == {"model_left", "model_right", "outcome"}

        again = client.post(
            f"/api/battles/{created['battle_id']}/vote", json={"choice": "left"}
        )
        assert again.status_code == 409
        assert again.json()["detail"]["reveal"] == body

    def test_vote_unknown_battle_404(self, client):
        response = client.post("/api/battles/missing/vote", json={"choice": "left"})
        assert response.status_code == 404

    def test_bad_choice_400(self, client, tiny_png):
        created = client.post(
            "/api/battles", files={"image": ("p.png", tiny_png, "image/png")}
        ).json()
        response = client.post(
            f"/api/battles/{created['battle_id']}/vote", json={"choice": "middle"}
        )
        assert response.status_code == 400

    def test_oversized_image_413(self, client):
        client.service.config.service.max_image_bytes = 64
        response = client.post(
            "/api/battles", files={"image": ("p.png", b"y" * 100, "image/png")}
        )
        assert response.status_code == 413

    def test_unsupported_media_type_400(self, client):
        response = client.post(
            "/api/battles", files={"image": ("p.gif", b"GIF89a", "image/gif")}
        )
        assert response.status_code == 400

    def test_leaderboard_endpoint(self, client, tiny_png):
        empty = client.get("/api/leaderboard").json()
        assert empty["status"] == "insufficient data"

        created = client.post(
            "/api/battles", files={"image": ("p.png", tiny_png, "image/png")}
        ).json()
        client.post(f"/api/battles/{created['battle_id']}/vote", json={"choice": "left"})
        client.service.get_leaderboard(force=True)
        rows = client.get("/api/leaderboard").json()
        assert isinstance(rows, list)
        assert {"rank", "model", "elo", "ci_lower", "ci_upper", "battles"} <= set(rows[0])

    def test_models_endpoint_lists_active_display_names(self, client):
        rows = client.get("/api/models").json()
        assert rows == [
            {"model": "sim/alpha", "display_name": "Alpha Model", "open_source": False},
            {"model": "sim/beta", "display_name": "Beta Model", "open_source": False},
        ]

    def test_pairwise_endpoint(self, client, tiny_png):
        created = client.post(
            "/api/battles", files={"image": ("p.png", tiny_png, "image/png")}
        ).json()
        client.post(f"/api/battles/{created['battle_id']}/vote", json={"choice": "tie"})
        payload = client.get("/api/stats/pairwise").json()
        assert set(payload) == {"models", "win_rate", "battle_count"}
        assert sum(sum(row) for row in payload["battle_count"]) == 2

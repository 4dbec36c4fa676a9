import base64
import io

import pytest
from fastapi.testclient import TestClient
from PIL import Image

from sage3d.checkpoint import save_checkpoint
from sage3d.service import create_app
from sage3d.training import build_generator, make_checkpoint
from conftest import tiny_train_config


@pytest.fixture(scope="module")
def ckpt_root(tmp_path_factory):
    from sage3d.config import ModelConfig

    tiny = ModelConfig(z_dim=8, style_dim=8, feature_channels=8, film_layers=3,
                       film_hidden=16, mapping_hidden=16, mapping_blocks=1,
                       n_samples=8, decoder_channels=(8, 6, 4), translator_base=4,
                       disc_base_channels=4, disc_max_channels=16)
    root = tmp_path_factory.mktemp("registry")
    for name, seed in (("pen", 0), ("line", 1)):
        cfg = tiny_train_config(tiny, seed=seed)
        cfg.style_name = name
        gen = build_generator(cfg, stage=2)
        ckpt = make_checkpoint(cfg, gen, {}, {}, stage=2, step=0, frozen=[])
        save_checkpoint(ckpt, root / name)
    return root


@pytest.fixture(scope="module")
def client(ckpt_root):
    return TestClient(create_app(ckpt_root))


def eye_edit(cx=32, cy=28, r=5, cls=4):
    return {"polygon": [[cx - r, cy - r], [cx + r, cy - r], [cx + r, cy + r],
                        [cx - r, cy + r]], "class": cls, "mode": "set"}


class TestSessionLifecycle:
    def test_create_requires_seed_and_known_checkpoint(self, client):
        assert client.post("/api/session", json={"ckpt_id": "pen"}).status_code == 400
        assert client.post("/api/session",
                           json={"seed": 1}).status_code == 400
        assert client.post("/api/session",
                           json={"ckpt_id": "oil", "seed": 1}).status_code == 404

    def test_same_seed_gives_identical_previews(self, client):
        a = client.post("/api/session", json={"ckpt_id": "pen", "seed": 7}).json()
        b = client.post("/api/session", json={"ckpt_id": "pen", "seed": 7}).json()
        assert a["session_id"] != b["session_id"]
        assert a["preview_png_b64"] == b["preview_png_b64"]
        assert a["mask_png_b64"] == b["mask_png_b64"]

    def test_response_schema(self, client):
        import jsonschema

        schema = {
            "type": "object",
            "required": ["session_id", "preview_png_b64", "mask_png_b64"],
            "properties": {
                "session_id": {"type": "string"},
                "preview_png_b64": {"type": "string"},
                "mask_png_b64": {"type": "string"},
            },
        }
        resp = client.post("/api/session", json={"ckpt_id": "pen", "seed": 3}).json()
        jsonschema.validate(resp, schema)
        # payloads decode to PNGs
        img = Image.open(io.BytesIO(base64.b64decode(resp["preview_png_b64"])))
        assert img.size[0] == img.size[1] == 64


class TestRender:
    def test_frontal_render_equals_preview(self, client):
        created = client.post("/api/session", json={"ckpt_id": "pen", "seed": 9}).json()
        sid = created["session_id"]
        rendered = client.get(f"/api/session/{sid}/render",
                              params={"yaw": 0.0, "pitch": 0.0}).json()
        assert rendered["drawing_png_b64"] == created["preview_png_b64"]
        assert rendered["mask_png_b64"] == created["mask_png_b64"]
        assert "photo_png_b64" in rendered

    def test_repeat_render_identical_bytes(self, client):
        sid = client.post("/api/session",
                          json={"ckpt_id": "pen", "seed": 10}).json()["session_id"]
        a = client.get(f"/api/session/{sid}/render", params={"yaw": 0.2}).json()
        b = client.get(f"/api/session/{sid}/render", params={"yaw": 0.2}).json()
        assert a == b

    def test_pose_out_of_bounds_422_with_bounds(self, client):
        sid = client.post("/api/session",
                          json={"ckpt_id": "pen", "seed": 11}).json()["session_id"]
        resp = client.get(f"/api/session/{sid}/render", params={"yaw": 3.0})
        assert resp.status_code == 422
        assert "bounds" in resp.json()

    def test_unknown_session_404(self, client):
        assert client.get("/api/session/snope/render").status_code == 404


class TestEdit:
    def test_empty_edit_list_keeps_drawing(self, client):
        created = client.post("/api/session", json={"ckpt_id": "pen", "seed": 12}).json()
        sid = created["session_id"]
        resp = client.post(f"/api/session/{sid}/edit", json={"edits": []}).json()
        assert resp["drawing_png_b64"] == created["preview_png_b64"]

    def test_edit_then_clear_restores_original_bytes(self, client):
        created = client.post("/api/session", json={"ckpt_id": "pen", "seed": 13}).json()
        sid = created["session_id"]
        edited = client.post(f"/api/session/{sid}/edit",
                             json={"edits": [eye_edit()]}).json()
        assert edited["drawing_png_b64"] != created["preview_png_b64"]
        cleared = client.delete(f"/api/session/{sid}/edit").json()
        assert cleared["drawing_png_b64"] == created["preview_png_b64"]
        assert cleared["mask_png_b64"] == created["mask_png_b64"]

    def test_repeated_identical_edit_is_idempotent(self, client):
        sid = client.post("/api/session",
                          json={"ckpt_id": "pen", "seed": 14}).json()["session_id"]
        first = client.post(f"/api/session/{sid}/edit",
                            json={"edits": [eye_edit()]}).json()
        second = client.post(f"/api/session/{sid}/edit",
                             json={"edits": [eye_edit()]}).json()
        assert first == second

    def test_malformed_polygon_400(self, client):
        sid = client.post("/api/session",
                          json={"ckpt_id": "pen", "seed": 15}).json()["session_id"]
        resp = client.post(f"/api/session/{sid}/edit",
                           json={"edits": [{"polygon": [[1, 2], [3]], "class": 2}]})
        assert resp.status_code == 400

    def test_class_out_of_range_422(self, client):
        sid = client.post("/api/session",
                          json={"ckpt_id": "pen", "seed": 16}).json()["session_id"]
        resp = client.post(f"/api/session/{sid}/edit",
                           json={"edits": [{"polygon": [[1, 1], [5, 1], [5, 5]],
                                            "class": 42}]})
        assert resp.status_code == 422

    def test_edit_log_export_and_replay_reproduce_bytes(self, client):
        created = client.post("/api/session", json={"ckpt_id": "pen", "seed": 17}).json()
        sid = created["session_id"]
        edited = client.post(f"/api/session/{sid}/edit",
                             json={"edits": [eye_edit(), eye_edit(cx=40, cls=5)]}).json()
        log = client.get(f"/api/session/{sid}/edits").json()
        assert log["seed"] == 17 and len(log["edits"]) == 2

        fresh = client.post("/api/session",
                            json={"ckpt_id": log["ckpt_id"], "seed": log["seed"]}).json()
        replayed = client.post(f"/api/session/{fresh['session_id']}/edit",
                               json={"edits": log["edits"]}).json()
        assert replayed["drawing_png_b64"] == edited["drawing_png_b64"]
        assert replayed["mask_png_b64"] == edited["mask_png_b64"]


class TestRegistry:
    def test_lists_registered_styles(self, client, ckpt_root):
        entries = client.get("/api/checkpoints").json()
        assert {e["ckpt_id"] for e in entries} == {"pen", "line"}
        by_id = {e["ckpt_id"]: e for e in entries}
        assert by_id["pen"]["style_name"] == "pen"
        assert by_id["pen"]["resolution"] == 64
        # entries match the on-disk manifest set
        on_disk = {p.name for p in ckpt_root.iterdir() if (p / "meta.json").exists()}
        assert {e["ckpt_id"] for e in entries} == on_disk

    def test_empty_dir_gives_empty_list(self, tmp_path):
        client = TestClient(create_app(tmp_path / "none"))
        assert client.get("/api/checkpoints").json() == []

    def test_openapi_spec_served(self, client):
        spec = client.get("/api/spec").json()
        assert "/api/session" in spec["paths"]
        assert spec["info"]["title"]

    def test_sessions_evicted_lru(self, ckpt_root):
        client = TestClient(create_app(ckpt_root, session_cap=2))
        sids = [client.post("/api/session",
                            json={"ckpt_id": "pen", "seed": i}).json()["session_id"]
                for i in range(3)]
        # oldest session dropped
        assert client.get(f"/api/session/{sids[0]}/render").status_code == 404
        assert client.get(f"/api/session/{sids[2]}/render").status_code == 200

    def test_static_bundle_served_alongside_api(self, ckpt_root, tmp_path):
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<html><body>studio</body></html>")
        client = TestClient(create_app(ckpt_root, static_dir=static))
        resp = client.get("/")
        assert resp.status_code == 200 and "studio" in resp.text
        assert client.get("/api/checkpoints").status_code == 200

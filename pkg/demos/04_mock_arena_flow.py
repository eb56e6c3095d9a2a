"""End-to-end arena flow against an in-process service with mock providers.

Walks the whole lifecycle: upload an image, receive two anonymous
responses, vote, see the reveal, and read the leaderboard — exactly what
the HTTP API does, with zero network and zero credentials.
"""

import io
import tempfile
import warnings
from pathlib import Path

from PIL import Image
from fastapi.testclient import TestClient

from geoarena.rating import DegenerateDataWarning

# Eight battles across a 17-model roster is deliberately sparse; the rating
# module flags that honestly, but it is noise for this walkthrough.
warnings.filterwarnings("ignore", category=DegenerateDataWarning)
warnings.filterwarnings("ignore", category=DeprecationWarning)

from geoarena.config import ArenaConfig, ServiceConfig, default_registry
from geoarena.core import BattleLog, ImageStore
from geoarena.providers import ProviderPool
from geoarena.service import ArenaService, create_app
from geoarena.rating import BTConfig

workdir = Path(tempfile.mkdtemp(prefix="geoarena-demo-"))

config = ArenaConfig()
config.registry = default_registry()
config.bt = BTConfig(l2_penalty=0.01)  # few battles: keep the fit regularized
config.service = ServiceConfig(rate_limit_battles_per_hour=0, sampling_seed=2024)

service = ArenaService(
    config,
    ProviderPool.mock(config.registry),
    BattleLog(workdir / "battles.jsonl"),
    ImageStore(workdir / "images"),
)
client = TestClient(create_app(service))

buf = io.BytesIO()
Image.new("RGB", (64, 64), (90, 140, 200)).save(buf, format="JPEG")
photo = buf.getvalue()

print("running 8 anonymous battles...\n")
for i in range(8):
    created = client.post(
        "/api/battles", files={"image": ("street.jpg", photo, "image/jpeg")}
    ).json()
    if i == 0:
        print("first battle, left pane (model identity hidden):")
        print("  " + created["response_left"].replace("\n", "\n  ")[:300])
        print()
    choice = ["left", "right", "tie"][i % 3]
    reveal = client.post(
        f"/api/battles/{created['battle_id']}/vote", json={"choice": choice}
    ).json()
    print(
        f"battle {i}: voted {choice:>5} -> {reveal['model_left']} vs "
        f"{reveal['model_right']} ({reveal['outcome']})"
    )

service.get_leaderboard(force=True)
rows = client.get("/api/leaderboard").json()
rated = [r for r in rows if r["elo"] is not None]
print(f"\nleaderboard ({len(rated)} rated, {len(rows) - len(rated)} awaiting battles):")
for row in rated:
    print(f"  #{row['rank']} {row['model']:<32} {row['elo']:7.1f}  ({row['battles']} battles)")

print(f"\nbattle log: {workdir / 'battles.jsonl'}")

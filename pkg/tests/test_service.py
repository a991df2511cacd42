"""HTTP layer: every route, happy path and validation errors."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from scma_uplink import __version__
from scma_uplink.channel import draw_channel, transmit
from scma_uplink.core import build_factor_graph, complex_to_pairs
from scma_uplink.seeding import spawn_rng
from scma_uplink.service.app import create_app
from scma_uplink.txchain import DelayProfile, generate_pilot

SMALL_EXPERIMENT = {
    "frame": {"S": 20, "N": 0, "D": 8},
    "pilot_energy": [1.0],
    "snr_db": [10.0],
    "trials": 4,
    "master_seed": 2,
}


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def test_health(client):
    body = client.get("/health").json()
    assert body == {"status": "ok", "service": "scma-uplink", "version": __version__}


def test_mae_endpoint(client):
    response = client.post("/experiments/mae", json={"config": SMALL_EXPERIMENT})
    assert response.status_code == 200
    body = response.json()
    assert body["csv"].startswith("# ")
    metrics = {row["metric"] for row in body["rows"]}
    assert "mae" in metrics


def test_ber_endpoint(client):
    config = dict(SMALL_EXPERIMENT, frame={"S": 20, "N": 6, "D": 8}, estimator="genie")
    response = client.post("/experiments/ber", json={"config": config})
    assert response.status_code == 200
    assert {row["metric"] for row in response.json()["rows"]} == {"ber"}


def test_ber_endpoint_domain_error(client):
    # N=0 passes schema validation but the BER runner rejects it
    response = client.post("/experiments/ber", json={"config": SMALL_EXPERIMENT})
    assert response.status_code == 422


def test_unknown_config_key_rejected(client):
    config = dict(SMALL_EXPERIMENT, typo=1)
    response = client.post("/experiments/mae", json={"config": config})
    assert response.status_code == 422


def test_ripcheck_endpoint(client):
    config = {
        "n_pilot": 300,
        "rip_draws": 5,
        "tail_trials": 10_000,
        "norm_tail_t": [4.0],
        "cross_tail_t": [0.5],
        "gershgorin_matrices": 3,
    }
    response = client.post("/ripcheck", json={"config": config})
    assert response.status_code == 200
    body = response.json()
    assert body["csv"].splitlines()[-1]
    assert all(row["verdict"] in ("pass", "fail", "vacuous") for row in body["rows"])


def test_codebook_build_and_validate(client):
    built = client.post("/codebooks", json={"K": 4, "J": 6, "M": 4, "dv": 2})
    assert built.status_code == 200
    document = built.json()
    assert document["K"] == 4 and len(document["codebooks"]) == 6

    verdict = client.post("/codebooks/validate", json=document).json()
    assert verdict == {"valid": True, "detail": "ok"}

    tampered = dict(document)
    tampered["codebooks"] = [
        [[[2 * re, 2 * im] for re, im in word] for word in user]
        for user in document["codebooks"]
    ]
    verdict = client.post("/codebooks/validate", json=tampered).json()
    assert verdict["valid"] is False
    assert verdict["detail"]


def test_codebook_build_rejects_bad_shape(client):
    response = client.post("/codebooks", json={"K": 4, "J": 4, "M": 4, "dv": 2})
    assert response.status_code == 422


def test_delay_estimate_endpoint(client):
    graph = build_factor_graph(4, 6)
    rng = spawn_rng(30)
    head_len, max_delay = 10, 6
    truth = DelayProfile(tuple(int(v) for v in rng.integers(0, max_delay + 1, 6)), max_delay)
    pilots = np.stack([generate_pilot(head_len, max_delay, 1.0, rng) for _ in range(6)])
    frames = [{k: pilots[j] for k in graph.user_res(j)} for j in range(6)]
    channel = draw_channel("awgn", graph, 0.0, rng)
    received = transmit(frames, truth, channel, rng)

    request = {
        "occupancy": graph.occupancy.tolist(),
        "pilot_heads": complex_to_pairs(pilots[:, :head_len]),
        "received": complex_to_pairs(received.samples),
        "max_delay": max_delay,
        "noise_variance": 0.0,
        "method": "lasso",
        "solver": {"lambda": 1e-3, "sigma": 1.0},
    }
    response = client.post("/delays/estimate", json=request)
    assert response.status_code == 200
    body = response.json()
    assert body["delays"] == [int(d) for d in truth.delays]
    assert len(body["diagnostics"]) == graph.n_res
    assert body["diagnostics_csv"].startswith("re_index,")


def test_delay_estimate_domain_error(client):
    request = {
        "occupancy": build_factor_graph(4, 6).occupancy.tolist(),
        "pilot_heads": [[[1.0, 0.0]]] * 6,  # one-sample heads
        "received": [[[0.0, 0.0]] * 3] * 4,
        "max_delay": 6,  # window longer than the received frame
        "noise_variance": 0.1,
        "method": "lasso",
        "solver": {},
    }
    response = client.post("/delays/estimate", json=request)
    assert response.status_code == 422

"""Tests for the HTTP service: endpoint contracts, verdicts, error mapping."""

import math

import httpx
import numpy as np
import pytest

from semiflow import __version__
from semiflow.cli import _InProcessTransport
from semiflow.service import create_app

LN2 = math.log(2.0)


@pytest.fixture(scope="module")
def client():
    transport = _InProcessTransport(create_app())
    with httpx.Client(transport=transport, base_url="http://svc") as c:
        yield c


def _vfl(gamma, p, **extra):
    payload = {"omega_lo": 0, "omega_hi": 1, "F": "-x",
               "h_re": repr(float(gamma)), "p": p}
    payload.update(extra)
    return payload


class TestHealth:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["version"] == __version__


class TestAnalyze:
    def test_chaotic_verdict(self, client):
        resp = client.post("/analyze", json={"problem": _vfl(0.0, 2.0)})
        assert resp.status_code == 200
        body = resp.json()
        assert body["verdict"] == "CHAOTIC_AND_FHC"
        assert body["exit_code"] == 0
        assert body["threshold_analysis"] is not None
        assert body["threshold_analysis"]["margin"] == pytest.approx(0.5)
        assert "verdict" in body["text"].lower()

    def test_not_chaotic_verdict(self, client):
        resp = client.post("/analyze", json={"problem": _vfl(-1.0, 1.0)})
        body = resp.json()
        assert body["verdict"] == "NOT_CHAOTIC"
        assert body["exit_code"] == 1

    def test_boundary_annotated(self, client):
        resp = client.post("/analyze", json={"problem": _vfl(-0.5, 2.0)})
        body = resp.json()
        assert body["verdict"] == "NOT_CHAOTIC"
        assert body["threshold_analysis"]["boundary"] is True
        assert any("boundary" in note
                   for note in body["threshold_analysis"]["notes"])

    def test_generic_problem_has_no_threshold_block(self, client):
        problem = {"omega_lo": 0, "omega_hi": "inf", "F": "1", "p": 1.0}
        resp = client.post("/analyze", json={"problem": problem})
        body = resp.json()
        assert body["verdict"] == "NOT_CHAOTIC"
        assert body["threshold_analysis"] is None

    def test_p_override(self, client):
        # gamma = -0.75 is chaotic at p = 1 but not at p = 2
        resp1 = client.post("/analyze",
                            json={"problem": _vfl(-0.75, 2.0), "p": 1.0})
        resp2 = client.post("/analyze", json={"problem": _vfl(-0.75, 2.0)})
        assert resp1.json()["verdict"] == "CHAOTIC_AND_FHC"
        assert resp2.json()["verdict"] == "NOT_CHAOTIC"

    def test_bad_expression_rejected(self, client):
        problem = {"omega_lo": 0, "omega_hi": 1, "F": "-x +", "p": 1.0}
        resp = client.post("/analyze", json={"problem": problem})
        assert resp.status_code == 400
        assert resp.json()["detail"]

    def test_unknown_field_rejected(self, client):
        problem = _vfl(0.0, 2.0)
        problem["mystery"] = 1
        resp = client.post("/analyze", json={"problem": problem})
        assert resp.status_code == 422

    def test_tiny_exponent_rejected(self, client):
        resp = client.post("/analyze", json={"problem": _vfl(0.0, 0.5)})
        assert resp.status_code == 422

    def test_nan_bound_rejected(self, client):
        problem = {"omega_lo": "nan", "omega_hi": 1, "F": "-x"}
        resp = client.post("/analyze", json={"problem": problem})
        assert resp.status_code == 422


class TestSobolevAnalyze:
    def test_chaotic(self, client):
        resp = client.post("/sobolev-analyze",
                           json={"problem": _vfl(1.5, 2.0)})
        body = resp.json()
        assert body["verdict"] == "CHAOTIC_AND_FHC"
        assert body["exit_code"] == 0
        assert body["agreement"] == "agree"
        assert body["algebraic"]["h_at_left_endpoint"] == 1.5
        assert body["algebraic"]["threshold"] == 0.5

    def test_boundary(self, client):
        resp = client.post("/sobolev-analyze",
                           json={"problem": _vfl(0.5, 2.0)})
        body = resp.json()
        assert body["verdict"] == "NOT_CHAOTIC"
        assert body["algebraic"]["boundary"] is True
        assert body["agreement"] == "agree"

    def test_hypothesis_violation_rejected(self, client):
        resp = client.post("/sobolev-analyze",
                           json={"problem": _vfl(0.5, 2.0, h_im="1")})
        assert resp.status_code == 400
        assert "real" in resp.json()["detail"]


class TestSimulate:
    def test_indicator_transport(self, client):
        payload = {
            "problem": _vfl(0.0, 1.0),
            "times": [0.0, LN2],
            "initial": {"kind": "indicator", "interval": [0.25, 0.5]},
            "grid": 2048,
        }
        resp = client.post("/simulate", json=payload)
        assert resp.status_code == 200
        body = resp.json()
        assert body["mode"] == "interval"
        assert len(body["profiles"]) == 2
        norms = dict((round(t, 12), v) for t, v in body["norms"])
        assert norms[0.0] == pytest.approx(0.25, abs=1e-3)
        assert norms[round(LN2, 12)] == pytest.approx(0.5, abs=1e-3)
        # at t = ln 2 the profile is the indicator of [0.5, 1)
        profile = body["profiles"][1]
        nodes = np.asarray(profile["nodes"])
        values = np.asarray(profile["values_re"])
        assert profile["values_im"] is None
        inside = (nodes > 0.52) & (nodes < 0.97)
        outside = nodes < 0.48
        assert np.all(values[inside] == 1.0)
        assert np.all(values[outside] == 0.0)

    def test_samples_identity_at_time_zero(self, client):
        nodes = np.linspace(0.01, 0.99, 65).tolist()
        values = np.sin(np.linspace(0.0, 3.0, 65)).tolist()
        payload = {
            "problem": _vfl(0.0, 1.0),
            "times": [0.0],
            "initial": {"kind": "samples", "nodes": nodes, "values_re": values},
        }
        body = client.post("/simulate", json=payload).json()
        assert body["profiles"][0]["nodes"] == nodes
        assert body["profiles"][0]["values_re"] == values

    def test_expression_decay_rates(self, client):
        payload = {
            "problem": _vfl(-2.0, 1.0),
            "times": [0.0, 0.5, 1.0],
            "initial": {"kind": "expression", "source": "1"},
            "grid": 1024,
        }
        body = client.post("/simulate", json=payload).json()
        norms = body["norms"]
        base = norms[0][1]
        for t, value in norms[1:]:
            assert value / base == pytest.approx(math.exp(-2.0 * t), rel=0.01)

    def test_sobolev_mode_three_channels(self, client):
        payload = {
            "problem": _vfl(0.7, 2.0),
            "times": [0.8],
            "initial": {"kind": "expression", "source": "x"},
            "mode": "sobolev",
            "grid": 257,
        }
        body = client.post("/simulate", json=payload).json()
        profile = body["profiles"][0]
        assert "derivative_re" in profile
        nodes = np.asarray(profile["nodes"])
        values = np.asarray(profile["values_re"])
        factor = math.exp((0.7 - 1.0) * 0.8)
        assert np.max(np.abs(values - factor * nodes)) < 1e-9
        assert values[0] == 0.0

    def test_sobolev_mode_rejects_indicator(self, client):
        payload = {
            "problem": _vfl(0.7, 2.0),
            "times": [0.5],
            "initial": {"kind": "indicator", "interval": [0.25, 0.5]},
            "mode": "sobolev",
        }
        resp = client.post("/simulate", json=payload)
        assert resp.status_code == 400
        assert "discontinuous" in resp.json()["detail"]

    def test_negative_time_rejected(self, client):
        payload = {
            "problem": _vfl(0.0, 1.0),
            "times": [-1.0],
            "initial": {"kind": "expression", "source": "1"},
        }
        assert client.post("/simulate", json=payload).status_code == 422

    def test_samples_length_mismatch_rejected(self, client):
        payload = {
            "problem": _vfl(0.0, 1.0),
            "times": [0.0],
            "initial": {"kind": "samples",
                        "nodes": [0.1, 0.2, 0.3],
                        "values_re": [1.0]},
        }
        assert client.post("/simulate", json=payload).status_code == 422


class TestVerify:
    def test_all_pass_on_closed_form_problem(self, client):
        payload = {"problem": _vfl(1.0, 1.0), "grid": 512}
        body = client.post("/verify", json=payload).json()
        assert body["all_pass"] is True
        names = {check["name"] for check in body["checks"]}
        assert {"flow-group-law", "flow-inversion", "cocycle-composition",
                "right-inverse-identity", "cascade-identity",
                "norm-identities", "occupancy-bound",
                "occupancy-consistency"} <= names
        assert body["refinement"] is not None
        assert len(body["refinement"]) == 2

    def test_fault_injection_breaks_right_inverse(self, client):
        payload = {"problem": _vfl(1.0, 1.0), "grid": 512,
                   "inject_fault": True, "refine": False}
        body = client.post("/verify", json=payload).json()
        assert body["all_pass"] is False
        failing = {check["name"] for check in body["checks"]
                   if not check["passed"]}
        assert "right-inverse-identity" in failing

    def test_deterministic_given_seed(self, client):
        payload = {"problem": _vfl(1.0, 1.0), "grid": 256, "seed": 11,
                   "refine": False}
        first = client.post("/verify", json=payload).json()
        second = client.post("/verify", json=payload).json()
        assert first == second

    def test_grid_below_floor_rejected(self, client):
        payload = {"problem": _vfl(1.0, 1.0), "grid": 10}
        assert client.post("/verify", json=payload).status_code == 422


class TestOccupancy:
    def test_log_two_witness(self, client):
        payload = {"problem": _vfl(0.0, 1.0), "interval": [0.25, 0.5],
                   "probes": 101}
        body = client.post("/occupancy", json=payload).json()
        assert body["bound_satisfied"] is True
        assert body["consistency_gap"] <= 1e-8
        assert body["c_formula"] == pytest.approx(LN2, abs=1e-9)
        assert body["witness"]["occupancy"] == pytest.approx(LN2, abs=1e-6)
        assert len(body["measurements"]) == 101
        assert body["measured_sup"] <= body["c_formula"] + 1e-6

    def test_interval_outside_domain_rejected(self, client):
        payload = {"problem": _vfl(0.0, 1.0), "interval": [2.0, 3.0]}
        assert client.post("/occupancy", json=payload).status_code == 400

    def test_backwards_interval_rejected(self, client):
        payload = {"problem": _vfl(0.0, 1.0), "interval": [0.5, 0.25]}
        assert client.post("/occupancy", json=payload).status_code == 422

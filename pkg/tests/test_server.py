"""
Tests for the MCP tools: results come back as dicts, failures as {"error": ...}.
"""
import math

import pytest
from pytest import approx

pytest.importorskip("mcp")

CROSS = {"n": 2, "kind": "atomic", "atoms": [
    {"dir": [1, 0], "w": 1}, {"dir": [-1, 0], "w": 1}, {"dir": [0, 1], "w": 1}, {"dir": [0, -1], "w": 1},
]}


@pytest.fixture(scope="module")
def server():
    import server as module
    return module


def test_measure_info(server):
    result = server.measure_info(CROSS)
    assert result["total_mass"] == approx(4.0)
    assert result["ellipticity"]["value"] == approx(2.0)


def test_eval_operator(server):
    result = server.eval_operator(CROSS, "gaussian", [0.0, 0.0], 0.5)
    assert result["value"] == approx(4.0 * math.sqrt(math.pi / 2.0) / 0.5, rel=1e-9)


def test_mean_value_of_constant(server):
    result = server.mean_value(CROSS, "constant", [0.1, 0.2], 0.3, 0.5)
    assert result["value"] == approx(1.0, abs=1e-12)


def test_errors_are_returned(server):
    assert "error" in server.eval_operator(CROSS, "gaussian", [0.0, 0.0], 1.5)
    assert "error" in server.measure_info({"n": 2, "kind": "atomic"})
    assert "error" in server.limit_s1(CROSS, "gaussian", [0.0, 0.0], target="mean")


def test_solve_wos(server):
    result = server.solve_wos(CROSS, "ball:0,0:1", "constant", [0.0, 0.0], 0.5, walks=20, seed=1)
    assert result["estimate"] == approx(1.0)
    assert result["walks"] == 20


@pytest.mark.parametrize("name", [
    "measure_info", "eval_operator", "mean_value", "verify_expansion", "limit_s1", "bbm", "solve_wos",
])
def test_tool_docs_describe_arguments(server, name):
    doc = getattr(server, name).__doc__
    assert "Args:" in doc and "Returns:" in doc
    assert "measure:" in doc

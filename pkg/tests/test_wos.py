"""
Tests for the walk-on-spheres solver and its one-dimensional Poisson oracle.
"""
import math

import numpy as np
import pytest
from pytest import approx

from services.errors import (
    BadParameter,
    DegenerateRadius,
    DimensionMismatch,
    DomainError,
    StartOutsideDomain,
)
from services.funcs import builtin, linear_combination
from services.measure import atomic_measure, uniform_measure
from services.wos import (
    Domain,
    WalkConfig,
    bias_scan,
    parse_domain,
    poisson_kernel_ball_1d,
    poisson_oracle_interval,
    run_walks,
)


def _axis_pair_1d():
    return atomic_measure([([1.0], 1.0), ([-1.0], 1.0)])


def _unit_interval():
    return Domain.ball([0.0], 1.0)


class TestDomain:
    def test_ball_distance(self):
        d = Domain.ball([0.0, 0.0], 2.0)
        assert d.signed_distance([[0.5, 0.0], [3.0, 0.0]]).tolist() == approx([1.5, -1.0])
        assert d.contains([[0.0, 0.0], [2.0, 0.0]]).tolist() == [True, False]

    def test_box_distance(self):
        d = Domain.box([0.0, 0.0], [2.0, 1.0])
        assert d.signed_distance([[1.0, 0.25]])[0] == approx(0.25)
        assert not d.contains([[2.5, 0.5]])[0]

    def test_project_outside_ball(self):
        d = Domain.ball([1.0], 0.5)
        p = d.project_outside([[1.2], [1.0]])
        assert not np.any(d.contains(p))
        assert p[0, 0] == approx(1.5)

    def test_project_outside_box(self):
        d = Domain.box([0.0, 0.0], [1.0, 1.0])
        p = d.project_outside([[0.9, 0.5]])
        assert not d.contains(p)[0]
        assert p[0] == approx([1.0, 0.5])

    def test_parse(self):
        d = parse_domain("ball:0,0:1.5")
        assert d.kind == "ball" and d.radius == 1.5 and d.dimension == 2
        b = parse_domain("box:-1,-1:1,2")
        assert b.to_dict() == {"kind": "box", "lower": [-1.0, -1.0], "upper": [1.0, 2.0]}

    @pytest.mark.parametrize("text", ["ball:0:0", "box:1:0", "disk:0:1", "ball:0:a", "ball:0:1,2"])
    def test_parse_rejects(self, text):
        with pytest.raises(DomainError):
            parse_domain(text)


class TestPoissonOracle:
    def test_half_order_interval(self):
        # (1/pi) arcsec(2)
        assert poisson_oracle_interval(0.0, 1.0, 2.0, 0.5) == approx(1.0 / 3.0, rel=1e-10)

    def test_mirror_symmetry(self):
        a = poisson_oracle_interval(0.3, 1.2, 3.0, 0.4)
        b = poisson_oracle_interval(-0.3, -3.0, -1.2, 0.4)
        assert b == approx(a, rel=1e-12)

    def test_kernel_integrates_to_one(self):
        s = 0.6
        total = poisson_oracle_interval(0.2, 1.0, 1e6, s) + poisson_oracle_interval(0.2, -1e6, -1.0, s)
        assert total == approx(1.0, abs=1e-3)

    def test_kernel_outside_support(self):
        with pytest.raises(DomainError):
            poisson_kernel_ball_1d(0.0, 0.5, 0.5)

    def test_kernel_value(self):
        assert poisson_kernel_ball_1d(0.0, 2.0, 0.5) == approx(1.0 / (math.pi * math.sqrt(3.0) * 2.0))


class TestWalks:
    @pytest.mark.slow
    def test_matches_poisson_oracle(self):
        g = builtin("indicator", dimension=1, lower=1.0, upper=2.0)
        config = WalkConfig(count=100000, max_steps=1000, seed=7)
        stats = run_walks(_axis_pair_1d(), 0.5, _unit_interval(), g, [0.0], config)
        expected = poisson_oracle_interval(0.0, 1.0, 2.0, 0.5)
        assert abs(stats.estimate - expected) <= 3.0 * stats.stderr
        assert stats.truncated_frac == 0.0

    def test_worker_count_does_not_change_result(self, monkeypatch):
        g = builtin("indicator", dimension=1, lower=1.0, upper=2.0)
        config = WalkConfig(count=3000, block_size=512, seed=11)
        monkeypatch.setenv("ANISOKERNEL_WORKERS", "1")
        one = run_walks(_axis_pair_1d(), 0.5, _unit_interval(), g, [0.2], config)
        monkeypatch.setenv("ANISOKERNEL_WORKERS", "4")
        four = run_walks(_axis_pair_1d(), 0.5, _unit_interval(), g, [0.2], config)
        assert one.estimate == four.estimate
        assert one.length_histogram == four.length_histogram

    def test_linear_in_boundary_data(self):
        g1 = builtin("indicator", dimension=1, lower=1.0, upper=2.0)
        g2 = builtin("gaussian", dimension=1, center=-1.5, width=0.3)
        both = linear_combination([(2.0, g1), (-1.0, g2)])
        config = WalkConfig(count=2000, seed=3)
        args = (_axis_pair_1d(), 0.4, _unit_interval())
        a = run_walks(*args, g1, [0.1], config).estimate
        b = run_walks(*args, g2, [0.1], config).estimate
        c = run_walks(*args, both, [0.1], config).estimate
        assert c == approx(2.0 * a - b, abs=1e-12)

    def test_constant_data_is_reproduced(self):
        g = builtin("constant", dimension=2, value=2.5)
        config = WalkConfig(count=500, seed=1)
        stats = run_walks(uniform_measure(2), 0.7, Domain.ball([0.0, 0.0], 1.0), g, [0.3, 0.1], config)
        assert stats.estimate == approx(2.5)
        assert stats.stderr == approx(0.0, abs=1e-12)
        assert sum(stats.length_histogram) == 500

    def test_step_limit_projects_outside(self):
        g = builtin("constant", dimension=1)
        config = WalkConfig(count=200, max_steps=1, theta=0.01, seed=5)
        stats = run_walks(_axis_pair_1d(), 0.9, _unit_interval(), g, [0.0], config)
        assert stats.truncated_frac > 0.0
        assert stats.estimate == approx(1.0)

    def test_start_outside(self):
        g = builtin("constant", dimension=1)
        with pytest.raises(StartOutsideDomain):
            run_walks(_axis_pair_1d(), 0.5, _unit_interval(), g, [1.5], WalkConfig(count=10))

    @pytest.mark.parametrize("domain, x", [
        (Domain.ball([0.0], 1.0), [1.0]),
        (Domain.box([0.0], [2.0]), [0.0]),
    ])
    def test_start_on_boundary(self, domain, x):
        g = builtin("constant", dimension=1)
        with pytest.raises(DegenerateRadius):
            run_walks(_axis_pair_1d(), 0.5, domain, g, x, WalkConfig(count=10))

    @pytest.mark.slow
    def test_truncation_shrinks_with_step_limit(self):
        g = builtin("indicator", dimension=1, lower=1.0, upper=2.0)
        fractions = [
            run_walks(_axis_pair_1d(), 0.5, _unit_interval(), g, [0.0],
                      WalkConfig(count=20000, max_steps=steps, theta=0.5, seed=13)).truncated_frac
            for steps in (1, 10, 100, 1000, 10000)
        ]
        assert fractions[0] > 0.0
        assert all(b <= a for a, b in zip(fractions, fractions[1:]))
        assert fractions[-1] == 0.0

    def test_dimension_mismatch(self):
        g = builtin("constant", dimension=2)
        with pytest.raises(DimensionMismatch):
            run_walks(_axis_pair_1d(), 0.5, _unit_interval(), g, [0.0], WalkConfig(count=10))

    def test_to_dict(self):
        g = builtin("constant", dimension=1)
        stats = run_walks(_axis_pair_1d(), 0.5, _unit_interval(), g, [0.0], WalkConfig(count=50))
        assert set(stats.to_dict()) == {"estimate", "stderr", "mean_len", "truncated_frac",
                                        "length_histogram", "walks"}


class TestWalkConfig:
    @pytest.mark.parametrize("overrides", [
        {"count": 0}, {"theta": 0.0}, {"theta": 1.5}, {"h_max": -1.0}, {"block_size": 0},
    ])
    def test_rejects(self, overrides):
        with pytest.raises(BadParameter):
            WalkConfig(**overrides)

    def test_from_defaults(self):
        config = WalkConfig.from_defaults(count=20, h_max=None)
        assert config.count == 20
        assert config.h_max is None
        assert config.theta == 1.0


class TestBiasScan:
    def test_rows(self):
        g = builtin("indicator", dimension=1, lower=1.0, upper=2.0)
        rows = bias_scan(_axis_pair_1d(), 0.5, _unit_interval(), g, [0.0], [0.5, 0.25],
                         WalkConfig(count=500, seed=2))
        assert [row["h_max"] for row in rows] == [0.5, 0.25]
        assert rows[0]["difference"] is None
        assert rows[1]["difference"] == approx(rows[1]["estimate"] - rows[0]["estimate"])
        assert rows[1]["mean_len"] >= rows[0]["mean_len"]

    @pytest.mark.slow
    def test_anisotropic_scan(self):
        cross = atomic_measure([([1, 0], 1.0), ([-1, 0], 1.0), ([0, 1], 1.0), ([0, -1], 1.0)])
        g = builtin("gaussian", dimension=2, center=[1.5, 0.0], width=0.5)
        rows = bias_scan(cross, 0.5, Domain.ball([0.0, 0.0], 1.0), g, [0.0, 0.0],
                         [0.4, 0.2, 0.1, 0.05], WalkConfig(count=20000, seed=9))
        lengths = [row["mean_len"] for row in rows]
        assert all(b >= a for a, b in zip(lengths, lengths[1:]))
        last, before = rows[-1], rows[-2]
        assert abs(last["difference"]) <= 4.0 * math.hypot(last["stderr"], before["stderr"])

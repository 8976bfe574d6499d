import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lineshape_memory.lineshape import (
    DegenerateLineshapeError,
    FrequencyGrid,
    InvalidLineshapeError,
    Kind,
    Lineshape,
    evaluate,
    half_width,
    normalize,
    perturb_quadratic,
    quadrature_norm,
    sample,
    write_csv,
)

GRID = FrequencyGrid.uniform()


class TestFrequencyGrid:
    def test_default_grid(self):
        assert len(GRID) == 501
        assert GRID.nodes[0] == -10.0 and GRID.nodes[-1] == 10.0
        np.testing.assert_allclose(GRID.weights, 0.04)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            FrequencyGrid.from_nodes([0.0, 2.0, 1.0])

    def test_nonuniform_weights_sum_to_span(self):
        g = FrequencyGrid.from_nodes([-1.0, -0.2, 0.5, 3.0])
        assert np.all(g.weights > 0)
        assert g.integrate(np.ones(4)) == pytest.approx(4.0)


class TestEvaluate:
    def test_rectangular_center(self):
        assert evaluate(Lineshape.rectangular(), 0.0) == 0.5

    def test_rectangular_edges_take_half_height(self):
        assert evaluate(Lineshape.rectangular(), 1.0) == 0.25
        assert evaluate(Lineshape.rectangular(), 1.01) == 0.0

    def test_lorentzian_half_maximum(self):
        ls = Lineshape.lorentzian()
        assert ls(1.0) == pytest.approx(1 / (2 * math.pi))
        assert ls(-1.0) == pytest.approx(1 / (2 * math.pi))

    def test_gaussian_peak(self):
        assert Lineshape.gaussian()(0.0) == pytest.approx(0.46971, abs=1e-5)
        assert Lineshape.gaussian()(0.0) == pytest.approx(math.sqrt(math.log(2) / math.pi), rel=1e-14)

    def test_array_in_array_out(self):
        out = Lineshape.gaussian()(np.array([0.0, 1.0]))
        assert out.shape == (2,)
        assert out[1] == pytest.approx(out[0] / 2)

    @pytest.mark.parametrize("kind", ["rectangular", "gaussian", "lorentzian"])
    def test_half_width_matches_hwhm(self, kind):
        for h in (0.5, 1.0, 2.0):
            assert half_width(Lineshape.named(kind, h)) == pytest.approx(h, rel=1e-2)

    def test_spline_clamps_and_zero_outside(self):
        ls = Lineshape.spline([-1, 0, 1], [0.0, 1.0, 0.0])
        assert ls(2.0) == 0.0 and ls(-1.5) == 0.0
        assert np.all(ls(np.linspace(-1, 1, 101)) >= 0)

    @pytest.mark.parametrize("nodes", [[(0, 1), (-1, 1)], [(0, -1), (1, 1)], [(0, 1)]])
    def test_malformed_spline(self, nodes):
        with pytest.raises(InvalidLineshapeError):
            Lineshape(Kind.SPLINE, 1.0, tuple(nodes))

    def test_named_kind_rejects_nodes(self):
        with pytest.raises(InvalidLineshapeError):
            Lineshape(Kind.GAUSSIAN, 1.0, ((0.0, 1.0), (1.0, 0.0)))

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            Lineshape.named("voigt")


class TestNormalize:
    @pytest.mark.parametrize("kind", ["rectangular", "gaussian"])
    def test_compact_lineshapes_unit_norm_on_default_grid(self, kind):
        assert quadrature_norm(Lineshape.named(kind), GRID) == pytest.approx(1.0, abs=1e-6)

    def test_lorentzian_truncated_by_grid(self):
        # tails beyond +-10 hwhm carry 1 - (2/pi) atan(10) of the weight
        assert quadrature_norm(Lineshape.lorentzian(), GRID) == pytest.approx(
            2 / math.pi * math.atan(10.0), abs=5e-4)

    def test_normalize_fixes_quadrature_sum(self, named):
        assert quadrature_norm(normalize(named, GRID), GRID) == pytest.approx(1.0, rel=1e-12)

    def test_rectangle_already_normalized(self):
        n = normalize(Lineshape.rectangular(), GRID)
        assert n.scale == pytest.approx(1.0, abs=1e-9)

    def test_scaled_rectangle(self):
        base = Lineshape.rectangular()
        tripled = Lineshape(Kind.RECTANGULAR, 1.0, None, 3.0)
        assert normalize(tripled, GRID).scale == pytest.approx(normalize(base, GRID).scale, rel=1e-12)

    def test_zero_profile(self):
        with pytest.raises(DegenerateLineshapeError):
            normalize(Lineshape.spline([20, 21], [1, 1]), GRID)

    @given(st.lists(st.floats(0.01, 10.0), min_size=3, max_size=30))
    @settings(max_examples=40, deadline=None)
    def test_positive_spline_normalizes(self, values):
        pos = np.linspace(-3, 3, len(values))
        ls = normalize(Lineshape.spline(pos, values), GRID)
        assert quadrature_norm(ls, GRID) == pytest.approx(1.0, abs=1e-6)
        assert np.all(sample(ls, GRID) >= 0)

    def test_symmetry(self, named):
        f = sample(named, GRID)
        np.testing.assert_array_equal(f, f[::-1])

    def test_boundary_sampling(self, named):
        # Lorentzian is the worst case: 1/(pi (1 + 100)) against 1/pi
        assert named(10.0) <= 0.0100 * named(0.0) + 1e-15


class TestPerturbQuadratic:
    def test_zero_coefficient_is_rectangle(self):
        p = perturb_quadratic(Lineshape.rectangular(), 0.0, GRID)
        inside = np.abs(GRID.nodes) < 0.999
        np.testing.assert_allclose(sample(p, GRID)[inside], 0.5 / quadrature_norm(Lineshape.spline(
            np.linspace(-1, 1, 51), np.full(51, 0.5)), GRID), rtol=1e-9)

    @pytest.mark.parametrize("c", [0.1, -0.1])
    def test_unit_norm_nonnegative(self, c):
        p = perturb_quadratic(Lineshape.rectangular(), c, GRID)
        assert quadrature_norm(p, GRID) == pytest.approx(1.0, abs=1e-6)
        assert np.all(sample(p, GRID) >= 0)

    def test_signs(self):
        up = perturb_quadratic(Lineshape.rectangular(), 0.1, GRID)
        down = perturb_quadratic(Lineshape.rectangular(), -0.1, GRID)
        assert up(0.9) > up(0.0)
        assert down(0.9) < down(0.0)

    def test_requires_rectangle(self):
        with pytest.raises(InvalidLineshapeError):
            perturb_quadratic(Lineshape.gaussian(), 0.1, GRID)


class TestSerialization:
    def test_json_roundtrip_spline(self, tmp_path):
        ls = Lineshape.spline([-1, 0, 1], [0.1, 0.5, 0.1])
        path = tmp_path / "ls.json"
        ls.to_json(path)
        data = json.loads(path.read_text())
        assert data["kind"].lower() == "spline" and data["nodes"][1] == [0.0, 0.5]
        back = Lineshape.from_json(path)
        assert back(0.3) == pytest.approx(ls(0.3))

    def test_json_roundtrip_named(self):
        ls = Lineshape.gaussian(2.0)
        assert Lineshape.from_json(ls.to_json()) == ls

    def test_missing_kind(self):
        with pytest.raises(InvalidLineshapeError):
            Lineshape.from_dict({"hwhm": 1})

    def test_csv(self, tmp_path):
        path = tmp_path / "f.csv"
        write_csv(Lineshape.rectangular(), FrequencyGrid.uniform(5, 2.0), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "delta,f"
        assert len(lines) == 6

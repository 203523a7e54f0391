"""Benchmark generators: field values, mosaic statistics, composition
invariants and determinism."""

import numpy as np
import pytest

from mechgp import benchmarks as bm
from mechgp.errors import OutOfRange, ShapeMismatch
from mechgp.glyphs import SUITS, render_suit


class TestLinearField:
    def test_corner_values(self):
        f = bm.linear_field(100, 100, 10.0, 300.0)
        assert f[0, 0] == 10.0
        assert f[99, 99] == 300.0

    def test_grid_midpoint(self):
        # affine in (row + col): cells with row+col = 99 sit exactly halfway
        f = bm.linear_field(100, 100, 10.0, 300.0)
        assert f[49, 50] == pytest.approx(155.0, abs=1e-12)
        assert f[50, 49] == pytest.approx(155.0, abs=1e-12)

    def test_rejects_degenerate_grid(self):
        with pytest.raises(OutOfRange):
            bm.linear_field(1, 10, 0.0, 1.0)


class TestStressField:
    def test_center_value_is_sum_of_amplitudes(self):
        p = bm.StressFieldParams()
        f = bm.stress_field(100, 100, p)
        assert f[int(p.y0), int(p.x0)] == pytest.approx(150.0, abs=1e-12)

    def test_value_at_tensile_radius(self):
        # closed form: 200 e^{-1/2} - 50 e^{-(10/30)^2/2}
        p = bm.StressFieldParams()
        f = bm.stress_field(100, 100, p)
        expected = 200.0 * np.exp(-0.5) - 50.0 * np.exp(-(10.0 / 30.0) ** 2 / 2.0)
        assert f[int(p.y0), int(p.x0) + 10] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(74.008, abs=1e-3)

    def test_far_field_decays(self):
        p = bm.StressFieldParams(x0=300.0, y0=300.0)
        f = bm.stress_field(1000, 1000, p)
        d = int(5 * p.r_compressive)
        assert abs(f[int(p.y0) + d, int(p.x0)]) < 1e-3

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(OutOfRange):
            bm.StressFieldParams(r_tensile=0.0)


class TestRgbMosaic:
    def test_base_values(self):
        m = bm.rgb_mosaic(10, 10, patch_size=4, seed=1)
        base = m.base_field()
        for cat, value in enumerate((150.0, 110.0, 50.0)):
            assert np.all(base[m.categories == cat] == value)

    def test_patch_channel_means(self):
        m = bm.rgb_mosaic(5, 5, patch_size=8, seed=0)
        red = m.bank[0]
        np.testing.assert_allclose(red.mean(axis=(1, 2)), [1.0, 0.0, 0.0])

    def test_seed_determinism(self):
        a = bm.rgb_mosaic(20, 20, seed=9)
        b = bm.rgb_mosaic(20, 20, seed=9)
        np.testing.assert_array_equal(a.categories, b.categories)

    def test_category_frequencies_uniform(self):
        m = bm.rgb_mosaic(100, 100, patch_size=1, seed=3)
        freqs = np.bincount(m.categories, minlength=3) / m.n_cells
        assert np.all(freqs >= 0.30) and np.all(freqs <= 0.37)


class TestSuitMosaic:
    def test_same_suit_same_base_different_pixels(self):
        m = bm.suit_mosaic(8, 8, patch_size=12, seed=2)
        for cat in range(4):
            cells = np.nonzero(m.categories == cat)[0]
            if cells.size >= 2:
                a, b = m.bank[cells[0]], m.bank[cells[1]]
                assert not np.array_equal(a, b)
        base = m.base_field()
        assert set(np.unique(base)) <= {40.0, 80.0, 120.0, 160.0}

    def test_glyph_occupancy_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(250):
            suit = SUITS[rng.integers(0, 4)]
            img = render_suit(suit, 16, rotation_deg=rng.uniform(-30, 30),
                              shear=rng.uniform(-0.2, 0.2))
            occupancy = float((img > 0.5).mean())
            assert 0.05 < occupancy < 0.6

    def test_seed_determinism(self):
        a = bm.suit_mosaic(6, 6, patch_size=10, seed=4)
        b = bm.suit_mosaic(6, 6, patch_size=10, seed=4)
        np.testing.assert_array_equal(a.bank, b.bank)

    def test_patch_size_lower_bound(self):
        with pytest.raises(OutOfRange):
            bm.suit_mosaic(4, 4, patch_size=4, seed=0)

    def test_configurable_base_values(self):
        m = bm.suit_mosaic(4, 4, patch_size=8, seed=0,
                           base_values={"spades": 7.0})
        assert m.base_values[SUITS.index("spades")] == 7.0


class TestCompose:
    def test_corner_red_value(self):
        # red base 150 plus the field's corner value 10
        for seed in range(6):
            ds = bm.make_benchmark1(rows=20, cols=20, patch_size=4, seed=seed)
            assert ds.targets[0] == pytest.approx(
                ds.components["rgb"][0] + 10.0, abs=1e-12)
            if ds.mechanisms["rgb"].categories[0] == 0:
                assert ds.targets[0] == pytest.approx(160.0, abs=1e-12)

    def test_zero_noise_targets_equal_components(self):
        ds = bm.make_benchmark1(rows=15, cols=15, patch_size=4, seed=1)
        total = sum(ds.components.values())
        np.testing.assert_array_equal(ds.targets, total)
        np.testing.assert_array_equal(ds.clean_targets, total)

    def test_noise_sample_sigma(self):
        ds = bm.make_benchmark1(rows=100, cols=100, patch_size=1, seed=5,
                                noise_sigma=50.0)
        resid = ds.targets - ds.clean_targets
        assert 48.0 <= resid.std() <= 52.0

    def test_shape_mismatch(self):
        a = bm.rgb_mosaic(4, 4, patch_size=2, seed=0)
        with pytest.raises(ShapeMismatch):
            bm.compose({"rgb": a}, {"spatial": np.zeros((5, 5))})

    def test_coordinates_map_corners_exactly(self):
        ds = bm.make_benchmark1(rows=10, cols=12, patch_size=2, seed=0)
        np.testing.assert_array_equal(ds.coords[0], [-1.0, -1.0])
        np.testing.assert_array_equal(ds.coords[-1], [1.0, 1.0])
        np.testing.assert_array_equal(ds.coords[11], [1.0, -1.0])


class TestThreeMechanism:
    def test_mechanism_count(self):
        ds = bm.three_mechanism_dataset(rows=6, cols=6, patch_size=8, seed=0)
        assert len(ds.mechanisms) == 2 and ds.coords is not None
        assert set(ds.components) == {"rgb", "suits", "spatial"}

    def test_components_sum_to_targets(self):
        ds = bm.three_mechanism_dataset(rows=6, cols=6, patch_size=8, seed=0)
        np.testing.assert_allclose(sum(ds.components.values()), ds.targets,
                                   rtol=0, atol=0)

    def test_hash_determinism(self):
        a = bm.three_mechanism_dataset(rows=5, cols=5, patch_size=8, seed=3)
        b = bm.three_mechanism_dataset(rows=5, cols=5, patch_size=8, seed=3)
        assert a.content_hash() == b.content_hash()
        c = bm.three_mechanism_dataset(rows=5, cols=5, patch_size=8, seed=4)
        assert a.content_hash() != c.content_hash()


def test_no_spatial_variant_has_flat_component():
    ds = bm.make_benchmark1(rows=8, cols=8, patch_size=2, seed=0, spatial=False)
    assert "spatial" not in ds.components
    assert set(np.unique(ds.targets)) <= {150.0, 110.0, 50.0}

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alsstructure.chm import Chm, ThresholdedChm, build_chm, threshold_chm
from alsstructure.point_pattern import distance_grid
from alsstructure.raster_spatial import (
    LAYER_PAIRS,
    LEVELS,
    BooleanModelParams,
    DegenerateLayerError,
    LayerFeatureSet,
    boolean_f_theo,
    connected_components,
    estimate_boolean_params,
    euler_number,
    gap_distances,
    layer_features,
    mean_same_neighbors,
    patch_stats,
    raster_f_function,
)
from alsstructure.synthetic_forest import Matern2, StandSpec, Thomas, simulate_plot
from oracles import flood_fill_count, gap_distances_bruteforce, same_neighbors_loop


def tchm(bits, mask=None, pixel=1.0):
    bits = np.asarray(bits, dtype=np.uint8)
    mask = np.ones(bits.shape, bool) if mask is None else np.asarray(mask, bool)
    return ThresholdedChm(bits * mask, 0.5, pixel, mask)


def checkerboard(n):
    i, j = np.indices((n, n))
    return ((i + j) % 2 == 0).astype(np.uint8)


def disc_mask(n):
    i, j = np.indices((n, n))
    c = (n - 1) / 2
    return np.hypot(i - c, j - c) <= n / 2


# ---------------------------------------------------------------- components


def test_all_canopy_components():
    t = tchm(np.ones((5, 5)))
    assert connected_components(t, "canopy").count == 1
    assert connected_components(t, "gap").count == 0


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_checkerboard_singletons(n):
    c = connected_components(tchm(checkerboard(n)), "canopy", 4)
    assert c.count == -(-n * n // 2)
    assert np.all(c.sizes == 1)


def test_checkerboard_8_connectivity_joins_diagonals():
    assert connected_components(tchm(checkerboard(6)), "canopy", 8).count == 1


def test_components_match_flood_fill(rng):
    for _ in range(100):
        n = rng.integers(1, 30)
        bits = rng.uniform(size=(n, n)) < rng.uniform(0.2, 0.8)
        mask = disc_mask(n) if rng.uniform() < 0.5 else None
        t = tchm(bits, mask)
        for phase, img in (("canopy", t.canopy), ("gap", t.gap)):
            for conn in (4, 8):
                c = connected_components(t, phase, conn)
                count, sizes = flood_fill_count(img, conn)
                assert c.count == count
                assert sorted(c.sizes.tolist()) == sizes


def test_component_errors():
    with pytest.raises(ValueError):
        connected_components(tchm(np.ones((2, 2))), "sky")
    with pytest.raises(ValueError):
        connected_components(tchm(np.ones((2, 2))), "canopy", 6)


# ---------------------------------------------------------------- patch stats


def _components_with_sizes(sizes):
    width = sum(sizes) + len(sizes)
    bits = np.zeros((1, width), np.uint8)
    pos = 0
    for s in sizes:
        bits[0, pos : pos + s] = 1
        pos += s + 1
    return connected_components(tchm(bits))


def test_patch_stats_examples():
    assert patch_stats(_components_with_sizes([4, 4])) == (2, 4.0, 0.0)
    assert patch_stats(_components_with_sizes([2, 6])) == (2, 4.0, 2.0)


def test_patch_stats_recount(rng):
    for _ in range(20):
        t = tchm(rng.uniform(size=(20, 20)) < 0.5)
        c = connected_components(t)
        sizes = [int((c.labels == k).sum()) for k in range(1, c.count + 1)]
        n, m, s = patch_stats(c)
        assert n == len(sizes)
        assert m == pytest.approx(np.mean(sizes)) and s == pytest.approx(np.std(sizes))


def test_patch_stats_empty():
    assert patch_stats(connected_components(tchm(np.zeros((3, 3))))) == (0, 0.0, 0.0)


# ---------------------------------------------------------------- same-type neighbours


def test_same_neighbors_full_square():
    assert mean_same_neighbors(tchm(np.ones((3, 3)))) == pytest.approx(24 / 9)


def test_same_neighbors_checkerboard():
    assert mean_same_neighbors(tchm(checkerboard(7))) == 0.0


def test_same_neighbors_matches_loop(rng):
    for _ in range(30):
        n = rng.integers(2, 25)
        mask = disc_mask(n)
        t = tchm(rng.uniform(size=(n, n)) < 0.5, mask)
        assert mean_same_neighbors(t) == pytest.approx(same_neighbors_loop(t.bits, mask), abs=1e-12)


@given(arrays(np.uint8, (9, 9), elements=st.integers(0, 1)))
def test_same_neighbors_bounded(bits):
    v = mean_same_neighbors(tchm(bits))
    assert 0 <= v <= 4


# ---------------------------------------------------------------- Euler number


def test_euler_all_canopy():
    assert euler_number(tchm(np.ones((4, 4)))) == 1


def test_euler_blob_with_hole():
    bits = np.ones((5, 5), np.uint8)
    bits[2, 2] = 0
    # the outside gap ring is absent because the raster is all mask
    assert euler_number(tchm(bits)) == 0


def test_euler_matches_flood_fill(rng):
    for _ in range(50):
        t = tchm(rng.uniform(size=(15, 15)) < 0.5, disc_mask(15))
        assert euler_number(t) == flood_fill_count(t.canopy)[0] - flood_fill_count(t.gap)[0]


def test_euler_regular_below_clustered_on_average():
    # a regular canopy at a low level is one connected sheet with many gaps
    reg, clu = [], []
    for s in range(20):
        r = simulate_plot(StandSpec(Matern2(0.2, 1.6)), s)
        c = simulate_plot(StandSpec(Thomas(0.02, 5, 0.7)), s)
        if build_chm(c.cloud).hmax == 0:
            continue
        reg.append(euler_number(threshold_chm(build_chm(r.cloud), 0.4)))
        clu.append(euler_number(threshold_chm(build_chm(c.cloud), 0.4)))
    assert np.mean(reg) < np.mean(clu)


# ---------------------------------------------------------------- distances and F


def test_gap_distances_match_bruteforce(rng):
    for _ in range(40):
        n = rng.integers(2, 25)
        pixel = rng.choice([0.25, 0.5, 1.0])
        t = tchm(rng.uniform(size=(n, n)) < 0.3, disc_mask(n), pixel)
        if not t.canopy.any() or not t.gap.any():
            continue
        np.testing.assert_array_equal(gap_distances(t), gap_distances_bruteforce(t.canopy, t.gap, pixel))


def test_gap_distances_degenerate():
    with pytest.raises(DegenerateLayerError):
        gap_distances(tchm(np.ones((3, 3))))
    with pytest.raises(DegenerateLayerError):
        gap_distances(tchm(np.zeros((3, 3))))


def test_alternating_columns_f_is_one_at_pixel():
    bits = np.zeros((10, 10), np.uint8)
    bits[:, ::2] = 1
    f = raster_f_function(tchm(bits, pixel=0.5), 2.0)
    assert f.values[1] == 1.0 and f.values[0] == 0.0


def test_single_canopy_pixel_disc_area():
    n, pixel = 81, 0.5
    bits = np.zeros((n, n), np.uint8)
    bits[40, 40] = 1
    f = raster_f_function(tchm(bits, pixel=pixel), 4.5)
    n_gap = n * n - 1

    def area_cdf(r):
        r = np.clip(r, 0, None)
        return np.clip((np.pi * r**2 / pixel**2 - 1) / n_gap, 0, 1)

    assert np.all(f.values <= area_cdf(f.r + pixel) + 1e-12)
    assert np.all(f.values >= area_cdf(f.r - pixel) - 1e-12)


# ---------------------------------------------------------------- Boolean model


def test_boolean_f_theo_examples():
    r = distance_grid(4.5, 0.5)
    assert np.all(boolean_f_theo(BooleanModelParams(0.0, 1.0, 1.0), r).values == 0)
    lam = 0.3
    csr = boolean_f_theo(BooleanModelParams(0.2, 0.0, 0.0, fallback_lambda=lam), r).values
    np.testing.assert_allclose(csr, 1 - np.exp(-lam * np.pi * r**2), atol=1e-15)
    v = boolean_f_theo(BooleanModelParams(0.5, 1.0, 1.0), [0.0, 1.0]).values[1]
    assert v == pytest.approx(0.875, abs=1e-12)


def test_boolean_params_point_patch():
    bits = np.zeros((5, 5), np.uint8)
    bits[2, 2] = 1
    t = tchm(bits)
    p = estimate_boolean_params(connected_components(t), t)
    assert p.mean_radius == 0 and p.mean_radius_sq == 0
    assert p.implied_lambda == p.fallback_lambda == pytest.approx(1 / 25)


def test_boolean_params_two_patches():
    # 3-pixel and 5-pixel rows at 1 m pixels have diameters 2 m and 4 m
    bits = np.zeros((3, 12), np.uint8)
    bits[1, 0:3] = 1
    bits[1, 5:10] = 1
    t = tchm(bits)
    c = connected_components(t)
    assert sorted(c.diameters.tolist()) == [2.0, 4.0]
    p = estimate_boolean_params(c, t)
    assert p.mean_radius == pytest.approx(1.5) and p.mean_radius_sq == pytest.approx(2.5)
    assert estimate_boolean_params(c, t, radius="diameter").mean_radius == pytest.approx(3.0)


def test_boolean_params_recovered_from_simulated_discs(rng):
    pixel, n, lam = 0.1, 1000, 0.004
    side = n * pixel
    for _ in range(3):
        k = rng.poisson(lam * (side + 4) ** 2)
        centres = rng.uniform(-2, side + 2, (k, 2))
        radii = rng.uniform(1, 2, k)
        bits = np.zeros((n, n), bool)
        for (x, y), r in zip(centres, radii):
            i0, i1 = max(int((y - r) / pixel), 0), min(int((y + r) / pixel) + 2, n)
            j0, j1 = max(int((x - r) / pixel), 0), min(int((x + r) / pixel) + 2, n)
            if i1 <= i0 or j1 <= j0:
                continue
            yy, xx = np.mgrid[i0:i1, j0:j1]
            bits[i0:i1, j0:j1] |= np.hypot((xx + 0.5) * pixel - x, (yy + 0.5) * pixel - y) <= r
        t = tchm(bits, pixel=pixel)
        p = estimate_boolean_params(connected_components(t), t)
        p_true = 1 - np.exp(-lam * np.pi * 7 / 3)
        assert abs(p.area_fraction - p_true) < 0.02
        assert abs(p.mean_radius / 1.5 - 1) < 0.15


def test_boolean_params_need_patches():
    t = tchm(np.zeros((3, 3)))
    with pytest.raises(DegenerateLayerError):
        estimate_boolean_params(connected_components(t), t)


# ---------------------------------------------------------------- layer features


def _const_chm(n=20, h=12.0):
    return Chm(np.full((n, n), h), 0.5, (0.0, 0.0), disc_mask(n))


def test_layer_features_constant_chm():
    v = layer_features(_const_chm()).values.reshape(9, 4)
    assert np.all(v[0] == 1) and np.all(v[4] == 1)
    assert np.all(np.isnan(v[5:]))


def test_layer_features_slots_and_validation():
    s = simulate_plot(StandSpec(Matern2(0.2, 1.6)), 1)
    lf = layer_features(build_chm(s.cloud))
    assert lf.values.shape == (36,)
    v = lf.values.reshape(9, 4)
    assert np.all(v[0] >= 1)
    assert np.all((v[3] >= 0) & (v[3] <= 4))
    with pytest.raises(ValueError):
        layer_features(build_chm(s.cloud), pairs=((0.6, 0.8),) * 4)
    with pytest.raises(ValueError):
        LayerFeatureSet(np.zeros(35))
    assert LEVELS == (0.8, 0.6, 0.4, 0.2) and len(LAYER_PAIRS) == 4


def test_layer_kl_between_levels_orders_regular_below_clustered():
    wins = total = 0
    for s in range(20):
        r = simulate_plot(StandSpec(Matern2(0.2, 1.6)), s)
        c = simulate_plot(StandSpec(Thomas(0.02, 5, 0.7)), s)
        if build_chm(c.cloud).hmax == 0:
            continue
        kr = layer_features(build_chm(r.cloud)).values.reshape(9, 4)[8, 3]
        kc = layer_features(build_chm(c.cloud)).values.reshape(9, 4)[8, 3]
        if np.isfinite(kr) and np.isfinite(kc):
            total += 1
            wins += kc > kr
    assert wins / total > 0.5

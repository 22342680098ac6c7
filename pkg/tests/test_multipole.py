"""Expansion-based density grids against the exact quadratic-cost path."""
import math

import numpy as np
import pytest
from numpy.random import default_rng

from helpers import brute_conditional_grid
from kdesearch._backend.reference import UNDERFLOW_Q
from kdesearch.errors import ExpansionOverflowError, OutsideSupportError
from kdesearch.grids import DensityGrid, GridSpec, total_variation
from kdesearch.kernels import kde_grid, rule_of_thumb_bandwidth
from kdesearch.multiindex import n_coefficients
from kdesearch.multipole import (
    build_expansion,
    conditional_multipole_grid,
    evaluate_expansion,
    gaussian_smooth,
    multipole_grid,
)

TWO_PI = 2.0 * math.pi


def _exact_density(points, probe, sigma):
    """Direct kernel sum for an equally weighted sample, no normalization."""
    q = ((probe - points) ** 2).sum(axis=1) / sigma**2
    return float(np.exp(-0.5 * q).sum()) * TWO_PI**-1.0


def _shell_probe(rng, center, sigma):
    """A probe at a uniform radius within one bandwidth of the center."""
    theta = rng.uniform(0, 2 * np.pi)
    rad = rng.uniform(0, sigma)
    return center + rad * np.array([np.cos(theta), np.sin(theta)])


class TestBuildExpansion:
    def test_single_sample_at_center(self):
        """One sample on the center: constant coefficient 1, all others 0."""
        pt = np.array([0.3, 0.7])
        exp = build_expansion([pt], None, pt, 4, 0.2)
        assert exp.coefficients.shape == (n_coefficients(2, 4),)
        assert exp.coefficient((0, 0)) == 1.0
        assert np.all(exp.coefficients[1:] == 0.0)

    def test_symmetric_pair_cancels_odd_terms(self):
        """Samples mirrored about the center cancel odd-degree terms.

        Dyadic offsets keep the mirrored displacements exactly opposite in
        floating point; fused multiply-adds in the accumulation still leave
        rounding-level residue, so the bound is relative to the largest
        coefficient rather than exactly zero.
        """
        center = np.array([0.5, 0.5])
        v = np.array([0.0625, -0.03125])
        exp = build_expansion([center + v, center - v], None, center, 5, 0.15)
        from kdesearch.multiindex import monomial_tables

        t = monomial_tables(2, 5)
        odd = t.degrees % 2 == 1
        ceiling = 1e-15 * np.max(np.abs(exp.coefficients))
        assert np.all(np.abs(exp.coefficients[odd]) <= ceiling)
        assert np.any(np.abs(exp.coefficients[~odd]) > ceiling)

    def test_weight_linearity(self):
        """Coefficients are linear in the sample weights."""
        rng = default_rng(4)
        pts = rng.random((12, 2))
        w1 = rng.random(12)
        w2 = rng.random(12)
        center = pts.mean(axis=0)
        c1 = build_expansion(pts, w1, center, 4, 0.2).coefficients
        c2 = build_expansion(pts, w2, center, 4, 0.2).coefficients
        both = build_expansion(pts, w1 + w2, center, 4, 0.2).coefficients
        np.testing.assert_allclose(both, c1 + c2, rtol=1e-13)
        scaled = build_expansion(pts, 3.0 * w1, center, 4, 0.2).coefficients
        np.testing.assert_allclose(scaled, 3.0 * c1, rtol=1e-13)

    def test_unknown_multi_index_lookup(self):
        exp = build_expansion([[0.5, 0.5]], None, [0.5, 0.5], 2, 0.1)
        with pytest.raises(KeyError):
            exp.coefficient((3, 0))

    def test_huge_weights_overflow(self):
        """Astronomically large weights raise instead of returning inf."""
        pts = [[0.5, 0.5], [0.5, 0.5]]
        with pytest.raises(ExpansionOverflowError):
            build_expansion(pts, [1e308, 1e308], [0.5, 0.5], 2, 0.1)


class TestEvaluateExpansion:
    def test_value_at_the_center(self):
        """At the center only the constant term survives."""
        pt = np.array([0.4, 0.6])
        exp = build_expansion([pt], None, pt, 6, 0.25)
        assert np.isclose(evaluate_expansion(exp, pt), TWO_PI**-1.0, rtol=1e-14)

    def test_far_probe_is_exactly_zero(self):
        """Past the underflow radius the prefactor kills the series."""
        pt = np.array([0.5, 0.5])
        exp = build_expansion([pt], None, pt, 4, 0.01)
        assert evaluate_expansion(exp, pt + np.array([50 * 0.01, 0.0])) == 0.0

    def test_order_eight_close_probes(self):
        """Ten samples, order 8: probes within one bandwidth err below 1e-3."""
        for s in range(10):
            rng = default_rng(s)
            pts = rng.random((10, 2))
            sigma = rule_of_thumb_bandwidth(pts)
            center = pts.mean(axis=0)
            exp = build_expansion(pts, None, center, 8, sigma)
            for _ in range(10):
                probe = _shell_probe(rng, center, sigma)
                exact = _exact_density(pts, probe, sigma)
                assert abs(evaluate_expansion(exp, probe) - exact) / exact < 1e-3

    def test_error_shrinks_with_order(self):
        """Mean relative error is non-increasing along orders 0, 2, 4, 6."""
        means = {}
        for order in (0, 2, 4, 6):
            errs = []
            for s in range(100):
                rng = default_rng(s)
                pts = rng.random((10, 2))
                sigma = rule_of_thumb_bandwidth(pts)
                center = pts.mean(axis=0)
                probe = _shell_probe(rng, center, sigma)
                exact = _exact_density(pts, probe, sigma)
                approx = evaluate_expansion(build_expansion(pts, None, center, order, sigma), probe)
                errs.append(abs(approx - exact) / exact)
            means[order] = float(np.mean(errs))
        assert means[2] <= means[0]
        assert means[4] <= means[2]
        assert means[6] <= means[4]
        assert means[6] < 1e-3

    def test_order_twelve_is_near_exact(self):
        """Order 12 within one bandwidth: worst error stays near rounding.

        The worst probes sit right at the one-bandwidth shell, where the
        series tail crosses 1e-6 by a hair; the mean stays below it.
        """
        errs = []
        for s in range(20):
            rng = default_rng(s)
            pts = rng.random((10, 2))
            sigma = rule_of_thumb_bandwidth(pts)
            center = pts.mean(axis=0)
            exp = build_expansion(pts, None, center, 12, sigma)
            for _ in range(10):
                probe = _shell_probe(rng, center, sigma)
                exact = _exact_density(pts, probe, sigma)
                errs.append(abs(evaluate_expansion(exp, probe) - exact) / exact)
        assert max(errs) < 2e-6
        assert float(np.mean(errs)) < 1e-6


class TestMultipoleGrid:
    def test_single_sample_matches_exact_grid(self):
        """With one sample every expansion is exact; the grids coincide."""
        spec = GridSpec(64)
        pt = np.array([[0.37, 0.61]])
        sigma = 0.08
        approx = multipole_grid(pt, None, spec, sigma, 4, default_rng(0)).normalized()
        exact = kde_grid(pt, None, spec, sigma)
        np.testing.assert_array_equal(approx.values == 0.0, exact.values == 0.0)
        mask = exact.values > 0.0
        np.testing.assert_allclose(approx.values[mask], exact.values[mask], rtol=1e-12)

    def test_expansion_centers_are_sample_points(self):
        """Every cell's expansion center picks one of the input samples."""
        rng = default_rng(2)
        pts = rng.random((25, 2))
        grid = multipole_grid(pts, None, GridSpec(16), 0.1, 4, default_rng(3))
        assert grid.center_indices.shape == (16 * 16,)
        assert np.all(grid.center_indices >= 0)
        assert np.all(grid.center_indices < 25)

    def test_tiny_bandwidth_lights_only_sample_cells(self):
        """With sigma far below the cell width, mass appears only in cells
        whose chosen expansion center is the sample they contain."""
        spec = GridSpec(8)
        cw = spec.cell_width
        pts = np.array(
            [
                [(1 + 0.5) * cw, (1 + 0.5) * cw],
                [(2 + 0.5) * cw, (6 + 0.5) * cw],
                [(5 + 0.5) * cw, (3 + 0.5) * cw],
                [(6 + 0.5) * cw, (6 + 0.5) * cw],
            ]
        )
        grid = multipole_grid(pts, None, spec, 1e-3, 4, default_rng(0))
        sample_cells = {spec.cell_of(p) for p in pts}
        lit = {(i, j) for i, j in zip(*np.nonzero(grid.values))}
        assert lit <= sample_cells
        assert len(lit) >= 1

    def test_cost_counters(self):
        """Evaluations equal the cell count; builds stay within the samples."""
        rng = default_rng(5)
        pts = rng.random((30, 2))
        grid = multipole_grid(pts, None, GridSpec(32), 0.15, 4, default_rng(6))
        assert grid.n_expansion_evaluations == 32 * 32
        distinct = np.unique(grid.center_indices).shape[0]
        assert grid.n_expansion_builds == distinct
        assert grid.n_expansion_builds <= min(30, 32 * 32)

    def test_sparsity_bound_from_kernel_support(self):
        """Nonzero cells stay within the per-sample underflow boxes."""
        spec = GridSpec(64)
        rng = default_rng(8)
        pts = rng.random((25, 2))
        for sigma_cells in (0.05, 2.0):
            sigma = sigma_cells * spec.cell_width
            grid = multipole_grid(pts, None, spec, sigma, 4, default_rng(9))
            radius = math.sqrt(UNDERFLOW_Q) * sigma
            per_sample = (math.ceil(2 * radius / spec.cell_width) + 1) ** 2
            assert np.count_nonzero(grid.values) <= 25 * per_sample

    def test_smoothed_grid_tracks_the_exact_density(self):
        """Order-4 grids over 25 samples: smoothed TV under 0.15, and
        smoothing never hurts."""
        spec = GridSpec(64)
        for s in range(10):
            rng = default_rng(s)
            pts = rng.random((25, 2))
            sigma = rule_of_thumb_bandwidth(pts)
            exact = kde_grid(pts, None, spec, sigma)
            raw = multipole_grid(pts, None, spec, sigma, 4, default_rng(1000 + s))
            smoothed = gaussian_smooth(raw, 1.5)
            tv_raw = total_variation(DensityGrid(spec, raw.values), exact)
            tv_smooth = total_variation(smoothed, exact)
            assert tv_smooth < 0.15
            assert tv_smooth < tv_raw


class TestConditionalMultipoleGrid:
    def test_vacuous_conditioning_reduces_to_unconditional(self):
        """Constant y columns equal to the observation change nothing."""
        rng = default_rng(14)
        z = rng.random((25, 2))
        joint = np.hstack([z, np.full((25, 1), 0.4), np.full((25, 1), 0.6)])
        spec = GridSpec(64)
        sigma = 0.12
        cond = conditional_multipole_grid(joint, None, np.array([0.4, 0.6]), spec, sigma, 4, default_rng(15))
        plain = multipole_grid(z, None, spec, sigma, 4, default_rng(15)).normalized()
        assert np.max(np.abs(cond.values - plain.values)) <= 1e-9

    def test_two_blob_conditional_tracks_brute_force(self):
        """Paired z/y blobs: smoothed conditional TV under 0.15."""
        spec = GridSpec(64)
        for s in range(3):
            rng = default_rng(s)
            lab = rng.integers(0, 2, size=25)
            c = np.where(lab[:, None] == 0, 0.33, 0.67)
            joint = np.hstack(
                [c + 0.07 * rng.standard_normal((25, 1)) for _ in range(4)]
            )
            y_obs = joint[:, 2:].mean(axis=0)
            sigma = rule_of_thumb_bandwidth(joint)
            cond = conditional_multipole_grid(joint, None, y_obs, spec, sigma, 4, default_rng(2000 + s))
            smoothed = gaussian_smooth(cond, 1.5)
            oracle = brute_conditional_grid(joint, None, y_obs, spec, sigma)
            assert total_variation(smoothed, oracle) < 0.15

    def test_observation_selects_the_paired_mode(self):
        """Observing one cluster's y places nearly all z mass on its blob."""
        rng = default_rng(16)
        za = np.array([0.25, 0.25]) + 0.04 * rng.standard_normal((20, 2))
        zb = np.array([0.75, 0.75]) + 0.04 * rng.standard_normal((20, 2))
        ya = np.full((20, 2), 0.2) + 0.01 * rng.standard_normal((20, 2))
        yb = np.full((20, 2), 0.8) + 0.01 * rng.standard_normal((20, 2))
        joint = np.vstack([np.hstack([za, ya]), np.hstack([zb, yb])])
        spec = GridSpec(64)
        cond = conditional_multipole_grid(
            joint, None, np.array([0.2, 0.2]), spec, 0.05, 4, default_rng(17)
        )
        half = spec.size // 2
        assert cond.values[:half, :half].sum() >= 0.95

    def test_far_observation_raises(self):
        rng = default_rng(18)
        joint = rng.random((10, 4))
        with pytest.raises(OutsideSupportError):
            conditional_multipole_grid(
                joint, None, np.array([60.0, 60.0]), GridSpec(16), 0.05, 4, default_rng(19)
            )

    def test_weights_concentrate_the_conditional(self):
        """Zeroing one blob's weights removes its conditional mass."""
        rng = default_rng(20)
        za = np.array([0.25, 0.25]) + 0.03 * rng.standard_normal((15, 2))
        zb = np.array([0.75, 0.75]) + 0.03 * rng.standard_normal((15, 2))
        y = np.full((30, 1), 0.5)
        joint = np.hstack([np.vstack([za, zb]), y])
        w = np.concatenate([np.ones(15), np.zeros(15)])
        spec = GridSpec(32)
        cond = conditional_multipole_grid(joint, w, np.array([0.5]), spec, 0.05, 4, default_rng(21))
        half = spec.size // 2
        assert cond.values[:half, :half].sum() > 0.999


class TestGaussianSmooth:
    def test_impulse_response_is_symmetric(self):
        """A central impulse spreads symmetrically and keeps unit mass."""
        spec = GridSpec(17)
        values = np.zeros((17, 17))
        values[8, 8] = 1.0
        out = gaussian_smooth(DensityGrid(spec, values), 1.5)
        assert np.isclose(out.values.sum(), 1.0, atol=1e-9)
        assert (8, 8) == np.unravel_index(np.argmax(out.values), out.values.shape)
        np.testing.assert_allclose(out.values, out.values[::-1, :], atol=1e-15)
        np.testing.assert_allclose(out.values, out.values[:, ::-1], atol=1e-15)
        np.testing.assert_allclose(out.values, out.values.T, atol=1e-15)

    def test_uniform_grid_is_a_fixed_point(self):
        spec = GridSpec(12)
        uniform = DensityGrid(spec, np.full((12, 12), 1.0 / 144.0))
        out = gaussian_smooth(uniform, 2.0)
        np.testing.assert_allclose(out.values, uniform.values, rtol=1e-12)

    def test_zero_width_only_normalizes(self):
        spec = GridSpec(8)
        rng = default_rng(22)
        values = rng.random((8, 8))
        out = gaussian_smooth(DensityGrid(spec, values), 0.0)
        np.testing.assert_allclose(out.values, values / values.sum(), rtol=1e-12)

    def test_negative_width_rejected(self):
        spec = GridSpec(8)
        with pytest.raises(ValueError):
            gaussian_smooth(DensityGrid(spec, np.full((8, 8), 1.0)), -0.5)

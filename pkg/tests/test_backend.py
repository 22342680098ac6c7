"""Parity between the NumPy reference backend and the compiled extension."""
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from numpy.random import default_rng

from kdesearch import _backend
from kdesearch._backend import reference
from kdesearch.multiindex import monomial_tables

core = pytest.importorskip("kdesearch._backend._core")


def _random_case(seed):
    rng = default_rng(seed)
    points = rng.random((20, 2))
    weights = rng.random(20) + 0.05
    probes = rng.random((50, 2))
    centers = rng.random((6, 2))
    sigma = float(rng.uniform(0.08, 0.4))
    slots = rng.integers(0, 6, size=50).astype(np.int64)
    return points, weights, probes, centers, sigma, slots


class TestBackendParity:
    def test_kernel_sum(self):
        """Raw kernel sums agree between the two implementations."""
        for seed in range(5):
            points, weights, probes, _, sigma, _ = _random_case(seed)
            a = reference.kernel_sum(points, weights, probes, sigma)
            b = core.kernel_sum(points, weights, probes, sigma)
            np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_expansion_coefficients(self):
        """Coefficient rows agree for several centers and orders."""
        for order in (0, 2, 4, 8):
            t = monomial_tables(2, order)
            points, weights, _, centers, sigma, _ = _random_case(order)
            a = reference.expansion_coefficients(points, weights, centers, sigma, t.parents, t.pdims)
            b = core.expansion_coefficients(points, weights, centers, sigma, t.parents, t.pdims)
            np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_expansion_values(self):
        """Per-probe evaluations agree, including the clamp at zero."""
        t = monomial_tables(2, 4)
        norm = (2.0 * math.pi) ** -1.0
        for seed in range(5):
            points, weights, probes, centers, sigma, slots = _random_case(seed)
            coeffs = reference.expansion_coefficients(points, weights, centers, sigma, t.parents, t.pdims)
            a = reference.expansion_values(
                coeffs, centers, slots, probes, sigma, t.invfact, t.parents, t.pdims, norm
            )
            b = core.expansion_values(
                coeffs, centers, slots, probes, sigma, t.invfact, t.parents, t.pdims, norm
            )
            np.testing.assert_allclose(a, b, rtol=1e-12)
            assert np.all(a >= 0.0) and np.all(b >= 0.0)

    def test_conditional_coefficients(self):
        """Contracted conditional coefficients agree on four-dimensional data."""
        t = monomial_tables(2, 4)
        for seed in range(5):
            rng = default_rng(100 + seed)
            points = rng.random((24, 4))
            weights = rng.random(24) + 0.05
            centers = points[rng.integers(0, 24, size=5)]
            y_obs = points[:, 2:].mean(axis=0)
            sigma = float(rng.uniform(0.15, 0.5))
            a = reference.conditional_coefficients(
                points, weights, centers, y_obs, sigma, 4, t.parents, t.pdims, t.degrees
            )
            b = core.conditional_coefficients(
                points, weights, centers, y_obs, sigma, 4, t.parents, t.pdims, t.degrees
            )
            np.testing.assert_allclose(a, b, rtol=1e-12)


class TestBackendSelection:
    def _backend_name_with_env(self, value):
        env = dict(os.environ)
        if value is None:
            env.pop("KDESEARCH_BACKEND", None)
        else:
            env["KDESEARCH_BACKEND"] = value
        return subprocess.run(
            [sys.executable, "-c", "import kdesearch._backend as b; print(b.backend_name())"],
            capture_output=True,
            text=True,
            env=env,
        )

    def test_force_pure(self):
        """KDESEARCH_BACKEND=pure selects the reference implementation."""
        proc = self._backend_name_with_env("pure")
        assert proc.returncode == 0 and proc.stdout.strip() == "pure"

    def test_force_compiled(self):
        """KDESEARCH_BACKEND=compiled selects the extension when present."""
        proc = self._backend_name_with_env("compiled")
        assert proc.returncode == 0 and proc.stdout.strip() == "compiled"

    def test_default_prefers_compiled(self):
        """Without the variable the extension wins whenever it imports."""
        proc = self._backend_name_with_env(None)
        assert proc.returncode == 0 and proc.stdout.strip() == "compiled"

    def test_invalid_value_fails_import(self):
        """An unknown backend name aborts the import with a clear error."""
        proc = self._backend_name_with_env("fast")
        assert proc.returncode != 0
        assert "KDESEARCH_BACKEND" in proc.stderr

    def test_active_backend_reports_a_name(self):
        assert _backend.backend_name() in ("pure", "compiled")

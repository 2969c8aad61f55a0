"""Projection, Biot-Savart and vector-potential identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcs_meissner.fields import GridSpec, VectorField, curl, divergence, energy_inner, l2_inner, random_bandlimited
from bcs_meissner.helmholtz import (
    biot_savart,
    biot_savart_direct,
    helmholtz_split,
    identity_residuals,
    laplacian,
    project_longitudinal,
    project_transverse,
    vector_potential,
)
from bcs_meissner.meissner_solver import LoopSpec, loop_magnetization

SCHEMES = ["spectral", "central"]


@pytest.fixture(scope="module")
def grid():
    return GridSpec(32, 4.0)


@pytest.fixture(scope="module")
def fields(grid):
    rng = np.random.default_rng(20)
    return [random_bandlimited(grid, rng, kmax=10) for _ in range(3)]


def rel(a, b):
    return (a - b).norm() / max(b.norm(), 1e-300)


@pytest.mark.parametrize("scheme", SCHEMES)
class TestProjections:
    def test_completeness(self, fields, scheme):
        for f in fields:
            s = helmholtz_split(f, scheme)
            assert rel(s.longitudinal + s.transverse, f) < 1e-12

    def test_idempotent(self, fields, scheme):
        for f in fields:
            p = project_transverse(f, scheme)
            q = project_longitudinal(f, scheme)
            assert rel(project_transverse(p, scheme), p) < 1e-12
            assert rel(project_longitudinal(q, scheme), q) < 1e-12

    def test_orthogonal(self, fields, scheme):
        for f in fields:
            s = helmholtz_split(f, scheme)
            assert abs(l2_inner(s.longitudinal, s.transverse)) < 1e-12 * l2_inner(f, f)

    def test_transverse_is_divergence_free(self, fields, scheme):
        for f in fields:
            d = divergence(project_transverse(f, scheme), scheme)
            assert np.max(np.abs(d)) < 1e-11 * np.max(np.abs(f.data)) / f.grid.spacing

    def test_longitudinal_is_curl_free(self, fields, scheme):
        for f in fields:
            c = curl(project_longitudinal(f, scheme), scheme)
            assert c.norm() < 1e-11 * f.norm() / f.grid.spacing


@pytest.mark.parametrize("scheme", SCHEMES)
class TestBiotSavart:
    def test_curl_of_biot_savart_is_transverse_part(self, fields, scheme):
        for j in fields:
            assert rel(curl(biot_savart(j, scheme), scheme), project_transverse(j, scheme)) < 1e-12

    def test_divergence_free(self, fields, scheme):
        for j in fields:
            B = biot_savart(j, scheme)
            assert np.max(np.abs(divergence(B, scheme))) < 1e-12 * np.max(np.abs(B.data)) / j.grid.spacing

    def test_inverts_curl_on_transverse_fields(self, fields, scheme):
        for f in fields:
            t = project_transverse(f, scheme)
            assert rel(biot_savart(curl(t, scheme), scheme), t) < 1e-12

    def test_isometry(self, fields, scheme):
        for j in fields:
            B = biot_savart(j, scheme)
            t = project_transverse(j, scheme)
            assert l2_inner(B, B) == pytest.approx(energy_inner(t, t, scheme), rel=1e-12)

    def test_is_curl_of_vector_potential(self, fields, scheme):
        for j in fields:
            assert rel(curl(vector_potential(j, scheme), scheme), biot_savart(j, scheme)) < 1e-12

    def test_vector_potential_solves_poisson(self, fields, scheme):
        for j in fields:
            assert rel(-laplacian(vector_potential(j, scheme), scheme), j) < 1e-11

    def test_requires_mean_free(self, grid, scheme):
        j = VectorField.from_components(grid, np.ones(grid.shape), np.zeros(grid.shape), np.zeros(grid.shape))
        with pytest.raises(ValueError, match="mean"):
            biot_savart(j, scheme)


def test_identity_residuals_helper(fields):
    for f in fields:
        for scheme in SCHEMES:
            assert max(identity_residuals(f, scheme).values()) < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kmax=st.integers(1, 7), scheme=st.sampled_from(SCHEMES))
def test_projection_identities_property(seed, kmax, scheme):
    g = GridSpec(16, 2.0)
    f = random_bandlimited(g, np.random.default_rng(seed), kmax=kmax)
    res = identity_residuals(f, scheme)
    assert max(res.values()) < 1e-11


class TestDirectQuadrature:
    """The periodic spectral operator against the free-space Biot-Savart sum."""

    def test_loop_centre_field_free_space(self):
        g = GridSpec(64, 4.0)
        a = 0.5
        j = curl(loop_magnetization(g, LoopSpec((0.0, 0.0, 0.0), a, thickness=2 * g.spacing)), "spectral")
        B = biot_savart_direct(j, np.array([[0.0, 0.0, 0.0]]), threshold=1e-14)[0]
        # a circular line current gives I/(2a) at its centre; the smeared loop differs by O((w/a)^2)
        assert B[2] == pytest.approx(1.0 / (2 * a), rel=1e-2)
        assert abs(B[0]) < 1e-12 and abs(B[1]) < 1e-12

    def test_direct_sum_is_linear(self):
        g = GridSpec(16, 2.0)
        rng = np.random.default_rng(3)
        j1 = random_bandlimited(g, rng, kmax=3)
        j2 = random_bandlimited(g, rng, kmax=3)
        pts = rng.uniform(-0.9, 0.9, size=(4, 3))
        lhs = biot_savart_direct(j1 + j2 * 2.0, pts)
        rhs = biot_savart_direct(j1, pts) + 2.0 * biot_savart_direct(j2, pts)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)

    def test_padding_convergence(self):
        """Periodic images fade as the box grows at fixed spacing.

        Probed at the loop centre: nearer the winding the midpoint rule of the
        direct sum, not the images, sets the error.
        """
        pts = np.array([[0.0, 0.0, 0.0]])
        errors = []
        for n, box in ((32, 2.0), (64, 4.0), (128, 8.0)):
            g = GridSpec(n, box)
            j = curl(loop_magnetization(g, LoopSpec((0.0, 0.0, 0.0), 0.4, thickness=0.25)), "spectral")
            B = biot_savart(j, "spectral")
            direct = biot_savart_direct(j, pts, threshold=1e-14)
            idx = np.rint((pts - g.coords[0]) / g.spacing).astype(int)
            spectral = np.stack([B.data[:, i, k, l] for i, k, l in idx])
            errors.append(np.max(np.abs(spectral - direct)) / np.max(np.abs(direct)))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 2e-3

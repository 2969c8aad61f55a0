"""Sanity checks of the reference implementations themselves."""

import math

import numpy as np
import pytest
from scipy import integrate

import oracles


def test_self_cell_integral():
    # int over [-1/2, 1/2]^3 of 1/|r|: 48 times the integral over the corner-adjacent tetrahedron x >= y >= z >= 0
    value, err = integrate.tplquad(
        lambda z, y, x: 1.0 / math.sqrt(x * x + y * y + z * z),
        0.0, 0.5,
        lambda x: 0.0, lambda x: x,
        lambda x, y: 0.0, lambda x, y: y,
        epsabs=1e-13, epsrel=1e-13,
    )
    assert 48 * value == pytest.approx(oracles.SELF_CELL_INTEGRAL, rel=1e-10)


def test_fermion_anticommutation():
    ops = oracles.fermion_operators(3)
    eye = np.eye(8)
    for i, a in enumerate(ops):
        for k, b in enumerate(ops):
            assert np.allclose(a @ b + b @ a, 0.0)
            assert np.allclose(a @ b.T + b.T @ a, eye if i == k else 0.0)


def test_one_site_trace_free_limit():
    # gamma sqrt(r) = 0, lam = 0: independent spins, Z = (1 + e^{beta(mu+h)})(1 + e^{beta(mu-h)})
    beta, mu, h = 1.7, -0.4, 0.9
    expected = (math.log1p(math.exp(beta * (mu + h))) + math.log1p(math.exp(beta * (mu - h)))) / beta
    assert oracles.one_site_log_trace(beta, mu, 0.0, 3.0, 0.0, h) == pytest.approx(expected, rel=1e-14)


def test_hopping_matrix_spectrum():
    T = oracles.nearest_neighbor_hopping(4, 0.25)
    k = 2 * np.pi * np.arange(4) / 4
    K1, K2, K3 = np.meshgrid(k, k, k, indexing="ij")
    expected = np.sort((0.5 * (np.cos(K1) + np.cos(K2) + np.cos(K3))).ravel())
    assert np.allclose(np.linalg.eigvalsh(T), expected, atol=1e-13)


def test_bogoliubov_single_site_limit():
    # without hopping the Nambu problem factorises into copies of the one-site Hamiltonian
    beta, mu, gamma, r, h = 2.0, -0.6, 4.0, 0.1, 0.8
    res = oracles.bogoliubov_lattice(2, 0.0, beta, mu, gamma, r, h)
    g = math.sqrt(mu * mu + gamma * gamma * r)
    spin = math.sinh(beta * h) / (math.cosh(beta * h) + math.cosh(beta * g))
    pressure = oracles.one_site_log_trace(beta, mu, 0.0, gamma, r, h) - gamma * r
    assert res["spin"] == pytest.approx(spin, rel=1e-12)
    assert res["pressure"] == pytest.approx(pressure, rel=1e-12)


def test_brute_force_maximizer():
    r, v = oracles.brute_force_maximizer(lambda x: -(x - 0.3) ** 2, 0.0, 1.0, 1e-3)
    assert r == pytest.approx(0.3, abs=1e-12) and v == pytest.approx(0.0, abs=1e-12)


def test_coulomb_direct_quadratic_and_chunk_independent():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(50, 3))
    j = rng.standard_normal((50, 3))
    e1 = oracles.coulomb_energy_direct(j, pts, 0.1)
    e2 = oracles.coulomb_energy_direct(2 * j, pts, 0.1)
    assert e2 == pytest.approx(4 * e1, rel=1e-13)
    assert oracles.coulomb_energy_direct(j, pts, 0.1, chunk=7) == pytest.approx(e1, rel=1e-13)

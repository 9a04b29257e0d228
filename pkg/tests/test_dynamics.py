from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pca_ising.dynamics import (
    detailed_balance_residual,
    dynamical_balance_residual,
    expected_flips,
    flip_probabilities,
    local_update_prob,
    local_update_prob_cosh,
    log_transition_block,
    log_z_sigma,
    log_z_sigma_bruteforce,
    site_uniforms,
    stationarity_residual,
    sweep,
    transition_matrix,
    transition_prob,
    z_sigma,
)
from pca_ising.hamiltonian import KernelKind, ModelParams
from pca_ising.lattice import all_configs, build_geometry

ALL_KINDS = list(KernelKind)


def geom(kind, L=3):
    return build_geometry(L, KernelKind(kind).bc)


# --- local rule ---------------------------------------------------------------

def test_zero_effective_field_gives_one_half():
    g = build_geometry(3, "periodic")
    s = -np.ones(9)
    s[4] = 1
    p = ModelParams.from_q(0.5, 1.0)  # h = -2J = -1 cancels q
    for v in (-1, 1):
        assert local_update_prob(g, p, KernelKind.REVERSIBLE_PERIODIC, s, 4, v) == pytest.approx(0.5, abs=1e-15)


def test_all_plus_interior_probability():
    g = build_geometry(3, "periodic")
    p = ModelParams(0.8, 0.1)
    x = 2 * p.J + p.q
    want = math.exp(x) / (2 * math.cosh(x))
    assert local_update_prob(g, p, KernelKind.REVERSIBLE_PERIODIC, np.ones(9), 4, 1) == pytest.approx(want, rel=1e-15)


def test_rejects_bad_spin_value():
    with pytest.raises(ValueError):
        local_update_prob(build_geometry(3, "plus"), ModelParams(1, 0.1), KernelKind.REVERSIBLE_PLUS, np.ones(9), 0, 0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_frozen_limit_keeps_spins(kind):
    g = geom(kind)
    p = ModelParams(1.0, 0.0)
    rng = np.random.default_rng(0)
    s = rng.choice([-1, 1], size=9)
    for i in range(9):
        assert local_update_prob(g, p, kind, s, i, int(s[i])) == 1.0
    assert np.all(flip_probabilities(g, p, kind, s) == 0.0)
    assert transition_prob(g, p, kind, s, s) == 1.0


@pytest.mark.parametrize("kind", ALL_KINDS)
@given(data=st.data())
@settings(max_examples=50, deadline=None)
def test_logistic_and_cosh_forms_agree(kind, data):
    g = geom(kind)
    s = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=9, max_size=9))
    p = ModelParams(data.draw(st.floats(0, 3)), data.draw(st.floats(1e-8, 0.99)))
    i = data.draw(st.integers(0, 8))
    a = local_update_prob(g, p, kind, s, i, 1)
    b = local_update_prob(g, p, kind, s, i, -1)
    assert abs(a - local_update_prob_cosh(g, p, kind, s, i, 1)) <= 1e-14
    assert a + b == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_local_rule_matches_oracle(kind):
    g = geom(kind)
    p = ModelParams(0.6, 0.2)
    rng = np.random.default_rng(1)
    for s in rng.choice([-1, 1], size=(10, 9)):
        want = oracles.local_probs(s, 3, p.J, p.q, kind.value)
        got = [local_update_prob(g, p, kind, s, i, 1) for i in range(9)]
        np.testing.assert_allclose(got, want, rtol=1e-13)


# --- kernel rows -----------------------------------------------------------------

@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("J,delta", [(0.5, 0.1), (2.5, 1e-3)])
def test_rows_stochastic_and_forms_agree(kind, J, delta):
    g = geom(kind)
    p = ModelParams(J, delta)
    P = transition_matrix(g, p, kind, "product")
    B = transition_matrix(g, p, kind, "boltzmann")
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.abs(P - B).max() <= 1e-12
    big = P > 1e-300
    assert np.abs(P[big] - B[big]).max() <= 1e-12


def test_l2_plus_rows_stochastic():
    g = build_geometry(2, "plus")
    P = transition_matrix(g, ModelParams(1.0, 0.2), KernelKind.REVERSIBLE_PLUS)
    assert P.shape == (16, 16)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-14)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_transition_prob_forms_on_random_pairs(kind):
    g = geom(kind)
    p = ModelParams(1.1, 0.05)
    rng = np.random.default_rng(5)
    for s, t in rng.choice([-1, 1], size=(20, 2, 9)):
        a = transition_prob(g, p, kind, s, t, "product")
        b = transition_prob(g, p, kind, s, t, "boltzmann")
        assert a == pytest.approx(b, rel=1e-12)
        want = oracles.product(
            pp if ti == 1 else 1 - pp for pp, ti in zip(oracles.local_probs(s, 3, p.J, p.q, kind.value), t)
        )
        assert a == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValueError):
        transition_prob(g, p, kind, s, t, "other")


def test_frozen_kernel_is_identity():
    g = build_geometry(3, "plus")
    P = transition_matrix(g, ModelParams(1.0, 0.0), KernelKind.REVERSIBLE_PLUS)
    assert np.array_equal(P, np.eye(512))


def test_kernel_refuses_large_boxes():
    with pytest.raises(ValueError):
        transition_matrix(build_geometry(4, "plus"), ModelParams(1, 0.1), KernelKind.REVERSIBLE_PLUS)


# --- normalisers -------------------------------------------------------------

def test_all_plus_periodic_normaliser():
    g = build_geometry(3, "periodic")
    p = ModelParams(0.7, 0.02)
    want = math.exp(18 * p.J) * (1 + p.delta * math.exp(-4 * p.J)) ** 9
    assert z_sigma(g, p, KernelKind.REVERSIBLE_PERIODIC, np.ones(9)) == pytest.approx(want, rel=1e-13)
    assert math.exp(oracles.log_row_sum([1] * 9, 3, p.J, p.q, "rev-periodic")) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_normaliser_matches_oracle_enumeration(kind):
    g = geom(kind)
    p = ModelParams(0.9, 0.1)
    rng = np.random.default_rng(11)
    for s in rng.choice([-1, 1], size=(4, 9)):
        want = oracles.log_row_sum(s, 3, p.J, p.q, kind.value)
        assert log_z_sigma(g, p, kind, s) == pytest.approx(want, rel=1e-12)


def test_l2_plus_normaliser_all_configs():
    g = build_geometry(2, "plus")
    p = ModelParams(1.3, 0.3)
    S = all_configs(4)
    closed = log_z_sigma(g, p, KernelKind.REVERSIBLE_PLUS, S)
    np.testing.assert_allclose(closed, log_z_sigma_bruteforce(g, p, KernelKind.REVERSIBLE_PLUS, S), rtol=1e-13)
    for s in S[::5]:
        assert closed[int(np.flatnonzero(np.all(S == s, axis=1))[0])] == pytest.approx(
            oracles.log_row_sum(s, 2, p.J, p.q, "rev-plus"), rel=1e-13
        )


def test_z_sigma_overflow_signalled():
    g = build_geometry(3, "periodic")
    with pytest.raises(OverflowError):
        z_sigma(g, ModelParams(100.0, 0.1), KernelKind.REVERSIBLE_PERIODIC, np.ones(9))


# --- sweeps -------------------------------------------------------------------------

def test_site_uniforms_are_a_function_of_site():
    full = site_uniforms(42, 7, 0, 37)
    parts = np.concatenate([site_uniforms(42, 7, a, b) for a, b in [(0, 5), (5, 6), (6, 22), (22, 37)]])
    assert np.array_equal(full, parts)
    assert not np.array_equal(full, site_uniforms(42, 8, 0, 37))
    assert not np.array_equal(full, site_uniforms(43, 7, 0, 37))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_frozen_sweep_is_identity(kind):
    g = geom(kind, 8)
    s = np.random.default_rng(0).choice(np.array([-1, 1], dtype=np.int8), size=64)
    assert np.array_equal(sweep(g, ModelParams(0.3, 0.0), kind, s, seed=1), s)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_sweep_deterministic_and_worker_invariant(kind):
    g = geom(kind, 33)
    p = ModelParams(0.3, 0.4)
    s = np.random.default_rng(2).choice(np.array([-1, 1], dtype=np.int8), size=g.n_sites)
    ref = sweep(g, p, kind, s, seed=9, sweep_index=3)
    for w in (1, 2, 3, 8):
        assert np.array_equal(sweep(g, p, kind, s, seed=9, sweep_index=3, workers=w), ref)
    assert not np.array_equal(sweep(g, p, kind, s, seed=9, sweep_index=4), ref)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_sweep_reads_frozen_input(kind):
    # every site must use the flip probability of the input configuration,
    # never one of already-updated neighbours
    g = geom(kind, 12)
    p = ModelParams(0.9, 0.6)
    s = np.random.default_rng(6).choice(np.array([-1, 1], dtype=np.int8), size=g.n_sites)
    for t in range(5):
        u = site_uniforms(77, t, 0, g.n_sites)
        want = np.where(u < flip_probabilities(g, p, kind, s), -s, s)
        assert np.array_equal(sweep(g, p, kind, s, seed=77, sweep_index=t, workers=3), want)


def test_empirical_update_frequencies_binomial():
    g = build_geometry(3, "periodic")
    kind = KernelKind.REVERSIBLE_PERIODIC
    p = ModelParams(0.4, 0.3)
    s = np.array([1, -1, 1, 1, 1, -1, -1, 1, 1], dtype=np.int8)
    n = 10**6
    ups = np.zeros(9, dtype=np.int64)
    nflips = 0
    out = np.empty_like(s)
    for t in range(n):
        tau = sweep(g, p, kind, s, seed=2024, sweep_index=t, out=out)
        ups += tau > 0
        nflips += np.count_nonzero(tau != s)
    probs = np.array([local_update_prob(g, p, kind, s, i, 1) for i in range(9)])
    se = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(ups / n - probs) <= 4 * se)
    q = flip_probabilities(g, p, kind, s)
    assert abs(nflips / n - expected_flips(g, p, kind, s)) <= 4 * math.sqrt((q * (1 - q)).sum() / n)


# --- balance and stationarity ------------------------------------------------------

@pytest.mark.parametrize("kind,J,delta", [
    (KernelKind.REVERSIBLE_PERIODIC, 1.0, 0.1),
    (KernelKind.REVERSIBLE_PLUS, 1.0, 0.1),
    (KernelKind.REVERSIBLE_PLUS, 2.5, 1e-3),
])
def test_detailed_balance_reversible(kind, J, delta):
    res, _ = detailed_balance_residual(geom(kind), ModelParams(J, delta), kind)
    assert res <= 1e-12


def test_detailed_balance_l2_plus():
    res, _ = detailed_balance_residual(build_geometry(2, "plus"), ModelParams(0.7, 0.2), KernelKind.REVERSIBLE_PLUS)
    assert res <= 1e-12


def test_irreversible_witness_pair():
    g = build_geometry(3, "periodic")
    p = ModelParams(1.0, 0.1)
    res, (a, b) = detailed_balance_residual(g, p, KernelKind.IRREVERSIBLE_PERIODIC)
    assert res > 1e-6
    P = transition_matrix(g, p, KernelKind.IRREVERSIBLE_PERIODIC)
    assert P[a, b] != pytest.approx(P[b, a])


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_subset_balance_matches_full(kind):
    g = geom(kind)
    p = ModelParams(0.8, 0.2)
    full, _ = detailed_balance_residual(g, p, kind)
    sub, _ = detailed_balance_residual(g, p, kind, subset=np.arange(512))
    assert sub == pytest.approx(full, rel=1e-9, abs=1e-20)
    assert stationarity_residual(g, p, kind, subset=np.arange(512)) == pytest.approx(
        stationarity_residual(g, p, kind), abs=1e-15
    )


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("J,delta", [(0.5, 0.1), (2.5, 1e-3)])
def test_stationarity(kind, J, delta):
    assert stationarity_residual(geom(kind), ModelParams(J, delta), kind) <= 1e-10


@pytest.mark.parametrize("J,delta", [(0.7, 0.05), (2.5, 1e-3)])
def test_dynamical_balance_every_configuration(J, delta):
    res = dynamical_balance_residual(build_geometry(3, "periodic"), ModelParams(J, delta))
    assert res.shape == (512,)
    assert res.max() <= 1e-12


def test_dynamical_balance_all_plus():
    assert dynamical_balance_residual(build_geometry(3, "periodic"), ModelParams(1.0, 0.3), np.ones(9)) <= 1e-14


def test_dynamical_balance_product_form_matches_oracle():
    g = build_geometry(3, "periodic")
    p = ModelParams(0.7, 0.05)
    rng = np.random.default_rng(4)
    for s in rng.choice([-1, 1], size=(3, 9)):
        row = oracles.log_row_sum(s, 3, p.J, p.q, "irrev-periodic")
        col_terms = [-oracles.pair_energy(t, s, 3, p.J, p.q, "irrev-periodic") for t in oracles.configs(9)]
        col = math.log(sum(math.exp(v) for v in col_terms))
        assert row == pytest.approx(col, rel=1e-12)
        fwd = p.J * (s[g.nbr[:, 0]] + s[g.nbr[:, 1]]) + p.q * s
        assert np.log(2 * np.cosh(fwd)).sum() == pytest.approx(col, rel=1e-12)


def test_dynamical_balance_large_box_product_form():
    g = build_geometry(6, "periodic")
    S = np.random.default_rng(8).choice([-1, 1], size=(50, 36))
    assert dynamical_balance_residual(g, ModelParams(0.7, 0.05), S).max() <= 1e-12


def test_log_transition_block_shape():
    g = build_geometry(3, "plus")
    S = all_configs(9)
    out = log_transition_block(g, ModelParams(1, 0.1), KernelKind.REVERSIBLE_PLUS, S[:5], S[:7])
    assert out.shape == (5, 7) and np.all(out <= 0)

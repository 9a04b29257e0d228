from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pca_ising.hamiltonian import (
    KernelKind,
    ModelParams,
    boundary_term,
    check_kind,
    decomposition_check,
    energy_pair,
    energy_pair_irreversible_right,
    energy_single,
    f_factor,
    kind_for,
    local_field,
    local_fields,
    log_f_factor,
    phi,
    phis,
    pair_energy_matrix,
)
from pca_ising.lattice import all_configs, build_geometry

ALL_KINDS = list(KernelKind)
REVERSIBLE = [KernelKind.REVERSIBLE_PLUS, KernelKind.REVERSIBLE_PERIODIC]


def geom(kind, L=3):
    return build_geometry(L, KernelKind(kind).bc)


def spins(n):
    return st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n)


# --- parameters -----------------------------------------------------------

@given(st.floats(min_value=1e-3, max_value=20.0))
def test_delta_recomputed_from_q(q):
    p = ModelParams.from_q(1.0, q)
    assert abs(math.exp(-2 * p.q) - p.delta) <= 1e-15 * p.delta
    assert abs(p.q - q) <= 1e-12 * q


@pytest.mark.parametrize("J,delta", [(-0.1, 0.1), (1.0, 1.0), (1.0, -0.1), (float("nan"), 0.1)])
def test_invalid_params_rejected(J, delta):
    with pytest.raises(ValueError):
        ModelParams(J, delta)


def test_frozen_sentinel():
    p = ModelParams(1.0, 0.0)
    assert p.q == math.inf and p.log_delta == -math.inf
    with pytest.raises(ValueError):
        ModelParams.from_q(1.0, 0.0)


def test_kind_geometry_pairing():
    assert kind_for("plus") is KernelKind.REVERSIBLE_PLUS
    assert kind_for("periodic", reversible=False) is KernelKind.IRREVERSIBLE_PERIODIC
    with pytest.raises(ValueError):
        kind_for("plus", reversible=False)
    with pytest.raises(ValueError):
        check_kind(build_geometry(3, "plus"), KernelKind.IRREVERSIBLE_PERIODIC)
    with pytest.raises(ValueError):
        energy_pair(build_geometry(3, "periodic"), ModelParams(1, 0.1), KernelKind.REVERSIBLE_PLUS, [1] * 9, [1] * 9)


# --- single-configuration energy -------------------------------------------

def test_energy_examples():
    per, plus = build_geometry(3, "periodic"), build_geometry(3, "plus")
    ones = np.ones(9)
    assert energy_single(per, 1.0, ones) == -18
    assert energy_single(plus, 1.0, ones) == -24
    one_flip = ones.copy()
    one_flip[4] = -1
    assert energy_single(per, 1.0, one_flip) == -18 + 8


@pytest.mark.parametrize("L,bc", [(2, "plus"), (3, "plus"), (4, "plus"), (3, "periodic"), (4, "periodic")])
def test_energy_matches_coordinate_oracle(L, bc):
    g = build_geometry(L, bc)
    rng = np.random.default_rng(L)
    S = rng.choice([-1, 1], size=(20, L * L))
    got = energy_single(g, 0.7, S)
    want = [oracles.energy(s, L, 0.7, bc == "periodic") for s in S]
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


# --- pair energies -----------------------------------------------------------

@pytest.mark.parametrize("kind", ALL_KINDS)
def test_pair_energy_forms_match_oracle(kind):
    g = geom(kind)
    p = ModelParams(0.9, 0.2)
    rng = np.random.default_rng(7)
    S = rng.choice([-1, 1], size=(12, 9))
    T = rng.choice([-1, 1], size=(12, 9))
    M = pair_energy_matrix(g, p, kind, S, T)
    for a in range(12):
        for b in range(12):
            want = oracles.pair_energy(S[a], T[b], 3, p.J, p.q, kind.value)
            assert M[a, b] == pytest.approx(want, abs=1e-12)
            assert energy_pair(g, p, kind, S[a], T[b]) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("kind", REVERSIBLE)
def test_pair_energy_diagonal_is_single_energy(kind):
    g = geom(kind)
    S = all_configs(9)
    p = ModelParams(1.3, 0.05)
    diag = np.diag(pair_energy_matrix(g, p, kind, S, S))
    np.testing.assert_allclose(diag, energy_single(g, p.J, S), atol=1e-12)


def test_irreversible_diagonal_is_shifted():
    g = build_geometry(3, "periodic")
    S = all_configs(9)
    p = ModelParams(1.3, 0.05)
    diag = np.diag(pair_energy_matrix(g, p, KernelKind.IRREVERSIBLE_PERIODIC, S, S))
    np.testing.assert_allclose(diag, energy_single(g, p.J, S) - p.q * 9, atol=1e-12)


@pytest.mark.parametrize("kind", REVERSIBLE)
@given(data=st.data())
@settings(max_examples=40, deadline=None)
def test_reversible_pair_energy_symmetric(kind, data):
    g = geom(kind)
    s, t = data.draw(spins(9)), data.draw(spins(9))
    p = ModelParams(data.draw(st.floats(0, 3)), data.draw(st.floats(1e-6, 0.9)))
    assert energy_pair(g, p, kind, s, t) == pytest.approx(energy_pair(g, p, kind, t, s), abs=1e-12)


def test_irreversible_pair_energy_has_asymmetric_witness():
    g = build_geometry(3, "periodic")
    S = all_configs(9)
    M = pair_energy_matrix(g, ModelParams(1.0, 0.1), KernelKind.IRREVERSIBLE_PERIODIC, S, S)
    assert np.abs(M - M.T).max() > 0.5


@pytest.mark.parametrize("kind", ALL_KINDS)
@given(data=st.data())
@settings(max_examples=40, deadline=None)
def test_single_tau_flip_changes_energy_by_lattice_steps(kind, data):
    g = geom(kind)
    s, t = np.array(data.draw(spins(9))), np.array(data.draw(spins(9)))
    i = data.draw(st.integers(0, 8))
    J = data.draw(st.floats(0.1, 3))
    q = data.draw(st.floats(0.1, 5))
    p = ModelParams.from_q(J, q)
    t2 = t.copy()
    t2[i] = -t2[i]
    dH = energy_pair(g, p, kind, s, t2) - energy_pair(g, p, kind, s, t)
    dq = 2 * q if t[i] == s[i] else -2 * q
    steps = (dH - dq) / J
    assert steps == pytest.approx(round(steps), abs=1e-9)


def test_pair_energy_survives_frozen_limit():
    g = build_geometry(3, "plus")
    p = ModelParams(1.0, 0.0)
    ones = np.ones(9)
    assert energy_pair(g, p, KernelKind.REVERSIBLE_PLUS, ones, ones) == -24
    flipped = ones.copy()
    flipped[0] = -1
    assert energy_pair(g, p, KernelKind.REVERSIBLE_PLUS, ones, flipped) == math.inf
    with pytest.raises(ValueError):
        pair_energy_matrix(g, p, KernelKind.REVERSIBLE_PLUS, ones, ones)


# --- fields and the field form of the pair energy ---------------------------

def test_local_field_examples():
    J = 0.8
    ones = np.ones(9)
    assert local_field(build_geometry(3, "periodic"), J, KernelKind.REVERSIBLE_PERIODIC, ones, 4) == pytest.approx(2 * J)
    assert local_field(build_geometry(3, "plus"), J, KernelKind.REVERSIBLE_PLUS, ones, 0) == pytest.approx(2 * J)
    h = local_fields(build_geometry(3, "periodic"), J, KernelKind.IRREVERSIBLE_PERIODIC, ones)
    np.testing.assert_allclose(h, 2 * J)


def test_irreversible_field_reads_down_and_left():
    g = build_geometry(3, "periodic")
    s = np.ones(9)
    s[g.site(1, 0)] = -1  # below (0, 0)
    h = local_fields(g, 1.0, KernelKind.IRREVERSIBLE_PERIODIC, s)
    assert h[g.site(0, 0)] == 0.0
    assert h[g.site(1, 1)] == 0.0  # (1, 0) is left of (1, 1)
    assert h[g.site(2, 0)] == 2.0  # (1, 0) is above (2, 0): not read


@pytest.mark.parametrize("kind", REVERSIBLE)
def test_field_sum_plus_boundary_is_minus_energy(kind):
    g = geom(kind)
    S = all_configs(9)
    J = 1.7
    lhs = (local_fields(g, J, kind, S) * S).sum(axis=1) + boundary_term(g, J, kind, S)
    np.testing.assert_allclose(lhs, -energy_single(g, J, S), atol=1e-12)


@pytest.mark.parametrize("kind", ALL_KINDS)
@given(data=st.data())
@settings(max_examples=30, deadline=None)
def test_field_form_of_pair_energy(kind, data):
    g = geom(kind)
    s, t = data.draw(spins(9)), data.draw(spins(9))
    p = ModelParams(data.draw(st.floats(0, 3)), data.draw(st.floats(1e-6, 0.9)))
    H = energy_pair(g, p, kind, s, t)
    assert decomposition_check(g, p, kind, s, t) <= 1e-12 * max(1.0, abs(H))


def test_irreversible_written_forms_agree():
    g = build_geometry(3, "periodic")
    p = ModelParams(1.1, 0.3)
    rng = np.random.default_rng(3)
    for _ in range(50):
        s, t = rng.choice([-1, 1], size=(2, 9))
        assert energy_pair(g, p, KernelKind.IRREVERSIBLE_PERIODIC, s, t) == pytest.approx(
            energy_pair_irreversible_right(g, p, s, t), abs=1e-12
        )


def test_decomposition_all_plus_vanishes():
    # zero in exact arithmetic; q = -log(delta)/2 carries one rounding
    for kind in ALL_KINDS:
        ones = np.ones(9)
        assert decomposition_check(geom(kind), ModelParams(2.0, 0.01), kind, ones, ones) <= 1e-13


# --- flip weights ---------------------------------------------------------------

def test_phi_examples():
    J = 0.9
    ones = np.ones(9)
    per = build_geometry(3, "periodic")
    assert phi(per, J, KernelKind.REVERSIBLE_PERIODIC, ones, 4) == pytest.approx(math.exp(-4 * J))
    centre_flip = ones.copy()
    centre_flip[4] = -1
    assert phi(per, J, KernelKind.REVERSIBLE_PERIODIC, centre_flip, 4) == pytest.approx(math.exp(4 * J))
    np.testing.assert_allclose(phis(per, J, KernelKind.IRREVERSIBLE_PERIODIC, ones), math.exp(-4 * J))


def test_f_factor_all_plus_periodic():
    g = build_geometry(3, "periodic")
    p = ModelParams(1.2, 0.07)
    assert f_factor(g, p, KernelKind.REVERSIBLE_PERIODIC, np.ones(9)) == pytest.approx(
        (1 + p.delta * math.exp(-4 * p.J)) ** 9, rel=1e-14
    )


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_f_factor_matches_oracle_product(kind):
    g = geom(kind)
    p = ModelParams(1.0, 0.04)
    s = np.ones(9)
    s[4] = -1
    # P(flip) = delta phi / (1 + delta phi), so 1 + delta phi = 1 / P(keep)
    keep = [pp if si == 1 else 1 - pp for pp, si in zip(oracles.local_probs(s, 3, p.J, p.q, kind.value), s)]
    want = oracles.product(1 / k for k in keep)
    assert f_factor(g, p, kind, s) == pytest.approx(want, rel=1e-12)
    assert log_f_factor(g, p, kind, s) == pytest.approx(math.log(want), rel=1e-12)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_f_factor_is_one_when_frozen(kind):
    S = all_configs(9)
    assert np.all(f_factor(geom(kind), ModelParams(2.0, 0.0), kind, S) == 1.0)


def test_f_factor_overflow_signalled():
    g = build_geometry(4, "periodic")
    s = np.array([(-1) ** (r + c) for r in range(4) for c in range(4)])  # checkerboard
    p = ModelParams(200.0, 0.5)
    with pytest.raises(OverflowError):
        f_factor(g, p, KernelKind.REVERSIBLE_PERIODIC, s)
    assert log_f_factor(g, p, KernelKind.REVERSIBLE_PERIODIC, s) == pytest.approx(16 * (800 + math.log(0.5)), rel=1e-12)

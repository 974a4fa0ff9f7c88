import cmath
import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from jjlqubit import characters as ch
from jjlqubit.characters import (
    AA0, AA1, ALL_IDS, AP0, AP1, H0, H_HALF, H_TWIST, PA0, PA1, PP_ALPHA, PP_BETA,
    PP_GAMMA, REGISTRY, ChargedIndex, CharacterId, CoincidentPositions, IsingLabel, Sector,
    all_anchors, c32_block, charged_char, ising_char, jacobi_theta, registry_from_json,
    registry_to_json, tm_character, wavefunction)
from jjlqubit.modular import EXTENDED, dedekind_eta, theta1_prime, working_precision

taus = st.builds(complex, st.floats(-0.5, 0.5), st.floats(0.8, 2.0))
wcs = st.builds(complex, st.floats(-1, 1), st.floats(-0.2, 0.2))


def chi(h, w, tau, barred=False):
    return ising_char(IsingLabel(h, barred), w, tau)


def rand_points(rng, n):
    return [(complex(rng.uniform(-1, 1), rng.uniform(-0.2, 0.2)),
             complex(rng.uniform(-0.5, 0.5), rng.uniform(0.8, 2.0))) for _ in range(n)]


# ---------------------------------------------------------------- labels

def test_label_validation():
    with pytest.raises(ValueError):
        IsingLabel(Fraction(1, 8))
    with pytest.raises(ValueError):
        ChargedIndex(4)
    assert ChargedIndex(3).shifted().l == 0
    with pytest.raises(ValueError):
        CharacterId(Sector.AP, "alpha")
    assert [c.sector.twisted for c in ALL_IDS] == [True] * 4 + [False] * 5
    assert len(set(ALL_IDS)) == 9


def test_character_id_parse_roundtrip():
    for cid in ALL_IDS:
        assert CharacterId.parse(cid.name) == cid


# ---------------------------------------------------------------- Ising

def _fermion_products(order):
    """Integer coefficients (in x = q^(1/2)) of prod (1 + x^(2n-1)) and prod (1 - x^(2n-1))."""
    plus = np.zeros(2 * order + 1, dtype=object)
    minus = np.zeros(2 * order + 1, dtype=object)
    plus[0] = minus[0] = 1
    for n in range(1, order + 1):
        e = 2 * n - 1
        if e > 2 * order:
            break
        p_new, m_new = plus.copy(), minus.copy()
        p_new[e:] += plus[:-e]
        m_new[e:] -= minus[:-e]
        plus, minus = p_new, m_new
    return plus, minus


def test_vacuum_q_series_oracle():
    """chi_0 q^(1/48) through q^10 vs the free-fermion product expansion."""
    order = 10
    plus, minus = _fermion_products(order)
    oracle = [(plus[2 * k] + minus[2 * k]) // 2 for k in range(order + 1)]
    # odd powers of x cancel in the average
    assert all((plus[2 * k + 1] + minus[2 * k + 1]) == 0 for k in range(order))
    r, n = 0.2, 64
    samples = []
    for j in range(n):
        q = r * cmath.exp(2j * math.pi * j / n)
        tau = cmath.log(q) / (2j * math.pi)
        samples.append(chi(H0, 0, tau) * cmath.exp(2j * math.pi * tau / 48))
    coeffs = np.fft.fft(samples) / n
    got = [coeffs[k] / r ** k for k in range(order + 1)]
    for k in range(order + 1):
        assert abs(got[k] - oracle[k]) < 1e-6, (k, got[k], oracle[k])
    assert oracle[:6] == [1, 0, 1, 1, 2, 2]


def test_leading_exponents():
    tau = 3j
    q = math.exp(-6 * math.pi)
    assert abs(chi(H0, 0, tau) * q ** (1 / 48) - 1) < 1e-7
    assert abs(chi(H_HALF, 0, tau) * q ** (1 / 48 - 1 / 2) - 1) < 1e-7
    assert abs(chi(H_TWIST, 0, tau) * q ** (1 / 48 - 1 / 16) - 1) < 1e-7


def test_twist_character_odd_under_shift_two(rng):
    for _, tau in rand_points(rng, 10):
        a, b = chi(H_TWIST, 2, tau), chi(H_TWIST, 0, tau)
        assert abs(a + b) < 1e-8 * abs(b)
        for h in (H0, H_HALF):
            a, b = chi(h, 2, tau), chi(h, 0, tau)
            assert abs(a - b) < 1e-8 * abs(b)


def test_ising_combinations_square_to_theta(rng):
    for w, tau in rand_points(rng, 5):
        eta = dedekind_eta(tau)
        s = chi(H0, w, tau) + chi(H_HALF, w, tau)
        d = chi(H0, w, tau) - chi(H_HALF, w, tau)
        t = chi(H_TWIST, w, tau)
        assert abs(s * s - jacobi_theta(3, w, tau) / eta) < 1e-10 * abs(s * s)
        assert abs(d * d - jacobi_theta(4, w, tau) / eta) < 1e-10 * abs(d * d)
        assert abs(2 * t * t - jacobi_theta(2, w, tau) / eta) < 1e-10 * abs(t * t)


@given(w=wcs, tau=taus, h=st.sampled_from([H0, H_HALF, H_TWIST]))
def test_barred_equals_unbarred(w, tau, h):
    assert chi(h, w, tau, True) == chi(h, w, tau, False)


# ---------------------------------------------------------------- charged

def test_k_periodicity(rng):
    for w, tau in rand_points(rng, 20):
        for l in range(4):
            a, b = charged_char(l, w + 2, tau), charged_char(l, w, tau)
            assert abs(a - b) < 1e-10 * abs(b)


def test_k0_wide_window_oracle():
    with mpmath.workdps(30):
        s = mpmath.fsum(mpmath.exp(-4 * mpmath.pi * n * n) for n in range(-50, 51))
        eta = mpmath.gamma(mpmath.mpf(1) / 4) / (2 * mpmath.pi ** (mpmath.mpf(3) / 4))
        ref = complex(s / eta)
    assert abs(charged_char(0, 0, 1j) - ref) < 1e-15


GOLDEN_K = {
    # l: (K_{l+2 mod 4}(0.3+0.1i | 0.2+1.1i), K_l(1.3+0.1i | 0.2+1.1i))
    0: (0.003029637211057194 - 0.062103368555948994j, 1.3323776024771354 - 0.06856438393399131j),
    1: (0.5155980461978625 - 0.5718486288976227j, -0.20518084079566495 - 0.35447031898352116j),
    2: (1.3323776024771354 - 0.06856438393399131j, 0.0030296372110572146 - 0.062103368555948994j),
    3: (0.2051808407956649 + 0.35447031898352116j, -0.5155980461978626 + 0.5718486288976227j),
}


@pytest.mark.parametrize("l", range(4))
def test_k_golden_values(l):
    a, b = GOLDEN_K[l]
    assert abs(charged_char((l + 2) % 4, 0.3 + 0.1j, 0.2 + 1.1j) - a) < 1e-13
    assert abs(charged_char(l, 1.3 + 0.1j, 0.2 + 1.1j) - b) < 1e-13


# ---------------------------------------------------------------- c = 3/2 blocks

def test_c32_j0_assembled():
    w, tau = 0, 2j
    ref = chi(H0, 0, tau) * charged_char(0, w, tau) + chi(H_HALF, 0, tau) * charged_char(2, w, tau)
    assert abs(c32_block(0, w, tau) - ref) < 1e-15 * abs(ref)


def test_c32_j1_nonvanishing(rng):
    vals = [abs(c32_block(1, w, tau)) for w, tau in rand_points(rng, 10)]
    assert min(vals) > 1e-3


def test_c32_sum_rule(rng):
    for w, tau in rand_points(rng, 8):
        lhs = c32_block(0, w, tau) + c32_block(2, w, tau)
        rhs = (chi(H0, 0, tau) + chi(H_HALF, 0, tau)) * (charged_char(0, w, tau) + charged_char(2, w, tau))
        assert abs(lhs - rhs) < 1e-12 * abs(rhs)
    with pytest.raises(ValueError):
        c32_block(3, 0, 1j)


# ---------------------------------------------------------------- sector characters

def test_ap0_assembly(rng):
    for w, tau in rand_points(rng, 5):
        ref = chi(H_TWIST, 0, tau, True) * (chi(H0, 0, tau) + chi(H_HALF, 0, tau)) \
            * (charged_char(0, w, tau) + charged_char(2, w, tau))
        assert abs(tm_character(AP0, 0, w, tau) - ref) < 1e-12 * abs(ref)


def test_alpha_plus_beta_expansion():
    """Four-product-term expansion of alpha + beta at w_c = 0."""
    tau = 1.2j
    c0, ch_ = chi(H0, 0, tau), chi(H_HALF, 0, tau)
    K0, K2 = charged_char(0, 0, tau), charged_char(2, 0, tau)
    got = tm_character(PP_ALPHA, 0, 0, tau) + tm_character(PP_BETA, 0, 0, tau)
    # 1/2 (a-b)^2 (K0-K2) + 1/2 (a+b)^2 (K0+K2): the cross terms survive only on K2
    expl = (c0 * c0 + ch_ * ch_) * K0 + (c0 * ch_ + ch_ * c0) * K2
    assert abs(got - expl) < 1e-13 * abs(expl)
    # the grouping (diag)(K0+K2) + (cross)(K0-K2) is a different function
    other = (c0 * c0 + ch_ * ch_) * (K0 + K2) + (c0 * ch_ + ch_ * c0) * (K0 - K2)
    assert abs(got - other) > 1e-3 * abs(got)


@pytest.mark.parametrize("cid", ALL_IDS, ids=str)
def test_k_periodicity_all_blocks(cid, rng):
    for w, tau in rand_points(rng, 4):
        a, b = tm_character(cid, 0.1, w + 2, tau), tm_character(cid, 0.1, w, tau)
        assert abs(a - b) < 1e-9 * max(abs(b), 1e-12)


@pytest.mark.parametrize("cid", ALL_IDS, ids=str)
def test_paired_transport_sign(cid, rng):
    expected = -1 if cid.sector.twisted else 1
    if cid == PP_GAMMA:
        expected = 1  # two twist fields
    for w, tau in rand_points(rng, 3):
        a, b = tm_character(cid, 2, w + 2, tau), tm_character(cid, 0, w, tau)
        assert abs(a - expected * b) < 1e-8 * abs(b)


def test_positivity_on_imaginary_axis():
    for t in (1.0, 1.5, 2.0, 3.0):
        for cid in ALL_IDS:
            v = tm_character(cid, 0, 0, 1j * t)
            assert v.real > 0 and abs(v.imag) < 1e-12 * v.real, (cid, t, v)


def test_aa1_variant_differs():
    tau, w = 1.1j, 0.2
    a = tm_character(AA1, 0, w, tau)
    b = tm_character(ch.AA1_MINUS_VARIANT, 0, w, tau)
    assert abs(a - b) > 1e-3


def test_extended_matches_double(rng):
    for w, tau in rand_points(rng, 2):
        d = tm_character(AP1, 0.3, w, tau)
        with working_precision(EXTENDED):
            e = tm_character(AP1, 0.3, w, tau, EXTENDED)
        assert abs(complex(e) - d) < 1e-12 * abs(d)


# ---------------------------------------------------------------- registry

def test_registry_roundtrip():
    text = registry_to_json()
    back = registry_from_json(text)
    assert back == REGISTRY
    doc = json.loads(text)
    assert len(doc["characters"]) == 9
    assert {r["sector"] for r in doc["characters"]} == {"A-P", "A-A", "P-A", "P-P"}


def test_registry_missing_id():
    doc = json.loads(registry_to_json())
    doc["characters"] = doc["characters"][1:]
    with pytest.raises(ValueError):
        registry_from_json(json.dumps(doc))


def test_registry_rejects_bad_weight():
    doc = json.loads(registry_to_json())
    doc["characters"][0]["terms"][0][1] = "1/8"
    with pytest.raises(ValueError):
        registry_from_json(json.dumps(doc))


def test_anchors_unique_and_descriptive():
    anchors = [e.anchor for e in REGISTRY.values()]
    assert len(set(anchors)) == 9
    assert set(anchors) <= all_anchors()
    assert len(all_anchors()) == 9 + len(ch.IDENTITY_ANCHORS) + 1


# ---------------------------------------------------------------- wavefunction

def test_wavefunction_swap():
    tau = 0.1 + 1.2j
    pos = [0.1 + 0.2j, 0.45 - 0.1j, 0.7 + 0.5j]
    a = wavefunction(pos, AP0, tau)
    b = wavefunction([pos[1], pos[0], pos[2]], AP0, tau)
    assert abs(a - b) < 1e-12 * abs(a)


def test_wavefunction_two_particles_assembly():
    tau = 1.3j
    p = [0.2 + 0.1j, 0.6 + 0.3j]
    tp = theta1_prime(tau)
    jas = (jacobi_theta(1, p[0] - p[1], tau) / tp) ** 4
    y2 = sum((z.imag / tau.imag) ** 2 for z in p)
    ref = cmath.exp(1j * math.pi * 2 * tau * y2) * jas * tm_character(PA0, 0, sum(p), tau)
    assert abs(wavefunction(p, PA0, tau) - ref) < 1e-13 * abs(ref)


def test_wavefunction_unit_shift_ratio():
    tau = 1.3j
    p = [0.2 + 0.1j, 0.6 + 0.3j]
    q = [p[0] + 1, p[1]]
    ratio = wavefunction(q, AP0, tau) / wavefunction(p, AP0, tau)
    chi_ratio = tm_character(AP0, 0, sum(q), tau) / tm_character(AP0, 0, sum(p), tau)
    # (-1)^4 from theta_1 and an unchanged Gaussian factor
    assert abs(ratio - chi_ratio) < 1e-12 * abs(chi_ratio)


def test_wavefunction_guards():
    with pytest.raises(CoincidentPositions):
        wavefunction([0.2, 1.2], AP0, 1j)
    with pytest.raises(ValueError):
        wavefunction([0.2], AP0, 1j)

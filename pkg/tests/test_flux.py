import cmath
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from jjlqubit import flux
from jjlqubit.characters import (
    AA0, AA1, ALL_IDS, AP0, AP1, PA0, PA1, PP_ALPHA, PP_BETA, PP_GAMMA, REGISTRY,
    Term, RegistryEntry, charged_char, jacobi_theta, theta_char, tm_character)
from jjlqubit.flux import (
    DEFAULT_TAUS, EXPECTED_TABLE, ClassificationMismatch, MagneticTranslationContext,
    commutator_phase, flux_insert_charged, flux_insert_full, ising_monodromy,
    monodromy_transport, sample_w_c, stability_report, translate_S, translate_T)
from jjlqubit.modular import EXTENDED, DomainError, ThetaCharacteristic, working_precision


def points(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.8, 2.0))
        out.append((sample_w_c(tau, 1, rng)[0], tau))
    return out


# ---------------------------------------------------------------- translations

def test_context_validation():
    with pytest.raises(ValueError):
        MagneticTranslationContext(0, Fraction(1, 2), 1j)
    with pytest.raises(ValueError):
        MagneticTranslationContext(1, Fraction(1, 3), 1j)


def test_translate_s_examples():
    tau = 0.2 + 1.1j
    ctx0 = MagneticTranslationContext(1, 0, tau)
    f = lambda w: charged_char(0, w, tau)
    for w, _ in points(5):
        assert translate_S(ctx0, f, w) == f(w)
        assert abs(translate_S(MagneticTranslationContext(1, 2, tau), f, w) - f(w)) < 1e-12 * abs(f(w))
        th = lambda z: jacobi_theta(3, z, tau)
        assert abs(translate_S(MagneticTranslationContext(1, 1, tau), th, w) - th(w)) < 1e-12 * abs(th(w))


def test_translate_t_identity_and_guard():
    tau = 1j
    f = lambda w: jacobi_theta(3, w, tau)
    assert translate_T(MagneticTranslationContext(3, 0, tau), f, 0.3 + 0.1j) == f(0.3 + 0.1j)
    with pytest.raises(DomainError):
        translate_T(MagneticTranslationContext(1, 8, tau), f, 0.0)


@pytest.mark.parametrize("M", [1, 2, 4])
@pytest.mark.parametrize("a,b", [(Fraction(1, 2), Fraction(1, 2)), (1, Fraction(1, 2)),
                                 (Fraction(1, 2), 1), (1, 1)])
def test_commutator_relation(M, a, b):
    rng = np.random.default_rng(M)
    for k in range(10):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.8, 1.5))
        ch = ThetaCharacteristic(Fraction(int(rng.integers(0, 4)), 4), Fraction(int(rng.integers(0, 2)), 2))
        f = lambda w, ch=ch, tau=tau: theta_char(ch, 2 * w, 4 * tau) * jacobi_theta(3, w, tau)
        w = complex(rng.uniform(-1, 1), rng.uniform(0, 0.2))
        S = MagneticTranslationContext(M, a, tau)
        T = MagneticTranslationContext(M, b, tau)
        st = translate_S(S, lambda z: translate_T(T, f, z), w)
        ts = translate_T(T, lambda z: translate_S(S, f, z), w)
        assert abs(st - commutator_phase(M, a, b) * ts) < 1e-9 * abs(st)


def test_half_translation_twice_is_unit_translation():
    # cocycle factor between T_{1/2} T_{1/2} and T_1 at M = 4 is exactly 1
    tau = 0.3 + 1.2j
    f = lambda w: charged_char(1, w, tau)
    half = MagneticTranslationContext(4, Fraction(1, 2), tau)
    one = MagneticTranslationContext(4, 1, tau)
    for w, _ in points(5, seed=3):
        w = w.real + 0.05j
        twice = translate_T(half, lambda z: translate_T(half, f, z), w)
        once = translate_T(one, f, w)
        assert abs(twice / once - 1) < 1e-10


# ---------------------------------------------------------------- charged map

@pytest.mark.parametrize("l", range(4))
def test_charged_flux_map(l):
    for w, tau in points(20, seed=l):
        value, expected = flux_insert_charged(l, w, tau)
        assert abs(value - expected) < 1e-9 * abs(expected)
    v, e = flux_insert_charged(3, 0.2, 1j)
    assert abs(e - charged_char(0, 0.2, 1j)) == 0


def test_charged_map_fourfold_composition():
    tau = 0.1 + 1.3j

    def T(f):
        return lambda w: cmath.exp(1j * math.pi * tau / 4 + 1j * math.pi * w) * f(w + tau / 2)

    for l in range(4):
        f = lambda w, l=l: charged_char(l, w, tau)
        g = T(T(T(T(f))))
        factors = [g(w) / f(w) for w, _ in points(6, seed=10 + l)]
        # the factor is w_c independent and equal to one
        assert max(abs(x - factors[0]) for x in factors) < 1e-9
        assert abs(factors[0] - 1) < 1e-9


# ---------------------------------------------------------------- full table

def test_table_examples():
    r = flux_insert_full(AP0, 1j)
    assert (r.classification, r.target) == ("maps_to", AP1)
    assert not r.constant_flagged and r.residual < 1e-8
    assert flux_insert_full(PP_ALPHA, 1j).classification == "decoupled"
    r = flux_insert_full(PP_BETA, 1j)
    assert (r.classification, r.target) == ("excites_to", PP_GAMMA)


@pytest.mark.parametrize("cid", ALL_IDS, ids=str)
def test_table_against_expected(cid):
    r = flux_insert_full(cid, 0.5 + 1j)
    assert r.matches_expected, r.to_dict()
    assert r.expected_residual < 1e-8
    if r.classification == "decoupled":
        assert r.residual < 1e-8
    assert r.samples == 20


def test_flip_flip_returns_logical_label():
    tau = 1j
    pref = lambda s: cmath.exp(2j * math.pi * (tau / 4 + s / 2))
    ratios = []
    for w, _ in points(20, seed=5):
        w = complex(w.real, w.imag * 0.25)
        twice = pref(w) * pref(w + tau) * tm_character(AP0, tau, w + tau, tau)
        ratios.append(twice / tm_character(AP0, 0, w, tau))
    assert max(abs(r - ratios[0]) for r in ratios) < 1e-8 * abs(ratios[0])


def test_strict_mismatch_raises():
    bad = dict(REGISTRY)
    e = bad[AP0]
    bad[AP0] = RegistryEntry(AP0, e.formula, e.anchor,
                             tuple(Term(t.coef, t.bar_weight, t.weight, {0: 1, 2: 3}[t.l]) for t in e.terms))
    with pytest.raises(ClassificationMismatch) as err:
        flux_insert_full(AP0, 1j, registry=bad, strict=True)
    assert "per-sample residuals" in str(err.value)


def test_extended_decoupling_threshold():
    r = flux_insert_full(PA0, 1j, ctrl=EXTENDED, n_samples=3)
    assert r.classification == "decoupled" and r.residual < 1e-20
    d = flux_insert_full(PA0, 1j, n_samples=3)
    assert r.residual <= d.residual


# ---------------------------------------------------------------- monodromy

@pytest.mark.parametrize("delta", [1e-3, 1e-2])
@pytest.mark.parametrize("cid", ALL_IDS, ids=str)
def test_paired_monodromy(cid, delta):
    expected = flux.EXPECTED_MONODROMY[cid]
    for tau in DEFAULT_TAUS:
        res = monodromy_transport(cid, tau, delta=delta)
        assert res.snapped == expected, (tau, res)
        assert res.deviation < 1e-6


@pytest.mark.parametrize("cid", ALL_IDS, ids=str)
def test_charged_only_monodromy(cid):
    res = monodromy_transport(cid, 1j, charged_only=True)
    assert res.snapped == 1 and res.deviation < 1e-9


def test_ising_monodromy():
    assert ising_monodromy(Fraction(1, 16), 1j).snapped == -1
    assert ising_monodromy(0, 1j).snapped == 1
    assert ising_monodromy(Fraction(1, 2), 2j).snapped == 1
    ext = ising_monodromy(Fraction(1, 16), 1j, EXTENDED)
    assert ext.deviation < 1e-25


def test_unsnapped_when_deviation_large():
    r = flux.MonodromyResult(1j, 1.4)
    assert r.snapped is None


# ---------------------------------------------------------------- stability report

def test_stability_report_default():
    rep = stability_report(DEFAULT_TAUS[:2], n_samples=8, variants=False)
    assert rep.passed
    assert rep.counts() == {"maps_to": 2, "decoupled": 5, "excites_to": 2}
    assert rep.flip_stable_ids() == [AP0, AP1]
    text = rep.to_text()
    assert text.count("PASS") == 9
    doc = json.loads(rep.to_json())
    assert [r["id"] for r in doc["rows"]] == [c.name for c in ALL_IDS]
    assert rep.to_csv().startswith("id,re_tau,im_tau,sample,residual")


def test_stability_report_variants_listed():
    rep = stability_report([1j], n_samples=4, variants=True)
    labels = {v[0] for v in rep.variants}
    assert "A-A (1) with K_1 - K_3" in labels
    assert len(rep.variants) == 2 * 9 + 1


def test_thread_determinism(monkeypatch):
    monkeypatch.setenv("JJLQ_THREADS", "1")
    a = stability_report([1j, 2j], n_samples=4, variants=False).to_json()
    monkeypatch.setenv("JJLQ_THREADS", "4")
    b = stability_report([1j, 2j], n_samples=4, variants=False).to_json()
    assert a == b


def test_thread_count_parsing(monkeypatch):
    monkeypatch.setenv("JJLQ_THREADS", "x")
    assert flux.thread_count() == 1
    monkeypatch.setenv("JJLQ_THREADS", "3")
    assert flux.thread_count() == 3


def test_stability_report_needs_samples():
    with pytest.raises(ValueError):
        stability_report([])

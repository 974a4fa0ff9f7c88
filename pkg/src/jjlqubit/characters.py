"""Ising characters, charged characters K_l, the c = 3/2 blocks and the nine
torus characters of the twisted ladder model.

Every sector character is stored in a registry as a fully expanded list of
terms ``coef * chibar_{h1}(w_n) * chi_{h2}(w_n) * K_l(w_c)``.  Evaluating
through the expansion (instead of through hand-written products) keeps the
formula table the single source of truth: the reports, the JSON export and
the numerics all read the same rows, and a corrupted table shows up as failed
identities rather than silently different code.

Isospin factors are square roots of theta quotients,

    chi_0 + chi_1/2 = sqrt(theta_3 / eta),   chi_0 - chi_1/2 = sqrt(theta_4 / eta),
    chi_1/16 = sqrt(theta_2 / (2 eta)),

continued from the principal branch at w = 0 along a path lifted slightly
into the upper half plane.  A non-zero isospin argument is applied to both
isospin factors of a product (barred and unbarred alike).
"""
from __future__ import annotations

import cmath
import enum
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import mpmath

from .modular import (
    DOUBLE,
    ComplexPath,
    SeriesControl,
    ThetaCharacteristic,
    TorusModulus,
    ZeroOnPathError,
    as_modulus,
    dedekind_eta,
    jacobi_theta,
    theta1_prime,
    theta_char,
    tracked_sqrt,
    working_precision,
)

H0 = Fraction(0)
H_HALF = Fraction(1, 2)
H_TWIST = Fraction(1, 16)
ISING_WEIGHTS = (H0, H_HALF, H_TWIST)

DEFAULT_DELTA = 1e-3


class CoincidentPositions(ValueError):
    """Two wavefunction coordinates coincide modulo the period lattice."""


@dataclass(frozen=True)
class IsingLabel:
    weight: Fraction
    barred: bool = False

    def __post_init__(self):
        w = Fraction(self.weight)
        if w not in ISING_WEIGHTS:
            raise ValueError(f"Ising weight must be one of 0, 1/2, 1/16; got {w}")
        object.__setattr__(self, "weight", w)


@dataclass(frozen=True)
class ChargedIndex:
    l: int

    def __post_init__(self):
        if not (0 <= int(self.l) <= 3):
            raise ValueError(f"charged index must be in 0..3, got {self.l}")
        object.__setattr__(self, "l", int(self.l))

    def shifted(self, k: int = 1) -> "ChargedIndex":
        return ChargedIndex((self.l + k) % 4)


class Sector(str, enum.Enum):
    AP = "A-P"
    AA = "A-A"
    PA = "P-A"
    PP = "P-P"

    @property
    def twisted(self) -> bool:
        return self.value.startswith("A")


_INDICES = {
    Sector.AP: ("0", "1"),
    Sector.AA: ("0", "1"),
    Sector.PA: ("0", "1"),
    Sector.PP: ("alpha", "beta", "gamma"),
}


@dataclass(frozen=True)
class CharacterId:
    sector: Sector
    index: str

    def __post_init__(self):
        sector = Sector(self.sector)
        object.__setattr__(self, "sector", sector)
        if self.index not in _INDICES[sector]:
            raise ValueError(f"no block {self.index!r} in sector {sector.value}")

    @property
    def name(self) -> str:
        idx = f"({self.index})" if self.index in ("0", "1") else self.index
        return f"{self.sector.value}:{idx}"

    @classmethod
    def parse(cls, name: str) -> "CharacterId":
        sector, _, idx = name.partition(":")
        return cls(Sector(sector), idx.strip("()"))

    def __str__(self):
        return self.name


AP0 = CharacterId(Sector.AP, "0")
AP1 = CharacterId(Sector.AP, "1")
AA0 = CharacterId(Sector.AA, "0")
AA1 = CharacterId(Sector.AA, "1")
PA0 = CharacterId(Sector.PA, "0")
PA1 = CharacterId(Sector.PA, "1")
PP_ALPHA = CharacterId(Sector.PP, "alpha")
PP_BETA = CharacterId(Sector.PP, "beta")
PP_GAMMA = CharacterId(Sector.PP, "gamma")
ALL_IDS = (AP0, AP1, AA0, AA1, PA0, PA1, PP_ALPHA, PP_BETA, PP_GAMMA)


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Term:
    coef: Fraction
    bar_weight: Fraction
    weight: Fraction
    l: int


@dataclass(frozen=True)
class RegistryEntry:
    id: CharacterId
    formula: str
    anchor: str
    terms: tuple


def _expand(coef, bar_combo, combo, k_combo):
    """Multiply out (sum c h)(sum c h)(sum c K_l) into Term rows."""
    out = []
    for cb, hb in bar_combo:
        for c, h in combo:
            for ck, l in k_combo:
                out.append(Term(Fraction(coef) * cb * c * ck, hb, h, l))
    return tuple(out)


_P = ((1, H0), (1, H_HALF))   # chi_0 + chi_1/2
_M = ((1, H0), (-1, H_HALF))  # chi_0 - chi_1/2
_T = ((1, H_TWIST),)          # chi_1/16
_K02p = ((1, 0), (1, 2))
_K02m = ((1, 0), (-1, 2))
_K13p = ((1, 1), (1, 3))
_K13m = ((1, 1), (-1, 3))


def _pa_terms(first_l: int, second_l: int):
    # (chib0 chi0 - chib1/2 chi1/2) K_first + (chib0 chi1/2 - chib1/2 chi0) K_second
    return (Term(Fraction(1), H0, H0, first_l), Term(Fraction(-1), H_HALF, H_HALF, first_l),
            Term(Fraction(1), H0, H_HALF, second_l), Term(Fraction(-1), H_HALF, H0, second_l))


def default_registry() -> dict:
    rows = [
        RegistryEntry(AP0, "chib_1/16 (chi_0 + chi_1/2) (K_0 + K_2)", "twisted A-P block (0)",
                      _expand(1, _T, _P, _K02p)),
        RegistryEntry(AP1, "chi_1/16 (chib_0 + chib_1/2) (K_1 + K_3)", "twisted A-P block (1)",
                      _expand(1, _P, _T, _K13p)),
        RegistryEntry(AA0, "chib_1/16 (chi_0 - chi_1/2) (K_0 - K_2)", "twisted A-A block (0)",
                      _expand(1, _T, _M, _K02m)),
        RegistryEntry(AA1, "chi_1/16 (chib_0 - chib_1/2) (K_1 + K_3)", "twisted A-A block (1)",
                      _expand(1, _M, _T, _K13p)),
        RegistryEntry(PA0, "(chib_0 chi_0 - chib_1/2 chi_1/2) K_0 + (chib_0 chi_1/2 - chib_1/2 chi_0) K_2",
                      "untwisted P-A block (0)", _pa_terms(0, 2)),
        RegistryEntry(PA1, "(chib_0 chi_1/2 - chib_1/2 chi_0) K_0 + (chib_0 chi_0 - chib_1/2 chi_1/2) K_2",
                      "untwisted P-A block (1)",
                      (Term(Fraction(1), H0, H_HALF, 0), Term(Fraction(-1), H_HALF, H0, 0),
                       Term(Fraction(1), H0, H0, 2), Term(Fraction(-1), H_HALF, H_HALF, 2))),
        RegistryEntry(PP_ALPHA, "1/2 (chib_0 - chib_1/2) (chi_0 - chi_1/2) (K_0 - K_2)",
                      "untwisted P-P block alpha", _expand(Fraction(1, 2), _M, _M, _K02m)),
        RegistryEntry(PP_BETA, "1/2 (chib_0 + chib_1/2) (chi_0 + chi_1/2) (K_0 + K_2)",
                      "untwisted P-P block beta", _expand(Fraction(1, 2), _P, _P, _K02p)),
        RegistryEntry(PP_GAMMA, "chib_1/16 chi_1/16 (K_1 + K_3)", "untwisted P-P block gamma",
                      _expand(1, _T, _T, _K13p)),
    ]
    return {r.id: r for r in rows}


# the A-A (1) block with the relative sign of the K_1, K_3 pair flipped; the
# printed form is the registry default, this one is reported alongside it
AA1_MINUS_VARIANT = RegistryEntry(
    AA1, "chi_1/16 (chib_0 - chib_1/2) (K_1 - K_3)", "twisted A-A block (1), K_1 - K_3 variant",
    _expand(1, _M, _T, _K13m))

# anchors of the identity checks that are not tied to a single character
IDENTITY_ANCHORS = {
    "k_periodicity": "charged characters periodic under w_c -> w_c + 2",
    "charged_flux": "charged flux map K_l -> K_(l+1 mod 4)",
    "ising_monodromy": "Ising characters under w -> w + 2: twist field odd, others even",
    "sector_monodromy": "paired transport (w_n, w_c) -> (w_n + 2, w_c + 2)",
    "flux_table": "half-period flux insertion table over all sectors",
    # lattice and qubit checks share the same anchor registry so that every
    # report row can be traced to one entry here
    "classical_dichotomy": "classical minima: two alternating-chirality states per closure",
    "parity_obstruction": "odd periodic ladder cannot alternate perfectly",
    "quantum_doublet": "quasi-degenerate ground doublet below a gap",
    "flux_gauge": "integer hole flux is a gauge transformation",
    "adiabatic_flip": "adiabatic flux quantum through the hole flips the logical state",
    "double_kink": "double kink keeps the chirality sum at finite energy cost",
    "qubit_fit": "two-level form of the ground doublet",
    "qubit_dynamics": "single-qubit evolution and flux-linked register",
}

REGISTRY = default_registry()


def registry_to_json(registry: dict | None = None) -> str:
    registry = REGISTRY if registry is None else registry
    doc = {
        "characters": [
            {
                "id": e.id.name,
                "sector": e.id.sector.value,
                "formula": e.formula,
                "anchor": e.anchor,
                "terms": [[str(t.coef), str(t.bar_weight), str(t.weight), t.l] for t in e.terms],
            }
            for e in registry.values()
        ],
        "identities": [{"name": k, "anchor": v} for k, v in IDENTITY_ANCHORS.items()],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def registry_from_json(text: str) -> dict:
    """Inverse of :func:`registry_to_json` (validating ids and weights)."""
    doc = json.loads(text)
    out = {}
    for row in doc["characters"]:
        cid = CharacterId.parse(row["id"])
        terms = tuple(Term(Fraction(c), IsingLabel(Fraction(hb)).weight,
                           IsingLabel(Fraction(h)).weight, ChargedIndex(l).l)
                      for c, hb, h, l in row["terms"])
        out[cid] = RegistryEntry(cid, row["formula"], row["anchor"], terms)
    missing = set(ALL_IDS) - set(out)
    if missing:
        raise ValueError(f"registry lacks ids: {sorted(str(m) for m in missing)}")
    return out


def all_anchors(registry: dict | None = None) -> set:
    registry = REGISTRY if registry is None else registry
    return {e.anchor for e in registry.values()} | set(IDENTITY_ANCHORS.values()) \
        | {AA1_MINUS_VARIANT.anchor}


# --------------------------------------------------------------------------
# evaluation


@lru_cache(maxsize=256)
def _eta(tau: complex, ctrl: SeriesControl):
    return dedekind_eta(TorusModulus(tau), ctrl)


@lru_cache(maxsize=4096)
def isospin_roots(w: complex, tau: complex, ctrl: SeriesControl = DOUBLE,
                  delta: float = DEFAULT_DELTA) -> tuple:
    """(sqrt(theta_2/eta), sqrt(theta_3/eta), sqrt(theta_4/eta)) at argument w.

    Square roots are continued from the principal branch at 0 along
    0 -> i*delta -> w + i*delta -> w.  A zero met on the way triggers one
    retry with a ten times larger offset.  An exact zero at the end point
    (theta_4 at a half period) is allowed and gives 0.
    """
    modulus = TorusModulus(tau)
    eta = _eta(tau, ctrl)
    out = []
    with working_precision(ctrl):
        for kind in (2, 3, 4):
            def f(z, kind=kind):
                return jacobi_theta(kind, z, modulus, ctrl) / eta
            if w == 0:
                v = f(0)
                out.append(mpmath.sqrt(v) if ctrl.extended else cmath.sqrt(v))
                continue
            err = None
            for d in (delta, 10 * delta):
                try:
                    v, _ = tracked_sqrt(f, ComplexPath.offset_straight(0, w, d), ctrl,
                                        allow_zero_end=True)
                    break
                except ZeroOnPathError as e:
                    err = e
            else:
                raise err
            out.append(v)
    return tuple(out)


def _ising_from_roots(roots, weight: Fraction, ctrl: SeriesControl):
    s2, s3, s4 = roots
    if weight == H0:
        return (s3 + s4) / 2
    if weight == H_HALF:
        return (s3 - s4) / 2
    return s2 / (mpmath.sqrt(2) if ctrl.extended else math.sqrt(2))


def ising_char(label: IsingLabel, w, modulus, ctrl: SeriesControl = DOUBLE,
               delta: float = DEFAULT_DELTA):
    """Ising character chi_h(w | tau); barred and unbarred evaluate identically."""
    modulus = as_modulus(modulus)
    roots = isospin_roots(complex(w), modulus.tau, ctrl, delta)
    with working_precision(ctrl):
        return _ising_from_roots(roots, label.weight, ctrl)


_K_CHARS = tuple(ThetaCharacteristic(Fraction(l, 4), Fraction(0)) for l in range(4))


def charged_char(l, w_c, modulus, ctrl: SeriesControl = DOUBLE):
    """K_l(w | tau) = Theta[l/4; 0](2w | 4 tau) / eta(tau)."""
    l = l.l if isinstance(l, ChargedIndex) else ChargedIndex(l).l
    modulus = as_modulus(modulus)
    with working_precision(ctrl):
        th = theta_char(_K_CHARS[l], 2 * w_c, TorusModulus(4 * modulus.tau), ctrl)
        return th / _eta(modulus.tau, ctrl)


def c32_block(j: int, w_c, modulus, ctrl: SeriesControl = DOUBLE, *, w_n=0,
              delta: float = DEFAULT_DELTA):
    """Blocks of the Z2-invariant c = 3/2 part:

    j=0: chi_0 K_0 + chi_1/2 K_2;  j=1: chi_1/16 (K_1 + K_3);  j=2: chi_1/2 K_0 + chi_0 K_2.
    """
    if j not in (0, 1, 2):
        raise ValueError("c = 3/2 block index must be 0, 1 or 2")
    modulus = as_modulus(modulus)
    roots = isospin_roots(complex(w_n), modulus.tau, ctrl, delta)
    with working_precision(ctrl):
        c0, ch, ct = (_ising_from_roots(roots, h, ctrl) for h in ISING_WEIGHTS)
        K = [charged_char(l, w_c, modulus, ctrl) for l in range(4)]
        if j == 0:
            return c0 * K[0] + ch * K[2]
        if j == 1:
            return ct * (K[1] + K[3])
        return ch * K[0] + c0 * K[2]


def character_terms(entry: RegistryEntry, w_n, w_c, modulus, ctrl: SeriesControl = DOUBLE,
                    *, delta: float = DEFAULT_DELTA, barred_w_n=None,
                    charged_shift=0):
    """Values of the individual expanded terms of a registry entry.

    ``barred_w_n`` (default: same as ``w_n``) lets a caller place the isospin
    argument on the unbarred factor only.  ``charged_shift`` is added to the
    charged argument (``w_c + charged_shift``); kept separate so a caller can
    shift by tau/2 without losing the exact grid of the isospin argument.
    """
    modulus = as_modulus(modulus)
    barred_w_n = w_n if barred_w_n is None else barred_w_n
    r = isospin_roots(complex(w_n), modulus.tau, ctrl, delta)
    rb = r if barred_w_n == w_n else isospin_roots(complex(barred_w_n), modulus.tau, ctrl, delta)
    with working_precision(ctrl):
        chi = {h: _ising_from_roots(r, h, ctrl) for h in ISING_WEIGHTS}
        chib = {h: _ising_from_roots(rb, h, ctrl) for h in ISING_WEIGHTS}
        wc = (mpmath.mpc(w_c) + mpmath.mpc(charged_shift)) if ctrl.extended \
            else w_c + charged_shift
        K = {}
        out = []
        for t in entry.terms:
            if t.l not in K:
                K[t.l] = charged_char(t.l, wc, modulus, ctrl)
            c = mpmath.mpf(t.coef.numerator) / t.coef.denominator if ctrl.extended \
                else t.coef.numerator / t.coef.denominator
            out.append(c * chib[t.bar_weight] * chi[t.weight] * K[t.l])
        return out


def tm_character(cid: CharacterId, w_n, w_c, modulus, ctrl: SeriesControl = DOUBLE, *,
                 registry: dict | None = None, delta: float = DEFAULT_DELTA):
    """Torus character chi_id(w_n | w_c | tau), assembled from the registry."""
    registry = REGISTRY if registry is None else registry
    entry = registry[cid] if isinstance(cid, CharacterId) else cid
    with working_precision(ctrl):
        terms = character_terms(entry, w_n, w_c, modulus, ctrl, delta=delta)
        return mpmath.fsum(terms) if ctrl.extended else sum(terms)


def wavefunction(positions: Sequence, cid: CharacterId, modulus,
                 ctrl: SeriesControl = DOUBLE, *, registry: dict | None = None):
    """Center-of-charge wavefunction of M particles on the torus:

        exp(i pi M tau sum y_i^2) * prod_{i<j} (theta_1(w_ij)/theta_1'(0))^4 * chi_id(0 | sum w_i | tau)

    with y_i = Im w_i / Im tau.
    """
    modulus = as_modulus(modulus)
    pos = [complex(p) for p in positions]
    m = len(pos)
    if m < 2:
        raise ValueError("need at least two positions")
    tau = modulus.tau
    with working_precision(ctrl):
        tp = theta1_prime(modulus, ctrl)
        jastrow = 1
        for i in range(m):
            for j in range(i + 1, m):
                r = jacobi_theta(1, pos[i] - pos[j], modulus, ctrl) / tp
                if abs(r) < 1e-12:
                    raise CoincidentPositions(
                        f"positions {i} and {j} coincide modulo the lattice")
                jastrow = jastrow * r ** 4
        ysq = sum((p.imag / tau.imag) ** 2 for p in pos)
        gauss = (mpmath.expjpi if ctrl.extended else (lambda x: cmath.exp(1j * math.pi * x)))(
            m * tau * ysq)
        chi = tm_character(cid, 0, sum(pos), modulus, ctrl, registry=registry)
        return gauss * jastrow * chi

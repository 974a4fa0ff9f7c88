"""Ladder geometry, gauge, and the classical (E_C = 0) phase model.

Site numbering: upper leg ``0 .. L-1``, lower leg ``L .. 2L-1`` where ``L``
is the number of rungs (``L = N`` for closed ladders, ``N + 1`` for an open
one).  A link ``(i, j, E, A, s)`` contributes ``-E cos(phi_i - s*phi_j - A)``;
``s = -1`` only appears on the optional sign-flipped seam.

Gauge: ``A = +pi f`` on upper-leg links (left to right), ``-pi f`` on lower-leg
links, ``0`` on rungs, so every plaquette encloses ``2 pi f``.  Closed ladders
get an extra ``-N pi f`` on each seam link so that, at zero hole flux, the
loop along one leg encloses no flux (time-reversal symmetric point).  Hole
flux ``h`` (in flux quanta through the central hole, measured on the cycle
that goes once around the hole *and* returns to the starting site) is spread
uniformly over all horizontal links, on both legs and in the same direction,
so plaquette fluxes are untouched.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.optimize

log = logging.getLogger(__name__)

SEAMS = ("periodic", "mobius_impurity", "open", "signflip")


class ParityObstruction(ValueError):
    """Perfect chirality alternation is impossible for this seam/parity."""


class AmbiguousChirality(UserWarning):
    """A plaquette circulation is below tolerance; chirality set to 0."""


@dataclass(frozen=True)
class Link:
    i: int
    j: int
    E: float
    A: float
    sign: int = 1
    # hole-flux phase per unit of hole flux
    dA: float = 0.0
    kind: str = "leg"  # leg | rung | seam

    def phase(self, hole_flux: float) -> float:
        return self.A + hole_flux * self.dA


@dataclass(frozen=True)
class LadderSpec:
    N_plaquettes: int
    E_x: float = 1.0
    E_y: float = 1.0
    E_C: float = 0.1
    f: float = 0.5
    seam: str = "periodic"
    impurity_strength: float = 1.0
    n_max: int = 2
    hole_flux: float = 0.0
    n_tot: int | None = 0
    require_alternation: bool = False

    def __post_init__(self):
        if self.seam not in SEAMS:
            raise ValueError(f"seam must be one of {SEAMS}, got {self.seam!r}")
        n_min = 1 if self.seam == "open" else 2
        if int(self.N_plaquettes) < n_min:
            raise ValueError(f"N_plaquettes must be >= {n_min} for seam {self.seam}")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.E_C < 0:
            raise ValueError("E_C must be non-negative")
        if self.seam == "open" and self.hole_flux != 0:
            raise ValueError("an open ladder has no hole to thread")
        if self.seam == "signflip" and self.n_tot is not None:
            raise ValueError("the sign-flipped seam does not conserve total charge; use n_tot=None")
        if self.require_alternation and self.seam == "periodic" and self.N_plaquettes % 2:
            raise ParityObstruction(
                f"perfect chirality alternation is impossible on a periodic ladder with an odd "
                f"number of plaquettes (N = {self.N_plaquettes}); use seam='mobius_impurity'")
        if self.require_alternation and self.seam == "mobius_impurity" and \
                self.N_plaquettes % 2 == 0:
            raise ParityObstruction(
                f"a Mobius-closed ladder with an even number of plaquettes "
                f"(N = {self.N_plaquettes}) cannot alternate; use seam='periodic'")

    @property
    def rungs(self) -> int:
        return self.N_plaquettes + 1 if self.seam == "open" else self.N_plaquettes

    @property
    def n_sites(self) -> int:
        return 2 * self.rungs

    @property
    def closed(self) -> bool:
        return self.seam != "open"

    def with_(self, **kw) -> "LadderSpec":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def build_links(spec: LadderSpec) -> list:
    """Link list of the ladder in the fixed gauge (hole-flux slope in ``dA``)."""
    L = spec.rungs
    N = spec.N_plaquettes
    a = math.pi * spec.f
    out = []
    if spec.seam == "periodic":
        dA = 2 * math.pi / N
    elif spec.seam in ("mobius_impurity", "signflip"):
        dA = math.pi / N
    else:
        dA = 0.0
    seam_shift = -N * math.pi * spec.f
    for i in range(L):
        j = i + 1
        if j < L:
            out.append(Link(i, j, spec.E_x, a, 1, dA, "leg"))
            out.append(Link(L + i, L + j, spec.E_x, -a, 1, dA, "leg"))
        elif spec.closed:
            Es = spec.E_x * spec.impurity_strength
            if spec.seam == "periodic":
                out.append(Link(i, 0, spec.E_x, a + seam_shift, 1, dA, "seam"))
                out.append(Link(L + i, L, spec.E_x, -a + seam_shift, 1, dA, "seam"))
            elif spec.seam == "mobius_impurity":
                # legs cross at the seam: upper end joins lower start and vice versa
                out.append(Link(i, L, Es, a + seam_shift, 1, dA, "seam"))
                out.append(Link(L + i, 0, Es, -a + seam_shift, 1, dA, "seam"))
            else:  # signflip: uncrossed seam, phase of the far site enters with - sign
                out.append(Link(i, 0, Es, a + seam_shift, -1, dA, "seam"))
                out.append(Link(L + i, L, Es, -a + seam_shift, -1, dA, "seam"))
        out.append(Link(i, L + i, spec.E_y, 0.0, 1, 0.0, "rung"))
    return out


def plaquette_loops(spec: LadderSpec) -> list:
    """Each plaquette as a closed sequence of sites (upper p -> upper p+1 -> lower p+1 -> lower p).

    The Mobius seam plaquette is traversed upper N-1 -> lower 0 -> upper 0 ->
    lower N-1, i.e. its orientation relative to the others is reversed.
    """
    L = spec.rungs
    loops = []
    for p in range(spec.N_plaquettes):
        q = p + 1
        if q < L:
            loops.append((p, q, L + q, L + p))
        elif spec.seam in ("periodic", "signflip"):
            loops.append((p, 0, L, L + p))
        else:
            loops.append((p, L, 0, L + p))
    return loops


def wrap_phases(phi) -> np.ndarray:
    """Phases reduced to [0, 2 pi), with values within 1e-12 of 2 pi sent to 0."""
    out = np.mod(np.asarray(phi, dtype=float), 2 * math.pi)
    out[out > 2 * math.pi - 1e-12] = 0.0
    return out


def _link_index(links: Sequence[Link]) -> dict:
    d = {}
    for k, ln in enumerate(links):
        d[(ln.i, ln.j)] = (k, 1)
        d[(ln.j, ln.i)] = (k, -1)
    return d


def alternation_ok(pattern: Sequence[int], seam: str) -> bool:
    """Whether a chirality pattern is perfectly alternating for this closure.

    Across a Mobius seam the plaquette orientation is reversed, so an
    alternating state has equal signs on the two seam plaquettes.
    """
    pat = list(pattern)
    if any(c == 0 for c in pat):
        return False
    if any(pat[p + 1] != -pat[p] for p in range(len(pat) - 1)):
        return False
    if len(pat) < 2 or seam == "open":
        return True
    if seam == "mobius_impurity":
        return pat[-1] == pat[0]
    return pat[-1] == -pat[0]


# --------------------------------------------------------------------------
# classical model


@dataclass
class PhaseConfiguration:
    phases: np.ndarray
    energy: float
    pattern: tuple = ()
    gradient_norm: float = 0.0

    @property
    def chirality_sum(self) -> int:
        return int(sum(self.pattern))

    def to_dict(self) -> dict:
        return {"phases": [float(x) for x in self.phases], "energy": float(self.energy),
                "pattern": list(self.pattern), "chirality_sum": self.chirality_sum}


@dataclass
class ChiralityPattern:
    chi: tuple
    circulation: tuple

    @property
    def sum(self) -> int:
        return int(sum(self.chi))


class ClassicalModel:
    """Energy, gradient and Hessian of -sum E cos(phi_i - s phi_j - A)."""

    def __init__(self, spec: LadderSpec, hole_flux: float | None = None):
        self.spec = spec
        h = spec.hole_flux if hole_flux is None else hole_flux
        self.links = build_links(spec)
        self.n = spec.n_sites
        self.I = np.array([l.i for l in self.links])
        self.J = np.array([l.j for l in self.links])
        self.E = np.array([l.E for l in self.links], dtype=float)
        self.A = np.array([l.phase(h) for l in self.links], dtype=float)
        self.S = np.array([l.sign for l in self.links], dtype=float)
        self.loops = plaquette_loops(spec)
        self._lidx = _link_index(self.links)
        self.gauge_free = bool(np.all(self.S == 1))

    def _arg(self, phi):
        return phi[self.I] - self.S * phi[self.J] - self.A

    def energy(self, phi) -> float:
        return float(-np.sum(self.E * np.cos(self._arg(phi))))

    def gradient(self, phi) -> np.ndarray:
        s = self.E * np.sin(self._arg(phi))
        g = np.zeros(self.n)
        np.add.at(g, self.I, s)
        np.add.at(g, self.J, -self.S * s)
        return g

    def hessian(self, phi) -> np.ndarray:
        c = self.E * np.cos(self._arg(phi))
        H = np.zeros((self.n, self.n))
        for k in range(len(c)):
            i, j, s = self.I[k], self.J[k], self.S[k]
            H[i, i] += c[k]
            H[j, j] += c[k]
            H[i, j] -= s * c[k]
            H[j, i] -= s * c[k]
        return H

    def currents(self, phi) -> np.ndarray:
        """Link currents E sin(phi_i - s phi_j - A), directed i -> j."""
        return self.E * np.sin(self._arg(phi))

    def circulations(self, currents) -> np.ndarray:
        out = []
        for loop in self.loops:
            c = 0.0
            for a, b in zip(loop, loop[1:] + loop[:1]):
                k, d = self._lidx[(a, b)]
                c += d * currents[k]
            out.append(c)
        return np.array(out)


def chirality_from_circulation(circ: Sequence[float], tol: float = 1e-6) -> ChiralityPattern:
    chi = []
    for c in circ:
        if abs(c) < tol:
            warnings.warn(f"plaquette circulation {c:.2e} below tolerance; chirality 0",
                          AmbiguousChirality, stacklevel=3)
            chi.append(0)
        else:
            chi.append(1 if c > 0 else -1)
    return ChiralityPattern(tuple(chi), tuple(float(c) for c in circ))


def classical_chirality(spec: LadderSpec, phases, tol: float = 1e-6) -> ChiralityPattern:
    m = ClassicalModel(spec)
    circ = m.circulations(m.currents(np.asarray(phases, dtype=float)))
    scale = max(spec.E_x, spec.E_y, 1e-300)
    if np.all(np.abs(circ) < tol * scale):
        # no currents at all (unfrustrated state): zero pattern without noise
        return ChiralityPattern(tuple(0 for _ in circ), tuple(float(c) for c in circ))
    return chirality_from_circulation(circ, tol * scale)


def _descend(model: ClassicalModel, phi0: np.ndarray, gtol: float, max_iter: int = 20000):
    """Gradient descent with an adaptive step, then Newton polish.

    Site 0 is pinned (global U(1) gauge) whenever the model has that symmetry.
    Returns (phi, converged, grad_norm).
    """
    free = np.arange(1 if model.gauge_free else 0, model.n)
    phi = phi0.copy()
    if model.gauge_free:
        phi -= phi[0]
    e = model.energy(phi)
    step = 0.2
    for _ in range(max_iter):
        g = model.gradient(phi)
        g[: free[0]] = 0.0
        gn = np.linalg.norm(g)
        if gn < 1e-4:
            break
        while True:
            trial = phi - step * g
            et = model.energy(trial)
            if et < e - 1e-4 * step * gn * gn:
                phi, e = trial, et
                step = min(step * 1.5, 2.0)
                break
            step *= 0.5
            if step < 1e-12:
                break
    # Newton polish on the free coordinates
    for _ in range(50):
        g = model.gradient(phi)[free]
        gn = float(np.linalg.norm(g))
        if gn < gtol:
            break
        H = model.hessian(phi)[np.ix_(free, free)]
        d = np.linalg.lstsq(H, -g, rcond=None)[0]
        t = 1.0
        base = float(np.linalg.norm(g))
        while t > 1e-6:
            trial = phi.copy()
            trial[free] += t * d
            if np.linalg.norm(model.gradient(trial)[free]) < base:
                phi = trial
                break
            t *= 0.5
        else:
            break
    g = model.gradient(phi)[free]
    gn = float(np.linalg.norm(g))
    if gn >= gtol:
        return phi, False, gn
    # reject saddles: Hessian on the free coordinates must be positive semidefinite
    lam = np.linalg.eigvalsh(model.hessian(phi)[np.ix_(free, free)])
    return phi, bool(lam[0] > -1e-8), gn


def _gauge_key(model: ClassicalModel, phi, digits: int = 6) -> tuple:
    arg = np.mod(model._arg(phi) + math.pi, 2 * math.pi) - math.pi
    key = np.round(arg, digits)
    key[np.isclose(np.abs(key), math.pi, atol=10 ** -digits)] = math.pi
    return tuple(key + 0.0)


@dataclass
class MinimizeStats:
    starts: int
    converged: int
    dropped: int
    distinct: int


def classical_minimize(spec: LadderSpec, n_starts: int = 32, seed: int = 0,
                       gtol: float = 1e-10, energy_tol: float = 1e-10,
                       return_stats: bool = False):
    """Multi-start local minimization of the classical energy (E_C = 0).

    Returns the distinct global minima (energies within ``energy_tol`` of
    the lowest found), de-duplicated modulo the global phase and 2 pi, sorted
    by chirality pattern.  Non-convergent starts and saddles are dropped and
    counted in the optional stats.
    """
    if n_starts < 8:
        raise ValueError("n_starts must be >= 8")
    model = ClassicalModel(spec)
    rng = np.random.default_rng(seed)
    found = {}
    conv = 0
    for _ in range(n_starts):
        phi, ok, gn = _descend(model, rng.uniform(0, 2 * math.pi, model.n), gtol)
        if not ok:
            continue
        conv += 1
        key = _gauge_key(model, phi)
        e = model.energy(phi)
        if key not in found or e < found[key][1]:
            found[key] = (phi, e, gn)
    if not found:
        out = []
    else:
        e_min = min(v[1] for v in found.values())
        out = []
        for phi, e, gn in found.values():
            if e - e_min <= energy_tol * max(1.0, abs(e_min)):
                wrapped = wrap_phases(phi)
                pat = classical_chirality(spec, wrapped).chi
                out.append(PhaseConfiguration(wrapped, e, pat, gn))
        out.sort(key=lambda c: (c.pattern, c.energy))
    stats = MinimizeStats(n_starts, conv, n_starts - conv, len(out))
    log.info("classical_minimize %s: %s", spec.seam, stats)
    return (out, stats) if return_stats else out


# --------------------------------------------------------------------------
# double kink


@dataclass
class DoubleKinkResult:
    config: PhaseConfiguration
    base: PhaseConfiguration
    plaquette: int
    stable: bool
    relaxed: PhaseConfiguration

    @property
    def excess_energy(self) -> float:
        return self.config.energy - self.base.energy


def double_kink(spec: LadderSpec, base: PhaseConfiguration, p: int, *,
                margin: float = 0.05, n_tries: int = 8, seed: int = 0) -> DoubleKinkResult:
    """Exchange the chiralities of plaquettes p and p+1 and relax locally.

    The configuration is relaxed under the constraint that every plaquette
    keeps its target circulation sign with at least ``margin`` (times the
    coupling scale).  A subsequent unconstrained relaxation decides whether
    the kink is a local minimum on its own (``stable``) or decays back.
    """
    n_pl = spec.N_plaquettes
    pairs_wrap = spec.seam == "periodic"
    if not (0 <= p < n_pl) or (p == n_pl - 1 and not pairs_wrap):
        raise ValueError(f"no neighbouring plaquette pair starting at p={p} for seam {spec.seam}")
    q = (p + 1) % n_pl
    base_pat = list(base.pattern) if base.pattern else \
        list(classical_chirality(spec, base.phases).chi)
    if not alternation_ok(base_pat, spec.seam):
        log.warning("double_kink: base pattern %s is not alternating", base_pat)
    target = base_pat.copy()
    target[p], target[q] = base_pat[q], base_pat[p]
    model = ClassicalModel(spec)
    scale = min(spec.E_x, spec.E_y)

    def circ(phi):
        return model.circulations(model.currents(phi))

    cons = [{"type": "ineq", "fun": (lambda phi, k=k: target[k] * circ(phi)[k] - margin * scale)}
            for k in range(n_pl)]
    rng = np.random.default_rng(seed)
    best = None
    for t in range(n_tries):
        x0 = np.asarray(base.phases, float) + (0 if t == 0 else rng.normal(0, 0.6, model.n))
        # nudge the two plaquettes towards the exchanged currents
        if t == 0:
            x0 = x0 + rng.normal(0, 0.3, model.n)
        r = scipy.optimize.minimize(model.energy, x0, jac=model.gradient, method="SLSQP",
                                    constraints=cons, options={"maxiter": 500, "ftol": 1e-12})
        if not r.success:
            continue
        pat = classical_chirality(spec, r.x).chi
        if list(pat) != target:
            continue
        if best is None or r.fun < best.fun:
            best = r
    if best is None:
        raise RuntimeError("could not construct a double-kink configuration")
    phi = wrap_phases(best.x)
    kink = PhaseConfiguration(phi, model.energy(phi), tuple(target))
    relaxed_phi, _, _ = _descend(model, phi, 1e-10)
    relaxed_pat = classical_chirality(spec, relaxed_phi).chi
    relaxed = PhaseConfiguration(wrap_phases(relaxed_phi), model.energy(relaxed_phi),
                                 relaxed_pat)
    if sum(kink.pattern) != sum(base_pat):
        raise AssertionError("double kink changed the chirality sum")
    return DoubleKinkResult(kink, base, p, list(relaxed_pat) == target, relaxed)

"""Time evolution: Krylov propagator, integer-flux gauge map, adiabatic ramps."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sps

from .lattice import LadderSpec
from .quantum import ChargeBasis, LadderHamiltonian, ground_spectrum

log = logging.getLogger(__name__)


class AdiabaticityWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# Krylov propagator


def lanczos_expm(matvec: Callable, v: np.ndarray, dt: float, *, m_max: int = 40,
                 tol: float = 1e-12):
    """exp(-i dt H) v for Hermitian H via Lanczos with full reorthogonalization.

    The step is split into equal substeps until the standard a-posteriori
    estimate ``beta_m |[exp(-i tau T_m)]_{m,1}|`` of every substep is below
    ``tol``.  Returns ``(w, error_estimate, substeps)``.
    """
    nv = np.linalg.norm(v)
    if nv == 0 or dt == 0:
        return v.copy(), 0.0, 0
    sub = 1
    while True:
        tau = dt / sub
        w = v.astype(complex).copy()
        total_err = 0.0
        ok = True
        for _ in range(sub):
            w, err = _lanczos_step(matvec, w, tau, m_max)
            total_err += err
            if err > tol / sub:
                ok = False
                break
        if ok:
            return w, total_err, sub
        sub *= 2
        if sub > 1 << 16:
            raise RuntimeError("Krylov propagator could not reach the tolerance")


def _lanczos_step(matvec, v, tau, m_max):
    n = v.shape[0]
    beta0 = np.linalg.norm(v)
    m_max = min(m_max, n)
    V = np.zeros((m_max + 1, n), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    V[0] = v / beta0
    m = m_max
    for j in range(m_max):
        w = matvec(V[j])
        alpha[j] = np.real(np.vdot(V[j], w))
        w = w - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j else 0)
        # full reorthogonalization (twice is enough)
        for _ in range(2):
            w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < 1e-14 * max(1.0, abs(alpha[j])):
            m = j + 1
            T = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
            e = scipy.linalg.expm(-1j * tau * T)[:, 0]
            return beta0 * (V[:m].T @ e), 0.0
        V[j + 1] = w / beta[j]
        if j >= 3:
            T = np.diag(alpha[: j + 1]) + np.diag(beta[:j], 1) + np.diag(beta[:j], -1)
            e = scipy.linalg.expm(-1j * tau * T)[:, 0]
            err = beta0 * beta[j] * abs(e[-1])
            if err < 1e-15 * beta0:
                return beta0 * (V[: j + 1].T @ e), float(err)
    T = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
    e = scipy.linalg.expm(-1j * tau * T)[:, 0]
    err = beta0 * beta[m - 1] * abs(e[-1])
    return beta0 * (V[:m].T @ e), float(err)


# --------------------------------------------------------------------------
# gauge map between hole flux h and h + 1


@dataclass
class FluxGauge:
    """Unitary W = D_theta P with H(h + 1) = W H(h) W^dagger.

    ``perm[i]`` is the site that site i is mapped to (identity, or the leg
    exchange for the Mobius ladder); ``theta`` are the site phases of the
    diagonal part D_theta = exp(i sum_k theta_k n_k).
    """
    perm: np.ndarray
    theta: np.ndarray
    matrix: sps.csr_matrix

    @property
    def exchanges_legs(self) -> bool:
        return bool(np.any(self.perm != np.arange(len(self.perm))))

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


def _solve_gauge(links, perm, n_sites):
    """Site phases theta with A_l - (theta_a - theta_b) = A'_{(a,b)} mod 2 pi, or None."""
    target = {}
    for k, l in enumerate(links):
        target[(l.i, l.j, l.sign)] = (k, 1)
        if l.sign == 1:
            target[(l.j, l.i, 1)] = (k, -1)
    eqs = []  # theta_a - theta_b = rhs
    for k, l in enumerate(links):
        a, b = perm[l.i], perm[l.j]
        key = (a, b, l.sign)
        if key not in target:
            return None
        kk, d = target[key]
        if links[kk].E != l.E:
            return None
        eqs.append((a, b, l.sign, k, kk, d))
    return eqs


def find_flux_gauge(lh: LadderHamiltonian, h0: float = 0.0, atol: float = 1e-10) -> FluxGauge:
    """Find W with H(h0 + 1) = W H(h0) W^dagger by trying site permutations.

    The phases are obtained by propagating the link constraints along a
    spanning tree and then checked on every link and on the matrices.
    """
    spec = lh.spec
    links = lh.links
    n = spec.n_sites
    L = spec.rungs
    perms = [np.arange(n)]
    if spec.closed:
        perms.append(np.r_[np.arange(L, 2 * L), np.arange(L)])
    H0 = lh.matrix(h0)
    H1 = lh.matrix(h0 + 1)
    for perm in perms:
        eqs = _solve_gauge(links, perm, n)
        if eqs is None:
            continue
        # theta_a - s theta_b = A_l(h0) - d * A_kk(h0 + 1)
        rows = []
        for a, b, s, k, kk, d in eqs:
            rhs = links[k].phase(h0) - d * links[kk].phase(h0 + 1)
            rows.append((a, b, s, rhs))
        theta = np.full(n, np.nan)
        theta[0] = 0.0
        changed = True
        while changed:
            changed = False
            for a, b, s, rhs in rows:
                if np.isnan(theta[a]) and not np.isnan(theta[b]):
                    theta[a] = rhs + s * theta[b]
                    changed = True
                elif np.isnan(theta[b]) and not np.isnan(theta[a]) and s != 0:
                    theta[b] = (theta[a] - rhs) / s
                    changed = True
        if np.any(np.isnan(theta)):
            continue
        bad = [abs(math.remainder(theta[a] - s * theta[b] - rhs, 2 * math.pi))
               for a, b, s, rhs in rows]
        if max(bad) > 1e-9:
            continue
        W = _gauge_matrix(lh.basis, perm, theta)
        diff = abs(W @ H0 @ W.getH() - H1).max()
        if diff < atol:
            return FluxGauge(perm, np.mod(theta, 2 * math.pi), W)
    raise RuntimeError("no gauge map between hole flux h and h + 1 was found")


def _gauge_matrix(basis: ChargeBasis, perm: np.ndarray, theta: np.ndarray) -> sps.csr_matrix:
    # P |n> = |n'> with n'_{perm[i]} = n_i
    moved = np.empty_like(basis.states)
    moved[:, perm] = basis.states
    dst = basis.index_of(moved)
    phase = np.exp(1j * (moved.astype(float) @ theta))
    return sps.csr_matrix((phase, (dst, np.arange(basis.dim))), shape=(basis.dim,) * 2)


# --------------------------------------------------------------------------
# logical basis and ramps


def logical_basis(lh: LadderHamiltonian, hole_flux: float | None = None, *, seed: int = 0):
    """Doublet eigenpairs and the logical states diagonalizing the chirality sum.

    Returns (pairs, logical (dim x 2), S eigenvalues ascending).  Logical
    state 0 has the lower chirality-sum eigenvalue; its largest component is
    made real positive, and state 1 is phased so that <0|H|1> is real <= 0.
    """
    pairs = ground_spectrum(lh.operator(hole_flux), 3, seed=seed)
    P = np.array([p.vector for p in pairs[:2]]).T
    S = lh.chirality_sum_operator(hole_flux)
    s_vals, s_vecs = np.linalg.eigh(P.conj().T @ (S @ P))
    Lg = P @ s_vecs
    m = np.argmax(np.abs(Lg[:, 0]))
    Lg[:, 0] *= abs(Lg[m, 0]) / Lg[m, 0]
    H = lh.matrix(hole_flux)
    h01 = np.vdot(Lg[:, 0], H @ Lg[:, 1])
    if abs(h01) > 0:
        Lg[:, 1] *= -abs(h01) / h01
    else:
        m1 = np.argmax(np.abs(Lg[:, 1]))
        Lg[:, 1] *= abs(Lg[m1, 1]) / Lg[m1, 1]
    return pairs, Lg, s_vals


def flux_transport(lh: LadderHamiltonian, h0: float, n_flux: int) -> sps.csr_matrix:
    """Unitary U with U H(h0) U^dagger = H(h0 + n_flux) for integer n_flux."""
    U = sps.identity(lh.dim, dtype=complex, format="csr")
    h = h0
    step = 1 if n_flux > 0 else -1
    for _ in range(abs(int(n_flux))):
        if step > 0:
            U = find_flux_gauge(lh, h).matrix @ U
        else:
            U = find_flux_gauge(lh, h - 1).matrix.getH() @ U
        h += step
    return U.tocsr()


def cosine_schedule(s: float) -> float:
    return 0.5 * (1 - math.cos(math.pi * s))


@dataclass
class RampResult:
    total_time: float
    steps: int
    n_flux: int
    final_state: np.ndarray
    flip_fidelity: float        # |<U l_other | psi>|^2
    stay_fidelity: float        # |<U l_same | psi>|^2
    initial_overlap: float      # |<psi_0 | psi>|^2, no gauge map
    instantaneous_overlaps: tuple  # |<l_k(h_end) | psi>|^2 in the end-point logical basis
    halving_change: float
    min_gap: float
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total_time": self.total_time, "steps": self.steps, "n_flux": self.n_flux,
            "flip_fidelity": self.flip_fidelity, "stay_fidelity": self.stay_fidelity,
            "initial_overlap": self.initial_overlap,
            "instantaneous_overlaps": list(self.instantaneous_overlaps),
            "halving_change": self.halving_change, "min_gap": self.min_gap,
            "warnings": list(self.warnings),
        }


def _propagate(lh: LadderHamiltonian, psi, total_time, steps, h_from, h_to):
    dt = total_time / steps
    for k in range(steps):
        s = (k + 0.5) / steps
        h = h_from + (h_to - h_from) * cosine_schedule(s)
        H = lh.matrix(h)
        psi, _, _ = lanczos_expm(lambda x: H @ x, psi, dt)
    return psi


def gap_profile(lh: LadderHamiltonian, h_from: float, h_to: float, points: int = 9) -> float:
    """Smallest E_2 - E_1 at interior sample points of the ramp.

    The end points are excluded: there the two lowest levels form the logical
    doublet and are degenerate on purpose.
    """
    gaps = []
    for h in np.linspace(h_from, h_to, points)[1:-1]:
        ev = [p.value for p in ground_spectrum(lh.operator(h), 2)]
        gaps.append(ev[1] - ev[0])
    return float(min(gaps)) if gaps else math.nan


def _logical_index(Lg: np.ndarray, psi: np.ndarray) -> int:
    w = [abs(np.vdot(Lg[:, k], psi)) ** 2 for k in range(2)]
    return int(np.argmax(w))


def adiabatic_ramp(spec: LadderSpec, total_time: float, steps: int | None = None,
                   initial: np.ndarray | None = None, *, lh: LadderHamiltonian | None = None,
                   n_flux: int = 1, h_start: float | None = None,
                   halving_tol: float = 1e-4, max_steps: int = 1 << 14,
                   gap_floor: float = 0.05, check_gap: bool = True) -> RampResult:
    """Ramp the hole flux by ``n_flux`` quanta (either sign) on a cosine schedule.

    The state is propagated with the midpoint Hamiltonian of each step and a
    Krylov exponential.  The step count is doubled until the flip fidelity
    changes by less than ``halving_tol`` under halving the step.  Overlaps
    are taken with the start-point logical states transported to the end
    point by the integer-flux gauge map.  "Flip" means the logical state
    other than the one ``initial`` mostly overlaps (logical 0 by default).
    """
    lh = lh or LadderHamiltonian(spec)
    h0 = spec.hole_flux if h_start is None else h_start
    _, Lg, _ = logical_basis(lh, h0)
    if initial is None:
        initial = Lg[:, 0]
    initial = np.asarray(initial, dtype=complex)
    initial = initial / np.linalg.norm(initial)
    src = _logical_index(Lg, initial)
    UL = flux_transport(lh, h0, n_flux) @ Lg
    if steps is None:
        steps = max(16, int(math.ceil(4 * total_time)))
    warn = []

    def fid(psi, k):
        return abs(np.vdot(UL[:, k], psi)) ** 2

    h1 = h0 + n_flux
    psi = _propagate(lh, initial, total_time, steps, h0, h1)
    change = 0.0
    while total_time != 0:
        psi2 = _propagate(lh, initial, total_time, 2 * steps, h0, h1)
        change = abs(fid(psi2, 1 - src) - fid(psi, 1 - src))
        psi, steps = psi2, 2 * steps
        if change < halving_tol:
            break
        if 2 * steps > max_steps:
            warn.append(f"step halving did not converge below {halving_tol} (change {change:.2e})")
            break
    min_gap = math.nan
    if check_gap:
        min_gap = gap_profile(lh, h0, h1)
        if min_gap < gap_floor:
            msg = f"minimum gap along the ramp {min_gap:.3g} < floor {gap_floor}"
            warn.append(msg)
            log.warning(msg)
    _, Lg_end, _ = logical_basis(lh, h1)
    inst = tuple(float(abs(np.vdot(Lg_end[:, k], psi)) ** 2) for k in range(2))
    return RampResult(
        total_time=total_time, steps=steps, n_flux=int(n_flux), final_state=psi,
        flip_fidelity=float(fid(psi, 1 - src)), stay_fidelity=float(fid(psi, src)),
        initial_overlap=float(abs(np.vdot(initial, psi)) ** 2),
        instantaneous_overlaps=inst, halving_change=float(change),
        min_gap=min_gap, warnings=warn)


@dataclass
class DoubleRampResult:
    first: RampResult
    second: RampResult
    return_fidelity: float   # overlap with the initial logical state, transported to the end flux
    protocol: str

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "return_fidelity": self.return_fidelity,
                "first": self.first.to_dict(), "second": self.second.to_dict()}


def double_ramp(spec: LadderSpec, total_time: float, *, protocol: str = "flip",
                lh: LadderHamiltonian | None = None, **kw) -> DoubleRampResult:
    """Two consecutive single-flux ramps starting from logical state 0.

    ``protocol="flip"``: each ramp uses the flux direction that flips the
    current logical state (+1 for logical 0, -1 for logical 1), so the pair
    should return the initial state.  ``protocol="same"``: both ramps add
    +1 flux quantum.
    """
    if protocol not in ("flip", "same"):
        raise ValueError("protocol must be 'flip' or 'same'")
    lh = lh or LadderHamiltonian(spec)
    h0 = spec.hole_flux
    _, Lg, _ = logical_basis(lh, h0)
    r1 = adiabatic_ramp(spec, total_time, lh=lh, n_flux=1, **kw)
    n2 = -1 if protocol == "flip" else 1
    r2 = adiabatic_ramp(spec, total_time, initial=r1.final_state, lh=lh, n_flux=n2,
                        h_start=h0 + 1, **kw)
    U = flux_transport(lh, h0, 1 + n2)
    ret = float(abs(np.vdot(U @ Lg[:, 0], r2.final_state)) ** 2)
    return DoubleRampResult(r1, r2, ret, protocol)

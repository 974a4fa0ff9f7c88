"""Dedekind eta, Jacobi theta functions with rational characteristics, and
square roots continued analytically along paths.

Conventions
-----------
The nome is ``q = exp(2*pi*i*tau)`` and

    Theta[a; b](z | tau) = sum_n exp(i*pi*tau*(n+a)**2 + 2*pi*i*(n+a)*(z+b))

with ``theta_1 = -Theta[1/2; 1/2]``, ``theta_2 = Theta[1/2; 0]``,
``theta_3 = Theta[0; 0]`` and ``theta_4 = Theta[0; 1/2]``.

Two implementation details matter for the "identically zero" checks built on
top of this module:

* the characteristic phase ``exp(2*pi*i*(n+a)*b)`` is evaluated from the exact
  rational ``(n+a)*b``; quarter-turns come out as exact ``+-1``/``+-i``;
* the partial sums are accumulated with exact (correctly rounded) summation,
  so terms that are exact negatives of each other cancel to exactly zero
  (``theta_4(tau/2 | tau) == 0`` bit for bit).

Everything works in double precision by default.  A :class:`SeriesControl`
with ``extended=True`` switches the same code paths to ``mpmath`` at
``dps`` significant digits; callers that combine several extended values
must do so inside :func:`working_precision` so intermediate arithmetic is not
rounded back to 53 bits.
"""
from __future__ import annotations

import cmath
import contextlib
import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath

__all__ = [
    "ModularError",
    "TruncationError",
    "DomainError",
    "ZeroOnPathError",
    "SeriesControl",
    "DOUBLE",
    "EXTENDED",
    "TorusModulus",
    "TorusPoint",
    "ThetaCharacteristic",
    "ComplexPath",
    "as_modulus",
    "working_precision",
    "root_of_unity",
    "dedekind_eta",
    "theta_char",
    "jacobi_theta",
    "theta1_prime",
    "tracked_sqrt",
    "write_golden_csv",
]


class ModularError(Exception):
    """Base class for evaluation failures in this module."""


class TruncationError(ModularError):
    """Series could not be truncated below the requested tolerance."""

    def __init__(self, message: str, achieved_bound: float):
        super().__init__(f"{message} (achieved tail bound {achieved_bound:.3e})")
        self.achieved_bound = achieved_bound


class DomainError(ModularError):
    """Argument outside the guarded evaluation domain."""


class ZeroOnPathError(ModularError):
    """The function being square-rooted vanishes (to resolution) on the path."""

    def __init__(self, message: str, point: complex):
        super().__init__(f"{message} near z = {complex(point):.6g}; deform the path")
        self.point = point


@dataclass(frozen=True)
class SeriesControl:
    """Truncation and precision settings shared by all series evaluations.

    Frozen (hashable) so it can key caches.  ``tail_tolerance`` bounds the
    dropped tail relative to the scale of the largest retained term.
    """

    tail_tolerance: float = 1e-14
    max_terms: int = 64
    extended: bool = False
    dps: int = 34
    exact_derivative: bool = True
    # |Im z| <= im_guard * Im(tau) for theta arguments
    im_guard: float = 4.0

    def __post_init__(self):
        if not self.tail_tolerance > 0:
            raise ValueError("tail_tolerance must be positive")
        if self.max_terms < 16:
            raise ValueError("max_terms must be at least 16")
        if self.extended and self.dps < 30:
            raise ValueError("extended precision needs dps >= 30")
        if not self.im_guard > 0:
            raise ValueError("im_guard must be positive")

    @property
    def zero_level(self) -> float:
        """Relative magnitude below which a sampled value counts as zero."""
        return 1e-12 if not self.extended else 10.0 ** (-(self.dps - 6))


DOUBLE = SeriesControl()
EXTENDED = SeriesControl(tail_tolerance=1e-36, max_terms=96, extended=True, dps=40)


@dataclass(frozen=True)
class TorusModulus:
    tau: complex

    def __post_init__(self):
        tau = complex(self.tau)
        if not (math.isfinite(tau.real) and math.isfinite(tau.imag)):
            raise DomainError("tau must be finite")
        if tau.imag <= 0:
            raise DomainError(f"Im tau must be positive, got {tau}")
        object.__setattr__(self, "tau", tau)

    @property
    def nome(self) -> complex:
        return cmath.exp(2j * math.pi * self.tau)


@dataclass(frozen=True)
class TorusPoint:
    w: complex
    modulus: TorusModulus
    w_max_factor: float = 4.0

    def __post_init__(self):
        w = complex(self.w)
        if not (math.isfinite(w.real) and math.isfinite(w.imag)):
            raise DomainError("w must be finite")
        if abs(w.imag) > self.w_max_factor * self.modulus.tau.imag:
            raise DomainError(
                f"|Im w| = {abs(w.imag):.3g} exceeds guard "
                f"{self.w_max_factor} * Im tau")
        object.__setattr__(self, "w", w)

    @property
    def nome(self) -> complex:
        return self.modulus.nome


@dataclass(frozen=True)
class ThetaCharacteristic:
    a: Fraction
    b: Fraction

    def __post_init__(self):
        a, b = Fraction(self.a), Fraction(self.b)
        if a.denominator > 8 or b.denominator > 8:
            raise ValueError("characteristic denominators must be <= 8")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class ComplexPath:
    """Polygonal path through ``waypoints`` with a per-step argument bound."""

    waypoints: tuple
    max_arg_step: float = math.pi / 8

    def __post_init__(self):
        pts = tuple(self.waypoints)
        if len(pts) < 1:
            raise ValueError("path needs at least one waypoint")
        for p, q in zip(pts, pts[1:]):
            if p == q:
                raise ValueError("consecutive waypoints must be distinct")
        if not (0 < self.max_arg_step <= math.pi / 4):
            raise ValueError("max_arg_step must lie in (0, pi/4]")
        object.__setattr__(self, "waypoints", pts)

    @classmethod
    def offset_straight(cls, start, end, delta: float = 1e-3,
                        max_arg_step: float = math.pi / 8) -> "ComplexPath":
        """Straight segment start -> end lifted sideways by ``delta``.

        The waypoints are start, start+o, end+o, end with ``|o| = delta``
        perpendicular to the segment and pointing into the upper half plane
        (for a real segment, ``o = i*delta``).  The lift steps around zeros
        lying on the segment itself; an endpoint that is itself a zero is
        approached head-on along the last leg.
        """
        start, end = complex(start), complex(end)
        d = end - start
        o = 1j * delta * (d / abs(d)) if d != 0 else 1j * delta
        if o.imag < 0:
            o = -o
        raw = [start, start + o, end + o, end]
        pts = [raw[0]]
        for p in raw[1:]:
            if p != pts[-1]:
                pts.append(p)
        return cls(tuple(pts), max_arg_step)


def as_modulus(m) -> TorusModulus:
    return m if isinstance(m, TorusModulus) else TorusModulus(complex(m))


@contextlib.contextmanager
def working_precision(ctrl: SeriesControl):
    """Raise mpmath's working precision for the block when ``ctrl`` is extended."""
    if ctrl.extended:
        with mpmath.workdps(ctrl.dps):
            yield
    else:
        yield


# --------------------------------------------------------------------------
# scalar backend helpers


def _num(x, ctrl: SeriesControl):
    if ctrl.extended:
        if isinstance(x, (mpmath.mpc, mpmath.mpf)):
            return mpmath.mpc(x)
        x = complex(x)
        return mpmath.mpc(x.real, x.imag)
    return complex(x)


def _exp(x, ctrl):
    return mpmath.exp(x) if ctrl.extended else cmath.exp(x)


def _pi(ctrl):
    return mpmath.pi if ctrl.extended else math.pi


def _exact_sum(terms: Sequence, ctrl):
    if ctrl.extended:
        return mpmath.mpc(mpmath.fsum(t.real for t in terms),
                          mpmath.fsum(t.imag for t in terms))
    return complex(math.fsum(t.real for t in terms),
                   math.fsum(t.imag for t in terms))


_QUARTER_TURNS = {0: 1 + 0j, 1: 1j, 2: -1 + 0j, 3: -1j}


def root_of_unity(frac: Fraction, ctrl: SeriesControl = DOUBLE):
    """exp(2*pi*i*frac) for rational ``frac``; exact at multiples of 1/4."""
    frac = Fraction(frac) % 1
    if (4 * frac).denominator == 1:
        v = _QUARTER_TURNS[int(4 * frac)]
        return _num(v, ctrl)
    if ctrl.extended:
        return mpmath.expjpi(2 * mpmath.mpf(frac.numerator) / frac.denominator)
    return cmath.exp(2j * math.pi * frac.numerator / frac.denominator)


# --------------------------------------------------------------------------
# eta


def dedekind_eta(modulus, ctrl: SeriesControl = DOUBLE):
    """eta(tau) = q^(1/24) * prod_{n>=1} (1 - q^n).

    The product is cut once ``|q|^(n+1) / (1-|q|)`` drops below the tail
    tolerance; that quantity bounds the relative error of the dropped factors.
    """
    modulus = as_modulus(modulus)
    aq = math.exp(-2 * math.pi * modulus.tau.imag)
    with working_precision(ctrl):
        tau = _num(modulus.tau, ctrl)
        two_pi_i = 2j * _pi(ctrl)
        prod = _num(1, ctrl)
        n = 0
        bound = math.inf
        while True:
            n += 1
            if n > ctrl.max_terms:
                raise TruncationError("eta product did not converge", bound)
            prod *= 1 - _exp(two_pi_i * n * tau, ctrl)
            bound = aq ** (n + 1) / (1 - aq) if aq < 1 else math.inf
            if bound < ctrl.tail_tolerance:
                break
        return _exp(two_pi_i * tau / 24, ctrl) * prod


# --------------------------------------------------------------------------
# theta with characteristics


def _window(a: Fraction, z: complex, tau: complex, ctrl: SeriesControl,
            radius: float | None = None):
    """Index window [lo, hi] for the sum over n, and its relative tail bound.

    Term magnitudes are Gaussian in k = n + a, peaking at k* = -Im z / Im tau.
    The window keeps every k with |k - k*| <= R; it is symmetric about k*, so
    terms that are mirror images of each other (and cancel when the
    characteristic says so) are always kept or dropped together.  For real z
    and a = 0 this is the usual symmetric range [-N, N].
    """
    t = tau.imag
    k_star = -z.imag / t
    if math.pi * t * k_star * k_star > 700 and not ctrl.extended:
        raise DomainError(f"theta terms overflow double precision at Im z = {z.imag:.3g}")
    if radius is None:
        radius = math.sqrt(-math.log(ctrl.tail_tolerance) / (math.pi * t)) + 1.0
    af = float(a)
    lo = math.ceil(k_star - radius - af)
    hi = math.floor(k_star + radius - af)
    # distance from the peak to the nearest dropped k
    d = min(hi + 1 + af - k_star, k_star - (lo - 1 + af))
    bound = 2 * math.exp(-math.pi * t * d * d) / (1 - math.exp(-2 * math.pi * t * d))
    return lo, hi, bound


def theta_char(char: ThetaCharacteristic, z, modulus, ctrl: SeriesControl = DOUBLE,
               *, radius: float | None = None):
    """Theta[a; b](z | tau) by a truncated sum.

    ``radius`` overrides the automatic window radius (in units of k = n + a;
    used by the window-doubling property tests).  The tail bound is relative
    to the largest term.
    """
    modulus = as_modulus(modulus)
    tau_c = modulus.tau
    zc = complex(z)
    if abs(zc.imag) > ctrl.im_guard * tau_c.imag:
        raise DomainError(
            f"|Im z| = {abs(zc.imag):.3g} exceeds guard {ctrl.im_guard} * Im tau")
    lo, hi, bound = _window(char.a, zc, tau_c, ctrl, radius)
    if hi - lo + 1 > ctrl.max_terms:
        raise TruncationError(
            f"theta window needs {hi - lo + 1} terms > max_terms={ctrl.max_terms}", bound)
    if radius is None and bound > ctrl.tail_tolerance:
        raise TruncationError("theta window too small", bound)
    tr, ti = _to_frac(tau_c.real), _to_frac(tau_c.imag)
    if ctrl.extended and isinstance(z, (mpmath.mpc, mpmath.mpf)):
        zr, zi = _to_frac(mpmath.mpc(z).real), _to_frac(mpmath.mpc(z).imag)
    else:
        zr, zi = _to_frac(zc.real), _to_frac(zc.imag)
    with working_precision(ctrl):
        ipi = 1j * _pi(ctrl)
        terms = []
        for n in range(lo, hi + 1):
            k = n + char.a
            # k*(k*tau + 2z) evaluated exactly, rounded once: cancelling
            # partner terms then have bit-identical exponents
            xr = k * (k * tr + 2 * zr)
            xi = k * (k * ti + 2 * zi)
            term = _exp(ipi * _from_frac_pair(xr, xi, ctrl), ctrl)
            ph = (k * char.b) % 1
            if ph:
                term = term * root_of_unity(ph, ctrl)
            terms.append(term)
        return _exact_sum(terms, ctrl)


def _to_frac(x) -> Fraction:
    if isinstance(x, mpmath.mpf):
        sign, man, exp, _ = x._mpf_
        if not man:
            return Fraction(0)
        return (-1) ** sign * Fraction(int(man)) * Fraction(2) ** exp
    return Fraction(float(x))


def _from_frac_pair(xr: Fraction, xi: Fraction, ctrl: SeriesControl):
    if ctrl.extended:
        return mpmath.mpc(mpmath.mpf(xr.numerator) / xr.denominator,
                          mpmath.mpf(xi.numerator) / xi.denominator)
    return complex(float(xr), float(xi))


_KIND = {
    1: (ThetaCharacteristic(Fraction(1, 2), Fraction(1, 2)), -1),
    2: (ThetaCharacteristic(Fraction(1, 2), Fraction(0)), 1),
    3: (ThetaCharacteristic(Fraction(0), Fraction(0)), 1),
    4: (ThetaCharacteristic(Fraction(0), Fraction(1, 2)), 1),
}


def jacobi_theta(kind: int, z, modulus, ctrl: SeriesControl = DOUBLE):
    """Standard theta_1 .. theta_4 with nome q = exp(2 pi i tau)."""
    if kind not in _KIND:
        raise ValueError(f"theta kind must be 1..4, got {kind}")
    char, sign = _KIND[kind]
    v = theta_char(char, z, modulus, ctrl)
    return -v if sign < 0 else v


def _theta1_prime_series(modulus: TorusModulus, ctrl: SeriesControl):
    # d/dz of -Theta[1/2;1/2] at z = 0, term by term
    lo, hi, bound = _window(Fraction(1, 2), 0j, modulus.tau, ctrl)
    # one extra term each side covers the polynomial factor k in the derivative
    lo, hi = lo - 1, hi + 1
    if hi - lo + 1 > ctrl.max_terms:
        raise TruncationError("theta1' window exceeds max_terms", bound)
    with working_precision(ctrl):
        tau = _num(modulus.tau, ctrl)
        pi = _pi(ctrl)
        terms = []
        for n in range(lo, hi + 1):
            k = Fraction(2 * n + 1, 2)
            kf = mpmath.mpf(k.numerator) / 2 if ctrl.extended else k.numerator / 2
            t = _exp(1j * pi * tau * kf * kf, ctrl) * (2j * pi * kf)
            terms.append(t * root_of_unity(k / 2, ctrl))
        return -_exact_sum(terms, ctrl)


def _theta1_prime_richardson(modulus: TorusModulus, ctrl: SeriesControl,
                             h0: float = 0.05, levels: int = 5):
    # central differences D(h) = (th1(h) - th1(-h)) / 2h have an even error
    # expansion in h, so halving h and eliminating h^2, h^4, ... converges fast
    table = []
    with working_precision(ctrl):
        for j in range(levels):
            h = h0 / 2 ** j
            d = (jacobi_theta(1, h, modulus, ctrl) - jacobi_theta(1, -h, modulus, ctrl)) / (2 * h)
            row = [d]
            for m in range(1, j + 1):
                f = 4 ** m
                row.append((f * row[m - 1] - table[j - 1][m - 1]) / (f - 1))
            table.append(row)
        return table[-1][-1]


def theta1_prime(modulus, ctrl: SeriesControl = DOUBLE, mode: str | None = None):
    """theta_1'(0 | tau).

    ``mode='exact'`` differentiates the series term by term, ``mode='fd'``
    uses Richardson-extrapolated central differences.  Default follows
    ``ctrl.exact_derivative``.
    """
    modulus = as_modulus(modulus)
    if mode is None:
        mode = "exact" if ctrl.exact_derivative else "fd"
    if mode == "exact":
        return _theta1_prime_series(modulus, ctrl)
    if mode == "fd":
        return _theta1_prime_richardson(modulus, ctrl)
    raise ValueError(f"unknown theta1' mode {mode!r}")


# --------------------------------------------------------------------------
# branch tracking


def _phase(x, ctrl):
    return float(mpmath.arg(x)) if ctrl.extended else cmath.phase(x)


def _principal_sqrt(x, ctrl):
    return mpmath.sqrt(x) if ctrl.extended else cmath.sqrt(x)


def tracked_sqrt(f: Callable, path: ComplexPath, ctrl: SeriesControl = DOUBLE,
                 *, allow_zero_end: bool = False, min_step: float = 1e-12):
    """Analytic continuation of sqrt(f) along ``path``.

    Starts from the principal branch at the first waypoint.  Each segment is
    walked adaptively: a step is accepted only when the argument of ``f``
    moves by at most ``path.max_arg_step``; otherwise the step is halved.

    Returns ``(value_at_end, winding)`` where ``winding`` is the accumulated
    change of ``arg f`` divided by two.  The end value is the principal root
    of ``f(end)`` times the sign fixed by the tracked argument, so squaring it
    reproduces ``f(end)`` to rounding.

    If ``allow_zero_end`` is set and ``f`` vanishes (to resolution) exactly
    at the final waypoint, the value is zero and the winding is what was
    accumulated on the way there.
    """
    pts = path.waypoints
    with working_precision(ctrl):
        z0 = pts[0]
        f0 = f(z0)
        scale = abs(f0)
        if scale == 0:
            raise ZeroOnPathError("f vanishes at the path start", z0)
        arg0 = _phase(f0, ctrl)
        acc = arg0
        prev = f0
        n_seg = len(pts) - 1
        for s in range(n_seg):
            a, b = pts[s], pts[s + 1]
            last_seg = s == n_seg - 1
            t, dt = 0.0, 0.125
            while t < 1.0:
                t_new = min(1.0, t + dt)
                z = b if t_new == 1.0 else a + (b - a) * t_new
                fz = f(z)
                mag = abs(fz)
                if mag <= ctrl.zero_level * scale:
                    if allow_zero_end and last_seg and t_new == 1.0:
                        return _num(0, ctrl), (acc - arg0) / 2
                    if dt > min_step and mag != 0:
                        dt /= 2
                        continue
                    raise ZeroOnPathError("f vanishes on the path", z)
                step = _phase(fz / prev, ctrl)
                if abs(step) > path.max_arg_step:
                    dt /= 2
                    if dt < min_step:
                        raise ZeroOnPathError("argument step not resolvable", z)
                    continue
                acc += step
                prev = fz
                scale = max(scale, float(mag))
                t = t_new
                dt = min(0.125, dt * 2)
        root = _principal_sqrt(prev, ctrl)
        k = round((acc - _phase(prev, ctrl)) / (2 * math.pi))
        value = -root if k % 2 else root
        return value, (acc - arg0) / 2


# --------------------------------------------------------------------------
# golden values


def write_golden_csv(rows: Iterable, path) -> None:
    """Write (w, tau, value) triples as re/im columns with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["re_w", "im_w", "re_tau", "im_tau", "re_value", "im_value"])
        for w, tau, value in rows:
            w, tau, value = complex(w), complex(tau), complex(value)
            wr.writerow([f"{x:.17g}" for x in
                         (w.real, w.imag, tau.real, tau.imag, value.real, value.imag)])


def read_golden_csv(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return [(complex(float(r[0]), float(r[1])), complex(float(r[2]), float(r[3])),
                 complex(float(r[4]), float(r[5]))) for r in rd]

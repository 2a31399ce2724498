"""Constructors for the probe-state families used in rotation sensing."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import least_squares, minimize

from .errors import DegenerateInputError, DomainError, KingSearchError
from .su2 import TWO_PI, HalfInt, angular_momentum_moments

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class BlochPoint:
    """Direction on the unit sphere: polar in [0, pi], azimuth stored mod 2*pi."""

    polar: float
    azimuth: float

    def __post_init__(self):
        pol, az = float(self.polar), float(self.azimuth)
        if not (-1e-12 <= pol <= math.pi + 1e-12):
            raise DomainError(f"polar angle must lie in [0, pi], got {pol}")
        if not math.isfinite(az):
            raise DomainError(f"azimuth must be finite, got {az}")
        object.__setattr__(self, "polar", min(max(pol, 0.0), math.pi))
        object.__setattr__(self, "azimuth", az % TWO_PI)

    @property
    def unit_vector(self) -> np.ndarray:
        sp = math.sin(self.polar)
        return np.array([sp * math.cos(self.azimuth),
                         sp * math.sin(self.azimuth),
                         math.cos(self.polar)])

    @classmethod
    def from_vector(cls, v) -> "BlochPoint":
        v = np.asarray(v, dtype=float)
        r = np.linalg.norm(v)
        if r < 1e-300:
            raise DomainError("cannot infer a direction from the zero vector")
        return cls(math.acos(min(1.0, max(-1.0, v[2] / r))),
                   math.atan2(v[1], v[0]) % TWO_PI)

    def antipode(self) -> "BlochPoint":
        return BlochPoint(math.pi - self.polar, self.azimuth + math.pi)


@dataclass(frozen=True)
class SpinState:
    """Normalized amplitude vector over |J m> with m = +J ... -J."""

    j: HalfInt
    amps: np.ndarray

    def __post_init__(self):
        a = np.array(self.amps, dtype=complex)
        if a.shape != (self.j.dim,):
            raise DomainError(
                f"amplitude vector must have length {self.j.dim}, got shape {a.shape}")
        norm = np.linalg.norm(a)
        if abs(norm - 1.0) > _NORM_TOL:
            raise DomainError(f"state must be normalized, |norm - 1| = {abs(norm - 1.0):.2e}")
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    @classmethod
    def from_amplitudes(cls, j: HalfInt, amps) -> "SpinState":
        """Normalize an arbitrary non-zero amplitude vector (phase untouched).

        Vectors already normalized to float precision pass through bit for
        bit, so serialized states survive a read/write cycle unchanged.
        """
        a = np.asarray(amps, dtype=complex)
        norm = np.linalg.norm(a)
        if norm < 1e-12:
            raise DegenerateInputError("amplitude vector is numerically zero")
        if abs(norm - 1.0) > 1e-12:
            a = a / norm
        return cls(j, a)

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amps, self.amps.conj())

    def mean_spin(self) -> np.ndarray:
        mean, _ = angular_momentum_moments(self.j, self.amps)
        return mean

    def overlap(self, other: "SpinState") -> complex:
        return complex(np.vdot(self.amps, other.amps))

    def rotate(self, params) -> "SpinState":
        from .su2 import rotation_unitary
        return SpinState(self.j, rotation_unitary(self.j, params) @ self.amps)


def _canonical_phase(amps: np.ndarray) -> np.ndarray:
    """Multiply by a global phase so the first non-negligible amplitude is
    real and positive; makes serialized states reproducible."""
    idx = np.argmax(np.abs(amps) > 1e-12)
    pivot = amps[idx]
    if abs(pivot) < 1e-12:
        return amps
    return amps * (abs(pivot) / pivot)


def _canonical(j: HalfInt, amps: np.ndarray) -> SpinState:
    a = np.asarray(amps, dtype=complex)
    a = a / np.linalg.norm(a)
    return SpinState(j, _canonical_phase(a))


def _m_index(j: HalfInt, m: float) -> int:
    twice_m = 2.0 * float(m)
    rounded = round(twice_m)
    if abs(twice_m - rounded) > 1e-9 or (j.twice_j - rounded) % 2 != 0:
        raise DomainError(f"m = {m} does not match the parity of J = {j}")
    if abs(rounded) > j.twice_j:
        raise DomainError(f"m = {m} outside [-J, J] for J = {j}")
    return (j.twice_j - rounded) // 2


def basis_state(j: HalfInt, m) -> SpinState:
    """|J m>, an eigenstate of jz with eigenvalue m."""
    amps = np.zeros(j.dim, dtype=complex)
    amps[_m_index(j, m)] = 1.0
    return SpinState(j, amps)


def coherent_state(j: HalfInt, point: BlochPoint) -> SpinState:
    """Spin coherent state: +J eigenstate of J.n for the given direction.

    Amplitudes psi_m = sqrt(C(2J, J+m)) cos(t/2)^(J+m) sin(t/2)^(J-m)
    e^{i (J-m) phi}, which is the stereographic form with
    z = tan(t/2) e^{i phi} written to stay stable at the south pole.
    """
    half = point.polar / 2.0
    c, s = math.cos(half), math.sin(half)
    n = j.twice_j
    amps = np.empty(j.dim, dtype=complex)
    for i in range(j.dim):
        # i = J - m, so J + m = n - i
        amps[i] = (math.sqrt(math.comb(n, i)) * (c ** (n - i)) * (s ** i)
                   * np.exp(1j * i * point.azimuth))
    return _canonical(j, amps)


def noon_state(j: HalfInt) -> SpinState:
    """(|J J> - |J -J>)/sqrt(2)."""
    if j.twice_j == 0:
        raise DomainError("J = 0 carries no NOON state")
    amps = np.zeros(j.dim, dtype=complex)
    amps[0] = 1.0 / math.sqrt(2.0)
    amps[-1] = -1.0 / math.sqrt(2.0)
    return SpinState(j, amps)


def cat_state(j: HalfInt, z: complex) -> SpinState:
    """Normalized difference of coherent states at z and -z.

    z is the stereographic coordinate tan(polar/2) e^{i azimuth}; -z is the
    mirror point (same polar, azimuth + pi).  The normalization is computed
    numerically from the constructed vector.
    """
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError("z must be finite; the |z| -> inf limit is a basis state")
    polar = 2.0 * math.atan(abs(z))
    azimuth = math.atan2(z.imag, z.real)
    plus = coherent_state(j, BlochPoint(polar, azimuth))
    minus = coherent_state(j, BlochPoint(polar, azimuth + math.pi))
    diff = plus.amps - minus.amps
    norm = np.linalg.norm(diff)
    if norm < 1e-12:
        raise DegenerateInputError(
            f"coherent branches coincide at z = {z}; cat state undefined")
    return _canonical(j, diff)


def balanced_state(j: HalfInt, m) -> SpinState:
    """(|J m> + |J -m>)/sqrt(2) with m > 1/2: equatorial stars plus polar stars."""
    if float(m) <= 0.5:
        raise DomainError(f"balanced state requires m > 1/2, got m = {m}")
    i_hi = _m_index(j, m)
    i_lo = _m_index(j, -float(m))
    amps = np.zeros(j.dim, dtype=complex)
    amps[i_hi] = 1.0 / math.sqrt(2.0)
    amps[i_lo] += 1.0 / math.sqrt(2.0)
    return SpinState(j, amps)


def _isotropy_residual(j: HalfInt, amps: np.ndarray) -> np.ndarray:
    """Stacked optimality conditions: mean spin zero and isotropic second
    moments.  Czz is omitted (fixed by the trace once the mean vanishes)."""
    mean, cov = angular_momentum_moments(j, amps)
    c = j.j * (j.j + 1.0) / 3.0
    return np.array([
        mean[0], mean[1], mean[2],
        cov[0, 0] - c, cov[1, 1] - c,
        cov[0, 1], cov[0, 2], cov[1, 2],
    ])


def _isotropy_error(j: HalfInt, amps: np.ndarray) -> float:
    mean, cov = angular_momentum_moments(j, amps)
    c = j.j * (j.j + 1.0) / 3.0
    dev = np.max(np.abs(cov - c * np.eye(3)))
    return max(dev, float(np.max(np.abs(mean))))


def _unpack(x: np.ndarray, dim: int) -> np.ndarray:
    a = x[:dim] + 1j * x[dim:]
    return a / np.linalg.norm(a)


def king_state(j: HalfInt, seed: int = 20, n_starts: int = 20,
               tol: float = 1e-8) -> SpinState:
    """State with vanishing mean spin and isotropic angular momentum
    covariance C = (J(J+1)/3) * identity.

    When m* = sqrt(J(J+1)/3) is an admissible half-integer (m* > 1 with the
    right parity) the balanced superposition (|J m*> + |J -m*>)/sqrt(2) is
    returned directly.  Otherwise a multi-start numerical search minimizes
    Tr C^-1 + penalty |<J>|^2 and a least-squares polish drives the
    optimality conditions below ``tol``; failure raises KingSearchError with
    the best achieved values.
    """
    target = j.j * (j.j + 1.0) / 3.0
    m_star = math.sqrt(target)
    twice_m = round(2.0 * m_star)
    if (abs(2.0 * m_star - twice_m) < 1e-9 and twice_m > 2
            and (j.twice_j - twice_m) % 2 == 0 and twice_m <= j.twice_j):
        return balanced_state(j, twice_m / 2.0)

    dim = j.dim
    penalty = 10.0 * (j.j + 1.0) ** 2

    def objective(x):
        a = _unpack(x, dim)
        mean, cov = angular_momentum_moments(j, a)
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0 or logdet < -60:
            return 1e12
        return float(np.trace(np.linalg.inv(cov)) + penalty * (mean @ mean))

    best_amps = None
    best_err = np.inf
    best_tr = np.inf
    for run in range(n_starts):
        rng = np.random.default_rng((seed, run))
        x0 = rng.standard_normal(2 * dim)
        try:
            res = minimize(objective, x0, method="L-BFGS-B",
                           options={"maxiter": 400})
        except Exception:
            continue
        x_stage = res.x if np.isfinite(res.fun) else x0
        polish = least_squares(
            lambda x: _isotropy_residual(j, _unpack(x, dim)),
            x_stage, method="trf", xtol=3e-16, ftol=3e-16, gtol=3e-16,
            max_nfev=4000)
        a = _unpack(polish.x, dim)
        err = _isotropy_error(j, a)
        if err < best_err:
            best_err = err
            best_amps = a
            _, cov = angular_momentum_moments(j, a)
            eigs = np.linalg.eigvalsh(cov)
            if eigs[0] <= 1e-12 * max(eigs[-1], 1.0):
                best_tr = np.inf
            else:
                best_tr = float(np.sum(1.0 / eigs))
        if best_err <= tol * 1e-2:
            break
    if best_amps is None or best_err > tol:
        raise KingSearchError(
            f"no isotropic state found for J = {j}: best isotropy error "
            f"{best_err:.3e}, best Tr C^-1 {best_tr:.6f} "
            f"(bound 9/(J(J+1)) = {9.0 / (j.j * (j.j + 1.0)):.6f})",
            best_trace_inverse=best_tr, best_isotropy_error=best_err)
    return _canonical(j, best_amps)

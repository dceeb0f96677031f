"""Two-qubit state utilities: normalization, concurrence, and Bell-basis decomposition.

Pure states live in the ordered basis (|ee>, |eg>, |ge>, |gg>).  All objects
here are immutable values and all functions are pure, so they are safe to use
from any number of workers.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import InvalidDensityError, InvalidStateError

__all__ = [
    "PureTwoQubitState",
    "TwoQubitDensity",
    "BellAmplitudes",
    "make_product_state",
    "concurrence_pure",
    "concurrence_mixed",
    "bell_decompose",
    "bell_compose",
]

NORM_ATOL = 1e-8          # allowed norm drift before concurrence_pure complains
_EIG_CLAMP = -1e-10       # PSD floating-point drift tolerance

# sigma_y (x) sigma_y, the spin-flip matrix (real in this basis)
_SPIN_FLIP = np.array(
    [
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
    ]
)


def _as_amps(amps) -> np.ndarray:
    a = np.asarray(amps, dtype=np.complex128)
    if a.shape != (4,):
        raise InvalidStateError(f"expected 4 amplitudes, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(np.float64))):
        raise InvalidStateError("non-finite amplitude")
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class PureTwoQubitState:
    """Pure two-qubit state: 4 complex amplitudes ordered (ee, eg, ge, gg)."""

    amps: np.ndarray

    def __post_init__(self):
        a = _as_amps(self.amps).copy()
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "PureTwoQubitState":
        n = self.norm()
        if n < 1e-300:
            raise InvalidStateError("cannot normalize a zero state vector")
        return PureTwoQubitState(self.amps / n)

    def density(self) -> "TwoQubitDensity":
        a = self.normalized().amps
        return TwoQubitDensity(np.outer(a, a.conj()))


@dataclasses.dataclass(frozen=True, eq=False)
class TwoQubitDensity:
    """4x4 density matrix; validated on construction."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.shape != (4, 4):
            raise InvalidDensityError(f"expected a 4x4 matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise InvalidDensityError("matrix is not Hermitian within 1e-12")
        if abs(np.trace(m).real - 1.0) > 1e-12 or abs(np.trace(m).imag) > 1e-12:
            raise InvalidDensityError("trace differs from 1 by more than 1e-12")
        evals = np.linalg.eigvalsh(m)
        if evals.min() < _EIG_CLAMP:
            raise InvalidDensityError(
                f"matrix has eigenvalue {evals.min():.3e} below {_EIG_CLAMP}"
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclasses.dataclass(frozen=True)
class BellAmplitudes:
    """Decomposition over the Bell-type basis

        v1 = (|ee> - |gg>)/sqrt2,   v2 = (|eg> + |ge>)/sqrt2,
        v3 = i(|eg> - |ge>)/sqrt2,  v4 = (|ee> + |gg>)/sqrt2.

    ``b``, ``c``, ``e`` are the real parts of the coefficients on v1..v3 after
    a global phase rotation making ``b`` real and >= 0 (ties broken by c, then
    e).  ``residual`` is the full complex coefficient on v4.  ``c_imag`` and
    ``e_imag`` hold the imaginary leakage on v2/v3; both vanish for states of
    the entangled three-Bell-state form, and are kept so that
    :func:`bell_compose` is an exact inverse.
    """

    b: float
    c: float
    e: float
    residual: complex
    global_phase: float
    c_imag: float = 0.0
    e_imag: float = 0.0

    def norm_defect(self) -> float:
        total = (
            self.b**2
            + self.c**2
            + self.e**2
            + self.c_imag**2
            + self.e_imag**2
            + abs(self.residual) ** 2
        )
        return abs(total - 1.0)


def make_product_state(zeta, phi, xi, varphi) -> PureTwoQubitState:
    """Normalized tensor product of single-qubit states (zeta|e>+phi|g>) (x) (xi|e>+varphi|g>)."""
    if abs(zeta) ** 2 + abs(phi) ** 2 <= 0.0:
        raise InvalidStateError("first qubit amplitudes are both zero")
    if abs(xi) ** 2 + abs(varphi) ** 2 <= 0.0:
        raise InvalidStateError("second qubit amplitudes are both zero")
    amps = np.array(
        [zeta * xi, zeta * varphi, phi * xi, phi * varphi], dtype=np.complex128
    )
    return PureTwoQubitState(amps).normalized()


def concurrence_pure(state: PureTwoQubitState) -> float:
    """Concurrence of a normalized pure state, 2|a_ee a_gg - a_eg a_ge|."""
    a = state.amps
    if abs(np.linalg.norm(a) - 1.0) > NORM_ATOL:
        raise InvalidStateError(
            f"state norm deviates from 1 by more than {NORM_ATOL:g}; normalize first"
        )
    return min(1.0, 2.0 * abs(a[0] * a[3] - a[1] * a[2]))


def concurrence_mixed(rho: TwoQubitDensity) -> float:
    """Wootters concurrence max(0, l1 - l2 - l3 - l4) of a two-qubit density matrix.

    The l_i are the descending square roots of the eigenvalues of
    rho (sy x sy) rho* (sy x sy), computed here as the singular values of
    sqrt(rho) (sy x sy) conj(sqrt(rho)) -- the same spectrum, but through a
    normal-matrix factorization that keeps full floating-point accuracy
    (eigenvalues of the defective product lose half the digits on pure
    states).  Tiny negative rho eigenvalues (>= -1e-10) are clamped to zero.
    """
    evals, vecs = np.linalg.eigh(rho.matrix)
    if evals.min() < _EIG_CLAMP:
        raise InvalidDensityError(
            f"density eigenvalue {evals.min():.3e} below tolerance"
        )
    root = (vecs * np.sqrt(np.clip(evals, 0.0, None))) @ vecs.conj().T
    lam = np.linalg.svd(root @ _SPIN_FLIP @ root.conj(), compute_uv=False)
    return max(0.0, lam[0] - lam[1] - lam[2] - lam[3])


# Bell-type basis as columns; state = sum_k beta_k v_k  with beta_k = <v_k|s>.
_SQ2 = np.sqrt(2.0)
_BELL_BASIS = np.array(
    [
        [1.0 / _SQ2, 0.0, 0.0, 1.0 / _SQ2],
        [0.0, 1.0 / _SQ2, 1.0j / _SQ2, 0.0],
        [0.0, 1.0 / _SQ2, -1.0j / _SQ2, 0.0],
        [-1.0 / _SQ2, 0.0, 0.0, 1.0 / _SQ2],
    ],
    dtype=np.complex128,
)


def bell_decompose(state: PureTwoQubitState) -> BellAmplitudes:
    """Express a normalized pure state over the Bell-type basis of :class:`BellAmplitudes`.

    The global phase is chosen so the v1 coefficient is real non-negative;
    when |beta_1| < 1e-12 the convention falls back to the v2 coefficient,
    then the v3 coefficient.
    """
    a = state.amps
    if abs(np.linalg.norm(a) - 1.0) > NORM_ATOL:
        raise InvalidStateError("state must be normalized before decomposition")
    beta = _BELL_BASIS.conj().T @ a
    anchor = 0
    for k in range(3):
        if abs(beta[k]) >= 1e-12:
            anchor = k
            break
    phase = -np.angle(beta[anchor]) if abs(beta[anchor]) > 0 else 0.0
    beta = beta * np.exp(1j * phase)
    return BellAmplitudes(
        b=float(beta[0].real),
        c=float(beta[1].real),
        e=float(beta[2].real),
        residual=complex(beta[3]),
        global_phase=float(phase),
        c_imag=float(beta[1].imag),
        e_imag=float(beta[2].imag),
    )


def bell_compose(amp: BellAmplitudes) -> PureTwoQubitState:
    """Inverse of :func:`bell_decompose` up to the recorded global phase."""
    beta = np.array(
        [
            amp.b,
            amp.c + 1j * amp.c_imag,
            amp.e + 1j * amp.e_imag,
            amp.residual,
        ],
        dtype=np.complex128,
    )
    a = _BELL_BASIS @ beta
    return PureTwoQubitState(a * np.exp(-1j * amp.global_phase))

"""Joint qubit+field propagator and the measurement Kraus families built from it.

A single timestep maps the 4-dim two-qubit space into qubit (x) two-output-mode
field states.  Each qubit can emit at most one photon per step, so the
two-mode Fock space truncated at 2 total photons, ordered

    |00>, |10>, |01>, |20>, |11>, |02>,

is exact rather than an approximation.  Projecting the field part onto photon
numbers, quadrature eigenstates, or coherent states yields the photodetection,
homodyne, and heterodyne Kraus operators.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import ConfigError

__all__ = [
    "SCHEMES",
    "MeasurementConfig",
    "JointPropagator",
    "KrausOperator",
    "FOCK_LABELS",
    "joint_propagator",
    "photodetection_kraus",
    "homodyne_kraus",
    "heterodyne_kraus",
    "quadrature_overlaps",
    "coherent_overlaps",
    "which_path_density",
    "completeness_defect",
]

SCHEMES = ("photodetection", "homodyne", "heterodyne")

# Fock basis ordering for output modes (n3, m4)
FOCK_LABELS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
_FOCK_INDEX = {lab: k for k, lab in enumerate(FOCK_LABELS)}

EPSILON_MAX = 0.05  # small-timestep regime bound on epsilon = gamma*dt


@dataclasses.dataclass(frozen=True)
class MeasurementConfig:
    """Measurement scheme plus phases (radians), decay rate gamma = 1/T1, and timestep."""

    scheme: str
    theta: float = 0.0
    vartheta: float = 0.0
    gamma: float = 1.0
    dt: float = 1e-3

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not (self.gamma > 0.0):
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not (self.dt > 0.0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        eps = self.gamma * self.dt
        if not (0.0 < eps < EPSILON_MAX):
            raise ConfigError(
                f"epsilon = gamma*dt = {eps:g} outside the small-timestep range "
                f"(0, {EPSILON_MAX})"
            )
        for name in ("theta", "vartheta"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def epsilon(self) -> float:
        return self.gamma * self.dt


@dataclasses.dataclass(frozen=True, eq=False)
class JointPropagator:
    """Two-qubit single-step propagator into the qubit (x) two-mode field space.

    ``blocks[i, j]`` is the 6-component field ket produced when the input
    two-qubit basis state j maps onto output basis state i.
    """

    blocks: np.ndarray  # (4, 4, 6) complex
    epsilon: float
    theta: float
    vartheta: float

    def isometry_defect(self) -> float:
        """Max-abs deviation of sum_i <block[i,j]|block[i,j']> from the identity."""
        gram = np.einsum("ijk,ilk->jl", self.blocks.conj(), self.blocks)
        return float(np.max(np.abs(gram - np.eye(4))))

    def eleven_component_max(self) -> float:
        """Largest |11> amplitude over all blocks (zero by two-photon interference)."""
        return float(np.max(np.abs(self.blocks[:, :, _FOCK_INDEX[(1, 1)]])))


@dataclasses.dataclass(frozen=True, eq=False)
class KrausOperator:
    """4x4 operator on the two-qubit space, tagged with its measurement outcome."""

    matrix: np.ndarray
    outcome: tuple


def _creation_operators():
    """6x6 creation operators for output modes 3 and 4 on the truncated Fock basis."""
    a3 = np.zeros((6, 6), dtype=np.complex128)
    a4 = np.zeros((6, 6), dtype=np.complex128)
    for (n, m), k in _FOCK_INDEX.items():
        if (n + 1, m) in _FOCK_INDEX:
            a3[_FOCK_INDEX[(n + 1, m)], k] = math.sqrt(n + 1)
        if (n, m + 1) in _FOCK_INDEX:
            a4[_FOCK_INDEX[(n, m + 1)], k] = math.sqrt(m + 1)
    return a3, a4


def joint_propagator(cfg: MeasurementConfig) -> JointPropagator:
    """Single-step propagator with input modes rewritten in the output modes.

    The input-mode creation operators are replaced by
    a1+ = (a3+ e^{i theta} + a4+ e^{i vartheta})/sqrt2 and
    a2+ = (a3+ e^{i theta} - a4+ e^{i vartheta})/sqrt2 before expanding over
    the output Fock basis.
    """
    eps = cfg.epsilon
    a3, a4 = _creation_operators()
    u3 = np.exp(1j * cfg.theta)
    u4 = np.exp(1j * cfg.vartheta)
    a1 = (a3 * u3 + a4 * u4) / _SQ2
    a2 = (a3 * u3 - a4 * u4) / _SQ2

    vac = np.zeros(6, dtype=np.complex128)
    vac[0] = 1.0

    blocks = np.zeros((4, 4, 6), dtype=np.complex128)
    blocks[0, 0] = (1.0 - eps) * vac
    blocks[1, 0] = math.sqrt(eps * (1.0 - eps)) * (a2 @ vac)
    blocks[2, 0] = math.sqrt(eps * (1.0 - eps)) * (a1 @ vac)
    blocks[3, 0] = eps * (a1 @ (a2 @ vac))
    blocks[1, 1] = math.sqrt(1.0 - eps) * vac
    blocks[2, 2] = math.sqrt(1.0 - eps) * vac
    blocks[3, 1] = math.sqrt(eps) * (a1 @ vac)
    blocks[3, 2] = math.sqrt(eps) * (a2 @ vac)
    blocks[3, 3] = vac
    blocks.setflags(write=False)
    return JointPropagator(blocks, eps, cfg.theta, cfg.vartheta)


_SQ2 = math.sqrt(2.0)
_PI4 = math.pi ** -0.25


def quadrature_overlaps(x: float) -> np.ndarray:
    """<X|n> for n = 0, 1, 2 with the quadrature convention X = (a + a+)/sqrt2."""
    g0 = _PI4 * math.exp(-0.5 * x * x)
    return np.array([g0, _SQ2 * x * g0, (2.0 * x * x - 1.0) / _SQ2 * g0])


def coherent_overlaps(alpha: complex) -> np.ndarray:
    """<alpha|n> for n = 0, 1, 2."""
    ac = np.conj(alpha)
    g0 = math.exp(-0.5 * abs(alpha) ** 2)
    return g0 * np.array([1.0, ac, ac * ac / _SQ2], dtype=np.complex128)


def _contract(blocks: np.ndarray, o3: np.ndarray, o4: np.ndarray) -> np.ndarray:
    w = np.array([o3[n] * o4[m] for (n, m) in FOCK_LABELS])
    return blocks @ w


def photodetection_kraus(cfg: MeasurementConfig) -> list[KrausOperator]:
    """The six photocount Kraus operators, outcomes (n3, m4) with n3 + m4 <= 2."""
    if cfg.scheme != "photodetection":
        raise ConfigError("config scheme must be 'photodetection'")
    blocks = joint_propagator(cfg).blocks
    return [
        KrausOperator(np.ascontiguousarray(blocks[:, :, k]), lab)
        for k, lab in enumerate(FOCK_LABELS)
    ]


def homodyne_kraus(cfg: MeasurementConfig, x3: float, x4: float) -> KrausOperator:
    """Kraus operator for quadrature readouts (X3, X4).

    The Gaussian measure factors are kept inside the operator, so the readout
    density is literally ||M psi||^2 and int dX3 dX4 M+M = I.
    """
    if cfg.scheme != "homodyne":
        raise ConfigError("config scheme must be 'homodyne'")
    if not (math.isfinite(x3) and math.isfinite(x4)):
        raise ConfigError("quadrature readouts must be finite")
    blocks = joint_propagator(cfg).blocks
    return KrausOperator(
        _contract(blocks, quadrature_overlaps(x3), quadrature_overlaps(x4)),
        (x3, x4),
    )


def heterodyne_kraus(cfg: MeasurementConfig, alpha3: complex, alpha4: complex) -> KrausOperator:
    """Kraus operator for coherent-state readouts (alpha3, alpha4).

    Includes the 1/pi measure factor per mode, so int d2a3 d2a4 M+M = I.
    """
    if cfg.scheme != "heterodyne":
        raise ConfigError("config scheme must be 'heterodyne'")
    blocks = joint_propagator(cfg).blocks
    mat = _contract(blocks, coherent_overlaps(alpha3), coherent_overlaps(alpha4))
    return KrausOperator(mat / math.pi, (alpha3, alpha4))


def which_path_density(x3, x4, theta, vartheta, port) -> float:
    """Readout density of a single photon that entered beamsplitter port 1 or 2.

    Normalized over the (X3, X4) plane; the two port densities coincide for
    all readouts exactly when cos(theta - vartheta) = 0, erasing which-path
    information.
    """
    if port not in (1, 2):
        raise ConfigError(f"port must be 1 or 2, got {port!r}")
    sign = 1.0 if port == 1 else -1.0
    quad = x3 * x3 + x4 * x4 + sign * 2.0 * x3 * x4 * math.cos(theta - vartheta)
    return math.exp(-x3 * x3 - x4 * x4) * quad / math.pi


def completeness_defect(
    cfg: MeasurementConfig,
    hermite_nodes: int = 7,
    laguerre_nodes: int = 5,
    angular_nodes: int = 8,
) -> float:
    """Max-abs entry of (sum/integral of M+M) - I for the configured scheme.

    Homodyne uses Gauss-Hermite quadrature per axis (exact for the degree-4
    polynomial factors once >= 3 nodes are used); heterodyne uses
    Gauss-Laguerre in |alpha|^2 (>= 3 nodes) times a uniform angular grid
    (> 4 nodes).  Node counts below the exactness threshold are configuration
    errors.
    """
    if cfg.scheme == "photodetection":
        total = np.zeros((4, 4), dtype=np.complex128)
        for op in photodetection_kraus(cfg):
            total += op.matrix.conj().T @ op.matrix
        return float(np.max(np.abs(total - np.eye(4))))

    if cfg.scheme == "homodyne":
        if hermite_nodes < 3:
            raise ConfigError(
                "Gauss-Hermite with fewer than 3 nodes per axis cannot integrate "
                "the degree-4 polynomial factors exactly"
            )
        nodes, weights = np.polynomial.hermite.hermgauss(hermite_nodes)
        blocks = joint_propagator(cfg).blocks
        total = np.zeros((4, 4), dtype=np.complex128)
        for xa, wa in zip(nodes, weights):
            o3 = quadrature_overlaps(xa) * math.exp(0.5 * xa * xa)
            for xb, wb in zip(nodes, weights):
                o4 = quadrature_overlaps(xb) * math.exp(0.5 * xb * xb)
                m = _contract(blocks, o3, o4)
                total += wa * wb * (m.conj().T @ m)
        return float(np.max(np.abs(total - np.eye(4))))

    # heterodyne
    if laguerre_nodes < 3:
        raise ConfigError("radial Gauss-Laguerre needs >= 3 nodes for |alpha|^4 terms")
    if angular_nodes < 5:
        raise ConfigError("angular grid needs > 4 nodes for the e^{4 i phi} harmonics")
    u_nodes, u_weights = np.polynomial.laguerre.laggauss(laguerre_nodes)
    phis = 2.0 * math.pi * np.arange(angular_nodes) / angular_nodes
    blocks = joint_propagator(cfg).blocks
    # d2alpha = (1/2) du dphi with u = |alpha|^2; e^{-u} absorbed by Laguerre.
    ang_w = 2.0 * math.pi / angular_nodes
    total = np.zeros((4, 4), dtype=np.complex128)
    for u3v, w3 in zip(u_nodes, u_weights):
        r3 = math.sqrt(u3v)
        for p3 in phis:
            o3 = coherent_overlaps(r3 * np.exp(1j * p3)) * math.exp(0.5 * u3v)
            for u4v, w4 in zip(u_nodes, u_weights):
                r4 = math.sqrt(u4v)
                for p4 in phis:
                    o4 = coherent_overlaps(r4 * np.exp(1j * p4)) * math.exp(0.5 * u4v)
                    m = _contract(blocks, o3, o4) / math.pi
                    total += 0.25 * w3 * w4 * ang_w * ang_w * (m.conj().T @ m)
    return float(np.max(np.abs(total - np.eye(4))))

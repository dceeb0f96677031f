"""Tests for the joint propagator and the three measurement Kraus families."""

import math

import numpy as np
import pytest

from fluortraj import (
    ConfigError,
    MeasurementConfig,
    completeness_defect,
    heterodyne_kraus,
    homodyne_kraus,
    joint_propagator,
    photodetection_kraus,
    which_path_density,
)
from fluortraj.kraus import FOCK_LABELS

EE = np.array([1, 0, 0, 0], dtype=complex)
GG = np.array([0, 0, 0, 1], dtype=complex)


def cfg_for(scheme, theta=0.0, vartheta=math.pi / 2, eps=0.01):
    return MeasurementConfig(scheme, theta, vartheta, 1.0, eps)


# ---------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ConfigError):
        MeasurementConfig("nope", 0, 0, 1.0, 1e-3)
    with pytest.raises(ConfigError):
        MeasurementConfig("homodyne", 0, 0, -1.0, 1e-3)
    with pytest.raises(ConfigError):
        MeasurementConfig("homodyne", 0, 0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        MeasurementConfig("homodyne", 0, 0, 1.0, 0.1)  # epsilon 0.1 too coarse
    with pytest.raises(ConfigError):
        MeasurementConfig("homodyne", np.inf, 0, 1.0, 1e-3)
    assert cfg_for("homodyne").epsilon == pytest.approx(0.01)


def test_scheme_mismatch_is_rejected():
    with pytest.raises(ConfigError):
        homodyne_kraus(cfg_for("photodetection"), 0.0, 0.0)
    with pytest.raises(ConfigError):
        heterodyne_kraus(cfg_for("homodyne"), 0j, 0j)
    with pytest.raises(ConfigError):
        photodetection_kraus(cfg_for("homodyne"))


# ---------------------------------------------------------------- propagator

def test_propagator_two_photon_sector_weight():
    # the doubly-excited column's two-photon components carry weight eps^2
    prop = joint_propagator(cfg_for("homodyne", eps=0.01))
    two_photon = prop.blocks[3, 0, 3:]
    assert np.sum(np.abs(two_photon) ** 2) == pytest.approx(1e-4, rel=1e-12)


def test_propagator_eleven_cancellation_and_isometry_grid():
    for eps in np.linspace(1e-4, 0.04, 5):
        for theta in np.linspace(0.0, math.pi, 5):
            for vartheta in np.linspace(0.0, math.pi, 5):
                prop = joint_propagator(
                    MeasurementConfig("homodyne", theta, vartheta, 1.0, eps)
                )
                assert prop.eleven_component_max() < 1e-14
                assert prop.isometry_defect() < 1e-12


def test_propagator_two_photon_ket_form():
    # a1+ a2+ |00> = (e^{2i theta}|20> - e^{2i vartheta}|02>)/sqrt2
    theta, vartheta = 0.3, 1.1
    prop = joint_propagator(cfg_for("homodyne", theta=theta, vartheta=vartheta))
    ket = prop.blocks[3, 0] / prop.epsilon
    expect = np.zeros(6, dtype=complex)
    expect[3] = np.exp(2j * theta) / math.sqrt(2)
    expect[5] = -np.exp(2j * vartheta) / math.sqrt(2)
    assert np.max(np.abs(ket - expect)) < 1e-14


# ---------------------------------------------------------------- photodetection

def test_photodetection_no_click_operator():
    eps = 0.01
    ops = {op.outcome: op.matrix for op in photodetection_kraus(cfg_for("photodetection", eps=eps))}
    expect = np.diag([1 - eps, math.sqrt(1 - eps), math.sqrt(1 - eps), 1.0])
    assert np.max(np.abs(ops[(0, 0)] - expect)) < 1e-14


def test_photodetection_probabilities_on_doubly_excited():
    ops = photodetection_kraus(cfg_for("photodetection", eps=0.01))
    probs = {op.outcome: float(np.vdot(op.matrix @ EE, op.matrix @ EE).real) for op in ops}
    assert probs[(0, 0)] == pytest.approx(0.9801, abs=1e-12)
    assert probs[(1, 0)] == pytest.approx(0.0099, abs=1e-12)
    assert probs[(0, 1)] == pytest.approx(0.0099, abs=1e-12)
    assert probs[(2, 0)] == pytest.approx(5e-5, abs=1e-12)
    assert probs[(0, 2)] == pytest.approx(5e-5, abs=1e-12)
    assert probs[(1, 1)] == 0.0
    assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)


def test_photodetection_click_projects_on_symmetric_bell():
    for theta in (0.0, 0.7, 2.0):
        ops = photodetection_kraus(
            MeasurementConfig("photodetection", theta, theta + 1.0, 1.0, 0.01)
        )
        out = ops[1].matrix @ EE  # outcome (1, 0)
        out = out / np.linalg.norm(out)
        out = out * np.exp(-1j * np.angle(out[1]))  # strip global phase
        assert np.max(np.abs(out - np.array([0, 1, 1, 0]) / math.sqrt(2))) < 1e-12


# ---------------------------------------------------------------- homodyne

def test_homodyne_vacuum_is_gaussian():
    cfg = cfg_for("homodyne")
    for x3, x4 in [(0.0, 0.0), (0.5, -1.2), (2.0, 0.3)]:
        m = homodyne_kraus(cfg, x3, x4).matrix
        amp = m[3, 3]
        assert amp == pytest.approx(
            math.pi ** -0.5 * math.exp(-(x3 * x3 + x4 * x4) / 2), rel=1e-12
        )


def test_homodyne_origin_post_state_from_doubly_excited():
    eps = 0.01
    m = homodyne_kraus(cfg_for("homodyne", eps=eps), 0.0, 0.0).matrix
    psi = m @ EE
    # proportional to ((1-eps), 0, 0, -eps)
    ratio = psi / psi[0]
    assert np.max(np.abs(ratio - np.array([1, 0, 0, -eps / (1 - eps)]))) < 1e-12
    norm2 = float(np.vdot(psi, psi).real)
    conc = 2.0 * abs(psi[0] * psi[3] - psi[1] * psi[2]) / norm2
    assert conc == pytest.approx(2 * eps * (1 - eps) / ((1 - eps) ** 2 + eps**2), rel=1e-12)


def test_homodyne_determinant_law():
    # unnormalized 2|det| of M|ee> equals the closed form for any readout
    rng = np.random.default_rng(101)
    for _ in range(100):
        theta, vartheta = rng.uniform(0, 2 * math.pi, 2)
        x3, x4 = rng.normal(0, 1.5, 2)
        eps = rng.uniform(1e-4, 0.01)
        cfg = MeasurementConfig("homodyne", theta, vartheta, 1.0, eps)
        psi = homodyne_kraus(cfg, x3, x4).matrix @ EE
        det = 2.0 * abs(psi[0] * psi[3] - psi[1] * psi[2])
        ref = (
            eps * (1 - eps) / math.pi
            * math.exp(-x3 * x3 - x4 * x4)
            * abs(np.exp(2j * vartheta) - np.exp(2j * theta))
        )
        assert det == pytest.approx(ref, rel=1e-12)


def test_homodyne_phase_covariance():
    # shifting both phases by a common offset leaves every post-state
    # concurrence from |ee> unchanged at the same readout
    rng = np.random.default_rng(103)
    for _ in range(50):
        theta, delta = rng.uniform(0, 2 * math.pi, 2)
        vartheta = theta + rng.uniform(0, math.pi)
        x3, x4 = rng.normal(0, 1.2, 2)

        def conc(th, vt):
            psi = homodyne_kraus(
                MeasurementConfig("homodyne", th, vt, 1.0, 0.01), x3, x4
            ).matrix @ EE
            n2 = float(np.vdot(psi, psi).real)
            return 2.0 * abs(psi[0] * psi[3] - psi[1] * psi[2]) / n2

        assert conc(theta, vartheta) == pytest.approx(
            conc(theta + delta, vartheta + delta), abs=1e-12
        )


# ---------------------------------------------------------------- heterodyne

def test_heterodyne_vacuum_is_gaussian():
    cfg = cfg_for("heterodyne")
    for a3, a4 in [(0.3 + 0.1j, -0.2j), (1.0, 0.5 + 0.5j)]:
        m = heterodyne_kraus(cfg, a3, a4).matrix
        amp = m[3, 3]
        assert amp == pytest.approx(
            math.exp(-(abs(a3) ** 2 + abs(a4) ** 2) / 2) / math.pi, rel=1e-12
        )


def test_heterodyne_never_entangles_doubly_excited():
    rng = np.random.default_rng(107)
    cfg = cfg_for("heterodyne", theta=0.4, vartheta=1.9)
    for _ in range(50):
        a3 = complex(rng.normal(), rng.normal())
        a4 = complex(rng.normal(), rng.normal())
        psi = heterodyne_kraus(cfg, a3, a4).matrix @ EE
        n2 = float(np.vdot(psi, psi).real)
        assert 2.0 * abs(psi[0] * psi[3] - psi[1] * psi[2]) / n2 < 1e-12


def test_heterodyne_small_epsilon_limit():
    # as epsilon -> 0 the operator tends to a Gaussian multiple of the identity
    rng = np.random.default_rng(109)
    a3 = complex(rng.normal(), rng.normal())
    a4 = complex(rng.normal(), rng.normal())

    def defect(eps):
        m = heterodyne_kraus(cfg_for("heterodyne", eps=eps), a3, a4).matrix
        return np.max(np.abs(m / m[3, 3] - np.eye(4)))

    d1, d2 = defect(1e-4), defect(4e-4)
    assert d1 < 0.05
    assert d2 / d1 == pytest.approx(2.0, rel=0.15)  # off-diagonals scale as sqrt(eps)


# ---------------------------------------------------------------- which-path density

def test_which_path_ports_coincide_at_quarter_turn():
    rng = np.random.default_rng(113)
    for _ in range(50):
        x3, x4 = rng.normal(0, 1.5, 2)
        theta = rng.uniform(0, 2 * math.pi)
        d1 = which_path_density(x3, x4, theta, theta + math.pi / 2, 1)
        d2 = which_path_density(x3, x4, theta, theta + math.pi / 2, 2)
        assert d1 == pytest.approx(d2, abs=1e-14)


def test_which_path_equal_phases_point_values():
    assert which_path_density(1.0, 1.0, 0.5, 0.5, 1) == pytest.approx(
        4.0 * math.exp(-2.0) / math.pi, rel=1e-12
    )
    assert which_path_density(1.0, 1.0, 0.5, 0.5, 2) == pytest.approx(0.0, abs=1e-14)


def test_which_path_vanishes_at_origin():
    assert which_path_density(0.0, 0.0, 0.2, 1.1, 1) == 0.0
    assert which_path_density(0.0, 0.0, 0.2, 1.1, 2) == 0.0


def test_which_path_rejects_bad_port():
    with pytest.raises(ConfigError):
        which_path_density(0.0, 0.0, 0.0, 0.0, 3)


def test_which_path_normalization_by_quadrature():
    nodes, weights = np.polynomial.hermite.hermgauss(7)
    for delta in (0.0, math.pi / 4, math.pi / 2, 1.3):
        for port in (1, 2):
            total = sum(
                wa * wb
                * which_path_density(xa, xb, 0.0, delta, port)
                * math.exp(xa * xa + xb * xb)
                for xa, wa in zip(nodes, weights)
                for xb, wb in zip(nodes, weights)
            )
            assert total == pytest.approx(1.0, abs=1e-10)


def test_which_path_matches_single_photon_kraus_column():
    # the density equals |<X3 X4 | one-photon field ket>|^2 from the homodyne
    # operator columns where exactly one qubit had emitted
    rng = np.random.default_rng(127)
    cfg = cfg_for("homodyne", theta=0.7, vartheta=1.9)
    for _ in range(50):
        x3, x4 = rng.normal(0, 1.5, 2)
        m = homodyne_kraus(cfg, x3, x4).matrix
        # column |eg>: qubit A emits into input port 1; column |ge>: port 2
        d1 = abs(m[3, 1]) ** 2 / cfg.epsilon
        d2 = abs(m[3, 2]) ** 2 / cfg.epsilon
        assert d1 == pytest.approx(
            which_path_density(x3, x4, cfg.theta, cfg.vartheta, 1), abs=1e-12
        )
        assert d2 == pytest.approx(
            which_path_density(x3, x4, cfg.theta, cfg.vartheta, 2), abs=1e-12
        )


# ---------------------------------------------------------------- completeness

def test_completeness_photodetection():
    for eps in (1e-4, 0.01, 0.04):
        assert completeness_defect(cfg_for("photodetection", eps=eps)) < 1e-13


def test_completeness_homodyne():
    assert completeness_defect(cfg_for("homodyne")) < 1e-12
    # Gauss-Hermite is already exact at the minimum admissible node count
    assert completeness_defect(cfg_for("homodyne"), hermite_nodes=3) < 1e-12


def test_completeness_heterodyne():
    assert completeness_defect(cfg_for("heterodyne")) < 1e-10


def test_completeness_rejects_inexact_quadrature():
    with pytest.raises(ConfigError):
        completeness_defect(cfg_for("homodyne"), hermite_nodes=2)
    with pytest.raises(ConfigError):
        completeness_defect(cfg_for("heterodyne"), laguerre_nodes=2)
    with pytest.raises(ConfigError):
        completeness_defect(cfg_for("heterodyne"), angular_nodes=4)

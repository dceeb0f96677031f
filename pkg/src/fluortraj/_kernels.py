"""Hot numeric kernels for trajectory evolution.

Every kernel here is written in nopython-compatible Python and compiled with
numba's ``@njit`` unless the environment variable ``FLUORTRAJ_NO_NUMBA`` is
set, in which case the same source runs as plain Python/NumPy.  Both lanes
consume the same Philox random streams call-for-call, so they produce
identical trajectories (numba's ``np.random.Generator`` support is
bit-compatible with NumPy).

Homodyne/heterodyne readouts are drawn exactly from ||M psi||^2 by rejection
sampling against an isotropic Gaussian proposal exp(-c r^2) with c = 0.9.
The density is that Gaussian (sharper, exponent 1) times a polynomial, so the
ratio is bounded; a rigorous bound is recomputed each step from the
polynomial's absolute coefficients (with a 1.1 safety factor on top).

Status codes returned by the trajectory kernels:
    0   ok
    1   rejection sampler exceeded the iteration cap
    2   envelope violation (acceptance ratio above the computed bound)
    3   impossible outcome (total outcome weight vanished)
"""

import math
import os

import numpy as np

USE_NUMBA = os.environ.get("FLUORTRAJ_NO_NUMBA", "").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    import numba

    def _jit(f):
        return numba.njit(cache=True)(f)

else:

    def _jit(f):
        return f


STATUS_OK = 0
STATUS_REJECTION_CAP = 1
STATUS_ENVELOPE = 2
STATUS_IMPOSSIBLE = 3

_C_PROP = 0.9          # proposal exponent; acceptance keeps exp(-(1-c) r^2)
_SAFETY = 1.1
_MAX_REJECT = 4096
RENORM_WARN = 1e-8     # post-update norm drift that increments the warning counter

# max over x >= 0 of x^n exp(-(1-c) x^2), n = 0..4, for c = 0.9
_MONO_MAX = np.array(
    [
        1.0,
        math.sqrt(0.5 / (1.0 - _C_PROP)) * math.exp(-0.5),
        (1.0 / (1.0 - _C_PROP)) * math.exp(-1.0),
        (1.5 / (1.0 - _C_PROP)) ** 1.5 * math.exp(-1.5),
        (2.0 / (1.0 - _C_PROP)) ** 2.0 * math.exp(-2.0),
    ]
)
# exponent carried by each basis monomial (1, v3, v4, v3^2, v4^2)
_J3 = np.array([0, 1, 0, 2, 0], dtype=np.int64)
_J4 = np.array([0, 0, 1, 0, 2], dtype=np.int64)

# Gauss-Hermite nodes/weights for the optional moment-matched Gaussian sampler
_GH_X, _GH_W = np.polynomial.hermite.hermgauss(7)


@_jit
def concurrence4(p0, p1, p2, p3):
    c = 2.0 * abs(p0 * p3 - p1 * p2)
    return c if c < 1.0 else 1.0


@_jit
def _phase(angle):
    return complex(math.cos(angle), math.sin(angle))


@_jit
def _envelope_bound(coeffs, prop_norm):
    """Rigorous bound on sup density/proposal from absolute poly coefficients.

    ``coeffs`` is (4, 5): per state component, complex coefficients over the
    monomials (1, v3, v4, v3^2, v4^2).  ``prop_norm`` is c for homodyne (2
    real axes) or c^2 for heterodyne (4 real axes).
    """
    bound = 0.0
    for i in range(4):
        for s in range(5):
            a_s = abs(coeffs[i, s])
            if a_s == 0.0:
                continue
            for t in range(5):
                a_t = abs(coeffs[i, t])
                if a_t == 0.0:
                    continue
                bound += a_s * a_t * _MONO_MAX[_J3[s] + _J3[t]] * _MONO_MAX[_J4[s] + _J4[t]]
    return _SAFETY * bound / prop_norm


@_jit
def _homodyne_coeffs(p0, p1, p2, p3, eps, u3, u4, coeffs):
    """Polynomial coefficients of M(X3, X4) psi over (1, X3, X4, X3^2, X4^2).

    The shared Gaussian factor pi^{-1/2} exp(-(X3^2 + X4^2)/2) is left out;
    it cancels in normalization and is reinstated where densities are needed.
    """
    s1 = math.sqrt(1.0 - eps)
    se1 = math.sqrt(eps * (1.0 - eps))
    sqe = math.sqrt(eps)
    u3sq = u3 * u3
    u4sq = u4 * u4
    for i in range(4):
        for t in range(5):
            coeffs[i, t] = 0.0
    coeffs[0, 0] = (1.0 - eps) * p0
    coeffs[1, 0] = s1 * p1
    coeffs[1, 1] = se1 * u3 * p0
    coeffs[1, 2] = -se1 * u4 * p0
    coeffs[2, 0] = s1 * p2
    coeffs[2, 1] = se1 * u3 * p0
    coeffs[2, 2] = se1 * u4 * p0
    coeffs[3, 0] = p3 - 0.5 * eps * (u3sq - u4sq) * p0
    coeffs[3, 1] = sqe * u3 * (p1 + p2)
    coeffs[3, 2] = sqe * u4 * (p1 - p2)
    coeffs[3, 3] = eps * u3sq * p0
    coeffs[3, 4] = -eps * u4sq * p0


@_jit
def _heterodyne_coeffs(p0, p1, p2, p3, eps, u3, u4, coeffs):
    """Coefficients of M(a3, a4) psi over (1, conj a3, conj a4, conj a3^2, conj a4^2).

    The shared factor pi^{-1} exp(-(|a3|^2 + |a4|^2)/2) is left out.
    """
    s1 = math.sqrt(1.0 - eps)
    sh = math.sqrt(0.5 * eps)
    se1 = math.sqrt(0.5 * eps * (1.0 - eps))
    for i in range(4):
        for t in range(5):
            coeffs[i, t] = 0.0
    coeffs[0, 0] = (1.0 - eps) * p0
    coeffs[1, 0] = s1 * p1
    coeffs[1, 1] = se1 * u3 * p0
    coeffs[1, 2] = -se1 * u4 * p0
    coeffs[2, 0] = s1 * p2
    coeffs[2, 1] = se1 * u3 * p0
    coeffs[2, 2] = se1 * u4 * p0
    coeffs[3, 0] = p3
    coeffs[3, 1] = sh * u3 * (p1 + p2)
    coeffs[3, 2] = sh * u4 * (p1 - p2)
    coeffs[3, 3] = 0.5 * eps * u3 * u3 * p0
    coeffs[3, 4] = -0.5 * eps * u4 * u4 * p0


@_jit
def _eval_poly(coeffs, v3, v4, out):
    """Evaluate the four component polynomials at (complex or real) v3, v4."""
    v3sq = v3 * v3
    v4sq = v4 * v4
    for i in range(4):
        out[i] = (
            coeffs[i, 0]
            + coeffs[i, 1] * v3
            + coeffs[i, 2] * v4
            + coeffs[i, 3] * v3sq
            + coeffs[i, 4] * v4sq
        )


@_jit
def _poly_norm_sq(coeffs, v3, v4):
    v3sq = v3 * v3
    v4sq = v4 * v4
    total = 0.0
    for i in range(4):
        phi = (
            coeffs[i, 0]
            + coeffs[i, 1] * v3
            + coeffs[i, 2] * v4
            + coeffs[i, 3] * v3sq
            + coeffs[i, 4] * v4sq
        )
        total += phi.real * phi.real + phi.imag * phi.imag
    return total


@_jit
def sample_homodyne(coeffs, rng):
    """Draw (X3, X4) from the exact readout density by rejection sampling.

    Returns (x3, x4, status).
    """
    bound = _envelope_bound(coeffs, _C_PROP)
    sigma = math.sqrt(0.5 / _C_PROP)
    for _ in range(_MAX_REJECT):
        x3 = sigma * rng.standard_normal()
        x4 = sigma * rng.standard_normal()
        poly = _poly_norm_sq(coeffs, complex(x3, 0.0), complex(x4, 0.0))
        ratio = poly * math.exp(-(1.0 - _C_PROP) * (x3 * x3 + x4 * x4)) / _C_PROP
        if ratio > bound * (1.0 + 1e-9):
            return x3, x4, STATUS_ENVELOPE
        if rng.random() * bound < ratio:
            return x3, x4, STATUS_OK
    return 0.0, 0.0, STATUS_REJECTION_CAP


@_jit
def sample_homodyne_gaussian(coeffs, rng, gh_x, gh_w):
    """Approximate (fast) sampler: axis-wise Gaussian with the exact density's
    first two moments, computed by Gauss-Hermite quadrature each step."""
    mass = 0.0
    m3 = 0.0
    m4 = 0.0
    q3 = 0.0
    q4 = 0.0
    for a in range(gh_x.shape[0]):
        xa = gh_x[a]
        for b in range(gh_x.shape[0]):
            xb = gh_x[b]
            w = gh_w[a] * gh_w[b]
            p = w * _poly_norm_sq(coeffs, complex(xa, 0.0), complex(xb, 0.0))
            mass += p
            m3 += p * xa
            m4 += p * xb
            q3 += p * xa * xa
            q4 += p * xb * xb
    m3 /= mass
    m4 /= mass
    v3 = q3 / mass - m3 * m3
    v4 = q4 / mass - m4 * m4
    x3 = m3 + math.sqrt(v3) * rng.standard_normal()
    x4 = m4 + math.sqrt(v4) * rng.standard_normal()
    return x3, x4, STATUS_OK


@_jit
def sample_heterodyne(coeffs, rng):
    """Draw (alpha3, alpha4) from the exact heterodyne density. Returns
    (re a3, im a3, re a4, im a4, status)."""
    bound = _envelope_bound(coeffs, _C_PROP * _C_PROP)
    sigma = math.sqrt(0.5 / _C_PROP)
    for _ in range(_MAX_REJECT):
        x3 = sigma * rng.standard_normal()
        y3 = sigma * rng.standard_normal()
        x4 = sigma * rng.standard_normal()
        y4 = sigma * rng.standard_normal()
        a3c = complex(x3, -y3)  # conj(alpha3)
        a4c = complex(x4, -y4)
        rsq = x3 * x3 + y3 * y3 + x4 * x4 + y4 * y4
        poly = _poly_norm_sq(coeffs, a3c, a4c)
        ratio = poly * math.exp(-(1.0 - _C_PROP) * rsq) / (_C_PROP * _C_PROP)
        if ratio > bound * (1.0 + 1e-9):
            return x3, y3, x4, y4, STATUS_ENVELOPE
        if rng.random() * bound < ratio:
            return x3, y3, x4, y4, STATUS_OK
    return 0.0, 0.0, 0.0, 0.0, STATUS_REJECTION_CAP


@_jit
def photodetection_probs(p0, p1, p2, p3, eps, probs):
    """Outcome probabilities for (0,0), (1,0), (0,1), (2,0), (1,1), (0,2)."""
    aee = p0.real * p0.real + p0.imag * p0.imag
    sym = p1 + p2
    asym = p1 - p2
    asym_sq = asym.real * asym.real + asym.imag * asym.imag
    sym_sq = sym.real * sym.real + sym.imag * sym.imag
    probs[0] = (
        (1.0 - eps) ** 2 * aee
        + (1.0 - eps) * (p1.real**2 + p1.imag**2 + p2.real**2 + p2.imag**2)
        + p3.real**2
        + p3.imag**2
    )
    probs[1] = eps * (1.0 - eps) * aee + 0.5 * eps * sym_sq
    probs[2] = eps * (1.0 - eps) * aee + 0.5 * eps * asym_sq
    probs[3] = 0.5 * eps * eps * aee
    probs[4] = 0.0
    probs[5] = 0.5 * eps * eps * aee


@_jit
def run_traj_photodetection(
    psi, eps, theta, vartheta, n_steps, rng,
    conc, n3_out, m4_out,
    herald_threshold, stop_at_herald, herald_psi,
    snap_stride, snaps,
):
    """Evolve one photodetection trajectory in place.

    Returns (status, herald_step, renorm_warnings, steps_done).
    ``conc`` has length n_steps + 1 and includes the initial concurrence.
    """
    u3 = _phase(theta)
    u4 = _phase(vartheta)
    s1 = math.sqrt(1.0 - eps)
    se1 = math.sqrt(0.5 * eps * (1.0 - eps))
    sqe = math.sqrt(0.5 * eps)
    e2 = eps / math.sqrt(2.0)
    probs = np.empty(6)
    herald_step = -1
    warnings = 0
    conc[0] = concurrence4(psi[0], psi[1], psi[2], psi[3])
    for step in range(n_steps):
        p0, p1, p2, p3 = psi[0], psi[1], psi[2], psi[3]
        photodetection_probs(p0, p1, p2, p3, eps, probs)
        total = probs[0] + probs[1] + probs[2] + probs[3] + probs[5]
        if total < 1e-300:
            return STATUS_IMPOSSIBLE, herald_step, warnings, step
        u = rng.random() * total
        acc = 0.0
        outcome = 5
        for k in range(6):
            acc += probs[k]
            if u < acc:
                outcome = k
                break
        if outcome == 0:
            n3 = 0
            m4 = 0
            psi[0] = (1.0 - eps) * p0
            psi[1] = s1 * p1
            psi[2] = s1 * p2
            # psi[3] unchanged
        elif outcome == 1:
            n3 = 1
            m4 = 0
            psi[0] = 0.0
            psi[1] = se1 * u3 * p0
            psi[2] = se1 * u3 * p0
            psi[3] = sqe * u3 * (p1 + p2)
        elif outcome == 2:
            n3 = 0
            m4 = 1
            psi[0] = 0.0
            psi[1] = -se1 * u4 * p0
            psi[2] = se1 * u4 * p0
            psi[3] = sqe * u4 * (p1 - p2)
        elif outcome == 3:
            n3 = 2
            m4 = 0
            psi[0] = 0.0
            psi[1] = 0.0
            psi[2] = 0.0
            psi[3] = e2 * u3 * u3 * p0
        else:
            n3 = 0
            m4 = 2
            psi[0] = 0.0
            psi[1] = 0.0
            psi[2] = 0.0
            psi[3] = -e2 * u4 * u4 * p0
        nrm = math.sqrt(
            psi[0].real**2 + psi[0].imag**2 + psi[1].real**2 + psi[1].imag**2
            + psi[2].real**2 + psi[2].imag**2 + psi[3].real**2 + psi[3].imag**2
        )
        if nrm < 1e-300:
            return STATUS_IMPOSSIBLE, herald_step, warnings, step
        chk = 0.0
        for i in range(4):
            psi[i] = psi[i] / nrm
            chk += psi[i].real ** 2 + psi[i].imag ** 2
        if abs(chk - 1.0) > RENORM_WARN:
            warnings += 1
        n3_out[step] = n3
        m4_out[step] = m4
        c = concurrence4(psi[0], psi[1], psi[2], psi[3])
        conc[step + 1] = c
        if snap_stride > 0 and (step + 1) % snap_stride == 0:
            snaps[(step + 1) // snap_stride - 1] = psi
        if herald_step < 0 and c > herald_threshold:
            herald_step = step + 1
            for i in range(4):
                herald_psi[i] = psi[i]
            if stop_at_herald:
                return STATUS_OK, herald_step, warnings, step + 1
    return STATUS_OK, herald_step, warnings, n_steps


@_jit
def run_traj_homodyne(
    psi, eps, theta, vartheta, n_steps, rng,
    conc, x3_out, x4_out,
    herald_threshold, stop_at_herald, herald_psi,
    snap_stride, snaps,
    fast_sampler, gh_x, gh_w,
):
    """Evolve one homodyne trajectory in place.

    Returns (status, herald_step, renorm_warnings, steps_done).
    """
    u3 = _phase(theta)
    u4 = _phase(vartheta)
    coeffs = np.empty((4, 5), dtype=np.complex128)
    phi = np.empty(4, dtype=np.complex128)
    herald_step = -1
    warnings = 0
    conc[0] = concurrence4(psi[0], psi[1], psi[2], psi[3])
    for step in range(n_steps):
        _homodyne_coeffs(psi[0], psi[1], psi[2], psi[3], eps, u3, u4, coeffs)
        if fast_sampler:
            x3, x4, status = sample_homodyne_gaussian(coeffs, rng, gh_x, gh_w)
        else:
            x3, x4, status = sample_homodyne(coeffs, rng)
        if status != STATUS_OK:
            return status, herald_step, warnings, step
        _eval_poly(coeffs, complex(x3, 0.0), complex(x4, 0.0), phi)
        nrm = math.sqrt(
            phi[0].real**2 + phi[0].imag**2 + phi[1].real**2 + phi[1].imag**2
            + phi[2].real**2 + phi[2].imag**2 + phi[3].real**2 + phi[3].imag**2
        )
        if nrm < 1e-300:
            return STATUS_IMPOSSIBLE, herald_step, warnings, step
        chk = 0.0
        for i in range(4):
            psi[i] = phi[i] / nrm
            chk += psi[i].real ** 2 + psi[i].imag ** 2
        if abs(chk - 1.0) > RENORM_WARN:
            warnings += 1
        x3_out[step] = x3
        x4_out[step] = x4
        c = concurrence4(psi[0], psi[1], psi[2], psi[3])
        conc[step + 1] = c
        if snap_stride > 0 and (step + 1) % snap_stride == 0:
            snaps[(step + 1) // snap_stride - 1] = psi
        if herald_step < 0 and c > herald_threshold:
            herald_step = step + 1
            for i in range(4):
                herald_psi[i] = psi[i]
            if stop_at_herald:
                return STATUS_OK, herald_step, warnings, step + 1
    return STATUS_OK, herald_step, warnings, n_steps


@_jit
def run_traj_heterodyne(
    psi, eps, theta, vartheta, n_steps, rng,
    conc, re3_out, im3_out, re4_out, im4_out,
    herald_threshold, stop_at_herald, herald_psi,
    snap_stride, snaps,
):
    """Evolve one heterodyne trajectory in place.

    Returns (status, herald_step, renorm_warnings, steps_done).
    """
    u3 = _phase(theta)
    u4 = _phase(vartheta)
    coeffs = np.empty((4, 5), dtype=np.complex128)
    phi = np.empty(4, dtype=np.complex128)
    herald_step = -1
    warnings = 0
    conc[0] = concurrence4(psi[0], psi[1], psi[2], psi[3])
    for step in range(n_steps):
        _heterodyne_coeffs(psi[0], psi[1], psi[2], psi[3], eps, u3, u4, coeffs)
        x3, y3, x4, y4, status = sample_heterodyne(coeffs, rng)
        if status != STATUS_OK:
            return status, herald_step, warnings, step
        _eval_poly(coeffs, complex(x3, -y3), complex(x4, -y4), phi)
        nrm = math.sqrt(
            phi[0].real**2 + phi[0].imag**2 + phi[1].real**2 + phi[1].imag**2
            + phi[2].real**2 + phi[2].imag**2 + phi[3].real**2 + phi[3].imag**2
        )
        if nrm < 1e-300:
            return STATUS_IMPOSSIBLE, herald_step, warnings, step
        chk = 0.0
        for i in range(4):
            psi[i] = phi[i] / nrm
            chk += psi[i].real ** 2 + psi[i].imag ** 2
        if abs(chk - 1.0) > RENORM_WARN:
            warnings += 1
        re3_out[step] = x3
        im3_out[step] = y3
        re4_out[step] = x4
        im4_out[step] = y4
        c = concurrence4(psi[0], psi[1], psi[2], psi[3])
        conc[step + 1] = c
        if snap_stride > 0 and (step + 1) % snap_stride == 0:
            snaps[(step + 1) // snap_stride - 1] = psi
        if herald_step < 0 and c > herald_threshold:
            herald_step = step + 1
            for i in range(4):
                herald_psi[i] = psi[i]
            if stop_at_herald:
                return STATUS_OK, herald_step, warnings, step + 1
    return STATUS_OK, herald_step, warnings, n_steps


@_jit
def count_photodetection_outcomes(psi, eps, n_draws, rng, counts):
    """Draw n_draws outcomes from a fixed state; counts indexed like FOCK_LABELS."""
    probs = np.empty(6)
    photodetection_probs(psi[0], psi[1], psi[2], psi[3], eps, probs)
    total = probs[0] + probs[1] + probs[2] + probs[3] + probs[5]
    for _ in range(n_draws):
        u = rng.random() * total
        acc = 0.0
        k = 5
        for j in range(6):
            acc += probs[j]
            if u < acc:
                k = j
                break
        counts[k] += 1


@_jit
def batch_homodyne_readouts(psi, eps, theta, vartheta, n_draws, rng, x3s, x4s):
    """Draw n_draws homodyne readouts from a fixed state. Returns a status code."""
    coeffs = np.empty((4, 5), dtype=np.complex128)
    _homodyne_coeffs(psi[0], psi[1], psi[2], psi[3], eps, _phase(theta), _phase(vartheta), coeffs)
    for i in range(n_draws):
        x3, x4, status = sample_homodyne(coeffs, rng)
        if status != STATUS_OK:
            return status
        x3s[i] = x3
        x4s[i] = x4
    return STATUS_OK


@_jit
def batch_heterodyne_readouts(psi, eps, theta, vartheta, n_draws, rng, re3, im3, re4, im4):
    """Draw n_draws heterodyne readouts from a fixed state. Returns a status code."""
    coeffs = np.empty((4, 5), dtype=np.complex128)
    _heterodyne_coeffs(psi[0], psi[1], psi[2], psi[3], eps, _phase(theta), _phase(vartheta), coeffs)
    for i in range(n_draws):
        x3, y3, x4, y4, status = sample_heterodyne(coeffs, rng)
        if status != STATUS_OK:
            return status
        re3[i] = x3
        im3[i] = y3
        re4[i] = x4
        im4[i] = y4
    return STATUS_OK

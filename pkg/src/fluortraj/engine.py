"""Single-trajectory stochastic evolution and trajectory records.

Each trajectory owns a counter-based Philox stream whose 64-bit key is
derived from (master seed, trajectory index) by the splitmix64 avalanche
mix in :func:`derive_stream_key`, so streams are identical across runs,
platforms, and worker counts.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from . import _kernels
from .errors import ConfigError, SamplerError
from .kraus import KrausOperator, MeasurementConfig
from .qstate import PureTwoQubitState

__all__ = [
    "derive_stream_key",
    "make_rng",
    "TrajectoryRecord",
    "apply_kraus",
    "sample_photodetection_outcome",
    "sample_homodyne_readout",
    "sample_heterodyne_readout",
    "run_trajectory",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_STATUS_MSG = {
    _kernels.STATUS_REJECTION_CAP: "rejection sampler exceeded its iteration cap",
    _kernels.STATUS_ENVELOPE: "rejection envelope violated (mis-derived bound)",
    _kernels.STATUS_IMPOSSIBLE: "impossible outcome: total weight vanished",
}


def derive_stream_key(master_seed: int, index: int) -> int:
    """64-bit stream key for trajectory ``index`` under ``master_seed``.

    splitmix64: add index+1 golden-ratio increments to the master seed, then
    apply the standard avalanche finalizer.
    """
    z = (int(master_seed) + (int(index) + 1) * _GOLDEN) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def make_rng(stream_key: int) -> np.random.Generator:
    """Counter-based generator for one trajectory."""
    return np.random.Generator(np.random.Philox(key=stream_key))


def _check_status(status: int) -> None:
    if status != _kernels.STATUS_OK:
        raise SamplerError(_STATUS_MSG.get(status, f"kernel status {status}"))


def apply_kraus(state: PureTwoQubitState, op: KrausOperator):
    """Apply a Kraus operator; returns (normalized state, outcome weight ||K s||^2)."""
    out = op.matrix @ state.normalized().amps
    weight = float(np.vdot(out, out).real)
    if weight < 1e-300:
        raise SamplerError(
            f"outcome {op.outcome!r} has vanishing weight; the sampler should "
            "never propose it"
        )
    return PureTwoQubitState(out / math.sqrt(weight)), weight


def sample_photodetection_outcome(state, cfg: MeasurementConfig, rng):
    """Draw a photocount outcome (n3, m4) from the exact discrete distribution."""
    psi = state.normalized().amps.astype(np.complex128)
    counts = np.zeros(6, dtype=np.int64)
    _kernels.count_photodetection_outcomes(psi, cfg.epsilon, 1, rng, counts)
    from .kraus import FOCK_LABELS

    return FOCK_LABELS[int(np.argmax(counts))]


def sample_homodyne_readout(state, cfg: MeasurementConfig, rng, n_draws: int = 1):
    """Draw quadrature readouts (X3, X4) exactly from ||M(X3,X4) psi||^2.

    With ``n_draws > 1`` returns arrays (useful for sampler statistics).
    """
    if cfg.scheme != "homodyne":
        raise ConfigError("config scheme must be 'homodyne'")
    psi = state.normalized().amps.astype(np.complex128)
    x3s = np.empty(n_draws)
    x4s = np.empty(n_draws)
    status = _kernels.batch_homodyne_readouts(
        psi, cfg.epsilon, cfg.theta, cfg.vartheta, n_draws, rng, x3s, x4s
    )
    _check_status(status)
    if n_draws == 1:
        return float(x3s[0]), float(x4s[0])
    return x3s, x4s


def sample_heterodyne_readout(state, cfg: MeasurementConfig, rng, n_draws: int = 1):
    """Draw coherent readouts (alpha3, alpha4) exactly from ||M psi||^2."""
    if cfg.scheme != "heterodyne":
        raise ConfigError("config scheme must be 'heterodyne'")
    psi = state.normalized().amps.astype(np.complex128)
    re3 = np.empty(n_draws)
    im3 = np.empty(n_draws)
    re4 = np.empty(n_draws)
    im4 = np.empty(n_draws)
    status = _kernels.batch_heterodyne_readouts(
        psi, cfg.epsilon, cfg.theta, cfg.vartheta, n_draws, rng, re3, im3, re4, im4
    )
    _check_status(status)
    a3 = re3 + 1j * im3
    a4 = re4 + 1j * im4
    if n_draws == 1:
        return complex(a3[0]), complex(a4[0])
    return a3, a4


@dataclasses.dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """One trajectory: time grid, readout stream, concurrence series, seed.

    ``readouts`` is a dict of per-step arrays whose keys depend on the scheme:
    photodetection (n3, m4), homodyne (x3, x4), heterodyne (re_a3, im_a3,
    re_a4, im_a4).  ``concurrence`` has one more entry than the readout
    arrays (it includes t = 0).  Records are self-certifying: replaying the
    readout stream through the generic Kraus operators reproduces the stored
    concurrence series (see :meth:`replay_defect`).
    """

    cfg: MeasurementConfig
    initial: PureTwoQubitState
    times: np.ndarray
    concurrence: np.ndarray
    readouts: dict
    seed: int
    final_state: PureTwoQubitState
    snapshots: tuple = ()
    herald_step: int = -1
    renorm_warnings: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def readout_columns(self):
        return _READOUT_COLUMNS[self.cfg.scheme]

    def replay_defect(self) -> float:
        """Max |replayed - stored| concurrence, rebuilding states from the
        readout stream with the generic (contraction-built) Kraus operators."""
        from . import kraus as kr
        from .qstate import concurrence_pure

        psi = self.initial.normalized()
        worst = abs(concurrence_pure(psi) - self.concurrence[0])
        blocks = kr.joint_propagator(self.cfg).blocks
        for step in range(self.n_steps):
            if self.cfg.scheme == "photodetection":
                lab = (int(self.readouts["n3"][step]), int(self.readouts["m4"][step]))
                k = kr.FOCK_LABELS.index(lab)
                mat = blocks[:, :, k]
            elif self.cfg.scheme == "homodyne":
                o3 = kr.quadrature_overlaps(self.readouts["x3"][step])
                o4 = kr.quadrature_overlaps(self.readouts["x4"][step])
                mat = kr._contract(blocks, o3, o4)
            else:
                a3 = complex(self.readouts["re_a3"][step], self.readouts["im_a3"][step])
                a4 = complex(self.readouts["re_a4"][step], self.readouts["im_a4"][step])
                mat = kr._contract(blocks, kr.coherent_overlaps(a3), kr.coherent_overlaps(a4))
            psi, _ = apply_kraus(psi, KrausOperator(mat, None))
            worst = max(worst, abs(concurrence_pure(psi) - self.concurrence[step + 1]))
        return worst

    def to_csv(self, path, sidecar: dict | None = None) -> None:
        """Line-oriented CSV (step, t, readouts, concurrence) plus a JSON
        header file at <path>.json; floats use repr for bit-exact round-trip."""
        cols = self.readout_columns()
        with open(path, "w") as fh:
            fh.write("step,t," + ",".join(cols) + ",concurrence\n")
            fh.write("0," + repr(float(self.times[0])) + ","
                     + ",".join("" for _ in cols) + "," + repr(float(self.concurrence[0])) + "\n")
            for step in range(self.n_steps):
                vals = [str(step + 1), repr(float(self.times[step + 1]))]
                for c in cols:
                    v = self.readouts[c][step]
                    vals.append(str(int(v)) if self.cfg.scheme == "photodetection" else repr(float(v)))
                vals.append(repr(float(self.concurrence[step + 1])))
                fh.write(",".join(vals) + "\n")
        header = {
            "kind": "trajectory",
            "scheme": self.cfg.scheme,
            "theta": self.cfg.theta,
            "vartheta": self.cfg.vartheta,
            "gamma": self.cfg.gamma,
            "dt": self.cfg.dt,
            "seed": self.seed,
            "initial": _amps_to_json(self.initial.amps),
            "herald_step": self.herald_step,
            "renorm_warnings": self.renorm_warnings,
            "version": _version(),
        }
        if sidecar:
            header.update(sidecar)
        with open(str(path) + ".json", "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def read_csv(path):
        """Read back (header dict, column dict of float/int lists)."""
        with open(path) as fh:
            names = fh.readline().strip().split(",")
            cols = {n: [] for n in names}
            for line in fh:
                for n, v in zip(names, line.rstrip("\n").split(",")):
                    cols[n].append(v)
        with open(str(path) + ".json") as fh:
            header = json.load(fh)
        return header, cols


_READOUT_COLUMNS = {
    "photodetection": ("n3", "m4"),
    "homodyne": ("x3", "x4"),
    "heterodyne": ("re_a3", "im_a3", "re_a4", "im_a4"),
}


def _amps_to_json(amps):
    return [[float(a.real), float(a.imag)] for a in amps]


def _version() -> str:
    from . import __version__

    return __version__


def run_trajectory(
    initial: PureTwoQubitState,
    cfg: MeasurementConfig,
    t_max: float,
    seed: int,
    snapshot_stride: int = 10,
    sampler: str = "exact",
    herald_threshold: float = 2.0,
    stop_at_herald: bool = False,
) -> TrajectoryRecord:
    """Run one trajectory of ceil(t_max/dt) steps; deterministic in (initial, cfg, seed).

    ``seed`` is the trajectory's stream key (ensembles derive it from a master
    seed).  ``herald_threshold`` > 1 disables herald tracking.
    """
    if not (t_max > 0.0):
        raise ConfigError(f"t_max must be positive, got {t_max}")
    if sampler not in ("exact", "gaussian"):
        raise ConfigError(f"sampler must be 'exact' or 'gaussian', got {sampler!r}")
    n_steps = int(math.ceil(t_max / cfg.dt - 1e-12))
    psi = initial.normalized().amps.astype(np.complex128).copy()
    rng = make_rng(seed)
    conc = np.empty(n_steps + 1)
    herald_psi = np.zeros(4, dtype=np.complex128)
    n_snaps = n_steps // snapshot_stride if snapshot_stride > 0 else 0
    snaps = np.zeros((max(n_snaps, 1), 4), dtype=np.complex128)

    if cfg.scheme == "photodetection":
        n3 = np.zeros(n_steps, dtype=np.int64)
        m4 = np.zeros(n_steps, dtype=np.int64)
        status, herald_step, warn, done = _kernels.run_traj_photodetection(
            psi, cfg.epsilon, cfg.theta, cfg.vartheta, n_steps, rng,
            conc, n3, m4, herald_threshold, stop_at_herald, herald_psi,
            snapshot_stride if n_snaps else 0, snaps,
        )
        readouts = {"n3": n3, "m4": m4}
    elif cfg.scheme == "homodyne":
        x3 = np.zeros(n_steps)
        x4 = np.zeros(n_steps)
        status, herald_step, warn, done = _kernels.run_traj_homodyne(
            psi, cfg.epsilon, cfg.theta, cfg.vartheta, n_steps, rng,
            conc, x3, x4, herald_threshold, stop_at_herald, herald_psi,
            snapshot_stride if n_snaps else 0, snaps,
            sampler == "gaussian", _kernels._GH_X, _kernels._GH_W,
        )
        readouts = {"x3": x3, "x4": x4}
    else:
        re3 = np.zeros(n_steps)
        im3 = np.zeros(n_steps)
        re4 = np.zeros(n_steps)
        im4 = np.zeros(n_steps)
        status, herald_step, warn, done = _kernels.run_traj_heterodyne(
            psi, cfg.epsilon, cfg.theta, cfg.vartheta, n_steps, rng,
            conc, re3, im3, re4, im4, herald_threshold, stop_at_herald, herald_psi,
            snapshot_stride if n_snaps else 0, snaps,
        )
        readouts = {"re_a3": re3, "im_a3": im3, "re_a4": re4, "im_a4": im4}

    _check_status(status)
    if done < n_steps:  # stopped at herald: truncate the record
        conc = conc[: done + 1]
        readouts = {k: v[:done] for k, v in readouts.items()}
        n_snaps = min(n_snaps, done // snapshot_stride) if snapshot_stride > 0 else 0
    times = np.arange(done + 1) * cfg.dt
    snapshots = tuple(
        ((k + 1) * snapshot_stride * cfg.dt, PureTwoQubitState(snaps[k]))
        for k in range(n_snaps)
    )
    return TrajectoryRecord(
        cfg=cfg,
        initial=initial.normalized(),
        times=times,
        concurrence=conc,
        readouts=readouts,
        seed=int(seed),
        final_state=PureTwoQubitState(psi),
        snapshots=snapshots,
        herald_step=int(herald_step),
        renorm_warnings=int(warn),
    )

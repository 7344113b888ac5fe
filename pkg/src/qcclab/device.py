"""Physical device model: Duffing-oscillator Hamiltonians, dissipators,
dressed frame and thermal initialization.

Conventions used throughout the package:
  * configuration values are linear frequencies in Hz, times in seconds,
    temperature in kelvin;
  * all operators returned here are in angular units (2*pi multiplied in,
    hbar = 1), expressed in the bare product basis;
  * qubit i occupies tensor slot i, basis index of |n_0 n_1 ...> is
    sum_i n_i * levels**(N-1-i).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import hbar as HBAR, k as K_BOLTZMANN

TWO_PI = 2.0 * np.pi

# hard cap on the Hilbert space; levels**n_qubits above this is refused
MAX_HILBERT_DIM = 1024

# a dressed state must keep at least this much overlap with its bare label
MIN_LABEL_OVERLAP = 0.5


class ModelError(ValueError):
    """Invalid device model parameters or an unbuildable operator."""


@dataclass(frozen=True)
class QubitParams:
    frequency: float        # Hz, bare 0-1 transition
    anharmonicity: float    # Hz, positive: level 2 sits at 2w - d
    t1: float               # s, relaxation time
    t2star: float           # s, total dephasing time
    p_00: float = 1.0       # P(read 0 | level 0)
    p_11: float = 1.0       # P(read 1 | level 1)

    def __post_init__(self):
        if self.frequency <= 0:
            raise ModelError("qubit frequency must be positive")
        if self.anharmonicity <= 0:
            raise ModelError("anharmonicity must be positive")
        if self.t1 <= 0 or self.t2star <= 0:
            raise ModelError("t1 and t2star must be positive")
        if self.t2star > 2.0 * self.t1 + 1e-18:
            raise ModelError("t2star may not exceed 2*t1")
        for p in (self.p_00, self.p_11):
            if not 0.0 <= p <= 1.0:
                raise ModelError("confusion probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class DeviceModel:
    qubits: tuple                 # QubitParams per qubit
    coupling_strength: float = 0.0   # Hz
    temperature: float = 0.0         # K
    transfer_scale: float = 159.2e6  # Hz per volt
    rise_time: float = 0.3e-9        # s
    levels_per_qubit: int = 3
    open_system: bool = False
    coupling_enabled: bool = False
    spam_enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if not self.qubits:
            raise ModelError("at least one qubit required")
        if self.levels_per_qubit < 2:
            raise ModelError("levels_per_qubit must be >= 2")
        if self.temperature < 0:
            raise ModelError("temperature must be non-negative")
        if self.rise_time < 0:
            raise ModelError("rise_time must be non-negative")
        if self.coupling_enabled and len(self.qubits) > 1 and self.coupling_strength <= 0:
            raise ModelError("coupling_enabled requires a positive coupling_strength")
        if self.levels_per_qubit ** len(self.qubits) > MAX_HILBERT_DIM:
            raise ModelError(
                f"Hilbert space dimension {self.levels_per_qubit ** len(self.qubits)} "
                f"exceeds the configured maximum {MAX_HILBERT_DIM}"
            )

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    @property
    def dim(self) -> int:
        return self.levels_per_qubit ** len(self.qubits)

    def replace(self, **kw) -> "DeviceModel":
        return replace(self, **kw)


def simple_flags(model: DeviceModel) -> DeviceModel:
    """Uncoupled, closed, SPAM-free variant of the model."""
    return model.replace(coupling_enabled=False, open_system=False, spam_enabled=False)


def intermediate_flags(model: DeviceModel) -> DeviceModel:
    """Coupled but closed and SPAM-free variant."""
    return model.replace(coupling_enabled=True, open_system=False, spam_enabled=False)


def full_flags(model: DeviceModel) -> DeviceModel:
    """Coupled, open-system, SPAM-errored variant."""
    return model.replace(coupling_enabled=True, open_system=True, spam_enabled=True)


def destroy(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), 1).astype(complex)


def embed(op: np.ndarray, qubit: int, n_qubits: int, levels: int) -> np.ndarray:
    """Embed a single-oscillator operator into the product space."""
    out = np.ones((1, 1), dtype=complex)
    eye = np.eye(levels, dtype=complex)
    for i in range(n_qubits):
        out = np.kron(out, op if i == qubit else eye)
    return out


def number_labels(n_qubits: int, levels: int) -> np.ndarray:
    """(dim, n_qubits) array giving the bare occupation of each basis index."""
    dim = levels ** n_qubits
    idx = np.arange(dim)
    occ = np.empty((dim, n_qubits), dtype=int)
    for q in range(n_qubits - 1, -1, -1):
        occ[:, q] = idx % levels
        idx = idx // levels
    return occ


def build_drift_hamiltonian(model: DeviceModel) -> np.ndarray:
    """Drift Hamiltonian in angular units: Duffing terms plus, when enabled,
    the transverse two-body coupling g(b+b')(b+b')."""
    lv = model.levels_per_qubit
    nq = model.n_qubits
    b = destroy(lv)
    n_op = b.conj().T @ b
    h = np.zeros((model.dim, model.dim), dtype=complex)
    for q, pars in enumerate(model.qubits):
        duff = (TWO_PI * pars.frequency) * n_op \
            - (TWO_PI * pars.anharmonicity / 2.0) * ((n_op - np.eye(lv)) @ n_op)
        h += embed(duff, q, nq, lv)
    if model.coupling_enabled and nq >= 2:
        x = b + b.conj().T
        g = TWO_PI * model.coupling_strength
        for q in range(nq - 1):
            h += g * embed(x, q, nq, lv) @ embed(x, q + 1, nq, lv)
    return h


def build_control_hamiltonians(model: DeviceModel) -> list:
    """One Hermitian drive operator (b + b') per qubit, embedded in the full space."""
    lv = model.levels_per_qubit
    b = destroy(lv)
    x = b + b.conj().T
    return [embed(x, q, model.n_qubits, lv) for q in range(model.n_qubits)]


def pure_dephasing_rate(pars: QubitParams) -> float:
    """Rate gamma_phi = 2(1/t2star - 1/(2 t1)); the factor is chosen so the
    off-diagonal decay of the driven-free qubit is exactly 1/t2star."""
    rate = 2.0 * (1.0 / pars.t2star - 0.5 / pars.t1)
    if rate < -1e-12:
        raise ModelError("negative pure-dephasing rate (t2star > 2*t1)")
    return max(rate, 0.0)


def build_lindblad_operators(model: DeviceModel) -> list:
    """Relaxation sqrt(1/t1)*b and pure dephasing sqrt(gamma_phi)*n per qubit."""
    if not model.open_system:
        raise ModelError("Lindblad operators requested for a closed model")
    lv = model.levels_per_qubit
    b = destroy(lv)
    n_op = b.conj().T @ b
    ops = []
    for q, pars in enumerate(model.qubits):
        ops.append(np.sqrt(1.0 / pars.t1) * embed(b, q, model.n_qubits, lv))
        gphi = pure_dephasing_rate(pars)
        if gphi > 0.0:
            ops.append(np.sqrt(gphi) * embed(n_op, q, model.n_qubits, lv))
    return ops


@dataclass(frozen=True)
class DressedBasis:
    """Eigenframe of the drift, with each eigenstate tagged by the bare
    product state it overlaps most.

    ``energies``/``vectors`` are ordered by bare label, i.e. column j is the
    dressed state whose dominant bare component is basis index j, so that all
    downstream objects (propagators, populations, frame corrections) can use
    plain array indices as logical labels.
    """
    energies: np.ndarray   # angular (rad/s), offset so the ground state is 0
    vectors: np.ndarray    # unitary, column j = dressed state labeled j
    labels: np.ndarray     # permutation: labels[k] = bare label of k-th eigenstate
    ground_energy: float   # absolute drift eigenvalue of the ground state

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def absolute_energies(self) -> np.ndarray:
        return self.energies + self.ground_energy


def dressed_basis(model: DeviceModel) -> DressedBasis:
    """Diagonalize the drift and label eigenstates by maximal bare overlap."""
    h0 = build_drift_hamiltonian(model)
    evals, vecs = np.linalg.eigh(h0)
    overlaps = np.abs(vecs) ** 2
    labels = np.argmax(overlaps, axis=0)
    best = overlaps[labels, np.arange(model.dim)]
    if np.any(best < MIN_LABEL_OVERLAP):
        raise ModelError("dressed state mixes too strongly to carry a bare label")
    if len(set(labels.tolist())) != model.dim:
        raise ModelError("degenerate dressed-state labeling (two states claim one label)")
    order = np.argsort(labels)
    vectors = vecs[:, order]
    energies = evals[order] - evals.min()
    # deterministic phase: dominant component real positive
    for j in range(model.dim):
        a = vectors[np.argmax(np.abs(vectors[:, j])), j]
        vectors[:, j] *= np.conj(a) / abs(a)
    return DressedBasis(energies=energies, vectors=vectors, labels=labels,
                        ground_energy=float(evals.min()))


def thermal_state(model: DeviceModel, basis: DressedBasis | None = None) -> np.ndarray:
    """Thermal density matrix over dressed eigenstates, expressed in the
    dressed-label basis (hence diagonal). SPAM disabled or T=0 gives the
    pure ground state."""
    if basis is None:
        basis = dressed_basis(model)
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    if not model.spam_enabled or model.temperature == 0.0:
        rho[0, 0] = 1.0
        return rho
    # energies are angular; physical energy is hbar*omega
    w = np.exp(-HBAR * basis.energies / (K_BOLTZMANN * model.temperature))
    np.fill_diagonal(rho, w / w.sum())
    return rho

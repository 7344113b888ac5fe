"""Time evolution and gate compilation.

Closed systems: U = prod_i exp(-i H(t_i) dt), H held constant per slice,
slices evaluated at midpoint sample times. Open systems: the Lindblad
generator in column-stacking vectorization, exponentiated per slice (Pade
path) or with the constant dissipator split symmetrically around the exact
slicewise Hamiltonian conjugation (fast paths, default).

All compiled propagators are expressed in the dressed-label basis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .device import (
    DeviceModel,
    DressedBasis,
    build_control_hamiltonians,
    build_drift_hamiltonian,
    build_lindblad_operators,
    dressed_basis,
    number_labels,
)
from .signals import ControlConfig, SampledSignal, synthesize

TWO_PI = 2.0 * np.pi

# run-length threshold above which repeated gates use matrix powers
_POWER_THRESHOLD = 8


class DynamicsError(ValueError):
    """Propagation or sequence-evaluation failure."""


# ---------------------------------------------------------------------------
# matrix exponential: scaling and squaring with a degree-13 Pade approximant

_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm(a: np.ndarray) -> np.ndarray:
    """exp(a) for a square complex matrix."""
    a = np.asarray(a, dtype=complex)
    norm = np.linalg.norm(a, 1)
    squarings = max(0, int(np.ceil(np.log2(norm / _THETA13))) if norm > _THETA13 else 0)
    a = a / (2.0 ** squarings)
    b = _PADE13
    ident = np.eye(a.shape[0], dtype=complex)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) \
        + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    r = np.linalg.solve(v - u, v + u)
    for _ in range(squarings):
        r = r @ r
    return r


# ---------------------------------------------------------------------------
# superoperator helpers (column-stacking convention: vec(A rho B) = (B^T x A) vec(rho))

def vectorize(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvectorize(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return np.asarray(v, dtype=complex).reshape(d, d, order="F")


def unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u.conj(), u)


def dissipator_superop(lindblad_ops) -> np.ndarray:
    """Sum over L of  Lbar x L - 1/2 (I x L'L + (L'L)^T x I)."""
    if not lindblad_ops:
        raise DynamicsError("no Lindblad operators given")
    d = lindblad_ops[0].shape[0]
    ident = np.eye(d, dtype=complex)
    out = np.zeros((d * d, d * d), dtype=complex)
    for lop in lindblad_ops:
        ldl = lop.conj().T @ lop
        out += np.kron(lop.conj(), lop)
        out -= 0.5 * (np.kron(ident, ldl) + np.kron(ldl.T, ident))
    return out


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    d = h.shape[0]
    ident = np.eye(d, dtype=complex)
    return -1j * (np.kron(ident, h) - np.kron(h.T, ident))


def liouvillian(h: np.ndarray, lindblad_ops) -> np.ndarray:
    gen = hamiltonian_superop(h)
    if lindblad_ops:
        gen = gen + dissipator_superop(lindblad_ops)
    return gen


# ---------------------------------------------------------------------------
# slice propagation

def _slice_unitaries(drift, controls, fields, dt):
    """Per-slice exp(-i H(t_i) dt) via a batched Hermitian eigensolve."""
    stacks = [np.asarray(f.values, dtype=float) for f in fields]
    n = stacks[0].size
    for s in stacks:
        if s.size != n:
            raise DynamicsError("field arrays must share one grid")
        if not np.all(np.isfinite(s)):
            raise DynamicsError("non-finite field values")
    h = np.broadcast_to(drift, (n,) + drift.shape).copy()
    for c, s in zip(controls, stacks):
        h += s[:, None, None] * c[None, :, :]
    evals, vecs = np.linalg.eigh(h)
    phases = np.exp(-1j * evals * dt)
    return np.einsum("tij,tj,tkj->tik", vecs, phases, vecs.conj())


def _product(mats) -> np.ndarray:
    out = np.eye(mats[0].shape[0], dtype=complex)
    for m in mats:
        out = m @ out
    return out


def propagate_unitary(drift, controls, fields, dt, basis: DressedBasis | None = None) -> np.ndarray:
    """Closed-system propagator over the sampled fields, latest slice leftmost.

    ``fields`` is one SampledSignal (or plain array) per control operator,
    all on the same simulation grid with spacing dt.
    """
    fields = [f if isinstance(f, SampledSignal) else
              SampledSignal(times=np.arange(np.size(f)) * dt, values=np.asarray(f))
              for f in fields]
    if any(np.iscomplexobj(f.values) for f in fields):
        raise DynamicsError("fields must be real (post-mixer) signals")
    u = _product(_slice_unitaries(drift, controls, fields, dt))
    if basis is not None:
        u = basis.vectors.conj().T @ u @ basis.vectors
    return u


def propagate_liouville(drift, controls, lindblad_ops, fields, dt,
                        basis: DressedBasis | None = None) -> np.ndarray:
    """Open-system propagator: product over slices of exp(L(t_i) dt).

    Identical field slices share one exponential (exact, bitwise-keyed cache),
    so a constant drive costs a single expm.
    """
    fields = [f if isinstance(f, SampledSignal) else
              SampledSignal(times=np.arange(np.size(f)) * dt, values=np.asarray(f))
              for f in fields]
    stacks = [np.asarray(f.values, dtype=float) for f in fields]
    n = stacks[0].size if stacks else 0
    if n == 0:
        raise DynamicsError("empty field list")
    for s in stacks:
        if not np.all(np.isfinite(s)):
            raise DynamicsError("non-finite field values")
    diss = dissipator_superop(lindblad_ops) if lindblad_ops else None
    cache: dict = {}
    d2 = drift.shape[0] ** 2
    out = np.eye(d2, dtype=complex)
    for i in range(n):
        key = tuple(s[i] for s in stacks)
        step = cache.get(key)
        if step is None:
            h = drift + sum(s[i] * c for s, c in zip(stacks, controls))
            gen = hamiltonian_superop(h)
            if diss is not None:
                gen = gen + diss
            step = expm(gen * dt)
            cache[key] = step
        out = step @ out
    if basis is not None:
        w = np.kron(basis.vectors.conj(), basis.vectors)
        out = w.conj().T @ out @ w
    return out


# ---------------------------------------------------------------------------
# gate set

@dataclass(frozen=True)
class Gate:
    """A named logical gate: ideal unitary on its targets' computational
    subspace plus the drive configuration per driven qubit.

    ``phase_corrections`` are additional per-qubit virtual-Z angles applied
    together with the frame correction (used by the two-qubit gate)."""
    name: str
    targets: tuple
    ideal: np.ndarray
    controls: dict = field(default_factory=dict)   # qubit index -> ControlConfig
    phase_corrections: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        u = np.asarray(self.ideal, dtype=complex)
        d = 2 ** len(self.targets)
        if u.shape != (d, d):
            raise DynamicsError(f"ideal unitary of {self.name!r} has wrong shape")
        if np.linalg.norm(u.conj().T @ u - np.eye(d)) > 1e-9:
            raise DynamicsError(f"ideal of gate {self.name!r} is not unitary")
        object.__setattr__(self, "ideal", u)

    @property
    def gate_time(self) -> float:
        times = {c.gate_time for c in self.controls.values()}
        if len(times) > 1:
            raise DynamicsError(f"gate {self.name!r} mixes gate times")
        return times.pop() if times else 0.0


@dataclass(frozen=True)
class GateSet:
    gates: dict                    # name -> Gate
    frame_frequencies: dict        # qubit index -> logical frame frequency (Hz)

    def __post_init__(self):
        names = list(self.gates)
        if len(set(names)) != len(names):
            raise DynamicsError("duplicate gate names")

    def __getitem__(self, name: str) -> Gate:
        return self.gates[name]

    def __contains__(self, name: str) -> bool:
        return name in self.gates

    def names(self):
        return list(self.gates)

    def with_gates(self, **replacements) -> "GateSet":
        gates = dict(self.gates)
        gates.update(replacements)
        freqs = _frame_frequencies(gates)
        return GateSet(gates=gates, frame_frequencies=freqs)


def _frame_frequencies(gates: dict) -> dict:
    freqs: dict = {}
    for gate in gates.values():
        if len(gate.targets) != 1:
            continue
        q = gate.targets[0]
        cfg = gate.controls.get(q)
        if cfg is None:
            continue
        f = cfg.lo_frequency + cfg.freq_offset
        freqs.setdefault(q, f)
    return freqs


def make_gateset(gates) -> GateSet:
    gates = {g.name: g for g in gates}
    return GateSet(gates=gates, frame_frequencies=_frame_frequencies(gates))


# ---------------------------------------------------------------------------
# compiled propagators

@dataclass(frozen=True)
class CompiledGate:
    matrix: np.ndarray        # propagator, dressed-label basis
    framed: np.ndarray        # frame corrections applied on top of ``matrix``
    frame_phases: dict        # qubit -> (w_lo + w_off) * t_g mod 2pi
    open_system: bool
    gate_time: float


@dataclass(frozen=True)
class PropagatorSet:
    gates: dict               # name -> CompiledGate
    dim: int
    open_system: bool
    basis: DressedBasis
    occupations: np.ndarray   # (dim, n_qubits) label occupation numbers
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> CompiledGate:
        try:
            return self.gates[name]
        except KeyError:
            raise DynamicsError(f"unknown gate {name!r}") from None


def frame_correction(occupations: np.ndarray, phase: float) -> np.ndarray:
    """Diagonal rotation undoing the drive-frame advance: one ``phase`` per
    excitation of the addressed qubit (dressed-label counting)."""
    return np.diag(np.exp(1j * np.asarray(occupations, dtype=float) * phase))


def _dissipation_half_step(diss_dressed: np.ndarray, duration: float, cache: dict) -> np.ndarray:
    key = float(duration)
    if key not in cache:
        cache[key] = expm(diss_dressed * (duration / 2.0))
    return cache[key]


def compile_gate(gate: Gate, model: DeviceModel, basis: DressedBasis,
                 drift, controls, lindblads, frame_freqs: dict,
                 method: str, half_cache: dict, diss_dressed) -> CompiledGate:
    t_g = gate.gate_time
    if t_g <= 0:
        raise DynamicsError(f"gate {gate.name!r} has no drive configuration")
    fields, ops = [], []
    zero_drive = True
    sig = None
    for q, cfg in sorted(gate.controls.items()):
        sig = synthesize(cfg, model.rise_time, model.transfer_scale)
        if np.max(np.abs(sig.values)) > 0:
            zero_drive = False
        fields.append(sig)
        ops.append(controls[q])
    dt = sig.dt
    dim = model.dim

    if zero_drive:
        u_dressed = np.diag(np.exp(-1j * basis.absolute_energies * t_g))
    else:
        u_bare = _product(_slice_unitaries(drift, ops, fields, dt))
        u_dressed = basis.vectors.conj().T @ u_bare @ basis.vectors

    if model.open_system:
        if method == "pade":
            mat = propagate_liouville(drift, ops, lindblads, fields, dt, basis=basis)
        elif method == "slice-split":
            units = _slice_unitaries(drift, ops, fields, dt)
            w = basis.vectors
            units = np.einsum("ij,tjk,kl->til", w.conj().T, units, w)
            s_half = _dissipation_half_step(diss_dressed, dt, half_cache)
            s_full = s_half @ s_half
            mat = s_half.copy()
            last = len(units) - 1
            for i, u in enumerate(units):
                mat = np.kron(u.conj(), u) @ mat
                mat = (s_half if i == last else s_full) @ mat
        else:  # gate-split
            s_half = _dissipation_half_step(diss_dressed, t_g, half_cache)
            mat = s_half @ unitary_superop(u_dressed) @ s_half
    else:
        mat = u_dressed

    phases = {q: (TWO_PI * frame_freqs.get(q, 0.0) * t_g) % TWO_PI
              for q in range(model.n_qubits)}
    occ = number_labels(model.n_qubits, model.levels_per_qubit)
    corr = np.ones(dim, dtype=complex)
    for q, ph in phases.items():
        corr = corr * np.exp(1j * occ[:, q] * (ph + gate.phase_corrections.get(q, 0.0)))
    if model.open_system:
        framed = (np.kron(np.conj(corr), corr))[:, None] * mat
    else:
        framed = corr[:, None] * mat
    return CompiledGate(matrix=mat, framed=framed, frame_phases=phases,
                        open_system=model.open_system, gate_time=t_g)


def compile_gateset(model: DeviceModel, gateset: GateSet, method: str = "gate-split",
                    basis: DressedBasis | None = None) -> PropagatorSet:
    """Compile every gate of the set under the model. ``method`` selects the
    open-system scheme: "gate-split" (default), "slice-split" or "pade"."""
    if method not in ("gate-split", "slice-split", "pade"):
        raise DynamicsError(f"unknown compilation method {method!r}")
    if basis is None:
        basis = dressed_basis(model)
    drift = build_drift_hamiltonian(model)
    controls = build_control_hamiltonians(model)
    lindblads = build_lindblad_operators(model) if model.open_system else []
    diss_dressed = None
    if model.open_system:
        w = np.kron(basis.vectors.conj(), basis.vectors)
        diss_dressed = w.conj().T @ dissipator_superop(lindblads) @ w
    half_cache: dict = {}
    compiled: dict = {}
    config_cache: dict = {}
    for name, gate in gateset.gates.items():
        key = (tuple(sorted((q, cfg) for q, cfg in gate.controls.items())),
               tuple(sorted(gate.phase_corrections.items())))
        if key in config_cache:
            compiled[name] = config_cache[key]
            continue
        cg = compile_gate(gate, model, basis, drift, controls, lindblads,
                          gateset.frame_frequencies, method, half_cache, diss_dressed)
        compiled[name] = cg
        config_cache[key] = cg
    occ = number_labels(model.n_qubits, model.levels_per_qubit)
    return PropagatorSet(gates=compiled, dim=model.dim, open_system=model.open_system,
                         basis=basis, occupations=occ,
                         metadata={"method": method, "n_qubits": model.n_qubits})


# ---------------------------------------------------------------------------
# sequence evaluation

def _run_lengths(names):
    runs = []
    for name in names:
        if runs and runs[-1][0] == name:
            runs[-1][1] += 1
        else:
            runs.append([name, 1])
    return runs


def evaluate_sequence(propset: PropagatorSet, sequence, rho0: np.ndarray) -> np.ndarray:
    """Apply each gate (propagator followed by its frame correction) in
    sequence order to the initial density matrix. Repeated gates are applied
    through exact matrix powers."""
    rho = np.asarray(rho0, dtype=complex)
    if propset.open_system:
        state = vectorize(rho)
        for name, count in _run_lengths(sequence):
            m = propset[name].framed
            if count >= _POWER_THRESHOLD:
                state = np.linalg.matrix_power(m, count) @ state
            else:
                for _ in range(count):
                    state = m @ state
        return unvectorize(state)
    for name, count in _run_lengths(sequence):
        m = propset[name].framed
        if count >= _POWER_THRESHOLD:
            m = np.linalg.matrix_power(m, count)
            rho = m @ rho @ m.conj().T
        else:
            for _ in range(count):
                rho = m @ rho @ m.conj().T
    return rho


def sequence_unitary(propset: PropagatorSet, sequence) -> np.ndarray:
    """Composed framed propagator of a closed-system sequence."""
    if propset.open_system:
        raise DynamicsError("sequence_unitary requires a closed-system set")
    out = np.eye(propset.dim, dtype=complex)
    for name, count in _run_lengths(sequence):
        m = propset[name].framed
        step = np.linalg.matrix_power(m, count) if count >= _POWER_THRESHOLD else None
        if step is not None:
            out = step @ out
        else:
            for _ in range(count):
                out = m @ out
    return out

"""Experiment generators: Clifford table, randomized-benchmarking (single
length, "ORBIT") sequences, process-tomography settings, relaxation and
echo scans.

Gate words are temporal: word[0] is applied first. Atom keys are
"x90p", "y90p", "x90m", "y90m"; per-qubit gate names are formed by
:func:`atom_gate_name` (e.g. "x90p_B").
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CLIFFORD_ORDER = 24
_ATOM_KEYS = ("x90p", "y90p", "x90m", "y90m")

# index (1-based: 6) pinned to the element X-90 after Y-90 after X90
_PINNED_INDEX = 5
_PINNED_WORD = ("x90p", "y90m", "x90m")


class SequenceError(ValueError):
    """Invalid sequence construction request."""


def qubit_tag(q: int) -> str:
    return chr(ord("A") + q) if q < 26 else f"Q{q}"


def atom_gate_name(atom: str, qubit: int) -> str:
    return f"{atom}_{qubit_tag(qubit)}"


def rotation(axis: str, angle: float) -> np.ndarray:
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    gen = {"x": x, "y": y}[axis]
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * gen


ATOM_UNITARIES = {
    "x90p": rotation("x", np.pi / 2),
    "y90p": rotation("y", np.pi / 2),
    "x90m": rotation("x", -np.pi / 2),
    "y90m": rotation("y", -np.pi / 2),
}


@dataclass(frozen=True)
class ExperimentSpec:
    sequence: tuple             # gate names, temporal order
    target_qubits: tuple
    shots: int
    observable: str             # "ground" or "distribution"
    kind: str                   # orbit | rb | qpt | t1 | ramsey
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(self.sequence))
        object.__setattr__(self, "target_qubits", tuple(self.target_qubits))
        if self.observable not in ("ground", "distribution"):
            raise SequenceError(f"unknown observable {self.observable!r}")
        if self.shots < 1:
            raise SequenceError("shots must be >= 1")


@dataclass(frozen=True)
class CliffordTable:
    """The 24 single-qubit Cliffords: canonical unitaries (fixed global
    phase), atomic decompositions, group multiplication and inverses.

    ``product[a, b]`` is the index of the element equal to U_a @ U_b,
    i.e. b applied first. Index 0 is the identity (empty word)."""
    unitaries: np.ndarray       # (24, 2, 2)
    words: tuple                # 24 atom-key tuples, temporal order
    product: np.ndarray         # (24, 24) int
    inverse: np.ndarray         # (24,) int

    def word_for(self, index: int) -> tuple:
        return self.words[index]


def _canonical_key(u: np.ndarray) -> tuple:
    flat = u.reshape(-1)
    pivot = flat[np.argmax(np.abs(flat) > 1e-8)]
    v = flat * (np.conj(pivot) / abs(pivot))
    return tuple(np.round(v, 8).tolist())


def build_clifford_table(atoms: dict | None = None) -> CliffordTable:
    """Enumerate the group generated by the four +-pi/2 atoms (breadth-first,
    minimal words) and freeze the numbering, keeping the identity at index 0
    and the documented element at index 5."""
    if atoms is None:
        atoms = ATOM_UNITARIES
    missing = [k for k in _ATOM_KEYS if k not in atoms]
    if missing:
        raise SequenceError(f"atoms missing required rotations: {missing}")
    elements = [(np.eye(2, dtype=complex), ())]
    seen = {_canonical_key(np.eye(2)): 0}
    head = 0
    while head < len(elements):
        u, word = elements[head]
        head += 1
        for key in _ATOM_KEYS:
            v = atoms[key] @ u
            ck = _canonical_key(v)
            if ck not in seen:
                seen[ck] = len(elements)
                elements.append((v, word + (key,)))
    if len(elements) != CLIFFORD_ORDER:
        raise SequenceError(
            f"atoms generate {len(elements)} elements, expected {CLIFFORD_ORDER}")
    pinned = np.eye(2, dtype=complex)
    for key in _PINNED_WORD:
        pinned = atoms[key] @ pinned
    pin_at = seen[_canonical_key(pinned)]
    order = list(range(CLIFFORD_ORDER))
    order[_PINNED_INDEX], order[pin_at] = order[pin_at], order[_PINNED_INDEX]
    elements = [elements[i] for i in order]

    unitaries = np.stack([u for u, _ in elements])
    words = tuple(w for _, w in elements)
    index = {_canonical_key(u): i for i, (u, _) in enumerate(elements)}
    product = np.empty((CLIFFORD_ORDER, CLIFFORD_ORDER), dtype=int)
    inverse = np.empty(CLIFFORD_ORDER, dtype=int)
    for a in range(CLIFFORD_ORDER):
        for b in range(CLIFFORD_ORDER):
            product[a, b] = index[_canonical_key(unitaries[a] @ unitaries[b])]
        inverse[a] = index[_canonical_key(unitaries[a].conj().T)]
    return CliffordTable(unitaries=unitaries, words=words,
                         product=product, inverse=inverse)


def expand_cliffords(table: CliffordTable, indices, qubit: int) -> tuple:
    names = []
    for idx in indices:
        names.extend(atom_gate_name(a, qubit) for a in table.word_for(int(idx)))
    return tuple(names)


def rb_sequence(length: int, table: CliffordTable, rng: np.random.Generator,
                qubit: int, shots: int = 1000, kind: str = "rb") -> ExperimentSpec:
    """length-1 uniform random Cliffords plus the recovery element, expanded
    to atomic gate names on the given qubit."""
    if length < 1:
        raise SequenceError("length must be >= 1")
    draws = rng.integers(0, CLIFFORD_ORDER, size=length - 1)
    running = 0
    for d in draws:
        running = int(table.product[int(d), running])
    recovery = int(table.inverse[running])
    indices = list(int(d) for d in draws) + [recovery]
    return ExperimentSpec(
        sequence=expand_cliffords(table, indices, qubit),
        target_qubits=(qubit,), shots=shots, observable="ground", kind=kind,
        params={"length": length, "cliffords": tuple(indices)},
    )


def orbit_experiments(table: CliffordTable, n_sequences: int, length: int,
                      rng: np.random.Generator, qubit: int,
                      shots: int = 1000) -> list:
    """The fixed single-length RB set used as a calibration figure of merit."""
    return [rb_sequence(length, table, rng, qubit, shots=shots, kind="orbit")
            for _ in range(n_sequences)]


# tomography prep/measure settings per qubit: I, X90, Y90, X180
_TOMO_SETTINGS = ((), ("x90p",), ("y90p",), ("x90p", "x90p"))


def qpt_sequences(gate_name: str, targets, shots: int = 1000) -> list:
    """All preparation x measurement settings around the gate:
    4 settings per qubit on each side, (4*4)**n_targets experiments."""
    targets = tuple(targets)
    specs = []
    n = len(targets)
    setting_ids = range(len(_TOMO_SETTINGS))
    import itertools
    for prep in itertools.product(setting_ids, repeat=n):
        for meas in itertools.product(setting_ids, repeat=n):
            seq = []
            for q, s in zip(targets, prep):
                seq.extend(atom_gate_name(a, q) for a in _TOMO_SETTINGS[s])
            seq.append(gate_name)
            for q, s in zip(targets, meas):
                seq.extend(atom_gate_name(a, q) for a in _TOMO_SETTINGS[s])
            specs.append(ExperimentSpec(
                sequence=tuple(seq), target_qubits=targets, shots=shots,
                observable="distribution", kind="qpt",
                params={"prep": tuple(prep), "meas": tuple(meas)},
            ))
    return specs


def t1_sequence(n: int, qubit: int, shots: int = 1000) -> ExperimentSpec:
    """Excite with two X90 pulses, then wait n identity gates."""
    if n < 0:
        raise SequenceError("n must be >= 0")
    seq = (atom_gate_name("x90p", qubit),) * 2 + ("idle",) * n
    return ExperimentSpec(sequence=seq, target_qubits=(qubit,), shots=shots,
                          observable="ground", kind="t1", params={"n": n})


def ramsey_echo_sequence(n: int, qubit: int, shots: int = 1000) -> ExperimentSpec:
    """Echo: X90, wait n/2, X90 X90 (the echo pi pulse), wait n/2, X-90."""
    if n < 0 or n % 2:
        raise SequenceError("n must be even and >= 0")
    half = ("idle",) * (n // 2)
    x90p = atom_gate_name("x90p", qubit)
    seq = (x90p,) + half + (x90p, x90p) + half + (atom_gate_name("x90m", qubit),)
    return ExperimentSpec(sequence=seq, target_qubits=(qubit,), shots=shots,
                          observable="ground", kind="ramsey", params={"n": n})


def decoherence_scan(qubit: int, n_points: int = 51, n_min: int = 100,
                     n_max: int = 10000, shots: int = 1000) -> list:
    """Log-spaced relaxation and echo scans (echo lengths rounded to even)."""
    grid = np.unique(np.round(np.logspace(np.log10(n_min), np.log10(n_max),
                                          n_points)).astype(int))
    specs = [t1_sequence(int(n), qubit, shots=shots) for n in grid]
    specs += [ramsey_echo_sequence(int(n) + int(n) % 2, qubit, shots=shots)
              for n in grid]
    return specs

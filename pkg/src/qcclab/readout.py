"""Read-out model: dressed populations -> per-qubit confusion -> shot sampling.

Outcomes are binary per qubit. Level 0 reads "0" with probability p_00,
level 1 reads "1" with probability p_11, and every higher (leakage) level
reads predominantly "1": p(read 0 | level >= 2) = 1 - p_11. Joint outcomes
assume independent per-qubit classifiers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import DeviceModel


class ReadoutError(ValueError):
    """Inconsistent populations or sampling parameters."""


@dataclass(frozen=True)
class ConfusionMap:
    """Row-stochastic 2 x levels matrix per qubit: outcome given level."""
    matrices: tuple   # one (2, levels) array per qubit

    def __post_init__(self):
        mats = tuple(np.asarray(m, dtype=float) for m in self.matrices)
        for m in mats:
            if m.shape[0] != 2:
                raise ReadoutError("confusion matrix must have two outcome rows")
            if np.any(m < -1e-12) or np.any(m > 1 + 1e-12):
                raise ReadoutError("confusion entries must lie in [0, 1]")
            if np.max(np.abs(m.sum(axis=0) - 1.0)) > 1e-9:
                raise ReadoutError("outcome probabilities per level must sum to 1")
        object.__setattr__(self, "matrices", mats)

    def for_qubit(self, q: int) -> np.ndarray:
        return self.matrices[q]


def confusion_from_model(model: DeviceModel) -> ConfusionMap:
    """Confusion matrices from the model's p_00/p_11; identity rows when
    SPAM is disabled (levels >= 2 then always read as "1")."""
    mats = []
    lv = model.levels_per_qubit
    for pars in model.qubits:
        p00 = pars.p_00 if model.spam_enabled else 1.0
        p11 = pars.p_11 if model.spam_enabled else 1.0
        row0 = np.concatenate(([p00, 1.0 - p11], np.full(lv - 2, 1.0 - p11)))
        mats.append(np.vstack([row0, 1.0 - row0]))
    return ConfusionMap(matrices=tuple(mats))


def populations(rho: np.ndarray, renorm_tol: float = 1e-8,
                error_tol: float = 1e-6) -> np.ndarray:
    """Diagonal of the density matrix in the dressed-label basis, clipped at
    zero; renormalized only if clipping moved the sum by less than
    ``renorm_tol``. A sum off from 1 by more than ``error_tol`` is treated as
    a propagation bug."""
    p = np.real(np.diagonal(rho)).copy()
    total = p.sum()
    if abs(total - 1.0) > error_tol:
        raise ReadoutError(f"populations sum to {total!r}, not 1")
    clipped = np.clip(p, 0.0, None)
    if abs(clipped.sum() - total) < renorm_tol:
        clipped = clipped / clipped.sum()
    return clipped


def marginal_levels(pops: np.ndarray, occupations: np.ndarray, qubits) -> np.ndarray:
    """Joint level distribution of the given qubits, marginalizing the rest.

    ``occupations`` is the (dim, n_qubits) label table of the dressed basis.
    Output axis order follows ``qubits``; levels per axis inferred from the table.
    """
    qubits = tuple(qubits)
    levels = int(occupations.max()) + 1
    shape = (levels,) * len(qubits)
    out = np.zeros(shape)
    for idx, p in enumerate(pops):
        key = tuple(int(occupations[idx, q]) for q in qubits)
        out[key] += p
    return out


def classify(pops: np.ndarray, confusion: ConfusionMap, target_qubits,
             occupations: np.ndarray) -> np.ndarray:
    """Binary outcome distribution over the target qubits (tensor product of
    per-qubit confusions applied to the joint marginal level distribution).

    Outcome order is big-endian binary over ``target_qubits``: for two
    targets (q0, q1) the entries are P(00), P(01), P(10), P(11).
    """
    target_qubits = tuple(target_qubits)
    joint = marginal_levels(pops, occupations, target_qubits)
    for axis, q in enumerate(target_qubits):
        joint = np.tensordot(confusion.for_qubit(q), joint, axes=([1], [axis]))
        joint = np.moveaxis(joint, 0, axis)
    return joint.reshape(-1)


@dataclass(frozen=True)
class OutcomeRecord:
    frequencies: tuple   # outcome frequencies, multiples of 1/shots
    shots: int
    seed: int            # stream seed used for the multinomial draw

    def __post_init__(self):
        if self.shots < 1:
            raise ReadoutError("shots must be >= 1")
        f = tuple(float(x) for x in self.frequencies)
        if any(x < 0 for x in f):
            raise ReadoutError("negative outcome frequency")
        object.__setattr__(self, "frequencies", f)


def sample_shots(distribution, shots: int, rng: np.random.Generator,
                 seed: int = -1) -> OutcomeRecord:
    """Multinomial draw of ``shots`` trials; frequencies = counts/shots.

    ``rng`` must be a freshly seeded generator for the record to be
    replayable; ``seed`` is stored verbatim for that purpose.
    """
    p = np.asarray(distribution, dtype=float)
    if shots < 1:
        raise ReadoutError("shots must be >= 1")
    if np.any(p < -1e-9):
        raise ReadoutError("negative probabilities in outcome distribution")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ReadoutError("outcome distribution must sum to 1")
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    counts = rng.multinomial(shots, p)
    return OutcomeRecord(frequencies=tuple(counts / shots), shots=shots, seed=seed)

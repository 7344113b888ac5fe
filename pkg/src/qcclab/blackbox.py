"""The sealed device boundary and the recorded-experiment store.

A BlackBoxDevice hides its device model entirely: the public surface accepts
pulse configurations (gate sets) and experiment descriptions and returns
outcome records only. All sampling is driven by explicit seeds so any record
can be replayed bit-identically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .device import DeviceModel, dressed_basis, thermal_state
from .dynamics import GateSet, compile_gateset, evaluate_sequence
from .readout import (OutcomeRecord, classify, confusion_from_model,
                      populations, sample_shots)
from .sequences import ExperimentSpec


class DeviceError(RuntimeError):
    """Experiment execution failure on the device."""


def predict_outcome(model: DeviceModel, propset, spec: ExperimentSpec,
                    rho0=None, confusion=None) -> np.ndarray:
    """Deterministic outcome distribution of one experiment under a model:
    thermal init, sequence evolution, dressed populations, confusion."""
    if rho0 is None:
        rho0 = thermal_state(model, propset.basis)
    rho = evaluate_sequence(propset, spec.sequence, rho0)
    pops = populations(rho)
    if confusion is None:
        confusion = confusion_from_model(model)
    return classify(pops, confusion, spec.target_qubits, propset.occupations)


def observed_terms(spec: ExperimentSpec, frequencies) -> np.ndarray:
    """The statistically independent outcome terms of a record: the ground
    frequency for survival observables, all but the last outcome for full
    distributions (the dropped entry is fixed by normalization)."""
    f = np.asarray(frequencies, dtype=float)
    if spec.observable == "ground":
        return f[:1]
    return f[:-1]


class BlackBoxDevice:
    """Opaque handle around a hidden device model.

    Public surface: :meth:`run`, :attr:`n_qubits`, :attr:`levels`. The only
    information channel out is outcome frequencies.
    """

    _PUBLIC_API = ("run", "n_qubits", "levels")

    def __init__(self, model: DeviceModel, compile_method: str = "gate-split"):
        self._model = model
        self._method = compile_method
        self._basis = dressed_basis(model)
        self._rho0 = thermal_state(model, self._basis)
        self._confusion = confusion_from_model(model)
        self._calls = 0

    @property
    def n_qubits(self) -> int:
        return self._model.n_qubits

    @property
    def levels(self) -> int:
        return self._model.levels_per_qubit

    def run(self, gateset: GateSet, experiments, seed: int) -> list:
        """Execute the experiments with the supplied pulse configurations;
        returns one OutcomeRecord per experiment. Deterministic in ``seed``."""
        experiments = list(experiments)
        used = sorted({name for spec in experiments for name in spec.sequence})
        subset = GateSet(gates={n: gateset[n] for n in used},
                         frame_frequencies=gateset.frame_frequencies)
        try:
            propset = compile_gateset(self._model, subset, method=self._method,
                                      basis=self._basis)
        except Exception as exc:
            raise DeviceError(f"compilation failed on device: {exc}") from exc
        streams = np.random.SeedSequence(seed).spawn(len(experiments))
        records = []
        for spec, stream in zip(experiments, streams):
            dist = predict_outcome(self._model, propset, spec,
                                   rho0=self._rho0, confusion=self._confusion)
            child_seed = int(stream.generate_state(1)[0])
            rng = np.random.default_rng(child_seed)
            records.append(sample_shots(dist, spec.shots, rng, seed=child_seed))
        self._calls += 1
        return records


@dataclass(frozen=True)
class DataEntry:
    alpha_id: int            # groups entries taken with one parameter set
    alpha: dict              # parameter name -> value over the base gate set
    spec: ExperimentSpec
    record: OutcomeRecord


@dataclass
class DataSet:
    """Recorded experiments: {pulse parameters, sequence, outcome}."""
    base_gateset: GateSet
    entries: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, alpha_id: int, alpha: dict, spec: ExperimentSpec,
               record: OutcomeRecord):
        self.entries.append(DataEntry(alpha_id=alpha_id, alpha=dict(alpha),
                                      spec=spec, record=record))

    def alpha_ids(self):
        seen = []
        for e in self.entries:
            if e.alpha_id not in seen:
                seen.append(e.alpha_id)
        return seen

    def entries_for(self, alpha_id: int):
        return [e for e in self.entries if e.alpha_id == alpha_id]

    def __len__(self):
        return len(self.entries)

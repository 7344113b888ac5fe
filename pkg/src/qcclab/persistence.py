"""JSON persistence: device models, gate sets, data sets and run specs, all
schema-validated on load with path-accurate errors; canonical serialization
(sorted keys) so identical runs produce byte-identical files; CSV exports
for the convergence, sensitivity, correlation and parameter-table plots.
"""
from __future__ import annotations

import csv
import json
from importlib import resources as importlib_resources
from pathlib import Path

import numpy as np
import jsonschema

from .blackbox import DataSet
from .device import DeviceModel, QubitParams
from .dynamics import Gate, GateSet, make_gateset
from .optimizers import OptimRun
from .readout import OutcomeRecord
from .sequences import ExperimentSpec, qubit_tag
from .signals import ControlConfig, EnvelopeSpec

SCHEMA_VERSION = 1


class PersistenceError(ValueError):
    """Schema violation or malformed file."""


# ---------------------------------------------------------------------------
# canonical JSON

def canonical_dumps(obj, compact: bool = False) -> str:
    if compact:
        return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_json(obj, path, compact: bool = False):
    Path(path).write_text(canonical_dumps(obj, compact=compact))


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"{path}: not valid JSON ({exc})") from exc


def _schema(name: str) -> dict:
    ref = importlib_resources.files("qcclab").joinpath(f"resources/schemas/{name}.json")
    return json.loads(ref.read_text())


def validate(obj: dict, schema_name: str, source: str = "<data>"):
    version = obj.get("schema_version")
    if version is None:
        raise PersistenceError(f"{source}: /schema_version: missing")
    if version > SCHEMA_VERSION:
        raise PersistenceError(
            f"{source}: /schema_version: file version {version} is newer than "
            f"supported version {SCHEMA_VERSION}")
    validator = jsonschema.Draft202012Validator(_schema(schema_name))
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        pointer = "/" + "/".join(str(p) for p in e.absolute_path)
        raise PersistenceError(f"{source}: {pointer}: {e.message}")


def builtin_path(name: str) -> Path:
    """Path of a configuration file shipped with the package."""
    return Path(str(importlib_resources.files("qcclab").joinpath(f"resources/{name}")))


# ---------------------------------------------------------------------------
# device model

def model_to_dict(model: DeviceModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "qubits": [{
            "frequency": p.frequency, "anharmonicity": p.anharmonicity,
            "t1": p.t1, "t2star": p.t2star, "p_00": p.p_00, "p_11": p.p_11,
        } for p in model.qubits],
        "coupling_strength": model.coupling_strength,
        "temperature": model.temperature,
        "transfer_scale": model.transfer_scale,
        "rise_time": model.rise_time,
        "levels_per_qubit": model.levels_per_qubit,
        "open_system": model.open_system,
        "coupling_enabled": model.coupling_enabled,
        "spam_enabled": model.spam_enabled,
    }


def model_from_dict(obj: dict, source: str = "<data>") -> DeviceModel:
    validate(obj, "device_model", source)
    qubits = tuple(QubitParams(**q) for q in obj["qubits"])
    fields = {k: v for k, v in obj.items() if k not in ("schema_version", "qubits")}
    return DeviceModel(qubits=qubits, **fields)


def save_model(model: DeviceModel, path):
    save_json(model_to_dict(model), path)


def load_model(path) -> DeviceModel:
    return model_from_dict(load_json(path), source=str(path))


# ---------------------------------------------------------------------------
# gate set

def _complex_matrix_to_list(m: np.ndarray):
    return [[[float(x.real), float(x.imag)] for x in row] for row in np.asarray(m, dtype=complex)]


def _complex_matrix_from_list(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def _config_to_dict(cfg: ControlConfig) -> dict:
    return {
        "envelope": {
            "kind": cfg.envelope.kind,
            "drag_delta": cfg.envelope.drag_delta,
            "ramp_time": cfg.envelope.ramp_time,
            "values": list(cfg.envelope.values),
        },
        "amplitude": cfg.amplitude, "gate_time": cfg.gate_time,
        "lo_frequency": cfg.lo_frequency, "drag_coefficient": cfg.drag_coefficient,
        "freq_offset": cfg.freq_offset, "phase": cfg.phase,
        "awg_rate": cfg.awg_rate, "sim_rate": cfg.sim_rate,
    }


def _config_from_dict(obj: dict) -> ControlConfig:
    env = obj["envelope"]
    spec = EnvelopeSpec(kind=env["kind"], drag_delta=env["drag_delta"],
                        ramp_time=env["ramp_time"], values=tuple(env["values"]))
    fields = {k: v for k, v in obj.items() if k != "envelope"}
    return ControlConfig(envelope=spec, **fields)


def gateset_to_dict(gateset: GateSet) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "gates": [{
            "name": g.name,
            "targets": list(g.targets),
            "ideal": _complex_matrix_to_list(g.ideal),
            "controls": {str(q): _config_to_dict(c) for q, c in sorted(g.controls.items())},
            "phase_corrections": {str(q): v for q, v in sorted(g.phase_corrections.items())},
        } for g in gateset.gates.values()],
    }


def gateset_from_dict(obj: dict, source: str = "<data>") -> GateSet:
    validate(obj, "gateset", source)
    gates = []
    for g in obj["gates"]:
        gates.append(Gate(
            name=g["name"], targets=tuple(g["targets"]),
            ideal=_complex_matrix_from_list(g["ideal"]),
            controls={int(q): _config_from_dict(c) for q, c in g["controls"].items()},
            phase_corrections={int(q): float(v)
                               for q, v in g.get("phase_corrections", {}).items()},
        ))
    return make_gateset(gates)


def save_gateset(gateset: GateSet, path):
    save_json(gateset_to_dict(gateset), path)


def load_gateset(path) -> GateSet:
    return gateset_from_dict(load_json(path), source=str(path))


# ---------------------------------------------------------------------------
# data set

def _spec_to_dict(spec: ExperimentSpec) -> dict:
    params = {}
    for k, v in spec.params.items():
        params[k] = list(v) if isinstance(v, tuple) else v
    return {
        "sequence": list(spec.sequence),
        "target_qubits": list(spec.target_qubits),
        "shots": spec.shots, "observable": spec.observable,
        "kind": spec.kind, "params": params,
    }


def _spec_from_dict(obj: dict) -> ExperimentSpec:
    return ExperimentSpec(sequence=tuple(obj["sequence"]),
                          target_qubits=tuple(obj["target_qubits"]),
                          shots=obj["shots"], observable=obj["observable"],
                          kind=obj["kind"], params=dict(obj.get("params", {})))


def dataset_to_dict(dataset: DataSet) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "metadata": dict(dataset.metadata),
        "base_gateset": gateset_to_dict(dataset.base_gateset),
        "entries": [{
            "alpha_id": e.alpha_id,
            "alpha": {k: float(v) for k, v in sorted(e.alpha.items())},
            **_spec_to_dict(e.spec),
            "seed": e.record.seed,
            "outcome": list(e.record.frequencies),
        } for e in dataset.entries],
    }


def dataset_from_dict(obj: dict, source: str = "<data>") -> DataSet:
    validate(obj, "dataset", source)
    ds = DataSet(base_gateset=gateset_from_dict(obj["base_gateset"], source),
                 metadata=dict(obj["metadata"]))
    for e in obj["entries"]:
        spec = _spec_from_dict(e)
        shots = spec.shots
        for f in e["outcome"]:
            if abs(round(f * shots) - f * shots) > 1e-6:
                raise PersistenceError(
                    f"{source}: outcome frequency {f} is not a multiple of 1/shots")
        record = OutcomeRecord(frequencies=tuple(e["outcome"]), shots=shots,
                               seed=e["seed"])
        ds.append(e["alpha_id"], dict(e["alpha"]), spec, record)
    return ds


def save_dataset(dataset: DataSet, path):
    save_json(dataset_to_dict(dataset), path, compact=True)


def load_dataset(path) -> DataSet:
    return dataset_from_dict(load_json(path), source=str(path))


# ---------------------------------------------------------------------------
# run spec

def load_runspec(path) -> dict:
    obj = load_json(path)
    validate(obj, "runspec", source=str(path))
    task = obj["task"]
    required = {
        "c1": ("model", "gateset"), "c2": ("device", "gateset"),
        "c3": ("model", "dataset", "model_flags"),
        "validate": ("model", "dataset"),
        "sens": ("model", "dataset", "parameter", "range"),
        "budget": ("model", "gateset"),
        "simulate": ("model", "gateset", "sequence"),
        "cr": ("model", "gateset"), "pipeline": (),
    }[task]
    for key in required:
        if key not in obj.get("inputs", {}):
            raise PersistenceError(f"{path}: /inputs/{key}: required for task {task!r}")
    return obj


# ---------------------------------------------------------------------------
# optimizer logs and plot-ready exports

def run_to_jsonl(run: OptimRun, path):
    with open(path, "w") as fh:
        for hp in run.history:
            fh.write(canonical_dumps({
                "iteration": hp.iteration, "best_value": hp.best_value,
                "batch_value": hp.batch_value, "params": hp.params,
            }, compact=True))


ORBIT_TRACE_HEADER = ("iteration", "batch_value", "best_value")
MATCH_TRACE_HEADER = ("iteration", "value", "sigma")
SENSITIVITY_HEADER = ("value", "goal")
CORRELATION_HEADER = ("predicted", "measured")
PARAMETER_TABLE_HEADER = ("parameter", "stage", "true_value", "before", "after")
DECOHERENCE_TRACE_HEADER = ("iteration", "parameter", "value")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def export_orbit_trace(run: OptimRun, path):
    _write_csv(path, ORBIT_TRACE_HEADER,
               [(hp.iteration, hp.batch_value, hp.best_value) for hp in run.history])


def export_match_trace(sigma_trace, path):
    _write_csv(path, MATCH_TRACE_HEADER, sigma_trace)


def export_sensitivity(curve, path):
    _write_csv(path, SENSITIVITY_HEADER, curve)


def export_correlation(predicted, measured, path):
    _write_csv(path, CORRELATION_HEADER,
               [(float(p), float(m)) for p, m in zip(predicted, measured)])


def export_parameter_table(rows, path):
    """rows: (parameter, stage, true_value, before, after)."""
    _write_csv(path, PARAMETER_TABLE_HEADER, rows)


def export_decoherence_trace(rows, path):
    """rows: (iteration, parameter, value) for the decay-learning stage."""
    _write_csv(path, DECOHERENCE_TRACE_HEADER, rows)

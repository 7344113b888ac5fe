"""Builders for the standard gate sets: per-qubit +-pi/2 rotation sets with
a shared DRAG template, the zero-amplitude idle gate, and the two-qubit
cross-resonance template; plus the named-parameter vocabulary used to vary
pulse parameters (alpha) and model parameters (beta).

The drive-phase-to-axis map follows the annihilation-operator convention
(axis angle = -phi_xy), so: X90p at 0, Y90p at 3pi/2, X90m at pi,
Y90m at pi/2.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .device import DeviceModel
from .dynamics import Gate, GateSet, make_gateset
from .sequences import ATOM_UNITARIES, atom_gate_name, qubit_tag
from .signals import ControlConfig, EnvelopeSpec

ATOM_PHASES = {
    "x90p": 0.0,
    "y90p": 1.5 * np.pi,
    "x90m": np.pi,
    "y90m": 0.5 * np.pi,
}

CR_TARGET = np.array([
    [1, -1j, 0, 0],
    [-1j, 1, 0, 0],
    [0, 0, 1, 1j],
    [0, 0, 1j, 1],
], dtype=complex) / np.sqrt(2.0)     # exp(-i pi/4 Z(x)X)


def drag_config(amplitude: float, drag: float, freq_offset: float,
                lo_frequency: float, drag_delta: float, gate_time: float = 7e-9,
                phase: float = 0.0, awg_rate: float = 2e9,
                sim_rate: float = 20e9) -> ControlConfig:
    env = EnvelopeSpec(kind="gaussian-drag", drag_delta=drag_delta)
    return ControlConfig(envelope=env, amplitude=amplitude, gate_time=gate_time,
                         lo_frequency=lo_frequency, drag_coefficient=drag,
                         freq_offset=freq_offset, phase=phase,
                         awg_rate=awg_rate, sim_rate=sim_rate)


def single_qubit_gates(qubit: int, template: ControlConfig) -> list:
    """The four +-pi/2 rotations sharing one (amplitude, drag, freq_offset)
    template, differing only in drive phase."""
    gates = []
    for atom, phase in ATOM_PHASES.items():
        gates.append(Gate(
            name=atom_gate_name(atom, qubit),
            targets=(qubit,),
            ideal=ATOM_UNITARIES[atom],
            controls={qubit: template.replace(phase=phase)},
        ))
    return gates


def idle_gate(n_qubits: int, template: ControlConfig) -> Gate:
    """Zero-amplitude pulse of one gate duration: decoherence acts, nothing
    is driven."""
    cfg = template.replace(amplitude=0.0, drag_coefficient=0.0, phase=0.0)
    return Gate(name="idle", targets=(0,), ideal=np.eye(2, dtype=complex),
                controls={0: cfg})


def cr_gate(control: int, target: int, amp_control: float, amp_target: float,
            phase_control: float, phase_target: float, freq_offset: float,
            lo_frequency: float, z_control: float = 0.0, z_target: float = 0.0,
            gate_time: float = 100e-9, ramp_time: float = 5e-9,
            awg_rate: float = 2e9, sim_rate: float = 20e9) -> Gate:
    """Cross-resonance: simultaneous flattop drives on both qubits at the
    target qubit's frequency; ideal action exp(-i pi/4 Z(x)X). ``z_*`` are
    virtual-Z corrections folded into the frame rotation."""
    env = EnvelopeSpec(kind="flattop", ramp_time=ramp_time)
    mk = lambda amp, ph: ControlConfig(
        envelope=env, amplitude=amp, gate_time=gate_time,
        lo_frequency=lo_frequency, freq_offset=freq_offset, phase=ph,
        awg_rate=awg_rate, sim_rate=sim_rate)
    return Gate(
        name=f"cr_{qubit_tag(control)}{qubit_tag(target)}",
        targets=(control, target),
        ideal=CR_TARGET,
        controls={control: mk(amp_control, phase_control),
                  target: mk(amp_target, phase_target)},
        phase_corrections={control: z_control, target: z_target},
    )


def standard_gateset(templates: dict, idle_template: ControlConfig | None = None,
                     extra_gates=()) -> GateSet:
    """Gate set with the four rotations for each qubit in ``templates``
    (qubit index -> ControlConfig), an idle gate, and any extra gates."""
    gates = []
    for qubit, template in sorted(templates.items()):
        gates.extend(single_qubit_gates(qubit, template))
    if idle_template is None:
        idle_template = next(iter(templates.values()))
    n_qubits = max(templates) + 1
    gates.append(idle_gate(n_qubits, idle_template))
    gates.extend(extra_gates)
    return make_gateset(gates)


# --------------------------------------------------------------------------
# named pulse parameters (alpha): "<qubit tag>.<config field>" updates the
# four rotation gates of that qubit; "<gate name>.<cr field>" updates the
# two-qubit gate.

_CR_FIELDS = ("amp_control", "amp_target", "phase_control", "phase_target",
              "freq_offset", "z_control", "z_target")


def apply_alpha(gateset: GateSet, alpha: dict) -> GateSet:
    """New gate set with the named pulse parameters applied."""
    gates = dict(gateset.gates)
    qubit_updates: dict = {}
    gate_updates: dict = {}
    for key, value in alpha.items():
        scope, field_name = key.split(".", 1)
        if scope in gates:
            gate_updates.setdefault(scope, {})[field_name] = float(value)
        else:
            qubit_updates.setdefault(scope, {})[field_name] = float(value)
    touched = set()
    for name, gate in list(gates.items()):
        if len(gate.targets) != 1 or name == "idle":
            continue
        tag = qubit_tag(gate.targets[0])
        upd = qubit_updates.get(tag)
        if upd:
            touched.add(tag)
            q = gate.targets[0]
            gates[name] = replace(gate, controls={q: gate.controls[q].replace(**upd)})
    unknown = set(qubit_updates) - touched
    if unknown:
        raise KeyError(f"pulse parameters match no gate: {sorted(unknown)}")
    for name, upd in gate_updates.items():
        gate = gates[name]
        control, target = gate.targets
        cc, tc = gate.controls[control], gate.controls[target]
        pc = dict(gate.phase_corrections)
        for f, v in upd.items():
            if f == "amp_control":
                cc = cc.replace(amplitude=v)
            elif f == "amp_target":
                tc = tc.replace(amplitude=v)
            elif f == "phase_control":
                cc = cc.replace(phase=v)
            elif f == "phase_target":
                tc = tc.replace(phase=v)
            elif f == "freq_offset":
                cc = cc.replace(freq_offset=v)
                tc = tc.replace(freq_offset=v)
            elif f == "z_control":
                pc[control] = v
            elif f == "z_target":
                pc[target] = v
            else:
                raise KeyError(f"unknown two-qubit pulse field {f!r}")
        gates[name] = replace(gate, controls={control: cc, target: tc},
                              phase_corrections=pc)
    return make_gateset(gates.values())


def gateset_alpha(gateset: GateSet, keys) -> dict:
    """Read the named pulse parameters back out of a gate set."""
    out = {}
    for key in keys:
        scope, field_name = key.split(".", 1)
        if scope in gateset.gates:
            gate = gateset[scope]
            control, target = gate.targets
            cc, tc = gate.controls[control], gate.controls[target]
            out[key] = {
                "amp_control": cc.amplitude, "amp_target": tc.amplitude,
                "phase_control": cc.phase, "phase_target": tc.phase,
                "freq_offset": cc.freq_offset,
                "z_control": gate.phase_corrections.get(control, 0.0),
                "z_target": gate.phase_corrections.get(target, 0.0),
            }[field_name]
        else:
            for gate in gateset.gates.values():
                if len(gate.targets) == 1 and qubit_tag(gate.targets[0]) == scope \
                        and gate.name != "idle":
                    out[key] = getattr(gate.controls[gate.targets[0]], field_name)
                    break
            else:
                raise KeyError(f"no gate matches parameter {key!r}")
    return out


# --------------------------------------------------------------------------
# named model parameters (beta): "<qubit tag>.<qubit field>" or a global
# DeviceModel field name.

def apply_beta(model: DeviceModel, beta: dict) -> DeviceModel:
    """New device model with the named parameters applied."""
    qubits = list(model.qubits)
    global_updates: dict = {}
    for key, value in beta.items():
        if "." in key:
            tag, field_name = key.split(".", 1)
            q = ord(tag) - ord("A")
            if not 0 <= q < len(qubits):
                raise KeyError(f"no qubit for parameter {key!r}")
            qubits[q] = replace(qubits[q], **{field_name: float(value)})
        else:
            global_updates[key] = float(value)
    return model.replace(qubits=tuple(qubits), **global_updates)


def model_beta(model: DeviceModel, keys) -> dict:
    """Read the named model parameters out of a device model."""
    out = {}
    for key in keys:
        if "." in key:
            tag, field_name = key.split(".", 1)
            out[key] = getattr(model.qubits[ord(tag) - ord("A")], field_name)
        else:
            out[key] = getattr(model, key)
    return out

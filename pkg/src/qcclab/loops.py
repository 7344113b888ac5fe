"""The three optimization loops and the model-analysis tools.

C1: model-based pulse optimization (mean gate infidelity).
C2: model-free calibration against the sealed device (single-length RB).
C3: model learning from the recorded data (rescaled log-likelihood).

Plus holdout validation, one-dimensional sensitivity sweeps, the error
budget by idealization, and the two-qubit cross-resonance design.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blackbox import BlackBoxDevice, DataSet, observed_terms, predict_outcome
from .device import (DeviceModel, dressed_basis, full_flags, intermediate_flags,
                     simple_flags, thermal_state)
from .dynamics import GateSet, compile_gateset
from .goals import (GoalValue, mean_gateset_infidelity, orbit_infidelity,
                    avg_gate_infidelity, computational_indices,
                    rescaled_log_likelihood, sigma_scale)
from .library import apply_alpha, apply_beta, cr_gate, gateset_alpha
from .optimizers import (OptimRun, ParameterMap, ParameterSpec, cma_es, hybrid,
                         lbfgs, with_fd_gradient)
from .readout import confusion_from_model
from .sequences import build_clifford_table, orbit_experiments, qpt_sequences

MODEL_FLAGS = {
    "simple": simple_flags,
    "intermediate": intermediate_flags,
    "full": full_flags,
}


class LoopError(RuntimeError):
    """Loop-level orchestration failure."""


def _subset(gateset: GateSet, names) -> GateSet:
    return GateSet(gates={n: gateset[n] for n in names},
                   frame_frequencies=gateset.frame_frequencies)


# ---------------------------------------------------------------------------
# C1: open-loop optimal control

def run_c1(model: DeviceModel, gateset: GateSet, pmap: ParameterMap,
           gate_names, *, compile_method: str = "gate-split", seed: int = 0,
           use_cma: bool = False, population: int = 8, cma_budget: int = 0,
           lbfgs_iterations: int = 150, gtol: float = 1e-9):
    """Minimize the mean average gate infidelity of the named gates over the
    pulse parameters in ``pmap``. Returns (updated gate set, run log)."""
    gate_names = list(gate_names)
    basis = dressed_basis(model)
    working = _subset(gateset, gate_names)

    def objective(x):
        values = pmap.from_unit(np.clip(x, 0.0, 1.0))
        gs = apply_alpha(working, values)
        propset = compile_gateset(model, gs, method=compile_method, basis=basis)
        return mean_gateset_infidelity(propset, gs).value

    if use_cma and cma_budget >= population:
        run = hybrid(objective, pmap, population=population, seed=seed,
                     cma_budget=cma_budget, lbfgs_iterations=lbfgs_iterations,
                     gtol=gtol)
    elif lbfgs_iterations <= 0:
        run = OptimRun(termination="no-iterations", seed=seed)
        run.best_value = objective(pmap.current_unit())
        run.best_params = pmap.values()
        run.record(0, run.best_value, run.best_value, run.best_params)
    else:
        run = lbfgs(with_fd_gradient(objective), pmap,
                    max_iterations=lbfgs_iterations, gtol=gtol)
    updated = apply_alpha(gateset, run.best_params)
    return updated, run


# ---------------------------------------------------------------------------
# C2: closed-loop calibration

@dataclass
class C2Result:
    gateset: GateSet
    dataset: DataSet
    run: OptimRun
    alpha: dict


def run_c2(device: BlackBoxDevice, gateset: GateSet, target_qubit: int,
           pmap: ParameterMap, *, n_sequences: int = 25, length: int = 100,
           shots: int = 1000, population: int = 25, max_generations: int = 150,
           sigma0: float = 0.1, target: float | None = None, seed: int = 0,
           dataset: DataSet | None = None) -> C2Result:
    """Calibrate the target qubit's pulse parameters on the device by
    minimizing the single-length RB infidelity. Every device evaluation is
    appended to the data set."""
    table = build_clifford_table()
    seq_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC2]).generate_state(1)[0])
    experiments = orbit_experiments(table, n_sequences, length, seq_rng,
                                    target_qubit, shots=shots)
    if dataset is None:
        dataset = DataSet(base_gateset=gateset,
                          metadata={"n_qubits": device.n_qubits,
                                    "levels": device.levels})
    eval_seeds = np.random.SeedSequence([seed, 0xD0])
    counter = {"n": len(dataset.alpha_ids())}

    def objective(x):
        values = pmap.from_unit(np.clip(x, 0.0, 1.0))
        gs = apply_alpha(gateset, values)
        call_seed = int(eval_seeds.spawn(1)[0].generate_state(1)[0])
        records = device.run(gs, experiments, seed=call_seed)
        alpha_id = counter["n"]
        counter["n"] += 1
        for spec, record in zip(experiments, records):
            dataset.append(alpha_id, values, spec, record)
        return orbit_infidelity(records).value

    objective.stochastic = True
    # evaluate the starting point first: it anchors the dataset trajectory
    start_value = objective(pmap.current_unit())
    run = cma_es(objective, pmap, population=population, sigma0=sigma0,
                 budget=population * max_generations, seed=seed, target=target)
    run.extra["start_value"] = start_value
    run.evaluations += 1
    if start_value < run.best_value:
        run.best_value, run.best_params = start_value, pmap.values()
    calibrated = apply_alpha(gateset, run.best_params)
    return C2Result(gateset=calibrated, dataset=dataset, run=run,
                    alpha=dict(run.best_params))


# ---------------------------------------------------------------------------
# C3: model learning

def select_learning_snapshots(dataset: DataSet, per_group: int = 8,
                              kinds=("orbit",)) -> list:
    """Default selection: per target qubit, ``per_group`` parameter sets
    evenly spaced along the calibration trajectory, first point included,
    best point forced in."""
    groups: dict = {}
    scores: dict = {}
    for e in dataset.entries:
        if e.spec.kind not in kinds:
            continue
        key = e.spec.target_qubits
        groups.setdefault(key, [])
        if e.alpha_id not in groups[key]:
            groups[key].append(e.alpha_id)
        scores.setdefault(e.alpha_id, []).append(1.0 - e.record.frequencies[0])
    chosen = []
    for key, ids in groups.items():
        n = len(ids)
        take = min(per_group, n)
        idx = sorted(set(np.round(np.linspace(0, n - 1, take)).astype(int).tolist()))
        means = [float(np.mean(scores[i])) for i in ids]
        best = int(np.argmin(means))
        if best not in idx:
            candidates = [i for i in idx if i != 0] or idx
            idx[idx.index(min(candidates, key=lambda i: abs(i - best)))] = best
        chosen.extend(ids[i] for i in sorted(set(idx)))
    return chosen


class Replayer:
    """Re-simulates a fixed selection of recorded experiments under candidate
    model parameters, producing the deterministic predicted means."""

    def __init__(self, dataset: DataSet, alpha_ids=None, *,
                 compile_method: str = "gate-split", map_fn=map):
        self.compile_method = compile_method
        self.map_fn = map_fn
        ids = list(alpha_ids) if alpha_ids is not None else dataset.alpha_ids()
        self.groups = []
        measured, shots = [], []
        for aid in ids:
            entries = dataset.entries_for(aid)
            if not entries:
                raise LoopError(f"no records for parameter set {aid}")
            gs = apply_alpha(dataset.base_gateset, entries[0].alpha)
            used = sorted({n for e in entries for n in e.spec.sequence})
            self.groups.append((_subset(gs, used), [e.spec for e in entries]))
            for e in entries:
                terms = observed_terms(e.spec, e.record.frequencies)
                measured.append(terms)
                shots.append(np.full(terms.size, e.record.shots, dtype=float))
        self.measured = np.concatenate(measured)
        self.shots = np.concatenate(shots)

    def predict(self, model: DeviceModel) -> np.ndarray:
        basis = dressed_basis(model)
        rho0 = thermal_state(model, basis)
        confusion = confusion_from_model(model)

        def one_group(group):
            gs, specs = group
            propset = compile_gateset(model, gs, method=self.compile_method,
                                      basis=basis)
            out = []
            for spec in specs:
                dist = predict_outcome(model, propset, spec,
                                       rho0=rho0, confusion=confusion)
                out.append(observed_terms(spec, dist))
            return np.concatenate(out)

        parts = list(self.map_fn(one_group, self.groups))
        return np.concatenate(parts)

    def score(self, model: DeviceModel) -> GoalValue:
        return rescaled_log_likelihood(self.measured, self.predict(model), self.shots)


@dataclass
class C3Result:
    model: DeviceModel
    run: OptimRun
    sigma_trace: list          # (iteration, f_LL, sigma equivalents)
    beta: dict


def run_c3(base_model: DeviceModel, flags: str, dataset: DataSet,
           pmap: ParameterMap, *, alpha_ids=None, seed: int = 0,
           population: int = 12, cma_budget: int = 600,
           stall_iterations: int = 10, lbfgs_iterations: int = 60,
           gtol: float = 1e-8, compile_method: str = "gate-split",
           map_fn=map) -> C3Result:
    """Learn model parameters from recorded data by minimizing the rescaled
    log-likelihood of the selected records under the candidate model class."""
    if flags not in MODEL_FLAGS:
        raise LoopError(f"unknown model class {flags!r}")
    flagged = MODEL_FLAGS[flags](base_model)
    if alpha_ids is None:
        alpha_ids = select_learning_snapshots(dataset)
    replayer = Replayer(dataset, alpha_ids, compile_method=compile_method,
                        map_fn=map_fn)

    def objective(x):
        beta = pmap.from_unit(np.clip(x, 0.0, 1.0))
        return replayer.score(apply_beta(flagged, beta)).value

    run = hybrid(objective, pmap, population=population, seed=seed,
                 cma_budget=cma_budget, stall_iterations=stall_iterations,
                 lbfgs_iterations=lbfgs_iterations, gtol=gtol)
    learned = apply_beta(flagged, run.best_params)
    trace = [(hp.iteration, hp.best_value, sigma_scale(hp.best_value))
             for hp in run.history]
    return C3Result(model=learned, run=run, sigma_trace=trace,
                    beta=dict(run.best_params))


@dataclass
class ValidationResult:
    goal: GoalValue
    sigma: float
    predicted: np.ndarray
    measured: np.ndarray


def validate_model(model: DeviceModel, dataset: DataSet, alpha_ids=None, *,
                   compile_method: str = "gate-split", map_fn=map) -> ValidationResult:
    """Score a learned model on records it was not trained on; emits the
    (predicted, measured) correlation pairs."""
    if alpha_ids is not None and len(list(alpha_ids)) == 0:
        raise LoopError("empty holdout")
    if not dataset.entries:
        raise LoopError("empty holdout")
    replayer = Replayer(dataset, alpha_ids, compile_method=compile_method,
                        map_fn=map_fn)
    predicted = replayer.predict(model)
    goal = rescaled_log_likelihood(replayer.measured, predicted, replayer.shots)
    return ValidationResult(goal=goal, sigma=sigma_scale(goal.value),
                            predicted=predicted, measured=replayer.measured)


def sensitivity_sweep(model: DeviceModel, name: str, values, replayer: Replayer):
    """One-dimensional scan of a model parameter, all others frozen."""
    curve = []
    for v in values:
        scanned = apply_beta(model, {name: float(v)})
        curve.append((float(v), replayer.score(scanned).value))
    return curve


# ---------------------------------------------------------------------------
# two-qubit gate design and the error budget

@dataclass
class CRDesign:
    gate: object
    gateset: GateSet
    infidelity_model: float
    infidelity_reference: float | None
    run: OptimRun


def _cr_pmap(amp0: float = 1.0) -> ParameterMap:
    pi = np.pi
    return ParameterMap([
        ParameterSpec("cr_AB.amp_control", amp0, 0.02, 3.0, "linear"),
        ParameterSpec("cr_AB.amp_target", 0.05, 0.0, 1.0, "linear"),
        ParameterSpec("cr_AB.phase_control", 0.0, -pi, pi, "linear"),
        ParameterSpec("cr_AB.phase_target", 0.0, -pi, pi, "linear"),
        ParameterSpec("cr_AB.freq_offset", 0.0, -30e6, 30e6, "linear"),
        ParameterSpec("cr_AB.z_control", 0.0, -pi, pi, "linear"),
        ParameterSpec("cr_AB.z_target", 0.0, -pi, pi, "linear"),
    ])


def design_cr_gate(model: DeviceModel, gateset: GateSet, *, control: int = 0,
                   target: int = 1, gate_time: float = 100e-9, seed: int = 0,
                   population: int = 8, cma_budget: int = 320,
                   lbfgs_iterations: int = 120, amp0: float = 1.0,
                   compile_method: str = "gate-split",
                   reference_model: DeviceModel | None = None) -> CRDesign:
    """Design the cross-resonance gate on the (learned) model: both qubits
    driven at the target qubit's dressed frequency with flattop envelopes;
    virtual-Z corrections are co-optimized. Optionally evaluates the same
    pulse on a reference model (the hidden device) for comparison."""
    basis = dressed_basis(model)
    # dressed 0->1 frequency of the target qubit (its label-1 excitation)
    unit = np.zeros(model.n_qubits, dtype=int)
    unit[target] = 1
    idx = int(np.ravel_multi_index(unit, (model.levels_per_qubit,) * model.n_qubits))
    lo = basis.energies[idx] / (2 * np.pi)
    template = cr_gate(control, target, amp0, 0.05, 0.0, 0.0, 0.0, lo,
                       gate_time=gate_time)
    working = gateset.with_gates(**{template.name: template})
    pmap = _cr_pmap(amp0)
    gs_updated, run = _optimize_cr(model, working, template.name, pmap, seed,
                                   population, cma_budget, lbfgs_iterations,
                                   compile_method)
    infid = _cr_infidelity(model, gs_updated, template.name, compile_method)
    infid_ref = None
    if reference_model is not None:
        infid_ref = _cr_infidelity(reference_model, gs_updated, template.name,
                                   compile_method)
    return CRDesign(gate=gs_updated[template.name], gateset=gs_updated,
                    infidelity_model=infid, infidelity_reference=infid_ref,
                    run=run)


def _optimize_cr(model, gateset, name, pmap, seed, population, cma_budget,
                 lbfgs_iterations, compile_method):
    basis = dressed_basis(model)
    working = _subset(gateset, [name])

    def objective(x):
        gs = apply_alpha(working, pmap.from_unit(np.clip(x, 0.0, 1.0)))
        propset = compile_gateset(model, gs, method=compile_method, basis=basis)
        return mean_gateset_infidelity(propset, gs).value

    run = hybrid(objective, pmap, population=population, seed=seed,
                 cma_budget=cma_budget, lbfgs_iterations=lbfgs_iterations)
    return apply_alpha(gateset, run.best_params), run


def _cr_infidelity(model, gateset, name, compile_method):
    gs = _subset(gateset, [name])
    propset = compile_gateset(model, gs, method=compile_method)
    return mean_gateset_infidelity(propset, gs).value


def error_budget(model: DeviceModel, gateset: GateSet, idealizations, *,
                 control: int = 0, target: int = 1, seed: int = 0,
                 compile_method: str = "gate-split", **design_opts):
    """Re-design the two-qubit gate under each idealization of the model and
    report the reachable infidelity. Rows: (label, infidelity); the baseline
    (no idealization) comes first."""
    rows = []
    base = design_cr_gate(model, gateset, control=control, target=target,
                          seed=seed, compile_method=compile_method, **design_opts)
    rows.append(("baseline", base.infidelity_model))
    for label, overrides in idealizations:
        modified = model.replace(**overrides)
        redesign = design_cr_gate(modified, gateset, control=control,
                                  target=target, seed=seed,
                                  compile_method=compile_method, **design_opts)
        rows.append((label, redesign.infidelity_model))
    return rows


def evaluate_gateset_on_model(model: DeviceModel, gateset: GateSet, gate_names,
                              compile_method: str = "gate-split") -> GoalValue:
    """Mean infidelity of existing pulses under another model (no redesign)."""
    gs = _subset(gateset, gate_names)
    propset = compile_gateset(model, gs, method=compile_method)
    return mean_gateset_infidelity(propset, gs)


def collect_qpt_data(device: BlackBoxDevice, gateset: GateSet, gate_name: str,
                     targets, dataset: DataSet, alpha: dict, *, shots: int = 1000,
                     seed: int = 0) -> list:
    """Run the tomography settings of a gate on the device and append them to
    the data set under the given pulse-parameter snapshot."""
    specs = qpt_sequences(gate_name, targets, shots=shots)
    records = device.run(gateset, specs, seed=seed)
    alpha_id = len(dataset.alpha_ids())
    for spec, record in zip(specs, records):
        dataset.append(alpha_id, alpha, spec, record)
    return specs


def collect_experiments(device: BlackBoxDevice, gateset: GateSet, specs,
                        dataset: DataSet, alpha: dict, *, seed: int = 0):
    """Run arbitrary experiments on the device and record them."""
    records = device.run(gateset, specs, seed=seed)
    alpha_id = len(dataset.alpha_ids())
    for spec, record in zip(specs, records):
        dataset.append(alpha_id, alpha, spec, record)
    return records

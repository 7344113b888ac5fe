"""Figures of merit: average gate infidelity, state transfer, the
single-length-RB calibration goal, and the rescaled log-likelihood model
match score with its statistical calibration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import PropagatorSet, GateSet, unitary_superop

PREDICTION_CLIP = 1e-6   # predicted means are clipped into [clip, 1-clip]


class GoalError(ValueError):
    """Invalid goal-function input."""


@dataclass(frozen=True)
class GoalValue:
    value: float
    breakdown: np.ndarray          # per-term contributions
    labels: tuple = ()
    gradient: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "breakdown", np.asarray(self.breakdown, dtype=float))


def computational_indices(occupations: np.ndarray, targets) -> np.ndarray:
    """Dressed-label indices spanning the computational subspace of the
    target qubits (all other qubits in their ground level), ordered as
    big-endian binary words over ``targets``."""
    targets = tuple(targets)
    dim, n_qubits = occupations.shape
    others = [q for q in range(n_qubits) if q not in targets]
    out = []
    for word in range(2 ** len(targets)):
        bits = [(word >> (len(targets) - 1 - k)) & 1 for k in range(len(targets))]
        match = np.ones(dim, dtype=bool)
        for q, b in zip(targets, bits):
            match &= occupations[:, q] == b
        for q in others:
            match &= occupations[:, q] == 0
        idx = np.nonzero(match)[0]
        if idx.size != 1:
            raise GoalError("computational subspace is not uniquely labeled")
        out.append(int(idx[0]))
    return np.asarray(out, dtype=int)


def _super_indices(comp: np.ndarray, dim: int) -> np.ndarray:
    # column-stacking: element (i, j) lives at vec index j*dim + i
    return np.asarray([c * dim + r for c in comp for r in comp], dtype=int)


def avg_gate_infidelity(ideal: np.ndarray, actual: np.ndarray,
                        comp: np.ndarray, open_system: bool) -> GoalValue:
    """1 - (chi_00 d + 1)/(d + 1) on the computational subspace given by the
    dressed-label indices ``comp``. Leakage out of the subspace lowers
    chi_00 and therefore counts as infidelity."""
    d = len(comp)
    if d not in (2, 4):
        raise GoalError("computational dimension must be 2 or 4")
    ideal = np.asarray(ideal, dtype=complex)
    if open_system:
        dim = int(round(np.sqrt(actual.shape[0])))
        idx = _super_indices(comp, dim)
        s_actual = actual[np.ix_(idx, idx)]
        s_ideal = unitary_superop(ideal)
        chi = float(np.real(np.trace(s_ideal.conj().T @ s_actual))) / d ** 2
    else:
        sub = actual[np.ix_(comp, comp)]
        chi = float(np.abs(np.trace(ideal.conj().T @ sub)) ** 2) / d ** 2
    f_av = (chi * d + 1.0) / (d + 1.0)
    return GoalValue(value=1.0 - f_av, breakdown=np.array([1.0 - f_av]))


def mean_gateset_infidelity(propset: PropagatorSet, gateset: GateSet,
                            names=None) -> GoalValue:
    """Arithmetic mean of per-gate average infidelities."""
    names = list(names) if names is not None else list(gateset.gates)
    if not names:
        raise GoalError("empty gate list")
    vals = []
    for name in names:
        gate = gateset[name]
        comp = computational_indices(propset.occupations, gate.targets)
        gv = avg_gate_infidelity(gate.ideal, propset[name].matrix, comp,
                                 propset.open_system)
        vals.append(gv.value)
    vals = np.asarray(vals)
    return GoalValue(value=float(vals.mean()), breakdown=vals, labels=tuple(names))


def state_transfer_infidelity(u: np.ndarray, psi_ideal: np.ndarray,
                              psi_0: np.ndarray) -> GoalValue:
    """1 - |<psi_ideal| U |psi_0>|."""
    overlap = abs(np.vdot(np.asarray(psi_ideal, dtype=complex),
                          np.asarray(u, dtype=complex) @ np.asarray(psi_0, dtype=complex)))
    return GoalValue(value=1.0 - float(overlap), breakdown=np.array([1.0 - overlap]))


def orbit_infidelity(records) -> GoalValue:
    """Mean non-survival over the recorded single-length RB sequences."""
    records = list(records)
    if not records:
        raise GoalError("no records")
    misses = np.asarray([1.0 - r.frequencies[0] for r in records])
    return GoalValue(value=float(misses.mean()), breakdown=misses)


def binomial_sigma(predicted: np.ndarray, shots) -> np.ndarray:
    """Standard deviation of the shot-averaged binomial with the given mean,
    clipped away from zero at the PREDICTION_CLIP floor."""
    shots = np.asarray(shots, dtype=float)
    if np.any(shots <= 0):
        raise GoalError("shots must be positive")
    p = np.clip(np.asarray(predicted, dtype=float), PREDICTION_CLIP, 1.0 - PREDICTION_CLIP)
    floor = np.sqrt(PREDICTION_CLIP * (1.0 - PREDICTION_CLIP) / shots)
    return np.maximum(np.sqrt(p * (1.0 - p) / shots), floor)


def rescaled_log_likelihood(measured, predicted, shots) -> GoalValue:
    """(1/2K) sum_k [((m_k - p_k)/sigma_k)^2 - 1], sigma_k binomial from the
    prediction and the recorded shot count. Zero expectation for an exact
    model; -1/2 when measured == predicted identically."""
    m = np.asarray(measured, dtype=float)
    p = np.clip(np.asarray(predicted, dtype=float), PREDICTION_CLIP, 1.0 - PREDICTION_CLIP)
    if m.size == 0 or m.shape != p.shape:
        raise GoalError("measured/predicted shape mismatch")
    sigma = binomial_sigma(p, shots)
    terms = ((m - p) / sigma) ** 2 - 1.0
    return GoalValue(value=float(terms.mean() / 2.0), breakdown=terms)


def log_likelihood_moments(mu, mu_model, sigma, sigma_model):
    """Expectation and variance of the rescaled log-likelihood when the data
    are Gaussian(mu, sigma) and the model predicts (mu_model, sigma_model).

    The expectation carries (sigma/sigma_model)^2 — the form verified by
    Monte-Carlo sampling — and reduces to the Mahalanobis mean for equal
    sigmas: E = (1/2K) sum ((mu-mu_model)/sigma_model)^2, Var = 1/(2K) + ...
    """
    mu = np.asarray(mu, dtype=float)
    mu_t = np.asarray(mu_model, dtype=float)
    sg = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape)
    sg_t = np.broadcast_to(np.asarray(sigma_model, dtype=float), mu.shape)
    if np.any(sg <= 0) or np.any(sg_t <= 0):
        raise GoalError("sigmas must be positive")
    k = mu.size
    delta = (mu - mu_t) / sg_t
    ratio = (sg / sg_t) ** 2
    expectation = float(np.sum(delta ** 2 + ratio - 1.0) / (2.0 * k))
    variance = float(np.sum(ratio * (delta ** 2 + 0.5 * ratio)) / k ** 2)
    return expectation, variance


def sigma_scale(value: float) -> float:
    """Equivalent number of standard deviations: sqrt(2*max(value, 0)).
    Negative scores (model over-predicts the noise) report 0."""
    return float(np.sqrt(2.0 * max(float(value), 0.0)))


def finite_difference_gradient(fn, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def gradient(goal_fn, parameter_map, rel_step: float = 1e-6) -> np.ndarray:
    """Gradient of a deterministic goal with respect to the map's unit-scaled
    parameters, at the map's current values."""
    if getattr(goal_fn, "stochastic", False):
        raise GoalError("gradient requested on a stochastic goal")
    x = parameter_map.current_unit()
    return finite_difference_gradient(goal_fn, x, rel_step=rel_step)

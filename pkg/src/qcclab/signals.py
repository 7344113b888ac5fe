"""Control signal chain: analytic envelope -> AWG staircase -> response
filter -> IQ mixer -> line transfer.

The chain order is fixed; :func:`synthesize` runs all five stages. Sample
times of the simulation-rate grid are slice midpoints, (i + 1/2)/sim_rate,
so a held sample represents the field over its slice.
"""
from __future__ import annotations

from dataclasses import dataclass, replace, asdict

import numpy as np

TWO_PI = 2.0 * np.pi


class SignalError(ValueError):
    """Invalid control configuration or signal operation."""


@dataclass(frozen=True)
class EnvelopeSpec:
    """Pulse envelope shape.

    kind = "gaussian-drag": offset-subtracted Gaussian of width sigma = t_g/4,
    unit peak, with a derivative quadrature scaled by -drag/drag_delta.
    kind = "flattop": plateau with offset-subtracted Gaussian edges of width
    ramp_time (edge sigma = ramp_time/2).
    kind = "piecewise-constant": ``values`` on a uniform grid over [0, t_g).
    """
    kind: str = "gaussian-drag"
    drag_delta: float = 0.0       # Hz; anharmonicity used by the DRAG quadrature
    ramp_time: float = 5e-9       # s; flattop edge duration
    values: tuple = ()            # piecewise-constant segment values (volts)

    def __post_init__(self):
        if self.kind not in ("gaussian-drag", "flattop", "piecewise-constant"):
            raise SignalError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "gaussian-drag" and self.drag_delta <= 0:
            raise SignalError("gaussian-drag requires a positive drag_delta")
        if self.kind == "flattop" and self.ramp_time <= 0:
            raise SignalError("flattop requires a positive ramp_time")
        if self.kind == "piecewise-constant" and len(self.values) == 0:
            raise SignalError("piecewise-constant requires segment values")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class ControlConfig:
    envelope: EnvelopeSpec
    amplitude: float              # V
    gate_time: float              # s
    lo_frequency: float           # Hz
    drag_coefficient: float = 0.0
    freq_offset: float = 0.0      # Hz
    phase: float = 0.0            # rad, phi_xy
    awg_rate: float = 2e9         # S/s
    sim_rate: float = 20e9        # S/s

    def __post_init__(self):
        if self.gate_time <= 0:
            raise SignalError("gate_time must be positive")
        if not np.isfinite(self.amplitude):
            raise SignalError("amplitude must be finite")
        if self.awg_rate <= 0 or self.sim_rate < self.awg_rate:
            raise SignalError("need sim_rate >= awg_rate > 0")
        ratio = self.sim_rate / self.awg_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise SignalError("sim_rate must be an integer multiple of awg_rate")

    @property
    def oversampling(self) -> int:
        return int(round(self.sim_rate / self.awg_rate))

    def replace(self, **kw) -> "ControlConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class SampledSignal:
    times: np.ndarray
    values: np.ndarray    # complex I + iQ, or real after mixing

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if t.size != v.size:
            raise SignalError("times and values must have equal length")
        if t.size >= 2:
            dt = np.diff(t)
            if np.any(dt <= 0) or abs(dt.max() - dt.min()) > 1e-9 * dt.mean():
                raise SignalError("times must be strictly increasing and uniform")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def _gauss_parts(t, t_g):
    sigma = t_g / 4.0
    core = np.exp(-((t - t_g / 2.0) ** 2) / (2.0 * sigma ** 2))
    floor = np.exp(-(t_g ** 2) / (8.0 * sigma ** 2))
    shape = (core - floor) / (1.0 - floor)
    dshape = (-(t - t_g / 2.0) / sigma ** 2) * core / (1.0 - floor)
    return shape, dshape


def evaluate_envelope(config: ControlConfig, t) -> np.ndarray:
    """Complex envelope I(t) + iQ(t) at time(s) t in [0, gate_time].

    The pulse vanishes identically at both endpoints; phase and frequency
    offset are applied later by :func:`mix`.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t < -1e-15) or np.any(t > config.gate_time + 1e-15):
        raise SignalError("envelope evaluated outside [0, gate_time]")
    env = config.envelope
    t_g = config.gate_time
    if env.kind == "gaussian-drag":
        shape, dshape = _gauss_parts(t, t_g)
        i_part = config.amplitude * shape
        q_part = -(config.drag_coefficient / (TWO_PI * env.drag_delta)) \
            * config.amplitude * dshape
        out = i_part + 1j * q_part
    elif env.kind == "flattop":
        tr = min(env.ramp_time, t_g / 2.0)
        sigma = tr / 2.0
        rise = np.exp(-((t - tr) ** 2) / (2.0 * sigma ** 2))
        fall = np.exp(-((t - (t_g - tr)) ** 2) / (2.0 * sigma ** 2))
        shape = np.where(t < tr, rise, np.where(t > t_g - tr, fall, 1.0))
        floor = np.exp(-(tr ** 2) / (2.0 * sigma ** 2))
        out = config.amplitude * (shape - floor) / (1.0 - floor) + 0.0j
    else:
        vals = np.asarray(env.values, dtype=complex)
        seg = np.minimum((t / t_g * len(vals)).astype(int), len(vals) - 1)
        out = config.amplitude * vals[seg]
    edge = (t <= 0.0) | (t >= t_g)
    if env.kind != "piecewise-constant":
        out = np.where(edge, 0.0, out)
    return out[0] if scalar else out


def sample_awg(config: ControlConfig) -> SampledSignal:
    """Envelope sampled on the AWG grid i/awg_rate over [0, gate_time)."""
    n = int(np.floor(config.gate_time * config.awg_rate))
    if n < 2:
        raise SignalError("gate_time too short for the AWG rate (need >= 2 samples)")
    t = np.arange(n) / config.awg_rate
    return SampledSignal(times=t, values=evaluate_envelope(config, t))


def _zero_order_hold(signal: SampledSignal, sim_rate: float) -> SampledSignal:
    """Interpolate a staircase to the (midpoint) simulation grid."""
    m = int(round(sim_rate * (signal.times[1] - signal.times[0])))
    n = signal.times.size * m
    t = (np.arange(n) + 0.5) / sim_rate + signal.times[0]
    return SampledSignal(times=t, values=np.repeat(signal.values, m))


def apply_response(signal: SampledSignal, rise_time: float, sim_rate: float) -> SampledSignal:
    """Zero-order-hold to sim_rate, then convolve with a unit-area Gaussian
    kernel of sigma = rise_time/4, truncated at +-4 sigma."""
    if rise_time < 0:
        raise SignalError("rise_time must be non-negative")
    held = _zero_order_hold(signal, sim_rate)
    if rise_time == 0.0:
        return held
    sigma = rise_time / 4.0
    half = int(np.ceil(4.0 * sigma * sim_rate))
    if half == 0:
        return held
    tk = np.arange(-half, half + 1) / sim_rate
    kernel = np.exp(-tk ** 2 / (2.0 * sigma ** 2))
    kernel /= kernel.sum()
    filtered = np.convolve(held.values, kernel, mode="same")
    return SampledSignal(times=held.times, values=filtered)


def mix(signal: SampledSignal, config: ControlConfig) -> SampledSignal:
    """Combine the complex envelope with the local oscillator:
    u(t) = Re[(I + iQ)(t) e^{i(phi_xy + w_off t)} e^{i w_lo t}].
    """
    t = signal.times
    rot = np.exp(1j * (config.phase + TWO_PI * config.freq_offset * t))
    carrier = np.exp(1j * TWO_PI * config.lo_frequency * t)
    u = np.real(signal.values * rot * carrier)
    return SampledSignal(times=t, values=u)


def apply_transfer(signal: SampledSignal, transfer_scale: float) -> SampledSignal:
    """Line transfer: c(t) = 2*pi*phi0*u(t), volts to angular field amplitude."""
    if np.iscomplexobj(signal.values):
        raise SignalError("transfer expects a real (mixed) signal")
    return SampledSignal(times=signal.times, values=TWO_PI * transfer_scale * signal.values)


def synthesize(config: ControlConfig, rise_time: float, transfer_scale: float) -> SampledSignal:
    """Full chain: envelope -> AWG -> response -> mixer -> transfer."""
    if not np.all(np.isfinite([config.amplitude, config.freq_offset, config.phase])):
        raise SignalError("non-finite control parameters")
    staged = sample_awg(config)
    staged = apply_response(staged, rise_time, config.sim_rate)
    staged = mix(staged, config)
    return apply_transfer(staged, transfer_scale)


# the canonical stage order, used by the structural pipeline test
CHAIN_STAGES = (sample_awg, apply_response, mix, apply_transfer)


def signal_to_csv_rows(signal: SampledSignal):
    """Rows (t, I, Q) for CSV export."""
    v = np.asarray(signal.values)
    if np.iscomplexobj(v):
        return [(float(t), float(x.real), float(x.imag)) for t, x in zip(signal.times, v)]
    return [(float(t), float(x), 0.0) for t, x in zip(signal.times, v)]

"""Synthetic narrowband signal simulation.

One simulation is a length-L complex time series

    s(t) = A(t) * exp(i * phase(t)) + n(t)

with a square-wave amplitude envelope A(t), an instantaneous frequency
trajectory combining a linear drift, a drift-rate derivative, and a
bounded random walk, and i.i.d. Gaussian noise on both components.
Amplitudes are expressed in units of the noise width ``sigma = 13.0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from sigspec.errors import InvalidParameterError
from sigspec.rng import SYNTH_STREAM, stream

SIGNAL_LENGTH = 196_608
NOISE_SIGMA = 13.0


class SignalClass(enum.IntEnum):
    """The seven signal classes, coded 0-6 in alphabetical order."""

    brightpixel = 0
    narrowband = 1
    narrowbanddrd = 2
    noise = 3
    squarepulsednarrowband = 4
    squiggle = 5
    squigglesquarepulsednarrowband = 6

    @classmethod
    def from_name(cls, name: str) -> "SignalClass":
        try:
            return cls[name]
        except KeyError:
            raise InvalidParameterError(f"unknown signal class: {name!r}") from None


CLASS_NAMES = tuple(c.name for c in SignalClass)

# Per-class sampling ranges, amplitudes as A0 / 13.0.
AMP_RANGE = {
    SignalClass.brightpixel: (0.05, 0.75),
    SignalClass.narrowband: (0.05, 0.4),
    SignalClass.narrowbanddrd: (0.05, 0.4),
    SignalClass.noise: (0.0, 0.0),
    SignalClass.squarepulsednarrowband: (0.05, 0.4),
    SignalClass.squiggle: (0.1, 0.5),
    SignalClass.squigglesquarepulsednarrowband: (0.1, 0.5),
}
OMEGA0_MAX = 2.0 * math.pi / 3.0
OMEGA1_MAX = 7.324e-6
OMEGA1DOT_RANGE = (1e-8, 8e-8)  # magnitude; sign drawn separately
SQUIGGLE_RANGE = (0.0001, 0.005)
PERIOD_FRACTION_RANGE = (0.15625, 0.46875)  # T / L for square-pulsed classes
DUTY_RANGE = {
    SignalClass.brightpixel: (0.0078125, 0.03125),
    SignalClass.squarepulsednarrowband: (0.05, 0.9),
    SignalClass.squigglesquarepulsednarrowband: (0.15, 0.8),
}
PHI_W_FRACTION_RANGE = (0.07, 0.93)  # phi_w / L

_SQUIGGLE_CLASSES = (SignalClass.squiggle, SignalClass.squigglesquarepulsednarrowband)
_PULSED_CLASSES = (
    SignalClass.squarepulsednarrowband,
    SignalClass.squigglesquarepulsednarrowband,
)


@dataclass(frozen=True)
class SimParams:
    """Complete parameter set of one simulation.

    ``a0`` is the carrier amplitude, ``omega0``/``omega1``/``omega1dot``
    the starting frequency (rad/sample), drift rate, and its derivative,
    ``b`` the random-walk (squiggle) amplitude, ``t``/``d``/``phi_w`` the
    square-wave period (samples), duty cycle, and start phase (samples),
    and ``phi`` the carrier phase offset.
    """

    signal_class: SignalClass
    a0: float
    omega0: float
    omega1: float
    omega1dot: float
    b: float
    t: float
    d: float
    phi_w: float
    phi: float
    seed: int
    length: int = SIGNAL_LENGTH
    sigma: float = NOISE_SIGMA

    def to_json(self) -> dict:
        return {
            "class": self.signal_class.name,
            "A0": self.a0,
            "omega0": self.omega0,
            "omega1": self.omega1,
            "omega1dot": self.omega1dot,
            "B": self.b,
            "T": self.t,
            "D": self.d,
            "phi_w": self.phi_w,
            "phi": self.phi,
            "seed": self.seed,
            "L": self.length,
            "sigma": self.sigma,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimParams":
        return cls(
            signal_class=SignalClass.from_name(obj["class"]),
            a0=obj["A0"],
            omega0=obj["omega0"],
            omega1=obj["omega1"],
            omega1dot=obj["omega1dot"],
            b=obj["B"],
            t=obj["T"],
            d=obj["D"],
            phi_w=obj["phi_w"],
            phi=obj["phi"],
            seed=obj["seed"],
            length=obj["L"],
            sigma=obj["sigma"],
        )

    def with_amplitude(self, a0: float) -> "SimParams":
        return replace(self, a0=a0)


@dataclass
class FloatIq:
    """Pre-quantization complex series, double precision."""

    re: np.ndarray
    im: np.ndarray

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def __len__(self) -> int:
        return len(self.re)


@dataclass
class IqSeries:
    """Quantized complex series as paired signed 8-bit components."""

    re: np.ndarray
    im: np.ndarray

    def to_complex(self) -> np.ndarray:
        return self.re.astype(np.float64) + 1j * self.im.astype(np.float64)

    def to_bytes(self) -> bytes:
        out = np.empty(2 * len(self.re), dtype=np.int8)
        out[0::2] = self.re
        out[1::2] = self.im
        return out.tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "IqSeries":
        flat = np.frombuffer(raw, dtype=np.int8)
        return cls(re=flat[0::2].copy(), im=flat[1::2].copy())

    def __len__(self) -> int:
        return len(self.re)


def sample_params(
    signal_class: SignalClass,
    rng: np.random.Generator,
    *,
    seed: int = 0,
    amp_range: tuple[float, float] | None = None,
) -> SimParams:
    """Draw one parameter set for the given class.

    Free parameters are uniform within their tabulated ranges; fixed ones
    are set per class (zero drift derivative and squiggle amplitude,
    full-length always-on square wave, unless the class modulates them).
    The draw order is fixed: omega0, omega1, class-conditional extras
    (omega1dot sign+magnitude, B, T, D), phi_w, phi, amplitude.

    ``amp_range`` overrides the tabulated A0/13.0 range (ignored for the
    noise class, whose amplitude is always zero).
    """
    length = SIGNAL_LENGTH
    omega0 = rng.uniform(-OMEGA0_MAX, OMEGA0_MAX)
    omega1 = rng.uniform(-OMEGA1_MAX, OMEGA1_MAX)

    omega1dot = 0.0
    if signal_class == SignalClass.narrowbanddrd:
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        omega1dot = sign * rng.uniform(*OMEGA1DOT_RANGE)

    b = rng.uniform(*SQUIGGLE_RANGE) if signal_class in _SQUIGGLE_CLASSES else 0.0

    if signal_class in _PULSED_CLASSES:
        t = length * rng.uniform(*PERIOD_FRACTION_RANGE)
    else:
        t = float(length)
    d = rng.uniform(*DUTY_RANGE[signal_class]) if signal_class in DUTY_RANGE else 1.0

    phi_w = length * rng.uniform(*PHI_W_FRACTION_RANGE)
    phi = rng.uniform(0.0, 2.0 * math.pi)

    if signal_class == SignalClass.noise:
        a0 = 0.0
    else:
        lo, hi = amp_range if amp_range is not None else AMP_RANGE[signal_class]
        a0 = NOISE_SIGMA * rng.uniform(lo, hi)

    return SimParams(
        signal_class=signal_class,
        a0=a0,
        omega0=omega0,
        omega1=omega1,
        omega1dot=omega1dot,
        b=b,
        t=t,
        d=d,
        phi_w=phi_w,
        phi=phi,
        seed=seed,
        length=length,
    )


def square_wave(t, period: float, duty: float, phi_w: float):
    """Square-wave modulation: 1 where ((t - phi_w) mod period) < duty*period.

    Accepts a scalar or array sample index and returns 0/1 of the same
    shape as float64.
    """
    if period <= 0:
        raise InvalidParameterError(f"square-wave period must be positive, got {period}")
    if not 0.0 <= duty <= 1.0:
        raise InvalidParameterError(f"duty cycle must be in [0, 1], got {duty}")
    phase = np.mod(np.asarray(t, dtype=np.float64) - phi_w, period)
    return (phase < duty * period).astype(np.float64)


def _polynomial_trajectory(params: SimParams) -> np.ndarray:
    t = np.arange(params.length, dtype=np.float64)
    return params.omega0 + (params.omega1 + params.omega1dot * t) * t


def frequency_trajectory(params: SimParams, rng: np.random.Generator) -> np.ndarray:
    """Instantaneous frequency w(t) = w0 + (w1 + w1dot*t)*t + B*walk(t).

    The walk is the inclusive cumulative sum of i.i.d. uniform [-1, 1]
    steps, one per sample; no steps are drawn when B = 0.
    """
    omega = _polynomial_trajectory(params)
    if params.b != 0.0:
        omega = omega + params.b * np.cumsum(rng.uniform(-1.0, 1.0, params.length))
    return omega


def _amplitude_with_alias_guard(params: SimParams, omega: np.ndarray) -> np.ndarray:
    """A(t) per the square-wave envelope, latched to 0 once w(t) leaves [-pi, pi].

    The latch is permanent: from the first out-of-band sample onward the
    signal term is exactly zero (noise is unaffected).
    """
    t = np.arange(params.length, dtype=np.float64)
    amp = params.a0 * square_wave(t, params.t, params.d, params.phi_w)
    out_of_band = np.flatnonzero((omega > math.pi) | (omega < -math.pi))
    if out_of_band.size:
        amp[out_of_band[0]:] = 0.0
    return amp


def synthesize(params: SimParams, phase_mode: str = "accumulate") -> FloatIq:
    """Render one simulation to a pre-quantization complex series.

    ``accumulate`` (default) treats w(t) as instantaneous frequency and
    integrates it: phase(t) = phi + sum_{tau<=t} w(tau).  ``literal``
    multiplies instead: phase(t) = w(t)*t + phi, which doubles the
    apparent drift slope; it is kept for comparison.

    The synthesis stream is derived from ``params.seed``; walk steps are
    drawn first (when B != 0), then noise (when sigma > 0), so identical
    params give bit-identical output.
    """
    if phase_mode not in ("accumulate", "literal"):
        raise InvalidParameterError(f"unknown phase_mode: {phase_mode!r}")
    rng = stream(params.seed, SYNTH_STREAM)
    length = params.length

    walk = None
    if params.b != 0.0:
        walk = np.cumsum(rng.uniform(-1.0, 1.0, length))

    if phase_mode == "literal":
        omega = _polynomial_trajectory(params)
        if walk is not None:
            omega = omega + params.b * walk
        phase = omega * np.arange(length, dtype=np.float64) + params.phi
    else:
        # Exact partial sums of the polynomial part keep the accumulated
        # phase accurate to ~1e-10 rad over the full series; only the
        # random-walk term needs a floating cumulative sum.
        ti = np.arange(length, dtype=np.int64)
        sum_tau = (ti * (ti + 1)) // 2
        sum_tau2 = (ti * (ti + 1) * (2 * ti + 1)) // 6
        phase = (
            params.phi
            + params.omega0 * (ti + 1).astype(np.float64)
            + params.omega1 * sum_tau.astype(np.float64)
            + params.omega1dot * sum_tau2.astype(np.float64)
        )
        omega = _polynomial_trajectory(params)
        if walk is not None:
            omega = omega + params.b * walk
            phase = phase + params.b * np.cumsum(walk)

    amp = _amplitude_with_alias_guard(params, omega)
    signal = amp * np.exp(1j * phase)

    re = np.ascontiguousarray(signal.real)
    im = np.ascontiguousarray(signal.imag)
    if params.sigma > 0.0:
        re += rng.normal(0.0, params.sigma, length)
        im += rng.normal(0.0, params.sigma, length)
    return FloatIq(re=re, im=im)


def quantize(x: FloatIq) -> IqSeries:
    """Round half away from zero, then clamp to the signed 8-bit range."""

    def q(v: np.ndarray) -> np.ndarray:
        rounded = np.copysign(np.floor(np.abs(v) + 0.5), v)
        return np.clip(rounded, -128, 127).astype(np.int8)

    return IqSeries(re=q(x.re), im=q(x.im))


def simulate(params: SimParams, phase_mode: str = "accumulate") -> IqSeries:
    """Synthesize and quantize in one step."""
    return quantize(synthesize(params, phase_mode))

"""Stochastic photon-stream simulation through a modeled HBT detection chain.

The emitter is a continuous-time Markov chain over the two- or three-level
scheme. CW records are produced by sampling the intervals between *detected*
emissions directly: after every photon the emitter sits in the ground state,
so inter-emission intervals are i.i.d. phase-type sums (geometric number of
pump/decay cycles plus shelving detours), and Bernoulli detection compounds
the geometric count. This is distributionally identical to simulating every
transition with competing exponential clocks and then thinning, but costs
O(1) array draws per detected photon. The per-transition engine is kept as
:func:`sample_trajectory` and the two are equivalence-tested.

Detected photons then pass the detection chain: 50:50 splitting, Gaussian
timing jitter, per-channel dead-time pruning, and independent Poisson dark
and background streams.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .kinetics import excited_steady_fraction
from .models import RateSet
from .units import FWHM_TO_SIGMA, NS_PER_S, ps_to_ns, s_to_ns

DEFAULT_EVENT_CAP = int(2e8)
TICKS_PER_NS = 1000  # on-disk integer resolution (1 ps)
_CHUNK = 4_000_000


class SizingError(RuntimeError):
    """Requested run exceeds the event cap; raise the cap explicitly to proceed."""


class ExcitationMode(enum.Enum):
    CW = "cw"
    PULSED = "pulsed"


@dataclass(frozen=True)
class DetectionChain:
    """HBT detection hardware model.

    split_ratio is the probability a photon reaches channel A;
    jitter_fwhm is the per-detector Gaussian timing jitter FWHM (ps);
    dead_time is the per-detector blind interval (ns); dark_rate and
    background_rate are counts/s (darks are per detector and bypass the
    splitter, background photons are split and jittered like signal);
    eta_total is the end-to-end probability that an emitted photon is
    detected at all.
    """

    split_ratio: float = 0.5
    jitter_fwhm: float = 0.0
    dead_time: float = 50.0
    dark_rate: float = 150.0
    background_rate: float = 0.0
    eta_total: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.jitter_fwhm < 0.0 or self.dead_time < 0.0:
            raise ValueError("jitter_fwhm and dead_time must be nonnegative")
        if self.dark_rate < 0.0 or self.background_rate < 0.0:
            raise ValueError("dark_rate and background_rate must be nonnegative")
        if not 0.0 <= self.eta_total <= 1.0:
            raise ValueError("eta_total must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "split_ratio": self.split_ratio,
            "jitter_fwhm": self.jitter_fwhm,
            "dead_time": self.dead_time,
            "dark_rate": self.dark_rate,
            "background_rate": self.background_rate,
            "eta_total": self.eta_total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionChain":
        return cls(**d)


@dataclass(frozen=True)
class ExcitationProgram:
    """Excitation settings: CW power (uW) or pulse train parameters."""

    mode: ExcitationMode
    duration: float  # seconds
    power: float | None = None  # uW, CW only
    rep_rate: float | None = None  # MHz, pulsed only
    pulse_width: float = 200.0  # ps, folded into the effective IRF
    pulse_energy_scale: float | None = None  # dimensionless pump strength

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.mode is ExcitationMode.CW:
            if self.power is None or self.power < 0.0:
                raise ValueError("CW program requires power >= 0 (uW)")
        else:
            if self.rep_rate is None or self.rep_rate <= 0.0:
                raise ValueError("pulsed program requires rep_rate > 0 (MHz)")
            if self.pulse_energy_scale is None or self.pulse_energy_scale < 0.0:
                raise ValueError("pulsed program requires pulse_energy_scale >= 0")
            if self.pulse_width < 0.0:
                raise ValueError("pulse_width must be nonnegative")

    @property
    def period_ns(self) -> float:
        """Pulse separation in ns (pulsed mode)."""
        if self.rep_rate is None:
            raise ValueError("period undefined without a repetition rate")
        return 1e3 / self.rep_rate

    @property
    def p_excite(self) -> float:
        """Per-pulse promotion probability 1 - exp(-pulse_energy_scale)."""
        if self.pulse_energy_scale is None:
            raise ValueError("p_excite undefined without pulse_energy_scale")
        return -np.expm1(-self.pulse_energy_scale)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "duration": self.duration,
            "power": self.power,
            "rep_rate": self.rep_rate,
            "pulse_width": self.pulse_width,
            "pulse_energy_scale": self.pulse_energy_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExcitationProgram":
        d = dict(d)
        d["mode"] = ExcitationMode(d["mode"])
        return cls(**d)


@dataclass(frozen=True)
class RecordMeta:
    """Provenance of a timestamp record."""

    chain: DetectionChain
    duration: float  # seconds
    seed: int | None = None
    rates: RateSet | None = None
    program: ExcitationProgram | None = None
    n_emitted: int = 0

    def as_dict(self) -> dict:
        return {
            "chain": self.chain.as_dict(),
            "duration": self.duration,
            "seed": self.seed,
            "rates": self.rates.as_dict() if self.rates else None,
            "program": self.program.as_dict() if self.program else None,
            "n_emitted": self.n_emitted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecordMeta":
        return cls(
            chain=DetectionChain.from_dict(d["chain"]),
            duration=d["duration"],
            seed=d.get("seed"),
            rates=RateSet.from_dict(d["rates"]) if d.get("rates") else None,
            program=ExcitationProgram.from_dict(d["program"]) if d.get("program") else None,
            n_emitted=d.get("n_emitted", 0),
        )


@dataclass(frozen=True)
class TimestampRecord:
    """Per-channel detection times (ns, sorted) plus provenance."""

    channel_a: np.ndarray
    channel_b: np.ndarray
    meta: RecordMeta

    def __post_init__(self):
        for name in ("channel_a", "channel_b"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if arr.size > 1 and np.any(np.diff(arr) < 0.0):
                raise ValueError(f"{name} must be sorted")
            object.__setattr__(self, name, arr)

    @property
    def duration_ns(self) -> float:
        return s_to_ns(self.meta.duration)

    def rates_per_channel(self) -> tuple[float, float]:
        """Mean detected rates (counts/s) on channels A and B."""
        return (
            self.channel_a.size / self.meta.duration,
            self.channel_b.size / self.meta.duration,
        )

    # -- serialization: columnar int64 ticks + JSON sidecar ---------------

    def save(self, path) -> Path:
        """Write ``<path>.bin`` (little-endian int64 ps ticks, channel A
        then channel B, preceded by the two counts) and ``<path>.json``."""
        base = Path(path)
        if base.suffix == ".bin":
            base = base.with_suffix("")
        a = np.round(self.channel_a * TICKS_PER_NS).astype("<i8")
        b = np.round(self.channel_b * TICKS_PER_NS).astype("<i8")
        header = np.array([a.size, b.size], dtype="<i8")
        with open(base.with_suffix(".bin"), "wb") as fh:
            fh.write(header.tobytes())
            fh.write(a.tobytes())
            fh.write(b.tobytes())
        sidecar = {"ticks_per_ns": TICKS_PER_NS, "meta": self.meta.as_dict()}
        base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
        return base.with_suffix(".bin")

    @classmethod
    def load(cls, path) -> "TimestampRecord":
        base = Path(path)
        if base.suffix == ".bin":
            base = base.with_suffix("")
        raw = np.fromfile(base.with_suffix(".bin"), dtype="<i8")
        if raw.size < 2:
            raise ValueError(f"truncated record file at byte {raw.size * 8}")
        n_a, n_b = int(raw[0]), int(raw[1])
        if raw.size != 2 + n_a + n_b:
            raise ValueError(
                f"record file length mismatch at byte {raw.size * 8}: "
                f"expected {2 + n_a + n_b} int64 words"
            )
        sidecar = json.loads(base.with_suffix(".json").read_text())
        ticks = sidecar["ticks_per_ns"]
        return cls(
            channel_a=raw[2 : 2 + n_a].astype(float) / ticks,
            channel_b=raw[2 + n_a :].astype(float) / ticks,
            meta=RecordMeta.from_dict(sidecar["meta"]),
        )

    def to_csv(self, path) -> Path:
        """Small-run alternative: channel,time_ns rows (full float precision)."""
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("channel,time_ns\n")
            for label, arr in (("a", self.channel_a), ("b", self.channel_b)):
                for t in arr:
                    fh.write(f"{label},{t!r}\n")
        return path


# -- stochastic kernels ----------------------------------------------------


@njit(cache=True)
def _prune_dead_time_numba(times, dead):  # pragma: no cover - jit
    keep = np.zeros(times.size, np.bool_)
    last = -np.inf
    for i in range(times.size):
        if times[i] - last >= dead:
            keep[i] = True
            last = times[i]
    return keep


def prune_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    """Earliest-survivor dead-time filter on a sorted time array."""
    if dead_time <= 0.0 or times.size == 0:
        return times
    keep = _prune_dead_time_numba(np.ascontiguousarray(times, dtype=float), dead_time)
    return times[keep]


@njit(cache=True)
def _pulsed_sweep_numba(period, n_pulses, excited, shelved, dwell2, dwell3):  # pragma: no cover - jit
    out = np.empty(n_pulses)
    m = 0
    t_free = -1.0
    for k in range(n_pulses):
        t_pulse = k * period
        if t_pulse < t_free or not excited[k]:
            continue
        if shelved[k]:
            t_free = t_pulse + dwell2[k] + dwell3[k]
        else:
            te = t_pulse + dwell2[k]
            out[m] = te
            m += 1
            t_free = te
    return out[:m]


def _poisson_times(rate_cps: float, duration_ns: float, rng) -> np.ndarray:
    n = rng.poisson(rate_cps * duration_ns / NS_PER_S)
    return np.sort(rng.random(n) * duration_ns)


def _detected_emission_times(
    rates: RateSet, eta: float, duration_ns: float, rng
) -> tuple[np.ndarray, int]:
    """Times of detected emissions in [0, duration_ns) and the number of
    emission events consumed to produce them.

    Per detected photon: G ~ Geometric(eta) emissions are consumed, those
    emissions contain S ~ NegBinomial(G, r21/(r21+r23)) shelving detours,
    so the waiting time is Gamma(G+S)/r12 + Gamma(G+S)/(r21+r23)
    + Gamma(S)/r31.
    """
    if rates.r12 == 0.0 or eta == 0.0:
        return np.empty(0), 0
    exit2 = rates.r21 + rates.r23
    q = rates.r21 / exit2
    pieces = []
    t = 0.0
    n_emitted = 0
    det_rate = eta * excited_steady_fraction(rates) * rates.r21  # per ns
    while t < duration_ns:
        expect = (duration_ns - t) * det_rate
        m = min(_CHUNK, int(1.2 * expect) + 16)
        g = rng.geometric(eta, m).astype(np.int64)
        if rates.r23 > 0.0:
            s = rng.negative_binomial(g, q).astype(np.int64)
        else:
            s = np.zeros(m, dtype=np.int64)
        cycles = (g + s).astype(float)
        intervals = rng.standard_gamma(cycles) / rates.r12
        intervals += rng.standard_gamma(cycles) / exit2
        if rates.r23 > 0.0:
            intervals += rng.standard_gamma(s.astype(float)) / rates.r31
        times = t + np.cumsum(intervals)
        inside = times < duration_ns
        n_in = int(np.count_nonzero(inside))
        pieces.append(times[:n_in])
        n_emitted += int(g[:n_in].sum())
        if n_in < m:
            break
        t = times[-1]
    if not pieces:
        return np.empty(0), 0
    return np.concatenate(pieces), n_emitted


def sample_trajectory(
    rates: RateSet, n_transitions: int, seed
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-transition competing-clock simulation (reference engine).

    Returns (states, dwells, emission_times): the state occupied before
    each transition (1, 2 or 3), the time spent there, and the times of
    all 2 -> 1 transitions. Starts in the ground state at t = 0.
    """
    if rates.r12 <= 0.0:
        raise ValueError("trajectory requires r12 > 0")
    rng = np.random.default_rng(seed)
    exit2 = rates.r21 + rates.r23
    q = rates.r21 / exit2
    states = np.empty(n_transitions, dtype=np.int8)
    dwells = np.empty(n_transitions)
    emissions = []
    state = 1
    t = 0.0
    for i in range(n_transitions):
        states[i] = state
        if state == 1:
            dt = rng.exponential(1.0 / rates.r12)
            state = 2
        elif state == 2:
            dt = rng.exponential(1.0 / exit2)
            if rng.random() < q:
                state = 1
                emissions.append(t + dt)
            else:
                state = 3
        else:
            dt = rng.exponential(1.0 / rates.r31)
            state = 1
        dwells[i] = dt
        t += dt
    return states, dwells, np.array(emissions)


# -- detection chain -------------------------------------------------------


def _detection_chain(
    photons: np.ndarray,
    chain: DetectionChain,
    duration_ns: float,
    seed_seq: np.random.SeedSequence,
    thin: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Splitter, jitter, darks/background and dead time; returns (a, b)."""
    thin_ss, split_ss, jit_ss, bg_ss, dark_a_ss, dark_b_ss = seed_seq.spawn(6)
    if thin and chain.eta_total < 1.0:
        rng = np.random.default_rng(thin_ss)
        photons = photons[rng.random(photons.size) < chain.eta_total]
    background = _poisson_times(
        chain.background_rate, duration_ns, np.random.default_rng(bg_ss)
    )
    stream = np.concatenate([photons, background])
    to_a = np.random.default_rng(split_ss).random(stream.size) < chain.split_ratio
    if chain.jitter_fwhm > 0.0:
        sigma = ps_to_ns(chain.jitter_fwhm) * FWHM_TO_SIGMA
        stream = stream + np.random.default_rng(jit_ss).normal(0.0, sigma, stream.size)
    channels = []
    for mask, dark_ss in ((to_a, dark_a_ss), (~to_a, dark_b_ss)):
        darks = _poisson_times(chain.dark_rate, duration_ns, np.random.default_rng(dark_ss))
        merged = np.sort(np.concatenate([stream[mask], darks]))
        channels.append(prune_dead_time(merged, chain.dead_time))
    return channels[0], channels[1]


def _check_workload(expected_events: float, max_events: int | None):
    cap = DEFAULT_EVENT_CAP if max_events is None else max_events
    if expected_events > cap:
        raise SizingError(
            f"expected ~{expected_events:.2e} events exceeds the cap {cap:.2e}; "
            "shorten the run or pass max_events explicitly"
        )


def _noise_events(chain: DetectionChain, duration_s: float) -> float:
    return (2.0 * chain.dark_rate + chain.background_rate) * duration_s


def apply_detection(
    emissions: np.ndarray,
    chain: DetectionChain,
    duration: float,
    seed,
) -> TimestampRecord:
    """Pass a sorted emission-time array (ns) through the detection chain.

    Thinning by eta_total, Bernoulli splitting, Gaussian jitter, then
    per-channel merging with dark/background streams and dead-time
    pruning. ``duration`` is in seconds and bounds the noise streams.
    """
    emissions = np.asarray(emissions, dtype=float)
    if emissions.size > 1 and np.any(np.diff(emissions) < 0.0):
        raise ValueError("emissions must be sorted")
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    a, b = _detection_chain(emissions, chain, s_to_ns(duration), seed_seq, thin=True)
    meta = RecordMeta(
        chain=chain,
        duration=duration,
        seed=seed if isinstance(seed, int) else None,
        n_emitted=emissions.size,
    )
    return TimestampRecord(channel_a=a, channel_b=b, meta=meta)


def simulate_cw(
    rates: RateSet,
    program: ExcitationProgram,
    chain: DetectionChain,
    seed,
    max_events: int | None = None,
) -> TimestampRecord:
    """Simulate a CW excitation run and return the detected record.

    ``rates`` should be the emitter's rates at ``program.power`` (see
    :meth:`antibunch.models.PowerLaw.rates_at`). The run is refused when
    the expected detected plus noise event count exceeds the cap
    (default 2e8); pass ``max_events`` to override.
    """
    if program.mode is not ExcitationMode.CW:
        raise ValueError("program mode must be CW")
    duration_ns = s_to_ns(program.duration)
    expected = (
        chain.eta_total * excited_steady_fraction(rates) * rates.r21 * duration_ns
        + _noise_events(chain, program.duration)
    )
    _check_workload(expected, max_events)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    emit_ss, det_ss = root.spawn(2)
    photons, n_emitted = _detected_emission_times(
        rates, chain.eta_total, duration_ns, np.random.default_rng(emit_ss)
    )
    a, b = _detection_chain(photons, chain, duration_ns, det_ss, thin=False)
    meta = RecordMeta(
        chain=chain,
        duration=program.duration,
        seed=seed if isinstance(seed, int) else None,
        rates=rates,
        program=program,
        n_emitted=n_emitted,
    )
    return TimestampRecord(channel_a=a, channel_b=b, meta=meta)


def simulate_pulsed(
    rates: RateSet,
    program: ExcitationProgram,
    chain: DetectionChain,
    seed,
    max_events: int | None = None,
) -> TimestampRecord:
    """Simulate a pulsed excitation run.

    Each pulse promotes a ground-state emitter with probability
    ``program.p_excite`` (instantaneous promotion; the 200 ps pulse shape
    belongs in the effective IRF). Decay and shelving follow the Markov
    chain; pulses arriving while the emitter is excited or shelved do
    nothing.
    """
    if program.mode is not ExcitationMode.PULSED:
        raise ValueError("program mode must be pulsed")
    duration_ns = s_to_ns(program.duration)
    period = program.period_ns
    n_pulses = int(duration_ns / period)
    if n_pulses < 1:
        raise ValueError("duration shorter than one pulse period")
    _check_workload(float(n_pulses) + _noise_events(chain, program.duration), max_events)
    root = np.random.SeedSequence(seed)
    emit_ss, det_ss = root.spawn(2)
    rng = np.random.default_rng(emit_ss)
    exit2 = rates.r21 + rates.r23
    excited = rng.random(n_pulses) < program.p_excite
    if rates.r23 > 0.0:
        shelved = rng.random(n_pulses) < (rates.r23 / exit2)
        dwell3 = rng.exponential(1.0 / rates.r31, n_pulses)
    else:
        shelved = np.zeros(n_pulses, dtype=bool)
        dwell3 = np.zeros(n_pulses)
    dwell2 = rng.exponential(1.0 / exit2, n_pulses)
    emissions = _pulsed_sweep_numba(period, n_pulses, excited, shelved, dwell2, dwell3)
    a, b = _detection_chain(emissions, chain, duration_ns, det_ss, thin=True)
    meta = RecordMeta(
        chain=chain,
        duration=program.duration,
        seed=seed,
        rates=rates,
        program=program,
        n_emitted=emissions.size,
    )
    return TimestampRecord(channel_a=a, channel_b=b, meta=meta)

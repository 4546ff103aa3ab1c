"""From timestamp records to normalized g2 and fluorescence-decay histograms.

The g2 estimator is the full pairwise cross-correlation of the two channels
inside a delay window (not start-stop): at MHz count rates and ns delays the
two coincide, and the full correlation has better statistics. Normalization
is N_A*N_B*bin/T so statistically independent streams level at 1.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .montecarlo import TimestampRecord
from .units import ps_to_ns

DEFAULT_BIN_NS = 0.154
_PAIR_CHUNK_TARGET = 30_000_000


class IRFShape(enum.Enum):
    GAUSSIAN = "gaussian"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class IRF:
    """Instrument response kernel applied to model curves before fitting.

    Gaussian IRFs are parametrized by their FWHM in ps; a tabulated IRF
    supplies samples on the histogram grid and is normalized to unit sum.
    """

    shape: IRFShape = IRFShape.GAUSSIAN
    fwhm: float = 0.0  # ps
    samples: np.ndarray | None = None

    def __post_init__(self):
        if self.shape is IRFShape.GAUSSIAN:
            if self.fwhm < 0.0:
                raise ValueError("fwhm must be nonnegative")
        else:
            if self.samples is None or len(self.samples) == 0:
                raise ValueError("tabulated IRF requires samples")
            arr = np.asarray(self.samples, dtype=float)
            if arr.size % 2 == 0:
                raise ValueError("tabulated IRF must have odd length (centered kernel)")
            if np.any(arr < 0.0) or arr.sum() <= 0.0:
                raise ValueError("tabulated IRF must be nonnegative with positive sum")
            object.__setattr__(self, "samples", arr / arr.sum())

    @classmethod
    def delta(cls) -> "IRF":
        return cls(shape=IRFShape.GAUSSIAN, fwhm=0.0)

    @classmethod
    def effective(cls, jitter_fwhm_ps: float, pulse_width_ps: float = 0.0) -> "IRF":
        """Detector jitter and laser pulse width combined in quadrature."""
        return cls(fwhm=float(np.hypot(jitter_fwhm_ps, pulse_width_ps)))

    def kernel(self, bin_width_ns: float) -> np.ndarray:
        """Discrete unit-sum kernel sampled at the histogram spacing."""
        if self.shape is IRFShape.TABULATED:
            return self.samples
        sigma = ps_to_ns(self.fwhm) / 2.3548200450309493
        if sigma < bin_width_ns * 1e-3:
            return np.array([1.0])
        half = int(np.ceil(5.0 * sigma / bin_width_ns))
        offsets = np.arange(-half, half + 1) * bin_width_ns
        k = np.exp(-0.5 * (offsets / sigma) ** 2)
        return k / k.sum()


@dataclass(frozen=True)
class G2Curve:
    """Binned g2 estimate on a symmetric delay grid."""

    bin_centers: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    bin_width: float
    acquisition: float  # seconds
    rates_ab: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("bin_centers", "values", "errors"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.bin_centers.size == self.values.size == self.errors.size):
            raise ValueError("curve arrays must share a length")
        widths = np.diff(self.bin_centers)
        if widths.size and not np.allclose(widths, self.bin_width, rtol=1e-6, atol=1e-9):
            raise ValueError("bins must be uniform")
        if np.any(self.errors < 0.0) or np.any(self.values < 0.0):
            raise ValueError("values and errors must be nonnegative")

    def central_value(self) -> float:
        """Raw estimate at zero delay (value of the bin containing 0)."""
        return float(self.values[np.argmin(np.abs(self.bin_centers))])

    def save(self, path) -> Path:
        return _save_curve(
            path,
            columns={"center": self.bin_centers, "value": self.values, "error": self.errors},
            meta={
                "kind": "g2",
                "bin_width": self.bin_width,
                "acquisition": self.acquisition,
                "rates_ab": list(self.rates_ab),
                "estimator": "full-pairwise cross-correlation",
            },
        )

    @classmethod
    def load(cls, path) -> "G2Curve":
        cols, meta = _load_curve(path, expected_kind="g2")
        return cls(
            bin_centers=cols["center"],
            values=cols["value"],
            errors=cols["error"],
            bin_width=meta["bin_width"],
            acquisition=meta["acquisition"],
            rates_ab=tuple(meta.get("rates_ab", (0.0, 0.0))),
        )


@dataclass(frozen=True)
class DecayCurve:
    """Histogram of detection time after the excitation pulse."""

    bin_centers: np.ndarray
    counts: np.ndarray
    rep_rate: float  # MHz
    bin_width: float

    def __post_init__(self):
        object.__setattr__(self, "bin_centers", np.asarray(self.bin_centers, dtype=float))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        if self.bin_centers.size != self.counts.size:
            raise ValueError("curve arrays must share a length")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")
        period = 1e3 / self.rep_rate
        if self.bin_centers.size and (
            self.bin_centers[0] < 0.0 or self.bin_centers[-1] >= period
        ):
            raise ValueError("bin range must lie inside one pulse period")

    def save(self, path) -> Path:
        return _save_curve(
            path,
            columns={"center": self.bin_centers, "counts": self.counts},
            meta={"kind": "decay", "bin_width": self.bin_width, "rep_rate": self.rep_rate},
        )

    @classmethod
    def load(cls, path) -> "DecayCurve":
        cols, meta = _load_curve(path, expected_kind="decay")
        return cls(
            bin_centers=cols["center"],
            counts=cols["counts"].astype(np.int64),
            rep_rate=meta["rep_rate"],
            bin_width=meta["bin_width"],
        )


def _save_curve(path, columns: dict, meta: dict) -> Path:
    base = Path(path)
    if base.suffix == ".csv":
        base = base.with_suffix("")
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    # repr of a float is the shortest string that parses back bit-exactly
    fmts = [
        (lambda v: str(int(v))) if np.issubdtype(arr.dtype, np.integer) else (lambda v: repr(float(v)))
        for arr in arrays
    ]
    with open(base.with_suffix(".csv"), "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(fmt(v) for fmt, v in zip(fmts, row)) + "\n")
    base.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return base.with_suffix(".csv")


def _load_curve(path, expected_kind: str | None = None) -> tuple[dict, dict]:
    base = Path(path)
    if base.suffix == ".csv":
        base = base.with_suffix("")
    meta = json.loads(base.with_suffix(".json").read_text())
    if expected_kind and meta.get("kind") != expected_kind:
        raise ValueError(f"curve kind {meta.get('kind')!r}, expected {expected_kind!r}")
    with open(base.with_suffix(".csv")) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    cols = {name: data[:, i] for i, name in enumerate(header)}
    return cols, meta


def curve_kind(path) -> str:
    """Read the 'kind' tag of a saved curve's metadata."""
    base = Path(path)
    if base.suffix == ".csv":
        base = base.with_suffix("")
    return json.loads(base.with_suffix(".json").read_text()).get("kind", "")


def cross_correlate(
    record: TimestampRecord,
    bin_width: float = DEFAULT_BIN_NS,
    window: float = 100.0,
) -> G2Curve:
    """Normalized two-channel coincidence histogram over delays in
    [-window, window] ns.

    Delays are t_B - t_A for every pair inside the window; the histogram
    is divided by N_A*N_B*bin_width/T so uncorrelated streams give 1.
    """
    if bin_width <= 0.0 or window <= 0.0:
        raise ValueError("bin_width and window must be positive")
    a, b = record.channel_a, record.channel_b
    if a.size == 0 or b.size == 0:
        raise ValueError("cross-correlation requires events on both channels")
    t_ns = record.duration_ns
    if window > t_ns / 10.0:
        warnings.warn("window exceeds a tenth of the record; normalization biased")
    n_half = int(round(window / bin_width))
    edges = (np.arange(-n_half, n_half + 2) - 0.5) * bin_width
    reach = edges[-1]
    hist = np.zeros(edges.size - 1, dtype=np.int64)
    pairs_per_a = max(1.0, b.size / t_ns * 2.0 * reach)
    chunk = max(1, int(_PAIR_CHUNK_TARGET / pairs_per_a))
    for start in range(0, a.size, chunk):
        t_a = a[start : start + chunk]
        lo = np.searchsorted(b, t_a - reach, side="left")
        hi = np.searchsorted(b, t_a + reach, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            continue
        offsets = np.concatenate([[0], np.cumsum(counts)])
        idx = np.repeat(lo - offsets[:-1], counts) + np.arange(total)
        delays = b[idx] - np.repeat(t_a, counts)
        hist += np.histogram(delays, bins=edges)[0]
    norm = a.size * b.size * bin_width / t_ns
    centers = np.arange(-n_half, n_half + 1) * bin_width
    return G2Curve(
        bin_centers=centers,
        values=hist / norm,
        errors=np.sqrt(hist) / norm,
        bin_width=bin_width,
        acquisition=record.meta.duration,
        rates_ab=record.rates_per_channel(),
    )


def decay_histogram(
    record: TimestampRecord,
    rep_rate: float | None = None,
    bin_width: float = DEFAULT_BIN_NS,
) -> DecayCurve:
    """Histogram of detection time modulo the pulse period (both channels).

    ``rep_rate`` (MHz) defaults to the record's excitation program.
    """
    if rep_rate is None:
        prog = record.meta.program
        if prog is None or prog.rep_rate is None:
            raise ValueError("rep_rate not given and absent from record metadata")
        rep_rate = prog.rep_rate
    period = 1e3 / rep_rate
    n_bins = int(period / bin_width)
    if n_bins < 2:
        raise ValueError("bin width too coarse for the pulse period")
    edges = np.arange(n_bins + 1) * bin_width
    stream = np.concatenate([record.channel_a, record.channel_b])
    phase = np.mod(stream, period)
    counts = np.histogram(phase, bins=edges)[0]
    centers = (edges[:-1] + edges[1:]) / 2.0
    return DecayCurve(bin_centers=centers, counts=counts, rep_rate=rep_rate, bin_width=bin_width)


def estimate_rho(signal_rate: float, background_rate: float) -> float:
    """Signal fraction rho = S/(S+B) used by the background correction."""
    if signal_rate < 0.0 or background_rate < 0.0:
        raise ValueError("rates must be nonnegative")
    total = signal_rate + background_rate
    if total == 0.0:
        raise ValueError("signal and background rates are both zero")
    return signal_rate / total


def background_correct(curve: G2Curve, rho: float) -> G2Curve:
    """Remove uncorrelated background: g2' = (g2 - (1 - rho^2)) / rho^2.

    rho is the signal fraction of the counts; errors scale by 1/rho^2.
    Corrected values are clipped at 0 (the estimator can dip below the
    physical floor on noisy bins).
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    values = (curve.values - (1.0 - rho**2)) / rho**2
    return G2Curve(
        bin_centers=curve.bin_centers,
        values=np.clip(values, 0.0, None),
        errors=curve.errors / rho**2,
        bin_width=curve.bin_width,
        acquisition=curve.acquisition,
        rates_ab=curve.rates_ab,
    )


def corrected_rate(rate_cps: float, dead_time_ns: float) -> float:
    """Undo non-paralyzable dead-time loss: r = r_meas/(1 - r_meas*tau)."""
    loss = rate_cps * dead_time_ns * 1e-9
    if loss >= 1.0:
        raise ValueError("measured rate saturates the detector")
    return rate_cps / (1.0 - loss)


def convolve_model(model, irf: IRF, grid: np.ndarray) -> np.ndarray:
    """Evaluate ``model`` (callable of delay) convolved with the IRF on a
    uniform grid.

    The model is sampled on the grid extended by the kernel half-width so
    the returned values carry no edge artifacts; a delta-like IRF returns
    the bare model values.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise ValueError("grid must have at least two points")
    h = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), h, rtol=1e-6, atol=1e-12):
        raise ValueError("grid must be uniform")
    fwhm_ns = ps_to_ns(irf.fwhm) if irf.shape is IRFShape.GAUSSIAN else None
    if fwhm_ns is not None and fwhm_ns > 0.0 and h > fwhm_ns / 2.0:
        warnings.warn("grid coarser than half the IRF width; convolution is crude")
    kernel = irf.kernel(h)
    half = kernel.size // 2
    if half == 0:
        return np.asarray(model(grid), dtype=float)
    left = grid[0] - h * np.arange(half, 0, -1)
    right = grid[-1] + h * np.arange(1, half + 1)
    extended = np.concatenate([left, grid, right])
    values = np.asarray(model(extended), dtype=float)
    return np.convolve(values, kernel, mode="valid")

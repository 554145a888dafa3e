"""Spectral estimation pipeline.

Shot campaigns over the black-box protocol, the autocorrelation of the
density of states on the signed phase grid, and periodicity detection on that
autocorrelation.
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from structlog import get_logger

from .blackbox import BlackBoxUnitary
from .config import settings
from .qpe import InitialPreparation, PhaseHistogram, ProtocolConfig, blackbox_qpe, decode_phase

logger = get_logger()

__all__ = [
    "AnalysisError",
    "PeriodReport",
    "PhaseHistogram",
    "SpectralDensity",
    "autocorrelation_estimate",
    "choose_time_step",
    "detect_periodicities",
    "nearest_grid_period",
    "run_campaign",
    "wrap_phase",
]


class AnalysisError(ValueError):
    """Raised for empty or degenerate inputs to the analysis steps"""


def wrap_phase(phase):
    """Map phases onto (-π, π]"""
    wrapped = np.pi - np.mod(np.pi - np.asarray(phase, dtype=float), 2 * np.pi)
    return wrapped if np.ndim(wrapped) else float(wrapped)


@dataclass
class SpectralDensity:
    """Probability measure over eigenphases or eigenphase differences.

    ``k`` is set when the support is the signed 2^k grid in outcome order.
    """

    support: np.ndarray
    weights: np.ndarray
    k: Optional[int] = None

    def __post_init__(self) -> None:
        self.support = np.asarray(self.support, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.support.shape != self.weights.shape:
            raise AnalysisError("support and weights differ in length")
        if np.any(self.weights < -settings.simulation.norm_tol):
            raise AnalysisError("weights must be non-negative")
        if self.weights.size and abs(self.weights.sum() - 1.0) >= settings.simulation.norm_tol:
            raise AnalysisError(f"weights sum to {self.weights.sum():.12f}, not 1")

    def mass_at(self, phase: float, tol: float = 1e-9) -> float:
        return float(self.weights[np.abs(wrap_phase(self.support - phase)) < tol].sum())

    def binned(self, k: int) -> "SpectralDensity":
        """Round every support point to the nearest point of the signed 2^k grid"""
        size = 1 << k
        bins = np.mod(np.rint(self.support * size / (2 * np.pi)).astype(np.int64), size)
        weights = np.bincount(bins, weights=self.weights, minlength=size)
        grid = np.array([decode_phase(m, k) for m in range(size)])
        return SpectralDensity(grid, weights, k=k)

    def grid_weights(self) -> np.ndarray:
        """Weights in outcome order m = 0..2^k-1"""
        if self.k is None:
            raise AnalysisError("density is not on a phase grid; bin it first")
        return self.weights

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        """A(Δ) == A(-Δ) on the grid"""
        w = self.grid_weights()
        mirrored = np.roll(w[::-1], 1)
        return bool(np.max(np.abs(w - mirrored)) < tol)


@dataclass
class PeriodReport:
    """Outcome of periodicity detection"""

    periods: List[float]
    frequencies: List[int]
    magnitudes: List[float]
    passed: List[bool]
    threshold: float
    reference_magnitude: float
    degenerate: bool = False
    flat: bool = False
    spectrum: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def candidates(self) -> List[float]:
        return [p for p, ok in zip(self.periods, self.passed) if ok]

    @property
    def top_period(self) -> Optional[float]:
        """Strongest candidate; ties go to the lowest frequency (the fundamental)"""
        best = None
        for period, magnitude, ok in zip(self.periods, self.magnitudes, self.passed):
            if ok and (best is None or magnitude > best[1] * (1 + 1e-9)):
                best = (period, magnitude)
        return None if best is None else best[0]


def choose_time_step(delta_bound: float) -> float:
    """Largest t with t·Δ ≤ π"""
    if delta_bound <= 0:
        raise AnalysisError(f"spectral spread bound must be positive, got {delta_bound}")
    return float(np.pi / delta_bound)


def run_campaign(
    box: BlackBoxUnitary, prep: InitialPreparation, config: ProtocolConfig
) -> PhaseHistogram:
    """Aggregate protocol shots (or the exact distribution) into a histogram"""
    logger.info(
        "Campaign started",
        box=box.label,
        k=config.k,
        n=config.n,
        shots=config.shots,
        seed=config.seed,
        mode=config.mode,
        variant=config.variant,
        threads=config.threads,
    )
    calls_before = box.calls
    started = time.perf_counter()
    histogram = blackbox_qpe(box, prep, config)
    logger.info(
        "Campaign finished",
        box=box.label,
        shots=histogram.shots,
        exact=histogram.is_exact,
        queries=box.calls - calls_before,
        elapsed=round(time.perf_counter() - started, 3),
    )
    return histogram


def autocorrelation_estimate(hist: PhaseHistogram) -> SpectralDensity:
    """Normalized distribution over the decoded signed differences Δφ_m"""
    if not hist.is_exact and hist.shots == 0:
        raise AnalysisError("histogram has zero shots")
    return SpectralDensity(hist.decoded_phases(), hist.distribution().copy(), k=hist.k)


def detect_periodicities(
    density: SpectralDensity, threshold: Optional[float] = None
) -> PeriodReport:
    """Fourier analysis of a gridded autocorrelation.

    A comb with spacing δ on the circle of circumference 2π shows up at
    frequency index f = 2π/δ, so every reported period is 2π/f. Frequencies
    whose magnitude reaches ``threshold`` times the largest non-DC magnitude
    pass; the DC term is never reported.
    """
    threshold = settings.analysis.threshold if threshold is None else threshold
    if not 0 < threshold < 1:
        raise AnalysisError(f"threshold must lie in (0, 1), got {threshold}")
    weights = density.grid_weights()
    if not np.any(weights > 0):
        raise AnalysisError("density has no mass")

    spectrum = np.abs(np.fft.rfft(weights))
    frequencies = list(range(1, spectrum.size))
    magnitudes = [float(spectrum[f]) for f in frequencies]
    periods = [2 * np.pi / f for f in frequencies]
    reference = max(magnitudes, default=0.0)

    if weights[0] / weights.sum() >= settings.analysis.degenerate_mass:
        logger.info("Degenerate density, every period fits a delta at zero")
        return PeriodReport(
            periods=[], frequencies=[], magnitudes=[], passed=[],
            threshold=threshold, reference_magnitude=reference,
            degenerate=True, spectrum=spectrum,
        )

    flat = bool(reference <= 1e-12 * spectrum[0])
    passed = [not flat and m >= threshold * reference for m in magnitudes]
    report = PeriodReport(
        periods=periods,
        frequencies=frequencies,
        magnitudes=magnitudes,
        passed=passed,
        threshold=threshold,
        reference_magnitude=reference,
        flat=flat,
        spectrum=spectrum,
    )
    logger.info(
        "Periodicity detection",
        k=density.k,
        candidates=len(report.candidates),
        top_period=report.top_period,
        flat=flat,
    )
    return report


def nearest_grid_period(period: float, k: int) -> float:
    """Closest period 2π/f representable on the 2^k grid"""
    if period <= 0:
        raise AnalysisError(f"period must be positive, got {period}")
    candidates = 2 * np.pi / np.arange(1, (1 << (k - 1)) + 1)
    return float(candidates[np.argmin(np.abs(candidates - period))])

"""Phase estimation circuits.

Two circuits live here: the textbook white-box phase estimation with
controlled powers of an explicit matrix, and the black-box protocol that
reaches the spectrum of U⊗U† using only register exchanges, Fredkin gates and
sealed ``apply_power`` calls.

Per ancilla qubit j the black-box protocol realizes

    V'_j = |1_j⟩⟨1_j| ⊗ U^{2^j} ⊗ 1 + |0_j⟩⟨0_j| ⊗ 1 ⊗ U^{2^j}     on Ra ⊗ R1 ⊗ R2

so branch l of the ancilla carries U^l on R1 and U^{2^k-1-l} on R2. Up to a
unitary on R2 that does not depend on l this is the controlled-(U⊗U†) ladder,
and the ancilla reads out φ_a − φ_b (R1 minus R2).
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator
from structlog import get_logger

from .blackbox import BlackBoxError, BlackBoxUnitary
from .config import settings
from .qsim import (
    GateError,
    RegisterLayout,
    StateVector,
    ancilla_distribution,
    apply_unitary,
    basis_vector,
    conditional_swap,
    hadamard_layer,
    inverse_qft,
    is_unitary,
    measure_ancilla,
    product_state,
    register_summary,
    shot_rng,
    swap_registers,
)

logger = get_logger()

ProtocolMode = Literal["full-swap", "compressed"]
ProtocolVariant = Literal["sandwich", "literal", "skip-second-cswap"]
PreparationKind = Literal["basis", "eigenstate", "maximally-mixed", "amplitudes"]


class ProtocolConfig(BaseModel):
    """Parameters of one protocol run"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    k: int = Field(..., ge=1, description="Ancilla qubits; resolution 2π/2^k")
    n: int = Field(..., ge=1, description="Qubits in each of R1, R2 and H")
    shots: Union[PositiveInt, Literal["exact"]] = Field(
        "exact", description="Number of sampled shots or 'exact'"
    )
    seed: int = Field(0, ge=0)
    mode: ProtocolMode = Field("full-swap")
    variant: ProtocolVariant = Field(
        "sandwich",
        description="sandwich is the shipped protocol; the others are experiments and negative controls"
    )
    threads: int = Field(default_factory=lambda: settings.runner.threads, ge=1)
    shot_offset: int = Field(0, ge=0, description="First shot index, for splitting campaigns")

    @model_validator(mode="after")
    def _check_layout(self) -> "ProtocolConfig":
        # raises QubitCapExceeded (a ValueError) for oversize layouts
        self.layout()
        return self

    @property
    def exact(self) -> bool:
        return self.shots == "exact"

    def layout(self) -> RegisterLayout:
        if self.mode == "compressed":
            return RegisterLayout.compressed(self.k, self.n)
        return RegisterLayout.full(self.k, self.n)


class RegisterPreparation(BaseModel):
    """Initial state of one register"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: PreparationKind
    index: Optional[int] = Field(None, ge=0, description="Basis state index")
    rank: Optional[int] = Field(None, ge=0, description="Eigenvector rank by ascending eigenphase")
    amplitudes: Optional[List[Tuple[float, float]]] = Field(
        None, description="Explicit (re, im) amplitude pairs"
    )

    @model_validator(mode="after")
    def _check_kind(self) -> "RegisterPreparation":
        if self.kind == "basis" and self.index is None:
            raise ValueError("basis preparation needs 'index'")
        if self.kind == "eigenstate" and self.rank is None:
            raise ValueError("eigenstate preparation needs 'rank'")
        if self.kind == "amplitudes":
            if not self.amplitudes:
                raise ValueError("amplitudes preparation needs 'amplitudes'")
            norm = sum(re * re + im * im for re, im in self.amplitudes)
            if abs(norm - 1.0) >= settings.simulation.norm_tol:
                raise ValueError(f"amplitudes are not normalized (norm² = {norm:.12f})")
        return self

    @classmethod
    def basis(cls, index: int) -> "RegisterPreparation":
        return cls(kind="basis", index=index)

    @classmethod
    def eigenstate(cls, rank: int) -> "RegisterPreparation":
        return cls(kind="eigenstate", rank=rank)

    @classmethod
    def maximally_mixed(cls) -> "RegisterPreparation":
        return cls(kind="maximally-mixed")

    @classmethod
    def vector(cls, amplitudes: Sequence[complex]) -> "RegisterPreparation":
        pairs = [(float(np.real(a)), float(np.imag(a))) for a in amplitudes]
        return cls(kind="amplitudes", amplitudes=pairs)

    @property
    def is_pure(self) -> bool:
        return self.kind != "maximally-mixed"


class InitialPreparation(BaseModel):
    """Preparations of R1 and R2"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    r1: RegisterPreparation
    r2: RegisterPreparation

    @classmethod
    def same(cls, prep: RegisterPreparation) -> "InitialPreparation":
        return cls(r1=prep, r2=prep)

    @property
    def is_pure(self) -> bool:
        return self.r1.is_pure and self.r2.is_pure


@dataclass(frozen=True)
class Ensemble:
    """Pure-state decomposition of a register preparation"""

    weights: np.ndarray
    vectors: Tuple[np.ndarray, ...]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if len(self.vectors) == 1:
            return self.vectors[0]
        return self.vectors[int(rng.choice(len(self.vectors), p=self.weights))]


def resolve_preparation(prep: RegisterPreparation, box: BlackBoxUnitary) -> Ensemble:
    """Turn a preparation into explicit weighted pure states"""
    d = 1 << box.n
    if prep.kind == "basis":
        return Ensemble(np.ones(1), (basis_vector(d, prep.index),))
    if prep.kind == "maximally-mixed":
        return Ensemble(np.full(d, 1.0 / d), tuple(basis_vector(d, i) for i in range(d)))
    if prep.kind == "amplitudes":
        vector = np.array([complex(re, im) for re, im in prep.amplitudes])
        if vector.size != d:
            raise GateError(f"amplitude list has {vector.size} entries, register needs {d}")
        return Ensemble(np.ones(1), (vector,))

    # eigenstate inputs are a test-harness privilege, not a protocol one
    from .verify import exact_eigenphases

    if prep.rank >= d:
        raise GateError(f"eigenstate rank {prep.rank} out of range for dimension {d}")
    eigen = exact_eigenphases(box)
    return Ensemble(np.ones(1), (eigen.vectors[:, prep.rank].copy(),))


@dataclass
class PhaseHistogram:
    """Outcome statistics of the ancilla readout"""

    k: int
    counts: np.ndarray
    shots: int = 0
    probabilities: Optional[np.ndarray] = None
    seed: Optional[int] = None
    shot_offset: int = 0

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (1 << self.k,):
            raise ValueError(f"expected {1 << self.k} bins, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if int(self.counts.sum()) != self.shots:
            raise ValueError(f"counts sum to {int(self.counts.sum())}, shots = {self.shots}")
        if self.probabilities is not None:
            self.probabilities = np.asarray(self.probabilities, dtype=float)
            if abs(self.probabilities.sum() - 1.0) >= settings.simulation.norm_tol:
                raise ValueError("exact probabilities do not sum to 1")

    @classmethod
    def from_outcomes(
        cls, k: int, outcomes: Sequence[int], seed: Optional[int] = None, shot_offset: int = 0
    ) -> "PhaseHistogram":
        counts = np.bincount(np.asarray(outcomes, dtype=np.int64), minlength=1 << k)
        return cls(k=k, counts=counts, shots=len(outcomes), seed=seed, shot_offset=shot_offset)

    @classmethod
    def exact_distribution(cls, k: int, probabilities: np.ndarray) -> "PhaseHistogram":
        return cls(k=k, counts=np.zeros(1 << k, dtype=np.int64), probabilities=probabilities)

    @property
    def is_exact(self) -> bool:
        return self.probabilities is not None

    def distribution(self) -> np.ndarray:
        """Exact probabilities, or empirical frequencies for sampled histograms"""
        if self.probabilities is not None:
            return self.probabilities
        if self.shots == 0:
            raise ValueError("histogram has no shots")
        return self.counts / self.shots

    def standard_errors(self) -> np.ndarray:
        """Per-bin binomial standard deviation of the empirical frequencies"""
        if self.probabilities is not None:
            return np.zeros(1 << self.k)
        p = self.distribution()
        return np.sqrt(p * (1 - p) / self.shots)

    def merge(self, other: "PhaseHistogram") -> "PhaseHistogram":
        """Pool the shots of two sampled campaigns"""
        if other.k != self.k:
            raise ValueError(f"cannot merge k={self.k} with k={other.k}")
        if self.is_exact or other.is_exact:
            raise ValueError("only sampled histograms can be merged")
        return PhaseHistogram(
            k=self.k,
            counts=self.counts + other.counts,
            shots=self.shots + other.shots,
            seed=self.seed if self.seed == other.seed else None,
            shot_offset=min(self.shot_offset, other.shot_offset),
        )

    def total_variation(self, other: "PhaseHistogram") -> float:
        return 0.5 * float(np.abs(self.distribution() - other.distribution()).sum())

    def coarsen(self, k: int) -> "PhaseHistogram":
        """Bin onto the coarser 2^k grid; outcome m maps to round(m / 2^(k_self-k))"""
        if not 1 <= k <= self.k:
            raise ValueError(f"cannot coarsen k={self.k} to k={k}")
        factor = 1 << (self.k - k)
        target = ((np.arange(1 << self.k) + factor // 2) // factor) % (1 << k)
        counts = np.bincount(target, weights=self.counts, minlength=1 << k).astype(np.int64)
        probabilities = None
        if self.probabilities is not None:
            probabilities = np.bincount(target, weights=self.probabilities, minlength=1 << k)
        return PhaseHistogram(
            k=k,
            counts=counts,
            shots=self.shots,
            probabilities=probabilities,
            seed=self.seed,
            shot_offset=self.shot_offset,
        )

    def decoded_phases(self) -> np.ndarray:
        return decode_phases(self.k)


def decode_phase(m: int, k: int) -> float:
    """Signed phase difference in (-π, π] for outcome m"""
    size = 1 << k
    if not 0 <= m < size:
        raise ValueError(f"outcome {m} out of range for k={k}")
    if m <= size // 2:
        return 2 * np.pi * m / size
    return 2 * np.pi * (m - size) / size


def decode_phases(k: int) -> np.ndarray:
    return np.array([decode_phase(m, k) for m in range(1 << k)])


def standard_qpe(unitary: np.ndarray, target: np.ndarray, k: int) -> np.ndarray:
    """White-box phase estimation with explicit controlled powers.

    Args:
        unitary: Explicit 2^t x 2^t unitary
        target: Initial target state vector
        k: Ancilla qubits

    Returns:
        Exact outcome distribution over m in [0, 2^k)
    """
    unitary = np.asarray(unitary, dtype=np.complex128)
    target = np.asarray(target, dtype=np.complex128)
    if unitary.ndim != 2 or unitary.shape[0] != unitary.shape[1]:
        raise BlackBoxError(f"expected a square matrix, got {unitary.shape}")
    if target.shape != (unitary.shape[0],):
        raise BlackBoxError(
            f"target has {target.shape} amplitudes, unitary acts on {unitary.shape[0]}"
        )
    if not is_unitary(unitary):
        raise GateError("matrix is not unitary within tolerance")
    width = unitary.shape[0].bit_length() - 1

    layout = RegisterLayout.reference(k, width)
    state = product_state(layout, {"target": target})
    hadamard_layer(state, layout.ancilla)
    targets = list(layout.target)
    power = unitary
    for j in range(k):
        controlled = scipy.linalg.block_diag(np.eye(unitary.shape[0]), power)
        apply_unitary(state, controlled, targets + [j], check=False)
        power = power @ power
    inverse_qft(state, layout.ancilla)
    return ancilla_distribution(state)


@dataclass(frozen=True)
class Operation:
    """One named step of a circuit fragment"""

    name: str
    apply: Callable[[StateVector], StateVector] = field(repr=False)

    def __call__(self, state: StateVector) -> StateVector:
        return self.apply(state)


def build_blackbox_step(
    box: BlackBoxUnitary, j: int, config: ProtocolConfig
) -> Tuple[Operation, ...]:
    """Operations realizing V'_j from swaps, Fredkin gates and one box call"""
    if not 0 <= j < config.k:
        raise ValueError(f"step index {j} out of range for k={config.k}")
    layout = config.layout()
    control = layout.ancilla[j]
    r1, r2 = layout.r1, layout.r2
    power = 1 << j

    cswap = Operation(f"cswap(a{j}; R1, R2)", partial(_cswap, control=control, a=r1, b=r2))

    if config.variant == "literal":
        # the step list read verbatim: exchange H with R1 around the box, then one Fredkin layer
        if layout.has_target:
            h = layout.target
            return (
                Operation("swap(H, R1)", partial(_swap, a=h, b=r1)),
                Operation(f"U^{power} on H", partial(_power, box=box, p=power, register=h)),
                Operation("swap(H, R1)", partial(_swap, a=h, b=r1)),
                cswap,
            )
        return (
            Operation(f"U^{power} on R1", partial(_power, box=box, p=power, register=r1)),
            cswap,
        )

    if layout.has_target:
        h = layout.target
        body: Tuple[Operation, ...] = (
            Operation("swap(H, R2)", partial(_swap, a=h, b=r2)),
            Operation(f"U^{power} on H", partial(_power, box=box, p=power, register=h)),
            Operation("swap(H, R2)", partial(_swap, a=h, b=r2)),
        )
    else:
        body = (Operation(f"U^{power} on R2", partial(_power, box=box, p=power, register=r2)),)

    if config.variant == "skip-second-cswap":
        return (cswap,) + body
    return (cswap,) + body + (cswap,)


def _cswap(state: StateVector, control: int, a: range, b: range) -> StateVector:
    return conditional_swap(state, control, a, b)


def _swap(state: StateVector, a: range, b: range) -> StateVector:
    return swap_registers(state, a, b)


def _power(state: StateVector, box: BlackBoxUnitary, p: int, register: range) -> StateVector:
    return box.apply_power(state, p, register)


def run_fragment(fragment: Sequence[Operation], state: StateVector) -> StateVector:
    for operation in fragment:
        operation(state)
    return state


def protocol_ladder(box: BlackBoxUnitary, config: ProtocolConfig) -> List[Operation]:
    """Concatenated fragments for j = 0..k-1"""
    return [op for j in range(config.k) for op in build_blackbox_step(box, j, config)]


def _check_box(box: BlackBoxUnitary, config: ProtocolConfig) -> None:
    if box.n != config.n:
        raise BlackBoxError(f"box acts on {box.n} qubits, layout registers have {config.n}")


def _run_pure(
    ladder: Sequence[Operation],
    layout: RegisterLayout,
    psi1: np.ndarray,
    psi2: np.ndarray,
) -> StateVector:
    # H^{⊗k}|0…0⟩ written directly
    plus = np.full(1 << layout.k, 2.0 ** (-layout.k / 2), dtype=np.complex128)
    state = product_state(layout, {"ancilla": plus, "r1": psi1, "r2": psi2})
    run_fragment(ladder, state)
    return inverse_qft(state, layout.ancilla)


def blackbox_qpe(
    box: BlackBoxUnitary, prep: InitialPreparation, config: ProtocolConfig
) -> PhaseHistogram:
    """Run the black-box protocol.

    Sampled mode draws pure states for R1 and R2 per shot from per-shot RNG
    streams and measures the ancilla. Exact mode enumerates the preparation
    ensembles and mixes the exact ancilla distributions.
    """
    _check_box(box, config)
    layout = config.layout()
    ladder = protocol_ladder(box, config)
    logger.debug("Protocol ladder built", steps=len(ladder), registers=register_summary(layout))
    first = resolve_preparation(prep.r1, box)
    second = resolve_preparation(prep.r2, box)

    if config.exact:
        probabilities = np.zeros(1 << config.k)
        for (w1, psi1), (w2, psi2) in itertools.product(
            zip(first.weights, first.vectors), zip(second.weights, second.vectors)
        ):
            state = _run_pure(ladder, layout, psi1, psi2)
            probabilities += w1 * w2 * ancilla_distribution(state)
        return PhaseHistogram.exact_distribution(config.k, probabilities)

    def shot(index: int) -> int:
        rng = shot_rng(config.seed, index)
        psi1 = first.sample(rng)
        psi2 = second.sample(rng)
        state = _run_pure(ladder, layout, psi1, psi2)
        m, _ = measure_ancilla(state, rng)
        return m

    indices = range(config.shot_offset, config.shot_offset + config.shots)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(shot, indices))
    else:
        outcomes = [shot(index) for index in indices]
    return PhaseHistogram.from_outcomes(
        config.k, outcomes, seed=config.seed, shot_offset=config.shot_offset
    )

"""Brute-force ground-truth oracles.

These functions read the hidden matrix of a black box through
:func:`blackbox.unseal`. They exist to check the protocol, never to run it.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import scipy.linalg
from structlog import get_logger

from .blackbox import BlackBoxUnitary, HermitianGenerator, from_hamiltonian, unseal
from .config import settings
from .qpe import (
    InitialPreparation,
    ProtocolConfig,
    RegisterPreparation,
    blackbox_qpe,
    protocol_ladder,
    resolve_preparation,
    run_fragment,
    standard_qpe,
)
from .qsim import RegisterLayout, StateVector, basis_vector
from .spectra import SpectralDensity, autocorrelation_estimate, wrap_phase

logger = get_logger()

TWO_PI = 2 * np.pi


class OracleError(ValueError):
    """Raised when a brute-force computation is out of range or inaccurate"""


@dataclass
class EigenDecomposition:
    """Eigenphases in [0, 2π), ascending, with orthonormal eigenvector columns"""

    phases: np.ndarray
    vectors: np.ndarray
    residual: float = 0.0

    def clusters(self, gap: Optional[float] = None) -> List[np.ndarray]:
        """Index groups of (numerically) degenerate eigenphases"""
        gap = settings.oracle.cluster_gap if gap is None else gap
        groups: List[List[int]] = []
        for i, phase in enumerate(self.phases):
            if groups and phase - self.phases[groups[-1][-1]] < gap:
                groups[-1].append(i)
            else:
                groups.append([i])
        # the circle closes: phases near 2π join the cluster at 0
        if len(groups) > 1 and TWO_PI - self.phases[groups[-1][-1]] + self.phases[0] < gap:
            groups[0] = groups.pop() + groups[0]
        return [np.array(g) for g in groups]


def _canonical(phases: np.ndarray) -> np.ndarray:
    phases = np.mod(phases, TWO_PI)
    phases[phases > TWO_PI - 1e-12] = 0.0
    return phases


def exact_eigenphases(box: BlackBoxUnitary) -> EigenDecomposition:
    """Eigendecomposition of the hidden matrix via its complex Schur form"""
    if box.n > settings.simulation.dense_qubit_cap:
        raise OracleError(f"n={box.n} exceeds the dense cap")
    u = unseal(box)
    t, z = scipy.linalg.schur(u, output="complex")
    phases = _canonical(np.angle(np.diag(t)))
    order = np.argsort(phases, kind="stable")
    decomposition = EigenDecomposition(phases[order], z[:, order])

    # re-orthonormalize inside degenerate clusters
    vectors = decomposition.vectors.copy()
    for group in decomposition.clusters():
        if group.size > 1:
            q, _ = scipy.linalg.qr(vectors[:, group], mode="economic")
            vectors[:, group] = q
    decomposition.vectors = vectors

    eigenvalues = np.exp(1j * decomposition.phases)
    residual = float(np.max(np.abs(u @ vectors - vectors * eigenvalues)))
    if residual > settings.oracle.residual_tol:
        raise OracleError(f"eigendecomposition residual {residual:.3e} above tolerance")
    decomposition.residual = residual
    return decomposition


def eigenspace_weights(
    box: BlackBoxUnitary, prep: RegisterPreparation, eigen: EigenDecomposition
) -> np.ndarray:
    """p(a): weight of a register preparation on each eigenvector.

    Weights are summed per degenerate cluster and stored on its first member,
    so they do not depend on the basis chosen inside an eigenspace.
    """
    ensemble = resolve_preparation(prep, box)
    weights = np.zeros(eigen.phases.size)
    for w, psi in zip(ensemble.weights, ensemble.vectors):
        weights += w * np.abs(eigen.vectors.conj().T @ psi) ** 2
    clustered = np.zeros_like(weights)
    for group in eigen.clusters():
        clustered[group[0]] = weights[group].sum()
    return clustered


def exact_difference_distribution(box: BlackBoxUnitary, prep: InitialPreparation) -> SpectralDensity:
    """Weight p1(a)·p2(b) on every eigenphase difference φ_a − φ_b"""
    eigen = exact_eigenphases(box)
    p1 = eigenspace_weights(box, prep.r1, eigen)
    p2 = eigenspace_weights(box, prep.r2, eigen)
    differences = wrap_phase(eigen.phases[:, None] - eigen.phases[None, :]).ravel()
    weights = np.outer(p1, p2).ravel()

    keep = weights > 0
    differences, weights = differences[keep], weights[keep]
    # merge coincident support points
    support: List[float] = []
    merged: List[float] = []
    for phase, weight in sorted(zip(differences, weights)):
        if support and abs(phase - support[-1]) < settings.oracle.equivalence_tol:
            merged[-1] += weight
        else:
            support.append(phase)
            merged.append(weight)
    total = sum(merged)
    return SpectralDensity(np.array(support), np.array(merged) / total)


def fejer_kernel(x: np.ndarray, k: int) -> np.ndarray:
    """|2^-k Σ_l exp(i l x)|² for l = 0..2^k-1"""
    size = 1 << k
    x = np.asarray(x, dtype=float)
    numerator = np.sin(size * x / 2) ** 2
    denominator = (size * np.sin(x / 2)) ** 2
    on_grid = np.abs(np.sin(x / 2)) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        value = numerator / denominator
    return np.where(on_grid, 1.0, value)


def predicted_outcome_distribution(density: SpectralDensity, k: int) -> np.ndarray:
    """Exact protocol outcome distribution implied by a difference density"""
    size = 1 << k
    grid = TWO_PI * np.arange(size) / size
    kernel = fejer_kernel(density.support[:, None] - grid[None, :], k)
    return density.weights @ kernel


def pair_unitary(unitary: np.ndarray) -> np.ndarray:
    """U⊗U† on R1⊗R2 in the little-endian layout (R1 holds the low bits)"""
    unitary = np.asarray(unitary, dtype=np.complex128)
    return np.kron(unitary.conj().T, unitary)


def reference_distribution(box: BlackBoxUnitary, prep: InitialPreparation, k: int) -> np.ndarray:
    """Standard phase estimation on the explicit U⊗U† with the same product preparation"""
    pair = pair_unitary(unseal(box))
    first = resolve_preparation(prep.r1, box)
    second = resolve_preparation(prep.r2, box)
    probabilities = np.zeros(1 << k)
    for w1, psi1 in zip(first.weights, first.vectors):
        for w2, psi2 in zip(second.weights, second.vectors):
            probabilities += w1 * w2 * standard_qpe(pair, np.kron(psi2, psi1), k)
    return probabilities


@dataclass
class EquivalenceResult:
    equivalent: bool
    residual: float
    phases: List[float] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.equivalent


def _align(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    """Residual of a against e^{iθ}b with θ fixed by b's largest entry"""
    index = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(b[index]) == 0:
        return float(np.max(np.abs(a), initial=0.0)), 0.0
    ratio = a[index] / b[index]
    theta = float(np.angle(ratio)) if abs(ratio) > 0 else 0.0
    residual = float(np.max(np.abs(a - np.exp(1j * theta) * b)))
    return residual, theta


def circuit_equivalence(
    a: np.ndarray,
    b: np.ndarray,
    mode: Literal["global-phase", "branchwise"] = "global-phase",
    ancilla_bits: int = 0,
    tol: Optional[float] = None,
) -> EquivalenceResult:
    """Compare two explicit unitaries up to a global or per-ancilla-branch phase"""
    tol = settings.oracle.equivalence_tol if tol is None else tol
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise OracleError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] > 1 << settings.simulation.assemble_qubit_cap:
        raise OracleError(f"dimension {a.shape[0]} too large for brute force")

    if mode == "global-phase":
        residual, theta = _align(a, b)
        return EquivalenceResult(residual < tol, residual, [theta])

    if ancilla_bits < 1:
        raise OracleError("branchwise comparison needs ancilla_bits >= 1")
    size = 1 << ancilla_bits
    rest = a.shape[0] // size
    # row/column index = rest_index * 2^k + ancilla value
    a4 = a.reshape(rest, size, rest, size)
    b4 = b.reshape(rest, size, rest, size)
    # off-diagonal ancilla blocks are compared without phase alignment
    off_block = ~np.eye(size, dtype=bool)
    residual = float(np.abs(a4 - b4).transpose(1, 3, 0, 2)[off_block].max(initial=0.0))
    phases = []
    for l in range(size):
        block_residual, theta = _align(a4[:, l, :, l], b4[:, l, :, l])
        residual = max(residual, block_residual)
        phases.append(theta)
    return EquivalenceResult(residual < tol, residual, phases)


def assemble_protocol_unitary(box: BlackBoxUnitary, config: ProtocolConfig) -> np.ndarray:
    """Matrix of the V'_j ladder, one column per computational basis state"""
    layout = config.layout()
    if layout.total > settings.simulation.assemble_qubit_cap:
        raise OracleError(
            f"{layout.total} qubits exceeds the assembly cap of "
            f"{settings.simulation.assemble_qubit_cap}"
        )
    if box.n != config.n:
        raise OracleError(f"box acts on {box.n} qubits, config has n={config.n}")
    ladder = protocol_ladder(box, config)
    d = layout.dimension
    matrix = np.zeros((d, d), dtype=np.complex128)
    for column in range(d):
        state = StateVector(basis_vector(d, column), layout)
        matrix[:, column] = run_fragment(ladder, state).amplitudes
    return matrix


def _embed(layout: RegisterLayout, factors: Dict[str, np.ndarray]) -> np.ndarray:
    """Block for one ancilla value: kron of per-register operators, high registers first"""
    block = np.eye(1, dtype=np.complex128)
    for name in layout.registers:
        op = factors.get(name, np.eye(1 << layout.n, dtype=np.complex128))
        block = np.kron(op, block)
    return block


def _block_diagonal(layout: RegisterLayout, blocks: List[np.ndarray]) -> np.ndarray:
    size = 1 << layout.k
    rest = layout.dimension // size
    full = np.zeros((rest, size, rest, size), dtype=np.complex128)
    for l, block in enumerate(blocks):
        full[:, l, :, l] = block
    return full.reshape(layout.dimension, layout.dimension)


def v_prime(unitary: np.ndarray, layout: RegisterLayout, j: int) -> np.ndarray:
    """Explicit V'_j: U^{2^j} on R1 when ancilla bit j is 1, on R2 when it is 0"""
    power = np.linalg.matrix_power(unitary, 1 << j)
    blocks = []
    for l in range(1 << layout.k):
        register = "r1" if (l >> j) & 1 else "r2"
        blocks.append(_embed(layout, {register: power}))
    return _block_diagonal(layout, blocks)


def reference_ladder_unitary(box: BlackBoxUnitary, config: ProtocolConfig) -> np.ndarray:
    """∏_j V'_j assembled from explicit matrices"""
    layout = config.layout()
    if layout.total > settings.simulation.assemble_qubit_cap:
        raise OracleError(f"{layout.total} qubits exceeds the assembly cap")
    unitary = unseal(box)
    product = np.eye(layout.dimension, dtype=np.complex128)
    for j in range(config.k):
        product = v_prime(unitary, layout, j) @ product
    return product


@dataclass
class AliasingReport:
    """Comparison of true eigenvalue differences with observed eigenphase differences"""

    t: float
    spread: float
    max_difference: float
    max_wrap_error: float
    aliased: bool


def aliasing_report(gen: HermitianGenerator, t: float, tol: float = 1e-9) -> AliasingReport:
    """Check whether exp(-iHt) folds eigenvalue differences past ±π"""
    values, vectors = scipy.linalg.eigh(gen.matrix)
    box = from_hamiltonian(gen, t)
    eigen = exact_eigenphases(box)

    # match each H eigenvector to its U eigenphase through the overlaps
    overlaps = np.abs(eigen.vectors.conj().T @ vectors) ** 2
    matched = eigen.phases[np.argmax(overlaps, axis=0)]
    true_differences = -(values[:, None] - values[None, :]) * t
    observed = wrap_phase(matched[:, None] - matched[None, :])

    error = np.abs(true_differences - observed)
    # ±π are the same point on the circle
    boundary = np.abs(np.abs(true_differences) - np.pi) < tol
    error = np.where(boundary, np.minimum(error, np.abs(error - TWO_PI)), error)
    max_difference = float(np.max(np.abs(true_differences)))
    report = AliasingReport(
        t=t,
        spread=float(values[-1] - values[0]),
        max_difference=max_difference,
        max_wrap_error=float(np.max(error)),
        aliased=max_difference > np.pi + tol,
    )
    logger.info("Aliasing check", t=t, spread=report.spread, aliased=report.aliased)
    return report


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    detail: str = ""


def run_checks(box: BlackBoxUnitary, prep: InitialPreparation, config: ProtocolConfig) -> List[CheckResult]:
    """Invariant suite used by the ``verify`` command"""
    exact = config.model_copy(update={"shots": "exact"})
    tol = settings.oracle.equivalence_tol
    results: List[CheckResult] = []

    assembled = assemble_protocol_unitary(box, exact)
    reference = reference_ladder_unitary(box, exact.model_copy(update={"variant": "sandwich"}))
    branch = circuit_equivalence(assembled, reference, mode="branchwise", ancilla_bits=config.k)
    results.append(CheckResult("branch-correctness", branch.equivalent, branch.residual))

    unitarity = float(np.max(np.abs(assembled.conj().T @ assembled - np.eye(assembled.shape[0]))))
    results.append(CheckResult("assembled-unitarity", unitarity < tol, unitarity))

    protocol = blackbox_qpe(box, prep, exact).distribution()
    white_box = reference_distribution(box, prep, config.k)
    residual = float(np.max(np.abs(protocol - white_box)))
    results.append(CheckResult("white-box-equivalence", residual < tol, residual))

    density = exact_difference_distribution(box, prep)
    predicted = predicted_outcome_distribution(density, config.k)
    estimate = autocorrelation_estimate(blackbox_qpe(box, prep, exact)).grid_weights()
    residual = float(np.max(np.abs(estimate - predicted)))
    results.append(CheckResult("oracle-match", residual < tol, residual))

    for check in results:
        logger.info("Check finished", check=check.name, passed=check.passed, residual=check.residual)
    return results

"""Dense state-vector engine.

Qubit q is bit q of the amplitude index (little-endian). Registers are laid out
in ascending order Ra | R1 | R2 | H, so the ancilla always occupies the lowest
k bits. Matrices passed to :func:`apply_unitary` follow the same convention:
bit i of a matrix index belongs to ``qubits[i]``.

Every operation transforms the state it is given and returns it so calls can be
chained. Register gates write into a per-state scratch buffer and then exchange
it with ``state.amplitudes``, so hold the state rather than its amplitude array.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from structlog import get_logger

from .config import settings

logger = get_logger()

REGISTER_ORDER = ("r1", "r2", "target")

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


class QubitCapExceeded(ValueError):
    """Raised when a layout needs more qubits than the simulator allows"""


class GateError(ValueError):
    """Raised for non-unitary matrices or invalid qubit selections"""


class MeasurementError(ValueError):
    """Raised when a measurement projects onto a zero-norm branch"""


@dataclass(frozen=True)
class RegisterLayout:
    """Partition of the qubits into ancilla Ra and equally sized registers.

    The full protocol uses ``("r1", "r2", "target")``; the compressed protocol
    drops the target register; the white-box reference uses ``("target",)``.
    """

    k: int
    n: int
    registers: Tuple[str, ...] = REGISTER_ORDER
    cap: int = field(default_factory=lambda: settings.simulation.qubit_cap)

    def __post_init__(self) -> None:
        if self.k < 1 or self.n < 1:
            raise GateError(f"k and n must be positive (k={self.k}, n={self.n})")
        if not self.registers or len(set(self.registers)) != len(self.registers):
            raise GateError("registers must be a non-empty list of distinct names")
        if self.total > self.cap:
            raise QubitCapExceeded(
                f"layout needs {self.total} qubits, cap is {self.cap} "
                f"(k={self.k}, n={self.n}, registers={len(self.registers)})"
            )

    @classmethod
    def full(cls, k: int, n: int) -> "RegisterLayout":
        return cls(k=k, n=n)

    @classmethod
    def compressed(cls, k: int, n: int) -> "RegisterLayout":
        return cls(k=k, n=n, registers=("r1", "r2"))

    @classmethod
    def reference(cls, k: int, n: int) -> "RegisterLayout":
        return cls(k=k, n=n, registers=("target",))

    @property
    def total(self) -> int:
        return self.k + self.n * len(self.registers)

    @property
    def dimension(self) -> int:
        return 1 << self.total

    @property
    def ancilla(self) -> range:
        return range(0, self.k)

    def register(self, name: str) -> range:
        """Qubit range of a named register"""
        try:
            slot = self.registers.index(name)
        except ValueError:
            raise GateError(f"layout has no register '{name}'") from None
        start = self.k + slot * self.n
        return range(start, start + self.n)

    @property
    def r1(self) -> range:
        return self.register("r1")

    @property
    def r2(self) -> range:
        return self.register("r2")

    @property
    def target(self) -> range:
        return self.register("target")

    @property
    def has_target(self) -> bool:
        return "target" in self.registers


@dataclass
class StateVector:
    """Normalized amplitudes over a register layout"""

    amplitudes: np.ndarray
    layout: RegisterLayout
    _scratch: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.layout.dimension,):
            raise GateError(
                f"expected {self.layout.dimension} amplitudes, got {self.amplitudes.shape}"
            )

    @property
    def num_qubits(self) -> int:
        return self.layout.total

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.layout)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def tensor(self) -> np.ndarray:
        """View of the amplitudes as an N-axis tensor; axis N-1-q is qubit q"""
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def scratch(self) -> np.ndarray:
        """Work buffer with the shape of the amplitudes, reused across gates"""
        if self._scratch is None or self._scratch.shape != self.amplitudes.shape:
            self._scratch = np.empty_like(self.amplitudes)
        return self._scratch


def _axis(num_qubits: int, qubit: int) -> int:
    return num_qubits - 1 - qubit


def _check_qubits(state: StateVector, qubits: Sequence[int]) -> None:
    if len(set(qubits)) != len(qubits):
        raise GateError(f"qubit indices collide: {list(qubits)}")
    for q in qubits:
        if not 0 <= q < state.num_qubits:
            raise GateError(f"qubit {q} out of range for {state.num_qubits} qubits")


def _contiguous_start(qubits: Sequence[int]) -> Optional[int]:
    """Lowest qubit if the list is an ascending run, else None"""
    if len(qubits) == 0:
        return None
    start = qubits[0]
    if list(qubits) == list(range(start, start + len(qubits))):
        return start
    return None


def _pair_view(
    state: StateVector, reg_a: Sequence[int], reg_b: Sequence[int]
) -> Optional[Tuple[np.ndarray, int]]:
    """(hi, B, mid, A, lo) view when both registers are ascending runs.

    Returns the view and the first qubit of the lower register (so ``lo`` holds
    2^start amplitudes), or None when a register is not contiguous.
    """
    start_a, start_b = _contiguous_start(reg_a), _contiguous_start(reg_b)
    if start_a is None or start_b is None:
        return None
    if start_a > start_b:
        start_a, start_b = start_b, start_a
    s = len(reg_a)
    d = 1 << s
    view = state.amplitudes.reshape(
        1 << (state.num_qubits - start_b - s), d, 1 << (start_b - start_a - s), d, 1 << start_a
    )
    return view, start_a


def is_unitary(matrix: np.ndarray, tol: Optional[float] = None) -> bool:
    tol = settings.simulation.unitarity_tol if tol is None else tol
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    residual = matrix.conj().T @ matrix - np.eye(matrix.shape[0])
    return bool(np.max(np.abs(residual), initial=0.0) < tol)


def init_state(layout: RegisterLayout) -> StateVector:
    """All-zeros computational basis state"""
    amplitudes = np.zeros(layout.dimension, dtype=np.complex128)
    amplitudes[0] = 1.0
    logger.debug("State initialized", qubits=layout.total, registers=list(layout.registers))
    return StateVector(amplitudes, layout)


def product_state(layout: RegisterLayout, factors: Mapping[str, np.ndarray]) -> StateVector:
    """Tensor product of per-register vectors; missing registers start in |0…0⟩.

    ``factors`` maps ``"ancilla"`` or a register name to its amplitude vector.
    """
    unknown = set(factors) - set(layout.registers) - {"ancilla"}
    if unknown:
        raise GateError(f"unknown registers: {sorted(unknown)}")

    def factor(name: str, width: int) -> np.ndarray:
        if name not in factors:
            vector = np.zeros(1 << width, dtype=np.complex128)
            vector[0] = 1.0
            return vector
        vector = np.asarray(factors[name], dtype=np.complex128)
        if vector.shape != (1 << width,):
            raise GateError(f"register '{name}' needs {1 << width} amplitudes, got {vector.shape}")
        return vector

    amplitudes = factor("ancilla", layout.k)
    for name in layout.registers:
        # higher registers occupy higher index bits
        amplitudes = np.kron(factor(name, layout.n), amplitudes)
    return StateVector(amplitudes, layout)


def apply_unitary(
    state: StateVector,
    matrix: np.ndarray,
    qubits: Sequence[int],
    check: bool = True,
) -> StateVector:
    """Apply a 2^s x 2^s matrix to the listed qubits, identity elsewhere"""
    qubits = list(qubits)
    _check_qubits(state, qubits)
    s = len(qubits)
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.shape != (1 << s, 1 << s):
        raise GateError(f"matrix shape {matrix.shape} does not act on {s} qubits")
    if check and not is_unitary(matrix):
        raise GateError("matrix is not unitary within tolerance")

    start = _contiguous_start(qubits)
    if start is not None:
        # register value is the middle index, so one batched matmul covers every stripe
        view = state.amplitudes.reshape(-1, 1 << s, 1 << start)
        out = state.scratch().reshape(view.shape)
        np.matmul(matrix, view, out=out)
        state.amplitudes, state._scratch = out.reshape(-1), state.amplitudes
        return state

    n = state.num_qubits
    # row-major matrix bits run from qubits[s-1] down to qubits[0]
    axes = [_axis(n, q) for q in reversed(qubits)]
    gate = matrix.reshape((2,) * (2 * s))
    out = np.tensordot(gate, state.tensor(), axes=(list(range(s, 2 * s)), axes))
    out = np.moveaxis(out, list(range(s)), axes)
    state.amplitudes[:] = out.reshape(-1)
    return state


def hadamard_layer(state: StateVector, qubits: Iterable[int]) -> StateVector:
    for q in qubits:
        apply_unitary(state, HADAMARD, [q], check=False)
    return state


def _pair_permutation(num_qubits: int, reg_a: Sequence[int], reg_b: Sequence[int]) -> list:
    perm = list(range(num_qubits))
    for qa, qb in zip(reg_a, reg_b):
        ia, ib = _axis(num_qubits, qa), _axis(num_qubits, qb)
        perm[ia], perm[ib] = perm[ib], perm[ia]
    return perm


def _check_pair(state: StateVector, reg_a: Sequence[int], reg_b: Sequence[int]) -> None:
    if len(reg_a) != len(reg_b):
        raise GateError(f"register length mismatch: {len(reg_a)} vs {len(reg_b)}")
    _check_qubits(state, list(reg_a) + list(reg_b))


def swap_registers(state: StateVector, reg_a: Sequence[int], reg_b: Sequence[int]) -> StateVector:
    """Exchange two registers qubit by qubit"""
    _check_pair(state, reg_a, reg_b)
    paired = _pair_view(state, reg_a, reg_b)
    if paired is not None:
        view, _ = paired
        out = state.scratch().reshape(view.shape)
        np.copyto(out, view.swapaxes(1, 3))
        state.amplitudes, state._scratch = out.reshape(-1), state.amplitudes
        return state

    perm = _pair_permutation(state.num_qubits, reg_a, reg_b)
    state.amplitudes[:] = state.tensor().transpose(perm).reshape(-1)
    return state


def conditional_swap(
    state: StateVector, control: int, reg_a: Sequence[int], reg_b: Sequence[int]
) -> StateVector:
    """Fredkin gates between two registers, all controlled by one qubit"""
    _check_pair(state, reg_a, reg_b)
    if control in reg_a or control in reg_b:
        raise GateError(f"control qubit {control} lies inside a swapped register")
    _check_qubits(state, [control])

    paired = _pair_view(state, reg_a, reg_b)
    if paired is not None and control < paired[1]:
        view, low = paired
        # split the low block around the control bit and keep its 1 half
        shape = view.shape[:4] + (1 << (low - control - 1), 2, 1 << control)
        branch = view.reshape(shape)[:, :, :, :, :, 1, :]
        out = state.scratch()[: branch.size].reshape(branch.shape)
        np.copyto(out, branch.swapaxes(1, 3))
        np.copyto(branch, out)
        return state

    n = state.num_qubits
    control_axis = _axis(n, control)
    index = [slice(None)] * n
    index[control_axis] = 1
    branch = state.tensor()[tuple(index)]

    def sub_axis(q: int) -> int:
        a = _axis(n, q)
        return a if a < control_axis else a - 1

    perm = list(range(n - 1))
    for qa, qb in zip(reg_a, reg_b):
        ia, ib = sub_axis(qa), sub_axis(qb)
        perm[ia], perm[ib] = perm[ib], perm[ia]
    branch[...] = branch.transpose(perm).copy()
    return state


def _fourier(state: StateVector, qubits: Sequence[int], inverse: bool) -> StateVector:
    qubits = list(qubits)
    if not qubits:
        raise GateError("Fourier transform needs at least one qubit")
    _check_qubits(state, qubits)
    n, s = state.num_qubits, len(qubits)
    transform = np.fft.fft if inverse else np.fft.ifft

    start = _contiguous_start(qubits)
    if start is not None:
        view = state.amplitudes.reshape(-1, 1 << s, 1 << start)
        view[...] = transform(view, axis=1, norm="ortho")
        return state

    axes = [_axis(n, q) for q in reversed(qubits)]
    rest = [a for a in range(n) if a not in axes]

    # last axis enumerates l with bit i on qubits[i]
    moved = state.tensor().transpose(rest + axes).reshape(-1, 1 << s)
    moved = transform(moved, axis=1, norm="ortho")
    restored = moved.reshape((2,) * n).transpose(np.argsort(rest + axes))
    state.amplitudes[:] = restored.reshape(-1)
    return state


def inverse_qft(state: StateVector, qubits: Sequence[int]) -> StateVector:
    """|l⟩ ↦ 2^{-s/2} Σ_m exp(-2πi l m / 2^s) |m⟩ on the listed qubits"""
    return _fourier(state, qubits, inverse=True)


def qft(state: StateVector, qubits: Sequence[int]) -> StateVector:
    """Adjoint of :func:`inverse_qft`"""
    return _fourier(state, qubits, inverse=False)


def ancilla_distribution(state: StateVector) -> np.ndarray:
    """Exact marginal distribution of the ancilla register"""
    k = state.layout.k
    probs = (np.abs(state.amplitudes.reshape(-1, 1 << k)) ** 2).sum(axis=0)
    return probs


def measure_ancilla(state: StateVector, rng: np.random.Generator) -> Tuple[int, StateVector]:
    """Sample the ancilla register and collapse the state onto the outcome"""
    probs = ancilla_distribution(state)
    total = probs.sum()
    if total < settings.simulation.degenerate_norm:
        raise MeasurementError("state has zero norm")
    m = int(rng.choice(probs.size, p=probs / total))

    block = state.amplitudes.reshape(-1, probs.size)
    norm = np.sqrt(probs[m])
    if norm < settings.simulation.degenerate_norm:
        raise MeasurementError(f"outcome {m} has degenerate norm {norm:.3e}")
    keep = block[:, m].copy()
    block[...] = 0.0
    block[:, m] = keep / norm
    return m, state


def shot_rng(seed: int, shot_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one shot"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(shot_index,)))


def basis_vector(dimension: int, index: int) -> np.ndarray:
    if not 0 <= index < dimension:
        raise GateError(f"basis index {index} out of range for dimension {dimension}")
    vector = np.zeros(dimension, dtype=np.complex128)
    vector[index] = 1.0
    return vector


def register_summary(layout: RegisterLayout) -> Dict[str, list]:
    """Qubit index ranges per register, for logging and result provenance"""
    summary = {"ancilla": [layout.ancilla.start, layout.ancilla.stop]}
    for name in layout.registers:
        r = layout.register(name)
        summary[name] = [r.start, r.stop]
    return summary

"""Sealed black-box oracle for an n-qubit unitary U.

Protocol code holds a :class:`BlackBoxUnitary` and may only call
:meth:`BlackBoxUnitary.apply_power`. The hidden matrix is reachable through
:func:`unseal`, which is reserved for the brute-force oracles and for
explicit debugging output.
"""

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from structlog import get_logger

from .config import settings
from .qsim import StateVector, apply_unitary, is_unitary

logger = get_logger()


class BlackBoxError(ValueError):
    """Raised for invalid oracle construction or mismatched registers"""


def _qubits_for(dimension: int) -> int:
    n = dimension.bit_length() - 1
    if dimension < 2 or (1 << n) != dimension:
        raise BlackBoxError(f"dimension {dimension} is not a power of two")
    if n > settings.simulation.dense_qubit_cap:
        raise BlackBoxError(
            f"{n} qubits exceeds the dense cap of {settings.simulation.dense_qubit_cap}"
        )
    return n


class BlackBoxUnitary:
    """An n-qubit unitary that can only be applied, possibly iterated"""

    __slots__ = ("__matrix", "__powers", "_lock", "_calls", "_n", "label")

    def __init__(self, matrix: np.ndarray, label: str = "unitary"):
        """Seal a matrix.

        Args:
            matrix: 2^n x 2^n unitary
            label: Human readable instance name used in logs and results
        """
        matrix = np.array(matrix, dtype=np.complex128)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise BlackBoxError(f"expected a square matrix, got shape {matrix.shape}")
        self._n = _qubits_for(matrix.shape[0])
        if not is_unitary(matrix):
            raise BlackBoxError("matrix is not unitary within tolerance")
        matrix.setflags(write=False)
        self.__matrix = matrix
        self.__powers: Dict[int, np.ndarray] = {1: matrix}
        self._lock = threading.Lock()
        self._calls = 0
        self.label = label

    @property
    def n(self) -> int:
        return self._n

    @property
    def calls(self) -> int:
        """Number of apply_power invocations so far"""
        return self._calls

    def reset_calls(self) -> None:
        with self._lock:
            self._calls = 0

    def __repr__(self) -> str:
        return f"BlackBoxUnitary(label={self.label!r}, n={self._n}, calls={self._calls})"

    def _power(self, p: int) -> np.ndarray:
        with self._lock:
            cached = self.__powers.get(p)
            if cached is None:
                cached = np.linalg.matrix_power(self.__matrix, p)
                cached.setflags(write=False)
                self.__powers[p] = cached
            return cached

    def apply_power(
        self,
        state: StateVector,
        p: int,
        register: Optional[Sequence[int]] = None,
    ) -> StateVector:
        """Apply U^p to one register of the state.

        Args:
            state: State to transform in place
            p: Non-negative iteration count
            register: Qubits the box is coupled to; defaults to the layout's
                target register H

        Returns:
            The transformed state
        """
        if p < 0:
            raise BlackBoxError(f"power must be non-negative, got {p}")
        if register is None:
            register = state.layout.target
        if len(register) != self._n:
            raise BlackBoxError(
                f"box acts on {self._n} qubits, register has {len(register)}"
            )
        with self._lock:
            self._calls += 1
        if p == 0:
            return state
        return apply_unitary(state, self._power(p), list(register), check=False)


def apply_power(
    box: BlackBoxUnitary,
    state: StateVector,
    p: int,
    register: Optional[Sequence[int]] = None,
) -> StateVector:
    return box.apply_power(state, p, register)


def unseal(box: BlackBoxUnitary) -> np.ndarray:
    """Copy of the hidden matrix. Oracle and debugging use only."""
    return np.array(box._BlackBoxUnitary__matrix)  # type: ignore[attr-defined]


@dataclass(frozen=True)
class HermitianGenerator:
    """Hermitian matrix H generating U = exp(-iHt)"""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.complex128)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise BlackBoxError(f"expected a square matrix, got shape {matrix.shape}")
        _qubits_for(matrix.shape[0])
        if np.max(np.abs(matrix - matrix.conj().T)) >= settings.simulation.unitarity_tol:
            raise BlackBoxError("generator is not Hermitian within tolerance")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n(self) -> int:
        return _qubits_for(self.matrix.shape[0])

    def eigenvalues(self) -> np.ndarray:
        return scipy.linalg.eigh(self.matrix, eigvals_only=True)

    def spread(self) -> float:
        values = self.eigenvalues()
        return float(values[-1] - values[0])

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "HermitianGenerator":
        """Draw from the Gaussian unitary ensemble"""
        d = 1 << n
        z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        return cls((z + z.conj().T) / 2)

    def with_spread(self, delta: float) -> "HermitianGenerator":
        """Affinely rescale so the spectral spread is exactly delta"""
        if delta <= 0:
            raise BlackBoxError(f"spread must be positive, got {delta}")
        values = self.eigenvalues()
        width = values[-1] - values[0]
        if width <= 0:
            raise BlackBoxError("generator has a single eigenvalue, cannot rescale")
        shifted = self.matrix - values[0] * np.eye(self.matrix.shape[0])
        return HermitianGenerator(shifted * (delta / width))

    @classmethod
    def from_text(cls, path: Union[str, Path]) -> "HermitianGenerator":
        return cls(load_matrix(path))


def load_matrix(path: Union[str, Path]) -> np.ndarray:
    """Read rows of whitespace separated "re im" pairs"""
    raw = np.loadtxt(path, dtype=float, ndmin=2)
    if raw.shape[1] % 2:
        raise BlackBoxError(f"{path}: rows must hold re/im pairs, got {raw.shape[1]} columns")
    return raw[:, 0::2] + 1j * raw[:, 1::2]


def haar_random(n: int, rng: np.random.Generator) -> BlackBoxUnitary:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix"""
    if n < 1:
        raise BlackBoxError(f"n must be at least 1, got {n}")
    d = 1 << n
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = scipy.linalg.qr(z)
    diagonal = np.diag(r)
    q = q * (diagonal / np.abs(diagonal))
    logger.debug("Haar-random box drawn", n=n)
    return BlackBoxUnitary(q, label=f"haar(n={n})")


def _haar_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    return unseal(haar_random(n, rng))


def from_spectrum(phases: Sequence[float], rng: np.random.Generator) -> BlackBoxUnitary:
    """U = V diag(exp(i phases)) V† with a Haar-random eigenbasis V"""
    phases = np.asarray(phases, dtype=float)
    d = phases.size
    n = _qubits_for(d)
    v = _haar_matrix(n, rng)
    u = (v * np.exp(1j * phases)) @ v.conj().T
    return BlackBoxUnitary(u, label=f"spectrum(n={n})")


def from_hamiltonian(gen: HermitianGenerator, t: float) -> BlackBoxUnitary:
    """U = exp(-iHt) via the eigendecomposition of H"""
    if t <= 0:
        raise BlackBoxError(f"evolution time must be positive, got {t}")
    values, vectors = scipy.linalg.eigh(gen.matrix)
    u = (vectors * np.exp(-1j * values * t)) @ vectors.conj().T
    logger.debug("Hamiltonian box built", n=gen.n, t=t)
    return BlackBoxUnitary(u, label=f"hamiltonian(n={gen.n}, t={t:.6g})")


def identity(n: int) -> BlackBoxUnitary:
    return BlackBoxUnitary(np.eye(1 << n, dtype=np.complex128), label=f"identity(n={n})")

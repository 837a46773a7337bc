"""Time-axis invariances: symmetric, involutive T x T transforms.

An invariance acts on the time axis of an error block, ``eps_C -> eps_C @ P``.
Permutation-type invariances are stored as an index array and applied as a
column gather, so ``P`` is never materialized for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import InvalidInvariance

_CUSTOM_TOL = 1e-10


class InvarianceKind(str, Enum):
    SYMMETRY = "symmetry"
    TIME_REVERSAL = "time-reversal"
    LOCAL_EXCHANGEABILITY = "local-exchangeability"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class Invariance:
    """A symmetric transform ``P`` with ``P @ P = I`` acting on the time axis.

    Use :func:`make_invariance` rather than constructing this directly.
    """

    kind: InvarianceKind
    T: int
    perm: np.ndarray | None = field(default=None, repr=False)
    custom_matrix: np.ndarray | None = field(default=None, repr=False)

    def apply(self, A: np.ndarray) -> np.ndarray:
        """Return ``A @ P`` where the last axis of ``A`` is time."""
        A = np.asarray(A, dtype=float)
        if A.shape[-1] != self.T:
            raise ValueError(
                f"last axis has length {A.shape[-1]}, invariance expects T={self.T}"
            )
        if self.kind is InvarianceKind.SYMMETRY:
            return -A
        if self.perm is not None:
            return A[..., self.perm]
        return A @ self.custom_matrix

    @property
    def matrix(self) -> np.ndarray:
        """Dense T x T matrix (built on demand)."""
        if self.kind is InvarianceKind.CUSTOM:
            return self.custom_matrix.copy()
        return self.apply(np.eye(self.T))

    @property
    def is_permutation(self) -> bool:
        return self.perm is not None

    def __repr__(self) -> str:
        return f"Invariance(kind={self.kind.value!r}, T={self.T})"


def _pair_swap(T: int) -> np.ndarray:
    perm = np.arange(T)
    stop = T - (T % 2)
    perm[0:stop:2] += 1
    perm[1:stop:2] -= 1
    return perm


def make_invariance(
    kind: str | InvarianceKind, T: int, custom_matrix: np.ndarray | None = None
) -> Invariance:
    """Build an invariance of the given kind for ``T`` time periods.

    Parameters
    ----------
    kind : {"symmetry", "time-reversal", "local-exchangeability", "custom"}
        ``symmetry`` is ``P = -I``; ``time-reversal`` reverses the time axis;
        ``local-exchangeability`` swaps the pairs (1,2), (3,4), ... and leaves
        the last period in place when ``T`` is odd.
    T : int
        Number of time periods.
    custom_matrix : array (T, T), optional
        Required iff ``kind == "custom"``; must be symmetric with ``P @ P = I``
        to within 1e-10.

    Raises
    ------
    InvalidInvariance
        If a custom matrix has the wrong shape or fails either check.
    """
    kind = InvarianceKind(kind)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if (custom_matrix is not None) != (kind is InvarianceKind.CUSTOM):
        raise ValueError("custom_matrix must be given exactly when kind='custom'")

    if kind is InvarianceKind.SYMMETRY:
        return Invariance(kind, T)
    if kind is InvarianceKind.TIME_REVERSAL:
        return Invariance(kind, T, perm=np.arange(T)[::-1].copy())
    if kind is InvarianceKind.LOCAL_EXCHANGEABILITY:
        return Invariance(kind, T, perm=_pair_swap(T))

    P = np.array(custom_matrix, dtype=float)
    if P.shape != (T, T):
        raise InvalidInvariance(f"custom matrix has shape {P.shape}, expected ({T}, {T})")
    if not np.all(np.isfinite(P)):
        raise InvalidInvariance("custom matrix contains non-finite entries")
    asym = np.max(np.abs(P - P.T))
    if asym > _CUSTOM_TOL:
        raise InvalidInvariance(f"custom matrix is not symmetric (max |P - P^T| = {asym:.3g})")
    invol = np.max(np.abs(P @ P - np.eye(T)))
    if invol > _CUSTOM_TOL:
        raise InvalidInvariance(f"custom matrix does not satisfy P @ P = I (max error {invol:.3g})")
    P.setflags(write=False)
    return Invariance(kind, T, custom_matrix=P)


def parse_invariance(name: str, T: int) -> Invariance:
    """Resolve a command-line name such as ``local-exchangeability`` or ``custom:P.csv``."""
    if name.startswith("custom:"):
        path = name.split(":", 1)[1]
        P = np.loadtxt(path, delimiter=",", ndmin=2)
        return make_invariance(InvarianceKind.CUSTOM, T, P)
    return make_invariance(name, T)

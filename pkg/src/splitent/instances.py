"""Random standard split triples on ``C^dA ⊗ C^dC ⊗ C^dB``.

``A`` acts on the first leg, ``B`` on the last; the middle leg purifies the
joint state so Ω is cyclic and separating for ``A ∨ B``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import MatrixAlgebra, leg_algebra, matrix_from_json, matrix_to_json, random_unitary


@dataclass(frozen=True, eq=False)
class SplitTriple:
    dims: tuple[int, int, int]
    omega: np.ndarray

    @cached_property
    def a(self) -> MatrixAlgebra:
        return leg_algebra(self.dims, 0)

    @cached_property
    def b(self) -> MatrixAlgebra:
        return leg_algebra(self.dims, 2)

    @property
    def leg_dims(self) -> tuple[int, int]:
        return self.dims[0], self.dims[2]

    def to_json(self) -> dict:
        return {"dims": list(self.dims), "omega": matrix_to_json(self.omega)}

    @classmethod
    def from_json(cls, data: dict) -> "SplitTriple":
        return cls(tuple(int(d) for d in data["dims"]), matrix_from_json(data["omega"]))


def schmidt_weights(k: int, rng: np.random.Generator, cond_cap: float = 1e3) -> np.ndarray:
    """Log-uniform weights with ``max/min ≤ cond_cap``, normalized."""
    w = np.exp(rng.uniform(0.0, np.log(cond_cap), size=k))
    return w / w.sum()


def random_split_triple(rng: np.random.Generator, dims=(2, 4, 2), cond_cap: float = 1e3) -> SplitTriple:
    """Ω with full Schmidt rank across (A, B) | C and reduced-density condition number ≤ ``cond_cap``."""
    da, dc, db = dims
    k = da * db
    if dc < k:
        raise ValueError("middle leg too small to purify the A ⊗ B marginal")
    w = schmidt_weights(k, rng, cond_cap)
    u = random_unitary(k, rng)
    v = random_unitary(dc, rng)[:, :k]
    m = (u * np.sqrt(w)) @ v.T  # rows (a, b), columns c
    omega = m.reshape(da, db, dc).transpose(0, 2, 1).ravel()
    return SplitTriple(tuple(dims), omega / np.linalg.norm(omega))


def product_triple(rng: np.random.Generator, dims=(2, 4, 2)) -> SplitTriple:
    """Product vector Ω_A ⊗ Ω_C ⊗ Ω_B; not standard for A ∨ B."""
    parts = []
    for d in dims:
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        parts.append(v / np.linalg.norm(v))
    omega = np.kron(np.kron(parts[0], parts[1]), parts[2])
    return SplitTriple(tuple(dims), omega)

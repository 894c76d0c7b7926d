"""Spectral decompositions H = sum_m E_m P_m and the two model Hamiltonians.

A :class:`SpectralDecomposition` stores distinct levels with their
multiplicities. Projectors are described either by index sets over the
computational basis (diagonal Hamiltonians) or by grouped eigenvector columns
(dense Hermitian input); dense projector matrices are only built on request.
All energies are in units where hbar = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Optional, Sequence

import numpy as np

# Largest dimension for which dense d x d objects are materialized.
MAX_DENSE_DIM = 1 << 13


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Distinct energies with orthogonal eigenprojectors.

    ``index_sets[m]`` lists the basis indices spanned by level ``m``. When it
    is ``None`` the levels occupy contiguous index ranges in energy order,
    which is how the compact spin and oscillator models are stored. ``basis``
    (optional, d x d unitary) maps those indices to computational-basis
    vectors for Hamiltonians that were not diagonal to begin with.
    """

    energies: np.ndarray
    multiplicities: np.ndarray
    energy_scale: float
    index_sets: Optional[tuple] = None
    basis: Optional[np.ndarray] = None
    label: str = field(default="")

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        g = np.asarray(self.multiplicities, dtype=np.int64)
        if e.ndim != 1 or e.size == 0:
            raise ValueError("empty spectrum")
        if g.shape != e.shape or np.any(g < 1):
            raise ValueError("multiplicities must be positive and match the energies")
        if np.any(np.diff(e) <= 0):
            raise ValueError("energies must be strictly increasing")
        if not self.energy_scale > 0:
            raise ValueError("energy_scale must be positive")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "multiplicities", g)
        if self.index_sets is not None:
            sets = tuple(np.asarray(s, dtype=np.intp) for s in self.index_sets)
            if [len(s) for s in sets] != g.tolist():
                raise ValueError("index sets do not match multiplicities")
            object.__setattr__(self, "index_sets", sets)

    @property
    def count(self) -> int:
        return int(self.energies.size)

    @property
    def dim(self) -> int:
        return int(sum(int(x) for x in self.multiplicities))

    @property
    def ground(self) -> float:
        return float(self.energies[0])

    @property
    def top(self) -> float:
        return float(self.energies[-1])

    @property
    def bandwidth(self) -> float:
        """E = E_max - E_g."""
        return self.top - self.ground

    @cached_property
    def level_of(self) -> np.ndarray:
        """Level index of every basis index (length d)."""
        self._check_dense()
        if self.index_sets is None:
            return np.repeat(np.arange(self.count, dtype=np.intp), self.multiplicities)
        out = np.empty(self.dim, dtype=np.intp)
        for m, idx in enumerate(self.index_sets):
            out[idx] = m
        return out

    def gaps(self) -> np.ndarray:
        """Matrix of differences E_m - E_n."""
        return self.energies[:, None] - self.energies[None, :]

    def same_blocks(self, other: "SpectralDecomposition") -> bool:
        if self is other:
            return True
        if self.count != other.count or self.dim != other.dim:
            return False
        if not (np.array_equal(self.energies, other.energies)
                and np.array_equal(self.multiplicities, other.multiplicities)):
            return False
        if (self.basis is None) != (other.basis is None):
            return False
        if self.basis is not None and not np.allclose(self.basis, other.basis):
            return False
        return np.array_equal(self.level_of, other.level_of)

    def _check_dense(self):
        if self.dim > MAX_DENSE_DIM:
            raise ValueError(f"dimension {self.dim} too large to materialize densely")

    def to_level_basis(self, matrix: np.ndarray) -> np.ndarray:
        if self.basis is None:
            return matrix
        return self.basis.conj().T @ matrix @ self.basis

    def from_level_basis(self, matrix: np.ndarray) -> np.ndarray:
        if self.basis is None:
            return matrix
        return self.basis @ matrix @ self.basis.conj().T

    def projector(self, m: int) -> np.ndarray:
        self._check_dense()
        diag = (self.level_of == m).astype(complex)
        if self.basis is None:
            return np.diag(diag)
        cols = self.basis[:, self.level_of == m]
        return cols @ cols.conj().T

    def projectors(self) -> list:
        return [self.projector(m) for m in range(self.count)]

    def hamiltonian(self) -> np.ndarray:
        self._check_dense()
        diag = self.energies[self.level_of].astype(complex)
        return self.from_level_basis(np.diag(diag))

    def populations(self, matrix: np.ndarray) -> np.ndarray:
        """tr(P_m X) for every level."""
        diag = np.real(np.diag(self.to_level_basis(matrix)))
        return np.bincount(self.level_of, weights=diag, minlength=self.count)

    def basis_vector(self, m: int, which: int = 0) -> np.ndarray:
        """A unit vector in the range of P_m (the ``which``-th spanning vector)."""
        self._check_dense()
        idx = np.flatnonzero(self.level_of == m)[which]
        if self.basis is None:
            v = np.zeros(self.dim, dtype=complex)
            v[idx] = 1.0
            return v
        return self.basis[:, idx].astype(complex)

    def unitary(self, t: float) -> np.ndarray:
        """exp(-i t H) as a dense matrix."""
        self._check_dense()
        diag = np.exp(-1j * t * self.energies[self.level_of])
        return self.from_level_basis(np.diag(diag))


def _default_scale(levels: np.ndarray) -> float:
    if levels.size < 2:
        return 1.0
    return float(np.min(np.diff(levels)))


def _group_sorted(values: np.ndarray, deg_tol: float) -> list:
    groups = [[0]]
    for i in range(1, values.size):
        prev = values[groups[-1][-1]]
        if abs(values[i] - prev) <= deg_tol * max(1.0, abs(values[i])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def from_diagonal(energies: Sequence[float], deg_tol: float = 1e-9,
                  energy_scale: Optional[float] = None) -> SpectralDecomposition:
    """Decomposition of diag(energies); nearly equal entries become one level."""
    e = np.asarray(energies, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("empty spectrum")
    if deg_tol < 0:
        raise ValueError("deg_tol must be non-negative")
    order = np.argsort(e, kind="stable")
    groups = _group_sorted(e[order], deg_tol)
    levels = np.array([e[order[g]].mean() for g in groups])
    sets = tuple(np.sort(order[g]) for g in groups)
    mult = np.array([len(g) for g in groups])
    scale = energy_scale if energy_scale is not None else _default_scale(levels)
    return SpectralDecomposition(levels, mult, scale, index_sets=sets, label="diagonal")


def from_hermitian(matrix, deg_tol: float = 1e-9,
                   energy_scale: Optional[float] = None) -> SpectralDecomposition:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("Hamiltonian must be a square matrix")
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    groups = _group_sorted(w, deg_tol)
    levels = np.array([w[g].mean() for g in groups])
    mult = np.array([len(g) for g in groups])
    scale = energy_scale if energy_scale is not None else _default_scale(levels)
    return SpectralDecomposition(levels, mult, scale, basis=v, label="dense")


def spin_ensemble(n_spins: int, omega0: float = 1.0) -> SpectralDecomposition:
    """N non-interacting spin-1/2 particles, H = omega0 * sum_i S_iz.

    Levels (p - N/2) * omega0 with degeneracy binom(N, p); d = 2**N and the
    energy scale is omega0.
    """
    if n_spins < 1:
        raise ValueError("n_spins must be >= 1")
    if not omega0 > 0:
        raise ValueError("omega0 must be positive")
    p = np.arange(n_spins + 1)
    levels = (p - n_spins / 2.0) * omega0
    mult = np.array([comb(n_spins, int(k)) for k in p], dtype=object)
    return SpectralDecomposition(levels, mult.astype(np.int64), float(omega0),
                                 label=f"spin(N={n_spins})")


def oscillator_modes(n_modes: int, omega0: float, nu_max: int) -> SpectralDecomposition:
    """M identical oscillators truncated at total quantum number nu_max.

    Level nu has energy (nu + M/2) * omega0 and degeneracy binom(nu + M - 1, M - 1).
    """
    if n_modes < 1 or nu_max < 1:
        raise ValueError("n_modes and nu_max must be >= 1")
    if not omega0 > 0:
        raise ValueError("omega0 must be positive")
    nu = np.arange(nu_max + 1)
    levels = (nu + n_modes / 2.0) * omega0
    mult = np.array([comb(int(k) + n_modes - 1, n_modes - 1) for k in nu], dtype=np.int64)
    return SpectralDecomposition(levels, mult, float(omega0),
                                 label=f"oscillator(M={n_modes},nu_max={nu_max})")


def block_structure(multiplicities: Sequence[int]) -> SpectralDecomposition:
    """Block layout without physical energies (levels labelled 0, 1, ...).

    Used for reduced maps, whose blocks are interaction projectors rather than
    Hamiltonian eigenspaces.
    """
    g = np.asarray(multiplicities, dtype=np.int64)
    return SpectralDecomposition(np.arange(g.size, dtype=float), g, 1.0, label="blocks")


def check_projectors(spec: SpectralDecomposition) -> tuple:
    """Frobenius errors of completeness and of P_m P_n = delta_mn P_m."""
    ps = spec.projectors()
    eye = np.eye(spec.dim)
    completeness = np.linalg.norm(sum(ps) - eye)
    ortho = 0.0
    for a, pa in enumerate(ps):
        for b, pb in enumerate(ps):
            target = pa if a == b else 0.0
            ortho = max(ortho, np.linalg.norm(pa @ pb - target))
    return float(completeness), float(ortho)

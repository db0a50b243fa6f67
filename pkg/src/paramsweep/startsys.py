"""Total-degree start systems and homotopy construction.

The start system g_i(z) = z_i^{d_i} - 1 has prod(d_i) trivially enumerable
solutions (tuples of roots of unity).  A homotopy blends a target and a
source system,

    H(z, t) = target(z) * (1 - t) + source(z) * t * gamma,

so H(., 1) = gamma * source and H(., 0) = target.  For parameter-kind
homotopies (both endpoints instantiations of the same family) gamma is
fixed at exactly 1; the randomness of the start parameter point already
provides genericity.

Internally both endpoint systems are laid out on one shared term
structure, so evaluating H, its z-Jacobian, or dH/dt at any t costs a
single coefficient blend plus one sparse evaluation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from paramsweep.poly import InstantiatedSystem, Term, TermStructure

__all__ = [
    "StartSystem",
    "HomotopyKind",
    "Homotopy",
    "total_degree_start",
    "random_gamma",
    "build_homotopy",
]


@dataclass(frozen=True)
class StartSystem:
    """g_i(z) = z_i^{d_i} - 1 for the given degree vector."""

    degrees: tuple[int, ...]

    def __post_init__(self):
        if any(d < 1 for d in self.degrees):
            raise ValueError(f"start system needs degrees >= 1, got {self.degrees}")

    @property
    def n_vars(self) -> int:
        return len(self.degrees)

    @property
    def n_solutions(self) -> int:
        out = 1
        for d in self.degrees:
            out *= d
        return out

    def solutions(self) -> list[np.ndarray]:
        """All root-of-unity tuples, in lexicographic index order."""
        roots = [
            np.exp(2j * np.pi * np.arange(d) / d) for d in self.degrees
        ]
        return [
            np.array(combo, dtype=complex)
            for combo in itertools.product(*roots)
        ]

    def as_instantiated(self) -> InstantiatedSystem:
        n = self.n_vars
        funcs = []
        for i, d in enumerate(self.degrees):
            mono = [0] * n
            mono[i] = d
            funcs.append(
                (Term(-1.0 + 0j, (0,) * n, ()), Term(1.0 + 0j, tuple(mono), ()))
            )
        st = TermStructure(n, 0, tuple(funcs))
        return InstantiatedSystem(st, st.base_coeffs.copy())


def total_degree_start(degrees) -> StartSystem:
    """Start system for the given per-function variable degrees."""
    return StartSystem(tuple(int(d) for d in degrees))


def random_gamma(rng: np.random.Generator) -> complex:
    """Uniform point on the complex unit circle."""
    theta = rng.uniform(0.0, 2.0 * np.pi)
    return complex(np.cos(theta), np.sin(theta))


class HomotopyKind(Enum):
    TOTAL_DEGREE = "total_degree"
    PARAMETER = "parameter"


class Homotopy:
    """H(z, t) = target(z)*(1-t) + source(z)*t*gamma on a shared structure.

    Immutable after construction; safe to share across workers.
    """

    def __init__(
        self,
        kind: HomotopyKind,
        target: InstantiatedSystem,
        source: InstantiatedSystem,
        gamma: complex,
    ):
        if target.n_vars != source.n_vars:
            raise ValueError(
                f"dimension mismatch: target has {target.n_vars} variables, "
                f"source has {source.n_vars}"
            )
        self.kind = kind
        self.gamma = complex(gamma)
        self.target = target
        self.source = source
        if target.structure is source.structure:
            self._struct = target.structure
            c_a = target.coeffs
            c_b = source.coeffs
        else:
            self._struct, idx_a, idx_b = _union_structure(
                target.structure, source.structure
            )
            c_a = np.zeros(self._struct.n_terms, dtype=complex)
            c_b = np.zeros(self._struct.n_terms, dtype=complex)
            c_a[idx_a] = target.coeffs
            c_b[idx_b] = source.coeffs
        self._c_target = c_a
        # c(t) = c_target + t * c_dt reproduces (1-t)*target + t*gamma*source
        self._c_dt = self.gamma * c_b - c_a

    @property
    def n_vars(self) -> int:
        return self._struct.n_vars

    def coeffs_at(self, t: float) -> np.ndarray:
        return self._c_target + t * self._c_dt

    def at(self, t: float) -> InstantiatedSystem:
        """The frozen system H(., t), usable for Newton correction."""
        return InstantiatedSystem(self._struct, self.coeffs_at(t))

    def evaluate(self, z: np.ndarray, t: float) -> np.ndarray:
        return self._struct.evaluate(self.coeffs_at(t), z)

    def jacobian(self, z: np.ndarray, t: float) -> np.ndarray:
        return self._struct.jacobian(self.coeffs_at(t), z)

    def dt(self, z: np.ndarray, t: float) -> np.ndarray:
        """dH/dt; independent of t for this blend."""
        return self._struct.evaluate(self._c_dt, z)

    def tangent_data(self, z: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(dH/dt, J_z) at (z, t) in a single fused evaluation."""
        return self._struct.eval_and_jac(self._c_dt, self.coeffs_at(t), z)


def _union_structure(
    st_a: TermStructure, st_b: TermStructure
) -> tuple[TermStructure, np.ndarray, np.ndarray]:
    """Interleave two structures function by function.

    Returns the combined structure plus index arrays mapping each input
    term to its slot, so endpoint coefficient vectors can be scattered in.
    """
    if st_a.n_vars != st_b.n_vars:
        raise ValueError("cannot combine structures of different dimension")
    n = st_a.n_vars
    funcs = []
    idx_a, idx_b = [], []
    pos = 0
    for i in range(n):
        terms = []
        for st, idx in ((st_a, idx_a), (st_b, idx_b)):
            lo, hi = st.fn_offsets[i], st.fn_offsets[i + 1]
            for k in range(lo, hi):
                idx.append(pos)
                terms.append(Term(0j, tuple(int(e) for e in st.var_exps[k]), ()))
                pos += 1
        funcs.append(tuple(terms))
    union = TermStructure(n, 0, tuple(funcs))
    return union, np.array(idx_a, dtype=np.intp), np.array(idx_b, dtype=np.intp)


def build_homotopy(
    target: InstantiatedSystem,
    source: InstantiatedSystem | StartSystem,
    gamma: complex = 1.0,
) -> Homotopy:
    """Blend target and source; kind follows the source's type.

    A StartSystem source gives a total-degree homotopy (any unit gamma);
    an instantiated source gives a parameter homotopy, where gamma must
    be exactly 1.
    """
    if isinstance(source, StartSystem):
        return Homotopy(HomotopyKind.TOTAL_DEGREE, target, source.as_instantiated(), gamma)
    if gamma != 1.0:
        raise ValueError("parameter homotopies require gamma = 1")
    return Homotopy(HomotopyKind.PARAMETER, target, source, 1.0)

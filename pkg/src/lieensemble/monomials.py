"""Monomials prod_s rho_s^{k_s} in a set of parametrization functions."""

from __future__ import annotations

from dataclasses import dataclass
import itertools

import numpy as np


def exponents_of_degree(r: int, d: int) -> list[tuple[int, ...]]:
    """All exponent tuples of length r summing to d, in descending lex order."""
    out = [t for t in itertools.product(range(d + 1), repeat=r) if sum(t) == d]
    return sorted(out, reverse=True)


def graded_exponents(r: int, max_degree: int, min_degree: int = 0) -> list[tuple[int, ...]]:
    """Graded-lexicographic list of exponents with min_degree <= degree <= max_degree."""
    out = []
    for d in range(min_degree, max_degree + 1):
        out.extend(exponents_of_degree(r, d))
    return out


@dataclass(frozen=True)
class MonomialDictionary:
    exponents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        exps = tuple(tuple(int(k) for k in e) for e in self.exponents)
        if len(set(exps)) != len(exps):
            raise ValueError("duplicate monomials")
        if exps and len({len(e) for e in exps}) != 1:
            raise ValueError("exponent tuples must share one length")
        if any(k < 0 for e in exps for k in e):
            raise ValueError("negative exponent")
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def graded(cls, r: int, max_degree: int, min_degree: int = 0) -> "MonomialDictionary":
        return cls(tuple(graded_exponents(r, max_degree, min_degree)))

    def __len__(self):
        return len(self.exponents)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(sum(e) for e in self.exponents)

    def shifted(self, s: int) -> "MonomialDictionary":
        """Multiply every monomial by rho_s."""
        return MonomialDictionary(tuple(e[:s] + (e[s] + 1,) + e[s + 1:] for e in self.exponents))

    def evaluate(self, rho_values: np.ndarray) -> np.ndarray:
        """Monomial values, shape (P, Q), from rho values of shape (r, Q)."""
        rho_values = np.asarray(rho_values, dtype=float)
        out = np.ones((len(self.exponents), rho_values.shape[1]))
        for p, e in enumerate(self.exponents):
            for s, k in enumerate(e):
                if k:
                    out[p] *= rho_values[s] ** k
        return out


def format_exponents(e) -> str:
    return "(" + " ".join(str(k) for k in e) + ")"

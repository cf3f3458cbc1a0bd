"""Closed whitelist of scalar functions of sigma used in scenario files.

Accepted forms: a numeric constant, ``sigma``, ``sigma^k`` (integer k, may be
negative), ``c*<form>``, ``sin(sigma)``, ``cos(sigma)`` and ``exp(sigma)``.
Nothing is ever passed to ``eval``.
"""

from __future__ import annotations

from dataclasses import dataclass
import re

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_POWER = re.compile(r"^sigma\s*(?:(?:\^|\*\*)\s*\(?\s*([+-]?\d+)\s*\)?)?$")
_FUNC = re.compile(r"^(sin|cos|exp)\(\s*sigma\s*\)$")
_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_SCALED = re.compile(rf"^({_NUM})\s*\*\s*(.+)$")


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class SigmaFunction:
    """A vectorized real function of sigma built from the whitelist."""

    text: str
    coeff: float
    kind: str  # "const", "power" or a function name
    power: int = 0

    def __call__(self, sigma):
        s = np.asarray(sigma, dtype=float)
        if self.kind == "const":
            return np.full_like(s, self.coeff)
        if self.kind == "power":
            return self.coeff * s**self.power if self.power >= 0 else self.coeff / s ** (-self.power)
        return self.coeff * _FUNCS[self.kind](s)

    @property
    def needs_positive(self) -> bool:
        return self.kind == "power" and self.power < 0


def parse_expression(text: str) -> SigmaFunction:
    raw = str(text).strip()
    body = raw.replace(" ", "")
    coeff = 1.0
    m = _SCALED.match(body)
    if m:
        coeff, body = float(m.group(1)), m.group(2)
    elif body.startswith("-") and not re.fullmatch(_NUM, body):
        coeff, body = -1.0, body[1:]
    if re.fullmatch(_NUM, body):
        return SigmaFunction(raw, coeff * float(body), "const")
    m = _POWER.match(body)
    if m:
        return SigmaFunction(raw, coeff, "power", int(m.group(1) or 1))
    m = _FUNC.match(body)
    if m:
        return SigmaFunction(raw, coeff, m.group(1))
    raise ExpressionError(f"expression {raw!r} is not in the whitelist")

"""Plain-text LP instance format.

A document is a sequence of fields:

    levlp 1
    n <int>
    d <int>
    A            # followed by n lines of d decimal floats
    ...
    b            # one line of d floats (or d lines)
    c            # one line of n floats (or n lines)
    R <float>    # optional
    L <float>    # optional

Floats are written with repr(), which round-trips binary64 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .driver import Instance


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def write_instance(inst: Instance, path) -> None:
    lines = ["levlp 1", f"n {inst.A.shape[0]}", f"d {inst.A.shape[1]}", "A"]
    for row in inst.A:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append("b")
    lines.append(" ".join(repr(float(v)) for v in inst.b))
    lines.append("c")
    lines.append(" ".join(repr(float(v)) for v in inst.c))
    if inst.R is not None:
        lines.append(f"R {repr(float(inst.R))}")
    if inst.L is not None:
        lines.append(f"L {repr(float(inst.L))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path) -> Instance:
    with open(path) as fh:
        raw = fh.read().splitlines()
    tokens = [(i + 1, line.strip()) for i, line in enumerate(raw)
              if line.strip() and not line.strip().startswith("#")]
    pos = 0

    def need(what: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1][0] if tokens else 0
            raise ParseError(last, f"unexpected end of file, wanted {what}")
        out = tokens[pos]
        pos += 1
        return out

    ln, header = need("header")
    if header.split() != ["levlp", "1"]:
        raise ParseError(ln, f"bad header {header!r}, expected 'levlp 1'")

    def scalar(name: str, conv):
        ln, line = need(f"field {name}")
        parts = line.split()
        if len(parts) != 2 or parts[0] != name:
            raise ParseError(ln, f"expected '{name} <value>', got {line!r}")
        try:
            return conv(parts[1])
        except ValueError:
            raise ParseError(ln, f"bad {name} value {parts[1]!r}") from None

    n = scalar("n", int)
    d = scalar("d", int)
    if n < 1 or d < 1:
        raise ParseError(tokens[pos - 1][0], "n and d must be positive")

    def floats(count: int, what: str) -> np.ndarray:
        vals: list[float] = []
        start_ln = tokens[pos][0] if pos < len(tokens) else 0
        while len(vals) < count:
            ln, line = need(f"{what} values")
            for tok in line.split():
                try:
                    vals.append(float(tok))
                except ValueError:
                    raise ParseError(ln, f"bad number {tok!r} in {what}") from None
            if len(vals) > count:
                raise ParseError(ln, f"too many values in {what} "
                                     f"({len(vals)} > {count})")
        return np.array(vals)

    def section(name: str):
        ln, line = need(f"section {name}")
        if line != name:
            raise ParseError(ln, f"expected section {name!r}, got {line!r}")

    section("A")
    A = floats(n * d, "A").reshape(n, d)
    section("b")
    b = floats(d, "b")
    section("c")
    c = floats(n, "c")
    R = L = None
    while pos < len(tokens):
        ln, line = need("optional field")
        parts = line.split()
        if len(parts) == 2 and parts[0] in ("R", "L"):
            try:
                val = float(parts[1])
            except ValueError:
                raise ParseError(ln, f"bad {parts[0]} value {parts[1]!r}") from None
            if parts[0] == "R":
                R = val
            else:
                L = val
        else:
            raise ParseError(ln, f"unexpected content {line!r}")
    return Instance(A, b, c, R=R, L=L)

"""Signed two's-complement Qn.q fixed-point arithmetic.

Convention: Qn.q has n integer bits INCLUDING the sign bit and q fraction
bits, total width w = n + q, value = raw * 2**-q with raw a signed
w-bit integer.  Addition and subtraction are plain integer operations on
the raw payloads.  Multiplication forms the full 2w-bit product, drops the
low q fraction bits (arithmetic shift, i.e. truncation toward -inf) and
then the high n bits per the overflow policy.

Overflow handling is WRAP by default (high bits discarded, like the
datapath of a fixed-width hardware adder); SATURATE clamps to the format
range and is opt-in.

The raw helpers (`wrap_raw`, `mul_raw`, ...) accept plain ints or numpy
integer arrays and apply the same semantics elementwise; the vectorized
core stepping is built on them.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OverflowPolicy",
    "QFormat",
    "QWord",
    "encode",
    "add",
    "sub",
    "mul",
    "neg",
    "wrap_raw",
    "saturate_raw",
    "fit_raw",
    "add_raw",
    "sub_raw",
    "mul_raw",
    "encode_raw",
    "raw_dtype",
]


class OverflowPolicy(enum.Enum):
    WRAP = "wrap"
    SATURATE = "saturate"

    @classmethod
    def from_name(cls, name: str) -> "OverflowPolicy":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown overflow policy {name!r} (expected 'wrap' or 'saturate')")


WRAP = OverflowPolicy.WRAP
SATURATE = OverflowPolicy.SATURATE

_LITERAL_RE = re.compile(r"^Q(\d+)\.(\d+):(0[xX][0-9a-fA-F]+)$")
_FORMAT_RE = re.compile(r"^Q(\d+)\.(\d+)$")


@dataclass(frozen=True)
class QFormat:
    """Qn.q format descriptor: n integer bits (incl. sign), q fraction bits."""

    n: int
    q: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"Q{self.n}.{self.q}: need n >= 2 (sign plus at least one integer bit)")
        if self.q < 0:
            raise ValueError(f"Q{self.n}.{self.q}: need q >= 0")
        if self.n + self.q > 64:
            raise ValueError(f"Q{self.n}.{self.q}: total width {self.n + self.q} exceeds 64")

    @property
    def width(self) -> int:
        return self.n + self.q

    @property
    def quantum(self) -> float:
        """Value of one LSB, 2**-q."""
        return 2.0 ** -self.q

    @property
    def min_raw(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.min_raw * self.quantum

    @property
    def max_value(self) -> float:
        return self.max_raw * self.quantum

    def __str__(self) -> str:
        return f"Q{self.n}.{self.q}"

    @classmethod
    def parse(cls, text: str) -> "QFormat":
        m = _FORMAT_RE.match(text.strip())
        if not m:
            raise ValueError(f"bad Q-format literal {text!r} (expected 'Qn.q')")
        return cls(int(m.group(1)), int(m.group(2)))


# Formats that come up throughout the tests and demos.
Q3_1 = QFormat(3, 1)
Q5_3 = QFormat(5, 3)
Q9_7 = QFormat(9, 7)
Q17_15 = QFormat(17, 15)


@dataclass(frozen=True)
class QWord:
    """A value in a QFormat: raw signed integer payload, value = raw * 2**-q."""

    fmt: QFormat
    raw: int

    def __post_init__(self):
        raw = int(self.raw)
        object.__setattr__(self, "raw", raw)
        if not (self.fmt.min_raw <= raw <= self.fmt.max_raw):
            raise ValueError(f"raw {raw} does not fit in {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw * self.fmt.quantum

    def to_literal(self) -> str:
        """Hex literal 'Qn.q:0x..' over the unsigned view of the payload."""
        u = self.raw & ((1 << self.fmt.width) - 1)
        digits = (self.fmt.width + 3) // 4
        return f"{self.fmt}:0x{u:0{digits}X}"

    @classmethod
    def from_literal(cls, text: str) -> "QWord":
        m = _LITERAL_RE.match(text.strip())
        if not m:
            raise ValueError(f"bad fixed-point literal {text!r} (expected 'Qn.q:0xHH')")
        fmt = QFormat(int(m.group(1)), int(m.group(2)))
        u = int(m.group(3), 16)
        if u >> fmt.width:
            raise ValueError(f"literal {text!r}: payload wider than {fmt.width} bits")
        return cls(fmt, wrap_raw(u, fmt))

    def __repr__(self) -> str:
        return f"QWord({self.fmt}, {self.value})"


def raw_dtype(fmt: QFormat):
    """numpy dtype able to hold raw payloads AND full 2w-bit products."""
    return np.int64 if fmt.width <= 32 else object


# ---------------------------------------------------------------------------
# Raw-payload helpers; work on ints and numpy arrays alike.

def wrap_raw(x, fmt: QFormat):
    """Keep the low w bits of x, reinterpreted as signed (hardware bit-discard)."""
    half = 1 << (fmt.width - 1)
    mask = (1 << fmt.width) - 1
    return ((x + half) & mask) - half


def saturate_raw(x, fmt: QFormat):
    if isinstance(x, np.ndarray):
        return np.clip(x, fmt.min_raw, fmt.max_raw)
    return max(fmt.min_raw, min(fmt.max_raw, x))


def fit_raw(x, fmt: QFormat, policy: OverflowPolicy):
    return wrap_raw(x, fmt) if policy is WRAP else saturate_raw(x, fmt)


def add_raw(a, b, fmt: QFormat, policy: OverflowPolicy = WRAP):
    return fit_raw(a + b, fmt, policy)


def sub_raw(a, b, fmt: QFormat, policy: OverflowPolicy = WRAP):
    return fit_raw(a - b, fmt, policy)


def mul_raw(a, b, fmt: QFormat, policy: OverflowPolicy = WRAP):
    """Full-width product, then drop q fraction bits (floor) and n high bits."""
    return fit_raw((a * b) >> fmt.q, fmt, policy)


def encode_raw(value: float, fmt: QFormat, policy: OverflowPolicy = WRAP) -> int:
    """Quantize a real to a raw payload: truncate toward -inf, then fit."""
    return int(fit_raw(math.floor(value * (1 << fmt.q)), fmt, policy))


# ---------------------------------------------------------------------------
# Scalar QWord operations.

def encode(value: float, fmt: QFormat, policy: OverflowPolicy = WRAP) -> QWord:
    return QWord(fmt, encode_raw(value, fmt, policy))


def _check_formats(a: QWord, b: QWord):
    if a.fmt != b.fmt:
        raise ValueError(f"format mismatch: {a.fmt} vs {b.fmt}")


def add(a: QWord, b: QWord, policy: OverflowPolicy = WRAP) -> QWord:
    _check_formats(a, b)
    return QWord(a.fmt, int(add_raw(a.raw, b.raw, a.fmt, policy)))


def sub(a: QWord, b: QWord, policy: OverflowPolicy = WRAP) -> QWord:
    _check_formats(a, b)
    return QWord(a.fmt, int(sub_raw(a.raw, b.raw, a.fmt, policy)))


def mul(a: QWord, b: QWord, policy: OverflowPolicy = WRAP) -> QWord:
    _check_formats(a, b)
    return QWord(a.fmt, int(mul_raw(a.raw, b.raw, a.fmt, policy)))


def neg(a: QWord, policy: OverflowPolicy = WRAP) -> QWord:
    # -min_raw does not fit; wrap maps it back onto itself like the hardware.
    return QWord(a.fmt, int(fit_raw(-a.raw, a.fmt, policy)))

"""Parsing of physical quantities written with explicit units ("40km", "125us")."""

from __future__ import annotations

import re
from fractions import Fraction

_NUMBER = re.compile(r"^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z/]*)\s*$")

_DURATION = {"ns": 1, "us": 10**3, "ms": 10**6, "s": 10**9, "min": 60 * 10**9}
_LENGTH = {"m": 1, "km": 1000}
_RATE = {
    "b/s": 1, "bps": 1, "bit/s": 1,
    "kb/s": 10**3, "kbps": 10**3, "kbit/s": 10**3,
    "mb/s": 10**6, "mbps": 10**6, "mbit/s": 10**6,
    "gb/s": 10**9, "gbps": 10**9, "gbit/s": 10**9,
}
_SIZE = {"b": 1, "bytes": 1}
_SPEED = {"m/s": Fraction(1), "km/h": Fraction(1000, 3600)}
_FREQUENCY = {"hz": 1, "khz": 10**3, "mhz": 10**6, "ghz": 10**9}
_DB = {"db": 1}
_ATTENUATION = {"db/km": 1}


class UnitError(ValueError):
    pass


def _split(text: str, table: dict, what: str, case_sensitive: bool = False) -> Fraction:
    m = _NUMBER.match(str(text))
    if not m:
        raise UnitError(f"cannot parse {what} {text!r}")
    number, unit = m.groups()
    if not unit:
        raise UnitError(f"{what} {text!r} needs an explicit unit ({', '.join(table)})")
    key = unit if case_sensitive else unit.lower()
    if key not in table:
        raise UnitError(f"unknown {what} unit {unit!r} in {text!r}")
    return Fraction(number) * table[key]


def parse_duration(text: str) -> int:
    """Duration in integer nanoseconds; sub-nanosecond remainders are rejected."""
    value = _split(text, _DURATION, "duration", case_sensitive=True)
    if value.denominator != 1:
        raise UnitError(f"duration {text!r} is not a whole number of nanoseconds")
    return int(value)


def parse_length(text: str) -> float:
    return float(_split(text, _LENGTH, "length", case_sensitive=True))


def parse_rate(text: str) -> int:
    value = _split(text, _RATE, "rate")
    if value.denominator != 1:
        raise UnitError(f"rate {text!r} is not a whole number of bit/s")
    return int(value)


def parse_size(text: str) -> int:
    value = _split(text, _SIZE, "size")
    if value.denominator != 1:
        raise UnitError(f"size {text!r} is not a whole number of bytes")
    return int(value)


def parse_speed(text: str) -> float:
    return float(_split(text, _SPEED, "speed"))


def parse_frequency(text: str) -> float:
    return float(_split(text, _FREQUENCY, "frequency"))


def parse_db(text: str) -> float:
    return float(_split(text, _DB, "level"))


def parse_attenuation(text: str) -> float:
    return float(_split(text, _ATTENUATION, "attenuation"))


def format_duration(ns: int) -> str:
    for unit, scale in (("s", 10**9), ("ms", 10**6), ("us", 10**3)):
        if ns % scale == 0 and ns != 0:
            return f"{ns // scale}{unit}"
    return f"{ns}ns"

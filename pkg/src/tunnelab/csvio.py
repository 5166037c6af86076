"""CSV, config, and manifest serialization.

All numbers serialize as decimal strings with an explicit exponent so that
high-precision values survive the round trip (e.g. "3.30e+461").  Emission is
deterministic: identical inputs produce identical bytes.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import mpmath as mp
import numpy as np

from .errors import ConfigError


def format_scalar(v, digits: int = 17) -> str:
    """Decimal string with explicit exponent; exact for the stored precision."""
    if isinstance(v, (mp.mpf, mp.mpc)):
        if isinstance(v, mp.mpc):
            raise TypeError("complex values serialize as explicit (re, im) pairs")
        # min_fixed > max_fixed forces scientific notation for magnitudes != 1
        s = mp.nstr(v, digits, min_fixed=1, max_fixed=0)
        if "e" not in s:
            s += "e+0"
        return s
    return f"{float(v):.17e}"


def parse_scalar(s: str):
    return mp.mpf(s.strip())


def _row_parts(value, digits):
    if isinstance(value, (mp.mpf, mp.mpc)):
        c = mp.mpc(value)
        re, im = c.real, c.imag
        with mp.extraprec(10):
            a2 = re * re + im * im
        return format_scalar(re, digits), format_scalar(im, digits), format_scalar(a2, digits)
    c = complex(value)
    return (
        format_scalar(c.real, digits),
        format_scalar(c.imag, digits),
        format_scalar(abs(c) ** 2, digits),
    )


def write_wave_csv(path, wave, digits: int = 17):
    """Columns x, re, im, abs2."""
    lines = ["x,re,im,abs2"]
    for x, v in zip(wave.xs, wave.values):
        re, im, a2 = _row_parts(v, digits)
        lines.append(f"{format_scalar(float(x))},{re},{im},{a2}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_wave_csv(path):
    """Returns (xs, values) with mpf/mpc entries preserving the file precision."""
    lines = Path(path).read_text().strip().splitlines()
    if lines[0] != "x,re,im,abs2":
        raise ConfigError(f"unexpected wave CSV header in {path}")
    xs, vals = [], []
    for line in lines[1:]:
        x, re, im, _ = line.split(",")
        xs.append(float(x))
        vals.append(mp.mpc(mp.mpf(re), mp.mpf(im)))
    return np.array(xs), np.array(vals, dtype=object)


def write_spectrum_csv(path, spectrum, digits: int = 17):
    """Columns p, re, im, abs2."""
    lines = ["p,re,im,abs2"]
    for p, a in zip(spectrum.ps, spectrum.amps):
        re, im, a2 = _row_parts(a, digits)
        lines.append(f"{format_scalar(float(p))},{re},{im},{a2}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_etas_csv(path, weights, digits: int = 17):
    """Columns m, re, im, abs, arg."""
    lines = ["m,re,im,abs,arg"]
    with mp.extraprec(10):
        for m, e in enumerate(weights.etas):
            em = mp.mpc(e)
            lines.append(
                f"{m},{format_scalar(em.real, digits)},{format_scalar(em.imag, digits)},"
                f"{format_scalar(abs(em), digits)},{format_scalar(mp.arg(em) if abs(em) else mp.mpf(0), digits)}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_window_csv(path, report, digits: int = 17):
    """Columns p, abs_T, local_frequency."""
    lines = ["p,abs_T,local_frequency"]
    for p, aT, lf in zip(report.ps, report.abs_T, report.local_freq):
        lines.append(f"{format_scalar(float(p))},{format_scalar(float(aT))},{format_scalar(float(lf))}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_kernel_csv(path, table, digits: int = 17):
    """Columns x, re, im, abs."""
    lines = ["x,re,im,abs"]
    for x, v in zip(table.xs, table.xi):
        c = complex(v)
        lines.append(
            f"{format_scalar(float(x))},{format_scalar(c.real, digits)},"
            f"{format_scalar(c.imag, digits)},{format_scalar(abs(c), digits)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_rows_csv(path, header, rows):
    """Generic table; cells are pre-formatted strings."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def parse_kv_text(text: str) -> dict:
    """Flat key=value lines; '#' starts a comment; blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val.strip()
    return out


def load_kv_file(path) -> dict:
    return parse_kv_text(Path(path).read_text())

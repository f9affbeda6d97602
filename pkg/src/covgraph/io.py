"""File formats: data tables, moment files, graphs, families, matrices."""

from __future__ import annotations

import os
from typing import IO, Sequence

import numpy as np

from .graphs import CompleteSetFamily, CovarianceGraph, parse_family_text, parse_graph_text
from .model import SampleStats, is_pos_def, stats_from_moments

__all__ = [
    "InputError",
    "load_data",
    "load_stats",
    "load_graph",
    "load_family",
    "load_matrix",
    "write_matrix",
    "format_matrix",
]


class InputError(ValueError):
    """Malformed input file; the message carries file and position."""


def _read_text(path: str | os.PathLike) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _split_row(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        line = line.replace(",", " ").replace(";", " ").replace("\t", " ")
        return line.split()
    return [tok.strip() for tok in line.split(delimiter)]


def load_data(
    path: str | os.PathLike,
    delimiter: str | None = None,
    header: str = "auto",
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Read a delimited numeric table; returns (array, column labels).

    ``header`` is 'auto' (label row detected when the first row is not
    numeric), 'yes', or 'no'.  Default labels are X1..Xp.  Ragged rows
    and non-numeric cells are reported with their line and column.
    """
    text = _read_text(path)
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rows.append((lineno, _split_row(line, delimiter)))
    if not rows:
        raise InputError(f"{path}: file holds no data rows")
    labels: tuple[str, ...] | None = None
    first_tokens = rows[0][1]
    has_header = header == "yes" or (header == "auto" and not all(_is_number(t) for t in first_tokens))
    if has_header:
        labels = tuple(first_tokens)
        rows = rows[1:]
        if not rows:
            raise InputError(f"{path}: header present but no data rows")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for r, (lineno, toks) in enumerate(rows):
        if len(toks) != width:
            raise InputError(
                f"{path}:{lineno}: ragged row, expected {width} values, found {len(toks)}"
            )
        for c, tok in enumerate(toks):
            try:
                data[r, c] = float(tok)
            except ValueError:
                raise InputError(
                    f"{path}:{lineno}: non-numeric cell {tok!r} in column {c + 1}"
                ) from None
    if labels is None:
        labels = tuple(f"X{k + 1}" for k in range(width))
    if len(labels) != width:
        raise InputError(f"{path}: header has {len(labels)} labels for {width} columns")
    return data, labels


def load_stats(path: str | os.PathLike) -> SampleStats:
    """Read sample size, standard deviations, and correlations.

    Format, one block per keyword::

        n 134
        vars A B C
        sd 1.0 2.0 0.5
        corr
        0.30
        0.10 -0.20

    The ``corr`` block lists the strict lower triangle row by row (row
    k has k entries).  The covariance is rebuilt as r_ij sd_i sd_j and
    must come out positive definite.
    """
    text = _read_text(path)
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))
    n = None
    labels: tuple[str, ...] | None = None
    sds: np.ndarray | None = None
    corr_rows: list[tuple[int, list[str]]] = []
    in_corr = False
    for lineno, line in lines:
        toks = line.split()
        if not in_corr:
            key = toks[0].lower()
            if key == "n":
                if len(toks) != 2 or not toks[1].isdigit():
                    raise InputError(f"{path}:{lineno}: expected 'n <count>'")
                n = int(toks[1])
            elif key == "vars":
                labels = tuple(toks[1:])
            elif key == "sd":
                try:
                    sds = np.array([float(t) for t in toks[1:]])
                except ValueError:
                    raise InputError(f"{path}:{lineno}: non-numeric standard deviation") from None
            elif key == "corr":
                in_corr = True
            else:
                raise InputError(f"{path}:{lineno}: unknown keyword {toks[0]!r}")
        else:
            corr_rows.append((lineno, toks))
    if n is None or labels is None or sds is None:
        raise InputError(f"{path}: stats file needs 'n', 'vars', 'sd', and 'corr' blocks")
    p = len(labels)
    if sds.shape != (p,):
        raise InputError(f"{path}: expected {p} standard deviations, found {sds.size}")
    if np.any(sds <= 0):
        raise InputError(f"{path}: standard deviations must be positive")
    if len(corr_rows) != p - 1:
        raise InputError(
            f"{path}: correlation block needs {p - 1} rows, found {len(corr_rows)}"
        )
    corr = np.eye(p)
    for k, (lineno, toks) in enumerate(corr_rows, start=1):
        if len(toks) != k:
            raise InputError(
                f"{path}:{lineno}: correlation row {k} needs {k} entries, found {len(toks)}"
            )
        for c, tok in enumerate(toks):
            try:
                r = float(tok)
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric correlation {tok!r}") from None
            if abs(r) > 1.0:
                raise InputError(
                    f"{path}:{lineno}: correlation between {labels[k]} and {labels[c]} "
                    f"is {r}, outside [-1, 1]"
                )
            corr[k, c] = corr[c, k] = r
    s = corr * np.outer(sds, sds)
    if not is_pos_def(s):
        raise InputError(f"{path}: reconstructed covariance is not positive definite")
    return stats_from_moments(n=n, s=s, labels=labels)


def load_graph(path: str | os.PathLike) -> CovarianceGraph:
    return parse_graph_text(_read_text(path), source=str(path))


def load_family(path: str | os.PathLike, g: CovarianceGraph) -> CompleteSetFamily:
    return parse_family_text(_read_text(path), g, source=str(path))


def format_matrix(
    m: np.ndarray, labels: Sequence[str] | None = None, digits: int | None = None
) -> str:
    """Tab-delimited matrix text; 17 significant digits by default.

    The default precision round-trips doubles exactly; ``digits``
    switches to fixed-point for human-readable tables.  Labels go on a
    ``#labels`` line so purely numeric label sets stay unambiguous.
    """
    m = np.asarray(m, dtype=float)
    fmt = (lambda x: format(x, ".17g")) if digits is None else (lambda x: format(x, f".{digits}f"))
    out = []
    if labels is not None:
        out.append("#labels\t" + "\t".join(labels))
    for row in m:
        out.append("\t".join(fmt(x) for x in row))
    return "\n".join(out) + "\n"


def write_matrix(
    target: str | os.PathLike | IO[str],
    m: np.ndarray,
    labels: Sequence[str] | None = None,
    digits: int | None = None,
) -> None:
    text = format_matrix(m, labels, digits)
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)


def load_matrix(path: str | os.PathLike) -> tuple[tuple[str, ...] | None, np.ndarray]:
    """Read a matrix written by :func:`write_matrix`; labels optional.

    Accepts either a ``#labels`` line or a bare non-numeric header row.
    """
    text = _read_text(path)
    labels = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#labels"):
            labels = tuple(stripped.split()[1:])
            continue
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise InputError(f"{path}: no matrix content")
    if labels is None and not all(_is_number(t) for t in rows[0][1]):
        labels = tuple(rows[0][1])
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: header without matrix rows")
    width = len(rows[0][1])
    m = np.empty((len(rows), width))
    for r, (lineno, toks) in enumerate(rows):
        if len(toks) != width:
            raise InputError(f"{path}:{lineno}: ragged matrix row")
        try:
            m[r] = [float(t) for t in toks]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric matrix entry") from None
    if labels is not None and len(labels) != width:
        raise InputError(f"{path}: label count does not match matrix width")
    return labels, m

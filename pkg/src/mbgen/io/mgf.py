"""MGF reader/writer carrying per-peak formula annotations.

Grammar (one block per spectrum)::

    BEGIN IONS
    TITLE=<id>
    PEPMASS=<float>
    FORMULA=<precursor formula>          # mandatory
    FRAGFORMULA=<f1>;<f2>;...            # optional, one formula per peak line
    <mz> <intensity> [<formula>]         # peak lines, whitespace separated
    END IONS

A peak's formula comes from its third token, else from the FRAGFORMULA list
at the same position.  Lines outside blocks must be blank or ``#`` comments.
"""

from __future__ import annotations

from collections.abc import Iterable
from pathlib import Path

from ..chem import FormulaError, format_formula, parse_formula
from ..encoder import Peak, Spectrum, SpectrumError


class MgfError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def parse_mgf_text(text: str) -> list[Spectrum]:
    spectra: list[Spectrum] = []
    block = None
    start = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if block is None:
            if not line or line.startswith("#"):
                continue
            if line != "BEGIN IONS":
                raise MgfError(f"expected BEGIN IONS, got {line!r}", lineno)
            block = {"meta": {}, "peaks": []}
            start = lineno
            continue
        if line == "BEGIN IONS":
            raise MgfError("BEGIN IONS inside an open block (missing END IONS)", lineno)
        if line == "END IONS":
            spectra.append(_finish(block, start, lineno))
            block = None
        elif not line:
            continue
        elif "=" in line and not line[0].isdigit():
            key, _, value = line.partition("=")
            block["meta"][key.strip().upper()] = value.strip()
        else:
            parts = line.split()
            if len(parts) not in (2, 3):
                raise MgfError(f"malformed peak line {line!r}", lineno)
            try:
                mz, inten = float(parts[0]), float(parts[1])
            except ValueError:
                raise MgfError(f"non-numeric peak values in {line!r}", lineno) from None
            block["peaks"].append((mz, inten, parts[2] if len(parts) == 3 else None, lineno))
    if block is not None:
        raise MgfError("end of file inside a block (missing END IONS)", start)
    return spectra


def _finish(block: dict, start: int, end: int) -> Spectrum:
    meta = block["meta"]
    if "FORMULA" not in meta:
        raise MgfError("block lacks the mandatory FORMULA key", start)
    try:
        precursor = parse_formula(meta["FORMULA"])
    except FormulaError as exc:
        raise MgfError(f"bad FORMULA: {exc}", start) from None
    frag = meta.get("FRAGFORMULA")
    frag_list = frag.split(";") if frag else []
    if not block["peaks"]:
        raise MgfError("block has no peaks", end)
    peaks = []
    for idx, (mz, inten, token, lineno) in enumerate(block["peaks"]):
        text = token if token is not None else (frag_list[idx] if idx < len(frag_list) else None)
        if text is None:
            raise MgfError("peak has no formula annotation", lineno)
        try:
            f = parse_formula(text)
        except FormulaError as exc:
            raise MgfError(f"bad peak formula: {exc}", lineno) from None
        if not f.is_subformula_of(precursor):
            raise MgfError(f"peak formula {text} exceeds precursor {meta['FORMULA']}", lineno)
        if mz <= 0 or inten < 0:
            raise MgfError("peak m/z must be positive and intensity non-negative", lineno)
        peaks.append(Peak(mz, inten, f))
    extra = {k: v for k, v in meta.items() if k not in ("FORMULA", "FRAGFORMULA", "TITLE")}
    try:
        return Spectrum.normalized(peaks, precursor, meta.get("TITLE", ""), extra)
    except SpectrumError as exc:
        raise MgfError(str(exc), start) from None


def parse_mgf(path) -> list[Spectrum]:
    return parse_mgf_text(Path(path).read_text())


def format_mgf(spectra: Iterable[Spectrum]) -> str:
    out = []
    for s in spectra:
        out.append("BEGIN IONS")
        out.append(f"TITLE={s.title}")
        out.append(f"PEPMASS={s.precursor.mass():.6f}")
        out.append(f"FORMULA={format_formula(s.precursor)}")
        for p in s.peaks:
            out.append(f"{p.mz:.6f} {p.intensity:.6f} {format_formula(p.formula)}")
        out.append("END IONS")
        out.append("")
    return "\n".join(out)


def write_mgf(path, spectra: Iterable[Spectrum]) -> None:
    Path(path).write_text(format_mgf(spectra))

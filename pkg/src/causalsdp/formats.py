"""SDPA sparse and CSV exchange formats.

The SDPA sparse file (.dat-s) encodes   min c.x  s.t.  sum_i x_i F_i - F0
PSD, with one dense block for the moment matrix and one diagonal block for
bound and support rows.  Maximization problems are exported with a negated
objective (noted in the comments).  ``read_sdpa`` is a standalone parser used
for round-trip verification and for feeding externally solved problems back.

The CSV export writes the symbolic moment matrix with monomial headers;
cells show numeric values where known and variable displays elsewhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .algebra import Monomial
from .relaxation import Relaxation, ZERO_CELL
from .sdp import SdpProblem


@dataclass
class SdpaData:
    """Contents of an SDPA sparse file."""

    m: int
    block_sizes: list[int]
    c: np.ndarray
    entries: list[tuple[int, int, int, int, float]]  # (matno, block, i, j, value)
    comments: list[str] = field(default_factory=list)

    def matrices(self) -> list[list[np.ndarray]]:
        """Dense matrices per constraint matrix and block (diagonal expanded)."""
        sizes = [abs(b) for b in self.block_sizes]
        out = []
        for matno in range(self.m + 1):
            out.append([np.zeros((s, s)) for s in sizes])
        for matno, blk, i, j, val in self.entries:
            mat = out[matno][blk - 1]
            mat[i - 1, j - 1] = val
            mat[j - 1, i - 1] = val
        return out


def export_sdpa(p: SdpProblem, path: str) -> None:
    """Write a compiled problem in SDPA sparse format."""
    m = p.m
    d = len(p.lp_rows)
    blocks = [p.n] + ([-d] if d else [])

    if p.objective is not None:
        c = np.array(p.objective, dtype=float)
        negated = p.direction == "max"
        if negated:
            c = -c
    else:
        c = np.zeros(m)
        negated = False

    lines = []
    lines.append('"causalsdp moment-matrix relaxation export')
    if negated:
        lines.append('"objective negated: source problem maximizes, SDPA minimizes')
    if p.objective_const:
        lines.append(f'"objective constant term (excluded from file): {p.objective_const!r}')
    if p.equalities:
        lines.append(f'"{len(p.equalities)} affine relations were eliminated by substitution')
    lines.append(f"{m} = mDIM")
    lines.append(f"{len(blocks)} = nBLOCK")
    lines.append(" ".join(str(b) for b in blocks) + " = bLOCKsTRUCT")
    lines.append(" ".join(repr(float(x)) for x in c))

    def entry(matno: int, blk: int, i: int, j: int, val: float) -> None:
        if val != 0.0:
            lines.append(f"{matno} {blk} {i} {j} {val!r}")

    # F0 = -constant_part (block 1), -shift (block 2).
    C0 = p.constant_part
    for i in range(p.n):
        for j in range(i, p.n):
            entry(0, 1, i + 1, j + 1, -float(C0[i, j]))
    for k, row in enumerate(p.lp_rows):
        entry(0, 2, k + 1, k + 1, -float(row.shift))

    # F_i: cells are stored for the full matrix; emit the upper triangle once.
    order = np.lexsort((p.cell_cols, p.cell_rows, p.cell_vpos))
    for t in order:
        i, j = int(p.cell_rows[t]), int(p.cell_cols[t])
        if i <= j:
            entry(int(p.cell_vpos[t]) + 1, 1, i + 1, j + 1, float(p.cell_vals[t]))
    for k, row in enumerate(p.lp_rows):
        for pos, coeff in sorted(row.terms.items()):
            entry(pos + 1, 2, k + 1, k + 1, float(coeff))

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path: str) -> SdpaData:
    """Parse an SDPA sparse file written by this package or elsewhere."""
    comments: list[str] = []
    numeric: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith('"') or line.startswith("*"):
                comments.append(line.lstrip('"*').strip())
                continue
            numeric.append(line)

    def ints(line: str) -> list[int]:
        cleaned = line.split("=")[0]
        for ch in ",(){}":
            cleaned = cleaned.replace(ch, " ")
        return [int(tok) for tok in cleaned.split()]

    m = ints(numeric[0])[0]
    nblocks = ints(numeric[1])[0]
    block_sizes = ints(numeric[2])
    if len(block_sizes) != nblocks:
        raise ValueError(f"block structure lists {len(block_sizes)} blocks, header says {nblocks}")

    cline = numeric[3]
    for ch in ",(){}":
        cline = cline.replace(ch, " ")
    c = np.array([float(tok) for tok in cline.split()], dtype=float)
    if len(c) != m:
        raise ValueError(f"objective row has {len(c)} entries for {m} variables")

    entries = []
    for line in numeric[4:]:
        toks = line.replace(",", " ").split()
        if len(toks) != 5:
            raise ValueError(f"bad entry line: {line!r}")
        entries.append((int(toks[0]), int(toks[1]), int(toks[2]), int(toks[3]), float(toks[4])))
    return SdpaData(m=m, block_sizes=block_sizes, c=c, entries=entries, comments=comments)


def export_csv(r: Relaxation, path: str) -> None:
    """Write the symbolic moment matrix as CSV with monomial headers."""
    headers = [""] + [
        r.algebra.display(Monomial(indices=w)) for w in r.columns.columns
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for i in range(r.n):
            row = [headers[i + 1]]
            for j in range(r.n):
                vid = int(r.matrix[i, j])
                if vid == ZERO_CELL:
                    row.append("0")
                elif vid in r.known_values:
                    row.append(repr(r.known_values[vid]))
                else:
                    row.append(r.var_display(vid))
            writer.writerow(row)

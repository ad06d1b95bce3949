"""Dense primal-dual interior-point solver for block SDPs.

Solves   min  c.x   s.t.   S(x) = F0 + sum_i x_i F_i  is PSD,
where the cone is one dense symmetric block plus one diagonal (linear) block.
Basis matrices are given as sparse symmetric cell lists.  The algorithm is an
infeasible-start Mehrotra predictor-corrector with the HKM direction and a
dense Cholesky of the Schur complement; it is deterministic and sized for
moment matrices of a few hundred columns.

The dual solution X (with the diagonal-block multipliers) is the certificate
source: at optimality <F_i, X> = c_i, so <F0, X> bounds the objective from
below on the feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


@dataclass
class BlockProblem:
    """Standard-form data for the embedded solver (min convention)."""

    n: int
    m: int
    c: np.ndarray
    C0: np.ndarray
    cell_rows: np.ndarray
    cell_cols: np.ndarray
    cell_vals: np.ndarray
    cell_vpos: np.ndarray
    lp_shift: np.ndarray      # (d,)
    lp_row: np.ndarray        # COO over LP rows
    lp_var: np.ndarray
    lp_coef: np.ndarray

    def __post_init__(self):
        order = np.argsort(self.cell_vpos, kind="stable")
        self.cell_rows = np.asarray(self.cell_rows, dtype=np.int64)[order]
        self.cell_cols = np.asarray(self.cell_cols, dtype=np.int64)[order]
        self.cell_vals = np.asarray(self.cell_vals, dtype=float)[order]
        self.cell_vpos = np.asarray(self.cell_vpos, dtype=np.int64)[order]
        self.var_start = np.searchsorted(self.cell_vpos, np.arange(self.m + 1))
        self.flat = self.cell_rows * self.n + self.cell_cols
        self.d = len(self.lp_shift)


@dataclass
class IpmResult:
    status: str  # converged | max_iter | numerical
    x: np.ndarray
    X: np.ndarray
    S: np.ndarray
    lp_w: np.ndarray
    lp_s: np.ndarray
    pobj: float
    dobj: float
    iterations: int
    log: list = field(default_factory=list)


def _scatter(p: BlockProblem, x: np.ndarray) -> np.ndarray:
    """F0 + sum x_i F_i on the dense block."""
    M = np.bincount(p.flat, weights=p.cell_vals * x[p.cell_vpos], minlength=p.n * p.n)
    return p.C0 + M.reshape(p.n, p.n)


def _adjoint(p: BlockProblem, X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """A*(X, w)_i = <F_i, (X, w)> over both blocks."""
    dense = np.bincount(
        p.cell_vpos, weights=p.cell_vals * X[p.cell_rows, p.cell_cols], minlength=p.m
    )
    if p.d:
        dense = dense + np.bincount(p.lp_var, weights=p.lp_coef * w[p.lp_row], minlength=p.m)
    return dense


def _lp_values(p: BlockProblem, x: np.ndarray) -> np.ndarray:
    if not p.d:
        return np.zeros(0)
    return p.lp_shift + np.bincount(p.lp_row, weights=p.lp_coef * x[p.lp_var], minlength=p.d)


def _max_step_dense(M: np.ndarray, dM: np.ndarray) -> float:
    """Largest alpha with M + alpha*dM still positive definite."""
    L = sla.cholesky(M, lower=True, check_finite=False)
    W = sla.solve_triangular(L, dM, lower=True, check_finite=False)
    W = sla.solve_triangular(L, W.T, lower=True, check_finite=False)
    lam = sla.eigvalsh((W + W.T) / 2.0, check_finite=False)[0]
    if lam >= -1e-14:
        return np.inf
    return -1.0 / lam


def _max_step_lp(s: np.ndarray, ds: np.ndarray) -> float:
    neg = ds < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-s[neg] / ds[neg]))


def solve_block_sdp(
    p: BlockProblem,
    tol: float = 1e-8,
    max_iter: int = 200,
    step_frac: float = 0.98,
    verbose: bool = False,
) -> IpmResult:
    """Run the predictor-corrector interior-point iteration."""
    n, m, d = p.n, p.m, p.d
    nu = n + d

    scale0 = max(10.0, float(np.sqrt(n)), float(np.linalg.norm(p.C0)) / max(1, n))
    if d:
        scale0 = max(scale0, 2.0 * float(np.max(np.abs(p.lp_shift))))
    dscale = max(10.0, float(np.sqrt(n)), float(np.linalg.norm(p.c, np.inf)))

    x = np.zeros(m)
    S = np.eye(n) * scale0
    X = np.eye(n) * dscale
    s_lp = np.full(d, scale0)
    w_lp = np.full(d, dscale)

    norm_c = 1.0 + float(np.linalg.norm(p.c, np.inf)) if m else 1.0
    norm_f = 1.0 + float(np.linalg.norm(p.C0))

    def schur_and_factor(Sinv, Xm):
        H = np.zeros((m, m))
        for j in range(m):
            a, b = p.var_start[j], p.var_start[j + 1]
            if a == b:
                continue
            r = p.cell_rows[a:b]
            sidx = p.cell_cols[a:b]
            v = p.cell_vals[a:b]
            R = (Sinv[:, r] * v) @ Xm[sidx, :]
            H[:, j] = np.bincount(
                p.cell_vpos, weights=p.cell_vals * R[p.cell_rows, p.cell_cols], minlength=m
            )
        if d:
            ratio = w_lp / s_lp
            for rr in range(d):
                mask = p.lp_row == rr
                gv = p.lp_var[mask]
                gc = p.lp_coef[mask]
                H[np.ix_(gv, gv)] += np.outer(gc, gc) * ratio[rr]
        H = (H + H.T) / 2.0
        jitter = 0.0
        base = np.trace(H) / max(m, 1)
        for attempt in range(6):
            try:
                return sla.cho_factor(
                    H + jitter * np.eye(m), lower=True, check_finite=False
                )
            except np.linalg.LinAlgError:
                jitter = max(base * 10.0 ** (attempt - 12), 1e-12)
        raise np.linalg.LinAlgError("Schur complement not positive definite")

    status = "max_iter"
    it = 0
    log = []
    try:
        for it in range(1, max_iter + 1):
            M = _scatter(p, x)
            Rp = M - S
            lp_val = _lp_values(p, x)
            rp_lp = lp_val - s_lp
            rd = p.c - _adjoint(p, X, w_lp)

            mu = (float(np.tensordot(X, S)) + float(w_lp @ s_lp)) / nu
            pobj = float(p.c @ x)
            dobj = -(float(np.tensordot(p.C0, X)) + float(p.lp_shift @ w_lp))
            relgap = (pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
            pinf = (np.linalg.norm(Rp) + (np.linalg.norm(rp_lp, np.inf) if d else 0.0)) / norm_f
            dinf = (np.linalg.norm(rd, np.inf) if m else 0.0) / norm_c
            log.append((it, pobj, dobj, pinf, dinf, mu))
            if verbose:
                print(
                    f"  it {it:3d}  pobj {pobj:+.9e}  dobj {dobj:+.9e}  "
                    f"pinf {pinf:.2e}  dinf {dinf:.2e}  mu {mu:.2e}"
                )
            if pinf < tol and dinf < tol and abs(relgap) < tol:
                status = "converged"
                break
            if not np.isfinite(mu) or mu > 1e60:
                status = "numerical"
                break

            Ls = sla.cholesky(S, lower=True, check_finite=False)
            Sinv = sla.cho_solve((Ls, True), np.eye(n), check_finite=False)
            Sinv = (Sinv + Sinv.T) / 2.0
            Hf = schur_and_factor(Sinv, X)

            XRpSinv = X @ Rp @ Sinv

            def solve_direction(sigmu, KSinv, k_lp):
                # Newton system for X*dS + dX*S = sigmu*I - X*S - K,
                # dS = Rp + sum dx_i F_i, <F_i, dX> = rd_i.
                tgt = XRpSinv if KSinv is None else KSinv + XRpSinv
                rhs = -p.c - np.bincount(
                    p.cell_vpos,
                    weights=p.cell_vals * tgt[p.cell_rows, p.cell_cols],
                    minlength=m,
                )
                rhs += sigmu * np.bincount(
                    p.cell_vpos,
                    weights=p.cell_vals * Sinv[p.cell_rows, p.cell_cols],
                    minlength=m,
                )
                if d:
                    klp = k_lp if k_lp is not None else 0.0
                    lp_part = (sigmu - klp - w_lp * rp_lp) / s_lp
                    rhs += np.bincount(p.lp_var, weights=p.lp_coef * lp_part[p.lp_row], minlength=m)
                dx = sla.cho_solve(Hf, rhs, check_finite=False)
                dS = Rp + _scatter(p, dx) - p.C0
                ds_lp = rp_lp + (_lp_values(p, dx) - p.lp_shift) if d else np.zeros(0)
                dXm = sigmu * Sinv - X - tgt - X @ (dS - Rp) @ Sinv
                dXm = (dXm + dXm.T) / 2.0
                if d:
                    klp = k_lp if k_lp is not None else 0.0
                    dw = (sigmu - klp - w_lp * s_lp - w_lp * ds_lp) / s_lp
                else:
                    dw = np.zeros(0)
                return dx, dS, dXm, ds_lp, dw

            # Predictor (affine scaling).
            dx_a, dS_a, dX_a, ds_a, dw_a = solve_direction(0.0, None, None)
            ap = min(1.0, step_frac * min(_max_step_dense(S, dS_a), _max_step_lp(s_lp, ds_a)))
            ad = min(1.0, step_frac * min(_max_step_dense(X, dX_a), _max_step_lp(w_lp, dw_a)))
            mu_aff = (
                float(np.tensordot(X + ad * dX_a, S + ap * dS_a))
                + float((w_lp + ad * dw_a) @ (s_lp + ap * ds_a))
            ) / nu
            sigma = min(1.0, max(1e-8, (max(mu_aff, 0.0) / mu) ** 3))

            # Corrector.
            KSinv = dX_a @ dS_a @ Sinv
            k_lp = dw_a * ds_a if d else None
            dx, dS, dX, ds_lp, dw = solve_direction(sigma * mu, KSinv, k_lp)

            ap = min(1.0, step_frac * min(_max_step_dense(S, dS), _max_step_lp(s_lp, ds_lp)))
            ad = min(1.0, step_frac * min(_max_step_dense(X, dX), _max_step_lp(w_lp, dw)))

            x = x + ap * dx
            S = S + ap * dS
            S = (S + S.T) / 2.0
            X = X + ad * dX
            X = (X + X.T) / 2.0
            if d:
                s_lp = s_lp + ap * ds_lp
                w_lp = w_lp + ad * dw
    except np.linalg.LinAlgError:
        status = "numerical"

    pobj = float(p.c @ x)
    dobj = -(float(np.tensordot(p.C0, X)) + (float(p.lp_shift @ w_lp) if d else 0.0))
    return IpmResult(
        status=status, x=x, X=X, S=S, lp_w=w_lp, lp_s=s_lp,
        pobj=pobj, dobj=dobj, iterations=it, log=log,
    )

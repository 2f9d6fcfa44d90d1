"""Restarted GMRES with exact accounting of map applications.

Each Arnoldi step applies the map once.  At the end of every completed
restart cycle the true residual ``b - map(x)`` is recomputed with one more
application, so a run of ``R`` iterations with restart ``rho`` costs exactly
``R + R // rho`` applications.  The initial guess is zero, so no application
is spent on the first residual.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

__all__ = ["GmresParams", "SolveReport", "gmres", "write_residual_csv"]


@dataclass(frozen=True)
class GmresParams:
    tol: float = 1e-5
    restart: int = 200
    max_iterations: int = 2000

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    converged: bool
    residuals: list
    applications: int
    bio_matvecs: int = 0
    times: dict = field(default_factory=dict)
    memory: dict = field(default_factory=dict)
    breakdown: str | None = None

    @property
    def final_residual(self):
        return self.residuals[-1]


def _givens(a, b):
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, b.conjugate() / abs(b)
    t = abs(a) + abs(b)
    norm = t * np.sqrt(abs(a / t) ** 2 + abs(b / t) ** 2)
    c = abs(a) / norm
    s = (a / abs(a)) * b.conjugate() / norm
    return c, s


def gmres(apply, b, params=GmresParams()):
    """Solve ``apply(x) = b`` with restarted GMRES (modified Gram-Schmidt)."""
    start = time.perf_counter()
    b = np.asarray(b, dtype=complex)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite values")
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    x = np.zeros(n, dtype=complex)
    calls = 0

    def A(v):
        nonlocal calls
        calls += 1
        return np.asarray(apply(v), dtype=complex)

    if bnorm == 0.0:
        return SolveReport(x, 0, True, [0.0], 0, times={"solve": time.perf_counter() - start})

    residuals = [1.0]
    r = b.copy()
    beta = bnorm
    iterations = 0
    converged = False
    breakdown = None
    rho = params.restart
    while iterations < params.max_iterations and not converged:
        m = min(rho, params.max_iterations - iterations)
        V = np.zeros((m + 1, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        V[0] = r / beta
        steps = 0
        happy = False
        for j in range(m):
            w = A(V[j])
            iterations += 1
            steps = j + 1
            for i in range(j + 1):
                H[i, j] = np.vdot(V[i], w)
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                temp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i].conjugate() * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = temp
            h_next = H[j + 1, j]
            cs[j], sn[j] = _givens(H[j, j], h_next)
            H[j, j] = cs[j] * H[j, j] + sn[j] * h_next
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j].conjugate() * g[j]
            g[j] = cs[j] * g[j]
            rel = abs(g[j + 1]) / bnorm
            residuals.append(float(rel))
            if abs(h_next) <= 1e-14 * max(1.0, abs(H[j, j])):
                happy = True
            else:
                V[j + 1] = w / h_next
            if rel <= params.tol or happy:
                break
        diag = np.diag(H[:steps, :steps])
        if np.any(diag == 0):
            breakdown = "singular Hessenberg matrix"
            break
        y = _back_substitute(H[:steps, :steps], g[:steps])
        x = x + V[:steps].T @ y
        if steps == rho:
            r = b - A(x)
            beta = np.linalg.norm(r)
            residuals[-1] = float(beta / bnorm)
            converged = residuals[-1] <= params.tol
        else:
            converged = residuals[-1] <= params.tol or happy
            if not converged:
                break
    report = SolveReport(
        x,
        iterations,
        bool(converged),
        residuals,
        calls,
        times={"solve": time.perf_counter() - start},
        breakdown=breakdown,
    )
    return report


def _back_substitute(R, g):
    n = R.shape[0]
    y = np.zeros(n, dtype=complex)
    for i in range(n - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1 :] @ y[i + 1 :]) / R[i, i]
    return y


def write_residual_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "relative_residual"])
        for i, r in enumerate(report.residuals):
            writer.writerow([i, f"{r:.16e}"])

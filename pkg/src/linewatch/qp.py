"""Dense convex quadratic programming: min 1/2 x'Hx + g'x  s.t.  Gx <= h.

Operator-splitting iterations (scaled dual updates with a fixed penalty)
followed by an active-set polish: the constraints tight at the splitting
solution are re-solved as equalities through the KKT system, which lands
primal feasibility at machine precision whenever the active set is
identified correctly. Everything is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QpResult:
    x: np.ndarray
    iterations: int
    max_violation: float
    polished: bool


def solve_qp(
    H: np.ndarray,
    g: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    max_iterations: int = 200,
    eps: float = 1e-6,
    rho: float = 10.0,
    sigma: float = 1e-6,
    x0: np.ndarray | None = None,
) -> QpResult:
    n = g.shape[0]
    if G.size == 0:
        x = np.linalg.solve(H, -g)
        return QpResult(x, 0, 0.0, True)

    kkt = H + sigma * np.eye(n) + rho * (G.T @ G)
    kkt_inv = np.linalg.inv(kkt)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    z = np.minimum(G @ x, h)
    y = np.zeros(h.shape[0])
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        rhs = sigma * x - g + G.T @ (rho * z - y)
        x = kkt_inv @ rhs
        gx = G @ x
        z_new = np.minimum(gx + y / rho, h)
        y = y + rho * (gx - z_new)
        if iterations % 10 == 0 or iterations == max_iterations:
            primal = float(np.max(gx - h, initial=0.0))
            dual = float(np.abs(z_new - z).max(initial=0.0)) * rho
            z = z_new
            if primal <= eps and dual <= eps:
                break
        else:
            z = z_new

    polished_x, polished = _polish(H, g, G, h, x, y)
    if polished:
        x = polished_x
    violation = float(np.max(G @ x - h, initial=0.0))
    return QpResult(x, iterations, violation, polished)


def _polish(H, g, G, h, x, y, slack_tol: float = 1e-4):
    slack = h - G @ x
    active = np.where((slack <= slack_tol) | (y > 1e-6))[0]
    if active.size == 0:
        x_free = np.linalg.solve(H, -g)
        if np.all(G @ x_free <= h + 1e-9):
            return x_free, True
        return x, False
    if active.size > g.shape[0]:
        # Keep the most binding rows; an overdetermined active set is a
        # sign the splitting solution has not separated the set yet.
        order = np.argsort(slack[active])
        active = active[order[: g.shape[0]]]
    ga = G[active]
    n, m = g.shape[0], active.size
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = H
    kkt[:n, n:] = ga.T
    kkt[n:, :n] = ga
    rhs = np.concatenate([-g, h[active]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return x, False
    x_new, lam = sol[:n], sol[n:]
    if np.any(lam < -1e-7):
        # A wrongly guessed active constraint: drop it and retry once.
        keep = active[lam >= -1e-7]
        if keep.size == active.size or keep.size == 0:
            return x, False
        ga = G[keep]
        m = keep.size
        kkt = np.zeros((n + m, n + m))
        kkt[:n, :n] = H
        kkt[:n, n:] = ga.T
        kkt[n:, :n] = ga
        rhs = np.concatenate([-g, h[keep]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return x, False
        x_new, lam = sol[:n], sol[n:]
        if np.any(lam < -1e-7):
            return x, False
    if np.all(G @ x_new <= h + 1e-9):
        return x_new, True
    return x, False

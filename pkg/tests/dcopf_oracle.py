"""Vectorized DC-OPF oracle by vertex enumeration, independent of the simplex code.

Costs come from enumerating every basic solution of the reduced problem
(power balance plus ``G-1`` active inequalities); LMPs come from forward finite
differences of the optimal cost.  Only the right-hand sides vary across the
batch, so each candidate active set is factorized once.
"""
import itertools

import numpy as np


def triangle_ptdf():
    """Line x bus PTDF for an equal-reactance triangle (lines 1-2, 1-3, 2-3; slack bus 1)."""
    # flow_ij = (p_i - p_j) / 3 once injections balance; slack absorbs the rest
    return np.array([
        [0.0, -2 / 3, -1 / 3],
        [0.0, -1 / 3, -2 / 3],
        [0.0, 1 / 3, -1 / 3],
    ])


class BatchDcOpf:
    def __init__(self, ptdf, gen_bus, costs):
        self.ptdf = np.asarray(ptdf, dtype=float)
        self.gen_bus = list(gen_bus)
        self.costs = np.asarray(costs, dtype=float)
        n_line, n_bus = self.ptdf.shape
        G = len(self.gen_bus)
        omega = np.zeros((n_bus, G))
        for g, b in enumerate(self.gen_bus):
            omega[b, g] = 1.0
        flow_of_p = self.ptdf @ omega
        self.A = np.vstack([flow_of_p, -flow_of_p, np.eye(G), -np.eye(G)])
        self.G = G
        self.n_line = n_line
        self.combos = []
        for S in itertools.combinations(range(self.A.shape[0]), G - 1):
            M = np.vstack([np.ones(G), self.A[list(S)]])
            if abs(np.linalg.det(M)) > 1e-10:
                self.combos.append((list(S), np.linalg.inv(M)))

    def rhs(self, demand, limits, pmax, pmin):
        """demand: (K, n_bus); limits: (K, n_line); pmax/pmin: (K, G)."""
        base = demand @ self.ptdf.T
        return np.hstack([limits + base, limits - base, pmax, -pmin])

    def cost(self, demand, limits, pmax, pmin):
        b = self.rhs(demand, limits, pmax, pmin)
        total = demand.sum(axis=1)
        best = np.full(demand.shape[0], np.inf)
        for S, Minv in self.combos:
            r = np.hstack([total[:, None], b[:, S]])
            P = r @ Minv.T
            ok = np.all(P @ self.A.T - b <= 1e-7, axis=1)
            c = P @ self.costs
            best = np.where(ok & (c < best), c, best)
        return best

    def lmps(self, demand, limits, pmax, pmin, eps=1e-3):
        base = self.cost(demand, limits, pmax, pmin)
        out = np.empty(demand.shape)
        with np.errstate(invalid="ignore"):
            for k in range(demand.shape[1]):
                bumped = demand.copy()
                bumped[:, k] += eps
                out[:, k] = (self.cost(bumped, limits, pmax, pmin) - base) / eps
        return out

"""Inverse-CDF sampling from distributions linear in a density matrix.

Every outcome distribution in the simulator has the form

    p(g) = sum_{n n'} rho_{n n'} f_n(g) conj(f_{n'}(g))

over a fixed grid ``g`` (photon numbers, or quadrature values), with the
functions ``f`` fixed by the measurement and ``rho`` varying from shot to
shot. Expanding into the real basis ``|f_n|^2``, ``Re(f_n f_n'*)``,
``Im(f_n f_n'*)`` turns the per-shot CDF into a weighted sum of a handful
of precomputed cumulative tables, so one vectorised binary search draws a
million shots with a million different states.
"""
import numpy as np


class HermitianFamily:
    """Sampler for ``p(g) = f^dagger(g) rho f(g)`` on a fixed grid.

    Parameters
    ----------
    f : array, shape (d, G)
        Amplitude functions on the grid.
    grid : array, shape (G,)
        Outcome values (increasing).
    continuous : bool
        If true, ``f`` holds density amplitudes at the grid nodes and samples
        are drawn from the piecewise-linear CDF between nodes; otherwise
        ``grid`` is a discrete support and samples are grid values.
    """

    def __init__(self, f, grid, continuous):
        f = np.asarray(f)
        self.grid = np.asarray(grid)
        self.continuous = continuous
        self.dim = f.shape[0]
        basis, self._pairs = [], []
        is_real = not np.iscomplexobj(f) or np.abs(f.imag).max() == 0
        f = f.real if is_real else f
        for n in range(self.dim):
            basis.append(np.abs(f[n]) ** 2)
            self._pairs.append((n, n, "d"))
        for n in range(self.dim):
            for m in range(n + 1, self.dim):
                prod = f[n] * np.conj(f[m])
                basis.append(np.real(prod))
                self._pairs.append((n, m, "re"))
                if not is_real:
                    basis.append(np.imag(prod))
                    self._pairs.append((n, m, "im"))
        self.basis = np.array(basis)
        if continuous:
            dx = np.diff(self.grid)
            mass = 0.5 * (self.basis[:, 1:] + self.basis[:, :-1]) * dx
        else:
            mass = self.basis
        self.cum = np.concatenate([np.zeros((len(basis), 1)), np.cumsum(mass, axis=1)], axis=1)

    def weights(self, rho):
        """Real coefficients of ``rho`` (shape ``(..., d, d)``) in the basis."""
        rho = np.asarray(rho)
        cols = []
        for n, m, kind in self._pairs:
            if kind == "d":
                cols.append(rho[..., n, n].real)
            elif kind == "re":
                cols.append(2.0 * rho[..., n, m].real)
            else:
                cols.append(-2.0 * rho[..., n, m].imag)
        return np.stack(cols, axis=-1)

    def pdf(self, rho):
        return self.weights(rho) @ self.basis

    def total(self, rho):
        """Captured probability mass (at most 1; the deficit is grid leakage)."""
        return self.weights(rho) @ self.cum[:, -1]

    def sample(self, rho, rng, size=None):
        """Draw one outcome per state in a ``(S, d, d)`` stack.

        A single ``(d, d)`` state with ``size`` draws ``size`` outcomes.
        """
        rho = np.asarray(rho)
        w = self.weights(rho)
        if w.ndim == 1:
            w = np.broadcast_to(w, (1 if size is None else size, w.size))
        shots = w.shape[0]
        target = rng.random(shots) * (w @ self.cum[:, -1])
        lo = np.zeros(shots, dtype=np.int64)
        hi = np.full(shots, self.cum.shape[1] - 1, dtype=np.int64)
        # invariant: cdf(lo) < target <= cdf(hi)
        while True:
            active = hi - lo > 1
            if not active.any():
                break
            mid = (lo + hi) // 2
            val = np.einsum("sk,ks->s", w, self.cum[:, mid])
            go_up = val < target
            lo = np.where(active & go_up, mid, lo)
            hi = np.where(active & ~go_up, mid, hi)
        if not self.continuous:
            out = self.grid[lo]
        else:
            c_lo = np.einsum("sk,ks->s", w, self.cum[:, lo])
            c_hi = np.einsum("sk,ks->s", w, self.cum[:, hi])
            frac = np.clip((target - c_lo) / np.where(c_hi > c_lo, c_hi - c_lo, 1.0), 0.0, 1.0)
            out = self.grid[lo] + frac * (self.grid[hi] - self.grid[lo])
        if size is None and rho.ndim == 2:
            return out[0]
        return out

"""Krylov solvers, a small aggregation AMG, the interface-block smoother,
and the auxiliary-space preconditioner for the edge system.

The preconditioner combines three additive parts: a block smoother that
inverts the (non-symmetric) submatrix of edge DoFs within l element layers
of the interface exactly and applies Jacobi elsewhere, plus nodal vector and
scalar Poisson-type solves transferred through the averaging map P_curl and
the discrete gradient G.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lu_factor, lu_solve

__all__ = ["SolveReport", "gmres", "pcg", "lu_dense", "DenseLU",
           "amg_setup", "InterfaceBlock", "build_interface_block",
           "HXPreconditioner", "SingularMatrixError"]


class SingularMatrixError(RuntimeError):
    pass


@dataclass
class SolveReport:
    iterations: int
    residuals: list
    converged: bool
    wall_time: float = 0.0
    breakdown: str = None

    def __post_init__(self):
        assert len(self.residuals) == self.iterations + 1


def _as_operator(A):
    if callable(A) and not sp.issparse(A):
        return A
    return lambda x: A @ x


def gmres(A, b, M=None, tol=1e-8, max_it=1000, restart=50, x0=None):
    """Right-preconditioned restarted GMRES.

    With right preconditioning the least-squares residual of the Arnoldi
    system equals the true residual ||b - A x||, so the reported history is
    the genuine relative residual at every inner step.
    """
    t0 = time.perf_counter()
    Aop = _as_operator(A)
    Mop = M if M is not None else (lambda r: r)
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, [0.0], True,
                                        time.perf_counter() - t0)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    res_hist = []
    total = 0
    while True:
        r = b - Aop(x)
        beta = np.linalg.norm(r)
        if not res_hist:
            res_hist.append(beta / bnorm)
        if beta / bnorm <= tol:
            return x, SolveReport(total, res_hist, True,
                                  time.perf_counter() - t0)
        m = min(restart, max_it - total)
        if m <= 0:
            return x, SolveReport(total, res_hist, False,
                                  time.perf_counter() - t0,
                                  breakdown="max_iterations")
        V = np.zeros((n, m + 1))
        Z = np.zeros((n, m))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[:, 0] = r / beta
        k_used = 0
        for j in range(m):
            Z[:, j] = Mop(V[:, j])
            w = Aop(Z[:, j])
            for i in range(j + 1):
                H[i, j] = w @ V[:, i]
                w -= H[i, j] * V[:, i]
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] > 1e-300:
                V[:, j + 1] = w / H[j + 1, j]
            # apply stored Givens rotations, then the new one
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            k_used = j + 1
            res_hist.append(abs(g[j + 1]) / bnorm)
            if res_hist[-1] <= tol or total >= max_it:
                break
        y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used])
        x = x + Z[:, :k_used] @ y
        if res_hist[-1] <= tol:
            r = b - Aop(x)
            return x, SolveReport(total, res_hist, True,
                                  time.perf_counter() - t0)
        if total >= max_it:
            return x, SolveReport(total, res_hist, False,
                                  time.perf_counter() - t0,
                                  breakdown="max_iterations")


def pcg(A, b, M=None, tol=1e-8, max_it=1000, stall_window=50):
    """Preconditioned conjugate gradients with breakdown reporting.

    On non-SPD systems the recursion may produce a non-positive search
    curvature or stagnate; both are reported (not raised), mirroring how
    such runs are tabulated as failures.
    """
    t0 = time.perf_counter()
    Aop = _as_operator(A)
    Mop = M if M is not None else (lambda r: r)
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, [0.0], True,
                                        time.perf_counter() - t0)
    x = np.zeros(n)
    r = b.copy()
    z = Mop(r)
    p = z.copy()
    rz = r @ z
    res = [np.linalg.norm(r) / bnorm]
    best = res[0]
    since_best = 0
    for it in range(1, max_it + 1):
        Ap = Aop(p)
        curv = p @ Ap
        if curv <= 0:
            return x, SolveReport(it - 1, res, False,
                                  time.perf_counter() - t0,
                                  breakdown="indefinite_curvature")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        rn = np.linalg.norm(r) / bnorm
        res.append(rn)
        if rn <= tol:
            return x, SolveReport(it, res, True, time.perf_counter() - t0)
        if rn < best * (1 - 1e-12):
            best = rn
            since_best = 0
        else:
            since_best += 1
            if since_best >= stall_window:
                return x, SolveReport(it, res, False,
                                      time.perf_counter() - t0,
                                      breakdown="stagnation")
        z = Mop(r)
        rz_new = r @ z
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    return x, SolveReport(max_it, res, False, time.perf_counter() - t0,
                          breakdown="max_iterations")


@dataclass
class DenseLU:
    lu: np.ndarray
    piv: np.ndarray
    n: int

    def solve(self, b, transpose=False):
        return lu_solve((self.lu, self.piv), b, trans=1 if transpose else 0)

    def det(self):
        d = float(np.prod(np.diag(self.lu)))
        swaps = int(np.sum(self.piv != np.arange(self.n)))
        return d * (-1.0) ** swaps


def lu_dense(A):
    """Partial-pivoting dense factorization with a singularity guard."""
    A = np.asarray(A, dtype=float)
    lu, piv = lu_factor(A)
    diag = np.abs(np.diag(lu))
    scale = max(np.abs(A).max(), 1e-300)
    if diag.min() < 1e-14 * scale:
        raise SingularMatrixError(
            f"pivot {diag.min():.3e} below 1e-14 x scale {scale:.3e}")
    return DenseLU(lu=lu, piv=piv, n=A.shape[0])


class _DirectSPD:
    """Exact sparse inverse used below the AMG size threshold."""

    def __init__(self, A):
        self._lu = spla.splu(A.tocsc())
        self.shape = A.shape

    def apply(self, r):
        return self._lu.solve(r)


class _AggregationAMG:
    """Plain aggregation multigrid: strength-filtered greedy aggregates,
    piecewise-constant prolongation, damped-Jacobi smoothing, V-cycles."""

    def __init__(self, A, cycles=2, theta=0.06, presmooth=1,
                 coarse_size=400, max_levels=12):
        self.cycles = cycles
        self.presmooth = presmooth
        self.levels = []
        Al = A.tocsr()
        while Al.shape[0] > coarse_size and len(self.levels) < max_levels:
            P = self._aggregate(Al, theta)
            if P is None or P.shape[1] >= Al.shape[0]:
                break
            dinv = 1.0 / Al.diagonal()
            omega = 2.0 / 3.0 / self._jacobi_rho(Al, dinv)
            self.levels.append((Al, dinv, omega, P))
            Al = (P.T @ Al @ P).tocsr()
        self.coarse = spla.splu(Al.tocsc())
        self.coarse_n = Al.shape[0]

    @staticmethod
    def _jacobi_rho(A, dinv, iters=12, seed=0):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(A.shape[0])
        v /= np.linalg.norm(v)
        rho = 1.0
        for _ in range(iters):
            v = dinv * (A @ v)
            nv = np.linalg.norm(v)
            if nv == 0:
                break
            rho = nv
            v /= nv
        return max(rho, 1.0)

    @staticmethod
    def _aggregate(A, theta):
        n = A.shape[0]
        d = np.sqrt(np.abs(A.diagonal()))
        indptr, indices, data = A.indptr, A.indices, A.data
        agg = -np.ones(n, dtype=np.int64)
        count = 0
        for i in range(n):
            if agg[i] >= 0:
                continue
            nbrs = indices[indptr[i]:indptr[i + 1]]
            vals = data[indptr[i]:indptr[i + 1]]
            strong = nbrs[(np.abs(vals) >= theta * d[i] * d[nbrs])
                          & (nbrs != i)]
            if np.all(agg[strong] >= 0) and len(strong) > 0:
                continue  # second pass attaches it
            agg[i] = count
            free = strong[agg[strong] < 0]
            agg[free] = count
            count += 1
        for i in range(n):
            if agg[i] >= 0:
                continue
            nbrs = indices[indptr[i]:indptr[i + 1]]
            vals = np.abs(data[indptr[i]:indptr[i + 1]])
            order = np.argsort(-vals)
            target = -1
            for j in order:
                if agg[nbrs[j]] >= 0:
                    target = agg[nbrs[j]]
                    break
            if target < 0:
                target = count
                count += 1
            agg[i] = target
        if count == 0:
            return None
        P = sp.csr_matrix((np.ones(n), (np.arange(n), agg)), shape=(n, count))
        return P

    def _vcycle(self, level, r):
        if level == len(self.levels):
            return self.coarse.solve(r)
        A, dinv, omega, P = self.levels[level]
        x = np.zeros_like(r)
        for _ in range(self.presmooth):
            x += omega * dinv * (r - A @ x)
        rc = P.T @ (r - A @ x)
        x += P @ self._vcycle(level + 1, rc)
        for _ in range(self.presmooth):
            x += omega * dinv * (r - A @ x)
        return x

    def apply(self, r):
        if not self.levels:
            return self.coarse.solve(r)
        A = self.levels[0][0]
        z = self._vcycle(0, r)
        for _ in range(self.cycles - 1):
            z += self._vcycle(0, r - A @ z)
        return z


def amg_setup(A, cycles=2, direct_threshold=20000, theta=0.06):
    """Fixed SPD operator approximating A^{-1}.

    Small systems are factorized exactly; larger ones get `cycles` V-cycles
    of plain aggregation AMG with symmetric damped-Jacobi smoothing.
    """
    A = A.tocsr()
    asym = abs(A - A.T)
    scale = np.abs(A.data).max() if A.nnz else 1.0
    if asym.nnz and np.abs(asym.data).max() > 1e-10 * scale:
        raise ValueError("amg_setup requires a symmetric matrix")
    if A.shape[0] <= direct_threshold:
        return _DirectSPD(A)
    return _AggregationAMG(A, cycles=cycles, theta=theta)


@dataclass
class InterfaceBlock:
    """Block-diagonal smoother data: Jacobi outside, exact LU inside the
    edge set of l element layers around the interface."""

    width: int
    block: np.ndarray            # reduced indices inside E^l
    rest: np.ndarray
    diag_rest: np.ndarray
    lu: object = None            # splu of the trailing block
    block_edges_global: np.ndarray = field(default=None)

    @property
    def block_size(self):
        return len(self.block)

    def apply(self, r, transpose=False):
        z = np.empty_like(r)
        z[self.rest] = r[self.rest] / self.diag_rest
        if self.lu is not None:
            z[self.block] = self.lu.solve(
                r[self.block], trans="T" if transpose else "N")
        return z


def expand_interface_sets(mesh, interface_tets, l):
    """(T^l, E^l): element layers grown by vertex adjacency, and their edges."""
    tets = set(int(k) for k in interface_tets)
    adj = mesh.node_to_tets()
    current = set(tets)
    for _ in range(l):
        grown = set(current)
        for k in current:
            for n in mesh.tets[k]:
                grown.update(adj[n])
        current = grown
    edges = np.unique(mesh.tet_edges[sorted(current)])
    return current, edges


def build_interface_block(A_reduced, mesh, interface_tets, l, interior_edges):
    """Smoother for the reduced system: exact solve on the interior edge
    DoFs of E^l, Jacobi on the rest."""
    if l < 0:
        raise ValueError("expanding width l must be >= 0")
    n = A_reduced.shape[0]
    pos = -np.ones(mesh.num_edges, dtype=np.int64)
    pos[interior_edges] = np.arange(n)
    if len(interface_tets) == 0:
        block = np.array([], dtype=np.int64)
        edges = np.array([], dtype=np.int64)
    else:
        _, edges = expand_interface_sets(mesh, interface_tets, l)
        block = pos[edges]
        block = np.sort(block[block >= 0])
    rest = np.setdiff1d(np.arange(n), block, assume_unique=True)
    diag = A_reduced.diagonal()
    if np.any(diag[rest] == 0):
        raise SingularMatrixError("zero diagonal entry outside the block")
    lu = None
    if len(block):
        sub = A_reduced[block][:, block].tocsc()
        try:
            lu = spla.splu(sub)
        except RuntimeError as exc:
            raise SingularMatrixError(
                f"interface block (size {len(block)}) is singular: {exc}"
            ) from exc
    return InterfaceBlock(width=l, block=block, rest=rest,
                          diag_rest=diag[rest], lu=lu,
                          block_edges_global=edges)


class HXPreconditioner:
    """Additive auxiliary-space preconditioner for the edge system."""

    def __init__(self, smoother, P_curl, G, amg_vec, amg_scal):
        self.smoother = smoother
        self.P_curl = P_curl.tocsr()
        self.G = G.tocsr()
        self.amg_vec = amg_vec
        self.amg_scal = amg_scal

    def apply(self, r, transpose=False):
        z = self.smoother.apply(r, transpose=transpose)
        z = z + self.P_curl @ self.amg_vec.apply(self.P_curl.T @ r)
        z = z + self.G @ self.amg_scal.apply(self.G.T @ r)
        return z

    def __call__(self, r):
        return self.apply(r)

    def transpose_apply(self, r):
        return self.apply(r, transpose=True)

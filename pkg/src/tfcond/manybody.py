"""Exact few-boson engine over a small set of one-body modes.

Occupation-number representation of N bosons in M modes: Hamiltonian
assembly from one-body matrices and pair tensors, exact diagonalization,
reduced densities, the condensate projector/counting calculus (weighted
number operators, shifted weights, counting rate), and exact verification
of the projector identities, operator-norm bounds, spectral-gap chain, and
counting-rate inequalities on toy sectors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .grids import Field, Grid, convolve, make_grid, norm
from .model import InteractionSpec, RegimeParams, TrapSpec

__all__ = [
    "SECTOR_CAP",
    "DENSE_EIGH_CAP",
    "ModeBasis",
    "SymmetricSector",
    "ManyBodyState",
    "ManyBodyHamiltonian",
    "ProjectorContext",
    "CountingReport",
    "AppendixReport",
    "GapChainReport",
    "TrackReport",
    "HartreeOnModes",
    "product_state",
    "excitation_state",
    "assemble",
    "build",
    "pair_tensor",
    "mode_one_body",
    "ground_state",
    "reduced_density",
    "op_norm",
    "mu_weights",
    "alpha",
    "counting_rate",
    "interaction_lower_bound",
    "gp_modes_ground",
    "verify_appendix",
    "verify_gap_chain",
    "hartree_from_hamiltonian",
    "evolve_and_track",
]

SECTOR_CAP = 20_000
DENSE_EIGH_CAP = 4000


# ---------------------------------------------------------------------------
# Mode bases on a small grid.


@dataclass(frozen=True)
class ModeBasis:
    """M orthonormal one-body mode functions sampled on a 1D grid."""

    grid: Grid
    values: np.ndarray  # (M, n), quadrature-orthonormal rows
    kind: str = "custom"

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def gram(self) -> np.ndarray:
        return self.values.conj() @ self.values.T * self.grid.dv

    def check_orthonormal(self, tol: float = 1e-10) -> None:
        dev = np.max(np.abs(self.gram() - np.eye(self.M)))
        if dev > tol:
            raise ValueError(f"modes are not orthonormal (deviation {dev:.2e})")

    def expand(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid samples of sum_a c_a u_a."""
        return np.asarray(coeffs) @ self.values

    def project(self, grid_values: np.ndarray) -> np.ndarray:
        """Mode coefficients of grid samples."""
        return self.values.conj() @ grid_values * self.grid.dv

    @classmethod
    def harmonic(cls, grid: Grid, M: int, trap: TrapSpec | None = None) -> "ModeBasis":
        """Lowest M eigenmodes of -d^2/dx^2 + V on the grid."""
        if grid.d != 1:
            raise ValueError("mode bases live on 1D grids")
        trap = trap if trap is not None else TrapSpec(strength=1.0, s=2)
        n = grid.n
        F = np.fft.fft(np.eye(n), axis=0)
        kin = np.fft.ifft(grid.k2[:, None] * F, axis=0)
        h = kin.real + np.diag(trap.on_grid(grid))
        h = 0.5 * (h + h.T)
        _, vecs = np.linalg.eigh(h)
        modes = vecs[:, :M].T / np.sqrt(grid.dv)
        basis = cls(grid=grid, values=modes.astype(complex), kind="harmonic")
        basis.check_orthonormal()
        return basis

    @classmethod
    def planewave(cls, grid: Grid, M: int) -> "ModeBasis":
        """Lowest-|k| plane waves on the periodic box."""
        if grid.d != 1:
            raise ValueError("mode bases live on 1D grids")
        L2 = 2 * grid.half_width
        orders = sorted(range(-(M // 2 + 1), M // 2 + 2), key=lambda m: (abs(m), m < 0))
        x = grid.coords()[0]
        rows = []
        for m in orders[:M]:
            k = np.pi * m / grid.half_width
            rows.append(np.exp(1j * k * x) / np.sqrt(L2))
        basis = cls(grid=grid, values=np.array(rows), kind="planewave")
        basis.check_orthonormal()
        return basis


# ---------------------------------------------------------------------------
# Symmetric sector combinatorics.


class SymmetricSector:
    """Occupation-number basis of N bosons in M modes."""

    def __init__(self, N: int, M: int, cap: int = SECTOR_CAP):
        if N < 1 or M < 1:
            raise ValueError("need N >= 1 bosons and M >= 1 modes")
        D = math.comb(N + M - 1, N)
        if D > cap:
            raise ValueError(f"sector dimension {D} exceeds cap {cap}")
        self.N = N
        self.M = M
        self.D = D
        self.occs = [
            occ
            for occ in itertools.product(range(N + 1), repeat=M)
            if sum(occ) == N
        ]
        self.index = {occ: i for i, occ in enumerate(self.occs)}
        self.occ_array = np.array(self.occs, dtype=float)

    def one_body_matrix(self, h: np.ndarray) -> np.ndarray:
        """Sector matrix of sum_j h_j = sum_ab h_ab adag_a a_b."""
        h = np.asarray(h)
        out = np.zeros((self.D, self.D), dtype=complex)
        for i, occ in enumerate(self.occs):
            for b in range(self.M):
                if occ[b] == 0:
                    continue
                for a in range(self.M):
                    if h[a, b] == 0:
                        continue
                    if a == b:
                        out[i, i] += h[a, a] * occ[a]
                        continue
                    m = list(occ)
                    m[b] -= 1
                    m[a] += 1
                    j = self.index[tuple(m)]
                    out[j, i] += h[a, b] * math.sqrt(occ[b] * (occ[a] + 1))
        return out

    def two_body_matrix(self, X: np.ndarray) -> np.ndarray:
        """Sector matrix of sum_{j != k} X_{jk}.

        X is (M^2, M^2) with entries <ab|X|cd> in slot order (first, second);
        the assembled operator is sum X_{(ab),(cd)} adag_a adag_b a_d a_c.
        """
        X4 = np.asarray(X).reshape(self.M, self.M, self.M, self.M)
        out = np.zeros((self.D, self.D), dtype=complex)
        for i, occ in enumerate(self.occs):
            for c in range(self.M):
                if occ[c] == 0:
                    continue
                m1 = list(occ)
                m1[c] -= 1
                amp_c = math.sqrt(occ[c])
                for d in range(self.M):
                    if m1[d] == 0:
                        continue
                    m2 = list(m1)
                    m2[d] -= 1
                    amp_cd = amp_c * math.sqrt(m1[d])
                    for b in range(self.M):
                        m3b = m2[b] + 1
                        amp_b = amp_cd * math.sqrt(m3b)
                        for a in range(self.M):
                            x = X4[a, b, c, d]
                            if x == 0:
                                continue
                            m = list(m2)
                            m[b] += 1
                            na = m[a] + 1
                            m[a] += 1
                            j = self.index[tuple(m)]
                            out[j, i] += x * amp_b * math.sqrt(na)
        return out


@dataclass
class ManyBodyState:
    """Unit-norm coefficient vector over the occupation basis."""

    sector: SymmetricSector
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex)
        if v.shape != (self.sector.D,):
            raise ValueError("state size does not match the sector")
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValueError("cannot normalize the zero state")
        self.vector = v / nrm

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def product_state(sector: SymmetricSector, c: np.ndarray) -> ManyBodyState:
    """phi^{(x) N} in occupation coordinates."""
    c = np.asarray(c, dtype=complex)
    c = c / np.linalg.norm(c)
    vec = np.zeros(sector.D, dtype=complex)
    logfac = [math.lgamma(k + 1) for k in range(sector.N + 1)]
    for i, occ in enumerate(sector.occs):
        w = math.exp(0.5 * (logfac[sector.N] - sum(logfac[k] for k in occ)))
        amp = w
        for a, k in enumerate(occ):
            amp *= c[a] ** k
        vec[i] = amp
    return ManyBodyState(sector, vec)


def excitation_state(
    sector: SymmetricSector, phi: np.ndarray, chi: np.ndarray
) -> ManyBodyState:
    """Symmetrized chi (x) phi^{(x) (N-1)}, i.e. adag(chi) applied to the product."""
    base = SymmetricSector(sector.N - 1, sector.M) if sector.N > 1 else None
    phi = np.asarray(phi, dtype=complex)
    chi = np.asarray(chi, dtype=complex)
    vec = np.zeros(sector.D, dtype=complex)
    if base is None:
        for a in range(sector.M):
            occ = tuple(1 if b == a else 0 for b in range(sector.M))
            vec[sector.index[occ]] = chi[a]
        return ManyBodyState(sector, vec)
    prod = product_state(base, phi).vector
    for i, occ in enumerate(base.occs):
        for a in range(sector.M):
            if chi[a] == 0:
                continue
            target = list(occ)
            target[a] += 1
            j = sector.index[tuple(target)]
            vec[j] += chi[a] * math.sqrt(occ[a] + 1) * prod[i]
    return ManyBodyState(sector, vec)


# ---------------------------------------------------------------------------
# Hamiltonian assembly.


@dataclass
class ManyBodyHamiltonian:
    """H = sum_j h_j + (g/N) sum_{j<k} v_N(x_j - x_k) on the sector."""

    sector: SymmetricSector
    h_mat: np.ndarray
    v_tensor: np.ndarray  # (M^2, M^2) pair tensor of v_N
    g: float
    matrix: np.ndarray
    modes: ModeBasis | None = None
    kernel: Field | None = None
    beta: float | None = None

    @property
    def N(self) -> int:
        return self.sector.N


def assemble(
    sector: SymmetricSector,
    h_mat: np.ndarray,
    v_tensor: np.ndarray,
    g: float,
    **extra,
) -> ManyBodyHamiltonian:
    mat = sector.one_body_matrix(h_mat)
    if g != 0.0:
        mat = mat + (g / (2 * sector.N)) * sector.two_body_matrix(v_tensor)
    herm_dev = np.max(np.abs(mat - mat.conj().T))
    if herm_dev > 1e-12 * max(1.0, np.max(np.abs(mat))):
        raise RuntimeError(f"assembled Hamiltonian not Hermitian ({herm_dev:.2e})")
    mat = 0.5 * (mat + mat.conj().T)
    return ManyBodyHamiltonian(
        sector=sector, h_mat=np.asarray(h_mat), v_tensor=np.asarray(v_tensor),
        g=g, matrix=mat, **extra,
    )


def mode_one_body(modes: ModeBasis, trap: TrapSpec | None) -> np.ndarray:
    """Kinetic (+ trap) matrix <u_a, (-Lap + V) u_b> by quadrature."""
    grid = modes.grid
    U = modes.values
    lap = np.fft.ifft(grid.k2[None, :] * np.fft.fft(U, axis=1), axis=1)
    h = U.conj() @ lap.T * grid.dv
    if trap is not None:
        V = trap.on_grid(grid)
        h = h + (U.conj() * V[None, :]) @ U.T * grid.dv
    return 0.5 * (h + h.conj().T)


def pair_tensor(modes: ModeBasis, kernel: Field) -> np.ndarray:
    """<ab| v_N |cd> for all mode pairs via FFT convolutions."""
    grid = modes.grid
    U = modes.values
    M = modes.M
    P = U.conj()[:, None, :] * U[None, :, :]  # P[a,c](x) = conj(u_a) u_c
    V = np.zeros((M * M, M * M), dtype=complex)
    for b in range(M):
        for d in range(M):
            conv = convolve(kernel, Field(grid, P[b, d], "position")).values
            V4 = np.einsum("acx,x->ac", P, conv) * grid.dv
            for a in range(M):
                for c in range(M):
                    V[a * M + b, c * M + d] = V4[a, c]
    V = 0.5 * (V + V.conj().T)
    return V


def build(
    modes: ModeBasis,
    trap: TrapSpec | None,
    interaction: InteractionSpec,
    regime: RegimeParams,
) -> ManyBodyHamiltonian:
    """Assemble H from grid modes, a trap, and the scaled pair kernel."""
    modes.check_orthonormal()
    if abs(regime.beta - interaction.beta) > 1e-15:
        raise ValueError("regime and interaction disagree on beta")
    sector = SymmetricSector(regime.N, modes.M)
    h_mat = mode_one_body(modes, trap)
    kernel = interaction.kernel_on_grid(modes.grid, regime.N)
    V = pair_tensor(modes, kernel)
    return assemble(
        sector, h_mat, V, regime.g_N,
        modes=modes, kernel=kernel, beta=interaction.beta,
    )


def ground_state(H: ManyBodyHamiltonian) -> tuple[float, ManyBodyState]:
    if H.sector.D <= DENSE_EIGH_CAP:
        vals, vecs = np.linalg.eigh(H.matrix)
        return float(vals[0]), ManyBodyState(H.sector, vecs[:, 0])
    from scipy.sparse.linalg import eigsh

    vals, vecs = eigsh(H.matrix, k=1, which="SA")
    return float(vals[0]), ManyBodyState(H.sector, vecs[:, 0])


def reduced_density(state: ManyBodyState) -> np.ndarray:
    """One-body reduced density gamma_ab = <adag_b a_a>/N; trace one, PSD."""
    sector = state.sector
    v = state.vector
    gamma = np.zeros((sector.M, sector.M), dtype=complex)
    for i, occ in enumerate(sector.occs):
        if v[i] == 0:
            continue
        for b in range(sector.M):
            if occ[b] == 0:
                continue
            gamma[b, b] += occ[b] * abs(v[i]) ** 2
            for a in range(sector.M):
                if a == b:
                    continue
                m = list(occ)
                m[b] -= 1
                m[a] += 1
                j = sector.index[tuple(m)]
                gamma[a, b] += math.sqrt(occ[b] * (occ[a] + 1)) * v[j].conjugate() * v[i]
    gamma = gamma.conj() / sector.N
    return 0.5 * (gamma + gamma.conj().T)


def op_norm(mat: np.ndarray) -> float:
    """Spectral norm of a Hermitian matrix."""
    return float(np.max(np.abs(np.linalg.eigvalsh(mat))))


# ---------------------------------------------------------------------------
# Projector and counting calculus.


def mu_weights(N: int, lam: float) -> np.ndarray:
    """Counting weights mu(k) = min(k / N^lam, 1) on k = 0..N."""
    k = np.arange(N + 1, dtype=float)
    return np.minimum(k / N**lam, 1.0)


class ProjectorContext:
    """Sector realization of the reference-state projector calculus.

    Diagonalizing the occupation operator of phi splits the sector into
    integer eigenspaces: the block with N - k particles in phi is the range
    of P_k.  Every weighted counting operator f-hat (including shifted ones)
    is diagonal in this basis.
    """

    def __init__(self, sector: SymmetricSector, phi: np.ndarray):
        phi = np.asarray(phi, dtype=complex)
        phi = phi / np.linalg.norm(phi)
        self.sector = sector
        self.phi = phi
        p = np.outer(phi, phi.conj())
        occ_of_phi = sector.one_body_matrix(p)
        vals, vecs = np.linalg.eigh(occ_of_phi)
        k_float = sector.N - vals
        k_int = np.rint(k_float).astype(int)
        if np.max(np.abs(k_float - k_int)) > 1e-8:
            raise RuntimeError("occupation spectrum is not integer")
        self.k_of_col = k_int
        self.U = vecs

    def apply_weights(self, weights_by_k, vec: np.ndarray, d: int = 0) -> np.ndarray:
        """f-hat-sub-d applied to vec; weights zero outside 0..N."""
        N = self.sector.N
        w = np.zeros(self.sector.D)
        for col, k in enumerate(self.k_of_col):
            m = k + d
            if 0 <= m <= N:
                w[col] = weights_by_k[m]
        coeff = self.U.conj().T @ vec
        return self.U @ (w * coeff)

    def p_k(self, vec: np.ndarray, k: int) -> np.ndarray:
        coeff = self.U.conj().T @ vec
        coeff[self.k_of_col != k] = 0.0
        return self.U @ coeff

    def sector_weights(self, vec: np.ndarray) -> np.ndarray:
        """|P_k vec|^2 for k = 0..N."""
        coeff = np.abs(self.U.conj().T @ vec) ** 2
        out = np.zeros(self.sector.N + 1)
        for col, k in enumerate(self.k_of_col):
            out[k] += coeff[col]
        return out

    def n_plus_matrix(self) -> np.ndarray:
        return (self.U * self.k_of_col[None, :]) @ self.U.conj().T

    def expect_weights(self, weights_by_k, vec: np.ndarray) -> float:
        return float(np.dot(weights_by_k, self.sector_weights(vec)))


@dataclass
class CountingReport:
    alpha: float
    n_plus: float
    depletion: float
    gamma: np.ndarray
    rate: float | None = None
    rate_terms: np.ndarray | None = None
    rate_bounds: np.ndarray | None = None


def alpha(
    psi: ManyBodyState,
    phi: np.ndarray,
    lam: float,
    H: ManyBodyHamiltonian | None = None,
) -> CountingReport:
    """Weighted counting functional of psi against phi; rate if H is given."""
    if not 0 < lam < 1:
        raise ValueError("lam must lie in (0, 1)")
    sector = psi.sector
    ctx = ProjectorContext(sector, phi)
    mu = mu_weights(sector.N, lam)
    a_val = ctx.expect_weights(mu, psi.vector)
    gamma = reduced_density(psi)
    p = np.outer(ctx.phi, ctx.phi.conj())
    n_plus = sector.N * float(np.trace((np.eye(sector.M) - p) @ gamma).real)
    depletion = 1.0 - float((ctx.phi.conj() @ gamma @ ctx.phi).real)
    rep = CountingReport(alpha=float(a_val), n_plus=n_plus, depletion=depletion, gamma=gamma)
    if H is not None:
        rate, terms, bounds = counting_rate(H, psi, ctx.phi, lam, ctx=ctx)
        rep.rate, rep.rate_terms, rep.rate_bounds = rate, terms, bounds
    return rep


def _mean_field_matrix(H: ManyBodyHamiltonian, c: np.ndarray) -> np.ndarray:
    """Mode matrix of the kernel smeared against |phi|^2 (tensor contraction)."""
    M = H.sector.M
    V4 = H.v_tensor.reshape(M, M, M, M)
    return np.einsum("abcd,b,d->ac", V4, c.conj(), c)


def counting_rate(
    H: ManyBodyHamiltonian,
    psi: ManyBodyState,
    phi: np.ndarray,
    lam: float,
    ctx: ProjectorContext | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact counting rate and its three estimate checks.

    The rate is g [ 2 Im<psi, (mu - mu_1) P0 U12 P1 psi>
                   +  Im<psi, (mu - mu_2) P0 U12 P2 psi>
                   + 2 Im<psi, (mu - mu_1) P1 U12 P2 psi> ]
    with U12 = (N-1) v_N - N (v_N * rho)_1 - N (v_N * rho)_2 and the block
    projectors P0 = p p, P1 = p q, P2 = q q on the pair slots.  Returns
    (rate, measured term magnitudes, their a priori bounds).
    """
    sector = psi.sector
    N, M = sector.N, sector.M
    if ctx is None:
        ctx = ProjectorContext(sector, phi)
    c = ctx.phi
    g = H.g

    p1 = np.outer(c, c.conj())
    q1 = np.eye(M) - p1
    W = _mean_field_matrix(H, c)
    eye = np.eye(M)
    U12 = (
        (N - 1) * H.v_tensor
        - N * np.kron(W, eye)
        - N * np.kron(eye, W)
    )
    Q0 = np.kron(p1, p1)
    Q1 = np.kron(p1, q1)
    Q2 = np.kron(q1, q1)

    mu = mu_weights(N, lam)
    psi_v = psi.vector
    chi1 = ctx.apply_weights(mu, psi_v, 0) - ctx.apply_weights(mu, psi_v, 1)
    chi2 = ctx.apply_weights(mu, psi_v, 0) - ctx.apply_weights(mu, psi_v, 2)

    combos = ((chi1, Q0 @ U12 @ Q1), (chi2, Q0 @ U12 @ Q2), (chi1, Q1 @ U12 @ Q2))
    vals = []
    for chi, X in combos:
        T = sector.two_body_matrix(X)
        vals.append(np.vdot(chi, T @ psi_v) / (N * (N - 1)))
    terms = np.array([v.imag for v in vals])
    rate = g * (2 * terms[0] + terms[1] + 2 * terms[2])

    bounds = _rate_bounds(H, ctx, psi_v, lam) if H.modes is not None else None
    return float(rate), np.abs(terms), bounds


def _rate_bounds(
    H: ManyBodyHamiltonian, ctx: ProjectorContext, psi_v: np.ndarray, lam: float
) -> np.ndarray:
    """A priori bounds for the three rate terms with quadrature norms.

    The kernel exponents follow the mode-grid dimension d (the pair kernel
    is N^{d beta} v(N^beta x)), so the scaling identity
    ||v_N||_2 = N^{d beta / 2} ||v||_2 used by the estimates stays exact.
    """
    grid = H.modes.grid
    N = H.sector.N
    d = grid.d
    beta = H.beta
    kv = H.kernel.values
    v1 = float(np.sum(np.abs(kv)) * grid.dv)
    v2_scaled = float(np.sqrt(np.sum(np.abs(kv) ** 2) * grid.dv)) * N ** (-d * beta / 2)
    vmax = max(v1, v2_scaled)

    phi_grid = H.modes.expand(ctx.phi)
    f = Field(grid, phi_grid, "position")
    linf = norm(f, "Linf")
    l4 = norm(f, "L4")

    mu = mu_weights(N, lam)
    a_val = ctx.expect_weights(mu, psi_v)
    b1 = v1 / N ** ((1 + lam) / 2) * linf**2 * math.sqrt(max(a_val, 0.0))
    b2 = 2 * vmax * max(l4, linf) ** 2 * (a_val + N ** (d * beta - lam) / 2)
    b3 = (
        2 * vmax / N ** ((1 - lam) / 2)
        * linf
        * (N ** (d * beta / 2) + linf)
        * a_val
    )
    return np.array([b1, b2, b3])


# ---------------------------------------------------------------------------
# Interaction positivity against a mean-field reference.


def interaction_lower_bound(H: ManyBodyHamiltonian, phi: np.ndarray) -> float:
    """Smallest eigenvalue of the positive-type interaction estimate.

    For kernels of positive type,
    (g/N) sum_{j<k} v_N(jk) >= -(g N / 2) <rho, v_N * rho> + g sum_j (v_N * rho)(x_j)
                               - g v_N(0),
    tested against rho = |phi|^2 as a sector matrix inequality; the returned
    minimum eigenvalue should be nonnegative up to rounding.
    """
    if H.modes is None or H.kernel is None:
        raise ValueError("needs a grid-built Hamiltonian")
    grid = H.modes.grid
    c = np.asarray(phi, dtype=complex)
    c = c / np.linalg.norm(c)
    rho = np.abs(H.modes.expand(c)) ** 2
    conv = convolve(H.kernel, Field(grid, rho, "position")).values.real
    ip = float(np.sum(conv * rho) * grid.dv)
    U = H.modes.values
    Wm = (U.conj() * conv[None, :]) @ U.T * grid.dv
    v0 = float(H.kernel.values.real[grid.n // 2])  # kernel sampled at the origin
    g, N = H.g, H.sector.N

    lhs = (g / (2 * N)) * H.sector.two_body_matrix(H.v_tensor)
    rhs = g * H.sector.one_body_matrix(Wm) - (g * N / 2 * ip + g * v0) * np.eye(H.sector.D)
    return float(np.min(np.linalg.eigvalsh(lhs - rhs)))


# ---------------------------------------------------------------------------
# Appendix identity verification.


class _TensorEngine:
    """First-quantized checker on (C^M)^{(x) N} for the projector identities."""

    def __init__(self, N: int, M: int):
        if M**N > 100_000:
            raise ValueError("tensor engine too large")
        self.N = N
        self.M = M
        self.shape = (M,) * N
        self.size = M**N

    def apply_one(self, mat: np.ndarray, vec: np.ndarray, axis: int) -> np.ndarray:
        out = np.tensordot(mat, vec, axes=([1], [axis]))
        return np.moveaxis(out, 0, axis)

    def apply_pq_pattern(self, p, q, qset, vec):
        out = vec
        for j in range(self.N):
            out = self.apply_one(q if j in qset else p, out, j)
        return out

    def p_k(self, p, q, k, vec):
        out = np.zeros_like(vec)
        for qset in itertools.combinations(range(self.N), k):
            out = out + self.apply_pq_pattern(p, q, set(qset), vec)
        return out

    def fhat(self, p, q, fvals, vec, d: int = 0):
        out = np.zeros_like(vec)
        for k in range(self.N + 1):
            m = k + d
            if 0 <= m <= self.N:
                if fvals[m] != 0:
                    out = out + fvals[m] * self.p_k(p, q, k, vec)
        return out

    def apply_pair(self, X: np.ndarray, vec: np.ndarray) -> np.ndarray:
        flat = vec.reshape(self.M * self.M, -1)
        return (X @ flat).reshape(self.shape)

    def symmetric_random(self, rng) -> np.ndarray:
        sector = SymmetricSector(self.N, self.M, cap=10**6)
        coeff = rng.standard_normal(sector.D) + 1j * rng.standard_normal(sector.D)
        coeff /= np.linalg.norm(coeff)
        return self.from_occupation(sector, coeff)

    def from_occupation(self, sector: SymmetricSector, coeff: np.ndarray) -> np.ndarray:
        vec = np.zeros(self.shape, dtype=complex)
        logfac = [math.lgamma(k + 1) for k in range(self.N + 1)]
        for idx in np.ndindex(*self.shape):
            occ = [0] * self.M
            for a in idx:
                occ[a] += 1
            i = sector.index[tuple(occ)]
            w = math.exp(-0.5 * (logfac[self.N] - sum(logfac[k] for k in occ)))
            vec[idx] = coeff[i] * w
        return vec


@dataclass
class AppendixReport:
    N: int
    M: int
    trials: int
    violations: dict
    max_dev: float

    @property
    def passed(self) -> bool:
        return all(v == 0 for v in self.violations.values())


def verify_appendix(
    N: int,
    M: int,
    trials: int,
    seed: int = 0,
    tol: float = 1e-10,
    grid: Grid | None = None,
) -> AppendixReport:
    """Exact checks of the projector calculus on random data.

    On (C^M)^{(x) N}: the number identity (nu-hat)^2 = (1/N) sum q_j, the
    counting equality ||f q1 psi|| = ||f nu psi|| with its q1 q2 companion
    inequality, and the shift-commutation f-hat Q_j W Q_k = Q_j W Q_k
    f-hat_{j-k} for random two-slot operators.  On a two-particle grid:
    the Hoelder operator bounds for u(x1 - x2) against one and two
    projectors, for the exponent pairs (1, inf) and (2, 2).
    """
    rng = np.random.default_rng(seed)
    eng = _TensorEngine(N, M)
    grid = grid if grid is not None else make_grid(1, 64, 8.0)
    keys = (
        "number_identity",
        "counting_equality",
        "counting_inequality",
        "shift_commutation",
        "one_projector_bound",
        "two_projector_bound",
        "pair_projector_bound",
    )
    viol = {k: 0 for k in keys}
    max_dev = 0.0

    def bump(key, dev, limit):
        nonlocal max_dev
        max_dev = max(max_dev, dev - limit if dev > limit else 0.0)
        if dev > limit:
            viol[key] += 1

    nu2 = np.arange(N + 1) / N
    for _ in range(trials):
        phi = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        phi /= np.linalg.norm(phi)
        p = np.outer(phi, phi.conj())
        q = np.eye(M) - p

        # (i) squared fraction operator vs mean of q_j, on a general vector
        raw = rng.standard_normal(eng.shape) + 1j * rng.standard_normal(eng.shape)
        raw /= np.linalg.norm(raw)
        lhs = eng.fhat(p, q, nu2, raw)
        rhs = np.zeros_like(raw)
        for j in range(N):
            rhs = rhs + eng.apply_one(q, raw, j) / N
        bump("number_identity", float(np.max(np.abs(lhs - rhs))), tol)

        # (ii) combinatorics on a symmetric state
        psi = eng.symmetric_random(rng)
        f = rng.uniform(-1.0, 1.0, N + 1)
        fq1 = eng.fhat(p, q, f, eng.apply_one(q, psi, 0))
        fnu = eng.fhat(p, q, f * np.sqrt(nu2), psi)
        bump(
            "counting_equality",
            abs(np.linalg.norm(fq1) - np.linalg.norm(fnu)),
            tol,
        )
        q1q2 = eng.apply_one(q, eng.apply_one(q, psi, 0), 1)
        lhs2 = np.linalg.norm(eng.fhat(p, q, f, q1q2))
        rhs2 = math.sqrt(N / (N - 1)) * np.linalg.norm(eng.fhat(p, q, f * nu2, psi))
        bump("counting_inequality", lhs2 - rhs2, tol)

        # (iii) shift commutation with a random pair operator
        Wr = rng.standard_normal((M * M, M * M)) + 1j * rng.standard_normal(
            (M * M, M * M)
        )
        Wr = 0.5 * (Wr + Wr.conj().T)
        pp = lambda v: eng.apply_one(p, eng.apply_one(p, v, 0), 1)
        pq = lambda v: eng.apply_one(p, eng.apply_one(q, v, 1), 0)
        qq = lambda v: eng.apply_one(q, eng.apply_one(q, v, 0), 1)
        Qs = {0: pp, 1: pq, 2: qq}
        for j in range(3):
            for k in range(3):
                if j == k:
                    continue
                a = eng.fhat(p, q, f, Qs[j](eng.apply_pair(Wr, Qs[k](psi))))
                b = Qs[j](eng.apply_pair(Wr, Qs[k](eng.fhat(p, q, f, psi, d=j - k))))
                bump("shift_commutation", float(np.max(np.abs(a - b))), tol)

    # Hoelder operator bounds on a two-particle grid
    n = grid.n
    h = grid.h
    xs = grid.coords()[0]
    didx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    kfrac = np.abs(np.fft.fftfreq(n))
    for _ in range(trials):
        raw = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        hat = np.fft.fft(raw)
        hat[kfrac > 0.2] = 0
        phi_g = np.fft.ifft(hat) * np.exp(-(xs**2) / 8)
        phi_g = phi_g / math.sqrt(float(np.sum(np.abs(phi_g) ** 2) * h))
        u_raw = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        uhat = np.fft.fft(u_raw)
        uhat[kfrac > 0.2] = 0
        u = np.fft.ifft(uhat) * np.exp(-(xs**2) / 10)
        Umat = u[(didx + n // 2) % n]  # u(x_i - x_j), periodic
        psi2 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        psi2 /= math.sqrt(float(np.sum(np.abs(psi2) ** 2) * h * h))

        u_inf = float(np.max(np.abs(u)))
        u_l2 = float(np.sqrt(np.sum(np.abs(u) ** 2) * h))
        u_l4 = float(np.sum(np.abs(u) ** 4) * h) ** 0.25
        phi_l4 = float(np.sum(np.abs(phi_g) ** 4) * h) ** 0.25

        def l2(mat):
            return float(np.sqrt(np.sum(np.abs(mat) ** 2) * h * h))

        p1psi = np.outer(phi_g, (phi_g.conj() @ psi2) * h)
        lhs = l2(Umat * p1psi)
        bump("one_projector_bound", lhs - u_inf, tol)  # (a, a') = (1, inf)
        bump("one_projector_bound", lhs - phi_l4 * u_l4, tol)  # (2, 2)

        # p1 u p1 maps psi -> phi (x) [(u * |phi|^2) projected...]
        up = Umat * p1psi
        p1up = np.outer(phi_g, (phi_g.conj() @ up) * h)
        lhs2 = l2(p1up)
        bump("two_projector_bound", lhs2 - u_inf, tol)
        bump("two_projector_bound", lhs2 - phi_l4**2 * u_l2, tol)

        overlap = (phi_g.conj() @ psi2 @ phi_g.conj()) * h * h
        pp_psi = overlap * np.outer(phi_g, phi_g)
        lhs3 = l2(Umat * pp_psi)
        bump("pair_projector_bound", lhs3 - u_inf, tol)
        bump("pair_projector_bound", lhs3 - phi_l4**2 * u_l2, tol)

    return AppendixReport(N=N, M=M, trials=trials, violations=viol, max_dev=max_dev)


# ---------------------------------------------------------------------------
# Gap chain and sandwich inequalities.


@dataclass
class GapChainReport:
    mu0: float
    mu1: float
    min_eig_chain: float
    min_eig_nplus: float
    sandwich_violations: int
    samples: int
    depletion: float | None = None

    @property
    def passed(self) -> bool:
        return (
            self.min_eig_chain >= -1e-10
            and self.min_eig_nplus >= -1e-10
            and self.sandwich_violations == 0
        )


def sandwich_check(
    sector: SymmetricSector,
    phi: np.ndarray,
    psi_vec: np.ndarray,
    lam: float,
    ctx: ProjectorContext | None = None,
    tol: float = 1e-10,
) -> bool:
    """||gamma - |phi><phi|||^2 <= 2 alpha <= 2 N^{1-lam} ||gamma - |phi><phi|||."""
    ctx = ctx if ctx is not None else ProjectorContext(sector, phi)
    state = ManyBodyState(sector, psi_vec)
    gamma = reduced_density(state)
    p = np.outer(ctx.phi, ctx.phi.conj())
    dist = op_norm(gamma - p)
    a_val = ctx.expect_weights(mu_weights(sector.N, lam), state.vector)
    ok1 = dist**2 <= 2 * a_val + tol
    ok2 = a_val <= sector.N ** (1 - lam) * dist + tol
    return ok1 and ok2


def gp_modes_ground(
    modes: ModeBasis,
    h_mat: np.ndarray,
    kernel: Field,
    g: float,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> tuple[np.ndarray, np.ndarray]:
    """Self-consistent mean-field one-body operator on the mode set.

    Iterates h_eff = h + g * <u_a, (v_N * |phi|^2) u_b> to a fixed point of
    its lowest eigenvector; returns (eigenvalues, h_eff) of the converged
    operator.
    """
    grid = modes.grid
    M = modes.M
    c = np.zeros(M, dtype=complex)
    c[0] = 1.0
    U = modes.values
    h_eff = np.asarray(h_mat, dtype=complex)
    for _ in range(max_iter):
        rho = np.abs(modes.expand(c)) ** 2
        conv = convolve(kernel, Field(grid, rho, "position")).values.real
        Wm = (U.conj() * conv[None, :]) @ U.T * grid.dv
        h_eff = np.asarray(h_mat) + g * 0.5 * (Wm + Wm.conj().T)
        vals, vecs = np.linalg.eigh(h_eff)
        new_c = vecs[:, 0]
        ov = np.vdot(new_c, c)
        phase = ov / abs(ov) if abs(ov) > 0 else 1.0
        if np.linalg.norm(new_c - phase * c) < tol:
            return vals, h_eff
        c = new_c
    raise RuntimeError("mean-field iteration did not converge")


def verify_gap_chain(
    H: ManyBodyHamiltonian,
    h_gp: np.ndarray,
    lam: float = 0.5,
    samples: int = 100,
    seed: int = 0,
) -> GapChainReport:
    """Matrix inequalities sum_j (h^GP_j - mu0) >= (mu1 - mu0) N_+ >= 0,
    plus the counting sandwich on random states and the ground-state
    depletion of H against the mean-field reference."""
    sector = H.sector
    h_gp = np.asarray(h_gp)
    if h_gp.shape != (sector.M, sector.M):
        raise ValueError("one-body operator does not match the mode set")
    vals, vecs = np.linalg.eigh(h_gp)
    mu0, mu1 = float(vals[0]), float(vals[1])
    phi_gp = vecs[:, 0]

    ctx = ProjectorContext(sector, phi_gp)
    nplus = ctx.n_plus_matrix()
    chain = (
        sector.one_body_matrix(h_gp)
        - sector.N * mu0 * np.eye(sector.D)
        - (mu1 - mu0) * nplus
    )
    min_chain = float(np.min(np.linalg.eigvalsh(chain)))
    min_nplus = float(np.min(np.linalg.eigvalsh(nplus)))

    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(samples):
        v = rng.standard_normal(sector.D) + 1j * rng.standard_normal(sector.D)
        if not sandwich_check(sector, phi_gp, v, lam, ctx=ctx):
            bad += 1

    _, gs = ground_state(H)
    depl = alpha(gs, phi_gp, lam).depletion
    return GapChainReport(
        mu0=mu0,
        mu1=mu1,
        min_eig_chain=min_chain,
        min_eig_nplus=min_nplus,
        sandwich_violations=bad,
        samples=samples,
        depletion=depl,
    )


# ---------------------------------------------------------------------------
# Tracked evolution.


@dataclass
class HartreeOnModes:
    """Galerkin mean-field flow i c' = h c + g (V : c-bar c c) on the modes."""

    h_mat: np.ndarray
    v_tensor: np.ndarray
    g: float

    def rhs(self, t, y):
        M = self.h_mat.shape[0]
        c = y[:M] + 1j * y[M:]
        V4 = self.v_tensor.reshape(M, M, M, M)
        nl = np.einsum("abcd,b,c,d->a", V4, c.conj(), c, c)
        dc = -1j * (self.h_mat @ c + self.g * nl)
        return np.concatenate([dc.real, dc.imag])

    def flow(self, c0: np.ndarray, t_end: float, rtol: float = 1e-12):
        y0 = np.concatenate([np.asarray(c0, complex).real, np.asarray(c0, complex).imag])
        sol = solve_ivp(
            self.rhs,
            (0.0, t_end),
            y0,
            method="DOP853",
            rtol=rtol,
            atol=rtol,
            dense_output=True,
        )
        if not sol.success:
            raise RuntimeError(f"mean-field flow failed: {sol.message}")
        M = self.h_mat.shape[0]

        def at(t):
            y = sol.sol(t)
            return y[:M] + 1j * y[M:]

        return at


def hartree_from_hamiltonian(H: ManyBodyHamiltonian) -> HartreeOnModes:
    return HartreeOnModes(h_mat=H.h_mat, v_tensor=H.v_tensor, g=H.g)


@dataclass
class TrackReport:
    times: np.ndarray
    alpha: np.ndarray
    rate: np.ndarray
    alpha_dot_fd: np.ndarray
    distance: np.ndarray
    rate_terms: np.ndarray  # (nt, 3)
    rate_bounds: np.ndarray  # (nt, 3)
    psi_norm: np.ndarray
    energy: np.ndarray
    sandwich_violations: int
    bound_violations: int
    gronwall_c: float
    gronwall_ok: bool
    galerkin_leakage: float

    @property
    def max_rate_mismatch(self) -> float:
        return float(np.max(np.abs(self.rate - self.alpha_dot_fd)))


def evolve_and_track(
    psi0: ManyBodyState,
    H: ManyBodyHamiltonian,
    phi0: np.ndarray,
    hartree: HartreeOnModes,
    t_grid: np.ndarray,
    lam: float,
    fd_dt: float = 1e-4,
) -> TrackReport:
    """Exact sector evolution with mean-field counting diagnostics.

    psi evolves by full diagonalization of H; phi by the Galerkin mean-field
    flow on the same modes.  At each time: alpha, the exact counting rate,
    its centered finite-difference cross-check, the reduced-density distance,
    the three rate-term estimates, and the sandwich inequalities.
    """
    sector = psi0.sector
    t_grid = np.asarray(t_grid, dtype=float)
    t_end = float(t_grid[-1])
    evals, evecs = np.linalg.eigh(H.matrix)
    coeff0 = evecs.conj().T @ psi0.vector

    def psi_at(t):
        return evecs @ (np.exp(-1j * evals * t) * coeff0)

    phi_at = hartree.flow(phi0, t_end + 2 * fd_dt)

    # energy leakage of the mean-field generator out of the mode span
    leakage = 0.0
    if H.modes is not None and H.kernel is not None:
        grid = H.modes.grid
        c0n = np.asarray(phi0, complex)
        c0n = c0n / np.linalg.norm(c0n)
        phi_grid = H.modes.expand(c0n)
        rho = np.abs(phi_grid) ** 2
        conv = convolve(H.kernel, Field(grid, rho, "position")).values.real
        rhs_grid = conv * phi_grid
        inside = H.modes.expand(H.modes.project(rhs_grid))
        num = float(np.sqrt(np.sum(np.abs(rhs_grid - inside) ** 2) * grid.dv))
        den = float(np.sqrt(np.sum(np.abs(rhs_grid) ** 2) * grid.dv))
        leakage = num / den if den > 0 else 0.0

    mu = mu_weights(sector.N, lam)

    def alpha_at(t):
        ctx_t = ProjectorContext(sector, phi_at(t))
        return ctx_t.expect_weights(mu, psi_at(t))

    n_t = len(t_grid)
    a_arr = np.zeros(n_t)
    r_arr = np.zeros(n_t)
    fd_arr = np.zeros(n_t)
    d_arr = np.zeros(n_t)
    terms = np.zeros((n_t, 3))
    bounds = np.zeros((n_t, 3))
    psin = np.zeros(n_t)
    ener = np.zeros(n_t)
    sandwich_bad = 0
    bound_bad = 0

    for i, t in enumerate(t_grid):
        pv = psi_at(t)
        cv = phi_at(t)
        cv = cv / np.linalg.norm(cv)
        ctx = ProjectorContext(sector, cv)
        state = ManyBodyState(sector, pv)
        a_arr[i] = ctx.expect_weights(mu, state.vector)
        rate, tvals, bvals = counting_rate(H, state, cv, lam, ctx=ctx)
        r_arr[i] = rate
        terms[i] = tvals
        if bvals is not None:
            bounds[i] = bvals
            if np.any(tvals > bvals + 1e-10):
                bound_bad += 1
        if t >= fd_dt:
            fd_arr[i] = (alpha_at(t + fd_dt) - alpha_at(t - fd_dt)) / (2 * fd_dt)
        else:
            # second-order one-sided stencil at the left edge
            fd_arr[i] = (
                -3 * alpha_at(t) + 4 * alpha_at(t + fd_dt) - alpha_at(t + 2 * fd_dt)
            ) / (2 * fd_dt)
        gamma = reduced_density(state)
        d_arr[i] = op_norm(gamma - np.outer(cv, cv.conj()))
        if not sandwich_check(sector, cv, pv, lam, ctx=ctx):
            sandwich_bad += 1
        psin[i] = float(np.linalg.norm(pv))
        ener[i] = float(np.vdot(pv, H.matrix @ pv).real)

    dbeta = (
        H.modes.grid.d * H.beta if (H.modes is not None and H.beta is not None) else 0.0
    )
    a0 = a_arr[0] + sector.N ** (dbeta - lam)
    c_need = 0.0
    for t, a in zip(t_grid[1:], a_arr[1:]):
        if a > a0 and t > 0:
            c_need = max(c_need, math.log(a / a0) / t)
    gron_c = max(c_need, 1e-9)
    gron_ok = bool(np.all(a_arr <= a0 * np.exp(gron_c * t_grid) + 1e-12))

    return TrackReport(
        times=t_grid,
        alpha=a_arr,
        rate=r_arr,
        alpha_dot_fd=fd_arr,
        distance=d_arr,
        rate_terms=terms,
        rate_bounds=bounds,
        psi_norm=psin,
        energy=ener,
        sandwich_violations=sandwich_bad,
        bound_violations=bound_bad,
        gronwall_c=gron_c,
        gronwall_ok=gron_ok,
        galerkin_leakage=leakage,
    )

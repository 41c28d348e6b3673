"""Truncated-Fock-space linear algebra.

Conventions used throughout the package: hbar = 1, quadratures
x = (a + a^dag)/sqrt(2) and p = -i(a - a^dag)/sqrt(2), so [x, p] = i and the
vacuum has <x^2> = <p^2> = 1/2.

Everything is dense complex numpy. Truncation to the lowest ``dim`` Fock
levels breaks operator identities only near the cutoff, so physical checks
are made on a guarded subspace of low-lying levels (by default the lowest
dim - ceil(dim/4) of each mode, see :func:`guard_keep`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .errors import DimensionMismatch, NotHermitian, NotNormal, TruncationError

_KET_ATOL = 1e-12


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FockSpace:
    """A truncated bosonic Fock space, one entry of ``dims`` per mode.

    ``FockSpace(8)`` is a single mode with levels 0..7; ``FockSpace((8, 30))``
    is a two-mode composite with the mode order fixed.
    """

    dims: tuple

    def __post_init__(self):
        d = self.dims
        if isinstance(d, (int, np.integer)):
            d = (int(d),)
        d = tuple(int(x) for x in d)
        if len(d) == 0 or any(x < 2 for x in d):
            raise ValueError("every mode needs dim >= 2")
        object.__setattr__(self, "dims", d)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    def mode(self, i: int) -> "FockSpace":
        return FockSpace(self.dims[i])

    def __repr__(self):
        return f"FockSpace{self.dims}"


def guard_keep(dim: int) -> int:
    """Number of low-lying levels kept by the default truncation guard."""
    return dim - math.ceil(dim / 4)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Operator:
    """Dense complex matrix on a (possibly composite) Fock space."""

    space: FockSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator matrix must be square")
        if m.shape[0] != self.space.dim:
            raise DimensionMismatch(
                f"matrix side {m.shape[0]} != space dim {self.space.dim}")
        if not np.isfinite(m).all():
            raise ValueError("operator entries must be finite")
        m = m.copy() if not m.flags.owndata else m
        m.setflags(write=False)  # operators are shareable across threads
        object.__setattr__(self, "matrix", m)

    # light algebra so call sites stay readable
    @property
    def h(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def __matmul__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def __add__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, c):
        return Operator(self.space, self.matrix * complex(c))

    __rmul__ = __mul__

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def _check(self, other):
        if not isinstance(other, Operator) or other.space.dims != self.space.dims:
            raise DimensionMismatch("operator spaces differ")

    def hermiticity_residual(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return self.hermiticity_residual() <= tol * max(1.0, np.abs(self.matrix).max())

    def unitarity_residual(self) -> float:
        m = self.matrix
        return float(np.abs(m.conj().T @ m - np.eye(m.shape[0])).max())

    def is_unitary(self, tol: float = 1e-10) -> bool:
        return self.unitarity_residual() <= tol

    def commutator_norm(self) -> float:
        """Max-norm of [A, A^dag], the normality defect."""
        m = self.matrix
        c = m @ m.conj().T - m.conj().T @ m
        return float(np.abs(c).max())


def identity_op(space: FockSpace) -> Operator:
    return Operator(space, np.eye(space.dim, dtype=complex))


def annihilation_op(space: FockSpace) -> Operator:
    """Ladder matrix <n-1|a|n> = sqrt(n) on a single mode."""
    if space.n_modes != 1:
        raise DimensionMismatch("annihilation_op wants a single-mode space")
    d = space.dim
    return Operator(space, np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex))


def creation_op(space: FockSpace) -> Operator:
    return annihilation_op(space).h


def number_op(space: FockSpace) -> Operator:
    d = space.dim
    return Operator(space, np.diag(np.arange(d)).astype(complex))


def parity_op(space: FockSpace) -> Operator:
    d = space.dim
    return Operator(space, np.diag((-1.0) ** np.arange(d)).astype(complex))


def quadrature_ops(space: FockSpace) -> tuple[Operator, Operator]:
    """x = (a + a^dag)/sqrt(2), p = -i(a - a^dag)/sqrt(2)."""
    a = annihilation_op(space).matrix
    x = (a + a.conj().T) / np.sqrt(2.0)
    p = -1j * (a - a.conj().T) / np.sqrt(2.0)
    return Operator(space, x), Operator(space, p)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class State:
    """Ket or density matrix on a Fock space.

    ``norm_defect`` records the probability mass discarded by truncation
    before renormalization, so tests can bound truncation error.
    """

    space: FockSpace
    kind: str  # "ket" | "density"
    data: np.ndarray
    norm_defect: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if self.kind == "ket":
            d = d.ravel()
            if d.shape[0] != self.space.dim:
                raise DimensionMismatch("ket length != space dim")
            n = np.linalg.norm(d)
            if abs(n - 1.0) > _KET_ATOL:
                raise ValueError(f"ket norm {n} deviates from 1 beyond 1e-12")
        elif self.kind == "density":
            if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] != self.space.dim:
                raise DimensionMismatch("density shape != space dim")
            if abs(np.trace(d) - 1.0) > 1e-10:
                raise ValueError("density trace deviates from 1")
            if np.abs(d - d.conj().T).max() > 1e-10 * max(1.0, np.abs(d).max()):
                raise ValueError("density not Hermitian")
            if d.shape[0] <= 256:
                # positivity check is O(d^3); skip for large composites
                if np.linalg.eigvalsh(d).min() < -1e-9:
                    raise ValueError("density has eigenvalue below -1e-9")
        else:
            raise ValueError("kind must be 'ket' or 'density'")
        d = d.copy() if not d.flags.owndata else d
        d.setflags(write=False)  # states are shareable across threads
        object.__setattr__(self, "data", d)

    def to_density(self) -> "State":
        if self.kind == "density":
            return self
        return State(self.space, "density", np.outer(self.data, self.data.conj()),
                     self.norm_defect)

    def expectation(self, op: Operator) -> complex:
        if op.space.dims != self.space.dims:
            raise DimensionMismatch("state and operator live on different spaces")
        if self.kind == "ket":
            return complex(self.data.conj() @ (op.matrix @ self.data))
        return complex(np.trace(op.matrix @ self.data))

    def fidelity(self, other: "State") -> float:
        """|<psi|phi>|^2 for kets; Tr[rho sigma] if either is mixed."""
        if self.kind == "ket" and other.kind == "ket":
            return float(abs(np.vdot(self.data, other.data)) ** 2)
        a, b = self.to_density().data, other.to_density().data
        return float(np.real(np.trace(a @ b)))

    def probabilities(self) -> np.ndarray:
        if self.kind == "ket":
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()


def fock_state(space: FockSpace, n: int) -> State:
    if not 0 <= n < space.dim:
        raise ValueError(f"fock level {n} outside 0..{space.dim - 1}")
    v = np.zeros(space.dim, dtype=complex)
    v[n] = 1.0
    return State(space, "ket", v)


def vacuum_state(space: FockSpace) -> State:
    if space.n_modes == 1:
        return fock_state(space, 0)
    v = np.zeros(space.dim, dtype=complex)
    v[0] = 1.0
    return State(space, "ket", v)


def coherent_state(space: FockSpace, alpha: complex, tail_tol: float = 1e-6) -> State:
    """Coherent ket from exact coefficients e^{-|a|^2/2} a^n / sqrt(n!), renormalized.

    Warns when the top three levels carry more than 1e-8 occupancy; raises
    TruncationError when the discarded tail mass exceeds ``tail_tol``.
    """
    d = space.dim
    alpha = complex(alpha)
    n = np.arange(d)
    if abs(alpha) == 0.0:
        return fock_state(space, 0)
    lg = np.array([math.lgamma(k + 1) for k in range(d)])
    logmag = n * math.log(abs(alpha)) - 0.5 * lg - 0.5 * abs(alpha) ** 2
    c = np.exp(logmag) * np.exp(1j * n * np.angle(alpha))
    kept = float(np.sum(np.abs(c) ** 2))
    tail = max(0.0, 1.0 - kept)
    if float(np.sum(np.abs(c[-3:]) ** 2)) > 1e-8:
        warnings.warn(
            f"coherent({alpha}) occupies top 3 of {d} levels above 1e-8",
            stacklevel=2)
    if tail > tail_tol:
        raise TruncationError(
            f"coherent({alpha}) tail mass {tail:.2e} exceeds {tail_tol:.0e} at dim {d}")
    return State(space, "ket", c / np.sqrt(kept), norm_defect=tail)


def squeezed_vacuum(space: FockSpace, r: float, phi: float = 0.0) -> State:
    """Squeezed vacuum with Var[x] = e^{-2r}/2 at phi = 0.

    Built from the exact even-level coefficients
    c_{2k} ~ (-e^{2i phi} tanh r)^k sqrt((2k)!) / (2^k k!), then renormalized;
    the discarded tail mass is recorded in ``norm_defect``.
    """
    d = space.dim
    if r == 0.0:
        return fock_state(space, 0)
    c = np.zeros(d, dtype=complex)
    t = math.tanh(r)
    zeta = -t * np.exp(2j * phi)
    for k in range(0, (d + 1) // 2):
        lnmag = 0.5 * math.lgamma(2 * k + 1) - k * math.log(2.0) - math.lgamma(k + 1)
        c[2 * k] = zeta ** k * math.exp(lnmag)
    c *= math.sqrt(1.0 / math.cosh(r))
    kept = float(np.sum(np.abs(c) ** 2))
    tail = max(0.0, 1.0 - kept)
    if tail > 1e-6:
        warnings.warn(
            f"squeezed_vacuum(r={r}) truncation tail {tail:.2e} at dim {d}",
            stacklevel=2)
    return State(space, "ket", c / np.sqrt(kept), norm_defect=tail)


def gaussian_meter(space: FockSpace, epsilon: float) -> State:
    """Meter ket with Gaussian position wavefunction, Var[x] = epsilon^2/2.

    epsilon = 1 is the vacuum; epsilon < 1 is position-squeezed.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return squeezed_vacuum(space, -math.log(epsilon))


def make_state(space: FockSpace, kind: str, **params) -> State:
    """Config-friendly state dispatcher."""
    if kind == "fock":
        return fock_state(space, int(params["n"]))
    if kind == "vacuum":
        return vacuum_state(space)
    if kind == "coherent":
        return coherent_state(space, params["alpha"])
    if kind == "squeezed_vacuum":
        return squeezed_vacuum(space, float(params["r"]), float(params.get("phi", 0.0)))
    if kind == "gaussian_meter":
        return gaussian_meter(space, float(params["epsilon"]))
    raise ValueError(f"unknown state kind {kind!r}")


# ---------------------------------------------------------------------------
# exponentials and spectral decompositions
# ---------------------------------------------------------------------------

def expm_hermitian(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(-i h t) by eigendecomposition; exactly unitary up to roundoff."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def unitary_from_generator(h: Operator, t: float = 1.0) -> Operator:
    """U = exp(-i H t) for Hermitian H.

    Uses eigendecomposition rather than a series, so the result is unitary to
    roundoff at any t.
    """
    res = h.hermiticity_residual()
    if res > 1e-10 * max(1.0, float(np.abs(h.matrix).max())):
        raise NotHermitian(f"generator hermiticity residual {res:.2e}")
    hm = (h.matrix + h.matrix.conj().T) / 2.0
    return Operator(h.space, expm_hermitian(hm, t))


@dataclass(frozen=True)
class SpectralDecomposition:
    """f = sum_i lambda_i |e_i><e_i| for a normal operator f."""

    space: FockSpace
    eigenvalues: np.ndarray        # complex, length d
    eigenvectors: np.ndarray       # unitary, columns are |e_i>
    residual: float                # max-norm reconstruction error

    def reconstruct(self) -> Operator:
        v = self.eigenvectors
        return Operator(self.space, (v * self.eigenvalues) @ v.conj().T)

    def apply(self, func) -> Operator:
        """Functional calculus: sum_i func(lambda_i) |e_i><e_i|."""
        vals = np.asarray([func(lam) for lam in self.eigenvalues], dtype=complex)
        v = self.eigenvectors
        return Operator(self.space, (v * vals) @ v.conj().T)

    def probabilities(self, state: State) -> np.ndarray:
        """Spectral measure of ``state``: p_i = <e_i|rho|e_i>."""
        v = self.eigenvectors
        if state.kind == "ket":
            return np.abs(v.conj().T @ state.data) ** 2
        return np.real(np.einsum("ji,jk,ki->i", v.conj(), state.data, v))

    def clusters(self, tol: float = 1e-8) -> list[np.ndarray]:
        """Indices of eigenvalues grouped within ``tol`` of each other."""
        order = np.lexsort((self.eigenvalues.imag, self.eigenvalues.real))
        groups: list[list[int]] = []
        centers: list[complex] = []
        for idx in order:
            lam = self.eigenvalues[idx]
            placed = False
            for gi, c in enumerate(centers):
                if abs(lam - c) < tol:
                    groups[gi].append(int(idx))
                    placed = True
                    break
            if not placed:
                groups.append([int(idx)])
                centers.append(lam)
        return [np.array(g, dtype=int) for g in groups]


def normal_decompose(f: Operator, tol: float | None = None) -> SpectralDecomposition:
    """Spectral decomposition of a normal operator via complex Schur form.

    The Schur form of a normal matrix is diagonal and its Q factor is an
    orthonormal eigenbasis. Default normality tolerance is 1e-9 * max|f|.
    Degenerate clusters (eigenvalues within 1e-8) are re-orthonormalized.
    """
    m = f.matrix
    scale = max(1.0, float(np.abs(m).max()))
    if tol is None:
        tol = 1e-9 * scale
    cnorm = f.commutator_norm()
    if cnorm >= tol:
        raise NotNormal(
            f"[f, f^dag] max-norm {cnorm:.3e} >= tolerance {tol:.3e}", cnorm)
    t, z = schur(m, output="complex")
    off = t - np.diag(np.diag(t))
    if np.abs(off).max() >= 10 * tol:
        raise NotNormal(
            f"Schur off-diagonal residual {np.abs(off).max():.3e} >= {10 * tol:.3e}",
            cnorm)
    vals = np.diag(t).copy()
    vecs = z.copy()
    dec = SpectralDecomposition(f.space, vals, vecs, 0.0)
    # re-orthonormalize inside degenerate clusters (QR is a no-op for exact data
    # but protects against accumulated roundoff)
    for group in dec.clusters(1e-8):
        if len(group) > 1:
            q, _ = np.linalg.qr(vecs[:, group])
            vecs[:, group] = q
    recon = (vecs * vals) @ vecs.conj().T
    residual = float(np.abs(recon - m).max())
    return SpectralDecomposition(f.space, vals, vecs, residual)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def symmetrized_moment(state: State, op: Operator) -> float:
    """<|Delta O|^2> with Delta O = O - <O> and |O|^2 = (O O^dag + O^dag O)/2.

    Equals the ordinary variance for Hermitian O; always >= 0.
    """
    m = op.matrix
    sym = (m @ m.conj().T + m.conj().T @ m) / 2.0
    mean = state.expectation(op)
    val = np.real(state.expectation(Operator(op.space, sym))) - abs(mean) ** 2
    return float(val)


def variance(state: State, op: Operator) -> float:
    """<O^2> - <O>^2 for Hermitian O (independent code path, used as oracle)."""
    res = op.hermiticity_residual()
    if res > 1e-9 * max(1.0, float(np.abs(op.matrix).max())):
        raise NotHermitian(f"variance() wants Hermitian O, residual {res:.2e}")
    mean = np.real(state.expectation(op))
    second = np.real(state.expectation(op @ op))
    return float(second - mean ** 2)


def mode_vectors(state: State, mode: int) -> np.ndarray:
    """Ket reshaped to (rest, mode_dim) so single-mode ops act by matvec."""
    if state.kind != "ket":
        raise DimensionMismatch("mode_vectors wants a ket")
    dims = state.space.dims
    psi = state.data.reshape(dims)
    return np.moveaxis(psi, mode, -1).reshape(-1, dims[mode])


def mode_expectation(state: State, mode: int, m: np.ndarray) -> complex:
    """<I x ... x M x ... x I> with single-mode matrix ``m`` acting on ``mode``."""
    if state.kind == "ket":
        psi_m = mode_vectors(state, mode)
        return complex(np.vdot(psi_m, psi_m @ m.T))
    rho = partial_trace(state, mode).data
    return complex(np.trace(m @ rho))


def mode_symmetrized_moment(state: State, mode: int, m: np.ndarray) -> float:
    sym = (m @ m.conj().T + m.conj().T @ m) / 2.0
    mean = mode_expectation(state, mode, m)
    return float(np.real(mode_expectation(state, mode, sym)) - abs(mean) ** 2)


# ---------------------------------------------------------------------------
# composite-space plumbing
# ---------------------------------------------------------------------------

def tensor(*objs):
    """Kronecker product of Operators or of States (mode order = argument order)."""
    if all(isinstance(o, Operator) for o in objs):
        dims = sum((o.space.dims for o in objs), ())
        m = objs[0].matrix
        for o in objs[1:]:
            m = np.kron(m, o.matrix)
        return Operator(FockSpace(dims), m)
    if all(isinstance(o, State) for o in objs):
        dims = sum((o.space.dims for o in objs), ())
        defect = float(sum(o.norm_defect for o in objs))
        if all(o.kind == "ket" for o in objs):
            v = objs[0].data
            for o in objs[1:]:
                v = np.kron(v, o.data)
            return State(FockSpace(dims), "ket", v, defect)
        m = objs[0].to_density().data
        for o in objs[1:]:
            m = np.kron(m, o.to_density().data)
        return State(FockSpace(dims), "density", m, defect)
    raise TypeError("tensor() wants all Operators or all States")


def embed(op: Operator, slot: int, space: FockSpace) -> Operator:
    """Embed a single-mode operator into ``slot`` of a composite space."""
    if op.space.n_modes != 1:
        raise DimensionMismatch("embed() wants a single-mode operator")
    if op.space.dim != space.dims[slot]:
        raise DimensionMismatch(
            f"operator dim {op.space.dim} != mode dim {space.dims[slot]}")
    m = np.eye(1, dtype=complex)
    for i, d in enumerate(space.dims):
        m = np.kron(m, op.matrix if i == slot else np.eye(d, dtype=complex))
    return Operator(space, m)


def partial_trace(state: State, keep) -> State:
    """Trace out all modes not in ``keep`` (int or sequence of ints)."""
    if isinstance(keep, (int, np.integer)):
        keep = (int(keep),)
    keep = tuple(sorted(int(k) for k in keep))
    dims = state.space.dims
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DimensionMismatch("keep index outside mode range")
    kept_dims = tuple(dims[k] for k in keep)
    dk = int(np.prod(kept_dims))
    if state.kind == "ket":
        psi = state.data.reshape(dims)
        psi_k = np.moveaxis(psi, keep, range(len(keep))).reshape(dk, -1)
        rho = psi_k @ psi_k.conj().T
    else:
        rho = state.data.reshape(dims + dims)
        rest = [i for i in range(len(dims)) if i not in keep]
        for i in sorted(rest, reverse=True):
            rho = np.trace(rho, axis1=i, axis2=i + rho.ndim // 2)
        rho = rho.reshape(dk, dk)
    rho = (rho + rho.conj().T) / 2.0
    return State(FockSpace(kept_dims), "density", rho, state.norm_defect)


def cv_swap(space: FockSpace, i: int, j: int) -> Operator:
    """Permutation unitary exchanging the full Hilbert spaces of modes i and j."""
    dims = space.dims
    if dims[i] != dims[j]:
        raise DimensionMismatch("cv_swap wants equal dims on the swapped modes")
    perm = np.arange(space.dim).reshape(dims)
    axes = list(range(len(dims)))
    axes[i], axes[j] = axes[j], axes[i]
    perm = np.transpose(perm, axes).ravel()
    m = np.zeros((space.dim, space.dim), dtype=complex)
    m[np.arange(space.dim), perm] = 1.0
    return Operator(space, m)


# ---------------------------------------------------------------------------
# position representation
# ---------------------------------------------------------------------------

def hermite_functions(nmax: int, xs: np.ndarray) -> np.ndarray:
    """Hermite functions h_n(x), n = 0..nmax-1, shape (nmax, len(xs)).

    h_0(x) = pi^{-1/4} e^{-x^2/2}; the three-term recurrence is run on the
    functions themselves, which stays bounded for large n (unlike the
    polynomial recurrence).
    """
    xs = np.asarray(xs, dtype=float)
    h = np.zeros((nmax, xs.shape[0]))
    h[0] = np.pi ** -0.25 * np.exp(-xs * xs / 2.0)
    if nmax > 1:
        h[1] = np.sqrt(2.0) * xs * h[0]
    for n in range(2, nmax):
        h[n] = np.sqrt(2.0 / n) * xs * h[n - 1] - np.sqrt((n - 1.0) / n) * h[n - 2]
    return h


def quadrature_amplitudes(state: State, grid) -> np.ndarray:
    """<x|psi> on a grid for kets; the diagonal q(x) = <x|rho|x> for densities."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if state.space.n_modes != 1:
        raise DimensionMismatch("quadrature_amplitudes wants a single-mode state")
    h = hermite_functions(state.space.dim, grid)
    if state.kind == "ket":
        return state.data @ h
    return np.einsum("mx,mn,nx->x", h, state.data, h).astype(complex)

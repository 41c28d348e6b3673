"""Detector POVMs and effective measurements induced by preamplification.

An inefficient heterodyne detector with efficiency eta is the coherent-state
POVM smeared by a complex Gaussian of variance sigma^2 = (1 - eta)/eta:

    M_beta = (1/pi^2 sigma^2) int d2gamma e^{-|gamma-beta|^2/sigma^2} |gamma><gamma|

normalized so that int M_beta d2beta = 1. Inefficient homodyne smears the
quadrature projector with sigma^2 = (1 - eta)/(4 eta). Sandwiching a detector
between an amplifier unitary and a fixed meter preparation produces an
effective POVM on the signal mode; for a normal signal operator it is a sum
of Gaussians centered on the eigenvalues, diagonal in the eigenbasis.

All outcome grids and closed forms are stored in the gain-rescaled variable
(raw outcome divided by g), so Gaussian widths shrink as 1/g^2 and decision
regions do not move with the gain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .amplifiers import (Meter, ThreeModeAmp, TwoModeNormalAmp, VonNeumannAmp,
                         meter_dim_for, three_mode_unitary, two_mode_unitary,
                         von_neumann_unitary)
from .errors import CoverageError, DimensionMismatch, TruncationError
from .fock import (FockSpace, Operator, SpectralDecomposition, State,
                   hermite_functions, normal_decompose, quadrature_amplitudes)

HOMODYNE_YGRID_STEP = 0.005
HOMODYNE_YGRID_RANGE = 10.0


# ---------------------------------------------------------------------------
# detectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectorSpec:
    """heterodyne or homodyne linear detector with efficiency eta in (0, 1]."""

    kind: str
    efficiency: float = 1.0

    def __post_init__(self):
        if self.kind not in ("heterodyne", "homodyne"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")

    @property
    def sigma2(self) -> float:
        """Gaussian smearing: (1-eta)/eta heterodyne, (1-eta)/(4 eta) homodyne."""
        eta = self.efficiency
        if self.kind == "heterodyne":
            return (1.0 - eta) / eta
        return (1.0 - eta) / (4.0 * eta)


# ---------------------------------------------------------------------------
# detector elements in the Fock basis
# ---------------------------------------------------------------------------

def heterodyne_element(beta: complex, sigma2: float, space: FockSpace) -> Operator:
    """<m|M_beta|n> in closed form (no numeric 2-D integral).

    With t = 1/(1+sigma^2) and s = sigma^2/(1+sigma^2),

        M_beta = (t/pi) e^{-t|beta|^2} sum_k v_k v_k^dag,
        v_k(k) = s^{k/2},  v_k(m+1) = v_k(m) t beta sqrt(m+1)/(m+1-k),

    which is the Fock projection of the exact smeared coherent projector for
    any beta (entries are exact; only states near the cutoff are affected by
    truncation). sigma^2 = 0 reduces to (1/pi)|beta><beta|.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    d = space.dim
    beta = complex(beta)
    t = 1.0 / (1.0 + sigma2)
    s = sigma2 / (1.0 + sigma2)
    tb = t * beta
    m = np.zeros((d, d), dtype=complex)
    sq = np.sqrt(np.arange(1, d))
    kmax = d if sigma2 > 0 else 1
    for k in range(kmax):
        v = np.zeros(d, dtype=complex)
        v[k] = s ** (k / 2.0)
        for i in range(k + 1, d):
            v[i] = v[i - 1] * tb * sq[i - 1] / (i - k)
        m += np.outer(v, v.conj())
    m *= (t / math.pi) * math.exp(-t * abs(beta) ** 2)
    return Operator(space, m)


def _default_ygrid() -> np.ndarray:
    n = int(round(2 * HOMODYNE_YGRID_RANGE / HOMODYNE_YGRID_STEP)) + 1
    return np.linspace(-HOMODYNE_YGRID_RANGE, HOMODYNE_YGRID_RANGE, n)


def homodyne_element(x: float, sigma2: float, space: FockSpace,
                     y_grid: np.ndarray | None = None) -> Operator:
    """<m|M_x|n> = int K_sigma(x - y) h_m(y) h_n(y) dy by trapezoid quadrature.

    The fixed grid is |y| <= 10 at step 0.005. sigma^2 = 0 returns the
    rank-one outcome density h_m(x) h_n(x) (per unit outcome, not a
    projector).
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    d = space.dim
    if sigma2 == 0.0:
        h = hermite_functions(d, np.array([float(x)]))[:, 0]
        return Operator(space, np.outer(h, h).astype(complex))
    y = _default_ygrid() if y_grid is None else np.asarray(y_grid, dtype=float)
    step = y[1] - y[0]
    h = hermite_functions(d, y)
    k = np.exp(-((float(x) - y) ** 2) / sigma2) / math.sqrt(math.pi * sigma2)
    w = k * step
    w[0] *= 0.5
    w[-1] *= 0.5
    m = (h * w) @ h.T
    return Operator(space, m.astype(complex))


# ---------------------------------------------------------------------------
# POVM containers
# ---------------------------------------------------------------------------

@dataclass
class PovmGrid:
    """Explicit POVM elements on the signal space, one per (rescaled) outcome."""

    outcomes: np.ndarray            # complex (heterodyne/three_mode) or real
    elements: list                  # np.ndarray per outcome
    space: FockSpace
    model: str                      # heterodyne | homodyne | three_mode
    measure: float | None = None    # cell measure per grid point
    width2: float | None = None     # nominal Gaussian width of the elements

    def identity_residual(self) -> float:
        if self.measure is None:
            raise ValueError("grid carries no cell measure")
        total = sum(self.elements) * self.measure
        return float(np.abs(total - np.eye(self.space.dim)).max())

    def min_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh((e + e.conj().T) / 2).min()
                         for e in self.elements))

    def max_offdiagonal(self, basis: np.ndarray) -> float:
        """Largest off-diagonal element magnitude in the given eigenbasis."""
        worst = 0.0
        for e in self.elements:
            t = basis.conj().T @ e @ basis
            worst = max(worst, float(np.abs(t - np.diag(np.diag(t))).max()))
        return worst


@dataclass(frozen=True)
class ClosedFormPovm:
    """Analytic effective POVM: per-eigenvector Gaussians about the eigenvalues.

    Densities per unit rescaled outcome measure:

      heterodyne   (1/(pi w^2)) exp(-|phi - lam_i|^2 / w^2),  w^2 = (sigma^2+1)/g^2
      homodyne     (1/sqrt(pi w^2)) exp(-(x - lam_i)^2 / w^2), w^2 = (sigma^2+eps^2)/g^2
      three_mode   (1/(pi w^2)) exp(-|phi - lam_i|^2 / w^2),  w^2 = (sigma^2+eps^2)/g^2

    The homodyne w^2 corresponds to outcome variance (sigma^2+eps^2)/(2 g^2).
    """

    decomposition: SpectralDecomposition
    g: float
    sigma2: float
    model: str
    epsilon2: float = 1.0

    def __post_init__(self):
        if self.model not in ("heterodyne", "homodyne", "three_mode"):
            raise ValueError(f"unknown POVM model {self.model!r}")
        if self.model == "homodyne":
            if np.abs(np.imag(self.decomposition.eigenvalues)).max() > 1e-9:
                raise ValueError("homodyne model wants a Hermitian signal operator")

    @property
    def width2(self) -> float:
        eps2 = 1.0 if self.model == "heterodyne" else self.epsilon2
        return (self.sigma2 + eps2) / (self.g * self.g)

    def weights(self, outcome) -> np.ndarray:
        """Gaussian density of each eigenvector record at the outcome."""
        lam = self.decomposition.eigenvalues
        w2 = self.width2
        if self.model == "homodyne":
            return np.exp(-((float(np.real(outcome)) - np.real(lam)) ** 2) / w2) \
                / math.sqrt(math.pi * w2)
        return np.exp(-(np.abs(complex(outcome) - lam) ** 2) / w2) / (math.pi * w2)

    def element(self, outcome) -> np.ndarray:
        v = self.decomposition.eigenvectors
        return (v * self.weights(outcome)) @ v.conj().T

    def element_operator(self, outcome) -> Operator:
        return Operator(self.decomposition.space, self.element(outcome))

    def identity_residual(self) -> float:
        """The analytic outcome integral is exactly V V^dag; report its residual."""
        v = self.decomposition.eigenvectors
        return float(np.abs(v @ v.conj().T - np.eye(v.shape[0])).max())

    def evaluate_grid(self, outcomes) -> PovmGrid:
        els = [self.element(o) for o in np.atleast_1d(outcomes)]
        return PovmGrid(np.atleast_1d(outcomes), els, self.decomposition.space,
                        self.model, width2=self.width2)


def effective_povm_closed_form(decomposition: SpectralDecomposition, g: float,
                               sigma2: float, model: str,
                               epsilon: float = 1.0) -> ClosedFormPovm:
    """Analytic effective POVM for a decomposed normal signal operator."""
    return ClosedFormPovm(decomposition, float(g), float(sigma2), model,
                          float(epsilon) ** 2)


# ---------------------------------------------------------------------------
# numeric sandwich
# ---------------------------------------------------------------------------

def _evolved_columns(u: np.ndarray, da: int, meter_kets) -> np.ndarray:
    """U (|j>_a (x) |meters>) for j = 0..da-1, shaped (da, *meter_dims, da)."""
    mk = meter_kets[0]
    for extra in meter_kets[1:]:
        mk = np.kron(mk, extra)
    cols = np.zeros((u.shape[0], da), dtype=complex)
    block = mk.shape[0]
    for j in range(da):
        vec = np.zeros(u.shape[0], dtype=complex)
        vec[j * block:(j + 1) * block] = mk
        cols[:, j] = u @ vec
    dims = (da,) + tuple(k.shape[0] for k in meter_kets) + (da,)
    return cols.reshape(*dims[:-1], da)


def effective_povm_numeric(amp, detector: DetectorSpec, outcomes,
                           dims=None) -> PovmGrid:
    """E(outcome) = <meters| U^dag M U |meters> on the signal mode, rescaled.

    The amplifier fixes the model: a two-mode normal amplifier is read out by
    heterodyne on its meter; a von Neumann amplifier by homodyne; a
    three-mode amplifier by two homodyne detectors of equal efficiency. The
    homodyne-type couplings are driven at kappa t = g/sqrt(2) so the
    displacement seen by each meter is g times the (standard) real or
    imaginary part of the eigenvalue, matching the closed-form records whose
    centers are the complex eigenvalues themselves.

    ``outcomes`` are rescaled (outcome/g); elements carry the matching
    Jacobian (g^2 for complex outcomes, g for real ones).
    """
    outcomes = np.atleast_1d(outcomes)
    sig2 = detector.sigma2
    g = amp.g
    da = amp.f.space.dim
    dec = normal_decompose(amp.f)
    fmax = float(np.abs(dec.eigenvalues).max())

    if isinstance(amp, TwoModeNormalAmp):
        if detector.kind != "heterodyne":
            raise ValueError("two-mode normal amplifier is read out by heterodyne")
        db = dims[0] if dims else meter_dim_for(g, fmax)
        u = two_mode_unitary(amp.f, g, (da, db))
        meter = amp.meter.state(db)
        psi = _evolved_columns(u.matrix, da, [meter.data])
        t = np.einsum("ami,anj->ijmn", psi.conj(), psi, optimize=True)
        tmat = t.reshape(da * da, db * db)
        els = []
        msp = FockSpace(db)
        for phi in outcomes:
            m = heterodyne_element(g * complex(phi), sig2, msp).matrix
            els.append((tmat @ m.ravel()).reshape(da, da) * g * g)
        return PovmGrid(outcomes, els, FockSpace(da), "heterodyne",
                        width2=(sig2 + 1.0) / g ** 2)

    if isinstance(amp, VonNeumannAmp):
        if detector.kind != "homodyne":
            raise ValueError("von Neumann amplifier is read out by homodyne")
        db = dims[0] if dims else meter_dim_for(g, fmax)
        v = von_neumann_unitary(amp.f, g / math.sqrt(2.0), (da, db))
        meter = amp.meter.state(db)
        psi = _evolved_columns(v.matrix, da, [meter.data])
        t = np.einsum("ami,anj->ijmn", psi.conj(), psi, optimize=True)
        tmat = t.reshape(da * da, db * db)
        els = []
        msp = FockSpace(db)
        for phi in outcomes:
            m = homodyne_element(g * float(np.real(phi)), sig2, msp).matrix
            els.append((tmat @ m.ravel()).reshape(da, da) * g)
        return PovmGrid(np.real(outcomes), els, FockSpace(da), "homodyne",
                        width2=(sig2 + _meter_eps2(amp.meter)) / g ** 2)

    if isinstance(amp, ThreeModeAmp):
        if detector.kind != "homodyne":
            raise ValueError("three-mode amplifier is read out by two homodynes")
        if dims:
            db, dc = dims
        else:
            db = meter_dim_for(g, float(np.abs(np.real(dec.eigenvalues)).max()))
            dc = meter_dim_for(g, float(np.abs(np.imag(dec.eigenvalues)).max()))
        w = three_mode_unitary(amp.f, g / math.sqrt(2.0), (da, db, dc))
        mb = amp.meter_b.state(db)
        mc = amp.meter_c.state(dc)
        psi = _evolved_columns(w.matrix, da, [mb.data, mc.data])
        t = np.einsum("amci,andj->ijmncd", psi.conj(), psi, optimize=True)
        els = []
        bsp, csp = FockSpace(db), FockSpace(dc)
        for phi in outcomes:
            myb = homodyne_element(g * float(np.real(phi)), sig2, bsp).matrix
            myc = homodyne_element(g * float(np.imag(phi)), sig2, csp).matrix
            e = np.einsum("ijmncd,mn,cd->ij", t, myb, myc, optimize=True)
            els.append(e * g * g)
        return PovmGrid(outcomes, els, FockSpace(da), "three_mode",
                        width2=(sig2 + _meter_eps2(amp.meter_b)) / g ** 2)

    raise TypeError(f"no effective POVM for {type(amp)!r}")


def _meter_eps2(meter: Meter) -> float:
    if meter.kind == "gaussian":
        return meter.epsilon ** 2
    if meter.kind == "squeezed":
        return math.exp(-2.0 * meter.r)
    return 1.0


# ---------------------------------------------------------------------------
# decision regions and coarse graining
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecisionRegions:
    """Voronoi cells around eigenvalue clusters; nearest-center assignment."""

    centers: np.ndarray
    members: tuple

    @classmethod
    def from_decomposition(cls, dec: SpectralDecomposition,
                           tol: float = 1e-8) -> "DecisionRegions":
        groups = dec.clusters(tol)
        centers = np.array([dec.eigenvalues[g].mean() for g in groups])
        return cls(centers, tuple(tuple(int(i) for i in g) for g in groups))

    @property
    def n_regions(self) -> int:
        return len(self.centers)

    def assign(self, outcomes) -> np.ndarray:
        outcomes = np.atleast_1d(outcomes)
        dist = np.abs(outcomes[:, None] - self.centers[None, :])
        return np.argmin(dist, axis=1)


def _collinear_axis(centers: np.ndarray):
    """Unit direction if all centers lie on one line in C, else None."""
    if len(centers) <= 1:
        return complex(1.0), 0.0
    c0 = centers[0]
    rel = centers - c0
    scale = np.abs(rel).max()
    if scale == 0:
        return complex(1.0), 0.0
    u = rel[np.argmax(np.abs(rel))] / np.abs(rel[np.argmax(np.abs(rel))])
    perp = np.abs(np.imag(rel * np.conj(u)))
    if perp.max() > 1e-9 * max(1.0, scale):
        return None
    return u, None


def coarse_grain(povm, regions: DecisionRegions) -> list[Operator]:
    """One operator per decision region, summing the POVM over each cell.

    Closed-form POVMs with collinear cluster centers use exact error-function
    slab integrals (the orthogonal Gaussian direction integrates to one), so
    no grid error enters. Numeric grids are summed with their cell measure
    after a coverage check of five nominal widths beyond the extreme centers.
    """
    if isinstance(povm, ClosedFormPovm):
        return _coarse_grain_closed(povm, regions)
    if povm.measure is None:
        raise CoverageError("numeric coarse graining needs a grid with a measure")
    if povm.width2 is not None and regions.n_regions > 0:
        w = math.sqrt(povm.width2)
        lo_needed = regions.centers.real.min() - 5 * w
        hi_needed = regions.centers.real.max() + 5 * w
        pts = np.atleast_1d(povm.outcomes)
        if pts.real.min() > lo_needed or pts.real.max() < hi_needed:
            raise CoverageError(
                f"grid [{pts.real.min():.2f}, {pts.real.max():.2f}] does not cover "
                f"regions to 5 widths [{lo_needed:.2f}, {hi_needed:.2f}]")
    idx = regions.assign(povm.outcomes)
    d = povm.space.dim
    out = [np.zeros((d, d), dtype=complex) for _ in range(regions.n_regions)]
    for e, k in zip(povm.elements, idx):
        out[k] += e * povm.measure
    return [Operator(povm.space, m) for m in out]


def _coarse_grain_closed(povm: ClosedFormPovm, regions: DecisionRegions):
    dec = povm.decomposition
    lam = dec.eigenvalues
    v = dec.eigenvectors
    w = math.sqrt(povm.width2)
    if regions.n_regions == 1:
        ident = v @ v.conj().T
        return [Operator(dec.space, ident)]
    axis = _collinear_axis(regions.centers)
    if axis is None:
        raise CoverageError(
            "exact coarse graining implemented for collinear cluster centers; "
            "integrate a numeric grid for general complex configurations")
    u = axis[0]
    t_centers = np.real((regions.centers - regions.centers[0]) * np.conj(u))
    t_lam = np.real((lam - regions.centers[0]) * np.conj(u))
    order = np.argsort(t_centers)
    bounds = np.empty(regions.n_regions + 1)
    bounds[0], bounds[-1] = -np.inf, np.inf
    sorted_t = t_centers[order]
    bounds[1:-1] = 0.5 * (sorted_t[1:] + sorted_t[:-1])
    ops = [None] * regions.n_regions
    for pos, region in enumerate(order):
        lo, hi = bounds[pos], bounds[pos + 1]
        hi_e = np.ones_like(t_lam) if np.isinf(hi) else 0.5 * (1 + erf((hi - t_lam) / w))
        lo_e = np.zeros_like(t_lam) if np.isinf(lo) else 0.5 * (1 + erf((lo - t_lam) / w))
        mass = hi_e - lo_e
        ops[region] = Operator(dec.space, (v * mass) @ v.conj().T)
    return ops


def own_region_weights(povm: ClosedFormPovm, regions: DecisionRegions) -> np.ndarray:
    """<e_i | Pi_own(i) | e_i> averaged over each cluster's members."""
    ops = coarse_grain(povm, regions)
    v = povm.decomposition.eigenvectors
    out = np.zeros(regions.n_regions)
    for k, members in enumerate(regions.members):
        vals = [float(np.real(v[:, i].conj() @ ops[k].matrix @ v[:, i]))
                for i in members]
        out[k] = float(np.mean(vals))
    return out


# ---------------------------------------------------------------------------
# outcome sampling
# ---------------------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _coherent_overlap_matrix(dim: int, betas: np.ndarray) -> np.ndarray:
    """C[n, j] = <n|beta_j> = e^{-|b|^2/2} b^n / sqrt(n!), stable cumulative form."""
    c = np.zeros((dim, betas.shape[0]), dtype=complex)
    c[0] = np.exp(-0.5 * np.abs(betas) ** 2)
    for n in range(1, dim):
        c[n] = c[n - 1] * betas / math.sqrt(n)
    return c


def husimi_values(state: State, betas: np.ndarray) -> np.ndarray:
    """Q(beta) = <beta|rho|beta>/pi, vectorized over a flat array of betas."""
    dim = state.space.dim
    c = _coherent_overlap_matrix(dim, np.asarray(betas, dtype=complex))
    if state.kind == "ket":
        amp = c.conj().T @ state.data
        return np.abs(amp) ** 2 / math.pi
    q = np.einsum("mg,mn,ng->g", c.conj(), state.data, c, optimize=True)
    return np.real(q) / math.pi


def _inverse_cdf_draw(rng, weights: np.ndarray, n: int) -> np.ndarray:
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n), side="right").clip(0, len(weights) - 1)


def sample_outcomes(state: State, detector: DetectorSpec, n: int,
                    seed: int) -> np.ndarray:
    """n detector outcomes for a single-mode state; deterministic given seed.

    Ideal outcomes come from a grid inverse-CDF of the Husimi density
    (heterodyne, square grid |Re|,|Im| <= sqrt(dim)+4, step 0.05) or of the
    position density (homodyne, same range and step), with uniform jitter
    inside each cell; detector noise of per-axis variance sigma^2/2 is added
    on top.
    """
    if state.space.n_modes != 1:
        raise DimensionMismatch("sampler wants a single-mode state")
    top = float(state.probabilities()[-1])
    if top > 1e-6:
        raise TruncationError(
            f"state holds {top:.2e} probability at its cutoff; the outcome "
            "grid would miss mass beyond it")
    rng = _rng(seed)
    dim = state.space.dim
    half = math.sqrt(dim) + 4.0
    step = 0.05
    axis = np.arange(-half, half + step / 2, step)
    sig = math.sqrt(detector.sigma2 / 2.0)
    if detector.kind == "heterodyne":
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        betas = (gx + 1j * gy).ravel()
        q = husimi_values(state, betas)
        cells = _inverse_cdf_draw(rng, q, n)
        jit = rng.uniform(-step / 2, step / 2, size=(n, 2))
        ideal = betas[cells] + jit[:, 0] + 1j * jit[:, 1]
        noise = rng.normal(0.0, 1.0, size=(n, 2)) * sig
        return ideal + noise[:, 0] + 1j * noise[:, 1]
    q = np.abs(quadrature_amplitudes(state, axis)) ** 2 if state.kind == "ket" \
        else np.real(quadrature_amplitudes(state, axis))
    cells = _inverse_cdf_draw(rng, q, n)
    ideal = axis[cells] + rng.uniform(-step / 2, step / 2, size=n)
    return ideal + rng.normal(0.0, 1.0, size=n) * sig


def sample_outcome(state: State, detector: DetectorSpec, seed: int):
    """Single outcome; complex for heterodyne, real for homodyne."""
    out = sample_outcomes(state, detector, 1, seed)[0]
    return complex(out) if detector.kind == "heterodyne" else float(np.real(out))


def smeared_position_density(state: State, sigma2: float,
                             xs: np.ndarray) -> np.ndarray:
    """q(x) convolved with the homodyne noise kernel (analytic oracle helper)."""
    y = _default_ygrid()
    step = y[1] - y[0]
    q = np.abs(quadrature_amplitudes(state, y)) ** 2 if state.kind == "ket" \
        else np.real(quadrature_amplitudes(state, y))
    if sigma2 == 0.0:
        return np.interp(xs, y, q)
    out = np.empty_like(np.asarray(xs, dtype=float))
    for i, xv in enumerate(np.asarray(xs, dtype=float)):
        k = np.exp(-((xv - y) ** 2) / sigma2) / math.sqrt(math.pi * sigma2)
        out[i] = float(np.sum(k * q) * step)
    return out


# ---------------------------------------------------------------------------
# CSV export of closed-form grids
# ---------------------------------------------------------------------------

def povm_csv_rows(povm: ClosedFormPovm, outcomes, measure: float):
    """Rows (outcome_re, outcome_im, measure, eigen_index, weight)."""
    for o in np.atleast_1d(outcomes):
        wts = povm.weights(o)
        for i, wv in enumerate(wts):
            yield (float(np.real(o)), float(np.imag(o)), float(measure), i,
                   float(wv))

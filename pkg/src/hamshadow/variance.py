"""Second-moment theory of the per-snapshot estimator.

The exact second moment E o-hat^2 is a third-order phase average. With
ideal random phases only index patterns whose row and column triples
agree as multisets survive, so the sum splits by multiplicity class:
six permutation-matched unconstrained sums, minus nine two-free-index
sums over the twice-repeated class, plus a one-index correction. The
counting identity (all factors set to 1) reproduces 6d^3 - 9d^2 + 4d,
the third frame potential, which pins the coefficients.

Closed-form approximations for linear and two-copy observables and the
shadow-norm style worst-case bound are also provided.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .estimators import Observable, transformed_observable
from .qmatrix import as_complex, check_density, swap_operator
from .shadowmap import ShadowInverter, ZERO_OFFDIAG_TOL

CONTRACTION_GUARD = 2**24  # limit on d^3 for the dense third-moment pass


@dataclass(frozen=True)
class VarianceReport:
    approx_f: float
    dims_note: str
    exact_second_moment: float | None = None
    shadow_norm_sq: float | None = None
    empirical_variance: float | None = None

    def __post_init__(self):
        for name in ("approx_f", "exact_second_moment", "shadow_norm_sq",
                     "empirical_variance"):
            val = getattr(self, name)
            if val is not None and val < -1e-12:
                raise ValueError(f"{name} must be non-negative, got {val}")

    def csv_row(self, name: str, seed, fingerprint: str) -> str:
        def fmt(x):
            return "" if x is None else repr(x)
        return (f"{name},{fmt(self.exact_second_moment)},{fmt(self.shadow_norm_sq)},"
                f"{self.approx_f!r},{fmt(self.empirical_variance)},"
                f"{self.dims_note},{seed},{fingerprint}")


VARIANCE_CSV_HEADER = ("observable,exact_second_moment,shadow_norm_sq,approx_f,"
                      "empirical_variance,dims_note,seed,fingerprint")


def _check_guard(d: int) -> None:
    if d**3 > CONTRACTION_GUARD:
        raise ValueError(
            f"dimension {d} exceeds the third-moment contraction guard")


def _pair_factor(mats: np.ndarray, row_is_b: bool, col_is_b: bool) -> np.ndarray:
    """One factor of a twice-repeated-index sum as a (B, d, d) array in (a, b)."""
    d = mats.shape[1]
    diag = mats[:, np.arange(d), np.arange(d)]
    if not row_is_b and not col_is_b:
        return np.broadcast_to(diag[:, :, None], mats.shape)  # M[a, a]
    if row_is_b and col_is_b:
        return np.broadcast_to(diag[:, None, :], mats.shape)  # M[b, b]
    if not row_is_b and col_is_b:
        return mats                                           # M[a, b]
    return mats.transpose(0, 2, 1)                            # M[b, a]


def _second_moment_eigenframe(inv: ShadowInverter, o_t: np.ndarray,
                              rho_h: np.ndarray) -> float:
    """E o-hat^2 for an eigenframe state, ideal random phases.

    o_t is the transformed observable, rho_h the state in the eigenframe
    (any matrix; the result is linear in it).
    """
    d = inv.dim
    _check_guard(d)
    v = inv.hamiltonian.eigenbasis
    # factor stacks over outcomes: W[b, m, n] = o_t[m, n] V[b, m] conj(V[b, n])
    w = o_t[None, :, :] * v[:, :, None] * v.conj()[:, None, :]
    r = rho_h[None, :, :] * v[:, :, None] * v.conj()[:, None, :]
    tr_w = np.einsum("bmm->b", w)
    tr_r = np.einsum("bmm->b", r)
    tr_ww = np.einsum("bmn,bnm->b", w, w)
    tr_wr = np.einsum("bmn,bnm->b", w, r)
    tr_wwr = np.einsum("bmn,bnp,bpm->b", w, w, r)
    perm_total = np.sum(tr_w * tr_w * tr_r + tr_ww * tr_r
                        + 2 * tr_wr * tr_w + 2 * tr_wwr)
    # twice-repeated class: positions of the distinct index in rows/columns
    pair_total = 0.0 + 0.0j
    for i_pos in range(3):
        for j_pos in range(3):
            factors = []
            for slot, m in ((0, w), (1, w), (2, r)):
                factors.append(_pair_factor(m, slot == i_pos, slot == j_pos))
            pair_total += np.einsum("bxy,bxy,bxy->", *factors)
    dw = w[:, np.arange(d), np.arange(d)]
    dr = r[:, np.arange(d), np.arange(d)]
    all_equal = np.einsum("ba,ba,ba->", dw, dw, dr)
    return float((perm_total - pair_total + 4 * all_equal).real)


def second_moment_exact(inv: ShadowInverter, o: Observable, rho) -> float:
    """E o-hat^2 under ideal random phases for a given state."""
    rho = check_density(rho)
    v = inv.hamiltonian.eigenbasis
    o_t = transformed_observable(inv, o)
    rho_h = v.conj().T @ rho @ v
    return _second_moment_eigenframe(inv, o_t, rho_h)


def variance_exact(inv: ShadowInverter, o: Observable, rho) -> float:
    rho = check_density(rho)
    mean = float(np.trace(o.matrix @ rho).real)
    val = second_moment_exact(inv, o, rho) - mean**2
    return max(val, 0.0)


def shadow_norm_sq(inv: ShadowInverter, o: Observable) -> float:
    """Worst-case second moment over states.

    E o-hat^2 is linear in the state, so the maximum over states is the
    largest eigenvalue of the d x d operator representing that linear
    functional, assembled column by column from unit matrices.
    """
    d = inv.dim
    _check_guard(d)
    o_t = transformed_observable(inv, o)
    kmat = np.empty((d, d), dtype=complex)
    basis = np.zeros((d, d), dtype=complex)
    for p in range(d):
        for q in range(d):
            basis[p, q] = 1.0
            kmat[q, p] = _second_moment_eigenframe(inv, o_t, basis)
            basis[p, q] = 0.0
    kmat = (kmat + kmat.conj().T) / 2
    return float(np.linalg.eigvalsh(kmat)[-1])


def variance_approx_linear(inv: ShadowInverter, o: Observable,
                           dim_prefactor: bool = True) -> float:
    """Closed-form variance proxy from eigenframe off-diagonals.

    Returns (1/d) sum_{i != j} |A_ij|^2 / X_ij with A the eigenframe
    observable. ``dim_prefactor=False`` drops the 1/d factor, matching an
    alternative normalization of the same quantity.
    """
    inv.require_complete()
    v = inv.hamiltonian.eigenbasis
    a = v.conj().T @ o.matrix @ v
    d = inv.dim
    off = ~np.eye(d, dtype=bool)
    x_off = inv.x_h[off]
    if np.any(np.abs(x_off) < ZERO_OFFDIAG_TOL):
        raise ValueError("zero off-diagonal weight encountered")
    total = float(np.sum(np.abs(a[off]) ** 2 / x_off))
    return total / d if dim_prefactor else total


def variance_approx_nonlinear(inv: ShadowInverter, o: Observable) -> float:
    """Closed-form proxy for two-copy observables.

    (1/d^2) sum over off-diagonal pairs of |two-copy eigenframe element|^2
    divided by the product of weights; for O = SWAP this collapses to
    (1/d^2) sum_{i != j} X_ij^{-2}.
    """
    inv.require_complete()
    d = inv.dim
    if o.copies != 2 or o.matrix.shape != (d * d, d * d):
        raise ValueError("expected a two-copy observable")
    off = ~np.eye(d, dtype=bool)
    if np.any(np.abs(inv.x_h[off]) < ZERO_OFFDIAG_TOL):
        raise ValueError("zero off-diagonal weight encountered")
    if np.allclose(o.matrix, swap_operator(d), atol=1e-12):
        return float(np.sum(1.0 / inv.x_h[off] ** 2)) / d**2
    v = inv.hamiltonian.eigenbasis
    w2 = np.kron(v, v)
    a4 = (w2.conj().T @ o.matrix @ w2).reshape(d, d, d, d)
    # element <j j'| A |i i'> = a4[j, jp, i, ip]
    amp = np.abs(a4) ** 2
    weight = 1.0 / (inv.x_h[:, :, None, None] * inv.x_h[None, None, :, :])
    # weight indexed [i, j, i', j'], amplitude indexed [j, j', i, i']
    amp = amp.transpose(2, 0, 3, 1)  # -> [i, j, i', j']
    mask = off[:, :, None, None] & off[None, None, :, :]
    return float(np.sum(amp[mask] * weight[mask])) / d**2


def empirical_variance(per_snapshot_values) -> float:
    vals = np.asarray(per_snapshot_values, dtype=float)
    if len(vals) < 2:
        raise ValueError("need at least 2 values")
    return float(np.var(vals, ddof=1))


def sample_complexity(epsilon: float, num_observables: int,
                      max_norm_sq: float, delta: float = 0.01) -> int:
    """Shots needed so all estimates land within epsilon, asymptotic form.

    K = ceil(max_norm_sq * log(2 M / delta) / epsilon^2) with unit leading
    constant; the true constant prefactors are not pinned down by the
    analysis, so this is an order-of-magnitude planning number.
    """
    if epsilon <= 0 or delta <= 0 or num_observables < 1 or max_norm_sq < 0:
        raise ValueError("invalid sample-complexity inputs")
    warnings.warn(
        "sample_complexity uses conventional unit constants; the bound's "
        "true prefactors are not specified", stacklevel=2)
    return int(math.ceil(max_norm_sq * math.log(2 * num_observables / delta)
                         / epsilon**2))


def variance_report(inv: ShadowInverter, o: Observable, rho=None,
                    per_snapshot_values=None) -> VarianceReport:
    approx = variance_approx_linear(inv, o) if o.copies == 1 \
        else variance_approx_nonlinear(inv, o)
    exact = None
    if rho is not None and o.copies == 1:
        exact = second_moment_exact(inv, o, rho)
    norm = shadow_norm_sq(inv, o) if o.copies == 1 else None
    emp = empirical_variance(per_snapshot_values) \
        if per_snapshot_values is not None else None
    note = f"d={inv.dim};mode={inv.mode}"
    return VarianceReport(approx_f=approx, dims_note=note,
                          exact_second_moment=exact, shadow_norm_sq=norm,
                          empirical_variance=emp)

"""Moment calculus of random diagonal unitaries.

Exact moment maps, degeneracy-modified second moments, finite phase
designs, and frame potentials (closed form, finite-time analytic, and
Monte-Carlo).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

MAX_DESIGN_SIZE = 2**24
MAX_FP_TERMS = 10**8


@dataclass(frozen=True)
class DegeneracySpec:
    """Energy list plus the tolerance used to detect exact linear relations."""

    energies: np.ndarray
    resolution: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "energies", np.asarray(self.energies, dtype=float))
        if self.resolution < 0:
            raise ValueError("resolution must be non-negative")

    @property
    def dim(self) -> int:
        return len(self.energies)

    def first_order_pairs(self) -> list[tuple[int, int]]:
        """Index pairs (a, b), a < b, with E_a == E_b within resolution."""
        e = self.energies
        return [(a, b) for a in range(len(e)) for b in range(a + 1, len(e))
                if abs(e[a] - e[b]) <= self.resolution]

    def second_order_resonances(self) -> list[tuple[int, int, int, int]]:
        """Quadruples (a1, a2, b1, b2) with E_a1+E_a2 == E_b1+E_b2.

        Only non-trivial relations are reported: the index pairs differ as
        unordered pairs. Pairs that merely restate a first-order degeneracy
        are filtered out.
        """
        e = self.energies
        d = len(e)
        if d > 256:
            raise ValueError("resonance enumeration capped at dimension 256")
        first = set()
        for a, b in self.first_order_pairs():
            first.add((a, b))
        out = []
        pairs = [(i, j) for i in range(d) for j in range(i, d)]
        sums = [(e[i] + e[j], i, j) for i, j in pairs]
        sums.sort()
        for x in range(len(sums)):
            for y in range(x + 1, len(sums)):
                if sums[y][0] - sums[x][0] > 2 * self.resolution + 1e-15:
                    break
                a1, a2 = sums[x][1], sums[x][2]
                b1, b2 = sums[y][1], sums[y][2]
                if {a1, a2} == {b1, b2}:
                    continue
                # skip relations implied by a first-order degeneracy
                shared = {a1, a2} & {b1, b2}
                if shared:
                    ra = ({a1, a2} - shared or shared).pop()
                    rb = ({b1, b2} - shared or shared).pop()
                    if (min(ra, rb), max(ra, rb)) in first:
                        continue
                out.append((a1, a2, b1, b2))
        return out


def _index_tuples(d: int, k: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(d), repeat=k))


def phi_k_diagonal(m, k: int) -> np.ndarray:
    """k-th moment map of ideal random diagonal unitaries.

    An element m[(i1..ik), (j1..jk)] survives iff the row and column index
    tuples agree as multisets; every other element is zeroed.
    """
    if k not in (1, 2, 3):
        raise ValueError("only moment orders 1, 2, 3 are supported")
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    d = round(n ** (1.0 / k))
    if d**k != n or m.shape != (n, n):
        raise ValueError(f"matrix dimension {m.shape} is not a {k}-fold power")
    keys = [tuple(sorted(t)) for t in _index_tuples(d, k)]
    ids = {}
    key_id = np.array([ids.setdefault(key, len(ids)) for key in keys])
    mask = key_id[:, None] == key_id[None, :]
    return np.where(mask, m, 0.0)


def phi2_with_energies(m, spec: DegeneracySpec) -> np.ndarray:
    """Second moment map for the phase ensemble generated by fixed energies.

    An element (ij, kl) survives iff E_i + E_j - E_k - E_l = 0 within the
    spec resolution. For generic energies this reduces to
    ``phi_k_diagonal(m, 2)``; first-order degeneracies and second-order
    resonances add exactly the extra surviving patterns.
    """
    m = np.asarray(m, dtype=complex)
    d = spec.dim
    if m.shape != (d * d, d * d):
        raise ValueError("matrix dimension does not match energy count squared")
    e = spec.energies
    s = (e[:, None] + e[None, :]).reshape(-1)  # pair sums, index = i*d+j
    mask = np.abs(s[:, None] - s[None, :]) <= spec.resolution
    return np.where(mask, m, 0.0)


@dataclass(frozen=True)
class DiagonalDesign:
    """Finite phase ensemble matching RDU moments up to order k.

    Each coordinate phase is drawn from {2*pi*m/(k+1) : m = 0..k}. The full
    product set has (k+1)^d members; ``enumerate_phases`` materializes it
    when that is desk-sized, ``sample`` draws uniformly from it otherwise.
    """

    k: int
    d: int

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise ValueError("design order must be 1, 2, or 3")
        if self.d < 1:
            raise ValueError("dimension must be positive")

    @property
    def size(self) -> int:
        return (self.k + 1) ** self.d

    @property
    def enumerable(self) -> bool:
        return self.size <= MAX_DESIGN_SIZE

    def enumerate_phases(self) -> np.ndarray:
        """All phase vectors, shape (size, d)."""
        if not self.enumerable:
            raise ValueError(
                f"design of size {self.size} exceeds the enumeration guard")
        base = 2 * np.pi * np.arange(self.k + 1) / (self.k + 1)
        grids = np.meshgrid(*([base] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        m = rng.integers(0, self.k + 1, size=(n, self.d))
        return 2 * np.pi * m / (self.k + 1)


def diagonal_design(k: int, d: int) -> DiagonalDesign:
    return DiagonalDesign(k, d)


def _compositions(k: int, d: int) -> np.ndarray:
    """All tuples of d non-negative integers summing to k, shape (n, d)."""
    out = []
    for bars in itertools.combinations(range(k + d - 1), d - 1):
        prev = -1
        comp = []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(k + d - 2 - prev)
        out.append(comp)
    return np.array(out, dtype=np.int64)


def _multinomial(k: int, comp: np.ndarray) -> np.ndarray:
    coefs = np.full(len(comp), math.factorial(k), dtype=float)
    for col in comp.T:
        coefs /= np.array([math.factorial(int(c)) for c in col])
    return coefs


def frame_potential_rdu_exact(k: int, d: int) -> float:
    """Frame potential of ideal random diagonal unitaries.

    Evaluates the multinomial sum sum_{n1+..+nd=k} multinom(k; n)^2, which
    equals d, 2d^2-d, 6d^3-9d^2+4d for k = 1, 2, 3.
    """
    if k not in (1, 2, 3):
        raise ValueError("only k = 1, 2, 3 are supported")
    comp = _compositions(k, d)
    return float(np.sum(_multinomial(k, comp) ** 2))


def _window_weight_sq(omega: np.ndarray, t_min: float, t_max: float) -> np.ndarray:
    """|(e^{i w tmax} - e^{i w tmin}) / (i dt w)|^2 with w -> 0 limit 1."""
    dt = t_max - t_min
    x = omega * dt / 2.0
    return np.sinc(x / np.pi) ** 2


def frame_potential_finite_time(spec: DegeneracySpec, k: int,
                                t_min: float, t_max: float) -> float:
    """Frame potential of the diagonal-phase ensemble from a finite window.

    Closed-form double multinomial sum with squared sinc weights over the
    energy mismatch of each composition pair.
    """
    if k not in (1, 2, 3):
        raise ValueError("only k = 1, 2, 3 are supported")
    if not t_max > t_min:
        raise ValueError("t_max must exceed t_min")
    d = spec.dim
    comp = _compositions(k, d)
    n = len(comp)
    if n * n > MAX_FP_TERMS:
        raise ValueError(f"{n*n} summation terms exceed the enumeration guard")
    coefs = _multinomial(k, comp)
    freq = comp @ spec.energies  # per-composition sum of n_j E_j
    total = 0.0
    chunk = max(1, MAX_FP_TERMS // (64 * n))
    for start in range(0, n, chunk):
        om = freq[start:start + chunk, None] - freq[None, :]
        w = _window_weight_sq(om, t_min, t_max)
        total += float(np.sum(coefs[start:start + chunk, None] * coefs[None, :] * w))
    return total


def frame_potential_mc(sampler, k: int, num_samples: int,
                       seed: int) -> tuple[float, float]:
    """Pair-sample Monte-Carlo estimate of E|Tr(U^dag V)|^{2k}.

    ``sampler(rng)`` must return the diagonal of one unitary as a complex
    vector. Each sample uses an independent counter-based substream, so the
    estimate is reproducible regardless of evaluation order.
    """
    from .sampler import substream

    if num_samples < 2:
        raise ValueError("need at least 2 samples")
    vals = np.empty(num_samples)
    for i in range(num_samples):
        rng = substream(seed, i)
        u = sampler(rng)
        v = sampler(rng)
        vals[i] = np.abs(np.vdot(u, v)) ** (2 * k)
    est = float(np.mean(vals))
    err = float(np.std(vals, ddof=1) / np.sqrt(num_samples))
    return est, err


def rdu_sampler(d: int):
    """Sampler of ideal random-diagonal-unitary diagonals."""
    def draw(rng: np.random.Generator) -> np.ndarray:
        return np.exp(1j * rng.uniform(0, 2 * np.pi, size=d))
    return draw


def window_sampler(energies, t_min: float, t_max: float):
    """Sampler of diagonals exp(-i E t) with t uniform in the window."""
    energies = np.asarray(energies, dtype=float)
    def draw(rng: np.random.Generator) -> np.ndarray:
        t = rng.uniform(t_min, t_max)
        return np.exp(-1j * energies * t)
    return draw

"""Simulated quench-measurement experiments.

Each shot evolves the target state under the Hamiltonian for a random
time (or with ideal random phases), samples a bitstring from the Born
distribution, and records a snapshot. All randomness flows through
counter-based Philox substreams keyed by (seed, shot index), so a batch
is a pure function of its arguments regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qmatrix import SpectralHamiltonian, as_complex
from .shadowmap import Snapshot, hamiltonian_fingerprint

BORN_TOL = 1e-9


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent, reproducible RNG stream for (seed, path...)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TimeModel:
    """How the random evolution is drawn for each shot.

    kind is "uniform-window" (t uniform in [t_min, t_max] us),
    "ideal-rdu" (iid uniform phases, no time), or "design" (phases from
    the finite k-design grid).
    """

    kind: str
    t_min: float = 0.0
    t_max: float = 0.0
    k: int = 2

    def __post_init__(self):
        if self.kind not in ("uniform-window", "ideal-rdu", "design"):
            raise ValueError(f"unknown time model {self.kind!r}")
        if self.kind == "uniform-window" and not (self.t_max > self.t_min >= 0):
            raise ValueError("uniform-window requires t_max > t_min >= 0")
        if self.kind == "design" and self.k not in (1, 2, 3):
            raise ValueError("design order must be 1, 2, or 3")

    def describe(self) -> str:
        if self.kind == "uniform-window":
            return f"uniform-window t_min={self.t_min!r} t_max={self.t_max!r}"
        if self.kind == "design":
            return f"design k={self.k}"
        return "ideal-rdu"

    @staticmethod
    def parse(text: str) -> "TimeModel":
        parts = text.split()
        kind = parts[0]
        kw = dict(p.split("=", 1) for p in parts[1:])
        if kind == "uniform-window":
            return TimeModel(kind, t_min=float(kw["t_min"]), t_max=float(kw["t_max"]))
        if kind == "design":
            return TimeModel(kind, k=int(kw["k"]))
        return TimeModel(kind)


@dataclass(frozen=True)
class SnapshotSet:
    snapshots: list
    hamiltonian_fingerprint: str
    seed: int
    time_model: TimeModel

    def __len__(self) -> int:
        return len(self.snapshots)


def _draw_evolution(dim: int, tm: TimeModel, rng: np.random.Generator):
    """Returns (time, phases) with exactly one of them set."""
    if tm.kind == "uniform-window":
        return float(rng.uniform(tm.t_min, tm.t_max)), None
    if tm.kind == "design":
        m = rng.integers(0, tm.k + 1, size=dim)
        return None, 2 * np.pi * m / (tm.k + 1)
    return None, rng.uniform(0, 2 * np.pi, size=dim)


def born_probabilities(h: SpectralHamiltonian, rho_h: np.ndarray,
                       phases: np.ndarray) -> np.ndarray:
    """p(b) = <b| V Lam rho_H conj(Lam) V^dag |b> for all outcomes b."""
    v = h.eigenbasis
    lam = np.exp(1j * phases)
    amps = v * lam  # rows b, columns m: V[b,m] e^{i phi_m}
    p = np.einsum("bm,mn,bn->b", amps, rho_h, amps.conj()).real
    total = p.sum()
    if abs(total - 1.0) >= BORN_TOL:
        raise ValueError(f"Born distribution sums to {total!r}; input is corrupted")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def sample_snapshot(h: SpectralHamiltonian, rho, tm: TimeModel,
                    rng: np.random.Generator) -> Snapshot:
    rho = as_complex(rho)
    v = h.eigenbasis
    rho_h = v.conj().T @ rho @ v
    t, phases = _draw_evolution(h.dim, tm, rng)
    phi = -h.energies * t if t is not None else phases
    p = born_probabilities(h, rho_h, phi)
    b = int(rng.choice(h.dim, p=p))
    return Snapshot(bitstring=b, time=t, phases=phases)


def run_batch(h: SpectralHamiltonian, rho, tm: TimeModel,
              num_shots: int, seed: int) -> SnapshotSet:
    """Deterministic batch: shot i uses substream (seed, i)."""
    if num_shots < 1:
        raise ValueError("num_shots must be at least 1")
    rho = as_complex(rho)
    v = h.eigenbasis
    rho_h = v.conj().T @ rho @ v
    snaps = []
    for i in range(num_shots):
        rng = substream(seed, i)
        t, phases = _draw_evolution(h.dim, tm, rng)
        phi = -h.energies * t if t is not None else phases
        p = born_probabilities(h, rho_h, phi)
        b = int(rng.choice(h.dim, p=p))
        snaps.append(Snapshot(bitstring=b, time=t, phases=phases))
    return SnapshotSet(snaps, hamiltonian_fingerprint(h), int(seed), tm)


def run_local_batch(patch_hs, rho, tm: TimeModel, num_shots: int, seed: int,
                    per_patch_times: bool = False) -> list:
    """Joint Born sampling on the full state with per-patch records.

    The evolution is the tensor product of the patch evolutions with a
    shared random time (or independent ideal phases per patch). With
    ``per_patch_times`` each patch draws its own time, which removes the
    induced degeneracy when patch Hamiltonians coincide.
    """
    import warnings

    rho = as_complex(rho)
    dims = [h.dim for h in patch_hs]
    d = int(np.prod(dims))
    if rho.shape != (d, d):
        raise ValueError("patch dimensions do not multiply to the state dimension")
    if tm.kind == "uniform-window" and not per_patch_times:
        for i in range(len(patch_hs)):
            for j in range(i + 1, len(patch_hs)):
                ei, ej = patch_hs[i].energies, patch_hs[j].energies
                if np.any(np.abs(ei[:, None] - ej[None, :]) <= 1e-9):
                    warnings.warn(
                        f"patches {i} and {j} share eigen-energies under a shared "
                        "evolution time; consider per_patch_times=True",
                        stacklevel=2)
    v_full = np.array([[1.0 + 0j]])
    for h in patch_hs:
        v_full = np.kron(v_full, h.eigenbasis)
    rho_h = v_full.conj().T @ rho @ v_full
    per_patch = [[] for _ in patch_hs]
    fps = [hamiltonian_fingerprint(h) for h in patch_hs]
    for i in range(num_shots):
        rng = substream(seed, i)
        patch_draws = []
        if tm.kind == "uniform-window" and not per_patch_times:
            t, _ = _draw_evolution(1, tm, rng)
            patch_draws = [(t, None) for _ in patch_hs]
        else:
            patch_draws = [_draw_evolution(h.dim, tm, rng) for h in patch_hs]
        phi = _joint_phases(patch_hs, patch_draws)
        p = _joint_born(v_full, rho_h, phi)
        b = int(rng.choice(d, p=p))
        bits = _split_index(b, dims)
        for pi, ((t, ph), bp) in enumerate(zip(patch_draws, bits)):
            per_patch[pi].append(Snapshot(bitstring=bp, time=t, phases=ph))
    return [SnapshotSet(per_patch[i], fps[i], int(seed), tm)
            for i in range(len(patch_hs))]


def _joint_phases(patch_hs, patch_draws) -> np.ndarray:
    parts = []
    for h, (t, ph) in zip(patch_hs, patch_draws):
        parts.append(-h.energies * t if t is not None else np.asarray(ph))
    out = parts[0]
    for nxt in parts[1:]:
        out = (out[:, None] + nxt[None, :]).reshape(-1)
    return out


def _joint_born(v_full, rho_h, phases) -> np.ndarray:
    amps = v_full * np.exp(1j * phases)
    p = np.einsum("bm,mn,bn->b", amps, rho_h, amps.conj()).real
    total = p.sum()
    if abs(total - 1.0) >= BORN_TOL:
        raise ValueError(f"Born distribution sums to {total!r}; input is corrupted")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _split_index(b: int, dims) -> list:
    out = []
    for d in reversed(dims):
        out.append(b % d)
        b //= d
    return list(reversed(out))


# ---------------------------------------------------------------------------
# Snapshot text format
#
#   # hamshadow snapshots v1
#   # fingerprint=<hex16>
#   # seed=<int>
#   # time_model=<description>
#   # shots=<int>
#   t_us=<float> b=<int>          (or)   phases=<r1,r2,...> b=<int>
# ---------------------------------------------------------------------------

def save_snapshots(path, snaps: SnapshotSet) -> None:
    with open(path, "w") as f:
        f.write("# hamshadow snapshots v1\n")
        f.write(f"# fingerprint={snaps.hamiltonian_fingerprint}\n")
        f.write(f"# seed={snaps.seed}\n")
        f.write(f"# time_model={snaps.time_model.describe()}\n")
        f.write(f"# shots={len(snaps)}\n")
        for s in snaps.snapshots:
            if s.time is not None:
                f.write(f"t_us={float(s.time)!r} b={s.bitstring}\n")
            else:
                ph = ",".join(repr(float(x)) for x in s.phases)
                f.write(f"phases={ph} b={s.bitstring}\n")


def load_snapshots(path) -> SnapshotSet:
    meta = {}
    snaps = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("# ").strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            fields = dict(p.split("=", 1) for p in line.split())
            b = int(fields["b"])
            if "t_us" in fields:
                snaps.append(Snapshot(bitstring=b, time=float(fields["t_us"])))
            else:
                ph = np.array([float(x) for x in fields["phases"].split(",")])
                snaps.append(Snapshot(bitstring=b, phases=ph))
    return SnapshotSet(
        snapshots=snaps,
        hamiltonian_fingerprint=meta.get("fingerprint", ""),
        seed=int(meta.get("seed", 0)),
        time_model=TimeModel.parse(meta.get("time_model", "ideal-rdu")),
    )


def write_manifest(path, snaps: SnapshotSet, extra: dict | None = None) -> None:
    with open(path, "w") as f:
        f.write("hamshadow manifest v1\n")
        f.write(f"fingerprint={snaps.hamiltonian_fingerprint}\n")
        f.write(f"seed={snaps.seed}\n")
        f.write(f"time_model={snaps.time_model.describe()}\n")
        f.write(f"shots={len(snaps)}\n")
        f.write("rng=philox seed-sequence substream per shot index\n")
        for k, v in (extra or {}).items():
            f.write(f"{k}={v}\n")

import numpy as np
import pytest
from scipy.stats import chisquare

from hamshadow.models import gue_hamiltonian
from hamshadow.qmatrix import hermitian_spectral, tensor_product
from hamshadow.sampler import (
    SnapshotSet,
    TimeModel,
    born_probabilities,
    load_snapshots,
    run_batch,
    run_local_batch,
    sample_snapshot,
    save_snapshots,
    substream,
    write_manifest,
)
from hamshadow.shadowmap import hamiltonian_fingerprint


def random_density(d, seed=0):
    g = np.random.default_rng(seed)
    a = g.normal(size=(d, d)) + 1j * g.normal(size=(d, d))
    m = a @ a.conj().T
    return m / np.trace(m)


class TestSubstream:
    def test_deterministic_and_independent(self):
        a = substream(5, 0).normal(size=4)
        b = substream(5, 0).normal(size=4)
        c = substream(5, 1).normal(size=4)
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, c)

    def test_nested_paths_distinct(self):
        a = substream(5, 0, 1).normal()
        b = substream(5, 1, 0).normal()
        assert a != b


class TestTimeModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            TimeModel("uniform-window", t_min=2.0, t_max=1.0)
        with pytest.raises(ValueError):
            TimeModel("nope")
        with pytest.raises(ValueError):
            TimeModel("design", k=7)

    def test_describe_parse_roundtrip(self):
        for tm in [TimeModel("ideal-rdu"),
                   TimeModel("design", k=3),
                   TimeModel("uniform-window", t_min=0.5, t_max=2.5)]:
            assert TimeModel.parse(tm.describe()) == tm


class TestSampling:
    def test_stationary_state_always_zero(self):
        h = hermitian_spectral(np.diag([0.0, 1.0, 2.7, 3.9]))
        rho = np.diag([1.0, 0, 0, 0]).astype(complex)
        snaps = run_batch(h, rho, TimeModel("uniform-window", t_min=0, t_max=5),
                          200, seed=1)
        assert all(s.bitstring == 0 for s in snaps.snapshots)

    def test_maximally_mixed_uniform(self):
        h = gue_hamiltonian(4, 2)
        rho = np.eye(4) / 4
        snaps = run_batch(h, rho, TimeModel("ideal-rdu"), 10000, seed=3)
        counts = np.bincount([s.bitstring for s in snaps.snapshots], minlength=4)
        assert chisquare(counts).pvalue > 0.001

    def test_empirical_matches_mixed_phase_born_marginal(self):
        # with iid phases the bitstring marginal is V^sq applied to the
        # eigenframe populations, an exact closed form
        h = gue_hamiltonian(4, 4)
        rho = random_density(4, 5)
        v = h.eigenbasis
        pops = np.real(np.diag(v.conj().T @ rho @ v))
        expected = (np.abs(v) ** 2) @ pops
        num = 100000
        snaps = run_batch(h, rho, TimeModel("ideal-rdu"), num, seed=6)
        counts = np.bincount([s.bitstring for s in snaps.snapshots], minlength=4)
        freq = counts / num
        se = np.sqrt(expected * (1 - expected) / num)
        assert np.all(np.abs(freq - expected) <= 4 * se)

    def test_chi_square_against_marginal(self):
        h = gue_hamiltonian(4, 7)
        rho = random_density(4, 8)
        v = h.eigenbasis
        pops = np.real(np.diag(v.conj().T @ rho @ v))
        expected = (np.abs(v) ** 2) @ pops
        num = 10000
        snaps = run_batch(h, rho, TimeModel("ideal-rdu"), num, seed=9)
        counts = np.bincount([s.bitstring for s in snaps.snapshots], minlength=4)
        assert chisquare(counts, expected * num).pvalue > 0.001

    def test_batch_determinism(self):
        h = gue_hamiltonian(4, 10)
        rho = random_density(4, 11)
        tm = TimeModel("uniform-window", t_min=0.0, t_max=3.0)
        a = run_batch(h, rho, tm, 50, seed=12)
        b = run_batch(h, rho, tm, 50, seed=12)
        assert [(s.bitstring, s.time) for s in a.snapshots] == \
            [(s.bitstring, s.time) for s in b.snapshots]
        c = run_batch(h, rho, tm, 50, seed=13)
        assert [(s.bitstring, s.time) for s in a.snapshots] != \
            [(s.bitstring, s.time) for s in c.snapshots]

    def test_batch_prefix_property(self):
        # per-shot substreams: a longer run extends a shorter one
        h = gue_hamiltonian(4, 10)
        rho = random_density(4, 11)
        tm = TimeModel("ideal-rdu")
        a = run_batch(h, rho, tm, 20, seed=14)
        b = run_batch(h, rho, tm, 40, seed=14)
        assert [s.bitstring for s in a.snapshots] == \
            [s.bitstring for s in b.snapshots[:20]]

    def test_sample_snapshot_draws_from_model(self):
        h = gue_hamiltonian(2, 15)
        rho = random_density(2, 16)
        s = sample_snapshot(h, rho, TimeModel("uniform-window", t_min=1, t_max=2),
                            substream(17, 0))
        assert s.time is not None and 1 <= s.time <= 2
        s2 = sample_snapshot(h, rho, TimeModel("design", k=2), substream(17, 1))
        grid = 2 * np.pi * np.arange(3) / 3
        assert np.all(np.isin(np.round(s2.phases, 12), np.round(grid, 12)))

    def test_corrupted_state_rejected(self):
        h = gue_hamiltonian(2, 18)
        with pytest.raises(ValueError, match="corrupted"):
            born_probabilities(h, np.diag([0.7, 0.7]).astype(complex),
                               np.zeros(2))


class TestLocalSampling:
    def test_product_state_marginals_factorize(self):
        h1, h2 = gue_hamiltonian(2, 20), gue_hamiltonian(2, 21)
        r1, r2 = random_density(2, 22), random_density(2, 23)
        rho = tensor_product(r1, r2)
        tm = TimeModel("ideal-rdu")
        sets = run_local_batch([h1, h2], rho, tm, 8000, seed=24)
        # marginal of patch 0 matches its single-patch closed form
        v = h1.eigenbasis
        pops = np.real(np.diag(v.conj().T @ r1 @ v))
        expected = (np.abs(v) ** 2) @ pops
        counts = np.bincount([s.bitstring for s in sets[0].snapshots], minlength=2)
        freq = counts / 8000
        assert np.all(np.abs(freq - expected) < 0.025)

    def test_identical_patches_shared_time_warns(self):
        h = gue_hamiltonian(2, 25)
        rho = np.eye(4) / 4
        tm = TimeModel("uniform-window", t_min=0.0, t_max=2.0)
        with pytest.warns(UserWarning, match="share eigen-energies"):
            run_local_batch([h, h], rho, tm, 5, seed=26)

    def test_per_patch_times_clear_warning(self):
        import warnings

        h = gue_hamiltonian(2, 25)
        rho = np.eye(4) / 4
        tm = TimeModel("uniform-window", t_min=0.0, t_max=2.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            sets = run_local_batch([h, h], rho, tm, 5, seed=26,
                                   per_patch_times=True)
        times = [(a.time, b.time) for a, b in zip(sets[0].snapshots,
                                                  sets[1].snapshots)]
        assert any(ta != tb for ta, tb in times)

    def test_dimension_mismatch(self):
        h = gue_hamiltonian(2, 27)
        with pytest.raises(ValueError, match="dimension"):
            run_local_batch([h, h], np.eye(8) / 8, TimeModel("ideal-rdu"), 3, 28)


class TestSerialization:
    def test_roundtrip_time_snapshots(self, tmp_path):
        h = gue_hamiltonian(4, 30)
        rho = random_density(4, 31)
        tm = TimeModel("uniform-window", t_min=0.0, t_max=3.0)
        snaps = run_batch(h, rho, tm, 25, seed=32)
        p = tmp_path / "snaps.txt"
        save_snapshots(p, snaps)
        loaded = load_snapshots(p)
        assert loaded.hamiltonian_fingerprint == hamiltonian_fingerprint(h)
        assert loaded.seed == 32
        assert loaded.time_model == tm
        assert [s.bitstring for s in loaded.snapshots] == \
            [s.bitstring for s in snaps.snapshots]
        np.testing.assert_allclose([s.time for s in loaded.snapshots],
                                   [s.time for s in snaps.snapshots])

    def test_roundtrip_phase_snapshots(self, tmp_path):
        h = gue_hamiltonian(2, 33)
        snaps = run_batch(h, np.eye(2) / 2, TimeModel("ideal-rdu"), 10, seed=34)
        p = tmp_path / "snaps.txt"
        save_snapshots(p, snaps)
        loaded = load_snapshots(p)
        for a, b in zip(loaded.snapshots, snaps.snapshots):
            np.testing.assert_allclose(a.phases, b.phases)

    def test_manifest_contents(self, tmp_path):
        h = gue_hamiltonian(2, 35)
        snaps = run_batch(h, np.eye(2) / 2, TimeModel("ideal-rdu"), 4, seed=36)
        p = tmp_path / "manifest.txt"
        write_manifest(p, snaps, {"note": "x"})
        text = p.read_text()
        assert f"fingerprint={hamiltonian_fingerprint(h)}" in text
        assert "seed=36" in text
        assert "shots=4" in text
        assert "note=x" in text

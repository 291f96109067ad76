"""Core state/gate/diagnostic tests.

The partial-trace and Schmidt-rank checks compare the library against
definition-chasing oracles written here from scratch (digit loops, no shared
index helpers), so the two paths can only agree if both are right.
"""

import numpy as np
import pytest

from qkdsim.errors import (
    EmptyKeepSet,
    InvalidBipartition,
    InvalidDimension,
    LayoutMismatch,
    NonUnitaryMatrix,
    RegisterCollision,
    RegisterNotSeparable,
    UnknownRegister,
    ValueOutOfRange,
)
from qkdsim.qudit import (
    DensityMatrix,
    GateSpec,
    PureState,
    RegisterLayout,
    apply_gate,
    apply_gate_dense,
    basis_state,
    gate_unitary,
    insert_register,
    measure,
    measurement_branches,
    partial_trace,
    remove_register,
    schmidt_rank,
    states_equal_up_to_phase,
    to_dense,
    von_neumann_entropy,
)


def digits(index, d, n):
    """Mixed-radix digits of index, most significant first."""
    out = []
    for _ in range(n):
        index, v = divmod(index, d)
        out.append(v)
    return list(reversed(out))


def oracle_partial_trace(state, keep_labels):
    """Brute-force rho[i,j] = sum over dropped digits of psi_i psi_j*."""
    layout = state.layout
    d = layout.d
    n = len(layout.labels)
    keep_axes = [a for a, l in enumerate(layout.labels) if l in set(keep_labels)]
    drop_axes = [a for a in range(n) if a not in keep_axes]
    side = d ** len(keep_axes)
    rho = np.zeros((side, side), dtype=complex)
    for i, zi in enumerate(state.amplitudes):
        vi = digits(i, d, n)
        for j, zj in enumerate(state.amplitudes):
            vj = digits(j, d, n)
            if any(vi[a] != vj[a] for a in drop_axes):
                continue
            ki = 0
            kj = 0
            for a in keep_axes:
                ki = ki * d + vi[a]
                kj = kj * d + vj[a]
            rho[ki, kj] += zi * np.conj(zj)
    return rho


def oracle_schmidt_rank(state, side_labels, tol=1e-8):
    """Singular values of the explicitly assembled bipartition matrix."""
    layout = state.layout
    d = layout.d
    n = len(layout.labels)
    axes_a = [a for a, l in enumerate(layout.labels) if l in set(side_labels)]
    axes_b = [a for a in range(n) if a not in axes_a]
    m = np.zeros((d ** len(axes_a), d ** len(axes_b)), dtype=complex)
    for i, z in enumerate(state.amplitudes):
        v = digits(i, d, n)
        ra = 0
        for a in axes_a:
            ra = ra * d + v[a]
        rb = 0
        for a in axes_b:
            rb = rb * d + v[a]
        m[ra, rb] = z
    singular = np.linalg.svd(m, compute_uv=False)
    return int(np.count_nonzero(singular > tol))


def random_state(layout, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return PureState(layout, amps / np.linalg.norm(amps))


def pair_state(d):
    """Equal superposition of |j,j> on registers a, b."""
    layout = RegisterLayout(d, ("a", "b"))
    amps = np.zeros(layout.dim, dtype=complex)
    for j in range(d):
        amps[j * d + j] = 1.0 / np.sqrt(d)
    return PureState(layout, amps)


class TestRegisterLayout:
    def test_mixed_radix_indexing(self):
        layout = RegisterLayout(3, ("a", "b"))
        assert layout.index_of((2, 1)) == 7
        assert layout.values_of(7) == (2, 1)
        layout = RegisterLayout(2, ("a", "b", "k"))
        assert layout.index_of((1, 0, 1)) == 5

    def test_index_roundtrip(self):
        layout = RegisterLayout(3, ("a", "b", "k", "e"))
        for index in range(layout.dim):
            assert layout.index_of(layout.values_of(index)) == index

    def test_rejects_bad_dimension(self):
        with pytest.raises(InvalidDimension):
            RegisterLayout(1, ("a",))

    def test_rejects_duplicate_labels(self):
        with pytest.raises(ValueError):
            RegisterLayout(2, ("a", "a"))

    def test_unknown_register(self):
        with pytest.raises(UnknownRegister):
            RegisterLayout(2, ("a", "b")).axis("z")

    def test_insert_collision(self):
        with pytest.raises(RegisterCollision):
            RegisterLayout(2, ("a", "b")).insert("a", 0)


class TestBasisState:
    def test_index_placement(self):
        state = basis_state(RegisterLayout(3, ("a", "b")), (2, 1))
        assert state.amplitudes[7] == 1.0
        assert np.count_nonzero(state.amplitudes) == 1

    def test_single_register(self):
        state = basis_state(RegisterLayout(2, ("k",)), (0,))
        assert np.array_equal(state.amplitudes, [1.0, 0.0])

    def test_value_out_of_range(self):
        with pytest.raises(ValueOutOfRange):
            basis_state(RegisterLayout(2, ("a", "b")), (0, 2))
        with pytest.raises(ValueOutOfRange):
            basis_state(RegisterLayout(2, ("a", "b")), (0, -1))


class TestPermutationGates:
    @pytest.mark.parametrize("d,s,control_value,target_value,expected", [
        (3, 1, 2, 2, 1),
        (3, 2, 1, 0, 2),
        (2, 1, 1, 1, 0),
        (5, 3, 4, 2, 4),
    ])
    def test_cadd_on_basis(self, d, s, control_value, target_value, expected):
        layout = RegisterLayout(d, ("c", "t"))
        state = basis_state(layout, (control_value, target_value))
        out = apply_gate(state, GateSpec.controlled_add("c", "t", s))
        assert out.amplitudes[layout.index_of((control_value, expected))] == 1.0
        assert np.count_nonzero(out.amplitudes) == 1

    def test_cadd_s0_is_identity(self):
        state = random_state(RegisterLayout(3, ("c", "t")), seed=0)
        out = apply_gate(state, GateSpec.controlled_add("c", "t", 0))
        assert np.array_equal(out.amplitudes, state.amplitudes)

    def test_shift_on_basis(self):
        layout = RegisterLayout(3, ("k",))
        out = apply_gate(basis_state(layout, (2,)), GateSpec.shift("k", 2))
        assert out.amplitudes[1] == 1.0

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_shift_permutes_amplitudes_bit_identically(self, d):
        layout = RegisterLayout(d, ("a", "k"))
        state = random_state(layout, seed=d)
        out = apply_gate(state, GateSpec.shift("k", 1))
        for i, z in enumerate(state.amplitudes):
            a, k = digits(i, d, 2)
            j = a * d + (k + 1) % d
            # exact complex equality: permutations must not round
            assert out.amplitudes[j] == z

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_cadd_permutes_amplitudes_bit_identically(self, d):
        layout = RegisterLayout(d, ("c", "t", "x"))
        state = random_state(layout, seed=10 + d)
        out = apply_gate(state, GateSpec.controlled_add("c", "t", 2))
        for i, z in enumerate(state.amplitudes):
            c, t, x = digits(i, d, 3)
            j = (c * d + (t + 2 * c) % d) * d + x
            assert out.amplitudes[j] == z

    def test_dense_cyclic_matrix_equals_shift(self):
        cyclic = np.array([[0.0, 1.0], [1.0, 0.0]])
        layout = RegisterLayout(2, ("a", "k"))
        dense = GateSpec.dense(("k",), cyclic)
        shift = GateSpec.shift("k", 1)
        for seed in range(50):
            state = random_state(layout, seed=seed)
            a = apply_gate(state, dense)
            b = apply_gate(state, shift)
            assert np.max(np.abs(a.amplitudes - b.amplitudes)) <= 1e-12


class TestGateSpecs:
    @pytest.mark.parametrize("d", [2, 3, 5])
    @pytest.mark.parametrize("make", [
        lambda: GateSpec.shift("t", 1),
        lambda: GateSpec.controlled_add("c", "t", 1),
        lambda: GateSpec.phase("t", 2),
        lambda: GateSpec.fourier("t"),
    ])
    def test_unitaries_are_unitary(self, d, make):
        u = gate_unitary(make(), d)
        assert np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= 1e-12

    def test_dense_rejects_nonunitary(self):
        with pytest.raises(NonUnitaryMatrix):
            GateSpec.dense(("k",), np.array([[1.0, 0.0], [0.0, 2.0]]))
        with pytest.raises(NonUnitaryMatrix):
            GateSpec.dense(("k",), np.ones((2, 3)))

    def test_dense_size_must_match_targets(self):
        state = random_state(RegisterLayout(3, ("a", "k")), seed=3)
        gate = GateSpec.dense(("k",), np.eye(2))
        with pytest.raises(NonUnitaryMatrix):
            apply_gate(state, gate)

    def test_gate_on_missing_register(self):
        state = random_state(RegisterLayout(2, ("a", "b")), seed=1)
        with pytest.raises(UnknownRegister):
            apply_gate(state, GateSpec.shift("k", 1))

    def test_cadd_needs_distinct_registers(self):
        with pytest.raises(ValueError):
            GateSpec.controlled_add("k", "k", 1)

    @pytest.mark.parametrize("gate", [
        GateSpec.shift("k", 2),
        GateSpec.controlled_add("a", "k", 1),
        GateSpec.phase("k", 1),
        GateSpec.fourier("k"),
    ])
    def test_norm_preserved(self, gate):
        state = random_state(RegisterLayout(3, ("a", "k")), seed=7)
        out = apply_gate(state, gate)
        assert abs(out.norm() - 1.0) <= 1e-10

    @pytest.mark.parametrize("gate", [
        GateSpec.shift("k", 2),
        GateSpec.controlled_add("a", "k", 2),
        GateSpec.phase("k", 2),
        GateSpec.fourier("k"),
    ])
    def test_fast_path_matches_dense_path(self, gate):
        state = random_state(RegisterLayout(3, ("a", "k")), seed=9)
        fast = apply_gate(state, gate)
        dense = apply_gate_dense(state, gate)
        assert np.max(np.abs(fast.amplitudes - dense.amplitudes)) <= 1e-12

    def test_to_dense_keeps_registers(self):
        gate = to_dense(GateSpec.controlled_add("a", "k", 1), 3)
        assert gate.kind == "dense"
        assert gate.registers == ("a", "k")


class TestPartialTrace:
    def test_pair_half_is_maximally_mixed(self):
        rho = partial_trace(pair_state(2), {"a"})
        assert np.max(np.abs(rho.entries - np.eye(2) / 2)) <= 1e-12

    def test_product_state_gives_projector(self):
        state = basis_state(RegisterLayout(2, ("a", "b")), (1, 0))
        rho = partial_trace(state, {"b"})
        assert np.array_equal(rho.entries, [[1.0, 0.0], [0.0, 0.0]])

    @pytest.mark.parametrize("d", [2, 3])
    @pytest.mark.parametrize("keep", [("a",), ("k",), ("a", "k"), ("a", "b")])
    def test_matches_bruteforce_oracle(self, d, keep):
        state = random_state(RegisterLayout(d, ("a", "b", "k")), seed=d * 31)
        rho = partial_trace(state, keep)
        expected = oracle_partial_trace(state, keep)
        assert np.max(np.abs(rho.entries - expected)) <= 1e-12
        rho.validate()

    def test_kept_labels_follow_layout_order(self):
        state = random_state(RegisterLayout(2, ("a", "b", "k")), seed=5)
        assert partial_trace(state, {"k", "a"}).layout.labels == ("a", "k")

    def test_empty_keep_rejected(self):
        with pytest.raises(EmptyKeepSet):
            partial_trace(pair_state(2), set())

    def test_unknown_register_rejected(self):
        with pytest.raises(UnknownRegister):
            partial_trace(pair_state(2), {"z"})


class TestDensityMatrix:
    def test_spectrum_descends(self):
        state = random_state(RegisterLayout(3, ("a", "b")), seed=2)
        spectrum = partial_trace(state, {"a"}).spectrum()
        assert np.all(np.diff(spectrum) <= 0)
        assert abs(spectrum.sum() - 1.0) <= 1e-10

    def test_validate_rejects_nonhermitian(self):
        rho = DensityMatrix(RegisterLayout(2, ("k",)), np.array([[0.5, 0.5], [0.0, 0.5]]))
        with pytest.raises(ValueError):
            rho.validate()

    def test_validate_rejects_wrong_trace(self):
        rho = DensityMatrix(RegisterLayout(2, ("k",)), np.eye(2))
        with pytest.raises(ValueError):
            rho.validate()


class TestSchmidtRank:
    def test_basis_state_is_product(self):
        state = basis_state(RegisterLayout(3, ("a", "b", "k")), (1, 2, 0))
        for side in ({"a"}, {"b"}, {"a", "k"}):
            assert schmidt_rank(state, side) == 1

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_pair_state_has_full_rank(self, d):
        assert schmidt_rank(pair_state(d), {"a"}) == d

    def test_correlated_memory_rank(self):
        # amplitudes (1/sqrt2) sum_j |j,j,j+1,j+1>
        layout = RegisterLayout(2, ("a", "b", "k", "e"))
        amps = np.zeros(layout.dim, dtype=complex)
        for j in range(2):
            amps[layout.index_of((j, j, (j + 1) % 2, (j + 1) % 2))] = 1 / np.sqrt(2)
        assert schmidt_rank(PureState(layout, amps), {"e"}) == 2

    @pytest.mark.parametrize("d", [2, 3])
    @pytest.mark.parametrize("side", [("a",), ("b",), ("a", "k")])
    def test_matches_svd_oracle(self, d, side):
        state = random_state(RegisterLayout(d, ("a", "b", "k")), seed=d * 7)
        assert schmidt_rank(state, side) == oracle_schmidt_rank(state, side)

    def test_complement_symmetry(self):
        state = random_state(RegisterLayout(3, ("a", "b", "k", "e")), seed=11)
        for side in (("a",), ("a", "b"), ("k", "e"), ("b",)):
            rest = tuple(l for l in state.layout.labels if l not in side)
            assert schmidt_rank(state, side) == schmidt_rank(state, rest)

    def test_invalid_bipartitions(self):
        state = pair_state(2)
        with pytest.raises(InvalidBipartition):
            schmidt_rank(state, set())
        with pytest.raises(InvalidBipartition):
            schmidt_rank(state, {"a", "b"})
        with pytest.raises(InvalidBipartition):
            schmidt_rank(state, {"z"})
        with pytest.raises(ValueError):
            schmidt_rank(state, {"a"}, tol=0.0)


class TestEntropy:
    def test_pure_projector_has_zero_entropy(self):
        state = basis_state(RegisterLayout(3, ("a", "b")), (1, 1))
        assert abs(von_neumann_entropy(partial_trace(state, {"a"}))) <= 1e-10

    def test_maximally_mixed_qudit_scores_one(self):
        rho = DensityMatrix(RegisterLayout(3, ("k",)), np.eye(3) / 3)
        assert abs(von_neumann_entropy(rho) - 1.0) <= 1e-10

    def test_pair_half_scores_one(self):
        rho = partial_trace(pair_state(5), {"a"})
        assert abs(von_neumann_entropy(rho) - 1.0) <= 1e-10

    def test_complements_agree(self):
        state = random_state(RegisterLayout(3, ("a", "b", "k")), seed=13)
        ea = von_neumann_entropy(partial_trace(state, {"a"}))
        eb = von_neumann_entropy(partial_trace(state, {"b", "k"}))
        assert abs(ea - eb) <= 1e-9


class TestMeasurement:
    def test_basis_state_measures_deterministically(self):
        state = basis_state(RegisterLayout(3, ("k",)), (2,))
        outcome, post = measure(state, "k", np.random.default_rng(0))
        assert outcome == 2
        assert np.array_equal(post.amplitudes, state.amplitudes)

    def test_pair_half_outcomes_are_nearly_uniform(self):
        state = pair_state(2)
        rng = np.random.default_rng(42)
        hits = sum(measure(state, "a", rng)[0] == 0 for _ in range(100_000))
        assert 0.49 <= hits / 100_000 <= 0.51

    def test_pair_measurement_collapses_both_halves(self):
        state = pair_state(3)
        rng = np.random.default_rng(8)
        outcome, post = measure(state, "a", rng)
        expected = basis_state(state.layout, (outcome, outcome))
        assert states_equal_up_to_phase(post, expected, 1e-12)

    def test_measure_is_seed_deterministic(self):
        state = random_state(RegisterLayout(3, ("a", "b")), seed=21)
        runs = []
        for _ in range(2):
            rng = np.random.default_rng(77)
            runs.append([measure(state, "a", rng)[0] for _ in range(20)])
        assert runs[0] == runs[1]

    def test_unknown_register(self):
        with pytest.raises(UnknownRegister):
            measure(pair_state(2), "z", np.random.default_rng(0))

    def test_branches_cover_the_born_rule(self):
        state = random_state(RegisterLayout(3, ("a", "b")), seed=17)
        branches = measurement_branches(state, "a")
        assert abs(sum(p for _, p, _ in branches) - 1.0) <= 1e-12
        for outcome, p, post in branches:
            assert abs(post.norm() - 1.0) <= 1e-10
            assert np.allclose(post.probabilities("a")[outcome], 1.0)

    def test_branches_prune_impossible_outcomes(self):
        state = basis_state(RegisterLayout(3, ("a", "b")), (1, 0))
        branches = measurement_branches(state, "a")
        assert len(branches) == 1
        assert branches[0][0] == 1
        assert branches[0][1] == 1.0


class TestPhaseEquality:
    def test_global_phase_is_ignored(self):
        state = random_state(RegisterLayout(2, ("a", "b")), seed=4)
        rotated = PureState(state.layout, state.amplitudes * np.exp(0.7j))
        assert states_equal_up_to_phase(state, rotated, 1e-12)

    def test_orthogonal_states_differ(self):
        layout = RegisterLayout(2, ("a",))
        assert not states_equal_up_to_phase(
            basis_state(layout, (0,)), basis_state(layout, (1,)), 1e-12)

    def test_layout_mismatch(self):
        with pytest.raises(LayoutMismatch):
            states_equal_up_to_phase(
                pair_state(2), random_state(RegisterLayout(2, ("a", "k")), 0), 1e-12)


class TestRegisterEditing:
    def test_insert_then_remove_roundtrips(self):
        state = random_state(RegisterLayout(3, ("a", "b")), seed=6)
        grown = insert_register(state, "k", 2, 1)
        assert grown.layout.labels == ("a", "k", "b")
        back = remove_register(grown, "k")
        assert np.array_equal(back.amplitudes, state.amplitudes)

    def test_insert_value_out_of_range(self):
        with pytest.raises(ValueOutOfRange):
            insert_register(pair_state(2), "k", 2, 0)

    def test_remove_entangled_register_rejected(self):
        with pytest.raises(RegisterNotSeparable):
            remove_register(pair_state(2), "b")

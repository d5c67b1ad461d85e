import math

import numpy as np
import pytest

from ptmarkov import (
    ControlSequence,
    DimensionMismatch,
    ProcessTensor,
    QuantumMap,
    TomographyDataError,
    UnresolvableConditional,
    build_process_tensor,
    compose,
    default_break,
    from_tomography,
    model_markov,
    simulate_sequence,
    tensor_product,
)
from ptmarkov.random_ops import (
    random_cptp,
    random_control_sequence,
    random_reprepare_instrument,
)

from oracles import P0, P1, PP, b3_choi_analytic

RNG = np.random.default_rng(202)
IDENT = QuantumMap.identity(2)


# ---------------------------------------------------------------------------
# apply
# ---------------------------------------------------------------------------

def test_identity_controls_containment(markov_maps, markov_pt2):
    """All-identity controls reduce the tensor to the composed channel
    acting on the initial state."""
    rho0 = np.eye(2) / 2
    out = markov_pt2.apply([IDENT, IDENT])
    expected = markov_maps[1].apply(markov_maps[0].apply(rho0))
    assert np.abs(out.matrix - expected).max() <= 1e-9


def test_identity_controls_match_dilation(b2_model, b2_pt):
    grid = (0.0, math.pi / 4, math.pi / 2)
    direct, _ = simulate_sequence(b2_model, grid, [IDENT, IDENT])
    out = b2_pt.apply([IDENT, IDENT])
    assert np.abs(out.matrix - direct.matrix).max() <= 1e-9


def test_b3_output_is_initial_state(b3_pt, b3_states):
    rho_s, _ = b3_states
    for _ in range(10):
        op = random_cptp(2, RNG)
        out = b3_pt.apply([IDENT, op])
        assert np.abs(out.matrix - rho_s).max() <= 1e-10


def test_instrument_sum_equals_average_map(b2_pt):
    ins = random_reprepare_instrument(2, 3, np.random.default_rng(9))
    summed = sum(b2_pt.apply([(ins, r), IDENT]).matrix
                 for r in range(len(ins)))
    avg = QuantumMap.from_choi(sum(m.choi for m in ins.members))
    direct = b2_pt.apply([avg, IDENT]).matrix
    assert np.abs(summed - direct).max() <= 1e-12


def test_apply_multilinearity(b2_pt):
    """Convex combinations in one slot act linearly, residual below 1e-11."""
    rng = np.random.default_rng(4)
    for _ in range(5):
        x, y = random_cptp(2, rng), random_cptp(2, rng)
        lam = rng.uniform(0, 1)
        combo = QuantumMap.from_choi(lam * x.choi + (1 - lam) * y.choi)
        other = random_cptp(2, rng)
        lhs = b2_pt.apply([combo, other]).matrix
        rhs = lam * b2_pt.apply([x, other]).matrix \
            + (1 - lam) * b2_pt.apply([y, other]).matrix
        assert np.abs(lhs - rhs).max() <= 1e-11


def test_tp_controls_give_unit_trace(b1_pt, b2_pt, b3_pt):
    rng = np.random.default_rng(8)
    for pt in (b1_pt, b2_pt, b3_pt):
        for _ in range(5):
            seq = random_control_sequence(2, pt.n_steps, rng)
            assert abs(pt.apply(seq).trace - 1.0) <= 1e-9


def test_apply_slot_count_mismatch(b2_pt):
    with pytest.raises(DimensionMismatch):
        b2_pt.apply([IDENT])


def test_control_sequence_validation():
    brk = default_break(2)
    seq = ControlSequence([IDENT, (brk, 0, 1)])
    assert seq.break_slot == 1
    with pytest.raises(Exception):
        ControlSequence([(brk, 0, 1), (brk, 0, 1)])


# ---------------------------------------------------------------------------
# conditional states
# ---------------------------------------------------------------------------

def test_conditional_on_markov_product_is_propagated_prep(markov_maps,
                                                          markov_pt3):
    """On a memoryless tensor the conditional state is the later dynamics
    applied to the preparation, independent of outcome and past."""
    brk = default_break(2)
    cases = [((), markov_maps[1]),
             ((IDENT,), compose(markov_maps[2], markov_maps[1]))]
    for s in range(brk.n_preparations):
        for future, lam in cases:
            expected = lam.apply(brk.preparations[s])
            for r in range(brk.n_outcomes):
                for past in ([IDENT], [QuantumMap.prepare(PP)]):
                    cond = markov_pt3.conditional_state(
                        1, prep_index=s, povm_outcome=r, past=past,
                        future=future)
                    assert np.abs(cond.state.matrix - expected).max() <= 1e-9


def test_conditional_two_code_paths_agree(b2_pt):
    """conditional_state equals apply with the rank-one break map inserted,
    normalized."""
    brk = default_break(2)
    for r in range(4):
        for s in range(4):
            cond = b2_pt.conditional_state(1, prep_index=s, povm_outcome=r,
                                           past=[QuantumMap.prepare(P0)])
            out = b2_pt.apply([QuantumMap.prepare(P0), brk.map(r, s)])
            assert abs(cond.probability - out.trace) <= 1e-11
            assert np.abs(cond.state.matrix - out.matrix / out.trace).max() \
                <= 1e-11


def test_conditional_b3_always_initial_state(b3_pt, b3_states):
    rho_s, _ = b3_states
    for r in range(4):
        for s in range(4):
            cond = b3_pt.conditional_state(1, prep_index=s, povm_outcome=r,
                                           past=[IDENT])
            assert np.abs(cond.state.matrix - rho_s).max() <= 1e-10


def test_conditional_probability_floor():
    """An outcome with exactly zero probability is reported unresolvable."""
    prep_zero = QuantumMap.prepare(P0)
    maps = [prep_zero, QuantumMap.identity(2)]
    pt = build_process_tensor(model_markov(maps, np.eye(2) / 2),
                              (0.0, 1.0, 2.0), _basis())
    brk = _orthogonal_break()
    with pytest.raises(UnresolvableConditional):
        pt.conditional_state(1, prep_index=0, povm_outcome=1,
                             past=[prep_zero], break_set=brk)


def _basis():
    from ptmarkov import ic_basis
    return ic_basis(2)


def _orthogonal_break():
    from ptmarkov import CausalBreak
    return CausalBreak(effects=(P0, P1), preparations=(P0, P1))


# ---------------------------------------------------------------------------
# tomography
# ---------------------------------------------------------------------------

def test_from_tomography_identity_single_step(basis2):
    """k=1 identity dynamics on the maximally mixed state reconstructs the
    product of the identity Choi and the initial state."""
    model = model_markov([QuantumMap.identity(2)], np.eye(2) / 2)
    pt = build_process_tensor(model, (0.0, 1.0), basis2)
    expected = tensor_product(QuantumMap.identity(2).choi, np.eye(2) / 2)
    assert np.abs(pt.choi - expected).max() <= 1e-9


def test_tomography_round_trip_b2(b2_model, b2_pt, basis2):
    grid = (0.0, math.pi / 4, math.pi / 2)
    rng = np.random.default_rng(31)
    for _ in range(20):
        seq = random_control_sequence(2, 2, rng)
        direct, _ = simulate_sequence(b2_model, grid, seq)
        assert np.abs(b2_pt.apply(seq).matrix - direct.matrix).max() <= 1e-9


def test_b3_tensor_matches_analytic_product(b3_pt, b3_states):
    rho_s, rho_e = b3_states
    assert np.abs(b3_pt.choi - b3_choi_analytic(rho_s, rho_e)).max() <= 1e-9


def test_b3_reconstruction_against_random_slot_maps(b3_pt, b3_states):
    rho_s, _ = b3_states
    rng = np.random.default_rng(17)
    for _ in range(100):
        op = random_cptp(2, rng)
        out = b3_pt.apply([IDENT, op])
        assert np.abs(out.matrix - rho_s).max() <= 1e-9


def test_from_tomography_rejects_incomplete(basis2):
    records = [((0, 0), np.eye(2) / 2)]
    with pytest.raises(TomographyDataError):
        from_tomography(records, basis2, 2, 2)


def test_from_tomography_rejects_duplicates(basis2):
    records = [((0,), np.eye(2) / 2), ((0,), np.eye(2) / 2)]
    with pytest.raises(TomographyDataError):
        from_tomography(records, basis2, 2, 1)


def test_reconstruction_psd(b1_pt, b2_pt, b3_pt, markov_pt3):
    for pt in (b1_pt, b2_pt, b3_pt, markov_pt3):
        assert pt.min_eigenvalue >= -1e-8


# ---------------------------------------------------------------------------
# marginal maps
# ---------------------------------------------------------------------------

def test_marginal_maps_of_product_tensor_compose(markov_maps, markov_pt3,
                                                 basis2):
    lam_02 = markov_pt3.marginal_map(0, 2, basis=basis2)
    expected = compose(markov_maps[1], markov_maps[0])
    assert np.abs(lam_02.superoperator - expected.superoperator).max() <= 1e-9
    for filler in ("identity", "average"):
        lam_13 = markov_pt3.marginal_map(1, 3, filler=filler, basis=basis2)
        expected = compose(markov_maps[2], markov_maps[1])
        assert np.abs(lam_13.superoperator
                      - expected.superoperator).max() <= 1e-9


def test_marginal_map_is_tp(b1_pt, b2_pt, b3_pt, basis2):
    for pt in (b1_pt, b2_pt, b3_pt):
        for j in range(pt.n_steps):
            for l in range(j + 1, pt.n_steps + 1):
                lam = pt.marginal_map(j, l, basis=basis2)
                assert lam.tp_defect <= 1e-9


def test_b2_marginal_is_depolarizing(b2_pt, basis2):
    theta = math.pi / 4
    lam = b2_pt.marginal_map(1, 2, basis=basis2)
    expected = QuantumMap.depolarizing(2, math.sin(theta) ** 2)
    assert np.abs(lam.choi - expected.choi).max() <= 1e-10


# ---------------------------------------------------------------------------
# restriction
# ---------------------------------------------------------------------------

def test_restrict_full_subset_is_identity(b2_pt):
    assert b2_pt.restrict([0, 1, 2]) is b2_pt


def test_restrict_matches_direct_tomography(b2_model, b2_pt, basis2):
    direct = build_process_tensor(b2_model, (0.0, math.pi / 4), basis2)
    restricted = b2_pt.restrict([0, 1])
    assert np.abs(restricted.choi - direct.choi).max() <= 1e-9
    assert restricted.times == direct.times


def test_restrict_markov_product_form(markov_maps, markov_pt3):
    restricted = markov_pt3.restrict([0, 1, 2])
    expected = tensor_product(markov_maps[1].choi, markov_maps[0].choi,
                              _markov_rho0())
    assert np.abs(restricted.choi - expected).max() <= 1e-9


def _markov_rho0():
    rng = np.random.default_rng(12)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho0 = a @ a.conj().T
    return rho0 / np.trace(rho0).real


def test_restrict_interior_skip_composes(markov_maps, markov_pt3):
    restricted = markov_pt3.restrict([0, 2, 3])
    lam_20 = compose(markov_maps[1], markov_maps[0])
    expected = tensor_product(markov_maps[2].choi, lam_20.choi, _markov_rho0())
    assert np.abs(restricted.choi - expected).max() <= 1e-9


def test_restrict_empty_subset_raises(b2_pt):
    with pytest.raises(Exception):
        b2_pt.restrict([])


# ---------------------------------------------------------------------------
# PTF1 serialization
# ---------------------------------------------------------------------------

def test_ptf_round_trip_bit_exact(tmp_path, b2_pt):
    p1 = tmp_path / "a.ptf"
    p2 = tmp_path / "b.ptf"
    b2_pt.save(p1)
    loaded = ProcessTensor.load(p1)
    assert np.array_equal(loaded.choi, b2_pt.choi)
    assert loaded.times == b2_pt.times
    assert loaded.legs.labels == b2_pt.legs.labels
    loaded.save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_ptf_rejects_garbage(tmp_path):
    path = tmp_path / "junk.ptf"
    path.write_bytes(b"\x00\x01\x02 not a header")
    from ptmarkov import FormatError
    with pytest.raises(FormatError):
        ProcessTensor.load(path)


def test_ptf_rejects_truncated_blob(tmp_path, b2_pt):
    path = tmp_path / "trunc.ptf"
    b2_pt.save(path)
    data = path.read_bytes()
    path.write_bytes(data[:-16])
    from ptmarkov import FormatError
    with pytest.raises(FormatError):
        ProcessTensor.load(path)

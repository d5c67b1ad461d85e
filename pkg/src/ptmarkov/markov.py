"""Operational Markovianity: the causal-break test, divisibility, the
relative-entropy distance to the closest memoryless process, confusion
probabilities, temporal bond dimensions, and the induced classical
processes.

A process is operationally Markovian when the state after a causal break
depends only on the freshly prepared input, for every break position,
measurement outcome, and earlier control sequence. The test below sweeps an
informationally complete set of past controls and break outcomes; linearity
of the process tensor makes that finite sweep sufficient.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .defaults import (
    BOND_CUTOFF,
    MARKOV_TOL,
    PROBABILITY_FLOOR,
    SUPPORT_CUTOFF,
)
from .errors import DimensionMismatch, NotPositive, ValidationError
from .linalg import (
    Array,
    hermitian_eig,
    hermitize,
    partial_trace,
    tensor_product,
    trace_norm_distance,
)
from .process_tensor import ProcessTensor, default_break
from .qops import CausalBreak, Instrument, OperationBasis, QuantumMap

__all__ = [
    "MarkovReport",
    "DivisibilityReport",
    "MeasureReport",
    "ClassicalProcess",
    "ClassicalCheck",
    "markov_test",
    "divisibility_test",
    "closest_markov",
    "non_markovianity",
    "confusion_probability",
    "bond_dimension",
    "classical_process",
    "classical_markov_check",
    "relative_entropy",
    "apply_local_channel",
]


# ---------------------------------------------------------------------------
# report types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditioningRecord:
    """One realized conditioning: break position, readout step, outcome,
    preparation, and the basis indices of the past controls."""

    break_slot: int
    readout_step: int
    povm_outcome: int
    preparation: int
    past: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "break_slot": self.break_slot,
            "readout_step": self.readout_step,
            "povm_outcome": self.povm_outcome,
            "preparation": self.preparation,
            "past": list(self.past),
        }


@dataclass(frozen=True)
class MarkovReport:
    is_markov: bool
    max_deviation: float
    witness: tuple[ConditioningRecord, ConditioningRecord] | None
    tolerance: float
    breaks_tested: tuple[tuple[int, int], ...]
    skipped_conditionals: int = 0
    inconclusive_groups: tuple[tuple[int, int, int], ...] = ()

    @property
    def conclusive(self) -> bool:
        return not self.inconclusive_groups

    def as_dict(self) -> dict:
        return {
            "is_markov": self.is_markov,
            "max_deviation": self.max_deviation,
            "witness": None if self.witness is None else
                [w.as_dict() for w in self.witness],
            "tolerance": self.tolerance,
            "breaks_tested": [list(b) for b in self.breaks_tested],
            "skipped_conditionals": self.skipped_conditionals,
            "inconclusive_groups": [list(g) for g in self.inconclusive_groups],
        }


@dataclass(frozen=True)
class DivisibilityReport:
    max_defect: float
    triple_defects: tuple[tuple[int, int, int, float], ...]
    pair_cp_defects: tuple[tuple[int, int, float], ...]
    tolerance: float
    filler: str

    @property
    def is_divisible(self) -> bool:
        return self.max_defect <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "max_defect": self.max_defect,
            "is_divisible": self.is_divisible,
            "triple_defects": [list(t) for t in self.triple_defects],
            "pair_cp_defects": [list(p) for p in self.pair_cp_defects],
            "tolerance": self.tolerance,
            "filler": self.filler,
        }


@dataclass(frozen=True)
class MeasureReport:
    n_value: float
    metric: str
    closest_markov: ProcessTensor
    bond_dims: tuple[int, ...]
    is_upper_bound: bool = False

    def confusion(self, n: int) -> float:
        return confusion_probability(self.n_value, n)

    def as_dict(self) -> dict:
        return {
            "n_value": self.n_value,
            "metric": self.metric,
            "is_upper_bound": self.is_upper_bound,
            "bond_dims": list(self.bond_dims),
        }


@dataclass(frozen=True)
class ClassicalProcess:
    """Joint outcome distribution for fixed per-slot instruments.

    ``table`` axes run chronologically (slot 0 first); a final-readout
    POVM, when supplied, appends one more axis.
    """

    table: Array
    outcome_labels: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", t)
        if t.min() < -1e-9:
            raise ValidationError(f"negative probability {t.min():.3e}")
        if abs(t.sum() - 1.0) > 1e-9:
            raise ValidationError(f"table sums to {t.sum()}, not 1")

    @property
    def n_points(self) -> int:
        return self.table.ndim

    def as_dict(self) -> dict:
        return {
            "shape": list(self.table.shape),
            "outcome_labels": [list(l) for l in self.outcome_labels],
            "probabilities": self.table.reshape(-1).tolist(),
        }


class ClassicalCheck(NamedTuple):
    is_markov: bool
    max_violation: float
    kolmogorov_ok: bool


# ---------------------------------------------------------------------------
# the operational Markov test
# ---------------------------------------------------------------------------

def _bloch_vectors(states: Array) -> Array:
    """(n, 3) real Bloch vectors of a stack of normalized qubit states."""
    bx = (states[:, 0, 1] + states[:, 1, 0]).real
    by = (1j * (states[:, 0, 1] - states[:, 1, 0])).real
    bz = (states[:, 0, 0] - states[:, 1, 1]).real
    return np.stack([bx, by, bz], axis=1)


def _diameter_qubit(states: Array) -> tuple[float, int, int]:
    """Exact max pairwise trace distance of normalized qubit states
    (Euclidean diameter in Bloch space)."""
    b = _bloch_vectors(states)
    n = b.shape[0]
    best = (0.0, 0, 0)
    chunk = max(1, min(n, 2 ** 22 // max(n, 1)))
    for start in range(0, n, chunk):
        block = b[start:start + chunk]
        d2 = ((block[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        idx = np.unravel_index(np.argmax(d2), d2.shape)
        val = math.sqrt(float(d2[idx]))
        if val > best[0]:
            best = (val, start + int(idx[0]), int(idx[1]))
    return best


def _diameter_general(states: Array) -> tuple[float, int, int]:
    n = states.shape[0]
    best = (0.0, 0, 0)
    for i in range(n):
        for j in range(i + 1, n):
            val = trace_norm_distance(states[i], states[j])
            if val > best[0]:
                best = (val, i, j)
    return best


def _reduced_form(pt: ProcessTensor, k: int, l: int) -> Array:
    """Contraction form of the tensor restricted to readout step l with
    identity controls filled into slots strictly between k and l.

    Returns an array of shape (d*d, d**4 [slot k], d**4 [slot k-1], ...,
    d**4 [slot 0])."""
    base = pt if l == pt.n_steps else pt.restrict(range(l + 1))
    form = base.contraction_form()
    ident = QuantumMap.identity(pt.system_dim).choi.reshape(-1)
    # slots l-1 ... k+1 occupy the leading slot axes (axis 1 onward)
    for _ in range(l - 1 - k):
        form = np.tensordot(form, ident, axes=([1], [0]))
    return form


def markov_test(pt: ProcessTensor, basis: OperationBasis,
                break_set: CausalBreak | None = None,
                tol: float = MARKOV_TOL,
                exhaustive: bool = False,
                prob_floor: float = PROBABILITY_FLOOR) -> MarkovReport:
    """Causal-break sweep for operational Markovianity.

    For every break position k in [1, K-1] and readout step l > k, every
    sequence of basis elements on the earlier slots and every POVM outcome
    of the break are realized; conditional states sharing a preparation are
    compared pairwise in trace distance. Break positions are scanned from
    the latest downward and the sweep stops at the first deviation above
    tolerance unless ``exhaustive`` is set.

    Informational completeness of the basis and of the break POVM makes the
    sweep sufficient: equality across the swept controls implies equality
    for every control sequence.
    """
    n_steps = pt.n_steps
    d = pt.system_dim
    if n_steps < 2:
        raise ValidationError(
            "the causal-break test needs at least two steps; a single-step "
            "process is Markovian by construction")
    if break_set is None:
        break_set = default_break(d)
    n_basis = len(basis)
    basis_vecs = np.stack([e.choi.reshape(-1) for e in basis.elements])
    # break realization (r, s) has Choi  P_s (x) Pi_r^T
    break_vecs = np.stack([
        tensor_product(p, e.T).reshape(-1)
        for e in break_set.effects for p in break_set.preparations])
    n_out = break_set.n_outcomes
    n_prep = break_set.n_preparations

    best = 0.0
    witness = None
    skipped = 0
    inconclusive: list[tuple[int, int, int]] = []
    breaks_tested: list[tuple[int, int]] = []
    stop = False

    for k in range(n_steps - 1, 0, -1):
        for l in range(k + 1, n_steps + 1):
            breaks_tested.append((k, l))
            form = _reduced_form(pt, k, l)
            states_by_prep: dict[int, list[Array]] = {s: [] for s in range(n_prep)}
            records_by_prep: dict[int, list[ConditioningRecord]] = \
                {s: [] for s in range(n_prep)}
            for past in itertools.product(range(n_basis), repeat=k):
                arr = form
                for mu in past:  # slot 0 sits on the last axis
                    arr = arr @ basis_vecs[mu]
                outs = (arr @ break_vecs.T).reshape(d, d, n_out, n_prep)
                probs = np.einsum("aars->rs", outs).real
                for r in range(n_out):
                    for s in range(n_prep):
                        p = probs[r, s]
                        if p <= prob_floor:
                            skipped += 1
                            continue
                        states_by_prep[s].append(outs[:, :, r, s] / p)
                        records_by_prep[s].append(ConditioningRecord(
                            break_slot=k, readout_step=l, povm_outcome=r,
                            preparation=s, past=past))
            for s in range(n_prep):
                group = states_by_prep[s]
                if not group:
                    inconclusive.append((k, l, s))
                    continue
                stack = np.stack(group)
                if d == 2:
                    dev, i, j = _diameter_qubit(stack)
                else:
                    dev, i, j = _diameter_general(stack)
                if dev > best:
                    best = dev
                    witness = (records_by_prep[s][i], records_by_prep[s][j])
                if best > tol and not exhaustive:
                    stop = True
                    break
            if stop:
                break
        if stop:
            break

    return MarkovReport(
        is_markov=bool(best <= tol),
        max_deviation=float(best),
        witness=witness if best > tol else None,
        tolerance=float(tol),
        breaks_tested=tuple(breaks_tested),
        skipped_conditionals=skipped,
        inconclusive_groups=tuple(inconclusive),
    )


# ---------------------------------------------------------------------------
# divisibility
# ---------------------------------------------------------------------------

def divisibility_test(pt: ProcessTensor, basis: OperationBasis | None = None,
                      tol: float = MARKOV_TOL,
                      filler: str = "identity") -> DivisibilityReport:
    """Extract the dynamics maps for every step pair and check that longer
    maps compose from shorter ones.

    The defect for a triple j < k < l is the max-norm difference of the
    superoperators of the extracted map (l:j) and the composition
    (l:k) o (k:j). Each extracted map's CP defect is reported alongside.
    """
    n_steps = pt.n_steps
    if n_steps < 2:
        raise ValidationError("divisibility needs at least two steps")
    maps: dict[tuple[int, int], QuantumMap] = {}
    for j in range(n_steps):
        for l in range(j + 1, n_steps + 1):
            maps[(j, l)] = pt.marginal_map(j, l, filler=filler, basis=basis)
    triples = []
    max_defect = 0.0
    for j in range(n_steps - 1):
        for k in range(j + 1, n_steps):
            for l in range(k + 1, n_steps + 1):
                direct = maps[(j, l)].superoperator
                composed = maps[(k, l)].superoperator @ maps[(j, k)].superoperator
                defect = float(np.abs(direct - composed).max())
                triples.append((j, k, l, defect))
                max_defect = max(max_defect, defect)
    cp = tuple((j, l, float(m.cp_defect)) for (j, l), m in sorted(maps.items()))
    return DivisibilityReport(
        max_defect=max_defect,
        triple_defects=tuple(triples),
        pair_cp_defects=cp,
        tolerance=float(tol),
        filler=filler,
    )


# ---------------------------------------------------------------------------
# the closest memoryless process and the measures
# ---------------------------------------------------------------------------

def _block_legs(n_steps: int) -> list[tuple[int, ...]]:
    """Leg-index blocks of the memoryless product structure: adjacent pairs
    (final output with the last slot output, each slot input with the
    previous slot output) and the earliest input leg alone."""
    blocks = [(2 * m, 2 * m + 1) for m in range(n_steps)]
    blocks.append((2 * n_steps,))
    return blocks


def _block_marginals(pt: ProcessTensor) -> list[Array]:
    dims = pt.legs.dims
    return [partial_trace(pt.choi, dims, block)
            for block in _block_legs(pt.n_steps)]


def closest_markov(pt: ProcessTensor) -> ProcessTensor:
    """Discard intertemporal correlations: the tensor product of the step
    marginals and the initial-state marginal, renormalized to the stored
    trace convention (trace d per step block, trace 1 for the initial
    state)."""
    d = pt.system_dim
    marginals = _block_marginals(pt)
    scaled = []
    for i, m in enumerate(marginals):
        target = float(d) if i < pt.n_steps else 1.0
        tr = np.trace(m).real
        scaled.append(m * (target / tr))
    product = tensor_product(*scaled)
    return ProcessTensor(product, d, pt.times, validate=False)


def relative_entropy(rho: Array, sigma: Array,
                     support_tol: float = 1e-10,
                     cutoff: float = SUPPORT_CUTOFF) -> float:
    """Quantum relative entropy tr[rho (log rho - log sigma)] in nats.

    Inputs are unit-trace PSD matrices; if rho has weight outside the
    support of sigma beyond ``support_tol`` the result is +inf.
    """
    w_r, v_r = hermitian_eig(rho)
    w_s, v_s = hermitian_eig(sigma)
    if w_r.min() < -support_tol or w_s.min() < -support_tol:
        raise NotPositive("relative entropy inputs must be PSD")
    w_r = np.clip(w_r, 0.0, None)
    null = w_s <= cutoff
    if null.any():
        overlap_null = np.abs(v_s[:, null].conj().T @ v_r) ** 2
        weight = float((overlap_null @ w_r).sum())
        if weight > support_tol:
            return math.inf
    term_r = float(np.sum(w_r[w_r > cutoff] * np.log(w_r[w_r > cutoff])))
    overlaps = np.abs(v_s.conj().T @ v_r) ** 2  # [sigma eig, rho eig]
    log_ws = np.where(w_s > cutoff, np.log(np.clip(w_s, cutoff, None)), 0.0)
    term_cross = float(log_ws @ overlaps @ w_r)
    return term_r - term_cross


def non_markovianity(pt: ProcessTensor, metric: str = "relative_entropy",
                     bond_cutoff: float = BOND_CUTOFF) -> MeasureReport:
    """Distance from the unit-trace-normalized tensor to the closest
    memoryless one.

    For relative entropy the minimizer over product structures is the
    product of the block marginals, so the measure evaluates in closed
    form; the trace-distance variant uses the same candidate and is
    reported as an upper bound. The result is in nats and clamped at 0.
    """
    if metric not in ("relative_entropy", "trace_distance"):
        raise ValidationError(f"unknown metric {metric!r}")
    tr = pt.trace
    rho = hermitize(pt.choi, atol=1e-8) / tr
    marginals = _block_marginals(pt)
    sigma = tensor_product(*[m / np.trace(m).real for m in marginals])
    if metric == "relative_entropy":
        n_value = relative_entropy(rho, sigma)
        upper = False
    else:
        n_value = trace_norm_distance(rho, sigma)
        upper = True
    if n_value != math.inf:
        if n_value < -1e-10:
            raise ValidationError(f"measure came out negative: {n_value}")
        n_value = max(0.0, float(n_value))
    return MeasureReport(
        n_value=n_value,
        metric=metric,
        closest_markov=closest_markov(pt),
        bond_dims=tuple(bond_dimension(pt, cutoff=bond_cutoff)),
        is_upper_bound=upper,
    )


def confusion_probability(n_value: float, n: int) -> float:
    """exp(-n * N): the chance of mistaking the process for a memoryless
    hypothesis after n measurements of its Choi state."""
    if n < 0:
        raise ValidationError("measurement count must be nonnegative")
    if n_value < 0:
        raise ValidationError("the measure must be nonnegative")
    if n == 0:
        return 1.0
    return float(math.exp(-n * n_value))


def bond_dimension(pt: ProcessTensor, cutoff: float = BOND_CUTOFF) -> list[int]:
    """Operator-Schmidt ranks across the temporal cuts.

    Legs are ordered chronologically and cut at each control time t_j
    (between the slot's input and output legs); the rank counts singular
    values above ``cutoff`` times the largest. A memoryless process is
    rank 1 across every cut.
    """
    k = pt.n_steps
    d = pt.system_dim
    n = 2 * k + 1
    t = pt.as_tensor()
    # chronological leg order is the reverse of the stored order
    chrono = list(range(n - 1, -1, -1))
    t = t.transpose([*chrono, *[c + n for c in chrono]])
    dims = []
    for j in range(k):
        n_early = 2 * j + 1
        n_late = n - n_early
        order = (list(range(n_early)) + [n + i for i in range(n_early)]
                 + list(range(n_early, n)) + [n + i for i in range(n_early, n)])
        mat = t.transpose(order).reshape(d ** (2 * n_early), d ** (2 * n_late))
        svals = np.linalg.svd(mat, compute_uv=False)
        top = svals.max()
        dims.append(int((svals > cutoff * top).sum()) if top > 0 else 0)
    return dims


# ---------------------------------------------------------------------------
# classical limit
# ---------------------------------------------------------------------------

def classical_process(pt: ProcessTensor, instruments: Sequence[Instrument],
                      final_povm: Sequence[Array] | None = None
                      ) -> ClassicalProcess:
    """Joint outcome distribution for one fixed instrument per slot.

    With ``final_povm`` supplied, the final output is measured as well and
    contributes the last table axis; otherwise the final state is traced
    and the joint probabilities cover the slot outcomes alone.
    """
    k = pt.n_steps
    d = pt.system_dim
    if len(instruments) != k:
        raise DimensionMismatch(f"{len(instruments)} instruments for {k} slots")
    for idx, ins in enumerate(instruments):
        if ins.in_dim != d:
            raise DimensionMismatch(f"instrument {idx} dim != system dim")
    form = pt.contraction_form()
    operands = [form, [0] + [1 + j for j in range(k - 1, -1, -1)]]
    out_labels = []
    lbl = k + 1
    for j, ins in enumerate(instruments):
        stack = np.stack([m.choi.reshape(-1) for m in ins.members])
        operands.extend([stack, [lbl, 1 + j]])
        out_labels.append(lbl)
        lbl += 1
    if final_povm is not None:
        effects = np.stack([hermitize(np.asarray(e, dtype=complex))
                            for e in final_povm])
        total = effects.sum(axis=0)
        if np.abs(total - np.eye(d)).max() > 1e-10:
            raise ValidationError("final POVM must sum to identity")
        # axis 0 of the form combines (row, col) of the final output
        pair = effects.reshape(len(final_povm), -1)
        # tr(E rho) with rho flattened row-major pairs with E transposed
        eff_op = pair.conj()  # tr(E rho) = sum_ab E*_ab(rho)_ab for hermitian E
        operands.extend([eff_op, [lbl, 0]])
        out_labels.append(lbl)
    else:
        tracer = np.eye(d, dtype=complex).reshape(-1)
        operands.extend([tracer, [0]])
    table = np.einsum(*operands, out_labels, optimize=True)
    table = np.asarray(table.real, dtype=float)
    labels = [tuple(ins.labels) for ins in instruments]
    if final_povm is not None:
        labels.append(tuple(str(i) for i in range(len(final_povm))))
    return ClassicalProcess(table=table, outcome_labels=tuple(labels))


def classical_markov_check(cp: ClassicalProcess, tol: float = 1e-9,
                           prob_floor: float = PROBABILITY_FLOOR,
                           marginal_tables: dict | None = None
                           ) -> ClassicalCheck:
    """Check the classical Markov chain condition on the outcome table.

    For every time index m >= 2 and every history with probability above
    the floor, compares P(r_m | r_{m-1}, history) with P(r_m | r_{m-1}).
    ``marginal_tables`` optionally maps tuples of retained time indices to
    separately measured tables; Kolmogorov consistency then requires each
    to equal the corresponding marginal of the full table (vacuously true
    when none are supplied).
    """
    table = cp.table
    n_axes = table.ndim
    max_violation = 0.0
    for m in range(2, n_axes):
        # joint over (r_0 ... r_m), later outcomes marginalized
        joint = table.sum(axis=tuple(range(m + 1, n_axes))) if m + 1 < n_axes \
            else table
        pair = joint.sum(axis=tuple(range(0, m - 1)))  # (r_{m-1}, r_m)
        pair_norm = pair.sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond_pair = np.where(pair_norm > prob_floor, pair / pair_norm, np.nan)
        hist_norm = joint.sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond_hist = np.where(hist_norm > prob_floor, joint / hist_norm, np.nan)
        diff = np.abs(cond_hist - cond_pair.reshape(
            (1,) * (m - 1) + cond_pair.shape))
        if not np.isnan(diff).all():
            max_violation = max(max_violation, float(np.nanmax(diff)))
    kolmogorov_ok = True
    if marginal_tables:
        for keep, sub in marginal_tables.items():
            keep = tuple(sorted(keep))
            drop = tuple(i for i in range(n_axes) if i not in keep)
            marg = table.sum(axis=drop) if drop else table
            if np.abs(marg - np.asarray(sub, dtype=float)).max() > tol:
                kolmogorov_ok = False
    return ClassicalCheck(is_markov=bool(max_violation <= tol),
                          max_violation=max_violation,
                          kolmogorov_ok=kolmogorov_ok)


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def apply_local_channel(pt: ProcessTensor, leg: int,
                        channel: QuantumMap) -> ProcessTensor:
    """Apply a channel to a single leg of the generalized Choi state
    (post-processing used by the CP-contractivity checks)."""
    d = pt.system_dim
    if channel.in_dim != d or channel.out_dim != d:
        raise DimensionMismatch("channel dims must match the leg dimension")
    n = pt.legs.n_legs
    if not 0 <= leg < n:
        raise ValidationError(f"leg {leg} outside [0, {n - 1}]")
    t = pt.as_tensor()
    s4 = channel.superoperator.reshape(d, d, d, d)
    row = list(range(n))
    col = list(range(n, 2 * n))
    out = row + col
    srow, scol = 2 * n, 2 * n + 1
    sub = [srow, scol, row[leg], col[leg]]
    out[leg], out[n + leg] = srow, scol
    res = np.einsum(s4, sub, t, row + col, out)
    return ProcessTensor(res.reshape(pt.dim, pt.dim), d, pt.times,
                         validate=False)

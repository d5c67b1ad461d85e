"""The multi-time process tensor: storage, contraction against control
sequences, conditional states after causal breaks, restriction, marginal
maps, and tomographic reconstruction.

Leg convention
--------------
A K-step tensor on times (t_0, ..., t_K) carries 2K + 1 legs of dimension d,
ordered

    [O_K, O_{K-1}, I_{K-1}, ..., O_1, I_1, O_0, I_0]

where I_j / O_j are the input / output legs of the control slot at t_j and
O_K is the final output. With the package's Choi convention (output leg
leftmost, trace d for TP maps) a memoryless process is the literal Kronecker
product of its step Chois and the average initial state,

    Upsilon = Lambda_{K:K-1} (x) ... (x) Lambda_{1:0} (x) rho_0,

each step Choi occupying one adjacent leg pair and rho_0 the last leg.

Contraction of slot Chois A_j against the tensor follows

    rho[a, c] = sum_{s, t} Upsilon[(a, s), (c, t)] * prod_j A_j[s_j, t_j],

which reproduces ordinary channel composition on product tensors and defines
the multilinear action in general.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .defaults import PROBABILITY_FLOOR, PSD_CLIP
from .errors import (
    DimensionMismatch,
    TomographyDataError,
    UnresolvableConditional,
    ValidationError,
)
from .linalg import Array, LegShape, hermitize, tensor_product
from .qops import CausalBreak, DensityMatrix, Instrument, OperationBasis, QuantumMap

__all__ = [
    "ProcessTensor",
    "ControlSequence",
    "ConditionalState",
    "leg_labels",
    "apply",
    "conditional_state",
    "marginal_map",
    "restrict",
    "from_tomography",
]


def leg_labels(n_steps: int) -> tuple[str, ...]:
    labels = [f"O{n_steps}"]
    for j in range(n_steps - 1, -1, -1):
        labels.extend((f"O{j}", f"I{j}"))
    return tuple(labels)


def _slot_row_axes(n_steps: int, j: int) -> tuple[int, int]:
    """Row-tensor axes (O_j, I_j) of slot j in the stored leg order."""
    base = 1 + 2 * (n_steps - 1 - j)
    return base, base + 1


# ---------------------------------------------------------------------------
# control sequences
# ---------------------------------------------------------------------------

class ControlSequence:
    """An ordered list of slot operations.

    Each slot entry is a :class:`QuantumMap`, an instrument member selection
    ``(Instrument, outcome)``, or a causal-break realization
    ``(CausalBreak, outcome, preparation)``. At most one slot may hold a
    causal break.
    """

    def __init__(self, slots: Iterable, system_dim: int | None = None):
        maps: list[QuantumMap] = []
        break_slots: list[int] = []
        for pos, entry in enumerate(slots):
            if isinstance(entry, QuantumMap):
                maps.append(entry)
            elif isinstance(entry, tuple) and len(entry) == 2 and \
                    isinstance(entry[0], Instrument):
                maps.append(entry[0].members[entry[1]])
            elif isinstance(entry, tuple) and len(entry) == 3 and \
                    isinstance(entry[0], CausalBreak):
                maps.append(entry[0].map(entry[1], entry[2]))
                break_slots.append(pos)
            else:
                raise ValidationError(
                    f"slot {pos}: expected QuantumMap, (Instrument, r) or "
                    f"(CausalBreak, r, s), got {type(entry).__name__}")
        if len(break_slots) > 1:
            raise ValidationError(
                f"at most one causal break per sequence, got slots {break_slots}")
        if system_dim is not None:
            for pos, m in enumerate(maps):
                if m.in_dim != system_dim or m.out_dim != system_dim:
                    raise DimensionMismatch(
                        f"slot {pos} dims ({m.in_dim}, {m.out_dim}) != "
                        f"system dim {system_dim}")
        self.maps = maps
        self.break_slot = break_slots[0] if break_slots else None

    @classmethod
    def identity(cls, d: int, n_slots: int) -> "ControlSequence":
        return cls([QuantumMap.identity(d)] * n_slots)

    def __len__(self):
        return len(self.maps)

    def chois(self) -> list[Array]:
        return [m.choi for m in self.maps]


def _resolve_controls(controls, n_slots: int, d: int) -> list[Array]:
    if not isinstance(controls, ControlSequence):
        controls = ControlSequence(controls, system_dim=d)
    if len(controls) != n_slots:
        raise DimensionMismatch(
            f"sequence has {len(controls)} slots, tensor has {n_slots}")
    for pos, m in enumerate(controls.maps):
        if m.in_dim != d or m.out_dim != d:
            raise DimensionMismatch(
                f"slot {pos} dims ({m.in_dim}, {m.out_dim}) != system dim {d}")
    return controls.chois()


@dataclass(frozen=True)
class ConditionalState:
    """Normalized state after a causal break, with the realization
    probability kept separate."""

    state: DensityMatrix
    probability: float
    conditioning: dict


# ---------------------------------------------------------------------------
# the process tensor
# ---------------------------------------------------------------------------

class ProcessTensor:
    """Generalized Choi matrix of a K-step process with time and leg
    metadata. Immutable after construction."""

    def __init__(self, choi: Array, system_dim: int, times: Sequence[float],
                 validate: bool = True):
        choi = np.asarray(choi, dtype=complex)
        self.system_dim = int(system_dim)
        self.times = tuple(float(t) for t in times)
        n_steps = len(self.times) - 1
        if n_steps < 0:
            raise ValidationError("need at least one time tag")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValidationError(f"times must be strictly increasing: {self.times}")
        n_legs = 2 * n_steps + 1
        dim = self.system_dim ** n_legs
        if choi.shape != (dim, dim):
            raise DimensionMismatch(
                f"choi shape {choi.shape} != ({dim}, {dim}) for "
                f"{n_steps} steps of dimension {self.system_dim}")
        self.choi = choi
        self.legs = LegShape(dims=(self.system_dim,) * n_legs,
                             labels=leg_labels(n_steps))
        if validate:
            asym = np.abs(choi - choi.conj().T).max()
            if asym > 1e-8:
                raise ValidationError(f"choi asymmetry {asym:.3e} exceeds 1e-8")
        self._form = None
        self._min_eig = None

    # -- basic properties ----------------------------------------------------

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dim(self) -> int:
        return self.choi.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.choi).real)

    @property
    def min_eigenvalue(self) -> float:
        if self._min_eig is None:
            self._min_eig = float(np.linalg.eigvalsh(
                (self.choi + self.choi.conj().T) / 2).min())
        return self._min_eig

    def as_tensor(self) -> Array:
        """View with one axis per leg: row legs first, then column legs."""
        d, n = self.system_dim, self.legs.n_legs
        return self.choi.reshape((d,) * (2 * n))

    def contraction_form(self) -> Array:
        """Cached slot-major array of shape (d*d, d**4, ..., d**4).

        Axis 0 combines the final-output row/column indices; slot axes run
        from slot K-1 down to slot 0, each combining that slot's
        (O_row, I_row, O_col, I_col) indices in Choi-flattening order.
        """
        if self._form is None:
            d, k = self.system_dim, self.n_steps
            n = 2 * k + 1
            t = self.as_tensor()
            order = [0, n]
            for j in range(k - 1, -1, -1):
                o, i = _slot_row_axes(k, j)
                order.extend((o, i, o + n, i + n))
            self._form = np.ascontiguousarray(
                t.transpose(order).reshape((d * d,) + (d ** 4,) * k))
        return self._form

    # -- contraction ----------------------------------------------------------

    def _contract(self, chois: Sequence[Array]) -> Array:
        """Contract one Choi per slot (chronological order) to a raw
        (d, d) output matrix."""
        d = self.system_dim
        res = self.contraction_form()
        for c in chois:  # slot 0 sits on the last axis
            res = res @ np.asarray(c, dtype=complex).reshape(-1)
        return res.reshape(d, d)

    def apply(self, controls) -> DensityMatrix:
        """Final-time output for a control sequence; the trace is the joint
        probability of realizing nondeterministic slots."""
        chois = _resolve_controls(controls, self.n_steps, self.system_dim)
        return DensityMatrix(self._contract(chois))

    # -- restriction -----------------------------------------------------------

    def restrict(self, subset: Sequence[int]) -> "ProcessTensor":
        """Tensor on a subset of the time grid.

        Identity controls are contracted into skipped interior slots; times
        after the new final time are discarded using the causal structure
        (each removed step contributes a factor d that is divided out).
        """
        k = self.n_steps
        subset = sorted({int(s) for s in subset})
        if not subset:
            raise ValidationError("time subset must be nonempty")
        if subset[0] < 0 or subset[-1] > k:
            raise ValidationError(f"subset {subset} outside grid [0, {k}]")
        if len(subset) == k + 1:
            return self
        l_max = subset[-1]
        keep_slots = [j for j in subset if j < l_max]
        d, n = self.system_dim, self.legs.n_legs

        labels = {}
        next_label = 0

        def fresh():
            nonlocal next_label
            next_label += 1
            return next_label - 1

        row = [None] * n
        col = [None] * n
        # final output leg of the original tensor
        if l_max == k:
            row[0], col[0] = fresh(), fresh()
            out_rows, out_cols = [row[0]], [col[0]]
        else:
            lbl = fresh()
            row[0] = col[0] = lbl
            out_rows, out_cols = [], []
        for j in range(k - 1, -1, -1):
            o, i = _slot_row_axes(k, j)
            if j >= l_max:
                # future slot: trace both legs
                row[o] = col[o] = fresh()
                row[i] = col[i] = fresh()
            elif j in keep_slots:
                row[o], col[o] = fresh(), fresh()
                row[i], col[i] = fresh(), fresh()
            else:
                # contract an identity control: O and I legs pair up
                lbl_r, lbl_c = fresh(), fresh()
                row[o] = row[i] = lbl_r
                col[o] = col[i] = lbl_c
        if l_max < k:
            # I_{l_max} becomes the new final output
            o, i = _slot_row_axes(k, l_max)
            # the O_{l_max} leg was traced above (j >= l_max branch); undo for I
            row[i], col[i] = fresh(), fresh()
            out_rows, out_cols = [row[i]], [col[i]]
        for j in sorted(keep_slots, reverse=True):
            o, i = _slot_row_axes(k, j)
            out_rows.extend((row[o], row[i]))
            out_cols.extend((col[o], col[i]))

        t = self.as_tensor()
        res = np.einsum(t, row + col, out_rows + out_cols)
        new_dim = d ** len(out_rows)
        res = res.reshape(new_dim, new_dim) / d ** (k - l_max)
        new_times = [self.times[s] for s in subset]
        return ProcessTensor(res, self.system_dim, new_times, validate=False)

    # -- conditional states ----------------------------------------------------

    def conditional_state(self, k: int, prep_index: int, povm_outcome: int,
                          past=(), future=(), break_set: CausalBreak | None = None,
                          prob_floor: float = PROBABILITY_FLOOR) -> ConditionalState:
        """State at t_l after a causal break at slot k, where
        l = k + 1 + len(future).

        ``past`` supplies the controls on slots 0..k-1 and ``future`` the
        controls strictly between the break and the readout time.
        """
        n_steps = self.n_steps
        d = self.system_dim
        if not 0 <= k < n_steps:
            raise ValidationError(f"break slot {k} outside [0, {n_steps - 1}]")
        if break_set is None:
            break_set = default_break(d)
        past = list(past.maps if isinstance(past, ControlSequence) else past)
        future = list(future.maps if isinstance(future, ControlSequence) else future)
        if len(past) != k:
            raise DimensionMismatch(f"past must cover slots 0..{k - 1}")
        l = k + 1 + len(future)
        if l > n_steps:
            raise DimensionMismatch(
                f"readout step {l} beyond final step {n_steps}")
        break_map = break_set.map(povm_outcome, prep_index)
        slots = list(past) + [break_map] + list(future)
        base = self if l == n_steps else self.restrict(range(l + 1))
        chois = _resolve_controls(slots, l, d)
        out = base._contract(chois)
        p = float(np.trace(out).real)
        if p <= prob_floor:
            raise UnresolvableConditional(
                f"outcome probability {p:.3e} at or below floor {prob_floor:.1e}")
        state = DensityMatrix(out / p)
        record = {
            "break_slot": k,
            "readout_step": l,
            "povm_outcome": int(povm_outcome),
            "preparation": int(prep_index),
            "n_past": len(past),
        }
        return ConditionalState(state=state, probability=min(max(p, 0.0), 1.0),
                                conditioning=record)

    # -- marginal dynamics -------------------------------------------------------

    def marginal_map(self, j: int, l: int, filler: str = "identity",
                     basis: OperationBasis | None = None) -> QuantumMap:
        """The dynamics map from slot j's output to the state at t_l.

        A full preparation frame is injected at slot j (discarding its
        input), identity controls fill slots strictly between j and l, and
        ``filler`` ("identity" or "average") fills slots before j.
        """
        n_steps = self.n_steps
        d = self.system_dim
        if not 0 <= j < l <= n_steps:
            raise ValidationError(f"invalid slot range ({j}, {l})")
        if basis is None:
            basis = _default_basis(d)
        if filler == "identity":
            fill = QuantumMap.identity(d).choi
        elif filler == "average":
            fill = tensor_product(np.eye(d) / d, np.eye(d))
        else:
            raise ValidationError(f"unknown filler policy {filler!r}")
        base = self if l == n_steps else self.restrict(range(l + 1))
        ident = QuantumMap.identity(d).choi
        choi_map = np.zeros((d * d, d * d), dtype=complex)
        for prep, dual in zip(basis.preparations, basis.prep_duals):
            slots = [fill] * j + [tensor_product(prep, np.eye(d))] \
                + [ident] * (l - j - 1)
            out = base._contract(slots)
            choi_map += tensor_product(out, dual.conj())
        return QuantumMap.from_choi(hermitize(choi_map, atol=1e-8),
                                    in_dim=d, out_dim=d)

    # -- io ---------------------------------------------------------------------

    def save(self, path) -> None:
        from . import ptf
        ptf.save(self, path)

    @classmethod
    def load(cls, path) -> "ProcessTensor":
        from . import ptf
        return ptf.load(path)

    def __repr__(self):
        return (f"ProcessTensor(d={self.system_dim}, steps={self.n_steps}, "
                f"trace={self.trace:.6g})")


@lru_cache(maxsize=8)
def _default_basis(d: int) -> OperationBasis:
    from .qops import ic_basis
    return ic_basis(d)


@lru_cache(maxsize=8)
def default_break(d: int) -> CausalBreak:
    return CausalBreak.default(d)


# ---------------------------------------------------------------------------
# tomographic reconstruction
# ---------------------------------------------------------------------------

def from_tomography(records, basis: OperationBasis, d: int, k: int,
                    times: Sequence[float] | None = None,
                    psd_clip: float = PSD_CLIP,
                    spot_check: int = 16,
                    check_tol: float = 1e-9) -> ProcessTensor:
    """Reconstruct a K-step tensor from a complete basis-product sweep.

    ``records`` holds pairs ``(key, output)`` where ``key`` is the tuple of
    basis-element indices applied at slots (0, ..., k-1) and ``output`` the
    (possibly subnormalized) final state. Every index tuple must appear
    exactly once. The reconstruction is the dual-frame sum

        Upsilon = sum_mu  rho(mu) (x) D*_{mu_{k-1}} (x) ... (x) D*_{mu_0},

    followed by a PSD repair that clips eigenvalues in [-psd_clip, 0).
    """
    if d != basis.dimension:
        raise DimensionMismatch(f"basis dimension {basis.dimension} != {d}")
    n = len(basis)
    shape = (n,) * k
    table = np.zeros(shape + (d, d), dtype=complex)
    seen = np.zeros(shape, dtype=bool)
    count = 0
    for key, out in records:
        key = tuple(int(i) for i in key)
        if len(key) != k or any(i < 0 or i >= n for i in key):
            raise TomographyDataError(f"bad record key {key}")
        if seen[key]:
            raise TomographyDataError(f"duplicate record for key {key}")
        m = out.matrix if isinstance(out, DensityMatrix) else \
            np.asarray(out, dtype=complex)
        if m.shape != (d, d):
            raise TomographyDataError(
                f"record output shape {m.shape} != ({d}, {d})")
        seen[key] = True
        table[key] = m
        count += 1
    if count != n ** k:
        raise TomographyDataError(
            f"incomplete record set: {count} of {n ** k} basis sequences")

    dc = basis.dual_conj_tensors  # (n, d, d, d, d)
    operands = [table, list(range(k)) + [k, k + 1]]
    row_out, col_out = [k], [k + 1]
    lbl = k + 2
    # slot axes of ``table`` run chronologically; leg order wants slot k-1 first
    for j in range(k - 1, -1, -1):
        labels = [j, lbl, lbl + 1, lbl + 2, lbl + 3]
        operands.extend([dc, labels])
        row_out.extend((lbl, lbl + 1))
        col_out.extend((lbl + 2, lbl + 3))
        lbl += 4
    ups = np.einsum(*operands, row_out + col_out, optimize=True)
    dim = d ** (2 * k + 1)
    ups = ups.reshape(dim, dim)
    ups = (ups + ups.conj().T) / 2

    w, v = np.linalg.eigh(ups)
    if w.min() < -psd_clip:
        raise TomographyDataError(
            f"reconstruction not PSD: eigenvalue {w.min():.3e} below "
            f"-{psd_clip:.1e} (inconsistent records)")
    if w.min() < 0:
        tr_before = ups.trace().real
        w = np.clip(w, 0.0, None)
        ups = (v * w) @ v.conj().T
        tr_after = ups.trace().real
        if tr_after > 0:
            ups *= tr_before / tr_after

    pt = ProcessTensor(ups, d, times if times is not None else range(k + 1),
                       validate=False)

    if spot_check and count:
        flat = [tuple(idx) for idx in np.ndindex(shape)]
        stride = max(1, len(flat) // spot_check)
        for key in flat[::stride][:spot_check]:
            got = pt._contract([basis.elements[i].choi for i in key])
            err = np.abs(got - table[key]).max()
            if err > check_tol:
                raise TomographyDataError(
                    f"reconstruction mismatch {err:.3e} at key {key}")
    return pt


# ---------------------------------------------------------------------------
# module-level operation aliases
# ---------------------------------------------------------------------------

def apply(pt: ProcessTensor, controls) -> DensityMatrix:
    return pt.apply(controls)


def conditional_state(pt: ProcessTensor, k: int, prep_index: int,
                      povm_outcome: int, past=(), future=(),
                      break_set: CausalBreak | None = None,
                      prob_floor: float = PROBABILITY_FLOOR) -> ConditionalState:
    return pt.conditional_state(k, prep_index, povm_outcome, past=past,
                                future=future, break_set=break_set,
                                prob_floor=prob_floor)


def marginal_map(pt: ProcessTensor, j: int, l: int, filler: str = "identity",
                 basis: OperationBasis | None = None) -> QuantumMap:
    return pt.marginal_map(j, l, filler=filler, basis=basis)


def restrict(pt: ProcessTensor, subset: Sequence[int]) -> ProcessTensor:
    return pt.restrict(subset)

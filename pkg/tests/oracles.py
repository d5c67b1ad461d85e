"""Independent oracle implementations for the test suite.

Everything here recomputes expected values through a different route than
the package (explicit index loops, direct dense evolution, enumeration, or
closed forms derived by hand), so agreement is meaningful.
"""

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KETP = np.array([1, 1], dtype=complex) / np.sqrt(2)
KETPI = np.array([1, 1j], dtype=complex) / np.sqrt(2)

P0 = np.outer(KET0, KET0.conj())
P1 = np.outer(KET1, KET1.conj())
PP = np.outer(KETP, KETP.conj())
PPI = np.outer(KETPI, KETPI.conj())


def kron_loops(a, b):
    """Kronecker product by explicit nested loops."""
    ra, ca = a.shape
    rb, cb = b.shape
    out = np.zeros((ra * rb, ca * cb), dtype=complex)
    for i in range(ra):
        for j in range(ca):
            for k in range(rb):
                for l in range(cb):
                    out[i * rb + k, j * cb + l] = a[i, j] * b[k, l]
    return out


def partial_trace_loops(m, dims, keep):
    """Partial trace by explicit index summation."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    t = m.reshape(dims + dims)
    out = np.zeros((d_keep, d_keep), dtype=complex)
    for row in np.ndindex(*dims):
        for col in np.ndindex(*dims):
            if any(row[i] != col[i] for i in traced):
                continue
            ri = 0
            ci = 0
            for i in keep:
                ri = ri * dims[i] + row[i]
                ci = ci * dims[i] + col[i]
            out[ri, ci] += t[row + col]
    return out


def choi_from_superop(sup, d):
    """Choi matrix built column by column from superoperator action."""
    out = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            mapped = (sup @ e.reshape(-1)).reshape(d, d)
            out += kron_loops(mapped, e)
    return out


def apply_kraus(kraus, rho):
    return sum(k @ rho @ k.conj().T for k in kraus)


def link_compose_choi(choi_later, choi_earlier, d):
    """Choi of a composition via element-wise action on a matrix basis."""
    out = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            mid = apply_choi(choi_earlier, e, d)
            mapped = apply_choi(choi_later, mid, d)
            out += kron_loops(mapped, e)
    return out


def apply_choi(choi, rho, d):
    """Map action from the Choi matrix: tr_in[C (I (x) rho^T)]."""
    c4 = choi.reshape(d, d, d, d)
    out = np.zeros((d, d), dtype=complex)
    for a in range(d):
        for b in range(d):
            for i in range(d):
                for j in range(d):
                    out[a, b] += c4[a, i, b, j] * rho[i, j]
    return out


def swap(d=2):
    s = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            s[i * d + j, j * d + i] = 1.0
    return s


# ---------------------------------------------------------------------------
# partial-swap (B.2-style) closed forms, derived by hand and verified against
# direct dense evolution in test_models
# ---------------------------------------------------------------------------

def partial_swap_unitary(theta):
    return np.cos(theta) * np.eye(4, dtype=complex) + 1j * np.sin(theta) * swap()


def b2_env_state_direct(rho_n, effect, theta):
    """Conditional environment state by direct dense evolution: evolve
    rho_n (x) I/2 under the partial swap, apply the system effect, trace
    the system, normalize."""
    u = partial_swap_unitary(theta)
    joint = u @ np.kron(rho_n, np.eye(2) / 2) @ u.conj().T
    weighted = np.kron(effect, np.eye(2)) @ joint
    env = np.trace(weighted.reshape(2, 2, 2, 2), axis1=0, axis2=2)
    return env / np.trace(env)


def b2_output_direct(prep, rho_n, effect, theta12, theta23):
    """System state one step after a causal break, by direct evolution."""
    env = b2_env_state_direct(rho_n, effect, theta12)
    u = partial_swap_unitary(theta23)
    joint = u @ np.kron(prep, env) @ u.conj().T
    return np.trace(joint.reshape(2, 2, 2, 2), axis1=1, axis2=3)


# ---------------------------------------------------------------------------
# two-swap (B.3-style) closed forms
# ---------------------------------------------------------------------------

def b3_choi_analytic(rho_s, rho_e):
    """The two-swap process tensor built from its exact product structure.

    The final output duplicates the slot-0 output through an identity
    channel, the slot-1 input carries the environment state, the slot-1
    output is discarded, and the earliest leg carries the initial state.
    Leg order [O2, O1, I1, O0, I0].
    """
    d = rho_s.shape[0]
    choi_id = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            choi_id += kron_loops(e, e)
    # factor order [O2, O0, O1, I1, I0] -> permute to [O2, O1, I1, O0, I0]
    m = kron_loops(kron_loops(kron_loops(choi_id, np.eye(d, dtype=complex)),
                              rho_e), rho_s)
    dims = [d] * 5
    t = m.reshape(dims + dims)
    perm = [0, 2, 3, 1, 4]
    order = perm + [p + 5 for p in perm]
    return t.transpose(order).reshape(d ** 5, d ** 5)


def b3_classical_table(rho_s, rho_e):
    """Hand-enumerated outcome table for computational measure-and-reprepare
    instruments at both slots plus a final computational readout.

    Slot 0 measures the initial state, slot 1 measures the environment, and
    the final readout reproduces the slot-0 outcome deterministically.
    """
    table = np.zeros((2, 2, 2))
    for r0 in range(2):
        for r1 in range(2):
            for r2 in range(2):
                table[r0, r1, r2] = (rho_s[r0, r0].real * rho_e[r1, r1].real
                                     * (1.0 if r2 == r0 else 0.0))
    return table


# ---------------------------------------------------------------------------
# entropies
# ---------------------------------------------------------------------------

def relative_entropy_eig(rho, sigma):
    """Relative entropy via scipy's eigensolver and an explicit double sum
    over eigenpairs (independent of the package's implementation)."""
    from scipy.linalg import eigh

    wr, vr = eigh(rho)
    ws, vs = eigh(sigma)
    total = 0.0
    for i in range(len(wr)):
        if wr[i] <= 1e-12:
            continue
        total += wr[i] * np.log(wr[i])
        for j in range(len(ws)):
            ov = abs(np.vdot(vs[:, j], vr[:, i])) ** 2
            if ov < 1e-16:
                continue
            if ws[j] <= 1e-12:
                return np.inf
            total -= wr[i] * ov * np.log(ws[j])
    return total


def von_neumann_entropy(rho):
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-12]
    return float(-(w * np.log(w)).sum())


def schmidt_rank_across(mat, dims_early, dims_late, cutoff=1e-10):
    """Operator-Schmidt rank by reshaping a matrix on (early (x) late) legs
    and running an SVD; independent route used against bond_dimension."""
    de = int(np.prod(dims_early))
    dl = int(np.prod(dims_late))
    t = mat.reshape(de, dl, de, dl).transpose(0, 2, 1, 3).reshape(de * de,
                                                                  dl * dl)
    s = np.linalg.svd(t, compute_uv=False)
    return int((s > cutoff * s.max()).sum())

"""Independent dense references used by the tests.

Everything here works on explicit 2**N state vectors and density matrices, so
it shares no code with the closed forms in the package.
"""
from functools import reduce
from itertools import product

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_all(mats):
    # party 0 is the leftmost tensor factor
    return reduce(np.kron, mats)


def ghz_density(n):
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return np.outer(psi, psi.conj())


def spin(direction):
    x, y, z = direction
    return x * PAULI["X"] + y * PAULI["Y"] + z * PAULI["Z"]


def apply_single_qubit(rho, kraus, k, n):
    out = np.zeros_like(rho)
    for K in kraus:
        op = kron_all([K if j == k else PAULI["I"] for j in range(n)])
        out += op @ rho @ op.conj().T
    return out


def noisy_ghz(n, kind="none", nu=0.0):
    rho = ghz_density(n)
    if kind == "depolarizing":
        q = nu / 4
        kraus = [np.sqrt(1 - 3 * q) * PAULI["I"]] + [np.sqrt(q) * PAULI[p] for p in "XYZ"]
    elif kind == "dephasing":
        q = nu / 2
        kraus = [np.sqrt(1 - q) * PAULI["I"], np.sqrt(q) * PAULI["Z"]]
    else:
        return rho
    for k in range(n):
        rho = apply_single_qubit(rho, kraus, k, n)
    return rho


def correlation(rho, directions, subset, settings):
    """Tr[rho (x)_k O_k] with O_k the spin along the chosen direction for k in subset, identity otherwise."""
    n = directions.shape[0]
    chosen = dict(zip(sorted(subset), settings))
    ops = [spin(directions[k, chosen[k]]) if k in chosen else PAULI["I"] for k in range(n)]
    return float(np.real(np.trace(rho @ kron_all(ops))))


def probability_table(rho, directions):
    """p[s, o], little-endian settings and outcomes, outcome bit 1 meaning -1."""
    n = directions.shape[0]
    table = np.zeros((2**n, 2**n))
    for s in range(2**n):
        for o in range(2**n):
            ops = []
            for k in range(n):
                sign = -1.0 if (o >> k) & 1 else 1.0
                ops.append((PAULI["I"] + sign * spin(directions[k, (s >> k) & 1])) / 2)
            table[s, o] = float(np.real(np.trace(rho @ kron_all(ops))))
    return table


def wwzb_naive(full, n):
    """sum_a |sum_s (-1)^{a.s} E(s)| by explicit double loop."""
    total = 0.0
    for a in range(2**n):
        acc = 0.0
        for s in range(2**n):
            acc += (-1) ** bin(a & s).count("1") * full[s]
        total += abs(acc)
    return total


def chsh_direct(E00, E01, E10, E11):
    return max(
        abs(-E00 + E01 + E10 + E11),
        abs(E00 - E01 + E10 + E11),
        abs(E00 + E01 - E10 + E11),
        abs(E00 + E01 + E10 - E11),
    )


def mabk_direct(full, n, mask=0):
    """|sum_s beta(s ^ mask) E(s)| with beta from the outcome-sign sum over {-1, 1}^N."""
    total = 0.0
    for s in range(2**n):
        bits = [((s ^ mask) >> k) & 1 for k in range(n)]
        beta = 0.0
        for a in product((-1, 1), repeat=n):
            sign = np.prod([a[k] if bits[k] else 1 for k in range(n)])
            beta += np.sqrt(2) * np.cos(np.pi / 4 * (n + 1 - sum(a))) * sign
        total += beta * full[s]
    return abs(total)


def random_directions(rng, n):
    v = rng.normal(size=(n, 2, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)

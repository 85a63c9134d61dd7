"""Single-qubit amplitude-damping and phase-damping Kraus channels.

Both channels act on 2x2 density matrices.  Amplitude damping moves
excited-state population to the ground state with probability gamma;
phase damping scales the off-diagonals by (2p - 1) where p is the
no-phase-flip probability.  The two commute, and their composition with
gamma = 1 - exp(-G1 t) and p = (1 + exp(-chi))/2 reproduces the damped
density matrix with diagonals evolved by exp(-G1 t) and coherences by
exp(-G1 t / 2) exp(-chi).
"""

from __future__ import annotations

import numpy as np

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-12

KET0 = np.array([[1.0 + 0j, 0.0], [0.0, 0.0]])
KET1 = np.array([[0.0 + 0j, 0.0], [0.0, 1.0]])
PLUS = np.array([[0.5 + 0j, 0.5], [0.5, 0.5]])


def validate_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Check Hermiticity, unit trace, and positive semidefiniteness."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError("density matrix must be 2x2")
    if not np.all(np.isfinite(rho.real)) or not np.all(np.isfinite(rho.imag)):
        raise ValueError("density matrix entries must be finite")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITICITY_TOL:
        raise ValueError("density matrix is not Hermitian")
    trace = rho[0, 0].real + rho[1, 1].real
    if abs(trace - 1.0) > TRACE_TOL:
        raise ValueError("density matrix trace differs from 1")
    # closed-form eigenvalues of a 2x2 Hermitian matrix
    half = trace / 2.0
    det = (rho[0, 0].real * rho[1, 1].real - (rho[0, 1] * rho[1, 0]).real)
    disc = max(half * half - det, 0.0)
    lam_min = half - np.sqrt(disc)
    if lam_min < -POSITIVITY_TOL:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def pure_state(alpha: complex, beta: complex) -> np.ndarray:
    """Density matrix of alpha|0> + beta|1> (normalized on the way in)."""
    vec = np.array([alpha, beta], dtype=complex)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("state vector must be nonzero")
    vec = vec / norm
    return np.outer(vec, vec.conj())


def amplitude_damping_kraus(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    e0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - gamma)]], dtype=complex)
    e1 = np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]], dtype=complex)
    return e0, e1


def phase_damping_kraus(p: float) -> tuple[np.ndarray, np.ndarray]:
    if not 0.5 <= p <= 1.0:
        raise ValueError("p must lie in [1/2, 1]")
    e0 = np.sqrt(p) * np.eye(2, dtype=complex)
    e1 = np.sqrt(1.0 - p) * np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    return e0, e1


def _apply(rho: np.ndarray, kraus: tuple[np.ndarray, ...]) -> np.ndarray:
    out = np.zeros_like(rho)
    for e in kraus:
        out += e @ rho @ e.conj().T
    return out


def apply_amplitude_damping(rho: np.ndarray, gamma: float) -> np.ndarray:
    rho = validate_density_matrix(rho)
    return _apply(rho, amplitude_damping_kraus(gamma))


def apply_phase_damping(rho: np.ndarray, p: float) -> np.ndarray:
    rho = validate_density_matrix(rho)
    return _apply(rho, phase_damping_kraus(p))


def evolve_noisy(rho: np.ndarray, gamma1: float, chi_t: float, t: float) -> np.ndarray:
    """Compose amplitude damping over time t with chi-driven dephasing.

    gamma1 is the energy-relaxation rate (1/us), chi_t the dimensionless
    decoherence exponent accumulated up to t.  The channel order does not
    matter; amplitude damping is applied first here.
    """
    if gamma1 < 0:
        raise ValueError("gamma1 must be >= 0")
    if chi_t < 0:
        raise ValueError("chi_t must be >= 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    gamma = 1.0 - np.exp(-gamma1 * t)
    p = 0.5 * (1.0 + np.exp(-chi_t))
    return apply_phase_damping(apply_amplitude_damping(rho, gamma), p)


def rho_to_csv_row(rho: np.ndarray) -> str:
    """Flatten to re00,im00,re01,im01,re10,im10,re11,im11."""
    flat = np.asarray(rho, dtype=complex).reshape(-1)
    return ",".join(f"{z.real:.17g},{z.imag:.17g}" for z in flat)


def rho_from_csv_row(row: str) -> np.ndarray:
    vals = [float(tok) for tok in row.strip().split(",")]
    if len(vals) != 8:
        raise ValueError("expected 8 comma-separated numbers")
    comp = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    return comp.reshape(2, 2)

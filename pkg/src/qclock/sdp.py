"""Minimum-cost POVM via a log-barrier method on the dual SDP.

Primal::

    minimize    sum_a tr(P_a R_a)
    subject to  P_a >= 0,  sum_a P_a = I

Dual::

    maximize    tr(Y)
    subject to  R_a - Y >= 0   for every a

On the central path of the dual barrier ``t tr(Y) + sum_a log det(R_a - Y)``
the matrices ``P_a = (R_a - Y)^{-1} / t`` are primal feasible and the duality
gap is exactly ``n_outcomes * dim / t``.  The problem sizes here are tiny
(dimension <= 8, tens of outcomes), so dense Newton steps in the ``dim**2``
real coordinates of ``Y`` are cheap.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack

__all__ = ["PovmCertificate", "PovmSolution", "solve_povm", "certify", "hermitian_basis"]


@lru_cache(maxsize=16)
def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal basis of ``d x d`` Hermitian matrices under ``Re tr(A B)``."""
    basis = []
    for i in range(d):
        E = np.zeros((d, d), dtype=complex)
        E[i, i] = 1.0
        basis.append(E)
    s = 1.0 / np.sqrt(2.0)
    for i in range(d):
        for j in range(i + 1, d):
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = E[j, i] = s
            basis.append(E)
            F = np.zeros((d, d), dtype=complex)
            F[i, j] = -1j * s
            F[j, i] = 1j * s
            basis.append(F)
    B = np.array(basis)
    B.setflags(write=False)
    return B


@dataclass(frozen=True)
class PovmCertificate:
    """Stationarity residuals for ``Y = sum_a P_a R_a``.

    ``hermiticity``: max-abs of ``Y - Y^dag``; ``dual_infeasibility``:
    ``max(0, -min_a lambda_min(R_a - Y_h))`` with ``Y_h`` the Hermitian part;
    ``gap``: ``sum_a tr(P_a R_a) - tr(Y_h)`` (zero at optimality).
    """

    hermiticity: float
    dual_infeasibility: float
    completeness: float
    gap: float

    def ok(self, tol: float = 1e-6) -> bool:
        return max(self.hermiticity, self.dual_infeasibility, self.completeness) <= tol

    def as_dict(self) -> dict:
        return {
            "hermiticity": self.hermiticity,
            "dual_infeasibility": self.dual_infeasibility,
            "completeness": self.completeness,
            "gap": self.gap,
        }


@dataclass(frozen=True)
class PovmSolution:
    elements: np.ndarray
    objective: float
    certificate: PovmCertificate
    newton_steps: int
    converged: bool


def certify(P: np.ndarray, R: np.ndarray) -> PovmCertificate:
    Y = np.einsum("aij,ajk->ik", P, R)
    herm = float(np.abs(Y - Y.conj().T).max())
    Yh = 0.5 * (Y + Y.conj().T)
    lam = np.linalg.eigvalsh(R - Yh)[:, 0].min()
    d = P.shape[1]
    comp = float(np.abs(P.sum(axis=0) - np.eye(d)).max())
    obj = float(np.einsum("aij,aji->", P, R).real)
    return PovmCertificate(herm, float(max(0.0, -lam)), comp, obj - float(np.trace(Yh).real))


def solve_povm(R, *, gap_tol: float = 1e-8, mu_factor: float = 100.0, max_newton: int = 400) -> PovmSolution:
    """Optimal POVM for cost operators ``R`` of shape ``(n_outcomes, d, d)``.

    ``gap_tol`` is the duality-gap target relative to ``max |R|``.
    """
    R = np.asarray(R, dtype=complex)
    R = 0.5 * (R + np.conj(np.swapaxes(R, 1, 2)))
    n, d, _ = R.shape
    eye = np.eye(d)
    scale = float(np.abs(R).max())
    if scale == 0.0 or n == 1:
        P = np.broadcast_to(eye / n, (n, d, d)).astype(complex)
        return PovmSolution(P, float(np.einsum("aij,aji->", P, R).real), certify(P, R), 0, True)
    Rs = R / scale
    B = hermitian_basis(d)
    K = B.shape[0]
    Bf = B.reshape(K, d * d)
    trB = np.einsum("kii->k", B).real

    lam0 = np.linalg.eigvalsh(Rs)[:, 0].min()
    Y = (lam0 - 1.0) * eye
    t = float(n)
    steps = 0
    final = False
    while True:
        for _ in range(60):
            S = Rs - Y
            W = np.linalg.inv(S)
            Wf = W.reshape(n, d * d)
            grad = -t * trB + (Bf @ W.sum(axis=0).T.ravel()).real
            # T[(i,j),(m,n)] = sum_a W_a[i,j] W_a[m,n]; H_kl = sum T E_k[j,m] E_l[n,i]
            T4 = (Wf.T @ Wf).reshape(d, d, d, d).transpose(1, 2, 3, 0).reshape(d * d, d * d)
            H = (Bf @ T4 @ Bf.T).real
            _, x, info = lapack.dposv(H, grad)
            step = -x if info == 0 else -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(-grad @ step)
            steps += 1
            if dec < 1e-16:
                break
            dY = (step @ Bf).reshape(d, d)
            lam = np.sqrt(dec)
            # damped Newton step stays inside the Dikin ellipsoid of the barrier
            Y = Y + (dY if lam < 0.25 else dY / (1.0 + lam))
            if dec < (1e-14 if final else 1e-1):
                break
        if final or steps >= max_newton:
            break
        if n * d / t < gap_tol:
            final = True
            continue
        t = min(t * mu_factor, 1.01 * n * d / gap_tol)

    W = np.linalg.inv(Rs - Y)
    P = W / t
    P = 0.5 * (P + np.conj(np.swapaxes(P, 1, 2)))
    Ssum = P.sum(axis=0)
    w, V = np.linalg.eigh(Ssum)
    Sih = (V / np.sqrt(w)) @ V.conj().T
    P = np.einsum("ij,ajk,kl->ail", Sih, P, Sih)
    P = 0.5 * (P + np.conj(np.swapaxes(P, 1, 2)))
    obj = float(np.einsum("aij,aji->", P, R).real)
    return PovmSolution(P, obj, certify(P, R), steps, final)

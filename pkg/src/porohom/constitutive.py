"""Plane-strain neo-Hookean law, its consistent tangent and the
linearization tensors of the incremental scheme.

The 2D simulations keep the 3D law with F33 = 1; the effective stress is
purely deviatoric in 3D and only its in-plane block enters the assembly.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GeometryError, InvertedElementError

EYE2 = np.eye(2)


@dataclass
class Kinematics:
    """In-plane deformation state at a point (F33 = 1)."""

    F: np.ndarray  # (2, 2)

    @property
    def J(self):
        f = self.F
        return float(f[0, 0] * f[1, 1] - f[0, 1] * f[1, 0])

    @property
    def b(self):
        """In-plane block of the left Cauchy-Green tensor."""
        return self.F @ self.F.T

    @property
    def trace_b3(self):
        b = self.b
        return float(b[0, 0] + b[1, 1] + 1.0)


@dataclass
class MaterialParams:
    """Per-region shear moduli and hydraulic permeabilities.

    Region labels: 1, 2 = channels, 3 = matrix.  ``kperm`` entries are
    symmetric 2x2 mobilities [m^2/(Pa s)]; ``eps`` is the scale parameter
    and ``k_update_mode`` selects how permeabilities follow deformation.
    """

    mu: dict = field(default_factory=lambda: {1: 0.6e6, 2: 0.6e6, 3: 1.0e6})
    kperm: dict = field(
        default_factory=lambda: {
            1: 1e-6 * np.eye(2),
            2: 2e-6 * np.eye(2),
            3: 1e-4 * np.eye(2),
        }
    )
    eps: float = 0.025
    k_update_mode: str = "constant"

    def validate(self):
        for r in (1, 2, 3):
            if self.mu.get(r, 0.0) <= 0:
                raise GeometryError(f"shear modulus for region {r} must be positive")
            k = np.asarray(self.kperm[r], float)
            if not np.allclose(k, k.T) or np.any(np.linalg.eigvalsh(k) <= 0):
                raise GeometryError(f"permeability for region {r} must be symmetric PD")
        if self.eps <= 0:
            raise GeometryError("scale parameter eps must be positive")
        if self.k_update_mode not in ("constant", "push_forward"):
            raise GeometryError(f"unknown K update mode '{self.k_update_mode}'")
        return self


def neo_hookean_stress(kin, mu):
    """Effective Cauchy stress mu J^(-5/3) dev(b), in-plane block."""
    j = kin.J
    if j <= 0:
        raise InvertedElementError(f"det F = {j:g} <= 0")
    b = kin.b
    return mu * j ** (-5.0 / 3.0) * (b - kin.trace_b3 / 3.0 * EYE2)


def neo_hookean_stress_3d(kin, mu):
    """Full 3x3 effective stress; its trace vanishes identically."""
    j = kin.J
    if j <= 0:
        raise InvertedElementError(f"det F = {j:g} <= 0")
    b3 = np.eye(3)
    b3[:2, :2] = kin.b
    return mu * j ** (-5.0 / 3.0) * (b3 - np.trace(b3) / 3.0 * np.eye(3))


def neo_hookean_tangent(kin, mu):
    """Tangent of the Truesdell rate of the effective stress, in-plane block."""
    j = kin.J
    if j <= 0:
        raise InvertedElementError(f"det F = {j:g} <= 0")
    _, d4, _ = kernels.neo_hookean_np(kin.F[None], np.array([mu]))
    return d4[0]


def stress_and_tangent_batch(f, mu):
    """Batched stress/tangent with inverted-point diagnosis.

    f: (n, 2, 2), mu: (n,).  Returns (sigma_eff, d_eff, J).
    """
    f = np.ascontiguousarray(f, dtype=float)
    mu = np.ascontiguousarray(mu, dtype=float)
    sigma, d4, jdet = kernels.neo_hookean_batch(f, mu)
    if np.any(jdet <= 0):
        bad = int(np.argwhere(jdet <= 0)[0])
        raise InvertedElementError(
            f"det F = {jdet[bad]:g} <= 0 at point {bad}", element=bad
        )
    return sigma, d4, jdet


def tensor_B(grad_v):
    """B(v) = (div v) I - (grad v)^T."""
    g = np.asarray(grad_v, float)
    div = g[..., 0, 0] + g[..., 1, 1]
    return div[..., None, None] * EYE2 - np.swapaxes(g, -1, -2)


def tensor_H(grad_v, k):
    """H(v) = (div v) K - K (grad v)^T - (grad v) K^T; symmetric for symmetric K."""
    g = np.asarray(grad_v, float)
    k = np.asarray(k, float)
    div = g[..., 0, 0] + g[..., 1, 1]
    gt = np.swapaxes(g, -1, -2)
    kt = np.swapaxes(k, -1, -2)
    return div[..., None, None] * k - k @ gt - g @ kt


def tangent_operator_A(d_eff, sigma_eff, p):
    """Full linearization kernel A = D + sigma x I - p (I x I - transposition)."""
    return kernels.tangent_a4(
        np.asarray(d_eff, float), np.asarray(sigma_eff, float), np.asarray(p, float)
    )


def push_forward_permeability(k0, f, jdet=None):
    """K = J^-1 F K0 F^T per point, for deformation-dependent permeability."""
    f = np.asarray(f, float)
    if jdet is None:
        jdet = f[..., 0, 0] * f[..., 1, 1] - f[..., 0, 1] * f[..., 1, 0]
    return np.einsum("...ik,kl,...jl->...ij", f, np.asarray(k0, float), f) / jdet[
        ..., None, None
    ]

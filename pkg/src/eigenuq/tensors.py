"""Symmetric Reynolds-stress algebra: anisotropy eigendecomposition,
barycentric realizability map and its inverse, realizability checks.

All tensors are 3x3 symmetric; only the six independent components are
stored. The barycentric triangle uses the standard equilateral layout
with corners 1C = (1, 0), 2C = (0, 0), 3C = (1/2, sqrt(3)/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Corner coordinates of the realizability triangle (1C, 2C, 3C).
CORNER_1C = np.array([1.0, 0.0])
CORNER_2C = np.array([0.0, 0.0])
CORNER_3C = np.array([0.5, np.sqrt(3.0) / 2.0])

_CORNERS = {"1C": CORNER_1C, "2C": CORNER_2C, "3C": CORNER_3C}

# Affine map weights -> plane coordinates; precomputed inverse for the
# reverse direction (C3 is eliminated via C1 + C2 + C3 = 1).
_A = np.column_stack([CORNER_1C - CORNER_3C, CORNER_2C - CORNER_3C])
_A_INV = np.linalg.inv(_A)

DEFAULT_K_FLOOR = 1e-12


def corner_coords(corner: str) -> np.ndarray:
    """Plane coordinates of a triangle corner ('1C', '2C' or '3C')."""
    try:
        return _CORNERS[corner].copy()
    except KeyError:
        raise ValueError(f"unknown corner {corner!r}, expected 1C/2C/3C") from None


@dataclass(frozen=True)
class ReynoldsStress:
    """Symmetric second-moment tensor in velocity-squared units."""

    uu: float
    vv: float
    ww: float
    uv: float = 0.0
    uw: float = 0.0
    vw: float = 0.0

    @property
    def k(self) -> float:
        return 0.5 * (self.uu + self.vv + self.ww)

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.uu, self.uv, self.uw],
                [self.uv, self.vv, self.vw],
                [self.uw, self.vw, self.ww],
            ]
        )

    @staticmethod
    def from_matrix(m: np.ndarray) -> "ReynoldsStress":
        m = np.asarray(m, dtype=float)
        return ReynoldsStress(
            uu=m[0, 0], vv=m[1, 1], ww=m[2, 2], uv=m[0, 1], uw=m[0, 2], vw=m[1, 2]
        )


@dataclass(frozen=True)
class AnisotropyEigenSystem:
    """Eigenvalues/eigenvectors of a_ij = tau_ij/k - (2/3) delta_ij.

    ``lam`` is sorted descending; ``frame`` column i is the unit
    eigenvector of lam[i], sign-normalized and right-handed.
    ``degenerate`` marks near-laminar points (k below the floor) where
    anisotropy is undefined; such systems carry lam = 0 and frame = I.
    """

    k: float
    lam: np.ndarray
    frame: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class BarycentricPoint:
    """Point of the realizability triangle with its corner weights."""

    x: float
    y: float
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.weights is None:
            object.__setattr__(self, "weights", point_weights(self.x, self.y))

    def coords(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def inside(self, tol: float = 1e-10) -> bool:
        return float(np.min(self.weights)) >= -tol


def point_weights(x: float, y: float) -> np.ndarray:
    """Corner weights (C1, C2, C3) of a plane point; always sum to 1."""
    c12 = _A_INV @ (np.array([x, y]) - CORNER_3C)
    return np.array([c12[0], c12[1], 1.0 - c12[0] - c12[1]])


def _normalize_frame(frame: np.ndarray) -> np.ndarray:
    """Fix eigenvector signs (largest-magnitude component positive) and
    enforce right-handedness by flipping the third column if needed."""
    frame = frame.copy()
    for j in range(3):
        i = int(np.argmax(np.abs(frame[:, j])))
        if frame[i, j] < 0.0:
            frame[:, j] = -frame[:, j]
    if np.linalg.det(frame) < 0.0:
        frame[:, 2] = -frame[:, 2]
    return frame


def decompose(tau: ReynoldsStress, k_floor: float = DEFAULT_K_FLOOR) -> AnisotropyEigenSystem:
    """Eigendecomposition of the anisotropy tensor of ``tau``.

    Points with k < k_floor are returned as isotropic-degenerate
    (lam = 0, frame = I) instead of propagating NaNs.
    """
    if k_floor <= 0.0:
        raise ValueError("k_floor must be positive")
    k = tau.k
    if k < k_floor:
        return AnisotropyEigenSystem(
            k=k, lam=np.zeros(3), frame=np.eye(3), degenerate=True
        )
    a = tau.matrix() / k - (2.0 / 3.0) * np.eye(3)
    lam, vec = np.linalg.eigh(a)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    vec = _normalize_frame(vec[:, order])
    return AnisotropyEigenSystem(k=k, lam=lam, frame=vec)


def reconstruct(eig: AnisotropyEigenSystem) -> ReynoldsStress:
    """Assemble tau = k (v diag(lam) v^T + (2/3) I) from an eigensystem."""
    v = eig.frame
    a = v @ np.diag(eig.lam) @ v.T
    return ReynoldsStress.from_matrix(eig.k * (a + (2.0 / 3.0) * np.eye(3)))


def to_barycentric(eig: AnisotropyEigenSystem) -> BarycentricPoint:
    """Map sorted anisotropy eigenvalues onto the barycentric triangle."""
    return eigenvalues_to_point(eig.lam)


def eigenvalues_to_point(lam: np.ndarray) -> BarycentricPoint:
    l1, l2, l3 = lam
    # Trace-consistent corner weights; C3 uses (3*l3 + 2)/2 so that the
    # three weights sum to 1 for any traceless triple.
    w = np.array([0.5 * (l1 - l2), l2 - l3, 0.5 * (3.0 * l3 + 2.0)])
    xy = w[0] * CORNER_1C + w[1] * CORNER_2C + w[2] * CORNER_3C
    return BarycentricPoint(x=xy[0], y=xy[1], weights=w)


def from_barycentric(pt: BarycentricPoint) -> np.ndarray:
    """Invert the barycentric map: corner weights -> eigenvalue triple."""
    c1, c2, c3 = pt.weights
    l3 = (2.0 * c3 - 2.0) / 3.0
    l2 = c2 + l3
    l1 = 2.0 * c1 + l2
    return np.array([l1, l2, l3])


def is_realizable(tau: ReynoldsStress, tol: float = 1e-10) -> bool:
    """True iff tau is positive semidefinite within a k-scaled slack."""
    w = np.linalg.eigvalsh(tau.matrix())
    return bool(w[0] >= -tol * max(1.0, 2.0 * tau.k))


def project_into_triangle(pt: BarycentricPoint) -> BarycentricPoint:
    """Euclidean projection onto the closed realizability triangle."""
    if pt.inside(tol=0.0):
        return pt
    p = pt.coords()
    corners = [CORNER_1C, CORNER_2C, CORNER_3C]
    best = None
    best_d = np.inf
    for i in range(3):
        a, b = corners[i], corners[(i + 1) % 3]
        ab = b - a
        t = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
        q = a + t * ab
        d = float(np.dot(p - q, p - q))
        if d < best_d:
            best_d, best = d, q
    return BarycentricPoint(x=best[0], y=best[1])

# app/services/profiles.py
"""Analytic radius / halfwidth profiles f(x) with exact first and second
derivatives."""
from dataclasses import dataclass

import numpy as np

from app.errors import GridError
from app.models import ProfileKind, SurfaceOfRevolution


@dataclass(frozen=True)
class RadiusProfile:
    kind: ProfileKind = ProfileKind.constant
    base: float = 1.0
    amplitude: float = 0.3
    width: float = 1.0
    center: float = 0.0
    scale: float = 1.0

    def jet(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(f, f', f'') at ``x``, multiplied by ``scale``."""
        f, fp, fpp = self._unit_jet(x)
        return self.scale * f, self.scale * fp, self.scale * fpp

    def _unit_jet(self, x):
        x = np.asarray(x, dtype=float)
        u = x - self.center
        A, w = self.amplitude, self.width
        if self.kind == ProfileKind.constant:
            return np.full_like(u, self.base), np.zeros_like(u), np.zeros_like(u)
        if self.kind == ProfileKind.bump:
            g = A * np.exp(-((u / w) ** 2))
            return self.base + g, -2.0 * u / w ** 2 * g, (4.0 * u ** 2 / w ** 4 - 2.0 / w ** 2) * g
        if self.kind == ProfileKind.constriction:
            q = 1.0 + u ** 2
            return 2.0 - 1.0 / q, 2.0 * u / q ** 2, (2.0 - 6.0 * u ** 2) / q ** 3
        if self.kind == ProfileKind.exponential:
            e = np.exp(u)
            return e, e.copy(), e.copy()
        if self.kind == ProfileKind.sine:
            return self.base + A * np.sin(u), A * np.cos(u), -A * np.sin(u)
        return self.base + A * u ** 2, 2.0 * A * u, np.full_like(u, 2.0 * A)

    def __call__(self, x) -> np.ndarray:
        return self.jet(x)[0]

    def sample(self, nodes: np.ndarray) -> SurfaceOfRevolution:
        f, fp, fpp = self.jet(nodes)
        if np.any(f <= 0.0):
            raise GridError(f"{self.kind.value} profile is not positive on [{nodes[0]}, {nodes[-1]}]")
        return SurfaceOfRevolution(np.asarray(nodes, dtype=float), f, fp, fpp)


def base_grid(domain: tuple[float, float], n_interior: int) -> np.ndarray:
    """Uniform base grid with both Dirichlet end nodes."""
    if n_interior < 3:
        raise GridError(f"need at least 3 interior nodes, got {n_interior}")
    return np.linspace(domain[0], domain[1], n_interior + 2)

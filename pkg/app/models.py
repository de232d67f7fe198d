# app/models.py
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ellipe

from app.errors import DimensionError, GridError


class CurveKind(str, enum.Enum):
    line = "line"
    circle = "circle"
    helix = "helix"
    sampled = "sampled"


class ShapeKind(str, enum.Enum):
    interval = "interval"
    disc = "disc"
    ellipse = "ellipse"
    rectangle = "rectangle"
    mask = "mask"


class ProblemKind(str, enum.Enum):
    strip = "strip"
    axisym_tube = "axisym_tube"
    twisted_tube = "twisted_tube"
    hollow_surface = "hollow_surface"


class ProfileKind(str, enum.Enum):
    constant = "constant"
    bump = "bump"
    constriction = "constriction"
    exponential = "exponential"
    sine = "sine"
    quadratic = "quadratic"


class TwistKind(str, enum.Enum):
    none = "none"
    constant = "constant"
    window = "window"
    table = "table"


# ------------------ Geometry ------------------
@dataclass(frozen=True, eq=False)
class CurveSpec:
    """Base curve. ``points``/``tangent``/``accel`` are filled once the curve
    has been resampled at N+1 nodes equispaced in arclength."""
    kind: CurveKind
    length: float
    n_samples: int
    radius: float | None = None
    a: float | None = None
    b: float | None = None
    points: np.ndarray | None = None
    tangent: np.ndarray | None = None
    accel: np.ndarray | None = None
    arclength: bool = False

    def __post_init__(self):
        if self.n_samples < 16:
            raise GridError(f"curve needs N >= 16 samples, got {self.n_samples}")
        if self.kind != CurveKind.sampled and not self.length > 0:
            raise GridError(f"curve length must be positive, got {self.length}")
        if self.kind == CurveKind.circle and not (self.radius or 0) > 0:
            raise GridError("circle radius must be positive")
        if self.kind == CurveKind.helix and not ((self.a or 0) > 0 and (self.b or 0) >= 0):
            raise GridError("helix needs a > 0 and b >= 0")
        if self.kind == CurveKind.sampled and (self.points is None or len(self.points) < 2):
            raise GridError("sampled curve needs a point table")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_samples + 1)

    @property
    def step(self) -> float:
        return self.length / self.n_samples


@dataclass(frozen=True, eq=False)
class ParallelFrame:
    nodes: np.ndarray
    tau: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    kappa: np.ndarray
    h: float
    accel: np.ndarray
    points: np.ndarray

    def index(self, x: float) -> int:
        i = int(round((x - self.nodes[0]) / self.h))
        if i < 0 or i >= len(self.nodes) or abs(self.nodes[i] - x) > 1e-9 * max(1.0, abs(x)):
            raise GridError(f"x={x} is not a frame node")
        return i


@dataclass(frozen=True, eq=False)
class TwistProfile:
    nodes: np.ndarray
    omega: np.ndarray
    omega_prime: np.ndarray

    @classmethod
    def untwisted(cls, nodes: np.ndarray) -> "TwistProfile":
        zeros = np.zeros_like(nodes, dtype=float)
        return cls(nodes, zeros, zeros.copy())


@dataclass(frozen=True, eq=False)
class PrincipalCurvatureSet:
    """kappas[i, alpha]: principal curvature i of W(e_alpha)."""
    kappas: np.ndarray

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.kappas, dtype=float))
        if not np.all(np.isfinite(k)):
            raise DimensionError("principal curvatures must be finite")
        object.__setattr__(self, "kappas", k)

    @property
    def d(self) -> int:
        return self.kappas.shape[0]

    @property
    def k(self) -> int:
        return self.kappas.shape[1]


@dataclass(frozen=True, eq=False)
class SurfaceOfRevolution:
    nodes: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    f_prime2: np.ndarray

    def __post_init__(self):
        if np.any(self.f <= 0):
            raise GridError("radius profile must stay positive")

    @property
    def length(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])


# ------------------ Cross sections ------------------
@dataclass(frozen=True, eq=False)
class CrossSectionShape:
    kind: ShapeKind
    halfwidth: float | None = None
    radius: float | None = None
    a: float | None = None
    b: float | None = None
    grid: np.ndarray | None = None
    spacing: float | None = None
    center: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        sizes = {
            ShapeKind.interval: (self.halfwidth,),
            ShapeKind.disc: (self.radius,),
            ShapeKind.ellipse: (self.a, self.b),
            ShapeKind.rectangle: (self.a, self.b),
            ShapeKind.mask: (self.spacing,),
        }[self.kind]
        if any(s is None or not s > 0 for s in sizes):
            raise GridError(f"{self.kind.value} shape needs positive dimensions, got {sizes}")
        if self.kind == ShapeKind.mask and (self.grid is None or not np.any(self.grid)):
            raise GridError("mask shape needs a non-empty 0/1 grid")

    @property
    def dim(self) -> int:
        return 1 if self.kind == ShapeKind.interval else 2

    @property
    def extent(self) -> float:
        """Half side of the square bounding box."""
        if self.kind == ShapeKind.interval:
            return self.halfwidth
        if self.kind == ShapeKind.disc:
            return self.radius
        if self.kind in (ShapeKind.ellipse, ShapeKind.rectangle):
            return max(self.a, self.b)
        return 0.5 * (max(self.grid.shape) - 1) * self.spacing

    @property
    def perimeter(self) -> float:
        """Measure of the boundary: 2 points for intervals, arclength otherwise."""
        if self.kind == ShapeKind.interval:
            return 2.0
        if self.kind == ShapeKind.disc:
            return 2.0 * np.pi * self.radius
        if self.kind == ShapeKind.ellipse:
            a, b = max(self.a, self.b), min(self.a, self.b)
            return 4.0 * a * float(ellipe(1.0 - (b / a) ** 2))
        if self.kind == ShapeKind.rectangle:
            return 4.0 * (self.a + self.b)
        g = np.pad(np.asarray(self.grid, dtype=bool), 1)
        edges = np.count_nonzero(g[1:, :] != g[:-1, :]) + np.count_nonzero(g[:, 1:] != g[:, :-1])
        return edges * self.spacing

    def contains(self, *coords: np.ndarray) -> np.ndarray:
        """Strict interior test on coordinates relative to the origin."""
        if self.kind == ShapeKind.interval:
            return np.abs(coords[0] - self.center[0]) < self.halfwidth
        y1 = coords[0] - self.center[0]
        y2 = coords[1] - self.center[1]
        if self.kind == ShapeKind.disc:
            return y1 ** 2 + y2 ** 2 < self.radius ** 2
        if self.kind == ShapeKind.ellipse:
            return (y1 / self.a) ** 2 + (y2 / self.b) ** 2 < 1.0
        if self.kind == ShapeKind.rectangle:
            return (np.abs(y1) < self.a) & (np.abs(y2) < self.b)
        raise GridError("mask shapes carry their own grid")


@dataclass(frozen=True, eq=False)
class ModeData:
    """Fibre ground state on the bounding-box grid (zero outside the mask).

    ``axes`` holds one coordinate array per fibre dimension; ``phi0`` is
    indexed as ``phi0[i]`` (1D) or ``phi0[i, j]`` with i along axes[0].
    ``C_F`` overrides the grid value of the dilation constant when a
    boundary-fitted one is known.
    """
    shape: CrossSectionShape
    lambda0: float
    phi0: np.ndarray
    axes: tuple[np.ndarray, ...]
    spacing: float
    mask: np.ndarray
    volume: float
    residual: float = 0.0
    L_norm_sq: float = 0.0
    com: np.ndarray = field(default_factory=lambda: np.zeros(2))
    lambda0_error: float = 0.0
    C_F: float | None = None

    @property
    def dim(self) -> int:
        return len(self.axes)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))


@dataclass(frozen=True, eq=False)
class FiberVolumeProfile:
    nodes: np.ndarray
    vol: np.ndarray
    dlog: np.ndarray
    d2log: np.ndarray


# ------------------ Adiabatic operator ------------------
@dataclass(frozen=True, eq=False)
class PotentialBundle:
    """Potentials on the base grid, both Dirichlet end nodes included."""
    x: np.ndarray
    lambda0: np.ndarray
    v_a: np.ndarray
    v_bend_a: np.ndarray
    v_hollow: np.ndarray
    eps3_div_coeff: np.ndarray
    eps3_pot: np.ndarray
    eps: float

    def __post_init__(self):
        n = len(self.x)
        for name in ("lambda0", "v_a", "v_bend_a", "v_hollow", "eps3_div_coeff", "eps3_pot"):
            if len(getattr(self, name)) != n:
                raise DimensionError(f"bundle array '{name}' has length {len(getattr(self, name))}, grid has {n}")

    @classmethod
    def empty(cls, x: np.ndarray, eps: float) -> "PotentialBundle":
        z = np.zeros_like(x, dtype=float)
        return cls(x, z, z, z, z, z, z, eps)

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "x": self.x,
            "lambda0": self.lambda0,
            "v_a": self.v_a,
            "v_bend_a": self.v_bend_a,
            "v_hollow": self.v_hollow,
            "m": self.eps3_div_coeff,
            "pot": self.eps3_pot,
        }


@dataclass(frozen=True, eq=False)
class AdiabaticOperator:
    """Symmetric tridiagonal matrix on the interior nodes (Dirichlet ends)."""
    bundle: PotentialBundle
    h: float
    diagonal: np.ndarray
    offdiagonal: np.ndarray
    boundary: str = "dirichlet"

    @property
    def interior(self) -> np.ndarray:
        return self.bundle.x[1:-1]


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    eigenvectors: np.ndarray | None = None


# ------------------ Reference problems ------------------
@dataclass(frozen=True, eq=False)
class FullProblem:
    kind: ProblemKind
    profile: object
    eps: float
    nx: int
    nn: int
    domain: tuple[float, float] = (0.0, np.pi)
    m: int = 0
    shape: CrossSectionShape | None = None
    twist: TwistProfile | None = None
    n_eigs: int = 3
    max_unknowns: int = 2_000_000


@dataclass(frozen=True, eq=False)
class FullSpectrum:
    kind: ProblemKind
    eps: float
    m: int
    eigenvalues: np.ndarray
    residuals: np.ndarray
    nx: int
    nn: int


# ------------------ Sweeps ------------------
@dataclass(frozen=True, eq=False)
class SweepReport:
    eps_values: np.ndarray
    paired_errors: np.ndarray
    fitted_orders: np.ndarray
    fit_residuals: np.ndarray
    grid_limits: np.ndarray
    excluded: np.ndarray
    loo_spread: np.ndarray
    theory_order: float = 3.0
    threshold: float = 2.5
    monotone: bool = True
    config_hash: str = ""
    warnings: tuple[str, ...] = ()

    @property
    def passed(self) -> np.ndarray:
        return (self.fitted_orders >= self.threshold) & (self.loo_spread < 0.3)

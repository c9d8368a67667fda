"""Classical lattice Boltzmann core: schemes, collide-stream steps, cavity flow.

Everything here is plain numpy and serves as the reference ("oracle") the
quantum statevector pipeline is verified against. Fields are numpy arrays:
1-D fields have shape ``(n,)``; 2-D fields have shape ``(n, n)`` indexed
``[j, i]`` = (y, x), so the flattened site index is ``x + n*y``. Link
distributions carry a leading link axis: ``(n_links,) + field.shape``.

The solvers run in the full-replacement regime (relaxation ratio 1): each step
replaces every link population with its equilibrium value, streams, and sums.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, SimulationError

__all__ = [
    "LatticeScheme",
    "FlowParams",
    "CavitySpec",
    "CavityHistory",
    "D1Q2",
    "D1Q3",
    "D2Q5",
    "scheme_by_name",
    "collision_coefficients",
    "equilibrium_distribution",
    "stream_periodic",
    "macro_moment",
    "step_advection_diffusion",
    "step_poisson",
    "velocity_from_stream_function",
    "apply_cavity_boundaries",
    "cavity_step_classical",
    "solve_cavity_classical",
    "save_field_csv",
    "load_field_csv",
    "save_field_qlbf",
    "load_field_qlbf",
]


@dataclass(frozen=True)
class LatticeScheme:
    """A DnQm lattice: link vectors, weights, and squared sound speed.

    Weights are kept as exact rationals so the defining identities
    (sum of weights = 1, zero first moment, isotropic second moment) hold
    without float slop; ``weight_array`` is the float view used in compute.
    """

    name: str
    dimension: int
    links: tuple[tuple[int, ...], ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.links) != len(self.weights):
            raise ConfigurationError("links and weights must pair up")
        if sum(self.weights) != 1:
            raise ConfigurationError(f"{self.name}: weights must sum to 1 exactly")
        for d in range(self.dimension):
            if sum(w * e[d] for w, e in zip(self.weights, self.links)) != 0:
                raise ConfigurationError(f"{self.name}: first moment must vanish")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def sound_speed_sq(self) -> Fraction:
        # isotropic second moment: sum_a w_a e_a e_a = c_s^2 I
        return sum(w * e[0] * e[0] for w, e in zip(self.weights, self.links))

    @property
    def weight_array(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    @property
    def link_array(self) -> np.ndarray:
        return np.array(self.links, dtype=np.int64)

    @property
    def n_link_qubits(self) -> int:
        return int(np.ceil(np.log2(self.n_links)))


D1Q2 = LatticeScheme(
    name="D1Q2",
    dimension=1,
    links=((1,), (-1,)),
    weights=(Fraction(1, 2), Fraction(1, 2)),
)

D1Q3 = LatticeScheme(
    name="D1Q3",
    dimension=1,
    links=((0,), (1,), (-1,)),
    weights=(Fraction(2, 3), Fraction(1, 6), Fraction(1, 6)),
)

D2Q5 = LatticeScheme(
    name="D2Q5",
    dimension=2,
    links=((0, 0), (1, 0), (0, 1), (-1, 0), (0, -1)),
    weights=(Fraction(2, 6), Fraction(1, 6), Fraction(1, 6), Fraction(1, 6), Fraction(1, 6)),
)

_SCHEMES = {s.name.lower(): s for s in (D1Q2, D1Q3, D2Q5)}


def scheme_by_name(name: str) -> LatticeScheme:
    try:
        return _SCHEMES[name.lower()]
    except KeyError:
        raise ConfigurationError(
            f"unknown lattice scheme {name!r}; choose from {sorted(_SCHEMES)}"
        ) from None


@dataclass(frozen=True)
class FlowParams:
    """Relaxation and flow parameters shared by the solvers.

    The relaxation ratio ``epsilon = dt/tau`` is stored but the solvers only
    support the full-replacement value 1. The diffusion constant is derived
    per scheme: D = c_s^2 (tau - dt/2).
    """

    tau: float = 1.0
    dt: float = 1.0
    epsilon: float = 1.0
    velocity: tuple[float, ...] = ()
    lid_velocity: float = 1.0

    def __post_init__(self):
        if abs(self.epsilon - self.dt / self.tau) > 1e-12:
            raise ConfigurationError("epsilon must equal dt/tau")
        if abs(self.epsilon - 1.0) > 1e-12:
            raise ConfigurationError("only the full-replacement regime (epsilon=1) is supported")

    def diffusion(self, scheme: LatticeScheme) -> float:
        return float(scheme.sound_speed_sq) * (self.tau - self.dt / 2.0)

    def reynolds(self, extent: int) -> float:
        """Effective Reynolds number of a lid-driven cavity of the given extent."""
        return self.lid_velocity * (extent - 1) / self.diffusion(D2Q5)


@dataclass(frozen=True)
class CavitySpec:
    """Lid-driven cavity setup: n x n grid, top row sliding with lid_velocity."""

    n: int
    lid_velocity: float = 1.0
    steps: int = 80
    delta: float = 1.0


@dataclass
class CavityHistory:
    """Per-step (psi, omega) trajectories; index 0 is the initial state."""

    psi: np.ndarray  # (steps+1, n, n)
    omega: np.ndarray  # (steps+1, n, n)
    wall_distributions: list = dataclass_field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.psi.shape[0] - 1


def _require_power_of_two_extent(shape) -> None:
    for n in shape:
        if n < 2 or (n & (n - 1)) != 0:
            raise ConfigurationError(f"extent {n} is not a power of two >= 2")


def _broadcast_velocity(scheme: LatticeScheme, velocity, shape):
    """Return velocity as an array of shape (dimension,) + shape."""
    v = np.asarray(velocity, dtype=float)
    if v.shape == (scheme.dimension,):
        return np.broadcast_to(v.reshape((scheme.dimension,) + (1,) * len(shape)), (scheme.dimension,) + tuple(shape))
    if v.shape == (scheme.dimension,) + tuple(shape):
        return v
    raise ConfigurationError(
        f"velocity shape {v.shape} does not match dimension {scheme.dimension} and field shape {tuple(shape)}"
    )


def collision_coefficients(scheme: LatticeScheme, velocity, shape) -> np.ndarray:
    """Per-link equilibrium coefficients k_a = w_a (1 + e_a . u / c_s^2).

    ``velocity`` is either a constant vector (length = dimension) or per-site
    component fields of shape (dimension,) + shape. Returns shape
    (n_links,) + shape.
    """
    u = _broadcast_velocity(scheme, velocity, shape)
    cs2 = float(scheme.sound_speed_sq)
    w = scheme.weight_array
    e = scheme.link_array  # (n_links, dimension)
    edotu = np.tensordot(e.astype(float), u, axes=([1], [0]))  # (n_links,) + shape
    return w.reshape((scheme.n_links,) + (1,) * len(shape)) * (1.0 + edotu / cs2)


def equilibrium_distribution(scheme: LatticeScheme, field: np.ndarray, velocity) -> np.ndarray:
    """Equilibrium link populations f_a = w_a phi (1 + e_a . u / c_s^2)."""
    field = np.asarray(field, dtype=float)
    if field.ndim != scheme.dimension:
        raise ConfigurationError(
            f"field has {field.ndim} axes but {scheme.name} is {scheme.dimension}-dimensional"
        )
    k = collision_coefficients(scheme, velocity, field.shape)
    return k * field[None, ...]


def stream_periodic(scheme: LatticeScheme, populations: np.ndarray) -> np.ndarray:
    """Shift each link population by its link vector (periodic wrap).

    populations[a] moves by e_a: the value at site r lands on r + e_a. For the
    [j, i] = (y, x) layout this is a roll by (e_y, e_x) on axes (0, 1).
    """
    populations = np.asarray(populations)
    if populations.shape[0] != scheme.n_links:
        raise ConfigurationError("populations leading axis must equal the link count")
    out = np.empty_like(populations)
    for a, e in enumerate(scheme.links):
        if scheme.dimension == 1:
            out[a] = np.roll(populations[a], e[0])
        else:
            out[a] = np.roll(populations[a], (e[1], e[0]), axis=(0, 1))
    return out


def macro_moment(populations: np.ndarray) -> np.ndarray:
    """Zeroth moment: sum over the link axis."""
    return np.asarray(populations).sum(axis=0)


def step_advection_diffusion(scheme, field, velocity, params: FlowParams | None = None) -> np.ndarray:
    """One full-replacement collide-and-stream step of the advected scalar."""
    field = np.asarray(field, dtype=float)
    _require_power_of_two_extent(field.shape)
    f = equilibrium_distribution(scheme, field, velocity)
    return macro_moment(stream_periodic(scheme, f))


def step_poisson(scheme, psi, source, params: FlowParams | None = None) -> np.ndarray:
    """One relaxation sweep of the lattice Poisson iteration for grad^2 psi = source.

    The source is folded into the link populations before streaming,
    g_a = w_a (psi + gamma*source) with gamma = -dt*D, so the fixed point of
    the iteration solves the 5-point system grad^2 psi = link-average(source).
    Callers re-impose Dirichlet values between sweeps.
    """
    params = params or FlowParams()
    psi = np.asarray(psi, dtype=float)
    source = np.asarray(source, dtype=float)
    if psi.shape != source.shape:
        raise ConfigurationError(f"psi shape {psi.shape} != source shape {source.shape}")
    _require_power_of_two_extent(psi.shape)
    gamma = -params.dt * params.diffusion(scheme)
    g = equilibrium_distribution(scheme, psi + gamma * source, np.zeros(scheme.dimension))
    return macro_moment(stream_periodic(scheme, g))


def velocity_from_stream_function(psi: np.ndarray, delta: float = 1.0):
    """(u, v) = (dpsi/dy, -dpsi/dx), second-order, one-sided at the edges.

    Grids too small for the second-order edge stencil (under 3 points per
    axis) drop to first order; a 2 x 2 cavity is all walls regardless.
    """
    psi = np.asarray(psi, dtype=float)
    order = 2 if min(psi.shape) >= 3 else 1
    u = np.gradient(psi, delta, axis=0, edge_order=order)
    v = -np.gradient(psi, delta, axis=1, edge_order=order)
    return u, v


def apply_cavity_boundaries(psi, omega, spec: CavitySpec, populations=None):
    """Impose cavity walls on freshly updated (psi, omega) fields.

    psi is zeroed on all four walls. Wall vorticity comes from the second-order
    Taylor expansion about each wall with the no-slip/lid tangential velocity:
    omega_wall = -2 (psi_first_interior/delta^2 + U_wall/delta), U_wall being
    lid_velocity on the top row and 0 elsewhere. The top row is written last so
    lid-row corners take the lid value.

    Returns (psi', omega', wall_g) where wall_g holds the inward-pointing wall
    link populations implied by the update: the value that, added to the
    remaining streamed-in link populations at the wall site, reproduces the
    imposed wall vorticity. When the post-streaming populations are not
    supplied the remaining-link sum is reconstructed from the pre-overwrite
    wall field (rest-weighted equilibrium split).
    """
    n = spec.n
    d = spec.delta
    u_lid = spec.lid_velocity
    psi2 = np.asarray(psi, dtype=float).copy()
    omega2 = np.asarray(omega, dtype=float).copy()
    if psi2.shape != (n, n) or omega2.shape != (n, n):
        raise ConfigurationError(f"cavity fields must be {n}x{n}")

    psi2[0, :] = 0.0
    psi2[-1, :] = 0.0
    psi2[:, 0] = 0.0
    psi2[:, -1] = 0.0

    omega_in = omega2.copy()  # streamed-in values before the overwrite
    omega2[0, :] = -2.0 * psi2[1, :] / d**2
    omega2[:, 0] = -2.0 * psi2[:, 1] / d**2
    omega2[:, -1] = -2.0 * psi2[:, -2] / d**2
    omega2[-1, :] = -2.0 * (psi2[-2, :] / d**2 + u_lid / d)

    # Bookkeeping: inward link population at each wall site. Link order is
    # (rest, +x, +y, -x, -y); the inward direction points into the fluid.
    inward = {"bottom": 2, "top": 4, "left": 1, "right": 3}
    rows = {
        "bottom": (np.s_[0, :], omega2[0, :]),
        "top": (np.s_[-1, :], omega2[-1, :]),
        "left": (np.s_[:, 0], omega2[:, 0]),
        "right": (np.s_[:, -1], omega2[:, -1]),
    }
    wall_g = {}
    for wall, (sl, target) in rows.items():
        a_in = inward[wall]
        if populations is not None:
            rest = sum(populations[a][sl] for a in range(populations.shape[0]) if a != a_in)
        else:
            w = D2Q5.weight_array
            rest = (1.0 - w[a_in]) * omega_in[sl]
        wall_g[wall] = target - rest
    return psi2, omega2, wall_g


def cavity_step_classical(psi, omega, spec: CavitySpec, params: FlowParams):
    """One coupled cavity step from (psi_t, omega_t) to (psi_{t+1}, omega_{t+1}).

    Both field updates are computed from the previous step's fields (Jacobi
    style, mirroring the two concurrent circuits), then walls are imposed:

    - vorticity: advection-diffusion with velocities derived from psi_t,
    - stream function: one Poisson relaxation sweep with source -omega_t.
    """
    u, v = velocity_from_stream_function(psi, spec.delta)
    k = collision_coefficients(D2Q5, np.stack([u, v]), psi.shape)
    f_streamed = stream_periodic(D2Q5, k * omega[None, ...])
    omega_next = macro_moment(f_streamed)
    psi_next = step_poisson(D2Q5, psi, -omega, params)
    return apply_cavity_boundaries(psi_next, omega_next, spec, populations=f_streamed)


def solve_cavity_classical(
    spec: CavitySpec,
    params: FlowParams | None = None,
    *,
    keep_wall_distributions: bool = False,
) -> CavityHistory:
    """Run the classical lid-driven cavity for spec.steps steps from rest."""
    params = params or FlowParams(lid_velocity=spec.lid_velocity)
    _require_power_of_two_extent((spec.n,))
    psi = np.zeros((spec.n, spec.n))
    omega = np.zeros((spec.n, spec.n))
    psi_hist = [psi]
    omega_hist = [omega]
    walls = []
    for step in range(1, spec.steps + 1):
        psi, omega, wall_g = cavity_step_classical(psi, omega, spec, params)
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(omega))):
            raise SimulationError("cavity run diverged", step=step)
        psi_hist.append(psi)
        omega_hist.append(omega)
        if keep_wall_distributions:
            walls.append(wall_g)
    return CavityHistory(psi=np.stack(psi_hist), omega=np.stack(omega_hist), wall_distributions=walls)


# ---------------------------------------------------------------------------
# field serialization
# ---------------------------------------------------------------------------

_QLBF_MAGIC = b"QLBF"


def save_field_csv(path, field) -> None:
    """Write a scalar field as CSV with header x,y,value (y = 0 for 1-D fields)."""
    field = np.asarray(field, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write("x,y,value\n")
        if field.ndim == 1:
            for x, val in enumerate(field):
                fh.write(f"{x},0,{float(val)!r}\n")
        elif field.ndim == 2:
            for y in range(field.shape[0]):
                for x in range(field.shape[1]):
                    fh.write(f"{x},{y},{float(field[y, x])!r}\n")
        else:
            raise ConfigurationError("only 1-D and 2-D fields are serializable")


def load_field_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != "x,y,value":
            raise ConfigurationError(f"bad field CSV header: {header!r}")
        xs, ys, vals = [], [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            x_s, y_s, v_s = line.split(",")
            xs.append(int(x_s))
            ys.append(int(y_s))
            vals.append(float(v_s))
    nx, ny = max(xs) + 1, max(ys) + 1
    if ny == 1:
        out = np.empty(nx)
        for x, v in zip(xs, vals):
            out[x] = v
        return out
    out = np.empty((ny, nx))
    for x, y, v in zip(xs, ys, vals):
        out[y, x] = v
    return out


def save_field_qlbf(path, field) -> None:
    """Binary field dump: magic 'QLBF', u32 rank, u32 dims, f64 row-major, LE."""
    field = np.asarray(field, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_QLBF_MAGIC)
        fh.write(struct.pack("<I", field.ndim))
        for n in field.shape:
            fh.write(struct.pack("<I", n))
        fh.write(field.tobytes(order="C"))


def load_field_qlbf(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _QLBF_MAGIC:
            raise ConfigurationError(f"bad magic {magic!r}, expected {_QLBF_MAGIC!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(rank))
        data = np.frombuffer(fh.read(), dtype="<f8")
    expected = int(np.prod(shape))
    if data.size != expected:
        raise ConfigurationError(f"payload has {data.size} values, header promises {expected}")
    return data.reshape(shape).copy()

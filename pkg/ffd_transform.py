"""
Cubic B-spline free-form deformation (FFD).

A transform is an nx x ny lattice of control-point displacements. Control
point k along an axis sits at (k - 1) * spacing with spacing = extent / (n - 3),
so the extra first and last rows/columns let the cubic support cover every
pixel. A pixel at coordinate c falls in cell i = floor(c / spacing) and is
moved by sum_l B_l(u) * offset[i + l], u = c / spacing - i.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from image_core import ImageGrid, block_centre, sample_array

logger = logging.getLogger(__name__)

MIN_CONTROL_POINTS = 4


def bspline_basis(u):
    """The four uniform cubic B-spline weights at fractional position u."""
    u = np.asarray(u, dtype=np.float64)
    u2 = u * u
    u3 = u2 * u
    return np.stack([
        (1.0 - u) ** 3 / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ])


def basis_matrix(coords, n, spacing):
    """
    Weights of n control points at each coordinate, shape (len(coords), n).

    Coordinates outside the lattice reuse the nearest cell's polynomial.
    """
    coords = np.asarray(coords, dtype=np.float64)
    t = coords / spacing
    cell = np.clip(np.floor(t).astype(int), 0, n - MIN_CONTROL_POINTS)
    weights = bspline_basis(t - cell)
    rows = np.arange(coords.size)
    out = np.zeros((coords.size, n))
    for l in range(4):
        out[rows, cell + l] = weights[l]
    return out


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Dense per-pixel (dx, dy) in pixels, stored as a (height, width, 2) array."""

    vectors: np.ndarray

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=np.float64, copy=True)
        if vec.ndim != 3 or vec.shape[2] != 2:
            raise ValueError(f"displacement field must have shape (H, W, 2), got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("displacement field values must be finite")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    @property
    def width(self):
        return self.vectors.shape[1]

    @property
    def height(self):
        return self.vectors.shape[0]

    def magnitude(self):
        return np.hypot(self.vectors[..., 0], self.vectors[..., 1])


@dataclass(frozen=True, eq=False)
class FfdTransform:
    """Control lattice over an image_width x image_height domain; offsets are (ny, nx, 2)."""

    nx: int
    ny: int
    image_width: int
    image_height: int
    offsets: np.ndarray

    def __post_init__(self):
        if self.nx < MIN_CONTROL_POINTS or self.ny < MIN_CONTROL_POINTS:
            raise ValueError(f"FFD lattice needs at least 4x4 control points, got {self.nx}x{self.ny}")
        off = np.array(self.offsets, dtype=np.float64, copy=True)
        if off.shape != (self.ny, self.nx, 2):
            raise ValueError(f"offsets must have shape {(self.ny, self.nx, 2)}, got {off.shape}")
        if not np.all(np.isfinite(off)):
            raise ValueError("FFD offsets must be finite")
        off.setflags(write=False)
        object.__setattr__(self, "offsets", off)

    @property
    def spacing_x(self):
        return self.image_width / (self.nx - 3)

    @property
    def spacing_y(self):
        return self.image_height / (self.ny - 3)

    def with_offsets(self, offsets):
        return FfdTransform(self.nx, self.ny, self.image_width, self.image_height, offsets)

    def basis_x(self):
        return basis_matrix(np.arange(self.image_width), self.nx, self.spacing_x)

    def basis_y(self):
        return basis_matrix(np.arange(self.image_height), self.ny, self.spacing_y)


def make_uniform_grid(width, height, nx, ny):
    """Identity transform on an nx x ny lattice."""
    if nx < MIN_CONTROL_POINTS or ny < MIN_CONTROL_POINTS:
        raise ValueError(f"FFD lattice needs at least 4x4 control points, got {nx}x{ny}")
    return FfdTransform(nx, ny, width, height, np.zeros((ny, nx, 2)))


def perturb_grid(t, amplitude, seed):
    """Add independent U[-amplitude, amplitude] noise to every offset component."""
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-amplitude, amplitude, size=t.offsets.shape)
    return t.with_offsets(t.offsets + noise)


def field_from_bases(by, bx, offsets):
    """Dense (H, W, 2) displacement from precomputed basis matrices."""
    dx = by @ offsets[..., 0] @ bx.T
    dy = by @ offsets[..., 1] @ bx.T
    return np.stack([dx, dy], axis=-1)


def displacement_at(t, x, y):
    bx = basis_matrix([x], t.nx, t.spacing_x)
    by = basis_matrix([y], t.ny, t.spacing_y)
    d = field_from_bases(by, bx, t.offsets)[0, 0]
    return float(d[0]), float(d[1])


def dense_displacement(t):
    """Displacement of every pixel of the transform's domain."""
    return DisplacementField(field_from_bases(t.basis_y(), t.basis_x(), t.offsets))


def warp_array(data, field):
    """Backward warp of a raw array: out(x, y) = data at (x + dx, y + dy), border-clamped."""
    height, width = data.shape
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return sample_array(data, xs + field[..., 0], ys + field[..., 1])


def warp_image(img, t):
    if (img.width, img.height) != (t.image_width, t.image_height):
        raise ValueError(
            f"transform domain {t.image_width}x{t.image_height} does not match image {img.width}x{img.height}"
        )
    return ImageGrid(warp_array(img.data, dense_displacement(t).vectors))


def _refine_matrix(n):
    r = np.zeros((2 * n - 3, n))
    for k in range(n - 1):
        r[2 * k, k] = 0.5
        r[2 * k, k + 1] = 0.5
    for k in range(1, n - 1):
        r[2 * k - 1, k - 1:k + 2] = (1.0 / 8.0, 6.0 / 8.0, 1.0 / 8.0)
    return r


def refine_grid(t):
    """
    Knot-insertion subdivision onto a 2n - 3 lattice.

    Spacing halves and the dense deformation is unchanged.
    """
    rx = _refine_matrix(t.nx)
    ry = _refine_matrix(t.ny)
    fine = np.stack([ry @ t.offsets[..., c] @ rx.T for c in range(2)], axis=-1)
    return FfdTransform(2 * t.nx - 3, 2 * t.ny - 3, t.image_width, t.image_height, fine)


def fit_to_lattice(field, nx, ny):
    """Least-squares FFD on an nx x ny lattice reproducing a dense field."""
    t = make_uniform_grid(field.width, field.height, nx, ny)
    bx_pinv = np.linalg.pinv(t.basis_x())
    by_pinv = np.linalg.pinv(t.basis_y())
    offsets = np.stack([by_pinv @ field.vectors[..., c] @ bx_pinv.T for c in range(2)], axis=-1)
    return t.with_offsets(offsets)


def transfer(t, width, height, nx, ny, src_factor=1, dst_factor=1):
    """
    Re-express a transform on another pyramid level and lattice.

    src_factor / dst_factor are the decimation factors (relative to full
    resolution) of the transform's domain and of the target domain. Target
    pixels are mapped through block centres into the source domain, the
    displacement is rescaled to target pixels and fitted to the new lattice.
    Doubling the lattice on the same domain uses exact knot insertion instead.
    """
    same_domain = src_factor == dst_factor and (width, height) == (t.image_width, t.image_height)
    if same_domain and (nx, ny) == (2 * t.nx - 3, 2 * t.ny - 3):
        logger.debug(f"🔁 Refining {t.nx}x{t.ny} -> {nx}x{ny} by knot insertion")
        return refine_grid(t)

    full_x = block_centre(np.arange(width), dst_factor)
    full_y = block_centre(np.arange(height), dst_factor)
    src_x = (full_x - (src_factor - 1) / 2.0) / src_factor
    src_y = (full_y - (src_factor - 1) / 2.0) / src_factor

    bx = basis_matrix(src_x, t.nx, t.spacing_x)
    by = basis_matrix(src_y, t.ny, t.spacing_y)
    resampled = field_from_bases(by, bx, t.offsets) * (src_factor / dst_factor)
    fitted = fit_to_lattice(DisplacementField(resampled), nx, ny)

    if logger.isEnabledFor(logging.DEBUG):
        residual = np.abs(dense_displacement(fitted).vectors - resampled).max()
        logger.debug(f"🔁 Transfer {t.nx}x{t.ny}@1/{src_factor} -> {nx}x{ny}@1/{dst_factor}, max fit residual {residual:.2e}px")
    return fitted


def lattice_schedule(levels, finest):
    """Control lattice sizes from coarse to fine, e.g. [5, 8, 14] for 3 levels up to 14."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if levels == 1 or finest <= 5:
        return [max(finest, MIN_CONTROL_POINTS)] * levels
    return [int(round(v)) for v in np.geomspace(5, finest, levels)]


def to_json(t):
    return {
        "nx": t.nx,
        "ny": t.ny,
        "spacing_x": t.spacing_x,
        "spacing_y": t.spacing_y,
        "image_width": t.image_width,
        "image_height": t.image_height,
        "offsets": t.offsets.tolist(),
    }


def from_json(payload):
    return FfdTransform(
        nx=int(payload["nx"]),
        ny=int(payload["ny"]),
        image_width=int(payload["image_width"]),
        image_height=int(payload["image_height"]),
        offsets=np.asarray(payload["offsets"], dtype=np.float64),
    )


def save_transform(t, path):
    with open(path, "w") as f:
        json.dump(to_json(t), f, indent=2)


def load_transform(path):
    with open(path, "r") as f:
        return from_json(json.load(f))

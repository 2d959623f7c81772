"""Parametric hand silhouettes with exact ground truth.

The hand is a rounded-rectangle palm with five capsule fingers mounted on
its flat top edge and an arm stump cut off horizontally below. All shapes
are continuous; a pixel is foreground when its integer centre lies inside
the union. Ground-truth landmarks are the pixels an ideal boundary walk
would report, derived from the same continuous geometry, so detector output
can be compared against them at pixel resolution.

Dimension parameters are in reference pixels at 100 dpi; rendering at
another dpi scales the whole figure, leaving mm-valued truth unchanged up
to quantization.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .contour import find_landmarks, perimeter, trace_contour
from .errors import CorpusError, HandGeoError, RenderError
from .features import base_segments
from .imaging import (
    MM_PER_INCH,
    BinaryImage,
    GrayImage,
    binarize,
    detect_edges_log,
    load_bmp,
    lowpass_filter,
    save_bmp,
)

REFERENCE_DPI = 100.0
_MARGIN = 10.0
_PALM_CORNER_RADIUS = 12.0
_BASE_MARGIN = 3.0  # clearance between outer fingers and the corner arcs
_ARM_WIDTH_FRACTION = 0.45
_ARM_LENGTH = 30.0
_TIP_HEADROOM = 4.0

#: Anthropometric sampling ranges (reference px) for corpus prototypes.
FINGER_LENGTH_RANGE = (50.0, 90.0)
FINGER_WIDTH_RANGE = (12.0, 22.0)
GAP_RANGE = (8.0, 12.0)
PALM_HEIGHT_RANGE = (80.0, 100.0)
TILT_RANGE_DEG = (-8.0, 8.0)

# Hand dimensions co-vary strongly with overall hand size, so person
# prototypes are a canonical hand scaled by a common size factor with
# persistent per-finger shape deviations on top, clipped to the ranges
# above.  Drawing every dimension independently over its full population
# range would make persons unrealistically easy to tell apart.
BASE_FINGER_LENGTHS = (55.0, 70.0, 80.0, 74.0, 58.0)
BASE_FINGER_WIDTHS = (18.0, 16.0, 17.0, 16.0, 13.0)
BASE_PALM_HEIGHT = 90.0
HAND_SIZE_RANGE = (0.92, 1.12)
SHAPE_SIGMA = 0.04


@dataclass
class HandParams:
    """Ideal hand geometry in reference pixels plus a render noise seed."""

    finger_lengths: tuple[float, float, float, float, float]
    finger_widths: tuple[float, float, float, float, float]
    palm_width: float
    palm_height: float
    tilt_deg: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        self.finger_lengths = tuple(float(v) for v in self.finger_lengths)
        self.finger_widths = tuple(float(v) for v in self.finger_widths)
        if len(self.finger_lengths) != 5 or len(self.finger_widths) != 5:
            raise RenderError("a hand needs exactly 5 finger lengths and 5 widths")


@dataclass
class GroundTruth:
    """Ideal-shape landmarks (px) and measurements (mm) of one render."""

    tips: list[tuple[int, int]]
    valleys: list[tuple[int, int]]
    wrist: tuple[tuple[int, int], tuple[int, int]]
    lengths_mm: tuple[float, ...]
    widths_mm: tuple[float, ...]
    wrist_length_mm: float
    perimeter_mm: float
    surface_mm2: float


@dataclass
class Corpus:
    """Rendered database: persons x samples images with per-sample truth."""

    images: list[list[GrayImage]]
    truths: list[list[GroundTruth]]
    persons: list[HandParams] | None
    master_seed: int
    intra_sigma: float
    noise_level: float
    dpi: float


def canonical_params(seed: int = 0) -> HandParams:
    """A comfortable mid-range hand used by examples and fixed tests."""
    widths = BASE_FINGER_WIDTHS
    palm_width = sum(widths) + 4 * 10.0 + 2 * _BASE_MARGIN + 2 * _PALM_CORNER_RADIUS
    return HandParams(
        finger_lengths=BASE_FINGER_LENGTHS,
        finger_widths=widths,
        palm_width=palm_width,
        palm_height=BASE_PALM_HEIGHT,
        tilt_deg=0.0,
        seed=seed,
    )


def _seg_point_dist(x: float, y: float, bx: float, by: float, px: float, py: float) -> float:
    vx, vy = px - bx, py - by
    denom = vx * vx + vy * vy
    t = 0.0 if denom == 0 else max(0.0, min(1.0, ((x - bx) * vx + (y - by) * vy) / denom))
    dx, dy = x - (bx + t * vx), y - (by + t * vy)
    return math.hypot(dx, dy)


def _capsule_xsection(
    base: tuple[float, float], tip: tuple[float, float], r: float, y: float
) -> tuple[float, float] | None:
    """Continuous [x_lo, x_hi] of a capsule cut by the horizontal line at y."""
    bx, by, px, py = base[0], base[1], tip[0], tip[1]
    if y > by + r or y < py - r:
        return None
    # An interior x on this row: the axis crossing, or the nearer cap centre.
    if y >= by:
        x_in = bx
    elif y <= py:
        x_in = px
    else:
        x_in = bx + (y - by) / (py - by) * (px - bx)
    if _seg_point_dist(x_in, y, bx, by, px, py) >= r:
        return None
    span = r + abs(px - bx) + 2.0
    lo_out, hi_out = x_in - span, x_in + span

    def edge(inside: float, outside: float) -> float:
        for _ in range(80):
            mid = 0.5 * (inside + outside)
            if _seg_point_dist(mid, y, bx, by, px, py) < r:
                inside = mid
            else:
                outside = mid
        return 0.5 * (inside + outside)

    return edge(x_in, lo_out), edge(x_in, hi_out)


@dataclass
class _Layout:
    """Continuous geometry of one hand at a given render scale."""

    bases: list[tuple[float, float]]
    tips: list[tuple[float, float]]
    radii: list[float]
    palm_left: float
    palm_right: float
    palm_top: float
    palm_bottom: float
    corner_radius: float
    arm_left: float
    arm_right: float
    arm_top: float
    arm_cut: float
    width: int
    height: int


def _layout(params: HandParams, scale: float) -> _Layout:
    lengths = [v * scale for v in params.finger_lengths]
    widths = [v * scale for v in params.finger_widths]
    radii = [w / 2.0 for w in widths]
    palm_w = params.palm_width * scale
    palm_h = params.palm_height * scale
    margin = _MARGIN * scale
    cr = _PALM_CORNER_RADIUS * scale
    base_margin = _BASE_MARGIN * scale

    gap = (palm_w - 2 * cr - 2 * base_margin - sum(widths)) / 4.0
    palm_left = margin + 6.0 * scale
    palm_right = palm_left + palm_w
    rise = max(ln + r for ln, r in zip(lengths, radii))
    palm_top = margin + rise + _TIP_HEADROOM * scale
    palm_bottom = palm_top + palm_h

    theta = math.radians(params.tilt_deg)
    ux, uy = math.sin(theta), -math.cos(theta)
    bases: list[tuple[float, float]] = []
    tips: list[tuple[float, float]] = []
    x = palm_left + cr + base_margin
    for f in range(5):
        bx = x + radii[f]
        bases.append((bx, palm_top))
        tips.append((bx + lengths[f] * ux, palm_top + lengths[f] * uy))
        x = bx + radii[f] + gap

    arm_w = _ARM_WIDTH_FRACTION * palm_w
    arm_cx = 0.5 * (palm_left + palm_right)
    arm_top = palm_bottom - 5.0 * scale
    arm_cut = palm_bottom + _ARM_LENGTH * scale

    width = int(math.ceil(palm_right + margin + 6.0 * scale))
    height = int(math.ceil(arm_cut + margin))
    return _Layout(
        bases=bases,
        tips=tips,
        radii=radii,
        palm_left=palm_left,
        palm_right=palm_right,
        palm_top=palm_top,
        palm_bottom=palm_bottom,
        corner_radius=cr,
        arm_left=arm_cx - arm_w / 2.0,
        arm_right=arm_cx + arm_w / 2.0,
        arm_top=arm_top,
        arm_cut=arm_cut,
        width=width,
        height=height,
    )


def _validate_layout(params: HandParams, lay: _Layout, scale: float) -> None:
    if any(v <= 0 for v in params.finger_lengths + params.finger_widths):
        raise RenderError("finger lengths and widths must be positive")
    if not -10.0 <= params.tilt_deg <= 10.0:
        raise RenderError(f"tilt {params.tilt_deg} deg outside [-10, 10]")
    if params.palm_width <= 0 or params.palm_height <= 0:
        raise RenderError("palm dimensions must be positive")

    row = math.ceil(lay.palm_top) - 1  # last row above the palm
    sections = []
    for f in range(5):
        sec = _capsule_xsection(lay.bases[f], lay.tips[f], lay.radii[f], row)
        if sec is None:
            raise RenderError(f"finger {f} does not reach the palm top edge")
        sections.append(sec)
    for f in range(4):
        clearance = sections[f + 1][0] - sections[f][1]
        if clearance < 1.0 * scale:
            raise RenderError(f"fingers {f} and {f + 1} merge at the base")
    if sections[0][0] < lay.palm_left + lay.corner_radius + 1.0:
        raise RenderError("thumb overruns the palm's left corner")
    if sections[4][1] > lay.palm_right - lay.corner_radius - 1.0:
        raise RenderError("little finger overruns the palm's right corner")
    for f in range(5):
        tx = lay.tips[f][0]
        if tx - lay.radii[f] < 2.0 or tx + lay.radii[f] > lay.width - 3.0:
            raise RenderError(f"finger {f} leans outside the canvas")


def _rasterize(lay: _Layout) -> np.ndarray:
    ys, xs = np.mgrid[0 : lay.height, 0 : lay.width]
    x, y = xs.astype(float), ys.astype(float)

    cr = lay.corner_radius
    core_dx = np.maximum.reduce(
        [lay.palm_left + cr - x, x - (lay.palm_right - cr), np.zeros_like(x)]
    )
    core_dy = np.maximum.reduce(
        [lay.palm_top + cr - y, y - (lay.palm_bottom - cr), np.zeros_like(y)]
    )
    palm = core_dx**2 + core_dy**2 <= cr**2

    arm = (
        (x >= lay.arm_left)
        & (x <= lay.arm_right)
        & (y >= lay.arm_top)
        & (y <= lay.arm_cut)
    )

    mask = palm | arm
    for base, tip, r in zip(lay.bases, lay.tips, lay.radii):
        bx, by = base
        px, py = tip
        vx, vy = px - bx, py - by
        denom = vx * vx + vy * vy
        t = np.clip(((x - bx) * vx + (y - by) * vy) / denom, 0.0, 1.0)
        mask |= (x - (bx + t * vx)) ** 2 + (y - (by + t * vy)) ** 2 <= r**2
    return mask


def _westward_mid(a: int, b: int) -> int:
    """Pixel a westward boundary walk reports as the centre of the run [a, b]."""
    return b - (b - a) // 2


def _ground_truth(lay: _Layout, mask: np.ndarray, dpi: float, allow_defects: bool) -> GroundTruth:
    mm = MM_PER_INCH / dpi

    tips: list[tuple[int, int]] = []
    for f in range(5):
        px, py = lay.tips[f]
        r = lay.radii[f]
        yt = math.ceil(py - r)
        while True:
            half = math.sqrt(max(r * r - (yt - py) ** 2, 0.0))
            a, b = math.ceil(px - half), math.floor(px + half)
            if b >= a:
                break
            yt += 1  # sub-pixel cap: the first occupied row is lower
        tips.append((_westward_mid(a, b), yt))

    row_above = math.ceil(lay.palm_top) - 1
    floor_y = row_above + 1
    valleys: list[tuple[int, int]] = []
    for f in range(4):
        left = _capsule_xsection(lay.bases[f], lay.tips[f], lay.radii[f], row_above)
        right = _capsule_xsection(lay.bases[f + 1], lay.tips[f + 1], lay.radii[f + 1], row_above)
        if left is None or right is None:
            raise RenderError(f"fingers {f} or {f + 1} miss the palm top edge")
        a = math.floor(left[1]) + 1  # first background column after the left finger
        b = math.ceil(right[0]) - 1  # last background column before the right one
        if b < a:
            if not allow_defects:
                raise RenderError(f"fingers {f} and {f + 1} merge at the base")
            valleys.append((int(round(0.5 * (left[1] + right[0]))), floor_y))
        else:
            valleys.append((_westward_mid(a, b), floor_y))

    yb = math.floor(lay.arm_cut)
    wrist = ((math.ceil(lay.arm_left), yb), (math.floor(lay.arm_right), yb))

    def dist(p: tuple[int, int], q: tuple[float, float]) -> float:
        return math.hypot(p[0] - q[0], p[1] - q[1])

    bases = base_segments(tips, valleys, wrist)
    lengths = tuple(
        dist(tips[f], (0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]))) * mm
        for f, (a, b) in enumerate(bases)
    )
    widths = tuple(dist(a, b) * mm for a, b in bases)
    wrist_length = dist(wrist[0], wrist[1]) * mm

    boundary = mask & ~_erode4(mask)
    chain = trace_contour(BinaryImage(bits=boundary.astype(np.uint8), dpi=dpi))
    return GroundTruth(
        tips=tips,
        valleys=valleys,
        wrist=wrist,
        lengths_mm=lengths,
        widths_mm=widths,
        wrist_length_mm=wrist_length,
        perimeter_mm=perimeter(chain) * mm,
        surface_mm2=float(mask.sum()) * mm * mm,
    )


def _erode4(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] &= mask[:-1, :]
    out[:-1, :] &= mask[1:, :]
    out[:, 1:] &= mask[:, :-1]
    out[:, :-1] &= mask[:, 1:]
    return out


def render(
    params: HandParams,
    dpi: float = REFERENCE_DPI,
    noise_level: float = 0.0,
    *,
    foreground: float = 0.95,
    background: float = 0.02,
    allow_defects: bool = False,
) -> tuple[GrayImage, GroundTruth]:
    """Rasterize one hand; returns the image and its exact ground truth."""
    scale = dpi / REFERENCE_DPI
    lay = _layout(params, scale)
    if not allow_defects:
        _validate_layout(params, lay, scale)
    mask = _rasterize(lay)
    truth = _ground_truth(lay, mask, dpi, allow_defects)

    pixels = np.where(mask, foreground, background)
    if noise_level > 0:
        rng = np.random.default_rng(params.seed)
        pixels = pixels + rng.uniform(-noise_level, noise_level, pixels.shape)
    return GrayImage(pixels=np.clip(pixels, 0.0, 1.0), dpi=dpi), truth


def _landmarks_detectable(img: GrayImage) -> bool:
    """True when the default extraction chain finds 5 tips and 4 valleys."""
    try:
        edges = detect_edges_log(binarize(lowpass_filter(img)))
        find_landmarks(trace_contour(edges))
    except HandGeoError:
        return False
    return True


def _draw_prototype(rng: np.random.Generator) -> HandParams:
    size = rng.uniform(*HAND_SIZE_RANGE)
    lengths = np.clip(
        np.array(BASE_FINGER_LENGTHS) * size * (1.0 + rng.normal(0.0, SHAPE_SIGMA, 5)),
        *FINGER_LENGTH_RANGE,
    )
    widths = np.clip(
        np.array(BASE_FINGER_WIDTHS) * size * (1.0 + rng.normal(0.0, SHAPE_SIGMA, 5)),
        *FINGER_WIDTH_RANGE,
    )
    gap = rng.uniform(*GAP_RANGE)
    palm_height = float(
        np.clip(BASE_PALM_HEIGHT * size * (1.0 + rng.normal(0.0, SHAPE_SIGMA)), *PALM_HEIGHT_RANGE)
    )
    tilt = rng.uniform(*TILT_RANGE_DEG)
    palm_width = float(widths.sum()) + 4 * gap + 2 * _BASE_MARGIN + 2 * _PALM_CORNER_RADIUS
    return HandParams(
        finger_lengths=tuple(lengths),
        finger_widths=tuple(widths),
        palm_width=palm_width,
        palm_height=palm_height,
        tilt_deg=tilt,
    )


def _jitter(proto: HandParams, sigma: float, rng: np.random.Generator) -> HandParams:
    """One posing of a prototype: every linear dimension wobbles by a relative
    normal draw (palm at half strength, since a palm flattens more repeatably
    than fingers pose), and the tilt wanders a few degrees."""
    lengths = tuple(v * (1.0 + rng.normal(0.0, sigma)) for v in proto.finger_lengths)
    widths = tuple(v * (1.0 + rng.normal(0.0, sigma)) for v in proto.finger_widths)
    palm_width = proto.palm_width * (1.0 + rng.normal(0.0, 0.5 * sigma))
    palm_height = proto.palm_height * (1.0 + rng.normal(0.0, 0.5 * sigma))
    tilt = float(np.clip(proto.tilt_deg + rng.normal(0.0, 15.0 * sigma), -10.0, 10.0))
    return HandParams(
        finger_lengths=lengths,
        finger_widths=widths,
        palm_width=palm_width,
        palm_height=palm_height,
        tilt_deg=tilt,
        seed=int(rng.integers(2**31)),
    )


def make_corpus(
    master_seed: int,
    intra_sigma: float = 0.03,
    *,
    persons: int = 22,
    samples: int = 10,
    noise_level: float = 0.03,
    dpi: float = REFERENCE_DPI,
) -> Corpus:
    """Draw person prototypes and render jittered samples for each.

    A sample whose render fails or whose landmarks are not detected by the
    default extraction chain is regenerated from the same stream, up to 100
    attempts.
    """
    if not 0.0 <= intra_sigma <= 0.1:
        raise CorpusError(f"intra_sigma {intra_sigma} outside [0, 0.1]")
    protos: list[HandParams] = []
    images: list[list[GrayImage]] = []
    truths: list[list[GroundTruth]] = []
    for p in range(persons):
        proto = _draw_prototype(np.random.default_rng((master_seed, p)))
        protos.append(proto)
        row_img: list[GrayImage] = []
        row_gt: list[GroundTruth] = []
        for j in range(samples):
            rng = np.random.default_rng((master_seed, p, j))
            for _ in range(100):
                try:
                    img, gt = render(_jitter(proto, intra_sigma, rng), dpi, noise_level)
                except RenderError:
                    continue
                if _landmarks_detectable(img):
                    break
            else:
                raise CorpusError(f"person {p} sample {j}: no valid sample in 100 attempts")
            row_img.append(img)
            row_gt.append(gt)
        images.append(row_img)
        truths.append(row_gt)
    return Corpus(
        images=images,
        truths=truths,
        persons=protos,
        master_seed=master_seed,
        intra_sigma=intra_sigma,
        noise_level=noise_level,
        dpi=dpi,
    )


_GT_HEADER = (
    ["sample"]
    + [f"tip{f}_{ax}" for f in range(5) for ax in "xy"]
    + [f"valley{f}_{ax}" for f in range(4) for ax in "xy"]
    + ["wrist_left_x", "wrist_left_y", "wrist_right_x", "wrist_right_y"]
    + [f"length{f}_mm" for f in range(5)]
    + [f"width{f}_mm" for f in range(5)]
    + ["wrist_length_mm", "perimeter_mm", "surface_mm2"]
)


def _gt_row(j: int, gt: GroundTruth) -> list[str]:
    cells: list[str] = [str(j)]
    for x, y in gt.tips:
        cells += [str(x), str(y)]
    for x, y in gt.valleys:
        cells += [str(x), str(y)]
    for x, y in gt.wrist:
        cells += [str(x), str(y)]
    for v in (*gt.lengths_mm, *gt.widths_mm, gt.wrist_length_mm, gt.perimeter_mm, gt.surface_mm2):
        cells.append(f"{v:.17g}")
    return cells


def _gt_from_row(row: list[str]) -> GroundTruth:
    vals = row[1:]
    pts = [(int(vals[2 * i]), int(vals[2 * i + 1])) for i in range(11)]
    nums = [float(v) for v in vals[22:]]
    return GroundTruth(
        tips=pts[:5],
        valleys=pts[5:9],
        wrist=(pts[9], pts[10]),
        lengths_mm=tuple(nums[0:5]),
        widths_mm=tuple(nums[5:10]),
        wrist_length_mm=nums[10],
        perimeter_mm=nums[11],
        surface_mm2=nums[12],
    )


def save_corpus(corpus: Corpus, root: str | Path) -> None:
    """Directory tree: person_<i>/sample_<j>.bmp plus per-person truth CSV."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    config = "\n".join(
        [
            f"master_seed={corpus.master_seed}",
            f"intra_sigma={corpus.intra_sigma:.17g}",
            f"noise_level={corpus.noise_level:.17g}",
            f"dpi={corpus.dpi:.17g}",
            f"persons={len(corpus.images)}",
            f"samples={len(corpus.images[0]) if corpus.images else 0}",
        ]
    )
    (root / "corpus_config.txt").write_text(config + "\n", encoding="utf-8")
    for p, (row_img, row_gt) in enumerate(zip(corpus.images, corpus.truths)):
        pdir = root / f"person_{p:02d}"
        pdir.mkdir(exist_ok=True)
        with open(pdir / "ground_truth.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_GT_HEADER)
            for j, (img, gt) in enumerate(zip(row_img, row_gt)):
                save_bmp(img, pdir / f"sample_{j:02d}.bmp")
                writer.writerow(_gt_row(j, gt))


def load_corpus(root: str | Path) -> Corpus:
    root = Path(root)
    config_path = root / "corpus_config.txt"
    if not config_path.is_file():
        raise CorpusError(f"{config_path} not found")
    config: dict[str, str] = {}
    for line in config_path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            config[key.strip()] = value.strip()
    persons = int(config["persons"])
    samples = int(config["samples"])
    images: list[list[GrayImage]] = []
    truths: list[list[GroundTruth]] = []
    for p in range(persons):
        pdir = root / f"person_{p:02d}"
        images.append([load_bmp(pdir / f"sample_{j:02d}.bmp") for j in range(samples)])
        with open(pdir / "ground_truth.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        truths.append([_gt_from_row(row) for row in rows])
    return Corpus(
        images=images,
        truths=truths,
        persons=None,
        master_seed=int(config["master_seed"]),
        intra_sigma=float(config["intra_sigma"]),
        noise_level=float(config["noise_level"]),
        dpi=float(config["dpi"]),
    )

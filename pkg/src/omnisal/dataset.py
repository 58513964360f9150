"""Images, fixations, ground-truth maps, manifests and synthetic datasets.

File formats
------------
``.f32``
    ASCII header ``<width>,<height>\\n`` followed by row-major little-endian
    float32 values. Lossless for float32 data.
``.png``
    8/16-bit grayscale or RGB, read as floats in [0, 1]. Maps are written as
    16-bit grayscale of ``clip(value, 0, 1)``.
fixation CSV
    Header line, then ``observer_id,theta_deg,phi_deg`` rows.
manifest
    ``<image_id> <image_path> <fixation_path> [gt_path]`` lines, optionally
    followed by ``[train]`` / ``[val]`` sections listing image ids.
"""
import csv
from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoError, NoFixations, ParseError, RangeError, ValidationError
from .geometry import equirect_pixel_to_spherical, pixel_directions, spherical_to_equirect_pixel
from .raster import BlurSpec, as_raster, gaussian_blur, normalize_sum

DEFAULT_GT_SIGMA = 24.0  # px at 1600 columns
N_OBSERVERS = 17


def default_gt_sigma(width):
    """Ground-truth blur scaled from 24 px at 1600 columns."""
    return DEFAULT_GT_SIGMA * width / 1600.0


# --- rasters -----------------------------------------------------------------

def save_map(path, raster):
    path = Path(path)
    arr = np.asarray(raster, dtype=np.float64)
    try:
        if path.suffix == ".f32":
            if arr.ndim != 2:
                raise ValidationError(".f32 stores single-channel rasters only")
            h, w = arr.shape
            with open(path, "wb") as fh:
                fh.write(f"{w},{h}\n".encode("ascii"))
                fh.write(arr.astype("<f4").tobytes())
        elif path.suffix == ".png":
            q = np.round(np.clip(arr, 0.0, 1.0) * 65535.0).astype(np.uint16)
            if q.ndim == 2:
                Image.fromarray(q).save(path)
            else:
                # Pillow has no 16-bit RGB mode
                Image.fromarray((q >> 8).astype(np.uint8)).save(path)
        elif path.suffix == ".npy":
            np.save(path, arr)
        else:
            raise ValidationError(f"unsupported map format {path.suffix!r} (use .f32, .png, .npy)")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_f32(path):
    with open(path, "rb") as fh:
        header = fh.readline()
        try:
            w, h = (int(x) for x in header.decode("ascii").strip().split(","))
        except (UnicodeDecodeError, ValueError):
            raise ParseError("bad .f32 header, expected '<width>,<height>'", path, 1) from None
        data = np.frombuffer(fh.read(), dtype="<f4")
    if w < 1 or h < 1 or data.size != w * h:
        raise ParseError(f".f32 payload has {data.size} values, header says {w}x{h}", path)
    return data.reshape(h, w).astype(np.float64)


def load_image(path):
    """Load a raster as float64: (H, W) or (H, W, 3)."""
    path = Path(path)
    try:
        if path.suffix == ".f32":
            return _read_f32(path)
        if path.suffix == ".npy":
            return np.load(path).astype(np.float64)
        with Image.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.array(im, dtype=np.float64)
                return arr / 65535.0
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
            return arr
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


# --- fixations ---------------------------------------------------------------

@dataclass(frozen=True)
class FixationSet:
    """Fixations of one image as (observer_id, theta, phi) in radians."""

    image_id: str
    fixations: tuple

    def __post_init__(self):
        if not self.fixations:
            raise NoFixations(f"image {self.image_id!r} has no fixations")
        for obs, theta, phi in self.fixations:
            if not (-math.pi - 1e-12 <= theta <= math.pi + 1e-12):
                raise RangeError(f"theta {theta} outside [-pi, pi]")
            if not (-math.pi / 2 - 1e-12 <= phi <= math.pi / 2 + 1e-12):
                raise RangeError(f"phi {phi} outside [-pi/2, pi/2]")

    def __len__(self):
        return len(self.fixations)

    def angles(self):
        arr = np.array([(t, p) for _, t, p in self.fixations], dtype=np.float64)
        return arr[:, 0], arr[:, 1]


def fixation_pixels(fix, width, height):
    """Integer (row, col) pixel of every fixation."""
    theta, phi = fix.angles()
    col, row = spherical_to_equirect_pixel(theta, phi, width, height)
    cols = np.mod(np.floor(np.asarray(col) + 0.5).astype(np.int64), width)
    rows = np.clip(np.floor(np.asarray(row) + 0.5).astype(np.int64), 0, height - 1)
    return np.stack([rows, cols], axis=1)


def load_fixations(path, image_id=None):
    path = Path(path)
    image_id = image_id if image_id is not None else path.stem
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty fixation file", path)
        if [h.strip() for h in header] != ["observer_id", "theta_deg", "phi_deg"]:
            raise ParseError("header must be 'observer_id,theta_deg,phi_deg'", path, 1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or not "".join(rec).strip():
                continue
            if len(rec) != 3:
                raise ParseError(f"expected 3 fields, got {len(rec)}", path, lineno)
            try:
                obs, theta, phi = rec[0].strip(), float(rec[1]), float(rec[2])
            except ValueError:
                raise ParseError("theta_deg and phi_deg must be numbers", path, lineno) from None
            if not -180.0 <= theta <= 180.0:
                raise RangeError(f"theta_deg {theta} outside [-180, 180]", path, lineno)
            if not -90.0 <= phi <= 90.0:
                raise RangeError(f"phi_deg {phi} outside [-90, 90]", path, lineno)
            rows.append((obs, math.radians(theta), math.radians(phi)))
    if not rows:
        raise NoFixations(f"{path}: no fixations")
    return FixationSet(image_id, tuple(rows))


def save_fixations(path, fix):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["observer_id", "theta_deg", "phi_deg"])
            for obs, theta, phi in fix.fixations:
                writer.writerow([obs, repr(math.degrees(theta)), repr(math.degrees(phi))])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def make_gt_map(fix, width, height, sigma=None):
    """Blurred, normalized fixation density on the equirectangular grid."""
    if len(fix) == 0:
        raise NoFixations("no fixations")
    sigma = default_gt_sigma(width) if sigma is None else float(sigma)
    counts = np.zeros((height, width))
    pix = fixation_pixels(fix, width, height)
    np.add.at(counts, (pix[:, 0], pix[:, 1]), 1.0)
    return normalize_sum(gaussian_blur(counts, BlurSpec(sigma, "wrap", "reflect")))


# --- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: Path
    fixation_path: Path
    gt_path: Path = None


@dataclass
class DatasetManifest:
    entries: list
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    path: Path = None

    def __post_init__(self):
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ParseError("duplicate image ids in manifest", self.path)
        known = set(ids)
        for name, split in (("train", self.train), ("val", self.val)):
            missing = [i for i in split if i not in known]
            if missing:
                raise ParseError(f"[{name}] lists unknown ids: {', '.join(missing)}", self.path)
        if set(self.train) & set(self.val):
            raise ParseError("train and val splits overlap", self.path)

    @property
    def ids(self):
        return [e.image_id for e in self.entries]

    def entry(self, image_id):
        for e in self.entries:
            if e.image_id == image_id:
                return e
        raise KeyError(image_id)

    def split(self, name):
        if name == "all":
            return self.ids
        if name not in ("train", "val"):
            raise ValidationError(f"unknown split {name!r}")
        return list(getattr(self, name))


def default_split(ids, seed=0, train_fraction=0.8):
    """Seeded shuffle into (train, val); 40 ids give 32/8."""
    ids = list(ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(train_fraction * len(ids)))
    train = sorted(ids[i] for i in order[:n_train])
    val = sorted(ids[i] for i in order[n_train:])
    return train, val


def load_manifest(path, split_seed=0):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    root = path.parent
    entries, sections = [], {"train": None, "val": None}
    current = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            name = line.strip("[]").strip()
            if name not in sections:
                raise ParseError(f"unknown section [{name}]", path, lineno)
            current = name
            sections[name] = sections[name] or []
            continue
        if current is not None:
            sections[current].extend(line.split())
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ParseError("expected '<image_id> <image_path> <fixation_path> [gt_path]'",
                             path, lineno)
        if parts[0] in seen:
            raise ParseError(f"duplicate image_id {parts[0]!r}", path, lineno)
        seen.add(parts[0])
        gt = root / parts[3] if len(parts) == 4 else None
        entries.append(ManifestEntry(parts[0], root / parts[1], root / parts[2], gt))
    train, val = sections["train"], sections["val"]
    if train is None and val is None:
        train, val = default_split([e.image_id for e in entries], split_seed)
    else:
        train, val = train or [], val or []
    return DatasetManifest(entries, train, val, path)


def save_manifest(path, manifest):
    path = Path(path)
    root = path.parent

    def rel(p):
        p = Path(p)
        try:
            return p.relative_to(root).as_posix()
        except ValueError:
            return p.as_posix()

    lines = []
    for e in manifest.entries:
        parts = [e.image_id, rel(e.image_path), rel(e.fixation_path)]
        if e.gt_path is not None:
            parts.append(rel(e.gt_path))
        lines.append(" ".join(parts))
    lines.append("[train]")
    lines.extend(manifest.train)
    lines.append("[val]")
    lines.extend(manifest.val)
    path.write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class Sample:
    image_id: str
    image: np.ndarray
    fixations: FixationSet
    gt: np.ndarray


def load_sample(entry, width=None, height=None, gt_sigma=None):
    """Load one manifest entry; builds the gt map when none is stored."""
    image = load_image(entry.image_path)
    fix = load_fixations(entry.fixation_path, entry.image_id)
    h = height or image.shape[0]
    w = width or image.shape[1]
    if entry.gt_path is not None:
        gt = as_raster(load_image(entry.gt_path), nonneg=True, name="gt map")
        if gt.shape != (h, w):
            raise ValidationError(f"gt map {entry.gt_path} is {gt.shape}, expected {(h, w)}")
        gt = normalize_sum(gt)
    else:
        gt = make_gt_map(fix, w, h, gt_sigma)
    return Sample(entry.image_id, image, fix, gt)


def to_eval_sample(sample):
    from .metrics import EvalSample

    h, w = sample.gt.shape
    return EvalSample(sample.image_id, sample.image, sample.gt,
                      fixation_pixels(sample.fixations, w, h))


# --- synthetic data ----------------------------------------------------------

def latitude_prior(phi, prior_sigma_phi):
    """Unnormalized equator prior exp(-phi^2 / (2 sigma^2)); 1 for infinite sigma."""
    phi = np.asarray(phi, dtype=np.float64)
    if math.isinf(prior_sigma_phi):
        return np.ones_like(phi)
    return np.exp(-(phi * phi) / (2.0 * prior_sigma_phi ** 2))


@dataclass
class SyntheticDataset:
    samples: list
    prior_sigma_phi: float
    width: int
    height: int
    seed: int
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)

    def prior_profile(self):
        """True per-row prior used to sample fixations."""
        _, phi = equirect_pixel_to_spherical(0, np.arange(self.height), self.width, self.height)
        return latitude_prior(phi, self.prior_sigma_phi)

    def split_samples(self, name):
        ids = set(self.train if name == "train" else self.val if name == "val" else
                  [s.image_id for s in self.samples])
        return [s for s in self.samples if s.image_id in ids]

    def save(self, directory):
        """Write images, fixations, gt maps, the true prior and a manifest."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for s in self.samples:
            img = directory / f"{s.image_id}.f32"
            fx = directory / f"{s.image_id}_fix.csv"
            gt = directory / f"{s.image_id}_gt.f32"
            save_map(img, s.image)
            save_fixations(fx, s.fixations)
            save_map(gt, s.gt)
            entries.append(ManifestEntry(s.image_id, img, fx, gt))
        manifest = DatasetManifest(entries, list(self.train), list(self.val),
                                   directory / "manifest.txt")
        save_manifest(manifest.path, manifest)
        np.savetxt(directory / "prior_profile.txt", self.prior_profile(), fmt="%.17g")
        return manifest


def _random_unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def synthetic_image(rng, width, height, n_blobs, size_range=(0.15, 0.45)):
    """Sum of Gaussian blobs in angular distance, centers uniform on the sphere."""
    dirs = pixel_directions(height, width)
    img = np.zeros((height, width))
    centers = _random_unit_vectors(rng, n_blobs)
    sizes = rng.uniform(*size_range, size=n_blobs)
    amps = rng.uniform(0.5, 1.0, size=n_blobs)
    for c, s, a in zip(centers, sizes, amps):
        ang = np.arccos(np.clip(dirs @ c, -1.0, 1.0))
        img += a * np.exp(-(ang * ang) / (2.0 * s * s))
    return img


def generate_synthetic(n_images, width, height, prior_sigma_phi, n_blobs, n_fixations, rng_seed,
                       gt_sigma=None, background=0.05, n_observers=N_OBSERVERS,
                       train_fraction=0.8):
    """Seeded synthetic panoramas with fixations drawn under a known latitude prior.

    Each image is a sum of random smooth blobs. Fixation pixels are drawn
    from normalize((background + image) * prior(phi)); ground truth follows
    ``make_gt_map``.
    """
    if n_images < 1:
        raise ValidationError("n_images must be >= 1")
    if not prior_sigma_phi > 0:
        raise ValidationError("prior_sigma_phi must be > 0")
    rng = np.random.default_rng(rng_seed)
    _, phi_rows = equirect_pixel_to_spherical(0, np.arange(height), width, height)
    prior = latitude_prior(phi_rows, prior_sigma_phi)[:, None]
    samples = []
    for i in range(n_images):
        image_id = f"syn{i:03d}"
        img = synthetic_image(rng, width, height, n_blobs)
        if img.max() > 0:
            img = img / img.max()
        density = ((background + img) * prior).ravel()
        density /= density.sum()
        idx = rng.choice(density.size, size=n_fixations, p=density)
        rows, cols = np.divmod(idx, width)
        theta, phi = equirect_pixel_to_spherical(cols, rows, width, height)
        fix = FixationSet(image_id, tuple((str(k % n_observers), float(t), float(p))
                                          for k, (t, p) in enumerate(zip(theta, phi))))
        gt = make_gt_map(fix, width, height, gt_sigma)
        samples.append(Sample(image_id, img, fix, gt))
    train, val = default_split([s.image_id for s in samples], rng_seed, train_fraction)
    return SyntheticDataset(samples, prior_sigma_phi, width, height, rng_seed, train, val)

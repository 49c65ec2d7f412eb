"""Landmark/appearance file formats, pair manifests, the synthetic kinship-pair
generator, and fold assignment.

File formats
------------
Landmark text file (``*.txt``)::

    m=68
    x1,y1
    ...

Landmark binary file (``*.npy``): a float64 (m, 2) array saved by numpy.

Appearance file::

    d=32
    0.123
    ...

Pair manifest (``manifest.csv``): header row, then one record per pair with
columns ``shape_a, shape_b, appearance_a, appearance_b, label, relation,
fold, family``. Paths are relative to the dataset root; label is
``kin``/``non-kin`` (``1``/``0`` also accepted); relation, fold and family may
be empty. A pair linking several families lists their ids separated by ``;``.
"""

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from kinshape import grassmann
from kinshape.appearance import as_vector
from kinshape.errors import ConfigError, DataError, DataFormatError, ShapeMismatchError

KIN, NON_KIN = 1, 0
LABEL_NAMES = {KIN: "kin", NON_KIN: "non-kin"}
RELATION_TAGS = ("F-S", "F-D", "M-S", "M-D", "synthetic")
MANIFEST_COLUMNS = ("shape_a", "shape_b", "appearance_a", "appearance_b", "label", "relation", "fold", "family")


@dataclass(frozen=True)
class PairSample:
    shape_a: np.ndarray
    shape_b: np.ndarray
    appearance_a: np.ndarray
    appearance_b: np.ndarray
    label: int
    relation: str = None
    fold: int = None
    families: tuple = ()
    names: tuple = ()  # file stems of the two individuals, used when writing datasets

    def __post_init__(self):
        if self.shape_a.shape != self.shape_b.shape:
            raise ShapeMismatchError(f"pair shapes differ: {self.shape_a.shape} vs {self.shape_b.shape}")
        if self.appearance_a.shape != self.appearance_b.shape:
            raise ShapeMismatchError(
                f"pair appearance dims differ: {self.appearance_a.shape} vs {self.appearance_b.shape}"
            )
        if self.label not in (KIN, NON_KIN):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if self.relation is not None and self.relation not in RELATION_TAGS:
            raise DataError(f"unknown relation tag {self.relation!r}")


# -- landmark and appearance files -------------------------------------------

def _read_header(lines, key, path):
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith(f"{key}="):
            raise DataFormatError(f"expected header '{key}=<count>'", path, lineno)
        try:
            count = int(line[len(key) + 1:])
        except ValueError:
            raise DataFormatError(f"bad count in header {line!r}", path, lineno) from None
        return count, lineno
    raise DataFormatError(f"empty file, expected header '{key}=<count>'", path)


def _parse_landmark_text(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    m, header_line = _read_header(lines, "m", path)
    rows = []
    for lineno, raw in enumerate(lines[header_line:], header_line + 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataFormatError(f"expected 'x,y', got {line!r}", path, lineno)
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataFormatError(f"non-numeric coordinate in {line!r}", path, lineno) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataFormatError(f"non-finite coordinate in {line!r}", path, lineno)
        rows.append((x, y))
    if len(rows) != m:
        raise DataFormatError(f"header says m={m} but file has {len(rows)} landmarks", path)
    return np.array(rows, dtype=np.float64).reshape(m, 2)


def load_landmarks(path, *, center=True):
    """Read a landmark shape from a ``.txt`` or ``.npy`` file and validate it.

    Raises :class:`DataFormatError` (with line number for text files) on parse
    failures and :class:`DegenerateShapeError` for collinear landmarks.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such landmark file")
    if path.suffix == ".npy":
        try:
            points = np.load(path, allow_pickle=False)
        except ValueError as exc:
            raise DataFormatError(f"unreadable .npy file: {exc}", path) from None
        if points.ndim != 2 or points.shape[1] != 2:
            raise DataFormatError(f"expected an (m, 2) array, got {points.shape}", path)
        points = points.astype(np.float64)
        if not np.all(np.isfinite(points)):
            raise DataFormatError("non-finite coordinates", path)
    else:
        points = _parse_landmark_text(path)
    grassmann.shape_to_projector(points, center=center)  # validates m >= 3 and rank 2
    return points


def save_landmarks(path, points):
    path = Path(path)
    points = np.asarray(points, dtype=np.float64)
    if path.suffix == ".npy":
        np.save(path, points, allow_pickle=False)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"m={points.shape[0]}\n")
        for x, y in points:
            fh.write(f"{float(x)!r},{float(y)!r}\n")


def load_appearance(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such appearance file")
    lines = path.read_text(encoding="utf-8").splitlines()
    d, header_line = _read_header(lines, "d", path)
    values = []
    for lineno, raw in enumerate(lines[header_line:], header_line + 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise DataFormatError(f"non-numeric value {line!r}", path, lineno) from None
    if len(values) != d:
        raise DataFormatError(f"header says d={d} but file has {len(values)} values", path)
    try:
        return as_vector(values, str(path))
    except ValueError as exc:
        raise DataFormatError(str(exc), path) from None


def save_appearance(path, values):
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"d={values.shape[0]}\n")
        for v in values:
            fh.write(f"{float(v)!r}\n")


# -- manifests ---------------------------------------------------------------

def _parse_label(text, path, lineno):
    t = text.strip().lower()
    if t in ("kin", "1"):
        return KIN
    if t in ("non-kin", "nonkin", "0"):
        return NON_KIN
    raise DataFormatError(f"bad label {text!r}", path, lineno)


def _parse_optional_int(text, what, path, lineno):
    text = (text or "").strip()
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        raise DataFormatError(f"bad {what} {text!r}", path, lineno) from None


def load_dataset(root, manifest="manifest.csv", *, center=True):
    """Load every pair listed in ``root/manifest``.

    Both appearance paths are required on every row; each referenced file is
    parsed once.
    """
    root = Path(root)
    path = root / manifest
    if not path.exists():
        raise DataError(f"{path}: no such manifest")
    shapes, apps = {}, {}

    def shape(rel):
        if rel not in shapes:
            shapes[rel] = load_landmarks(root / rel, center=center)
        return shapes[rel]

    def app(rel):
        if rel not in apps:
            apps[rel] = load_appearance(root / rel)
        return apps[rel]

    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataFormatError(f"manifest is missing columns {missing}", path, 1)
        for lineno, row in enumerate(reader, 2):
            if not row["appearance_a"] or not row["appearance_b"]:
                raise DataFormatError("both appearance paths are required", path, lineno)
            families = tuple(
                _parse_optional_int(part, "family", path, lineno)
                for part in (row["family"] or "").split(";") if part.strip()
            )
            relation = (row["relation"] or "").strip() or None
            try:
                samples.append(PairSample(
                    shape_a=shape(row["shape_a"]),
                    shape_b=shape(row["shape_b"]),
                    appearance_a=app(row["appearance_a"]),
                    appearance_b=app(row["appearance_b"]),
                    label=_parse_label(row["label"], path, lineno),
                    relation=relation,
                    fold=_parse_optional_int(row["fold"], "fold", path, lineno),
                    families=families,
                    names=(Path(row["shape_a"]).stem, Path(row["shape_b"]).stem),
                ))
            except (ShapeMismatchError, DataError) as exc:
                if isinstance(exc, DataFormatError):
                    raise
                raise DataFormatError(str(exc), path, lineno) from None
    if not samples:
        raise DataError(f"{path}: manifest lists no pairs")
    return samples


def write_dataset(root, samples, manifest="manifest.csv"):
    """Write samples as landmark/appearance files plus a manifest under ``root``.

    Each distinct individual name is written once; unnamed samples get
    generated names.
    """
    root = Path(root)
    (root / "landmarks").mkdir(parents=True, exist_ok=True)
    (root / "appearance").mkdir(parents=True, exist_ok=True)
    written = set()
    rows = []
    for idx, s in enumerate(samples):
        names = s.names or (f"pair{idx:05d}_a", f"pair{idx:05d}_b")
        rel_paths = []
        for name, pts, vec in ((names[0], s.shape_a, s.appearance_a), (names[1], s.shape_b, s.appearance_b)):
            lm = f"landmarks/{name}.txt"
            ap = f"appearance/{name}.txt"
            if name not in written:
                save_landmarks(root / lm, pts)
                save_appearance(root / ap, vec)
                written.add(name)
            rel_paths.append((lm, ap))
        rows.append({
            "shape_a": rel_paths[0][0],
            "shape_b": rel_paths[1][0],
            "appearance_a": rel_paths[0][1],
            "appearance_b": rel_paths[1][1],
            "label": LABEL_NAMES[s.label],
            "relation": s.relation or "",
            "fold": "" if s.fold is None else s.fold,
            "family": ";".join(str(f) for f in s.families),
        })
    with open(root / manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# -- synthetic generator -----------------------------------------------------

def default_template():
    """Stylised 68-point face in dlib landmark order, roughly in [-1, 1]^2."""
    ref = resources.files("kinshape") / "assets" / "template68.txt"
    with resources.as_file(ref) as path:
        return _parse_landmark_text(path)


@dataclass
class SynthConfig:
    """Synthetic kinship data.

    Each family has a parent (``template + family offset``) and a child
    (``parent + child noise``). Non-kin pairs put the parent next to a
    stranger drawn from the same population. Every face then gets its own
    random affine map (and translation, if ``translate`` > 0).
    """

    family_count: int = 400
    template: np.ndarray = field(default=None, repr=False)
    family_deformation_scale: float = 0.08
    child_noise_scale: float = 0.02
    max_rotation_deg: float = 30.0
    scale_range: tuple = (0.7, 1.3)
    max_shear: float = 0.3
    translate: float = 0.5
    appearance_dim: int = 32
    appearance_heritability: float = 0.5
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.template is None:
            self.template = default_template()
        self.template = np.asarray(self.template, dtype=np.float64)
        self.scale_range = tuple(float(s) for s in self.scale_range)
        if self.family_count < 1:
            raise ConfigError(f"family_count must be >= 1, got {self.family_count}")
        if self.family_deformation_scale < 0 or self.child_noise_scale < 0:
            raise ConfigError("deformation and noise scales must be non-negative")
        if len(self.scale_range) != 2 or not 0 < self.scale_range[0] <= self.scale_range[1]:
            raise ConfigError(f"scale_range must be 0 < lo <= hi, got {self.scale_range}")
        if self.max_rotation_deg < 0 or self.max_shear < 0 or self.translate < 0:
            raise ConfigError("affine ranges must be non-negative")
        if self.appearance_dim < 1:
            raise ConfigError(f"appearance_dim must be >= 1, got {self.appearance_dim}")
        if not 0.0 <= self.appearance_heritability <= 1.0:
            raise ConfigError(f"appearance_heritability must lie in [0, 1], got {self.appearance_heritability}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        try:
            grassmann.shape_to_projector(self.template)
        except ValueError as exc:
            raise ConfigError(f"invalid template: {exc}") from None

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("template")
        d["scale_range"] = list(self.scale_range)
        return d


def random_affine(rng, config):
    """Draw a 2x2 map and translation. Always consumes the same number of
    uniforms, so widening the ranges leaves every other draw unchanged."""
    u = rng.uniform(-1.0, 1.0, size=6)
    theta = np.deg2rad(config.max_rotation_deg) * u[0]
    lo, hi = config.scale_range
    sx = lo + (hi - lo) * 0.5 * (u[1] + 1.0)
    sy = lo + (hi - lo) * 0.5 * (u[2] + 1.0)
    shear = config.max_shear * u[3]
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    a = np.diag([sx, sy]) @ np.array([[1.0, shear], [0.0, 1.0]]) @ rot
    t = config.translate * u[4:6]
    return a, t


def generate_synthetic(config=None):
    """Balanced kin / non-kin pairs (one of each per family), folds assigned."""
    config = config or SynthConfig()
    rng = np.random.default_rng(config.seed)
    tmpl = config.template
    sf, sc = config.family_deformation_scale, config.child_noise_scale
    rho = config.appearance_heritability
    d = config.appearance_dim

    samples = []
    for fam in range(config.family_count):
        parent = tmpl + sf * rng.standard_normal(tmpl.shape)
        child = parent + sc * rng.standard_normal(tmpl.shape)
        stranger = tmpl + sf * rng.standard_normal(tmpl.shape) + sc * rng.standard_normal(tmpl.shape)
        app_parent = rng.standard_normal(d)
        app_child = rho * app_parent + np.sqrt(1.0 - rho ** 2) * rng.standard_normal(d)
        app_stranger = rng.standard_normal(d)
        faces = []
        for shape in (parent, child, stranger):
            a, t = random_affine(rng, config)
            faces.append(shape @ a + t)
        parent, child, stranger = faces
        tag = f"fam{fam:04d}"
        samples.append(PairSample(
            parent, child, app_parent, app_child, KIN, "synthetic",
            families=(fam,), names=(f"{tag}_parent", f"{tag}_child"),
        ))
        samples.append(PairSample(
            parent, stranger, app_parent, app_stranger, NON_KIN, "synthetic",
            families=(fam,), names=(f"{tag}_parent", f"{tag}_stranger"),
        ))
    return assign_folds(samples, config.folds, config.seed)


# -- folds -------------------------------------------------------------------

def _groups(samples):
    """Union samples that share a family id; unlabelled samples stand alone."""
    parent = list(range(len(samples)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for i, s in enumerate(samples):
        for fam in s.families:
            if fam in owner:
                parent[find(i)] = find(owner[fam])
            else:
                owner[fam] = i
    groups = {}
    for i in range(len(samples)):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def assign_folds(samples, k, seed=0):
    """Return copies of ``samples`` with ``fold`` set to a value in ``[0, k)``.

    Samples sharing a family always land in the same fold. Within that
    constraint groups are dealt greedily to the smallest fold, kin-heavy
    groups first, which keeps fold sizes and per-fold class counts within one
    sample of each other whenever groups are singletons or equal-sized
    kin/non-kin units.
    """
    if k < 2:
        raise ConfigError(f"need k >= 2 folds, got {k}")
    if len(samples) < k:
        raise DataError(f"cannot split {len(samples)} samples into {k} folds")
    groups = _groups(samples)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(groups))
    groups = [groups[i] for i in order]
    kin_frac = [np.mean([samples[i].label for i in g]) for g in groups]
    ranked = sorted(range(len(groups)), key=lambda g: (-len(groups[g]), -kin_frac[g]))
    if len(groups) < k:
        raise DataError(f"only {len(groups)} family groups; cannot fill {k} folds")

    sizes = np.zeros(k, dtype=int)
    kin = np.zeros(k, dtype=int)
    non = np.zeros(k, dtype=int)
    fold_of = [None] * len(samples)
    for g in ranked:
        members = groups[g]
        n_kin = sum(samples[i].label for i in members)
        class_count = kin if n_kin * 2 >= len(members) else non
        fold = min(range(k), key=lambda f: (sizes[f], class_count[f], f))
        sizes[fold] += len(members)
        kin[fold] += n_kin
        non[fold] += len(members) - n_kin
        for i in members:
            fold_of[i] = fold
    return [dataclasses.replace(s, fold=int(f)) for s, f in zip(samples, fold_of)]


def shuffle_labels(samples, seed):
    """Randomly permute labels across samples (null-distribution control)."""
    rng = np.random.default_rng(seed)
    labels = [s.label for s in samples]
    perm = rng.permutation(len(labels))
    return [dataclasses.replace(s, label=int(labels[p])) for s, p in zip(samples, perm)]

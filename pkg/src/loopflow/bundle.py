"""Run configuration, verification reports and on-disk bundles.

A bundle is a directory holding a deterministic ``manifest.json``, a
``run_info.json`` with the wall-clock timestamp, CSV grids, optional OBJ
meshes and binary ``.npy`` blocks for state and frame grids.
"""
import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChartSingularity
from .lax_flow import StateGrid

FORMAT_VERSION = 1
CHARTS = {"z3": (0, 1, 2), "z1": (1, 2, 0), "z2": (0, 2, 1)}


def package_version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # pragma: no cover - running from a source tree
        return "0+unknown"


@dataclass
class RunConfig:
    """Parameters of one command; ``seed`` is recorded in every manifest."""

    command: str
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name, tol in self.tolerances.items():
            if not tol > 0:
                raise ValueError(f"tolerance {name} must be positive")

    def to_json(self):
        return asdict(self)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    provenance: str


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    def add(self, name, value, threshold, provenance, relation="<"):
        value = float(value)
        ok = value < threshold if relation == "<" else value == threshold
        self.checks.append(Check(name, value, float(threshold), bool(ok), provenance))
        return ok

    def require(self, name, ok, provenance):
        """Record a boolean check."""
        self.checks.append(Check(name, float(bool(ok)), 1.0, bool(ok), provenance))
        return ok

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_json(self):
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}

    def lines(self):
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            yield f"{flag} {c.name}: {c.value:.3e} (threshold {c.threshold:.1e}) [{c.provenance}]"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "numerator") and hasattr(obj, "denominator") and not isinstance(obj, int):
        return str(obj)
    return obj


def write_json(path, obj):
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_manifest(out_dir, kind, config, report=None, extra=None):
    """Deterministic manifest plus a separate run_info with the timestamp."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT_VERSION,
        "kind": kind,
        "config": config.to_json(),
        "seed": config.seed,
        "versions": {"loopflow": package_version(), "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    if report is not None:
        manifest["checks"] = report.to_json()
    if extra:
        manifest.update(extra)
    write_json(out / "manifest.json", manifest)
    write_json(out / "run_info.json", {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")})
    return manifest


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, columns):
    """Columns of equal length; floats written with ``repr`` (shortest round trip)."""
    names = list(columns)
    data = [np.asarray(columns[n]).ravel() for n in names]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    cols = np.array(body, dtype=float).reshape(len(body), len(names))
    return {n: cols[:, i] for i, n in enumerate(names)}


IMMERSION_COLUMNS = ["x", "y", "re_u1", "im_u1", "re_u2", "im_u2", "re_u3", "im_u3",
                     "beta", "rho"]


def immersion_columns(imm):
    X, Y = np.meshgrid(imm.xs, imm.ys, indexing="ij")
    cols = {"x": X, "y": Y}
    for k in range(3):
        cols[f"re_u{k + 1}"] = imm.u_hat[..., k].real
        cols[f"im_u{k + 1}"] = imm.u_hat[..., k].imag
    cols["beta"] = imm.beta
    cols["rho"] = imm.rho
    return cols


def immersion_from_columns(cols, shape):
    """Grids ``(u_hat, beta, rho)`` from the columns of an immersion CSV."""
    u = np.stack([cols[f"re_u{k}"] + 1j * cols[f"im_u{k}"] for k in (1, 2, 3)], axis=-1)
    return u.reshape(shape + (3,)), cols["beta"].reshape(shape), cols["rho"].reshape(shape)


# ---------------------------------------------------------------------------
# OBJ


def chart_coordinates(u, chart="z3", tol=1e-6):
    """Affine chart ``(z_i / z_k, z_j / z_k)`` of points of projective space."""
    i, j, k = CHARTS[chart]
    den = u[..., k]
    if np.abs(den).min() < tol:
        raise ChartSingularity(f"|{chart}| < {tol:g} somewhere; choose another chart")
    return u[..., i] / den, u[..., j] / den


def write_obj(path, u, chart="z3"):
    """Grid mesh of the image in the chart, mapped to (Re w1, Im w1, Re w2).

    ``Im w2`` goes to a sidecar CSV next to the mesh. Each grid quad is split
    into two triangles. Returns ``(n_vertices, n_faces)``.
    """
    w1, w2 = chart_coordinates(u, chart)
    nx, ny = u.shape[:2]
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# chart {chart}: vertices (Re w1, Im w1, Re w2)\n")
        for a, b, c in zip(w1.real.ravel(), w1.imag.ravel(), w2.real.ravel()):
            fh.write(f"v {float(a)!r} {float(b)!r} {float(c)!r}\n")
        idx = np.arange(nx * ny).reshape(nx, ny) + 1
        nf = 0
        for i in range(nx - 1):
            for j in range(ny - 1):
                a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
                fh.write(f"f {a} {b} {c}\nf {a} {c} {d}\n")
                nf += 2
    write_csv(path.with_name(path.stem + "_im_w2.csv"), {"im_w2": w2.imag})
    return nx * ny, nf


def read_obj_counts(path):
    nv = nf = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            nv += line.startswith("v ")
            nf += line.startswith("f ")
    return nv, nf


# ---------------------------------------------------------------------------
# binary blocks


def save_state_grid(out_dir, grid):
    np.save(Path(out_dir) / "state.npy", grid.coeffs)
    return {"state": {"file": "state.npy", "p": grid.p, "hx": grid.hx, "hy": grid.hy,
                      "shape": list(grid.coeffs.shape), "order": grid.order,
                      "max_leak": grid.max_leak}}


def load_state_grid(bundle_dir):
    meta = read_json(Path(bundle_dir) / "manifest.json")["state"]
    coeffs = np.load(Path(bundle_dir) / meta["file"])
    return StateGrid(meta["p"], coeffs, meta["hx"], meta["hy"], meta["max_leak"], meta["order"])


def save_frames(out_dir, j, frames):
    name = f"frames_{j:03d}.npy"
    np.save(Path(out_dir) / name, frames)
    return name


def load_frames(bundle_dir, name, mmap=True):
    return np.load(Path(bundle_dir) / name, mmap_mode="r" if mmap else None)


def export_bundle(out_dir, immersion=None, formats=("csv",), chart="z3"):
    """Write the immersion of a bundle as CSV and/or OBJ; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if immersion is not None and "csv" in formats:
        write_csv(out / "immersion.csv", immersion_columns(immersion))
        written.append("immersion.csv")
    if immersion is not None and "obj" in formats:
        write_obj(out / "surface.obj", immersion.u_hat, chart)
        written += ["surface.obj", "surface_im_w2.csv"]
    return written

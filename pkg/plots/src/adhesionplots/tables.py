"""Schema-checked loading of adhesionlab study directories.

The harness contract is frozen here as module constants; any drift between
an input file's header and the expected columns is a hard ``SchemaError``
naming the offending column (no silent coercion).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

STUDY_COLUMNS = ("n", "seed", "t", "L1", "L2", "W1")
TRACE_COLUMNS = ("time", "entropy", "fisher", "l2sq", "energy_n",
                 "grad_energy_sq")


class SchemaError(ValueError):
    """An input file does not match the harness output contract."""


def _check_header(path: Path, expected: tuple[str, ...], got: list[str]):
    for col in expected:
        if col not in got:
            raise SchemaError(f"{path.name}: missing column {col!r}")
    for col in got:
        if col not in expected:
            raise SchemaError(f"{path.name}: unexpected column {col!r}")
    if tuple(got) != expected:
        raise SchemaError(
            f"{path.name}: columns out of order {got!r} (want {expected!r})")


def _load_csv(path: Path, expected: tuple[str, ...]) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise SchemaError(f"{path.name}: empty file")
        _check_header(path, expected, header.split(","))
        body = fh.read()
    if not body.strip():
        return np.empty((0, len(expected)))
    return np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)


@dataclass
class StudyTable:
    """Long-format distance table: one row per (n, seed, record time)."""

    n: np.ndarray
    seed: np.ndarray
    t: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    w1: np.ndarray

    @classmethod
    def from_csv(cls, path) -> "StudyTable":
        data = _load_csv(Path(path), STUDY_COLUMNS)
        return cls(n=data[:, 0].astype(int), seed=data[:, 1].astype(int),
                   t=data[:, 2], l1=data[:, 3], l2=data[:, 4], w1=data[:, 5])

    def __len__(self) -> int:
        return len(self.n)

    def mean_final(self, metric: str = "l2") -> dict[int, float]:
        """Ensemble mean of a distance column at the last record time."""
        if not len(self):
            return {}
        vals = getattr(self, metric)
        t_end = self.t.max()
        out = {}
        for n in sorted(set(self.n.tolist())):
            sel = (self.n == n) & (np.abs(self.t - t_end) < 1e-12)
            out[int(n)] = float(vals[sel].mean())
        return out


@dataclass
class RunTrace:
    """Per-run diagnostic series (one column per tracked functional)."""

    time: np.ndarray
    entropy: np.ndarray
    fisher: np.ndarray
    l2sq: np.ndarray
    energy_n: np.ndarray
    grad_energy_sq: np.ndarray

    @classmethod
    def from_csv(cls, path) -> "RunTrace":
        data = _load_csv(Path(path), TRACE_COLUMNS)
        return cls(*(data[:, j] for j in range(len(TRACE_COLUMNS))))


@dataclass
class FieldProfile:
    """A density snapshot: node coordinates plus one value column."""

    coords: np.ndarray        # (m^d, d)
    values: np.ndarray        # (m^d,)

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def m(self) -> int:
        return round(len(self.values) ** (1.0 / self.d))

    @classmethod
    def from_csv(cls, path) -> "FieldProfile":
        path = Path(path)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if header[-1] != "value" or \
                header[:-1] != [f"x{j}" for j in range(len(header) - 1)]:
            expected = tuple(f"x{j}" for j in range(max(1, len(header) - 1))
                             ) + ("value",)
            _check_header(path, expected, header)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(coords=data[:, :-1], values=data[:, -1])


class StudyDir:
    """A harness output directory: manifest plus the files it points at."""

    def __init__(self, root):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.is_file():
            raise SchemaError(f"{self.root}: no harness manifest found")
        with open(manifest_path) as fh:
            self.manifest = json.load(fh)
        for key in ("runs", "record_times", "ns", "config"):
            if key not in self.manifest:
                raise SchemaError(f"manifest.json: missing key {key!r}")

    @property
    def runs(self) -> list[dict]:
        return self.manifest["runs"]

    @property
    def record_times(self) -> list[float]:
        return [float(t) for t in self.manifest["record_times"]]

    def study_table(self) -> StudyTable:
        return StudyTable.from_csv(self.root / "study.csv")

    def run_trace(self, run: dict) -> RunTrace:
        return RunTrace.from_csv(self.root / run["dir"] / "diagnostics.csv")

    def run_snapshots(self, run: dict) -> list[FieldProfile]:
        base = self.root / run["dir"]
        return [FieldProfile.from_csv(base / f"snapshot_t{k}.csv")
                for k in range(len(self.record_times))]

    def reference_profiles(self, n: int) -> list[FieldProfile]:
        base = self.root / self.manifest["reference_dirs"][str(n)]
        return [FieldProfile.from_csv(base / f"t{k}.csv")
                for k in range(len(self.record_times))]

    def dissipation_meta(self, n: int) -> dict:
        """Constants needed for the entropy-allowance band, if present."""
        model = self.manifest.get("model_constants", {})
        kernel = self.manifest.get("kernel", {}).get(str(n), {})
        cfg = self.manifest["config"]
        if "lambda" not in model or "grad_bound_c" not in kernel:
            return {}
        return {"lam": float(model["lambda"]),
                "grad_c": float(kernel["grad_bound_c"]),
                "beta": float(kernel["beta"]), "d": int(cfg["d"]),
                "n": int(n)}

import csv
import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pydantic
import scipy
from pydantic import BaseModel, Field

import mfmusic
from mfmusic.config import Config
from mfmusic.exceptions import DimensionMismatch
from mfmusic.models import FarFieldTensor, FrequencyGrid, ImagingGrid
from mfmusic.services.imaging_service import Functional, IndicatorField, Peak, PeakSet
from mfmusic.services.spectral_service import SpectralDecomposition

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT = f".{Config.SIGNIFICANT_DIGITS}g"


def fmt(value: float) -> str:
    return format(float(value), FLOAT)


def write_json_atomic(path: PathLike, payload: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


class RunManifest(BaseModel):
    """Reproducibility record of one CLI run"""
    command: str
    config_path: Optional[str] = None
    config_hash: Optional[str] = None
    rng_algorithm: str = Config.RNG_ALGORITHM
    seed: Optional[int] = None
    flags: Dict[str, Any] = Field(default_factory=dict)
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: Optional[str] = None
    versions: Dict[str, str] = Field(default_factory=lambda: {
        "mfmusic": mfmusic.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    })
    outputs: Dict[str, str] = Field(default_factory=dict)
    m_tilde: Optional[List[int]] = None
    l_tilde: Optional[int] = None
    M: Optional[int] = None
    model_order_trajectory: Optional[List[int]] = None
    stationary: Optional[bool] = None
    singular_values: Optional[List[List[float]]] = None
    peak_count: Optional[int] = None

    def finish(self) -> "RunManifest":
        return self.model_copy(update={"finished_at": datetime.now(timezone.utc).isoformat()})


class ExportService:
    def __init__(self):
        self.float_format = FLOAT

    # Far field tensor

    def write_tensor(self, tensor: FarFieldTensor, grid: FrequencyGrid, path: PathLike) -> Tuple[Path, Path]:
        """CSV rows j,n,k,re,im (1-based) plus a JSON sidecar with the tensor metadata"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        k = grid.wavenumbers
        if tensor.values.shape[1] != k.size:
            raise DimensionMismatch(f"tensor has {tensor.values.shape[1]} columns, grid has {k.size}")
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["j", "n", "k", "re", "im"])
            for j, row in enumerate(tensor.values, start=1):
                for n, value in enumerate(row, start=1):
                    w.writerow([j, n, fmt(k[n - 1]), fmt(value.real), fmt(value.imag)])
        sidecar = self.sidecar_path(path)
        write_json_atomic(sidecar, tensor.model_dump(exclude={"values"}, mode="json"))
        logger.info(f"Wrote far field tensor {tensor.values.shape} to {path}")
        return path, sidecar

    def sidecar_path(self, path: PathLike) -> Path:
        path = Path(path)
        return path.with_name(path.stem + ".meta.json")

    def read_tensor(self, path: PathLike) -> FarFieldTensor:
        path = Path(path)
        entries = {}
        with path.open(newline="", encoding="utf-8") as f:
            for record in csv.DictReader(f):
                entries[(int(record["j"]), int(record["n"]))] = complex(float(record["re"]), float(record["im"]))
        if not entries:
            raise DimensionMismatch(f"{path} holds no tensor entries")
        J = max(j for j, _ in entries)
        columns = max(n for _, n in entries)
        if len(entries) != J * columns:
            raise DimensionMismatch(f"{path} holds {len(entries)} entries, expected {J} x {columns}")
        values = np.empty((J, columns), dtype=complex)
        for (j, n), value in entries.items():
            values[j - 1, n - 1] = value

        metadata: Dict[str, Any] = {"geometry_fingerprint": ""}
        sidecar = self.sidecar_path(path)
        if sidecar.exists():
            metadata = json.loads(sidecar.read_text(encoding="utf-8"))
        else:
            logger.warning(f"No metadata sidecar next to {path}")
        return FarFieldTensor(values=values, **metadata)

    # Indicator fields

    def write_field_csv(self, field: IndicatorField, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = ["x", "y", "z"][:field.grid.dimension]
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(names + ["value"])
            for node, value in zip(field.grid.nodes(), field.values.ravel()):
                w.writerow([fmt(c) for c in node] + [fmt(value)])
        return path

    def read_field_csv(self, path: PathLike, grid: ImagingGrid,
                       functional: Functional = Functional.I1, m_tilde_used: int = 1) -> IndicatorField:
        with Path(path).open(newline="", encoding="utf-8") as f:
            values = np.array([float(record["value"]) for record in csv.DictReader(f)])
        if values.size != grid.node_count:
            raise DimensionMismatch(f"{path} holds {values.size} values for {grid.node_count} grid nodes")
        return IndicatorField(grid=grid, values=values.reshape(grid.shape), functional=functional,
                              m_tilde_used=m_tilde_used)

    def write_field_vtk(self, field: IndicatorField, path: PathLike) -> Path:
        """Legacy ASCII STRUCTURED_POINTS, x varying fastest; 2-D fields get nz = 1"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        grid = field.grid
        pad = 3 - grid.dimension
        dims = list(grid.points) + [1] * pad
        origin = list(grid.lower) + [0.0] * pad
        spacing = list(grid.spacing) + [1.0] * pad
        values = field.values.ravel(order="F")

        lines = [
            "# vtk DataFile Version 3.0",
            f"mfmusic indicator {field.functional.value} m_tilde={field.m_tilde_used}",
            "ASCII",
            "DATASET STRUCTURED_POINTS",
            "DIMENSIONS " + " ".join(str(n) for n in dims),
            "ORIGIN " + " ".join(fmt(c) for c in origin),
            "SPACING " + " ".join(fmt(c) for c in spacing),
            f"POINT_DATA {values.size}",
            f"SCALARS {field.functional.value} double 1",
            "LOOKUP_TABLE default",
        ]
        lines.extend(fmt(v) for v in values)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def read_field_vtk(self, path: PathLike) -> IndicatorField:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        header = {}
        body_start = None
        for index, line in enumerate(lines):
            key, _, rest = line.partition(" ")
            if key in ("DIMENSIONS", "ORIGIN", "SPACING", "SCALARS"):
                header[key] = rest.split()
            elif key == "LOOKUP_TABLE":
                body_start = index + 1
                break
        if body_start is None or "DIMENSIONS" not in header:
            raise ValueError(f"{path} is not a STRUCTURED_POINTS file")

        dims = [int(n) for n in header["DIMENSIONS"]]
        origin = [float(c) for c in header["ORIGIN"]]
        spacing = [float(c) for c in header["SPACING"]]
        if dims[2] == 1:
            dims, origin, spacing = dims[:2], origin[:2], spacing[:2]
        values = np.array([float(v) for v in lines[body_start:] if v.strip()])
        grid = ImagingGrid(lower=tuple(origin),
                           upper=tuple(o + s * (n - 1) if n > 1 else o + s
                                       for o, s, n in zip(origin, spacing, dims)),
                           points=tuple(dims))
        return IndicatorField(grid=grid, values=values.reshape(grid.shape, order="F"),
                              functional=Functional(header["SCALARS"][0]), m_tilde_used=1)

    # Peaks, singular spectra, manifest

    def write_peaks(self, peaks: PeakSet, path: PathLike) -> Path:
        path = Path(path)
        payload = [{"position": [float(fmt(c)) for c in p.position], "value": float(fmt(p.value))}
                   for p in peaks.peaks]
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path

    def read_peaks(self, path: PathLike, threshold_fraction: float = Config.PEAK_THRESHOLD,
                   min_separation: float = Config.PEAK_SEPARATION) -> PeakSet:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        peaks = tuple(Peak(position=tuple(p["position"]), value=p["value"]) for p in payload)
        return PeakSet(peaks=peaks, threshold_fraction=threshold_fraction, min_separation=min_separation)

    def write_singular_values(self, decompositions: List[SpectralDecomposition], path: PathLike) -> Path:
        """CSV rows j,l,sigma (1-based)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["j", "l", "sigma"])
            for d in decompositions:
                for l, sigma in enumerate(d.singular_values, start=1):
                    w.writerow([d.direction_index + 1, l, fmt(sigma)])
        return path

    def read_singular_values(self, path: PathLike) -> List[np.ndarray]:
        spectra: Dict[int, Dict[int, float]] = {}
        with Path(path).open(newline="", encoding="utf-8") as f:
            for record in csv.DictReader(f):
                spectra.setdefault(int(record["j"]), {})[int(record["l"])] = float(record["sigma"])
        return [np.array([row[l] for l in sorted(row)]) for _, row in sorted(spectra.items())]

    def write_manifest(self, manifest: RunManifest, path: PathLike) -> Path:
        path = Path(path)
        write_json_atomic(path, manifest.model_dump(mode="json"))
        return path

    def read_manifest(self, path: PathLike) -> RunManifest:
        return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))


# Singleton instance
_export_service = None

def get_export_service() -> ExportService:
    """Get or create export service instance"""
    global _export_service
    if _export_service is None:
        _export_service = ExportService()
    return _export_service

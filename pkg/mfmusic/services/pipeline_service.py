"""simulate / reconstruct / pipeline / sv-dump as reusable service calls.

Each ``cmd_*`` method returns a result dict ``{"status", "message", "outputs", ...}``
and lets domain exceptions propagate; ``mfmusic.main`` maps them to exit codes.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from mfmusic.config import Config
from mfmusic.exceptions import DimensionMismatch, MissingModelOrder
from mfmusic.models import FarFieldTensor, NoiseMode, NoiseSpec, geometry_fingerprint
from mfmusic.services.experiment_service import Experiment, get_experiment_service
from mfmusic.services.export_service import RunManifest, get_export_service
from mfmusic.services.forward_service import RescaleVariant, get_forward_service
from mfmusic.services.imaging_service import (
    Functional,
    IndicatorField,
    ModelOrderEstimate,
    PeakSet,
    get_imaging_service,
)
from mfmusic.services.spectral_service import RankStrategy, SpectralDecomposition, get_spectral_service

logger = logging.getLogger(__name__)

TENSOR_FILE = "farfield.csv"
PEAKS_FILE = "peaks.json"
SPECTRA_FILE = "singular_values.csv"
MANIFEST_FILE = "manifest.json"


class SimulateOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: Optional[Literal["leading", "born"]] = None
    quad_order: Optional[int] = Field(default=None, ge=2)
    noise: Optional[float] = Field(default=None, ge=0.0, lt=1.0)
    noise_mode: Optional[NoiseMode] = None
    seed: Optional[int] = Field(default=None, ge=0, lt=2 ** 64)


class ReconstructOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    functional: Functional = Functional.I1
    mtilde: Union[int, Literal["auto", "gap"]] = "auto"
    M: Optional[int] = Field(default=None, ge=1)
    variant: RescaleVariant = RescaleVariant.EXTENDED
    grid_points: Optional[Tuple[int, ...]] = None
    out_format: Literal["csv", "vtk", "both"] = "both"
    threshold: float = Field(default=Config.PEAK_THRESHOLD, gt=0.0, lt=1.0)
    min_separation: float = Field(default=Config.PEAK_SEPARATION, gt=0.0)
    confirm_with_i2: bool = False


class Reconstruction(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    field: IndicatorField
    peaks: PeakSet
    decompositions: List[SpectralDecomposition]
    m_tilde: List[int]
    estimate: Optional[ModelOrderEstimate] = None


class PipelineService:
    def __init__(self):
        self.experiments = get_experiment_service()
        self.forward = get_forward_service()
        self.spectral = get_spectral_service()
        self.imaging = get_imaging_service()
        self.export = get_export_service()

    def load(self, config_path: Union[str, Path], require_scatterers: bool = True,
             grid_points: Optional[Tuple[int, ...]] = None) -> Experiment:
        config = self.experiments.load_config(config_path)
        experiment = self.experiments.build_experiment(config)
        if grid_points:
            d = experiment.geometry.dimension
            points = grid_points * d if len(grid_points) == 1 else grid_points
            if len(points) != d:
                raise DimensionMismatch(f"--grid gives {len(points)} axes for a {d}-D experiment")
            experiment = experiment.model_copy(update={"imaging_grid": experiment.imaging_grid.with_points(points)})
        self.experiments.ensure_valid(experiment.ensemble, experiment.geometry, experiment.grid,
                                      experiment.imaging_grid, require_scatterers=require_scatterers)
        return experiment

    # In-memory stages

    def simulate(self, experiment: Experiment, options: SimulateOptions = SimulateOptions()) -> FarFieldTensor:
        model = options.model or experiment.config.model
        if model == "born":
            tensor = self.forward.born_farfield(experiment.ensemble, experiment.geometry, experiment.grid,
                                                options.quad_order or experiment.config.quad_order)
        else:
            tensor = self.forward.leading_order_farfield(experiment.ensemble, experiment.geometry, experiment.grid)
        noise = NoiseSpec(
            level=experiment.noise.level if options.noise is None else options.noise,
            seed=experiment.noise.seed if options.seed is None else options.seed,
            mode=options.noise_mode or experiment.noise.mode,
        )
        return self.forward.add_noise(tensor, noise)

    def reconstruct(self, experiment: Experiment, tensor: FarFieldTensor,
                    options: ReconstructOptions = ReconstructOptions()) -> Reconstruction:
        geometry, grid, imaging_grid = experiment.geometry, experiment.grid, experiment.imaging_grid
        if not tensor.matches(geometry, grid):
            raise DimensionMismatch(f"tensor shape {tensor.shape} does not match J={geometry.J}, 2N={2 * grid.N}")
        if tensor.geometry_fingerprint and tensor.geometry_fingerprint != geometry_fingerprint(geometry, grid):
            logger.warning("Tensor was simulated for a different acquisition geometry or frequency grid")
        if options.functional == Functional.I2 and options.M is None and options.mtilde != "auto":
            raise MissingModelOrder("--functional=i2 needs --M or --mtilde=auto")

        rescaled = self.forward.rescale_data(tensor, grid, options.variant)
        decompositions = self.spectral.decompose_data(rescaled, grid, options.variant)

        estimate = None
        if options.mtilde == "auto":
            estimate = self.imaging.estimate_model_order(
                rescaled, grid, imaging_grid, geometry, threshold_fraction=options.threshold,
                min_separation=options.min_separation, variant=options.variant,
                confirm_with_i2=options.confirm_with_i2, decompositions=decompositions)
            projectors = self.spectral.projectors(decompositions, RankStrategy.fixed(estimate.l_tilde))
        elif options.mtilde == "gap":
            projectors = self.spectral.projectors(decompositions, RankStrategy.gap())
        else:
            projectors = self.spectral.projectors(decompositions, RankStrategy.fixed(options.mtilde))

        e = geometry.effective_directions()
        if options.functional == Functional.I2:
            M = options.M or estimate.m_estimate
            field = self.imaging.indicator_I2(imaging_grid, projectors, e, grid.k_min, M, geometry.dimension)
        else:
            field = self.imaging.indicator_I1(imaging_grid, projectors, e, grid.k_min)
        peaks = self.imaging.extract_peaks(field, options.threshold, options.min_separation)
        logger.info(f"{options.functional.value.upper()} on {imaging_grid.node_count} nodes: {peaks.count} peaks")
        return Reconstruction(field=field, peaks=peaks, decompositions=decompositions,
                              m_tilde=[p.m_tilde for p in projectors], estimate=estimate)

    # Commands

    def _write_reconstruction(self, result: Reconstruction, out_dir: Path, out_format: str) -> Dict[str, str]:
        stem = f"indicator_{result.field.functional.value}"
        outputs = {}
        if out_format in ("csv", "both"):
            outputs["field_csv"] = str(self.export.write_field_csv(result.field, out_dir / f"{stem}.csv"))
        if out_format in ("vtk", "both"):
            outputs["field_vtk"] = str(self.export.write_field_vtk(result.field, out_dir / f"{stem}.vtk"))
        outputs["peaks"] = str(self.export.write_peaks(result.peaks, out_dir / PEAKS_FILE))
        outputs["singular_values"] = str(self.export.write_singular_values(result.decompositions,
                                                                           out_dir / SPECTRA_FILE))
        return outputs

    def _record(self, manifest: RunManifest, result: Reconstruction, options: ReconstructOptions) -> RunManifest:
        update: Dict[str, Any] = {
            "m_tilde": result.m_tilde,
            "M": result.field.m_used,
            "singular_values": [d.singular_values.tolist() for d in result.decompositions],
            "peak_count": result.peaks.count,
        }
        if result.estimate is not None:
            update.update(l_tilde=result.estimate.l_tilde, model_order_trajectory=list(result.estimate.trajectory),
                          stationary=result.estimate.stationary)
            if options.functional == Functional.I1:
                update["M"] = result.estimate.m_estimate
        return manifest.model_copy(update=update)

    def _result(self, message: str, manifest: RunManifest, out_dir: Path, **extra) -> Dict[str, Any]:
        manifest = manifest.finish()
        manifest.outputs["manifest"] = str(out_dir / MANIFEST_FILE)
        self.export.write_manifest(manifest, out_dir / MANIFEST_FILE)
        return {"status": "success", "message": message, "outputs": dict(manifest.outputs), **extra}

    def cmd_simulate(self, config_path: Union[str, Path], out_dir: Union[str, Path],
                     options: SimulateOptions = SimulateOptions()) -> Dict[str, Any]:
        out_dir = Path(out_dir)
        experiment = self.load(config_path)
        tensor = self.simulate(experiment, options)
        manifest = RunManifest(command="simulate", config_path=str(config_path),
                               config_hash=experiment.config.config_hash(), seed=tensor.seed,
                               flags=options.model_dump(mode="json"))
        tensor_path, sidecar = self.export.write_tensor(tensor, experiment.grid, out_dir / TENSOR_FILE)
        manifest.outputs.update(tensor=str(tensor_path), tensor_metadata=str(sidecar))
        J, columns = tensor.shape
        return self._result(f"Simulated {J}x{columns} far field ({J * columns} observations)", manifest, out_dir)

    def cmd_reconstruct(self, tensor_path: Union[str, Path], config_path: Union[str, Path],
                        out_dir: Union[str, Path],
                        options: ReconstructOptions = ReconstructOptions()) -> Dict[str, Any]:
        out_dir = Path(out_dir)
        experiment = self.load(config_path, require_scatterers=False, grid_points=options.grid_points)
        tensor = self.export.read_tensor(tensor_path)
        result = self.reconstruct(experiment, tensor, options)
        manifest = RunManifest(command="reconstruct", config_path=str(config_path),
                               config_hash=experiment.config.config_hash(), seed=tensor.seed,
                               flags=options.model_dump(mode="json"))
        manifest.outputs.update(tensor=str(tensor_path), **self._write_reconstruction(result, out_dir,
                                                                                      options.out_format))
        manifest = self._record(manifest, result, options)
        return self._result(f"Reconstructed {result.peaks.count} peaks", manifest, out_dir,
                            peaks=[list(p.position) for p in result.peaks.peaks])

    def cmd_pipeline(self, config_path: Union[str, Path], out_dir: Union[str, Path],
                     simulate_options: SimulateOptions = SimulateOptions(),
                     reconstruct_options: ReconstructOptions = ReconstructOptions()) -> Dict[str, Any]:
        """simulate, write, re-read and reconstruct under one manifest"""
        out_dir = Path(out_dir)
        experiment = self.load(config_path, grid_points=reconstruct_options.grid_points)
        tensor = self.simulate(experiment, simulate_options)
        tensor_path, sidecar = self.export.write_tensor(tensor, experiment.grid, out_dir / TENSOR_FILE)
        result = self.reconstruct(experiment, self.export.read_tensor(tensor_path), reconstruct_options)

        flags = {"simulate": simulate_options.model_dump(mode="json"),
                 "reconstruct": reconstruct_options.model_dump(mode="json")}
        manifest = RunManifest(command="pipeline", config_path=str(config_path),
                               config_hash=experiment.config.config_hash(), seed=tensor.seed, flags=flags)
        manifest.outputs.update(tensor=str(tensor_path), tensor_metadata=str(sidecar),
                                **self._write_reconstruction(result, out_dir, reconstruct_options.out_format))
        manifest = self._record(manifest, result, reconstruct_options)
        return self._result(f"Pipeline finished with {result.peaks.count} peaks", manifest, out_dir,
                            peaks=[list(p.position) for p in result.peaks.peaks])

    def cmd_sv_dump(self, tensor_path: Union[str, Path], config_path: Union[str, Path],
                    out_dir: Union[str, Path],
                    variant: RescaleVariant = RescaleVariant.EXTENDED) -> Dict[str, Any]:
        out_dir = Path(out_dir)
        experiment = self.load(config_path, require_scatterers=False)
        tensor = self.export.read_tensor(tensor_path)
        if not tensor.matches(experiment.geometry, experiment.grid):
            raise DimensionMismatch(f"tensor shape {tensor.shape} does not match the configuration")
        rescaled = self.forward.rescale_data(tensor, experiment.grid, variant)
        decompositions = self.spectral.decompose_data(rescaled, experiment.grid, variant)
        gap = RankStrategy.gap()
        ranks = [self.spectral.essential_rank(d.singular_values, gap) for d in decompositions]
        manifest = RunManifest(command="sv-dump", config_path=str(config_path),
                               config_hash=experiment.config.config_hash(), seed=tensor.seed,
                               flags={"variant": variant.value}, m_tilde=ranks,
                               singular_values=[d.singular_values.tolist() for d in decompositions])
        manifest.outputs.update(tensor=str(tensor_path),
                                singular_values=str(self.export.write_singular_values(decompositions,
                                                                                      out_dir / SPECTRA_FILE)))
        return self._result(f"Gap ranks per direction: {ranks}", manifest, out_dir)


# Singleton instance
_pipeline_service = None

def get_pipeline_service() -> PipelineService:
    """Get or create pipeline service instance"""
    global _pipeline_service
    if _pipeline_service is None:
        _pipeline_service = PipelineService()
    return _pipeline_service

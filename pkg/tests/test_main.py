import json
from pathlib import Path

import numpy as np
import pytest

from mfmusic.main import build_parser, execute_command, main
from mfmusic.services.export_service import get_export_service


def arguments_for(argv):
    return vars(build_parser().parse_args(argv))


def run(argv):
    args = arguments_for(argv)
    return execute_command(args["command"], args)


def test_simulate_writes_tensor_and_manifest(plane_config_file, tmp_path):
    out = tmp_path / "sim"
    result = run(["simulate", str(plane_config_file()), "--out", str(out), "--noise", "0.1", "--seed", "7"])
    assert result.exit_code == 0, result.message
    assert "80 observations" in result.message
    manifest = get_export_service().read_manifest(out / "manifest.json")
    assert manifest.seed == 7
    assert manifest.flags["noise"] == 0.1
    for path in manifest.outputs.values():
        assert Path(path).exists()
    assert get_export_service().read_tensor(out / "farfield.csv").shape == (5, 16)


def test_simulate_is_deterministic(plane_config_file, tmp_path):
    config = str(plane_config_file())
    for name in ("a", "b"):
        assert run(["simulate", config, "--out", str(tmp_path / name), "--noise", "0"]).exit_code == 0
    assert (tmp_path / "a" / "farfield.csv").read_bytes() == (tmp_path / "b" / "farfield.csv").read_bytes()


def test_seeded_noise_is_reproducible(plane_config_file, tmp_path):
    config = str(plane_config_file())
    for name in ("a", "b"):
        run(["simulate", config, "--out", str(tmp_path / name), "--noise", "0.2", "--noise-mode", "entrywise",
             "--seed", "11"])
    assert (tmp_path / "a" / "farfield.csv").read_bytes() == (tmp_path / "b" / "farfield.csv").read_bytes()


def test_born_without_shapes_is_rejected(plane_config_file, tmp_path):
    result = run(["simulate", str(plane_config_file()), "--out", str(tmp_path), "--model", "born"])
    assert result.exit_code == 2
    assert "MissingShape" in result.message


def test_born_with_shapes(plane_config_file, tmp_path):
    scatterers = [{"position": [1.0, 1.0], "semiaxes": [0.2, 0.1], "q1": 0.5, "q2": 0.2}]
    config = plane_config_file(scatterers=scatterers, model="born", quad_order=8)
    result = run(["simulate", str(config), "--out", str(tmp_path)])
    assert result.exit_code == 0, result.message
    metadata = json.loads((tmp_path / "farfield.meta.json").read_text())
    assert metadata["model"] == "born"
    assert metadata["quad_order"] == 8


def test_invalid_config_lists_violations(plane_config_file, tmp_path):
    result = run(["simulate", str(plane_config_file(k_min=1.0, N=4)), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "k_min_too_large" in result.message
    assert "too_few_frequencies" in result.message


def test_malformed_config_is_a_validation_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"dimension": 4}')
    assert run(["simulate", str(path), "--out", str(tmp_path)]).exit_code == 2


def test_missing_config_is_an_io_error(tmp_path):
    assert run(["simulate", str(tmp_path / "nope.json"), "--out", str(tmp_path)]).exit_code == 3


def test_empty_ensemble_pipeline(plane_config_file, tmp_path):
    result = run(["pipeline", str(plane_config_file(scatterers=[])), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "no_scatterers" in result.message


def simulated(plane_config_file, tmp_path, **overrides):
    config = plane_config_file(**overrides)
    out = tmp_path / "sim"
    assert run(["simulate", str(config), "--out", str(out)]).exit_code == 0
    return config, out / "farfield.csv"


def test_reconstruct_i1_fixed_dimension(plane_config_file, tmp_path):
    config, tensor = simulated(plane_config_file, tmp_path)
    out = tmp_path / "rec"
    result = run(["reconstruct", str(tensor), str(config), "--out", str(out), "--functional", "i1",
                  "--mtilde", "5", "--threshold", "1e-4"])
    assert result.exit_code == 0, result.message
    assert sorted(map(tuple, np.round(result.peaks, 6))) == [(-2.0, 0.5), (0.5, -2.5), (1.0, 1.0)]
    for name in ("indicator_i1.csv", "indicator_i1.vtk", "peaks.json", "singular_values.csv", "manifest.json"):
        assert (out / name).exists()
    manifest = get_export_service().read_manifest(out / "manifest.json")
    assert manifest.m_tilde == [5] * 5
    assert len(manifest.singular_values) == 5
    assert manifest.peak_count == 3


def test_reconstruct_i2_without_model_order(plane_config_file, tmp_path):
    config, tensor = simulated(plane_config_file, tmp_path)
    result = run(["reconstruct", str(tensor), str(config), "--out", str(tmp_path / "rec"),
                  "--functional", "i2", "--mtilde", "5"])
    assert result.exit_code == 4


def test_reconstruct_i2_with_model_order(plane_config_file, tmp_path):
    config, tensor = simulated(plane_config_file, tmp_path)
    out = tmp_path / "rec"
    result = run(["reconstruct", str(tensor), str(config), "--out", str(out), "--functional", "i2",
                  "--M", "2", "--mtilde", "5", "--out-format", "vtk", "--threshold", "1e-4"])
    assert result.exit_code == 0, result.message
    assert (out / "indicator_i2.vtk").exists()
    assert not (out / "indicator_i2.csv").exists()
    found = set(map(tuple, np.round(result.peaks, 6).tolist()))
    assert {(1.0, 1.0), (-2.0, 0.5), (0.5, -2.5)} <= found


def test_reconstruct_auto_records_trajectory(plane_config_file, tmp_path):
    config, tensor = simulated(plane_config_file, tmp_path)
    out = tmp_path / "rec"
    result = run(["reconstruct", str(tensor), str(config), "--out", str(out), "--grid", "21",
                  "--out-format", "csv"])
    assert result.exit_code == 0, result.message
    manifest = get_export_service().read_manifest(out / "manifest.json")
    assert manifest.model_order_trajectory
    assert manifest.l_tilde is not None
    assert manifest.M == manifest.model_order_trajectory[manifest.l_tilde - 1]
    assert manifest.flags["grid_points"] == [21]


def test_reconstruct_with_mismatched_config(plane_config_file, tmp_path):
    _, tensor = simulated(plane_config_file, tmp_path)
    other = plane_config_file("other.json", N=9)
    result = run(["reconstruct", str(tensor), str(other), "--out", str(tmp_path / "rec"), "--mtilde", "5"])
    assert result.exit_code == 2


def test_reconstruct_with_wrong_grid_axes(plane_config_file, tmp_path):
    config, tensor = simulated(plane_config_file, tmp_path)
    result = run(["reconstruct", str(tensor), str(config), "--out", str(tmp_path / "rec"), "--grid", "5,5,5"])
    assert result.exit_code == 2


def test_gap_mode(plane_config_file, tmp_path):
    config, tensor = simulated(plane_config_file, tmp_path)
    out = tmp_path / "rec"
    result = run(["reconstruct", str(tensor), str(config), "--out", str(out), "--mtilde", "gap"])
    assert result.exit_code == 0, result.message
    assert get_export_service().read_manifest(out / "manifest.json").m_tilde == [5] * 5


def test_pipeline_is_reproducible(plane_config_file, tmp_path):
    config = str(plane_config_file(noise_level=0.05))
    outputs = []
    for name in ("a", "b"):
        result = run(["pipeline", config, "--out", str(tmp_path / name), "--mtilde", "5", "--grid", "21"])
        assert result.exit_code == 0, result.message
        outputs.append(result)
    for name in ("farfield.csv", "indicator_i1.csv", "singular_values.csv", "peaks.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert outputs[0].peaks == outputs[1].peaks


def test_sv_dump(plane_config_file, tmp_path):
    config, tensor = simulated(plane_config_file, tmp_path)
    out = tmp_path / "sv"
    result = run(["sv-dump", str(tensor), str(config), "--out", str(out)])
    assert result.exit_code == 0, result.message
    spectra = get_export_service().read_singular_values(out / "singular_values.csv")
    assert len(spectra) == 5
    assert all(len(s) == 6 for s in spectra)


def test_main_returns_exit_code(plane_config_file, tmp_path, capsys):
    code = main(["simulate", str(plane_config_file()), "--out", str(tmp_path)])
    assert code == 0
    assert "Simulated 5x16" in capsys.readouterr().out


def test_parser_rejects_bad_mtilde():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["reconstruct", "u.csv", "c.json", "--mtilde", "zero"])

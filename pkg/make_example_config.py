#!/usr/bin/env python3
"""
Example Configuration Helper
"""
import sys
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

from mfmusic.models import AcquisitionMode, NoiseMode
from mfmusic.presets import example_config
from mfmusic.services.experiment_service import get_experiment_service

# Load environment variables with override
load_dotenv(override=True)

def ask(prompt: str, default: str) -> str:
    answer = input(f"{prompt} [{default}]: ").strip()
    return answer or default

def main():
    print("🧭 Example Experiment Setup")
    print("="*40)

    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("configs")

    try:
        noise = float(ask("Noise level", "0.1"))
        noise_mode = NoiseMode(ask("Noise calibration (global/entrywise)", "entrywise"))
        seed = int(ask("Noise seed", "7"))
        points = int(ask("Grid points per axis", "41"))
    except ValueError as e:
        print(f"\n❌ Invalid answer: {e}")
        return 2

    service = get_experiment_service()
    for mode in AcquisitionMode:
        try:
            config = example_config(mode, noise, noise_mode, seed, points)
        except ValidationError as e:
            print(f"\n❌ Error: {e}")
            return 2

        experiment = service.build_experiment(config)
        report = service.validate_experiment(experiment.ensemble, experiment.geometry, experiment.grid,
                                             experiment.imaging_grid)
        status = "✅ valid" if report.is_valid else "❌ invalid"
        print(f"\n{mode.value}: {status}")
        for message in report.messages():
            print(f"  - {message}")
        for message in report.warnings:
            print(f"  ⚠️  {message}")

        path = out_dir / f"example_{mode.value}.json"
        out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
        print(f"📄 Wrote {path}")

    print("\n✨ Run: python -m mfmusic.main pipeline configs/example_fixed.json --mtilde=6")
    return 0

if __name__ == "__main__":
    raise SystemExit(main())

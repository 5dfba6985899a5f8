#!/usr/bin/env python3
"""
Write the desk-scale model zoo to disk as model.json files.

Usage:
    uv run ./scripts/export_zoo.py --out ./runs/zoo
    uv run ./scripts/export_zoo.py --out ./runs/zoo --only ising_4x4 faculty_pages
"""

import argparse
import hashlib
import sys
from pathlib import Path
from typing import Callable, Dict

# Add the src directory to the Python path to import lmh without installing
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from lmh.generators.chimera import ChimeraSpec, chimera
from lmh.generators.ising import IsingSpec, ising_grid
from lmh.generators.mln import load_program, mln_ground
from lmh.model import Model

DATA_DIR = Path(__file__).parent.parent / "data"

ZOO: Dict[str, Callable[[], Model]] = {
    "ising_2x2": lambda: ising_grid(IsingSpec(rows=2, cols=2, J=0.5, field=0.1)),
    "ising_3x3_zero_field": lambda: ising_grid(IsingSpec(rows=3, cols=3, J=0.4)),
    "ising_4x4": lambda: ising_grid(IsingSpec(rows=4, cols=4, J=0.5, field=0.1, field_noise=0.05, seed=7)),
    "ising_8x8_zero_field": lambda: ising_grid(IsingSpec(rows=8, cols=8, J=0.5)),
    "chimera_1x1": lambda: chimera(ChimeraSpec(rows=1, cols=1, intra_coupling=0.3, inter_coupling=0.3)),
    "chimera_2x2_noisy": lambda: chimera(
        ChimeraSpec(rows=2, cols=2, intra_coupling=0.4, inter_coupling=0.4, coupling_noise=0.05, seed=3)
    ),
    "faculty_pages": lambda: mln_ground(load_program(DATA_DIR / "mln" / "faculty_pages.mln")).model,
}


def export_model(name: str, model: Model, out_dir: Path) -> Path:
    """
    Serialize one model.

    Args:
        name: Zoo entry name, used as the sub-directory
        model: The model to write
        out_dir: Root output directory

    Returns:
        Path of the written model.json
    """
    target = out_dir / name / "model.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    text = model.model_dump_json(indent=2)
    target.write_text(text)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
    print(f"   {name}: {model.num_variables} variables, {len(model.potentials)} potentials (sha256 {digest})")
    return target


def main():
    """Main CLI entry point."""
    parser = argparse.ArgumentParser(
        description="Export the model zoo used by the test-suite",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--out", required=True, help="Output directory")
    parser.add_argument("--only", nargs="+", choices=sorted(ZOO), help="Export only these entries")
    args = parser.parse_args()

    try:
        out_dir = Path(args.out)
        names = args.only or sorted(ZOO)
        print(f"📋 Exporting {len(names)} model(s) to {out_dir}")
        for name in names:
            export_model(name, ZOO[name](), out_dir)
        print(f"✅ Zoo exported!")
    except Exception as e:
        print(f"❌ Error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()

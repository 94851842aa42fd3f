"""Regenerate tests/fixtures/golden. Run once after criteria 1-4 pass; the outputs are then frozen.

    python3 tests/make_golden.py
"""

import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

from seetrack import container  # noqa: E402
from seetrack.cli import format_predictions, load_clips, main  # noqa: E402
from seetrack.events import VoxelGridConfig, encode_events  # noqa: E402
from seetrack.model import ModelSpec, chain_blocks, init_float_model, quantize_model  # noqa: E402
from synth import pupil_events  # noqa: E402

OUT = HERE / "fixtures" / "golden"
SEED = 20240601
SPEC = ModelSpec(3, 16, chain_blocks(16, ((1, 16, 1), (4, 24, 2), (4, 24, 1), (4, 32, 2))), 32, 64, 64)


def build(out: Path = OUT) -> None:
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    ev, centres = pupil_events(rng, 24, window_us=10_000, per_clip=150)
    (out / "events.bin").write_bytes(encode_events(ev))
    (out / "gt.csv").write_text(format_predictions(centres))

    voxel = {**VoxelGridConfig(64, 64, 3, "merged").to_dict(), "window_us": 10_000}
    fm = init_float_model(SPEC, rng, voxel)
    clips = load_clips(str(out / "events.bin"), fm)
    qm = quantize_model(fm, clips[:12])
    container.save(qm, out / "model.seew")
    code = main(["run", str(out / "events.bin"), str(out / "model.seew"), "-o", str(out / "expected.csv")])
    if code:
        raise SystemExit(code)


if __name__ == "__main__":
    build()
    print(f"wrote {OUT}")

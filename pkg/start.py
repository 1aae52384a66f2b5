#!/usr/bin/env python3
"""
occgen - occupancy ground-truth toolkit for parking-lot scenes

Pipeline stages exposed as subcommands:
- generate: ray-cast a synthetic SemanticKITTI-style sequence
- fuse: multi-frame densification into 256x256x32 semantic voxels
- downsample: 128x128x16 class-agnostic occupancy
- remap: rewrite point label ids through a remap table
- eval: IoU / precision / recall / mIoU against ground truth
- export: colored PLY mesh of a grid
"""
import sys

from src_occgen.cli import main

if __name__ == "__main__":
    sys.exit(main())

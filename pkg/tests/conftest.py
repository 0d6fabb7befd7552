"""Shared fixtures: a synthetic corpus builder and small array helpers."""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from occlumix import (
    BinaryMask,
    ImageBuffer,
    LabelMap,
    OcclusionDistribution,
    Palette,
    PoseKeypoints,
)
from occlumix.compose import save_occlusion_distribution
from occlumix.core import PartRegionMap
from occlumix.formats import (
    save_image,
    save_label_map,
    save_mask,
    save_palette,
    save_pose,
    save_region_map,
)

PALETTE_CLASSES = {
    "background": 0,
    "hair": 1,
    "face": 2,
    "upper-clothes": 3,
    "left-arm": 4,
    "right-arm": 5,
    "pants": 6,
}


def random_mask(rng, h, w, p=0.5):
    return BinaryMask((rng.random((h, w)) < p).astype(np.uint8))


def random_image(rng, h, w, channels=3):
    return ImageBuffer(rng.random((h, w, channels)))


def build_corpus(root: Path, n_entries: int, height: int = 48, width: int = 32,
                 seed: int = 42) -> Path:
    """Write a complete synthetic corpus under `root`, return the manifest path.

    Even-indexed entries get a flat cloth image (simple texture), odd-indexed
    a noisy one (complex), so classify fills both pools.
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    save_palette(root / "palette.json", Palette(PALETTE_CLASSES))

    entries = []
    for i in range(n_entries):
        eid = f"e{i:03d}"
        save_image(root / f"{eid}_person.png", random_image(rng, height, width))
        if i % 2 == 0:
            cloth = np.full((height, width, 3), 0.3 + 0.01 * (i % 40))
        else:
            cloth = rng.random((height, width, 3))
        save_image(root / f"{eid}_cloth.png", ImageBuffer(cloth))

        cmask = np.zeros((height, width), dtype=np.uint8)
        cmask[height // 6:height * 5 // 6, width // 5:width * 4 // 5] = 1
        save_mask(root / f"{eid}_cloth_mask.png", BinaryMask(cmask))

        labels = np.zeros((height, width), dtype=np.int32)
        labels[0:3, 10:22] = 1                                  # hair
        labels[3:8, 10:22] = 2                                  # face
        labels[8:height * 5 // 8, 8:width * 3 // 4] = 3          # upper-clothes
        labels[8:height * 5 // 8, 4:8] = 4                       # left-arm
        labels[8:height * 5 // 8, width * 3 // 4:width * 3 // 4 + 4] = 5
        labels[height * 5 // 8:height - 2, 8:width * 3 // 4] = 6    # pants
        save_label_map(root / f"{eid}_labels.png", LabelMap(labels))

        regions = np.zeros((height, width), dtype=np.int32)
        regions[3:8, 10:22] = 1
        regions[8:height * 5 // 8, 8:width * 3 // 4] = 5
        regions[8:height * 5 // 8, 4:8] = 9
        regions[height * 5 // 8:height - 2, 8:width * 3 // 4] = 12
        save_region_map(root / f"{eid}_regions.png", PartRegionMap(regions))

        joints = np.zeros((18, 3))
        joints[:, 0] = rng.uniform(4, width - 4, 18)
        joints[:, 1] = rng.uniform(4, height - 4, 18)
        joints[:, 2] = 1.0
        save_pose(root / f"{eid}_pose.json", PoseKeypoints(joints))

        entries.append({
            "id": eid,
            "person_image": f"{eid}_person.png",
            "cloth_image": f"{eid}_cloth.png",
            "cloth_mask": f"{eid}_cloth_mask.png",
            "label_map": f"{eid}_labels.png",
            "pose": f"{eid}_pose.json",
            "region_map": f"{eid}_regions.png",
        })

    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps({"entries": entries}, indent=2))
    save_occlusion_distribution(
        root / "dist.json", OcclusionDistribution({1: 1.0, 5: 2.0, 9: 1.0, 12: 0.5}))

    defects = root / "defects"
    defects.mkdir(exist_ok=True)
    for k in range(3):
        d = np.zeros((16, 16), dtype=np.uint8)
        d[4:12, 2 * k + 2:2 * k + 10] = 1
        save_mask(defects / f"blob{k}.png", BinaryMask(d))
    return manifest_path


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """A 6-entry corpus shared by read-only tests."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = build_corpus(root, 6)
    return root, manifest

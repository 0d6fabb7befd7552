"""The `occlumix` command line tool.

Subcommands wrap one library batch entry point each:

  classify    texture entropy + pools            (texture)
  augment     occlusion copy-paste synthesis     (compose)
  maskops     parsing-mask training pairs        (mask_algebra)
  warp        backward-warp an image by a flow   (flow)
  smoothness  second-order flow smoothness       (flow)
  loss        pixel / perceptual / combined loss (losses)
  fid         per-region Frechet distances       (fid)
  stats       corpus label statistics            (data)

Exit codes: 0 success, 1 input error (bad flags, malformed or missing
files), 2 numerical or degenerate-input error.  Nonzero exits print a
diagnostic to stderr.  Every stochastic subcommand takes --seed and re-runs
byte-identically for the same invocation; --threads never changes outputs,
only wall time.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .batch import run_batch
from .core import (
    DEFAULT_BODY_CLASSES,
    DEFAULT_CLOTH_CLASSES,
    MaskGroups,
)
from .compose import (
    entry_generator,
    load_occlusion_distribution,
    synthesize_batch,
)
from .data import (
    RunConfig,
    corpus_stats,
    load_manifest,
    load_region_sets,
    load_run_config,
    load_texture_pools,
    save_texture_pools,
)
from .errors import DegenerateInputError, InputValidationError, NumericalError
from .fid import region_fid
from .flow import (
    CharbonnierParams,
    second_order_smoothness,
    second_order_term_count,
    warp_by_flow,
)
from .formats import (
    load_feature_stack,
    load_flow,
    load_image,
    load_label_map,
    load_mask,
    load_palette,
    load_pose,
    save_image,
    save_mask,
)
from .losses import LossWeights, builtin_feature_stack, combined_loss, l1_loss, perceptual_loss
from .mask_algebra import build_spn_samples, place_defect_mask
from .texture import (
    GlcmParams,
    TextureClass,
    TexturePools,
    classify_texture,
    compute_glcm,
    glcm_entropy,
)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NUMERICAL_ERROR = 2

REPORT_FILENAME = "report.json"


@dataclass(frozen=True)
class CommandResult:
    """Outcome of one subcommand: exit code plus where the report went
    (None when it was printed to stdout or the command emits no report)."""

    exit_code: int
    report_path: str | None = None


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags by default, which would collide with the
    # numerical-error code; the contract maps usage problems to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _emit_report(obj, out: str | None) -> str | None:
    text = _dump_json(obj)
    if out:
        Path(out).write_text(text)
        return out
    sys.stdout.write(text)
    return None


def _emit_lines(rows, out: str | None) -> str | None:
    text = "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)
    if out:
        Path(out).write_text(text)
        return out
    sys.stdout.write(text)
    return None


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config)
    return RunConfig()


def _pick(flag_value, config_value):
    return config_value if flag_value is None else flag_value


def _check_seed(seed: int) -> int:
    if seed < 0:
        raise InputValidationError(f"--seed must be >= 0, got {seed}")
    return seed


def _split_classes(raw: str | None, default: tuple[str, ...]) -> tuple[str, ...]:
    if raw is None:
        return default
    names = tuple(n.strip() for n in raw.split(",") if n.strip())
    if not names:
        raise InputValidationError("class list is empty")
    return names


def _out_dir(path_str: str) -> Path:
    path = Path(path_str)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------- classify

def cmd_classify(args) -> CommandResult:
    config = _load_config(args)
    _check_seed(_pick(args.seed, config.seed))  # accepted for uniformity; classification is deterministic
    levels = _pick(args.levels, config.glcm_levels)
    threshold = _pick(args.threshold, config.entropy_threshold)
    params = GlcmParams(levels=levels)

    manifest = load_manifest(args.manifest)
    manifest.require_fields(("cloth_image",))

    def worker(entry):
        try:
            image = load_image(manifest.resolve_required(entry, "cloth_image"))
            mask = None
            mask_path = manifest.resolve(entry, "cloth_mask")
            if mask_path is not None and mask_path.is_file():
                mask = load_mask(mask_path)
            glcm = compute_glcm(image, params, mask)
            entropy = glcm_entropy(glcm)
            label = classify_texture(entropy, threshold)
            return {
                "id": entry.id,
                "entropy": entropy,
                "label": label.value,
                "masked": mask is not None,
            }
        except (InputValidationError, DegenerateInputError) as err:
            return {"id": entry.id, "error": str(err)}

    rows = run_batch(manifest.entries, worker, args.threads)
    report_path = _emit_lines(rows, args.out)
    if args.pools:
        labelled = {row["id"]: TextureClass(row["label"]) for row in rows if "label" in row}
        save_texture_pools(args.pools, TexturePools.from_labels(labelled))
    return CommandResult(EXIT_OK, report_path)


# ----------------------------------------------------------------- augment

def cmd_augment(args) -> CommandResult:
    config = _load_config(args)
    seed = _check_seed(_pick(args.seed, config.seed))
    mix_weight = _pick(args.mix_weight, config.mix_weight)
    min_pixels = _pick(args.min_pixels, config.min_pixels)
    attempts = _pick(args.attempts, config.attempts)
    align = False if args.no_align else config.align

    dist_path = args.dist or config.occlusion_dist
    if dist_path is None:
        raise InputValidationError("--dist is required (or set occlusion_dist in --config)")

    manifest = load_manifest(args.manifest)
    manifest.require_fields(("person_image", "region_map"))
    pools = load_texture_pools(args.pools)
    dist = load_occlusion_distribution(dist_path)

    cloth_ids = None
    if args.palette:
        palette = load_palette(args.palette)
        names = _split_classes(args.cloth_classes, DEFAULT_CLOTH_CLASSES)
        cloth_ids = frozenset(palette.ids_for(names))

    out_dir = _out_dir(args.out)
    rows = synthesize_batch(
        manifest, pools, dist, mix_weight, seed,
        out_dir=out_dir, cloth_ids=cloth_ids, align=align,
        min_pixels=min_pixels, attempts=attempts, threads=args.threads,
    )
    report = {
        "command": "augment",
        "seed": seed,
        "mix_weight": mix_weight,
        "align": align,
        "min_pixels": min_pixels,
        "attempts": attempts,
        "ok": sum(1 for r in rows if r["status"] == "ok"),
        "skipped": sum(1 for r in rows if r["status"] != "ok"),
        "rows": rows,
    }
    report_path = out_dir / REPORT_FILENAME
    report_path.write_text(_dump_json(report))
    return CommandResult(EXIT_OK, str(report_path))


# ----------------------------------------------------------------- maskops

def cmd_maskops(args) -> CommandResult:
    config = _load_config(args)
    seed = _check_seed(_pick(args.seed, config.seed))

    manifest = load_manifest(args.manifest)
    manifest.require_fields(("label_map", "cloth_mask", "pose"))
    palette = load_palette(args.palette)
    groups = MaskGroups.from_palette(
        palette,
        _split_classes(args.cloth_classes, DEFAULT_CLOTH_CLASSES),
        _split_classes(args.body_classes, DEFAULT_BODY_CLASSES),
    )
    defect_files = sorted(Path(args.defects_dir).glob("*.png"))
    if not defect_files:
        raise InputValidationError(f"no .png defect masks in {args.defects_dir}")
    out_dir = _out_dir(args.out)

    def worker(item):
        index, entry = item
        rng = entry_generator(seed, index)
        try:
            labels = load_label_map(manifest.resolve_required(entry, "label_map"))
            tryon_cloth = load_mask(manifest.resolve_required(entry, "cloth_mask"))
            pose = load_pose(manifest.resolve_required(entry, "pose"))
            pick = int(rng.integers(len(defect_files)))
            raw_defect = load_mask(defect_files[pick])
            defect, placement = place_defect_mask(raw_defect, labels.height, labels.width, rng)
            sample = build_spn_samples(labels, tryon_cloth, pose, defect, groups)
        except (InputValidationError, DegenerateInputError) as err:
            return {"id": entry.id, "status": "skipped", "reason": str(err)}
        outputs = {}
        for tag, mask in (
            ("potential_body", sample.potential_body),
            ("target_body", sample.target_body),
            ("degraded_body", sample.degraded_body),
            ("degraded_cloth", sample.degraded_cloth),
        ):
            name = f"{entry.id}_{tag}.png"
            save_mask(out_dir / name, mask)
            outputs[tag] = name
        return {
            "id": entry.id,
            "status": "ok",
            "seed_index": index,
            "defect_file": defect_files[pick].name,
            "placement": placement,
            "outputs": outputs,
        }

    rows = run_batch(list(enumerate(manifest.entries)), worker, args.threads)
    report = {
        "command": "maskops",
        "seed": seed,
        "cloth_ids": sorted(groups.cloth_ids),
        "body_ids": sorted(groups.body_ids),
        "ok": sum(1 for r in rows if r["status"] == "ok"),
        "skipped": sum(1 for r in rows if r["status"] != "ok"),
        "rows": rows,
    }
    report_path = out_dir / REPORT_FILENAME
    report_path.write_text(_dump_json(report))
    return CommandResult(EXIT_OK, str(report_path))


# -------------------------------------------------------------------- warp

def cmd_warp(args) -> CommandResult:
    source = load_image(args.source)
    flow = load_flow(args.flow)
    warped = warp_by_flow(source, flow)
    save_image(args.out, warped)
    return CommandResult(EXIT_OK, None)


# -------------------------------------------------------------- smoothness

def cmd_smoothness(args) -> CommandResult:
    config = _load_config(args)
    params = CharbonnierParams(
        epsilon=_pick(args.epsilon, config.epsilon),
        alpha=_pick(args.alpha, config.alpha),
    )
    flows = [load_flow(path) for path in args.flow]
    value = second_order_smoothness(flows, params)
    report = {
        "value": value,
        "terms": second_order_term_count(flows),
        "levels": [[f.height, f.width] for f in flows],
        "epsilon": params.epsilon,
        "alpha": params.alpha,
    }
    return CommandResult(EXIT_OK, _emit_report(report, args.out))


# -------------------------------------------------------------------- loss

def cmd_loss(args) -> CommandResult:
    config = _load_config(args)
    weights = LossWeights(
        alpha_l=_pick(args.alpha_l, config.alpha_l),
        alpha_p=_pick(args.alpha_p, config.alpha_p),
    )
    generated = load_image(args.gen)
    reference = load_image(args.ref)
    pixel = l1_loss(generated, reference)

    if (args.gen_features is None) != (args.ref_features is None):
        raise InputValidationError("--gen-features and --ref-features must be given together")
    if args.gen_features is not None:
        gen_stack = load_feature_stack(args.gen_features)
        ref_stack = load_feature_stack(args.ref_features)
        feature_source = "files"
    else:
        gen_stack = builtin_feature_stack(generated, args.bank_seed)
        ref_stack = builtin_feature_stack(reference, args.bank_seed)
        feature_source = "builtin"
    perceptual = perceptual_loss(gen_stack, ref_stack)

    report = {
        "l1": pixel,
        "perceptual": perceptual,
        "combined": combined_loss(pixel, perceptual, weights),
        "alpha_l": weights.alpha_l,
        "alpha_p": weights.alpha_p,
        "features": feature_source,
    }
    return CommandResult(EXIT_OK, _emit_report(report, args.out))


# --------------------------------------------------------------------- fid

def cmd_fid(args) -> CommandResult:
    config = _load_config(args)
    crop_size = _pick(args.crop_size, config.crop_size)
    real = load_manifest(args.real_manifest)
    generated = load_manifest(args.gen_manifest)
    real.require_fields(("person_image",))
    generated.require_fields(("person_image",))
    regions = load_region_sets(args.regions)
    report = region_fid(real, generated, args.features_dir, regions,
                        crop_size=crop_size, threads=args.threads)
    return CommandResult(EXIT_OK, _emit_report(report.to_json_obj(), args.out))


# ------------------------------------------------------------------- stats

def cmd_stats(args) -> CommandResult:
    manifest = load_manifest(args.manifest)
    palette = load_palette(args.palette) if args.palette else None
    report = corpus_stats(manifest, palette, threads=args.threads)
    return CommandResult(EXIT_OK, _emit_report(report, args.out))


# ------------------------------------------------------------------ parser

def _add_common(p: argparse.ArgumentParser, threads: bool = True, config: bool = True) -> None:
    if threads:
        p.add_argument("--threads", type=int, default=None,
                       help="worker thread cap (default: logical cores); never changes outputs")
    if config:
        p.add_argument("--config", default=None, help="run-config JSON supplying defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="occlumix", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="label garment texture complexity and build pools")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--levels", type=int, default=None, help="grey quantisation levels (default 32)")
    p.add_argument("--threshold", type=float, default=None,
                   help="entropy at or above which a texture is complex (default 2.5)")
    p.add_argument("--seed", type=int, default=None,
                   help="accepted for interface uniformity; classification is deterministic")
    p.add_argument("--pools", default=None, help="write the pools JSON here")
    p.add_argument("--out", default=None, help="write JSON rows here (default: stdout)")
    _add_common(p)
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("augment", help="synthesise occlusion copy-paste samples")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--pools", required=True, help="texture pools JSON from classify")
    p.add_argument("--dist", default=None, help="occlusion distribution JSON (region id -> weight)")
    p.add_argument("--lambda", dest="mix_weight", type=float, default=None,
                   help="probability of drawing the partner from the complex pool (default 0.5)")
    p.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    p.add_argument("--out", required=True, help="output directory (report.json written inside)")
    p.add_argument("--no-align", action="store_true",
                   help="skip centroid alignment of the partner cloth (literal intersection)")
    p.add_argument("--min-pixels", type=int, default=None,
                   help="smallest acceptable composite area (default 16)")
    p.add_argument("--attempts", type=int, default=None,
                   help="region redraws before skipping an entry (default 8)")
    p.add_argument("--palette", default=None,
                   help="palette JSON; partner cloth masks then come from label maps")
    p.add_argument("--cloth-classes", default=None,
                   help="comma-separated cloth class names (default: upper-clothes)")
    _add_common(p)
    p.set_defaults(handler=cmd_augment)

    p = sub.add_parser("maskops", help="build parsing-refinement mask pairs")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--palette", required=True, help="palette JSON naming the parse classes")
    p.add_argument("--cloth-classes", default=None,
                   help="comma-separated cloth class names (default: upper-clothes)")
    p.add_argument("--body-classes", default=None,
                   help="comma-separated body class names "
                        "(default: hair,face,left-arm,right-arm,pants)")
    p.add_argument("--defects-dir", required=True, help="directory of binary defect-mask PNGs")
    p.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    p.add_argument("--out", required=True, help="output directory (report.json written inside)")
    _add_common(p)
    p.set_defaults(handler=cmd_maskops)

    p = sub.add_parser("warp", help="backward-warp an image by a flow field")
    p.add_argument("--source", required=True, help="source PNG")
    p.add_argument("--flow", required=True, help="FLO2 flow file")
    p.add_argument("--out", required=True, help="output PNG")
    _add_common(p, threads=False, config=False)
    p.set_defaults(handler=cmd_warp)

    p = sub.add_parser("smoothness", help="second-order smoothness of a flow pyramid")
    p.add_argument("--flow", required=True, nargs="+",
                   help="FLO2 files, coarsest first for a pyramid")
    p.add_argument("--epsilon", type=float, default=None, help="penalty floor (default 1e-3)")
    p.add_argument("--alpha", type=float, default=None, help="penalty exponent (default 0.45)")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    _add_common(p, threads=False)
    p.set_defaults(handler=cmd_smoothness)

    p = sub.add_parser("loss", help="pixel, perceptual and combined reconstruction loss")
    p.add_argument("--gen", required=True, help="generated image PNG")
    p.add_argument("--ref", required=True, help="reference image PNG")
    p.add_argument("--gen-features", default=None, help="FTEN features of the generated image")
    p.add_argument("--ref-features", default=None, help="FTEN features of the reference image")
    p.add_argument("--alpha-l", type=float, default=None, help="pixel-term weight (default 1)")
    p.add_argument("--alpha-p", type=float, default=None, help="perceptual-term weight (default 1)")
    p.add_argument("--bank-seed", type=int, default=7,
                   help="seed of the built-in feature bank used when no FTEN files are given")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    _add_common(p, threads=False)
    p.set_defaults(handler=cmd_loss)

    p = sub.add_parser("fid", help="per-region Frechet distances between two corpora")
    p.add_argument("--real-manifest", required=True, help="manifest of the reference corpus")
    p.add_argument("--gen-manifest", required=True, help="manifest of the generated corpus")
    p.add_argument("--features-dir", required=True, help="directory of FTEN feature files")
    p.add_argument("--regions", required=True, help="region-sets JSON (row name -> region ids)")
    p.add_argument("--crop-size", type=int, default=None,
                   help="side of the standardised region crop (default 299)")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    _add_common(p)
    p.set_defaults(handler=cmd_fid)

    p = sub.add_parser("stats", help="corpus label statistics")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--palette", default=None, help="palette JSON for class names")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    _add_common(p, config=False)
    p.set_defaults(handler=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.handler(args)
    except InputValidationError as err:
        print(f"occlumix: error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (DegenerateInputError, NumericalError) as err:
        print(f"occlumix: error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    except OSError as err:
        print(f"occlumix: error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface.

Every subcommand validates its inputs before writing anything; validation
problems exit with code 2 and a message on stderr, unexpected runtime
failures with 1. Structured outputs are JSON files or JSON on stdout, with
sorted keys so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import MipSegError, ValidationError
from .fusion import FeatureGrid3D, downscale_index, feature_retrieve, loss_2d, loss_3d, loss_all
from .metrics import evaluate
from .phantom import PhantomSpec, generate, oracle_probabilities
from .projection import (
    AXES,
    Mask2D,
    Mip2D,
    back_project,
    export_mask_png,
    export_png,
    import_mask_png,
    mip_project,
)
from .pseudolabel import (
    BackgroundConfig,
    GrowConfig,
    assemble_pseudolabel,
    build_background,
    foreground_mean,
    region_grow,
)
from .refine import RefineConfig, refine_round
from .volume import (
    BG,
    FG,
    ScalarVolume3D,
    load_label_volume,
    load_probability_volume,
    load_volume,
    normalize_intensity,
    save_volume,
    _load_array,
    _ELEMENT_TYPES,
)
from .voxels import as_coords, empty_coords, mask_to_coords

PROFILES = ("default", "tubetk")


def _write_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read_json(path: str, what: str) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{what} file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValidationError(f"{what} file {path!r} must hold a JSON object")
    return payload


def _config_from_dict(cls, d: dict, what: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValidationError(f"unknown {what} fields: {sorted(unknown)}")
    return cls(**d)


def _save_index_mhd(mip: Mip2D, path: str, spacing=(1.0, 1.0, 1.0)) -> None:
    depth = mip.source_dims[AXES[mip.axis]]
    if depth > 65535:
        raise ValidationError("index maps along axes deeper than 65535 are not storable")
    arr = mip.index.astype(np.uint16)[:, :, None]
    header = (
        "ObjectType = Image\n"
        "NDims = 3\n"
        "BinaryData = True\n"
        "BinaryDataByteOrderMSB = False\n"
        "ElementByteOrderMSB = False\n"
        f"DimSize = {arr.shape[0]} {arr.shape[1]} 1\n"
        f"ElementSpacing = {spacing[0]:.10g} {spacing[1]:.10g} {spacing[2]:.10g}\n"
        "ElementType = MET_USHORT\n"
        f"ElementDataFile = {os.path.basename(os.path.splitext(path)[0])}.raw\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
    raw = os.path.join(os.path.dirname(path) or ".", os.path.basename(os.path.splitext(path)[0]) + ".raw")
    with open(raw, "wb") as fh:
        fh.write(np.ascontiguousarray(arr).astype(_ELEMENT_TYPES["MET_USHORT"]).tobytes(order="F"))


def _save_image_mhd(arr2d: np.ndarray, path: str) -> None:
    vol = ScalarVolume3D(np.asarray(arr2d, dtype=np.float32)[:, :, None])
    save_volume(vol, path)


def _write_mip_meta(mip: Mip2D, index_path: str, meta_path: str,
                    png_path: str | None, intensity_path: str | None) -> None:
    payload = {
        "axis": mip.axis,
        "source_dims": list(mip.source_dims),
        "index_file": os.path.basename(index_path),
    }
    if png_path:
        payload["png_file"] = os.path.basename(png_path)
    if intensity_path:
        payload["intensity_file"] = os.path.basename(intensity_path)
    _write_json(payload, meta_path)


def _load_mip_meta(meta_path: str) -> Mip2D:
    """Rebuild a projection from its sidecar JSON and index map.

    If the meta does not reference an intensity file the intensity plane is
    filled with zeros; only the index map, axis and dims matter to
    back-projection and feature retrieval.
    """
    meta = _read_json(meta_path, "projection meta")
    for key in ("axis", "source_dims", "index_file"):
        if key not in meta:
            raise ValidationError(f"projection meta {meta_path!r} lacks {key!r}")
    base = os.path.dirname(meta_path) or "."
    index_arr, _, _ = _load_array(os.path.join(base, meta["index_file"]))
    if index_arr.shape[2] != 1:
        raise ValidationError(f"index map {meta['index_file']!r} must have depth 1")
    index = index_arr[:, :, 0].astype(np.int32)
    if "intensity_file" in meta:
        inten = _load_array(os.path.join(base, meta["intensity_file"]))[0][:, :, 0]
    else:
        inten = np.zeros(index.shape, dtype=np.float32)
    return Mip2D(inten, index, meta["axis"], tuple(int(d) for d in meta["source_dims"]))


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    """Everything the end-to-end pipeline needs besides the phantom spec."""

    axis: str = "z"
    normalize: bool = True
    grow: GrowConfig = GrowConfig()
    background: BackgroundConfig = BackgroundConfig()
    refine: RefineConfig = RefineConfig()
    loss_weight: float = 1.0
    oracle_quality: float = 0.9
    oracle_pass_noise_std: float = 0.05
    oracle_seed: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValidationError(f"axis must be one of 'x', 'y', 'z', got {self.axis!r}")
        if not (0.5 < self.oracle_quality <= 1.0):
            raise ValidationError(f"oracle_quality must lie in (0.5, 1], got {self.oracle_quality}")
        if self.loss_weight < 0:
            raise ValidationError(f"loss_weight must be nonnegative, got {self.loss_weight}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        kwargs = {}
        for key, sub in (("grow", GrowConfig), ("background", BackgroundConfig),
                         ("refine", RefineConfig)):
            if key in d:
                section = d.pop(key)
                if not isinstance(section, dict):
                    raise ValidationError(f"pipeline config section {key!r} must be an object")
                kwargs[key] = _config_from_dict(sub, section, key)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown pipeline config fields: {sorted(unknown)}")
        kwargs.update(d)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> "PipelineConfig":
        return cls.from_dict(_read_json(path, "pipeline config"))

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "normalize": self.normalize,
            "grow": dataclasses.asdict(self.grow),
            "background": dataclasses.asdict(self.background),
            "refine": dataclasses.asdict(self.refine),
            "loss_weight": self.loss_weight,
            "oracle_quality": self.oracle_quality,
            "oracle_pass_noise_std": self.oracle_pass_noise_std,
            "oracle_seed": self.oracle_seed,
        }


def _apply_profile(cfg: RefineConfig, profile: str) -> RefineConfig:
    if profile == "tubetk":
        return dataclasses.replace(cfg, disable_priors=True)
    return cfg


def _cmd_mip(args) -> int:
    volume = load_volume(args.volume)
    if args.normalize:
        volume = normalize_intensity(volume)
    mip = mip_project(volume, args.axis)
    export_png(mip, args.png)
    _save_index_mhd(mip, args.index)
    if args.intensity:
        _save_image_mhd(mip.intensity, args.intensity)
    _write_mip_meta(mip, args.index, args.meta, args.png, args.intensity)
    return 0


def _cmd_backproject(args) -> int:
    mip = _load_mip_meta(args.meta)
    mask = import_mask_png(args.mask, mip.shape)
    seeds = back_project(mask, mip)
    _write_json(
        {"axis": mip.axis, "source_dims": list(mip.source_dims),
         "count": int(seeds.shape[0]), "voxels": seeds.tolist()},
        args.out,
    )
    return 0


def _cmd_pseudolabel(args) -> int:
    volume = load_volume(args.volume)
    if args.normalize:
        volume = normalize_intensity(volume)
    mip = mip_project(volume, args.axis)
    mask = import_mask_png(args.mask, mip.shape)
    seeds = back_project(mask, mip)
    v_ave = foreground_mean(volume, seeds)
    grow_cfg = GrowConfig(alpha=args.alpha, connectivity=args.connectivity)
    bg_cfg = BackgroundConfig(beta_coef=args.beta_coef, gamma_coef=args.gamma_coef,
                              eta_coef=args.eta_coef)
    s1 = region_grow(volume, seeds, grow_cfg)
    s0 = build_background(volume, mask, args.axis, v_ave, bg_cfg)
    labels, conflicts = assemble_pseudolabel(s1, s0, volume.dims)
    labels = dataclasses.replace(labels, spacing=volume.spacing)
    save_volume(labels, args.out)
    _write_json(
        {
            "v_ave": v_ave,
            "seed_count": int(seeds.shape[0]),
            "foreground_count": int(s1.shape[0]),
            "background_count": int(s0.shape[0]),
            "conflict_count": int(conflicts.shape[0]),
            "conflicts": conflicts.tolist(),
        },
        args.conflicts,
    )
    if args.seeds:
        _write_json(
            {"axis": args.axis, "source_dims": list(volume.dims),
             "count": int(seeds.shape[0]), "voxels": seeds.tolist()},
            args.seeds,
        )
    return 0


def _load_refine_config(path: str | None, profile: str) -> RefineConfig:
    cfg = RefineConfig() if path is None else _config_from_dict(
        RefineConfig, _read_json(path, "refine config"), "refine config")
    return _apply_profile(cfg, profile)


def _cmd_refine(args) -> int:
    if len(args.passes) < 2:
        raise ValidationError(f"refine needs at least 2 --pass volumes, got {len(args.passes)}")
    cfg = _load_refine_config(args.config, args.profile)
    if len(args.passes) != cfg.passes:
        raise ValidationError(
            f"config expects {cfg.passes} passes but {len(args.passes)} were given"
        )
    labels = load_label_volume(args.labels)
    volume = load_volume(args.volume)
    clean = load_probability_volume(args.prob)
    passes = [load_probability_volume(p) for p in args.passes]

    v_ave = args.v_ave
    conflicts = None
    if args.conflicts:
        payload = _read_json(args.conflicts, "conflicts")
        conflicts = as_coords(payload.get("conflicts", []))
        if v_ave is None and "v_ave" in payload:
            v_ave = float(payload["v_ave"])
    refined, report = refine_round(labels, volume, clean, passes, cfg,
                                   v_ave=v_ave, conflicts=conflicts)
    save_volume(refined, args.out)
    _write_json(report.to_dict(), args.report)
    return 0


def _cmd_gather(args) -> int:
    arr, _, _ = _load_array(args.features)
    features = FeatureGrid3D(arr.astype(np.float32)[None])
    mip = _load_mip_meta(args.meta)
    level = downscale_index(mip, args.level)
    gathered = feature_retrieve(features, level)
    _save_image_mhd(gathered.values[0], args.out)
    return 0


def _cmd_loss(args) -> int:
    prob = load_probability_volume(args.prob)
    labels = load_label_volume(args.labels)
    if labels.dims != prob.dims:
        raise ValidationError(f"label dims {labels.dims} do not match prob dims {prob.dims}")
    s_fg = mask_to_coords(labels.labels == FG)
    s_bg = mask_to_coords(labels.labels == BG)
    if args.seeds:
        seeds = as_coords(_read_json(args.seeds, "seeds").get("voxels", []))
    else:
        seeds = empty_coords()
    value_3d = loss_3d(prob, s_fg, seeds, s_bg)

    payload = {"loss_3d": value_3d, "loss_weight": args.loss_weight}
    if args.meta and args.mask:
        mip = _load_mip_meta(args.meta)
        if tuple(mip.source_dims) != tuple(prob.dims):
            raise ValidationError(
                f"projection source dims {mip.source_dims} do not match prob dims {prob.dims}"
            )
        annotation = import_mask_png(args.mask, mip.shape)
        level0 = downscale_index(mip, 0)
        p2d_from_3d = feature_retrieve(FeatureGrid3D(prob.p_fg[None]), level0).values[0]
        if args.prob2d:
            arr, _, _ = _load_array(args.prob2d)
            if arr.shape[2] != 1:
                raise ValidationError("--prob2d must be a depth-1 volume")
            p2d = arr[:, :, 0].astype(np.float64)
        else:
            p2d = p2d_from_3d
        value_2d = loss_2d(p2d_from_3d, p2d, annotation)
        payload["loss_2d"] = value_2d
        payload["loss_total"] = loss_all(value_3d, value_2d, args.loss_weight)
    elif args.meta or args.mask:
        raise ValidationError("the 2D loss needs both --meta and --mask")
    else:
        payload["loss_total"] = value_3d
    _write_json(payload, args.out)
    return 0


def _cmd_metrics(args) -> int:
    pred = load_label_volume(args.pred)
    truth = load_label_volume(args.gt)
    if pred.dims != truth.dims:
        raise ValidationError(f"prediction dims {pred.dims} do not match truth dims {truth.dims}")
    report = evaluate(pred.labels == FG, truth.labels == FG, pred.spacing)
    _write_json(report.to_dict(), args.out)
    return 0


def _cmd_phantom(args) -> int:
    spec = PhantomSpec.from_json(args.spec)
    volume, truth = generate(spec)
    save_volume(volume, args.out)
    save_volume(truth, args.gt)
    return 0


def _cmd_pipeline(args) -> int:
    spec = PhantomSpec.from_json(args.spec)
    cfg = PipelineConfig() if args.config is None else PipelineConfig.from_json(args.config)
    cfg = dataclasses.replace(cfg, refine=_apply_profile(cfg.refine, args.profile))
    if args.quality is not None:
        cfg = dataclasses.replace(cfg, oracle_quality=args.quality)
    os.makedirs(args.out_dir, exist_ok=True)
    path = lambda name: os.path.join(args.out_dir, name)

    volume, truth = generate(spec)
    save_volume(volume, path("volume.mhd"))
    save_volume(truth, path("gt.mhd"))

    work = normalize_intensity(volume) if cfg.normalize else volume
    mip = mip_project(work, cfg.axis)
    export_png(mip, path("mip.png"))
    _save_index_mhd(mip, path("mip_index.mhd"))
    _save_image_mhd(mip.intensity, path("mip_intensity.mhd"))
    _write_mip_meta(mip, path("mip_index.mhd"), path("mip.json"),
                    path("mip.png"), path("mip_intensity.mhd"))

    annotation = Mask2D((truth.labels == FG).max(axis=AXES[cfg.axis]))
    export_mask_png(annotation, path("mask.png"))

    seeds = back_project(annotation, mip)
    v_ave = foreground_mean(work, seeds)
    s1 = region_grow(work, seeds, cfg.grow)
    s0 = build_background(work, annotation, cfg.axis, v_ave, cfg.background)
    labels, conflicts = assemble_pseudolabel(s1, s0, work.dims)
    labels = dataclasses.replace(labels, spacing=volume.spacing)
    save_volume(labels, path("labels.mhd"))
    _write_json(
        {
            "v_ave": v_ave,
            "seed_count": int(seeds.shape[0]),
            "foreground_count": int(s1.shape[0]),
            "background_count": int(s0.shape[0]),
            "conflict_count": int(conflicts.shape[0]),
            "conflicts": conflicts.tolist(),
        },
        path("conflicts.json"),
    )

    clean, passes = oracle_probabilities(
        truth, cfg.oracle_quality, cfg.refine.passes,
        cfg.oracle_pass_noise_std, cfg.oracle_seed,
    )
    save_volume(clean, path("prob.mhd"))
    for i, p in enumerate(passes):
        save_volume(p, path(f"pass_{i}.mhd"))

    refined, report = refine_round(labels, work, clean, passes, cfg.refine,
                                   v_ave=v_ave, conflicts=conflicts)
    save_volume(refined, path("refined.mhd"))
    _write_json(report.to_dict(), path("report.json"))

    metrics_payload = {
        "pseudolabel": evaluate(labels.labels == FG, truth.labels == FG,
                                volume.spacing).to_dict(),
        "refined": evaluate(refined.labels == FG, truth.labels == FG,
                            volume.spacing).to_dict(),
    }
    _write_json(metrics_payload, path("metrics.json"))
    _write_json(cfg.to_dict(), path("config.json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    # The default is SUPPRESS so that a value given before the subcommand is
    # not overwritten by the subparser's default when the flag is repeated in
    # neither position; main() falls back to the environment.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads",
        type=int,
        default=argparse.SUPPRESS,
        help="worker threads reserved for internal parallelism; results never depend on it",
    )
    parser = argparse.ArgumentParser(
        prog="mipseg",
        parents=[common],
        description="Weakly supervised 3D vessel segmentation from projection annotations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_parser("mip", help="project a volume and save the argmax index map")
    p.add_argument("--volume", required=True)
    p.add_argument("--axis", choices=sorted(AXES), default="z")
    p.add_argument("--png", required=True, help="16-bit grayscale projection image")
    p.add_argument("--index", required=True, help="argmax depth map (.mhd)")
    p.add_argument("--meta", required=True, help="sidecar JSON tying the outputs together")
    p.add_argument("--intensity", help="optional projection intensities (.mhd)")
    p.add_argument("--normalize", action="store_true",
                   help="min-max normalize intensities before projecting")
    p.set_defaults(func=_cmd_mip)

    p = add_parser("backproject", help="lift an annotation PNG to 3D seed voxels")
    p.add_argument("--mask", required=True)
    p.add_argument("--meta", required=True, help="projection sidecar JSON from 'mip'")
    p.add_argument("--out", required=True, help="seeds JSON")
    p.set_defaults(func=_cmd_backproject)

    p = add_parser("pseudolabel", help="grow ternary pseudo-labels from an annotation")
    p.add_argument("--volume", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--axis", choices=sorted(AXES), default="z")
    p.add_argument("--alpha", type=float, default=0.1,
                   help="intensity tolerance around the seed mean")
    p.add_argument("--connectivity", type=int, choices=(6, 26), default=26)
    p.add_argument("--beta-coef", type=float, default=0.2)
    p.add_argument("--gamma-coef", type=float, default=1.2)
    p.add_argument("--eta-coef", type=float, default=1.6)
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   help="skip min-max normalization")
    p.add_argument("--out", required=True, help="ternary label volume (.mhd)")
    p.add_argument("--conflicts", required=True, help="conflicts/summary JSON")
    p.add_argument("--seeds", help="optional seeds JSON")
    p.set_defaults(func=_cmd_pseudolabel)

    p = add_parser("refine", help="one confidence/uncertainty refinement round")
    p.add_argument("--labels", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--prob", required=True, help="clean probability volume")
    p.add_argument("--pass", dest="passes", action="append", default=[],
                   metavar="PROB", help="stochastic pass volume; repeat per pass")
    p.add_argument("--config", help="refine config JSON")
    p.add_argument("--profile", choices=PROFILES, default="default")
    p.add_argument("--conflicts", help="conflicts JSON from 'pseudolabel'")
    p.add_argument("--v-ave", type=float, help="seed-mean intensity override")
    p.add_argument("--out", required=True, help="refined label volume (.mhd)")
    p.add_argument("--report", required=True, help="refinement report JSON")
    p.set_defaults(func=_cmd_refine)

    p = add_parser("gather", help="gather a 3D feature volume into 2D along rays")
    p.add_argument("--features", required=True, help="single-channel feature volume (.mhd)")
    p.add_argument("--meta", required=True, help="projection sidecar JSON from 'mip'")
    p.add_argument("--level", type=int, choices=(0, 1, 2, 3), default=0)
    p.add_argument("--out", required=True, help="gathered 2D features as a depth-1 .mhd")
    p.set_defaults(func=_cmd_gather)

    p = add_parser("loss", help="training losses from saved volumes")
    p.add_argument("--prob", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--seeds", help="seeds JSON for the seed term")
    p.add_argument("--meta", help="projection sidecar JSON (enables the 2D loss)")
    p.add_argument("--mask", help="annotation PNG (enables the 2D loss)")
    p.add_argument("--prob2d", help="native 2D prediction as a depth-1 .mhd")
    p.add_argument("--loss-weight", type=float, default=1.0,
                   help="weight of the 2D term in the total")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_loss)

    p = add_parser("metrics", help="overlap/centerline/distance scores")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_metrics)

    p = add_parser("phantom", help="render a synthetic tubular phantom")
    p.add_argument("--spec", required=True, help="phantom spec JSON")
    p.add_argument("--out", required=True, help="intensity volume (.mhd)")
    p.add_argument("--gt", required=True, help="ground-truth label volume (.mhd)")
    p.set_defaults(func=_cmd_phantom)

    p = add_parser("pipeline", help="phantom through refinement and metrics, end to end")
    p.add_argument("--spec", required=True, help="phantom spec JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--profile", choices=PROFILES, default="default")
    p.add_argument("--quality", type=float, help="override the oracle probability quality")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    threads = getattr(args, "threads", None)
    if threads is None:
        try:
            threads = int(os.environ.get("MIPSEG_THREADS", "1"))
        except ValueError:
            print("error: MIPSEG_THREADS must be an integer", file=sys.stderr)
            return 2
    if threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MipSegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

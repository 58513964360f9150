"""Command-line interface.

Every command accepts ``--config FILE`` with flat ``key=value`` lines; flags
given on the command line override the file. Each run writes the resolved
configuration to ``<out>.cfg`` so it can be replayed with ``--config``.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
import argparse
import logging
import math
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .backend import make_backend, write_view_manifest
from .dataset import (default_gt_sigma, generate_synthetic, load_fixations, load_image,
                      load_manifest, load_sample, make_gt_map, save_map, to_eval_sample,
                      fixation_pixels)
from .errors import OmnisalError, ValidationError
from .fusion import estimate, extract_views
from .geometry import view_grid
from .metrics import (DEFAULT_SIGMAS, Pipeline, evaluate_map, mean_report, sweep_blur,
                      sweep_interval, write_report_csv, REPORT_HEADER)
from .prior import (EquatorBias, FitConfig, average_equator_bias, fit_latitude_bias,
                    load_latitude_biases, save_latitude_biases)
from .raster import BlurSpec, normalize_sum

log = logging.getLogger("omnisal")

NOT_ECHOED = {"config", "command", "func", "verbose"}


class UsageError(ValidationError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _side(text):
    value = int(text)
    if value < 32:
        raise argparse.ArgumentTypeError(f"view side must be >= 32, got {value}")
    return value


def _fov(text):
    value = float(text)
    if not 0 < value < 180:
        raise argparse.ArgumentTypeError(f"fov must lie in (0, 180) degrees, got {value}")
    return value


def _nonneg(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _add_common(p, out_help):
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--out", required=True, help=out_help)
    p.add_argument("--jobs", type=_positive_int, default=1,
                   help="parallel workers for view prediction and sweeps")


def _add_grid(p):
    p.add_argument("--interval", type=float, default=45.0,
                   help="viewing-direction interval in degrees (90, 45, 30, 22.5)")
    p.add_argument("--fov", type=_fov, default=100.0, help="view angle in degrees")
    p.add_argument("--view-side", type=_side, default=500, help="planar view size in pixels")


def _add_pipeline(p, sizes=True):
    _add_grid(p)
    p.add_argument("--backend", default="spectral",
                   help="constant | spectral[:work_side] | file:<view manifest>")
    p.add_argument("--prior", default="none",
                   help="none | a:<equator bias map> | b:<latitude bias dir>")
    p.add_argument("--horizontal-boundary", choices=["wrap", "reflect"], default="wrap")
    p.add_argument("--vertical-boundary", choices=["reflect", "clamp"], default="reflect")
    p.add_argument("--interpolation", choices=["bilinear", "nearest"], default="bilinear")
    if sizes:
        p.add_argument("--width", type=_positive_int, default=1600, help="output map width")
        p.add_argument("--height", type=_positive_int, default=800, help="output map height")


def _add_dataset(p):
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--split", choices=["train", "val", "all"], default="val")
    p.add_argument("--gt-sigma", type=_nonneg, default=None,
                   help="gt blur in px when a manifest entry has no gt map "
                        "(default: 24 px scaled to the map width)")
    p.add_argument("--split-seed", type=int, default=0,
                   help="seed for the default 80/20 split of manifests without sections")


def build_parser():
    parser = Parser(prog="omnisal", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("extract", help="extract planar views from a panorama", formatter_class=fmt)
    _add_common(p, "output directory for views and views.txt")
    p.add_argument("--image", required=True)
    p.add_argument("--image-id", default=None, help="defaults to the image file stem")
    _add_grid(p)
    p.add_argument("--format", choices=["f32", "png"], default="f32")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("predict", help="estimate an equirectangular saliency map",
                       formatter_class=fmt)
    _add_common(p, "output map (.f32, .npy or .png)")
    p.add_argument("--image", required=True)
    p.add_argument("--image-id", default=None, help="defaults to the image file stem")
    _add_pipeline(p)
    p.add_argument("--blur-sigma", type=_nonneg, default=0.0, help="final blur sigma in px")
    p.add_argument("--emit-heatmap", action=argparse.BooleanOptionalAction, default=False,
                   help="also write an 8-bit colorized PNG (display only)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fit-bias", help="fit the equator bias (method a) or latitude biases (b)",
                       formatter_class=fmt)
    _add_common(p, "bias map file (method a) or directory (method b)")
    _add_dataset(p)
    p.set_defaults(split="train")
    p.add_argument("--method", choices=["a", "b"], default="a")
    _add_grid(p)
    p.add_argument("--backend", default="spectral")
    p.add_argument("--learning-rate", type=float, default=FitConfig.learning_rate)
    p.add_argument("--iterations", type=int, default=FitConfig.iterations)
    p.add_argument("--bias-resolution", type=int, default=FitConfig.bias_resolution)
    p.add_argument("--loss", choices=["kl", "mse"], default=FitConfig.loss)
    p.add_argument("--optimizer", choices=["adam", "gd"], default=FitConfig.optimizer)
    p.add_argument("--fit-blur-sigma", type=_nonneg, default=0.0,
                   help="blur applied inside the training objective")
    p.set_defaults(func=cmd_fit_bias)

    p = sub.add_parser("evaluate", help="score saliency maps (KL, CC, NSS, AUC, a)",
                       formatter_class=fmt)
    _add_common(p, "CSV report")
    p.add_argument("--pred", help="predicted map (single-image mode)")
    p.add_argument("--gt", help="ground-truth map (single-image mode)")
    p.add_argument("--fixations", help="fixation CSV (single-image mode)")
    p.add_argument("--manifest", help="dataset manifest (batch mode)")
    p.add_argument("--pred-dir", help="directory of <image_id>.f32 predictions (batch mode)")
    p.add_argument("--split", choices=["train", "val", "all"], default="val")
    p.add_argument("--gt-sigma", type=_nonneg, default=None)
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-blur", help="pick the final blur sigma by mean integrated metric",
                       formatter_class=fmt)
    _add_common(p, "CSV report with one block per sigma")
    _add_dataset(p)
    _add_pipeline(p, sizes=False)
    p.add_argument("--sigmas", default=",".join(str(s) for s in DEFAULT_SIGMAS),
                   help="comma-separated blur sigmas in px")
    p.set_defaults(func=cmd_sweep_blur)

    p = sub.add_parser("sweep-interval", help="compare viewing-direction intervals",
                       formatter_class=fmt)
    _add_common(p, "CSV report with one block per interval")
    _add_dataset(p)
    _add_pipeline(p, sizes=False)
    p.add_argument("--intervals", default="90,45,30,22.5", help="comma-separated intervals")
    p.add_argument("--blur-sigma", type=_nonneg, default=0.0)
    p.set_defaults(func=cmd_sweep_interval)

    p = sub.add_parser("make-gt", help="ground-truth map from a fixation CSV",
                       formatter_class=fmt)
    _add_common(p, "output map")
    p.add_argument("--fixations", required=True)
    p.add_argument("--width", type=_positive_int, default=1600)
    p.add_argument("--height", type=_positive_int, default=800)
    p.add_argument("--sigma", type=_nonneg, default=24.0, help="gt blur sigma in px")
    p.set_defaults(func=cmd_make_gt)

    p = sub.add_parser("gen-synthetic", help="write a seeded synthetic dataset",
                       formatter_class=fmt)
    _add_common(p, "output directory")
    p.add_argument("--n-images", type=_positive_int, default=40)
    p.add_argument("--width", type=_positive_int, default=1600)
    p.add_argument("--height", type=_positive_int, default=800)
    p.add_argument("--prior-sigma-phi", type=float, default=0.3,
                   help="latitude prior sigma in radians (inf disables the prior)")
    p.add_argument("--n-blobs", type=int, default=6)
    p.add_argument("--n-fixations", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gt-sigma", type=_nonneg, default=None,
                   help="gt blur in px (default: 24 px scaled to the width)")
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


# --- config files ------------------------------------------------------------

def read_config(path):
    """Parse ``key=value`` lines into a dict (keys normalized to snake_case)."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _config_tokens(subparser, values, command):
    by_dest = {a.dest: a for a in subparser._actions if a.option_strings}
    tokens = []
    for key, value in values.items():
        if key == "command":
            if value != command:
                raise UsageError(f"config is for command {value!r}, not {command!r}")
            continue
        if key in NOT_ECHOED or key not in by_dest:
            raise UsageError(f"unknown config key {key!r} for {command}")
        action = by_dest[key]
        flag = max((s for s in action.option_strings if not s.startswith("--no-")), key=len)
        if isinstance(action, argparse.BooleanOptionalAction):
            on = value.lower() in ("1", "true", "yes", "on")
            tokens.append(flag if on else "--no-" + flag[2:])
        elif value.lower() == "none" and action.default is None:
            continue
        else:
            tokens.append(f"{flag}={value}")
    return tokens


def _find_config(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv):
    parser = build_parser()
    commands = parser._subparsers._group_actions[0].choices
    idx = next((i for i, tok in enumerate(argv) if tok in commands), None)
    config = _find_config(argv)
    if idx is not None and config:
        # config values go first so explicit flags win
        tokens = _config_tokens(commands[argv[idx]], read_config(config), argv[idx])
        argv = list(argv[:idx + 1]) + tokens + list(argv[idx + 1:])
    return parser.parse_args(argv)


def echo_config(args):
    """Write the resolved configuration next to the output."""
    out = Path(str(args.out).rstrip("/"))
    path = out.parent / (out.name + ".cfg")
    lines = [f"command={args.command}"]
    for key, value in sorted(vars(args).items()):
        if key in NOT_ECHOED or value is None:
            continue
        if isinstance(value, float):
            value = repr(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


# --- helpers -----------------------------------------------------------------

def _load_prior(spec):
    if spec in (None, "", "none"):
        return None
    kind, _, path = spec.partition(":")
    if kind.lower() == "a" and path:
        return EquatorBias(load_image(path))
    if kind.lower() == "b" and path:
        return load_latitude_biases(path)
    raise UsageError(f"--prior must be none, a:<map> or b:<dir>, got {spec!r}")


def _grid(args):
    return view_grid(args.interval, math.radians(args.fov))


def _blur(args, sigma):
    return BlurSpec(sigma, getattr(args, "horizontal_boundary", "wrap"),
                    getattr(args, "vertical_boundary", "reflect"))


def _pipeline(args):
    return Pipeline(make_backend(args.backend), args.interval, args.fov, args.view_side,
                    _load_prior(args.prior), _blur(args, getattr(args, "blur_sigma", 0.0)),
                    args.interpolation)


def _load_samples(args):
    manifest = load_manifest(args.manifest, args.split_seed)
    ids = manifest.split(args.split)
    if not ids:
        raise UsageError(f"split {args.split!r} of {args.manifest} is empty")
    return [load_sample(manifest.entry(i), gt_sigma=args.gt_sigma) for i in ids]


def write_heatmap(path, raster):
    from matplotlib import colormaps
    from PIL import Image

    arr = np.asarray(raster, dtype=np.float64)
    peak = arr.max()
    scaled = arr / peak if peak > 0 else arr
    rgb = (colormaps["jet"](scaled)[..., :3] * 255).round().astype(np.uint8)
    Image.fromarray(rgb).save(path)


def _write_sweep_csv(path, result, label):
    rows = []
    for setting, reports in result.per_setting.items():
        tag = f"{label}={setting:g}"
        rows.extend((f"{tag}:{name}", r) for name, r in reports)
        rows.append((f"{tag}:__mean__", result.means[setting]))
    with open(path, "w") as fh:
        fh.write(",".join(REPORT_HEADER) + "\n")
        for name, r in rows:
            fh.write(",".join([name] + [repr(float(getattr(r, k))) for k in REPORT_HEADER[1:]]))
            fh.write("\n")


# --- commands ----------------------------------------------------------------

def cmd_extract(args):
    image = load_image(args.image)
    image_id = args.image_id or Path(args.image).stem
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    views = extract_views(image, _grid(args), args.view_side, image_id, args.jobs)
    rows = []
    for view in views:
        theta, phi = view.frame.key_deg
        name = f"{image_id}_t{theta:07.2f}_p{phi:+06.1f}.{args.format}"
        if args.format == "f32":
            save_map(out / name, view.image if view.image.ndim == 2 else view.image.mean(axis=-1))
        else:
            from PIL import Image

            Image.fromarray((np.clip(view.image, 0, 1) * 255).round().astype(np.uint8)).save(
                out / name)
        rows.append((image_id, theta, phi, name))
    write_view_manifest(out / "views.txt", rows)
    log.info("wrote %d views to %s", len(views), out)


def cmd_predict(args):
    image = load_image(args.image)
    image_id = args.image_id or Path(args.image).stem
    pipe = _pipeline(args)
    fused = estimate(image, pipe.backend, _grid(args), pipe.prior, pipe.blur, args.view_side,
                     (args.height, args.width), image_id, args.interpolation, args.jobs)
    if fused.uncovered:
        log.warning("%d pixels uncovered", fused.uncovered)
    save_map(args.out, fused.map)
    if args.emit_heatmap:
        out = Path(args.out)
        write_heatmap(out.with_name(out.stem + "_heatmap.png"), fused.map)
    log.info("wrote %s (%dx%d, %d views)", args.out, args.height, args.width, len(_grid(args)))


def cmd_fit_bias(args):
    samples = _load_samples(args)
    if args.method == "a":
        bias = average_equator_bias([s.gt for s in samples])
        save_map(args.out, bias.map)
        log.info("equator bias from %d maps: range %.4g-%.4g", len(samples), bias.map.min(),
                 bias.map.max())
        return
    config = FitConfig(args.learning_rate, args.iterations, args.bias_resolution, args.loss,
                       args.optimizer, args.fit_blur_sigma)
    biases = fit_latitude_bias([(s.image, s.gt, s.image_id) for s in samples],
                               make_backend(args.backend), _grid(args), config, args.view_side,
                               args.jobs)
    save_latitude_biases(args.out, biases)
    log.info("latitude biases: loss %.6g -> %.6g", biases.loss_trace[0], min(biases.loss_trace))


def cmd_evaluate(args):
    rows = []
    if args.manifest:
        if not args.pred_dir:
            raise UsageError("--manifest requires --pred-dir")
        for s in _load_samples(args):
            pred = normalize_sum(load_image(Path(args.pred_dir) / f"{s.image_id}.f32"))
            e = to_eval_sample(s)
            rows.append((s.image_id, evaluate_map(pred, e.gt, e.fixations)))
    else:
        if not (args.pred and args.fixations):
            raise UsageError("single-image mode needs --pred and --fixations")
        pred = normalize_sum(load_image(args.pred))
        h, w = pred.shape
        fix = load_fixations(args.fixations)
        gt = (normalize_sum(load_image(args.gt)) if args.gt
              else make_gt_map(fix, w, h, args.gt_sigma if args.gt_sigma is not None
                               else default_gt_sigma(w)))
        rows.append((fix.image_id, evaluate_map(pred, gt, fixation_pixels(fix, w, h))))
    write_report_csv(args.out, rows)
    m = mean_report([r for _, r in rows])
    print(f"KL={m.kl:.4f} CC={m.cc:.4f} NSS={m.nss:.4f} AUC={m.auc:.4f} a={m.a:.4f}")


def cmd_sweep_blur(args):
    samples = [to_eval_sample(s) for s in _load_samples(args)]
    result = sweep_blur(samples, _pipeline(args), _float_list(args.sigmas), jobs=args.jobs)
    _write_sweep_csv(args.out, result, "sigma")
    for sigma, m in result.means.items():
        log.info("sigma %g: a=%.4f", sigma, m.a)
    print(f"best sigma: {result.best:g}")


def cmd_sweep_interval(args):
    samples = [to_eval_sample(s) for s in _load_samples(args)]
    intervals = _float_list(args.intervals)
    result = sweep_interval(samples, _pipeline(args), intervals, jobs=args.jobs)
    _write_sweep_csv(args.out, result, "interval")
    for interval in intervals:
        log.info("interval %g deg: %d views, a=%.4f", interval, result.view_counts[interval],
                 result.means[interval].a)
    print(f"best interval: {result.best:g}")


def cmd_make_gt(args):
    fix = load_fixations(args.fixations)
    save_map(args.out, make_gt_map(fix, args.width, args.height, args.sigma))


def cmd_gen_synthetic(args):
    data = generate_synthetic(args.n_images, args.width, args.height, args.prior_sigma_phi,
                              args.n_blobs, args.n_fixations, args.seed, gt_sigma=args.gt_sigma)
    manifest = data.save(args.out)
    log.info("wrote %d images (%d train / %d val) to %s", len(data.samples), len(manifest.train),
             len(manifest.val), args.out)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        args.func(args)
        echo_config(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OmnisalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # keep the exit-code contract for unexpected failures
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

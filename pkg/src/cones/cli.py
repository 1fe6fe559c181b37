"""Command-line entry point: ``cones <command> [flags]``.

Every command writes its artifacts under ``--out`` together with
``run_manifest.txt`` (argv, seed, config snapshot, sha256 of every
artifact). ``cones rerun <manifest>`` replays a recorded run.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import os
import shlex
import sys

from . import __version__
from .data import DatasetSpec, PhantomSpec, file_sha256, load_split, read_image_dir, write_dataset
from .tensorio import TensorFormatError, read_tensor, write_tensor

MANIFEST = "run_manifest.txt"


class CliError(RuntimeError):
    pass


@contextlib.contextmanager
def _deterministic():
    """Single-threaded BLAS (fixed reduction order) when CONES_DETERMINISTIC=1."""
    if os.environ.get("CONES_DETERMINISTIC", "") in ("1", "true", "yes"):
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            yield True
    else:
        yield False


def write_run_manifest(out_dir, argv: list[str], seed: int, config_lines: list[str], artifacts: list[str]) -> str:
    path = os.path.join(out_dir, MANIFEST)
    with open(path, "w") as fh:
        fh.write(f"cones_version={__version__}\n")
        fh.write(f"argv={shlex.join(argv)}\n")
        fh.write(f"seed={seed}\n")
        fh.write(f"deterministic={os.environ.get('CONES_DETERMINISTIC', '0')}\n")
        for line in config_lines:
            fh.write(f"config.{line}\n")
        for rel in sorted(artifacts):
            fh.write(f"sha256.{rel}={file_sha256(os.path.join(out_dir, rel))}\n")
    return path


def read_run_manifest(path) -> dict[str, str]:
    items = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                k, v = line.split("=", 1)
                items[k] = v
    return items


def _rel_files(root) -> list[str]:
    out = []
    for d, _, files in os.walk(root):
        for f in files:
            if f != MANIFEST:
                out.append(os.path.relpath(os.path.join(d, f), root))
    return out


def _parse_sets(pairs: list[str]) -> dict[str, str]:
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise CliError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# -- commands -------------------------------------------------------------------


def cmd_synth_data(args, argv) -> int:
    spec = DatasetSpec(PhantomSpec(size=args.size, n_source=args.n_source, n_target=args.n_target, seed=args.seed),
                       n_train=args.n_train, n_val=args.n_val)
    os.makedirs(args.out, exist_ok=True)
    hashes = write_dataset(args.out, spec)
    lines = [f"size={args.size}", f"n_source={args.n_source}", f"n_target={args.n_target}",
             f"n_train={args.n_train}", f"n_val={args.n_val}"]
    write_run_manifest(args.out, argv, args.seed, lines, list(hashes))
    print(f"wrote {len(hashes)} files to {args.out}")
    return 0


def _train_config(args):
    from .train import TrainConfig, read_kv_file

    pairs = read_kv_file(args.config) if args.config else {}
    flags = _parse_sets(args.set)
    for key in ("steps", "mode", "crop_h", "crop_w", "batch_size", "lr_g", "lr_d"):
        v = getattr(args, key, None)
        if v is not None:
            flags[key] = str(v)
    if args.seed is not None:
        flags["seed"] = str(args.seed)
    return TrainConfig.from_pairs({**pairs, **flags})


def cmd_train(args, argv) -> int:
    from .checkpoint import save_models
    from .train import build_models, train, write_loss_csv

    cfg = _train_config(args)
    samples = load_split(args.data, args.split)
    if not samples:
        raise CliError(f"no samples in {args.data}/{args.split}")
    gen, disc = build_models(cfg, samples[0].source.shape[0], samples[0].target.shape[0])
    os.makedirs(args.out, exist_ok=True)
    res = train(samples, gen, disc, cfg, out_dir=args.out, raise_on_divergence=False)
    write_loss_csv(res.history, os.path.join(args.out, "losses.csv"))
    save_models(os.path.join(args.out, "checkpoint"), gen, disc)
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write("\n".join(cfg.to_lines()) + "\n")
    write_run_manifest(args.out, argv, cfg.seed, cfg.to_lines(), _rel_files(args.out))
    if res.diverged is not None:
        print(f"error: {res.diverged}", file=sys.stderr)
        return 1
    print(f"trained {len(res.history)} steps in {res.seconds:.1f}s; final L_total={res.history[-1].L_total:.6g}"
          if res.history else "trained 0 steps")
    return 0


def cmd_translate(args, argv) -> int:
    from .checkpoint import load_generator
    from .field import translate
    from .hypernet import check_divisible

    gen = load_generator(os.path.join(args.checkpoint, "generator")
                         if os.path.isdir(os.path.join(args.checkpoint, "generator")) else args.checkpoint)
    sources = read_image_dir(args.input, "src_")
    written = []
    for idx, src in sources.items():
        check_divisible(src.shape[1], src.shape[2], gen.hyper)
        pred = translate(src, gen)
        d = os.path.join(args.out, str(idx))
        os.makedirs(d, exist_ok=True)
        for c, img in enumerate(pred):
            write_tensor(os.path.join(d, f"tgt_{c}.cnsf"), img)
            written.append(os.path.join(str(idx), f"tgt_{c}.cnsf"))
    write_run_manifest(args.out, argv, 0, [f"checkpoint={args.checkpoint}", f"input={args.input}"], written)
    print(f"translated {len(sources)} images into {args.out}")
    return 0


def _report_for(pred_dir, data_dir):
    from .metrics import MetricReport, evaluate_pair

    preds = read_image_dir(pred_dir, "tgt_")
    reals = read_image_dir(data_dir, "tgt_")
    missing = sorted(set(preds) - set(reals))
    if missing:
        raise CliError(f"no reference image for prediction indices {missing[:5]} in {data_dir}")
    report = MetricReport()
    for idx in sorted(preds):
        mpath = os.path.join(data_dir, str(idx), "mask.cnsf")
        mask = read_tensor(mpath) if os.path.exists(mpath) else None
        if preds[idx].shape != reals[idx].shape:
            raise CliError(f"image {idx}: prediction {preds[idx].shape} vs reference {reals[idx].shape}")
        report.rows.append(evaluate_pair(idx, preds[idx], reals[idx], mask))
    return report


def cmd_eval(args, argv) -> int:
    from .metrics import DegenerateTestError, wilcoxon_signed_rank

    os.makedirs(args.out, exist_ok=True)
    report = _report_for(args.pred, args.data)
    report.write_csv(os.path.join(args.out, "metrics.csv"))
    artifacts = ["metrics.csv"]
    for k, (mu, sd) in report.summary().items():
        print(f"{k}: {mu:.4f} +/- {sd:.4f}")
    if args.compare:
        other = _report_for(args.compare, args.data)
        other.write_csv(os.path.join(args.out, "metrics_compare.csv"))
        artifacts.append("metrics_compare.csv")
        ids = [r.image_id for r in report.rows]
        if ids != [r.image_id for r in other.rows]:
            raise CliError("the two prediction sets cover different images")
        with open(os.path.join(args.out, "wilcoxon.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "statistic", "p_value", "n", "method"])
            for metric in ("psnr_db", "ssim"):
                try:
                    res = wilcoxon_signed_rank(report.column(metric), other.column(metric))
                    w.writerow([metric, repr(res.statistic), repr(res.pvalue), res.n, res.method])
                except (DegenerateTestError, ValueError) as exc:
                    w.writerow([metric, "nan", "nan", 0, f"skipped: {exc}"])
        artifacts.append("wilcoxon.csv")
    write_run_manifest(args.out, argv, 0, [f"pred={args.pred}", f"data={args.data}",
                                           f"compare={args.compare or ''}"], artifacts)
    return 0


def cmd_spectrum(args, argv) -> int:
    from .spectral import plot_profiles, spectrum_profile

    if len(args.images) < 2:
        raise CliError("spectrum needs at least two --images sets")
    names = args.names or [f"set{i}" for i in range(len(args.images))]
    if len(names) != len(args.images):
        raise CliError("--names must match the number of --images sets")
    os.makedirs(args.out, exist_ok=True)
    profiles = {}
    artifacts = []
    for name, d in zip(names, args.images):
        stacks = read_image_dir(d, args.prefix)
        imgs = [stacks[i][args.channel] for i in sorted(stacks)]
        prof = spectrum_profile(imgs)
        profiles[name] = prof
        fname = f"spectrum_{name}.csv"
        prof.write_csv(os.path.join(args.out, fname))
        artifacts.append(fname)
    if args.plot:
        plot_profiles(profiles, os.path.join(args.out, "spectrum.png"))
        artifacts.append("spectrum.png")
    write_run_manifest(args.out, argv, 0, [f"images={','.join(args.images)}"], artifacts)
    return 0


def cmd_ablate(args, argv) -> int:
    import dataclasses

    from .experiments import ablation_base_config, format_ablation_table, run_ablation_grid

    overrides = _parse_sets(args.set)
    if args.steps is not None:
        overrides["steps"] = str(args.steps)
    overrides["seed"] = str(args.seed)
    from .train import TrainConfig

    base = TrainConfig.from_pairs(overrides, base=ablation_base_config())
    spec = DatasetSpec(dataclasses.replace(PhantomSpec(), seed=args.seed), n_train=args.n_train, n_val=args.n_val)
    runs = run_ablation_grid(base, spec)
    os.makedirs(args.out, exist_ok=True)
    table = format_ablation_table(runs)
    with open(os.path.join(args.out, "ablation.csv"), "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(table)
    with open(os.path.join(args.out, "ablation_runs.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "diverged", "steps_done", "seconds"])
        for r in runs:
            w.writerow([r.name, int(r.diverged), r.steps_done, f"{r.seconds:.1f}"])
    for row in table:
        print("\t".join(row))
    write_run_manifest(args.out, argv, args.seed, base.to_lines(), ["ablation.csv", "ablation_runs.csv"])
    shift_div = [r.name for r in runs if r.shift and r.diverged]
    if shift_div:
        print(f"error: divergence guard tripped for shift-modulation runs {shift_div}", file=sys.stderr)
        return 1
    return 0


def cmd_gradcheck(args, argv) -> int:
    from .gradcheck import run_gradcheck

    rep = run_gradcheck(n_configs=args.configs, seed=args.seed)
    for op, err in sorted(rep.by_op().items()):
        print(f"{op:18s} max_rel_err={err:.3e} {'ok' if err <= 1e-4 else 'FAIL'}")
    print(f"{len(rep.results)} configurations, {'PASS' if rep.passed else 'FAIL'} ({rep.seconds:.2f}s)")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "gradcheck.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["op", "config", "max_rel_error", "passed"])
            for r in rep.results:
                w.writerow([r.op, r.description, repr(r.max_rel_error), int(r.passed)])
        write_run_manifest(args.out, argv, args.seed, [f"configs={args.configs}"], ["gradcheck.csv"])
    return 0 if rep.passed else 1


def cmd_rerun(args, argv) -> int:
    items = read_run_manifest(args.manifest)
    if "argv" not in items:
        raise CliError(f"{args.manifest} has no recorded argv")
    recorded = shlex.split(items["argv"])
    if args.out:
        if "--out" not in recorded:
            raise CliError("recorded command has no --out to override")
        recorded[recorded.index("--out") + 1] = args.out
    return main(recorded)


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cones", description="Conditional neural fields for image translation.")
    p.add_argument("--version", action="version", version=f"cones {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="generate a synthetic paired phantom dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--n-source", type=int, default=3)
    s.add_argument("--n-target", type=int, default=1)
    s.add_argument("--n-train", type=int, default=200)
    s.add_argument("--n-val", type=int, default=40)
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("train", help="train a generator/discriminator pair",
                       description="Precedence of settings: flag > --config file > default. "
                                   "Any TrainConfig key can be set with --set key=value.")
    s.add_argument("--data", required=True, help="dataset root written by synth-data")
    s.add_argument("--split", default="train")
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="key=value config file")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--mode", choices=["shift", "film", "full"])
    s.add_argument("--crop-h", dest="crop_h", type=int)
    s.add_argument("--crop-w", dest="crop_w", type=int)
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--lr-g", dest="lr_g", type=float)
    s.add_argument("--lr-d", dest="lr_d", type=float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("translate", help="apply a checkpoint to a directory of source stacks")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True, help="directory of <index>/src_<c>.cnsf stacks")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_translate)

    s = sub.add_parser("eval", help="PSNR/SSIM report, optional Wilcoxon comparison")
    s.add_argument("--pred", required=True, help="directory of <index>/tgt_<c>.cnsf predictions")
    s.add_argument("--data", required=True, help="split directory with reference tgt_ and mask files")
    s.add_argument("--compare", help="second prediction directory for a paired Wilcoxon test")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("spectrum", help="dataset-averaged radial spectrum profiles")
    s.add_argument("--images", action="append", required=True, help="image directory (repeat, >= 2)")
    s.add_argument("--names", nargs="+")
    s.add_argument("--prefix", default="tgt_")
    s.add_argument("--channel", type=int, default=0)
    s.add_argument("--plot", action="store_true", help="also write spectrum.png (needs matplotlib)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("ablate", help="shift on/off x intensity on/off comparison grid")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int)
    s.add_argument("--n-train", type=int, default=200)
    s.add_argument("--n-val", type=int, default=40)
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    s.add_argument("--configs", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("rerun", help="replay the command recorded in a run manifest")
    s.add_argument("manifest")
    s.add_argument("--out", help="write to a different output directory")
    s.set_defaults(func=cmd_rerun)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    from .train import ConfigError

    try:
        with _deterministic():
            return args.func(args, argv)
    except (CliError, ConfigError, FileNotFoundError, TensorFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver for the full pipeline.

Subcommands share one JSON config file. Artifacts land in the --out
directory under fixed names (prior.bin, encoder_<modality>.bin,
map_table.json, pr_<query>_<gallery>.csv, reports, run_manifest.json),
which is how later stages find the outputs of earlier ones.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric failure.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

from . import __version__
from .config import RunConfig, apply_ablation, config_to_dict, load_config
from .data import load_manifest, synth_generate, write_dataset
from .encoder import load_checkpoint, save_checkpoint
from .errors import ConfigError, FormatError, NumericError
from .evaluate import embed_split, pr_curve, table_from_embeddings, write_map_table, write_pr_csv
from .prior import load_prior, run_spl, save_prior
from .training import train_rsc_all

PRIOR_FILE = "prior.bin"
MAP_FILE = "map_table.json"


def checkpoint_file(modality: str) -> str:
    return f"encoder_{modality}.bin"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dataset_input_files(manifest_path):
    """The manifest plus every data file it references."""
    files = [manifest_path]
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    for entries in raw.get("splits", {}).values():
        for entry in entries:
            for key in ("features", "labels"):
                files.append(os.path.join(base, entry[key]))
    return files


def _write_run_manifest(out_dir, command, cfg, inputs, outputs, t0) -> None:
    manifest = {
        "command": command,
        "config": config_to_dict(cfg),
        "version": __version__,
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "wall_seconds": time.perf_counter() - t0,
    }
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require_manifest(cfg: RunConfig) -> str:
    if not cfg.manifest:
        raise ConfigError("config has no 'manifest' path to a dataset")
    return cfg.manifest


def cmd_synth(cfg: RunConfig, out_dir, config_path, seed_override=None):
    if cfg.synth is None:
        raise ConfigError("config has no 'synth' section")
    t0 = time.perf_counter()
    synth_cfg = cfg.synth
    if seed_override is not None:
        synth_cfg = dataclasses.replace(synth_cfg, seed=seed_override)
    dataset = synth_generate(synth_cfg)
    manifest_path = write_dataset(dataset, out_dir)
    outputs = sorted(os.listdir(out_dir))
    _write_run_manifest(out_dir, "synth", cfg, [config_path], outputs, t0)
    print(f"wrote dataset manifest {manifest_path}")
    return 0


def cmd_spl(cfg: RunConfig, out_dir, config_path, threads: int):
    t0 = time.perf_counter()
    manifest = _require_manifest(cfg)
    dataset = load_manifest(manifest)
    prior, report = run_spl(dataset, cfg, cfg.seed, threads=threads)
    prior_path = os.path.join(out_dir, PRIOR_FILE)
    save_prior(prior_path, prior)
    report_path = os.path.join(out_dir, "spl_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    inputs = [config_path] + _dataset_input_files(manifest)
    _write_run_manifest(out_dir, "spl", cfg, inputs,
                        [PRIOR_FILE, "spl_report.json"], t0)
    if report.skipped:
        print("prior: random orthogonal (selection skipped)")
    else:
        print(f"prior: modality {prior.source_modality!r} "
              f"(score {prior.score:.4f})")
    return 0


def cmd_train(cfg: RunConfig, out_dir, config_path, threads: int):
    t0 = time.perf_counter()
    manifest = _require_manifest(cfg)
    dataset = load_manifest(manifest)
    prior_path = os.path.join(out_dir, PRIOR_FILE)
    prior = load_prior(prior_path)
    encoders, report = train_rsc_all(dataset, prior, cfg, cfg.seed,
                                     threads=threads)
    outputs = []
    for name, params in encoders.items():
        ckpt = checkpoint_file(name)
        save_checkpoint(os.path.join(out_dir, ckpt), params, name)
        outputs.append(ckpt)
    report_path = os.path.join(out_dir, "training_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append("training_report.json")
    inputs = [config_path, prior_path] + _dataset_input_files(manifest)
    _write_run_manifest(out_dir, "train", cfg, inputs, outputs, t0)
    print(f"trained {len(encoders)} encoders "
          f"({time.perf_counter() - t0:.1f}s)")
    return 0


def cmd_eval(cfg: RunConfig, out_dir, config_path):
    t0 = time.perf_counter()
    manifest = _require_manifest(cfg)
    dataset = load_manifest(manifest)
    encoders = {}
    ckpt_paths = []
    for mod in dataset.splits["train"]:
        path = os.path.join(out_dir, checkpoint_file(mod.name))
        params, _ = load_checkpoint(path)
        encoders[mod.name] = params
        ckpt_paths.append(path)
    n_rank = "all" if cfg.n_rank == 0 else cfg.n_rank
    embedded = embed_split(encoders, dataset, "test")
    table = table_from_embeddings(embedded, n_rank)
    write_map_table(os.path.join(out_dir, MAP_FILE), table)
    outputs = [MAP_FILE]
    for a in embedded:
        for b in embedded:
            if a == b:
                continue
            qe, ql = embedded[a]
            ge, gl = embedded[b]
            name = f"pr_{a}_{b}.csv"
            write_pr_csv(os.path.join(out_dir, name), pr_curve(qe, ql, ge, gl))
            outputs.append(name)
    inputs = [config_path] + ckpt_paths + _dataset_input_files(manifest)
    _write_run_manifest(out_dir, "eval", cfg, inputs, outputs, t0)
    print(f"MAP@{table['n_rank']} avg {table['avg']:.4f} "
          f"over {len(table['pairs'])} pairs")
    return 0


def cmd_pipeline(cfg: RunConfig, out_dir, config_path, threads: int):
    for stage, fn in (("spl", lambda: cmd_spl(cfg, out_dir, config_path, threads)),
                      ("train", lambda: cmd_train(cfg, out_dir, config_path, threads)),
                      ("eval", lambda: cmd_eval(cfg, out_dir, config_path))):
        try:
            fn()
        except Exception as exc:
            print(f"pipeline stage {stage!r} failed: {exc}", file=sys.stderr)
            raise
    return 0


def _parse_n_rank(text: str) -> int:
    if text == "all":
        return 0
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"--n-rank must be 'all' or a positive integer, got {text!r}")
    if value < 1:
        raise ConfigError(f"--n-rank must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="priorcast",
        description="Cross-modal retrieval via prior selection and label recasting")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("synth", "generate a synthetic multimodal dataset"),
            ("spl", "learn and select the shared prior"),
            ("train", "train per-modality encoders against a saved prior"),
            ("eval", "score cross-modal retrieval from saved checkpoints"),
            ("pipeline", "spl + train + eval in one run")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=1,
                       help="per-modality parallelism (default 1, bit-reproducible)")
        p.add_argument("--ablation", default=None,
                       help="apply a named ablation preset")
        p.add_argument("--n-rank", default=None,
                       help="ranking depth: 'all' or a positive integer")
    return parser


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.ablation:
        cfg = apply_ablation(cfg, args.ablation)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {args.seed}")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.n_rank is not None:
        cfg = dataclasses.replace(cfg, n_rank=_parse_n_rank(args.n_rank))
    if args.threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}")
    os.makedirs(args.out, exist_ok=True)
    if args.command == "synth":
        return cmd_synth(cfg, args.out, args.config, seed_override=args.seed)
    if args.command == "spl":
        return cmd_spl(cfg, args.out, args.config, args.threads)
    if args.command == "train":
        return cmd_train(cfg, args.out, args.config, args.threads)
    if args.command == "eval":
        return cmd_eval(cfg, args.out, args.config)
    return cmd_pipeline(cfg, args.out, args.config, args.threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

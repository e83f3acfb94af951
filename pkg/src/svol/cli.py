"""Command-line front end: ``svol gen-data | train | eval | transfer-eval | verify``.

Exit codes: 0 success, 1 validation error (bad flags, config or protocol),
2 runtime or numeric failure.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from .errors import ConfigError, SvolError
from .synth.render import PRESETS


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _styles(value: str) -> list[str]:
    styles = [s for s in value.split(",") if s]
    bad = [s for s in styles if s not in PRESETS]
    if bad or not styles:
        raise argparse.ArgumentTypeError(f"unknown style preset(s) {bad or value!r}; choose from {sorted(PRESETS)}")
    return styles


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _write_json(path: Path, obj) -> None:
    path.write_text(_dump(obj) + "\n")


# ------------------------------------------------------------------ commands


def cmd_gen_data(args) -> int:
    from .synth.dataset import SPLITS, build_dataset, curate_pairs, dataset_stats, save_dataset

    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            print(f"refusing to write into non-empty {out} (use --force)", file=sys.stderr)
            return 1
        for sub in ("clips", "sketches", "gt"):
            shutil.rmtree(out / sub, ignore_errors=True)
        (out / "manifest.json").unlink(missing_ok=True)
        (out / "stats.json").unlink(missing_ok=True)
    ds = build_dataset(seed=args.seed, n_clips=args.clips, n_categories=args.categories,
                       styles=args.style, eval_fraction=args.eval_fraction, frames=args.frames,
                       image_size=args.image_size, max_objects=args.max_objects)
    save_dataset(ds, out)
    pairs = []
    for split in SPLITS:
        clips = [ds.clips[c] for c in ds.clip_ids(split)]
        pairs += curate_pairs(clips, ds.sketch_list(split), split)
    stats = dataset_stats(pairs, max_instances=args.max_objects)
    _write_json(out / "stats.json", stats)
    print(_dump(stats))
    return 0


def _config(args, **flags):
    from .config import load_config

    return load_config(getattr(args, "config", None), getattr(args, "set", None), **flags)


def cmd_train(args) -> int:
    from .train import load_state, open_dataset, resolve_protocol, run_meta, save_state, train

    cfg = _config(args, seed=args.seed, **{"schedule.iterations": args.iterations,
                                           "data.root": args.data, "out": args.out})
    out = Path(cfg.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    ds = open_dataset(cfg)
    proto = resolve_protocol(cfg, ds)
    if not proto.train:
        raise ConfigError("no training pairs under this protocol")
    state = load_state(args.resume, cfg) if args.resume else None
    log_path = out / "train_log.jsonl"
    if state is None and log_path.exists():
        log_path.unlink()
    meta = run_meta(cfg, proto)
    _write_json(out / "config.json", cfg.to_dict())
    state = train(cfg, ds, proto.train, state, log_path=log_path,
                  on_log=lambda line: print(json.dumps(line), flush=True) if not args.quiet else None)
    ckpt = out / "checkpoint.bin"
    save_state(ckpt, state, meta)
    print(f"wrote {ckpt} after {state.iteration} iterations")
    return 0


def _open_checkpoint(args, cfg):
    from .train import check_meta, load_meta, load_state

    meta = load_meta(args.checkpoint)
    check_meta(meta, cfg)
    return meta, load_state(args.checkpoint, cfg)


def _config_for_checkpoint(args, **flags):
    """The explicit ``--config`` if given, else the configuration stored with the checkpoint."""
    from .config import RunConfig, load_config
    from .train import load_meta

    if args.config is None and not args.set:
        d = load_meta(args.checkpoint)["config"]
        for key, value in flags.items():
            if value is not None:
                section, _, name = key.partition(".")
                if name:
                    d.setdefault(section, {})[name] = value
                else:
                    d[key] = value
        return RunConfig.from_dict(d).validate()
    return load_config(args.config, args.set, **flags)


def _emit_eval(out: Path, rep: dict, records) -> None:
    from .metrics import write_report, write_sample_csv

    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "metrics.json", rep)
    write_sample_csv(out / "samples.csv", records)
    print(_dump(rep))


def cmd_eval(args) -> int:
    from .train import (eval_report, evaluate, mean_loss, model_predictor, open_dataset,
                        resolve_protocol)

    cfg = _config_for_checkpoint(args, **{"data.root": args.data, "matching": args.matching})
    meta, state = _open_checkpoint(args, cfg)
    ds = open_dataset(cfg)
    proto = resolve_protocol(cfg, ds)
    records = evaluate(model_predictor(state.model), cfg, ds, proto.eval)
    loss = mean_loss(state.model, cfg, ds, proto.eval, matching=cfg.matching)
    rep = eval_report(records, matching=cfg.matching, set_loss=loss, protocol=proto.info["mode"])
    _emit_eval(Path(args.out or Path(args.checkpoint).parent / "eval"), rep, records)
    return 0


def cmd_transfer_eval(args) -> int:
    from .train import (eval_report, evaluate, model_predictor, open_dataset, resolve_protocol,
                        transfer_split_info)

    cfg = _config_for_checkpoint(args, **{"data.root": args.data, "protocol.mode": args.mode})
    meta, state = _open_checkpoint(args, cfg)
    ds = open_dataset(cfg)
    proto = resolve_protocol(cfg, ds)
    split = transfer_split_info(meta, cfg, proto, args.mode)
    records = evaluate(model_predictor(state.model), cfg, ds, proto.eval)
    rep = eval_report(records, split=split)
    _emit_eval(Path(args.out or Path(args.checkpoint).parent / f"transfer-{args.mode}"), rep, records)
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all()
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return 2 if failed else 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="svol", description="Sketch-queried video object localisation toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--clips", type=int, default=640)
    g.add_argument("--categories", type=int, default=12)
    g.add_argument("--style", type=_styles, default=["realistic"],
                   help=f"comma-separated presets from {sorted(PRESETS)}")
    g.add_argument("--eval-fraction", type=float, default=0.2)
    g.add_argument("--frames", type=int, default=32)
    g.add_argument("--image-size", type=int, default=32)
    g.add_argument("--max-objects", type=int, default=3)
    g.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    g.set_defaults(func=cmd_gen_data)

    def config_flags(q, config_required):
        q.add_argument("--config", required=config_required)
        q.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. optim.lr=1e-3 (repeatable)")

    t = sub.add_parser("train", help="train a model")
    config_flags(t, True)
    t.add_argument("--out")
    t.add_argument("--data", help="dataset directory (overrides data.root)")
    t.add_argument("--seed", type=int)
    t.add_argument("--iterations", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the evaluation pairs")
    config_flags(e, False)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data")
    e.add_argument("--matching", choices=["per-frame", "whole-video"])
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("transfer-eval", help="dataset- or category-level transfer evaluation")
    config_flags(x, False)
    x.add_argument("--mode", choices=["dataset", "category"], required=True)
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--data")
    x.add_argument("--out")
    x.set_defaults(func=cmd_transfer_eval)

    v = sub.add_parser("verify", help="run the oracle, gradient and metric suites")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SvolError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

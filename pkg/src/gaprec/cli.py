"""Command-line pipeline: prep, synth, train, eval, infer, ablate.

Configuration is one flat key=value namespace resolved from an optional
config file plus repeatable --set overrides; unknown keys are rejected
and every run drops a resolved-config snapshot into its output
directory so results can be reproduced byte for byte.  Report paths
write delimited files and render a PNG next to each.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import data as dataio
from .errors import ConfigError, DataError, GaprecError
from .figures import render_metric_bars, render_training_curves
from .metrics import EvalReport, evaluate_last_item, save_report
from .models import MODEL_KINDS, ModelConfig, MostPopModel, infer_next_topN
from .seeding import child_seed
from .synthetic import REGIMES, SyntheticSpec, generate_synthetic
from .training import TrainConfig, train, write_training_log

# one flat namespace: (type, default); booleans ride as on/off/auto strings
CONFIG_SCHEMA = {
    "min_item_count": (int, 20),
    "session_len": (int, 20),
    "min_session_len": (int, 5),
    "train_frac": (float, 0.8),
    "valid_frac": (float, 0.1),
    "test_frac": (float, 0.1),
    "synth_items": (int, 100),
    "synth_sessions": (int, 20000),
    "synth_regime": (str, "markov"),
    "successor_prob": (float, 0.8),
    "n_triggers": (int, 0),
    "basket_size": (int, 3),
    "embed_dim": (int, 64),
    "proj_dim": (int, 0),
    "kernel_width": (int, 3),
    "encoder_dilations": (str, "1,2,4,8,1,2,4,8"),
    "decoder_dilations": (str, "1,2,4,8,1,2,4,8"),
    "use_projector": (str, "auto"),
    "gap_fraction": (float, 0.5),
    "learning_rate": (float, 0.001),
    "batch_size": (int, 256),
    "max_epochs": (int, 20),
    "patience": (int, 3),
    "max_steps": (int, 0),
    "topn": (int, 10),
    "gammas": (str, "0.1,0.3,0.5,0.7,1.0"),
    "variants": (str, ""),
    "ablate_seeds": (str, ""),
    "seed": (int, 0),
}

# ablation variant labels resolve to (model kind, projector on)
VARIANT_TABLE = {
    "grec": ("grec", True),
    "grecn": ("grec", False),
    "nextitnet": ("nextitnet", False),
    "nextitnetp": ("nextitnet", True),
    "nextitnet_plus": ("nextitnet_plus", False),
    "tnextitnet": ("tnextitnet", False),
    "encoder_only": ("encoder_only", False),
    "mostpop": ("mostpop", False),
}


def _convert(key: str, text: str):
    caster = CONFIG_SCHEMA[key][0]
    try:
        return caster(text)
    except ValueError:
        raise ConfigError(f"config key '{key}' expects {caster.__name__}, "
                          f"got '{text}'")


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, "
                              f"got '{line}'")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        out[key] = _convert(key, value.strip())
    return out


def resolve_config(args) -> dict:
    cfg = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, value = item.split("=", 1)
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")
        cfg[key] = _convert(key, value)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def write_snapshot(out_dir: Path, cfg: dict, name: str, extras: dict) -> Path:
    """Resolved-config snapshot: extras first, then every key in schema order."""
    lines = [f"{k}={v}" for k, v in extras.items()]
    lines += [f"{key}={cfg[key]}" for key in CONFIG_SCHEMA]
    path = out_dir / f"config_{name}.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_int_list(text: str, key: str) -> tuple:
    if not text.strip():
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"config key '{key}' expects comma-separated "
                          f"integers, got '{text}'")


def _parse_float_list(text: str, key: str) -> tuple:
    if not text.strip():
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"config key '{key}' expects comma-separated "
                          f"floats, got '{text}'")


def _resolve_projector(setting: str, kind: str) -> bool:
    if setting == "auto":
        return kind == "grec"
    if setting in ("on", "off"):
        return setting == "on"
    raise ConfigError(f"use_projector must be auto, on, or off, "
                      f"got '{setting}'")


def _model_config(cfg: dict, vocab_size: int, session_len: int,
                  kind: str, use_projector: bool | None = None) -> ModelConfig:
    if use_projector is None:
        use_projector = _resolve_projector(cfg["use_projector"], kind)
    return ModelConfig(
        vocab_size=vocab_size,
        session_len=session_len,
        embed_dim=cfg["embed_dim"],
        proj_dim=cfg["proj_dim"],
        kernel_width=cfg["kernel_width"],
        encoder_dilations=_parse_int_list(cfg["encoder_dilations"],
                                          "encoder_dilations"),
        decoder_dilations=_parse_int_list(cfg["decoder_dilations"],
                                          "decoder_dilations"),
        gap_fraction=cfg["gap_fraction"],
        use_projector=use_projector,
    )


def _train_config(cfg: dict, kind: str, seed: int | None = None) -> TrainConfig:
    return TrainConfig(
        model_kind=kind,
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        max_epochs=cfg["max_epochs"],
        patience=cfg["patience"],
        gap_fraction=cfg["gap_fraction"],
        seed=cfg["seed"] if seed is None else seed,
        max_steps=cfg["max_steps"],
    )


def _print_counts(pairs) -> None:
    width = max(len(label) for label, _ in pairs)
    for label, value in pairs:
        print(f"{label:<{width}}  {value}")


def _write_splits(out: Path, splits, vocab_size: int) -> None:
    for name, rows in zip(("train", "valid", "test"), splits):
        if rows.shape[0] == 0:
            raise DataError(f"{name} split is empty; add data or adjust "
                            f"fractions")
        dataio.write_sessions(out / f"{name}.txt", rows, vocab_size)


def _load_split(data_dir: Path, name: str):
    path = Path(data_dir) / f"{name}.txt"
    if not path.exists():
        raise DataError(f"missing session file {path}")
    return dataio.read_sessions(path)


# ---------------------------------------------------------------------------
# commands


def cmd_prep(args, cfg) -> None:
    out = _out_dir(args)
    events = dataio.read_events(args.input)
    if not events:
        raise DataError(f"event file {args.input} contains no events")
    vocab = dataio.build_vocabulary(events, cfg["min_item_count"])
    if vocab.size == 0:
        raise DataError(f"min_item_count={cfg['min_item_count']} leaves an "
                        f"empty vocabulary; lower it or add data")
    streams = dataio.user_streams(events, vocab)
    rows = dataio.segment_sessions(streams, cfg["session_len"],
                                   cfg["min_session_len"])
    if rows.shape[0] == 0:
        raise DataError("no sessions survive segmentation; check session_len "
                        "and min_session_len")
    fractions = (cfg["train_frac"], cfg["valid_frac"], cfg["test_frac"])
    splits = dataio.split_dataset(rows, fractions,
                                  child_seed(cfg["seed"], "split"))
    _write_splits(out, splits, vocab.size)
    dataio.write_vocabulary(out / "vocab.tsv", vocab)
    write_snapshot(out, cfg, "prep", {"command": "prep", "input": args.input})
    _print_counts([
        ("users", len(streams)),
        ("events kept", sum(len(s) for s in streams)),
        ("items (V)", vocab.size),
        ("sessions", rows.shape[0]),
        ("train", splits[0].shape[0]),
        ("valid", splits[1].shape[0]),
        ("test", splits[2].shape[0]),
    ])


def cmd_synth(args, cfg) -> None:
    out = _out_dir(args)
    spec = SyntheticSpec(
        n_items=cfg["synth_items"],
        n_sessions=cfg["synth_sessions"],
        session_len=cfg["session_len"],
        regime=cfg["synth_regime"],
        seed=cfg["seed"],
        successor_prob=cfg["successor_prob"],
        n_triggers=cfg["n_triggers"],
        basket_size=cfg["basket_size"],
    )
    rows = generate_synthetic(spec)
    fractions = (cfg["train_frac"], cfg["valid_frac"], cfg["test_frac"])
    splits = dataio.split_dataset(rows, fractions,
                                  child_seed(cfg["seed"], "split"))
    _write_splits(out, splits, spec.n_items)
    items = [str(i) for i in range(1, spec.n_items + 1)]
    vocab = dataio.Vocabulary({it: i + 1 for i, it in enumerate(items)},
                              ["<pad>"] + items)
    dataio.write_vocabulary(out / "vocab.tsv", vocab)
    write_snapshot(out, cfg, "synth", {"command": "synth"})
    _print_counts([
        ("regime", spec.regime),
        ("items (V)", spec.n_items),
        ("sessions", rows.shape[0]),
        ("train", splits[0].shape[0]),
        ("valid", splits[1].shape[0]),
        ("test", splits[2].shape[0]),
    ])


def _arch_kind(kind: str) -> str:
    # the augmentation variant trains the plain next-item architecture
    return "nextitnet" if kind == "nextitnet_plus" else kind


def cmd_train(args, cfg) -> None:
    out = _out_dir(args)
    kind = args.model
    train_rows, k, vocab_size = _load_split(args.data, "train")
    valid_rows, k2, v2 = _load_split(args.data, "valid")
    if (k2, v2) != (k, vocab_size):
        raise DataError(f"train/valid headers disagree: k={k} V={vocab_size} "
                        f"vs k={k2} V={v2}")
    model_config = _model_config(cfg, vocab_size, k, _arch_kind(kind))
    train_config = _train_config(cfg, kind)
    write_snapshot(out, cfg, f"train_{kind}",
                   {"command": "train", "model": kind, "data": args.data})
    result = train(train_rows, valid_rows, model_config, train_config)
    ckpt.save_checkpoint(out / f"{kind}.ckpt", result.model)
    write_training_log(out / f"{kind}_train_log.csv", result.log_rows)
    if result.log_rows:
        render_training_curves(result.log_rows,
                               out / f"{kind}_train_curves.png")
    if result.report is not None:
        save_report(result.report, out / f"{kind}_valid_report.txt")
        print(result.report.to_text(), end="")
    print(f"best_epoch={result.best_epoch}")
    print(f"checkpoint={out / f'{kind}.ckpt'}")


def cmd_eval(args, cfg) -> None:
    out = _out_dir(args)
    kind = args.model
    rows, k, vocab_size = _load_split(args.data, args.split)
    if kind == "mostpop":
        train_rows, _, _ = _load_split(args.data, "train")
        model = MostPopModel(ModelConfig(
            vocab_size=vocab_size, session_len=k,
            gap_fraction=cfg["gap_fraction"])).fit(train_rows)
    else:
        path = Path(args.checkpoint) if args.checkpoint \
            else out / f"{kind}.ckpt"
        model = ckpt.load_checkpoint(path, expected_kind=_arch_kind(kind))
        if model.config.vocab_size != vocab_size or \
                model.config.session_len != k:
            raise DataError(
                f"checkpoint grid (V={model.config.vocab_size}, "
                f"t={model.config.session_len}) does not match data "
                f"(V={vocab_size}, t={k})")
    write_snapshot(out, cfg, f"eval_{kind}_{args.split}",
                   {"command": "eval", "model": kind, "data": args.data,
                    "split": args.split})
    report = evaluate_last_item(model, rows, seed=cfg["seed"])
    save_report(report, out / f"eval_{kind}_{args.split}.txt")
    print(report.to_text(), end="")


def cmd_infer(args, cfg) -> None:
    try:
        prefix = [int(v) for v in args.prefix.split()]
    except ValueError:
        raise ConfigError(f"--prefix expects space-separated item indices, "
                          f"got '{args.prefix}'")
    kind = args.model
    if kind == "mostpop":
        if not args.data:
            raise ConfigError("--model mostpop needs --data for its counts")
        train_rows, k, vocab_size = _load_split(args.data, "train")
        model = MostPopModel(ModelConfig(
            vocab_size=vocab_size, session_len=k)).fit(train_rows)
    else:
        if not args.checkpoint:
            raise ConfigError("infer needs --checkpoint (or --model mostpop)")
        model = ckpt.load_checkpoint(args.checkpoint,
                                     expected_kind=_arch_kind(kind)
                                     if kind else None)
    ranked = infer_next_topN(model, np.asarray(prefix, dtype=np.int64),
                             cfg["topn"])
    lines = [f"{item}\t{score:.6f}" for item, score in ranked]
    print("\n".join(lines))
    if args.out:
        out = _out_dir(args)
        write_snapshot(out, cfg, "infer",
                       {"command": "infer", "prefix": args.prefix})
        (out / "infer_topn.txt").write_text("\n".join(lines) + "\n")


def _ablate_grid(cfg) -> list[tuple[str, str, bool, float]]:
    """(label, kind, use_projector, gap_fraction) per configuration."""
    grid = []
    for gamma in _parse_float_list(cfg["gammas"], "gammas"):
        grid.append((f"grec@g{gamma:g}", "grec", True, gamma))
    variants = [v.strip() for v in cfg["variants"].split(",") if v.strip()]
    for label in variants:
        if label not in VARIANT_TABLE:
            raise ConfigError(f"unknown ablation variant '{label}', expected "
                              f"one of {sorted(VARIANT_TABLE)}")
        kind, projector = VARIANT_TABLE[label]
        grid.append((label, kind, projector, cfg["gap_fraction"]))
    if not grid:
        raise ConfigError("ablation grid is empty: set gammas and/or variants")
    return grid


def cmd_ablate(args, cfg) -> None:
    out = _out_dir(args)
    train_rows, k, vocab_size = _load_split(args.data, "train")
    valid_rows, _, _ = _load_split(args.data, "valid")
    test_rows, _, _ = _load_split(args.data, "test")
    grid = _ablate_grid(cfg)
    seeds = _parse_int_list(cfg["ablate_seeds"], "ablate_seeds") or \
        (cfg["seed"],)
    write_snapshot(out, cfg, "ablate",
                   {"command": "ablate", "data": args.data})
    lines = ["config," + EvalReport.csv_header()]
    means = []
    for label, kind, projector, gamma in grid:
        per_seed = []
        for seed in seeds:
            model_config = _model_config(cfg, vocab_size, k, _arch_kind(kind),
                                         use_projector=projector)
            model_config.gap_fraction = gamma
            train_config = _train_config(cfg, kind, seed=seed)
            train_config.gap_fraction = gamma
            result = train(train_rows, valid_rows, model_config, train_config)
            report = evaluate_last_item(result.model, test_rows, seed=seed,
                                        epoch=result.best_epoch)
            lines.append(f"{label},{report.to_csv_row()}")
            per_seed.append(report.mrr5)
            print(f"{label} seed={seed} test_mrr5={report.mrr5:.6f}")
        means.append(float(np.mean(per_seed)))
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")
    render_metric_bars([g[0] for g in grid], means, "test MRR@5",
                       out / "ablation_mrr5.png")
    print(f"matrix={out / 'ablation.csv'}")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaprec",
        description="Gap-filling encoder-decoder pipeline for session-based "
                    "next-item prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("prep", help="segment a raw event log into sessions")
    p.add_argument("--input", required=True, help="raw user/item/timestamp TSV")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("synth", help="generate a planted-pattern corpus")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model on prepared sessions")
    p.add_argument("--data", required=True, help="directory from prep/synth")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--split", default="test",
                   choices=("train", "valid", "test"))
    p.add_argument("--checkpoint", help="defaults to <out>/<model>.ckpt")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="rank the next item after a prefix")
    p.add_argument("--checkpoint")
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--data", help="needed for --model mostpop")
    p.add_argument("--prefix", required=True,
                   help="space-separated item indices")
    p.add_argument("--out", help="also write the ranking to this directory")
    common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train a grid of configurations")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        args.func(args, cfg)
        return 0
    except GaprecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

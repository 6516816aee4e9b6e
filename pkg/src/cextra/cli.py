"""Command-line entry points: generate, train-c2p, train-ce, eval, ablate, bench.

Settings come from an optional key=value file (--config) overridden by
repeated --set KEY=VALUE flags. Each command consumes the keys it knows
(documented in the README) and rejects anything left over, so typos fail
loudly instead of silently training with defaults.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields as dc_fields

from . import checkpoint, dataio, harness, train
from .features import FEATURE_VARIANTS, variant_channels
from .model import ExtrapolatorConfig

DEFAULT_PERCENTAGES = (5, 10, 15, 20, 25)


def _coerce(text: str):
    t = text.strip()
    if "," in t:
        return tuple(_coerce(p) for p in t.split(","))
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    return t


def read_config_file(path) -> dict:
    settings = {}
    with open(path) as f:
        for ln, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value, got {raw.strip()!r}")
            key, val = line.split("=", 1)
            settings[key.strip()] = _coerce(val)
    return settings


def gather_settings(args) -> dict:
    settings = read_config_file(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set needs KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        settings[key.strip()] = _coerce(val)
    return settings


def _take(settings: dict, cls, **fixed):
    """Build a dataclass from matching keys, consuming them from settings."""
    names = {f.name for f in dc_fields(cls)}
    clash = sorted(set(fixed) & set(settings))
    if clash:
        raise ValueError(f"settings {clash} are derived from the dataset/variant "
                         f"and cannot be overridden")
    kwargs = {k: settings.pop(k) for k in list(settings) if k in names}
    kwargs.update(fixed)
    return cls(**kwargs)


def _reject_leftovers(settings: dict, command: str):
    if settings:
        raise ValueError(f"unknown settings for {command}: {sorted(settings)}")


def _index_list(value) -> list[int]:
    items = value if isinstance(value, tuple) else (value,)
    if not all(isinstance(i, int) for i in items):
        raise ValueError(f"expected integer indices, got {value!r}")
    return list(items)


def _percentage_list(value) -> list:
    return list(value) if isinstance(value, tuple) else [value]


def _named_pairs(items, flag: str) -> list[tuple[str, str]]:
    pairs = []
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"{flag} needs NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        pairs.append((name.strip(), path))
    return pairs


def _print_rows(rows: list[dict]):
    cols = list(rows[0].keys())
    widths = [max(len(c), *(len(_cell(r[c])) for r in rows)) for c in cols]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for r in rows:
        print("  ".join(_cell(r[c]).ljust(w) for c, w in zip(cols, widths)))


def _cell(v) -> str:
    return f"{v:.3f}" if isinstance(v, float) else str(v)


# -- commands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    s = gather_settings(args)
    preset = s.pop("preset", "wideband-3p5ghz")
    n_samples = s.pop("n_samples", 2000)
    include_pdp = s.pop("include_pdp", True)
    route = dataio.RouteConfig() if s.pop("route", False) else None
    _reject_leftovers(s, "generate")
    ds = dataio.generate_dataset(preset, n_samples, args.seed,
                                 include_pdp=include_pdp, route=route)
    dataio.save_dataset(ds, args.out)
    kind = "route positions" if route else "scenes"
    print(f"wrote {ds.n_samples} {kind} ({preset}, seed {args.seed}) to {args.out}")
    return 0


def cmd_train_c2p(args) -> int:
    ds = dataio.load_dataset(args.dataset)
    pdps, vecs = ds.pair_view()
    s = gather_settings(args)
    cfg = _take(s, train.C2PTrainConfig)
    _reject_leftovers(s, "train-c2p")
    coder, history = train.train_c2p(pdps, vecs, cfg, args.seed, bin_width=ds.bin_width)
    checkpoint.save_coder(args.out, coder)
    if args.history:
        train.write_history(args.history, history)
    last = history[-1]
    print(f"trained profile coder on {len(pdps)} pairs: train {last['train_loss']:.4f} "
          f"test {last['test_loss']:.4f} after {cfg.epochs} epochs -> {args.out}")
    return 0


def _feature_sources(args, model_has_mp: bool):
    if not model_has_mp:
        return None, False
    if args.c2p:
        return checkpoint.load_coder(args.c2p), True
    if args.gt_pdp:
        return None, True
    raise ValueError("this model uses multipath features: pass --c2p CKPT "
                     "or --gt-pdp to use stored ground-truth profiles")


def cmd_train_ce(args) -> int:
    ds = dataio.load_dataset(args.dataset)
    s = gather_settings(args)
    variant = s.pop("feature_variant", "summary")
    if variant not in FEATURE_VARIANTS:
        raise ValueError(f"feature_variant must be one of {FEATURE_VARIANTS}, got {variant!r}")
    subs = _index_list(s.pop("subcarriers")) if "subcarriers" in s else None
    fusion = s.get("fusion", "mp_query")

    n, m, k, _ = ds.csi.shape
    model_cfg = _take(s, ExtrapolatorConfig, n_rx=m, n_tx=k, csi_channels=2,
                      mp_channels=variant_channels(variant) if fusion != "none" else 2)
    cfg = _take(s, train.CETrainConfig)
    _reject_leftovers(s, "train-ce")

    coder, _ = _feature_sources(args, fusion != "none")
    x_csi, x_mp = train.prepare_ce_arrays(ds, coder, variant if fusion != "none" else None, subs)
    model, csi_stats, mp_stats, history = train.train_ce(x_csi, x_mp, model_cfg, cfg, args.seed)
    checkpoint.save_extrapolator(args.out, model, csi_stats, mp_stats, variant)
    if args.history:
        train.write_history(args.history, history)
    last = history[-1]
    print(f"trained {fusion} extrapolator on {len(x_csi)} slices: "
          f"train {last['train_loss']:.4f} test {last['test_loss']:.4f} -> {args.out}")
    return 0


def _eval_settings(s):
    pcts = _percentage_list(s.pop("percentages", DEFAULT_PERCENTAGES))
    n_seeds = s.pop("mask_seeds", 3)
    subs = _index_list(s.pop("subcarriers")) if "subcarriers" in s else None
    return pcts, n_seeds, subs


def cmd_eval(args) -> int:
    model, csi_stats, mp_stats, variant = checkpoint.load_extrapolator(args.ckpt)
    ds = dataio.load_dataset(args.dataset)
    s = gather_settings(args)
    pcts, n_seeds, subs = _eval_settings(s)
    _reject_leftovers(s, "eval")

    coder, _ = _feature_sources(args, model.has_mp)
    x_csi, x_mp = train.prepare_ce_arrays(ds, coder, variant if model.has_mp else None, subs)
    rows = harness.evaluate_arrays(model, csi_stats, mp_stats, x_csi, x_mp,
                                   pcts, n_seeds=n_seeds, base_seed=args.seed)
    harness.write_rows(args.out, rows)
    _print_rows(rows)
    return 0


def cmd_ablate(args) -> int:
    s = gather_settings(args)
    pcts, n_seeds, subs = _eval_settings(s)
    _reject_leftovers(s, "ablate")

    datasets = [("main", args.dataset)]
    datasets += _named_pairs(args.extra_dataset, "--extra-dataset")
    loaded = [(name, dataio.load_dataset(path)) for name, path in datasets]

    named_models = []
    named_arrays = []
    csi_cache = {}
    for variant_name, path in _named_pairs(args.ckpt, "--ckpt"):
        model, csi_stats, mp_stats, feat_variant = checkpoint.load_extrapolator(path)
        coder, _ = _feature_sources(args, model.has_mp)
        mp_by_ds = {}
        for ds_name, ds in loaded:
            x_csi, x_mp = train.prepare_ce_arrays(
                ds, coder, feat_variant if model.has_mp else None, subs)
            csi_cache.setdefault(ds_name, x_csi)
            mp_by_ds[ds_name] = x_mp
        named_models.append((variant_name, model, csi_stats, mp_stats, mp_by_ds))
    named_arrays = [(name, csi_cache[name]) for name, _ in loaded]

    rows = harness.ablation_rows(named_models, named_arrays, pcts,
                                 n_seeds=n_seeds, base_seed=args.seed)
    harness.write_rows(args.out, rows)
    _print_rows(rows)
    return 0


def cmd_bench(args) -> int:
    s = gather_settings(args)
    pcts = _percentage_list(s.pop("percentages", DEFAULT_PERCENTAGES))
    n_runs = s.pop("runs", 200)
    n_warmup = s.pop("warmup", 10)
    subs = _index_list(s.pop("subcarriers")) if "subcarriers" in s else None
    _reject_leftovers(s, "bench")

    ds = dataio.load_dataset(args.dataset)
    named_models = []
    x_mp_by_variant = {}
    for variant_name, path in (("proposed", args.ckpt), ("baseline", args.baseline)):
        model, csi_stats, mp_stats, feat_variant = checkpoint.load_extrapolator(path)
        coder, _ = _feature_sources(args, model.has_mp)
        x_csi, x_mp = train.prepare_ce_arrays(
            ds, coder, feat_variant if model.has_mp else None, subs)
        named_models.append((variant_name, model, csi_stats, mp_stats))
        x_mp_by_variant[variant_name] = x_mp

    rows = harness.bench_latency(named_models, x_csi, x_mp_by_variant, pcts,
                                 n_runs=n_runs, n_warmup=n_warmup, base_seed=args.seed)
    harness.write_rows(args.out, rows)
    print("single-sample wall-clock latency (hardware-dependent):")
    _print_rows(rows)
    return 0


# -- parser -------------------------------------------------------------------


def _common_flags(sp, seed_required: bool):
    sp.add_argument("--config", help="key=value settings file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override one setting (repeatable)")
    if seed_required:
        sp.add_argument("--seed", type=int, required=True, help="run seed (required)")
    else:
        sp.add_argument("--seed", type=int, default=0, help="mask-draw seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cextra",
        description="Channel extrapolation toolkit: synthetic MIMO scenes, "
                    "profile-coder and masked-autoencoder training, evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a scene dataset")
    g.add_argument("out", help="output dataset path")
    _common_flags(g, seed_required=True)
    g.set_defaults(fn=cmd_generate)

    tc = sub.add_parser("train-c2p", help="train the profile coder")
    tc.add_argument("dataset")
    tc.add_argument("out", help="checkpoint path to write")
    tc.add_argument("--history", help="write per-epoch losses to this CSV")
    _common_flags(tc, seed_required=True)
    tc.set_defaults(fn=cmd_train_c2p)

    te = sub.add_parser("train-ce", help="train the channel extrapolator")
    te.add_argument("dataset")
    te.add_argument("out", help="checkpoint path to write")
    te.add_argument("--c2p", help="profile-coder checkpoint for feature inference")
    te.add_argument("--gt-pdp", action="store_true",
                    help="use stored ground-truth profiles instead of a coder")
    te.add_argument("--history", help="write per-epoch losses to this CSV")
    _common_flags(te, seed_required=True)
    te.set_defaults(fn=cmd_train_ce)

    ev = sub.add_parser("eval", help="error sweep over known-CSI percentages")
    ev.add_argument("ckpt")
    ev.add_argument("dataset")
    ev.add_argument("--out", required=True, help="CSV to write")
    ev.add_argument("--c2p")
    ev.add_argument("--gt-pdp", action="store_true")
    _common_flags(ev, seed_required=False)
    ev.set_defaults(fn=cmd_eval)

    ab = sub.add_parser("ablate", help="compare checkpoints across datasets")
    ab.add_argument("dataset", help="primary dataset (named 'main' in the output)")
    ab.add_argument("--ckpt", action="append", required=True, metavar="NAME=PATH",
                    help="checkpoint to include (repeatable)")
    ab.add_argument("--extra-dataset", action="append", metavar="NAME=PATH",
                    help="additional dataset, e.g. an alternate carrier (repeatable)")
    ab.add_argument("--out", required=True, help="CSV to write")
    ab.add_argument("--c2p")
    ab.add_argument("--gt-pdp", action="store_true")
    _common_flags(ab, seed_required=False)
    ab.set_defaults(fn=cmd_ablate)

    be = sub.add_parser("bench", help="single-sample latency for two checkpoints")
    be.add_argument("ckpt", help="proposed-model checkpoint")
    be.add_argument("baseline", help="baseline checkpoint")
    be.add_argument("dataset")
    be.add_argument("--out", required=True, help="CSV to write")
    be.add_argument("--c2p")
    be.add_argument("--gt-pdp", action="store_true")
    _common_flags(be, seed_required=False)
    be.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``mixforge {mix,grid,stats,train,bench}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import netpbm
from .config import (
    bench_configs_from,
    config_hash,
    env_seed,
    read_config,
    train_config_from,
)
from .core import PairIndex, beta_draws, derive_seed, one_hot, substream, STREAM_MISC
from .errors import ConfigError, FormatError, MixforgeError, ParameterError
from .harness import bench, load_dataset, train
from .policies import POLICIES, PolicyConfig, apply_policy
from .saliency import spectral_residual_saliency

log = logging.getLogger("mixforge")

STATS_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class UsageError(MixforgeError):
    pass


def _parse_params(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _seed(arg: int) -> int:
    override = env_seed()
    return arg if override is None else override


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_pair(paths: Sequence[str]) -> list[np.ndarray]:
    imgs = [netpbm.read(p) for p in paths]
    if imgs[0].shape != imgs[1].shape:
        raise ParameterError(f"pair shapes differ: {imgs[0].shape} vs {imgs[1].shape}")
    return imgs


def _read_weight_map(path: str, shape: tuple[int, int]) -> np.ndarray:
    m = netpbm.read(path)
    if m.shape[2] != 1:
        m = m.mean(axis=2, keepdims=True)
    if m.shape[:2] != shape:
        raise ParameterError(f"weight map {path} is {m.shape[:2]}, images are {shape}")
    return m[:, :, 0]


def _img_suffix(x: np.ndarray) -> str:
    return ".ppm" if x.shape[2] == 3 else ".pgm"


# ---------------------------------------------------------------------------
# mix
# ---------------------------------------------------------------------------


def _mix_spec(args) -> dict:
    spec = {"policy": args.policy, "alpha": repr(float(args.alpha))}
    for k, v in sorted(_parse_params(args.param).items()):
        spec[f"param.{k}"] = v
    if args.lam is not None:
        spec["lambda"] = repr(float(args.lam))
    if args.pair:
        spec["input"] = "pair:" + ",".join(args.pair)
    else:
        spec["input"] = f"dataset:{args.dataset}"
        spec["count"] = str(args.count)
    if args.weight_map:
        spec["weight_map"] = args.weight_map
    return spec


def cmd_mix(args) -> int:
    if args.from_sidecar:
        side = json.loads(Path(args.from_sidecar).read_text(encoding="utf-8"))
        spec, seed = side["config"], int(side["seed"])
        if config_hash(spec) != side["config_hash"]:
            raise FormatError(f"{args.from_sidecar}: config hash mismatch")
    else:
        if not args.policy:
            raise UsageError("mix needs --policy (or --from-sidecar)")
        if bool(args.pair) == bool(args.dataset):
            raise UsageError("mix needs exactly one of --pair or --dataset")
        spec, seed = _mix_spec(args), _seed(args.seed)

    params = {k[len("param."):]: v for k, v in spec.items() if k.startswith("param.")}
    cfg = PolicyConfig(spec["policy"], float(spec["alpha"]), params)
    lam = float(spec["lambda"]) if "lambda" in spec else None
    kind, _, src = spec["input"].partition(":")
    pairs = None
    if kind == "pair":
        images = _read_pair(src.split(","))
        labels = [one_hot(0, 2), one_hot(1, 2)]
        pairs = [PairIndex(0, 1)]
    else:
        ds, _ = load_dataset(src)
        count = min(int(spec["count"]), len(ds))
        images = [ds.images[k].astype(np.float64) for k in range(count)]
        labels = [one_hot(int(c), ds.num_classes) for c in ds.labels[:count]]
    weight_maps = None
    if cfg.policy == "guidedcut":
        if "weight_map" not in spec or kind != "pair":
            raise UsageError("guidedcut needs --pair and --weight-map (the donor's map)")
        donor_map = _read_weight_map(spec["weight_map"], images[0].shape[:2])
        weight_maps = [np.ones(images[0].shape[:2]), donor_map]

    results = apply_policy(cfg, images, labels, seed, pairs=pairs, lam=lam, weight_maps=weight_maps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for k, r in enumerate(results):
        name = f"mixed_{k:03d}{_img_suffix(r.image)}"
        netpbm.write(out / name, r.image)
        rec = {
            "index": k,
            "pair": [r.pair.i, r.pair.j],
            "lambda_nominal": r.lambda_nominal,
            "lambda_effective": r.lambda_effective,
            "label": [float(v) for v in r.label],
            "image": name,
            "mask": None,
        }
        if r.mask is not None:
            rec["mask"] = f"mask_{k:03d}.pgm"
            netpbm.write(out / rec["mask"], r.mask)
        records.append(rec)
    _write_json(out / "mix.json", {
        "config": spec,
        "config_hash": config_hash(spec),
        "seed": seed,
        "results": records,
    })
    print(f"wrote {len(results)} mixed samples to {out}")
    return 0


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


def _rgb(x: np.ndarray) -> np.ndarray:
    return np.repeat(x, 3, axis=2) if x.shape[2] == 1 else x


def _default_pair(size: int, seed: int) -> list[np.ndarray]:
    """Two structured test images: a bright disc on stripes and a diagonal gradient."""
    rng = substream(seed, STREAM_MISC, 2)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    a = np.stack([0.2 + 0.15 * np.sin(12 * xx), 0.3 + 0.0 * yy, 0.6 + 0.1 * np.cos(9 * yy)], axis=2)
    cy, cx = rng.uniform(0.3, 0.7, size=2)
    disc = (yy - cy) ** 2 + (xx - cx) ** 2 < 0.04
    a[disc] = [0.95, 0.85, 0.2]
    b = np.stack([0.5 * (xx + yy), 0.8 - 0.6 * xx, 0.3 + 0.4 * yy], axis=2)
    sq = (np.abs(yy - 0.35) < 0.15) & (np.abs(xx - 0.65) < 0.15)
    b[sq] = [0.1, 0.9, 0.9]
    return [np.clip(a, 0, 1), np.clip(b, 0, 1)]


def cmd_grid(args) -> int:
    seed = _seed(args.seed)
    images = _read_pair(args.pair) if args.pair else _default_pair(args.size, seed)
    h, w = images[0].shape[:2]
    if args.weight_map:
        donor_map = _read_weight_map(args.weight_map, (h, w))
    else:
        donor_map = spectral_residual_saliency(images[1])
    labels = [one_hot(0, 2), one_hot(1, 2)]
    gap = 2
    rows = []
    for name in POLICIES:
        # layer 0 shows the interpolation ManifoldMix applies to hidden features
        params = {"layer": 0} if name == "manifoldmix" else {}
        cfg = PolicyConfig(name, 1.0, params)
        r = apply_policy(cfg, images, labels, seed, pairs=[PairIndex(0, 1)], lam=args.lam,
                         weight_maps=[np.ones((h, w)), donor_map])[0]
        mask = r.mask if r.mask is not None else np.full((h, w), r.lambda_effective)
        tiles = [_rgb(images[0]), _rgb(images[1]), _rgb(r.image), _rgb(mask[:, :, None])]
        sep = np.ones((h, gap, 3))
        rows.append(np.concatenate(sum([[t, sep] for t in tiles], [])[:-1], axis=1))
    hsep = np.ones((gap, rows[0].shape[1], 3))
    sheet = np.concatenate(sum([[r, hsep] for r in rows], [])[:-1], axis=0)
    if args.scale > 1:
        sheet = np.repeat(np.repeat(sheet, args.scale, axis=0), args.scale, axis=1)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    netpbm.write(out, sheet, comments=[
        f"mixforge grid: mixing ratio lambda={args.lam!r}, seed={seed}",
        "columns: x_i | x_j | mixed | mask",
        "rows: " + ",".join(POLICIES),
    ])
    print(f"lambda={args.lam!r}: wrote {len(POLICIES)}-row sheet to {out}")
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def policy_stats(cfg: PolicyConfig, draws: int, size: int, seed: int,
                 lam: Optional[float] = None) -> dict:
    """Monte-Carlo summary of nominal vs effective mixing ratios for one policy."""
    nominal = np.empty(draws)
    effective = np.empty(draws)
    for d in range(draws):
        s = derive_seed(seed, d)
        imgs = list(substream(s, STREAM_MISC, 3).random((2, size, size, 3)))
        maps = [np.full((size, size), 1.0 / (size * size)), spectral_residual_saliency(imgs[1])]
        r = apply_policy(cfg, imgs, [one_hot(0, 2), one_hot(1, 2)], s,
                         pairs=[PairIndex(0, 1)], lam=lam, weight_maps=maps)[0]
        nominal[d] = r.lambda_nominal
        effective[d] = r.lambda_effective
    row = {
        "policy": cfg.policy,
        "draws": draws,
        "size": size,
        "lambda_mode": "fixed" if lam is not None else "beta",
        "alpha": cfg.alpha,
        "nominal_mean": float(np.mean(nominal)),
        "effective_mean": float(np.mean(effective)),
        "bias_mean": float(np.mean(effective - nominal)),
    }
    for q in STATS_QUANTILES:
        row[f"effective_q{int(round(q * 100)):02d}"] = float(np.quantile(effective, q))
    if lam is None and cfg.policy != "vanilla":
        var_expected = 1.0 / (4.0 * (2.0 * cfg.alpha + 1.0))
        row["beta_mean"] = float(np.mean(nominal))
        row["beta_var"] = float(np.var(nominal))
        row["beta_var_expected"] = var_expected
    return row


def beta_moment_row(alpha: float, draws: int, seed: int) -> dict:
    lam = beta_draws(alpha, substream(seed, STREAM_MISC, 4), draws)
    expected = 1.0 / (4.0 * (2.0 * alpha + 1.0))
    mean, var = float(lam.mean()), float(lam.var())
    return {
        "policy": "beta",
        "draws": draws,
        "lambda_mode": "beta",
        "alpha": alpha,
        "beta_mean": mean,
        "beta_var": var,
        "beta_var_expected": expected,
        "beta_ok": int(abs(mean - 0.5) <= 0.01 and abs(var - expected) <= 0.05 * expected),
    }


STATS_COLUMNS = ["policy", "draws", "size", "lambda_mode", "alpha", "nominal_mean",
                 "effective_mean", "bias_mean"] + [
    f"effective_q{int(round(q * 100)):02d}" for q in STATS_QUANTILES
] + ["beta_mean", "beta_var", "beta_var_expected", "beta_ok"]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_stats(args) -> int:
    seed = _seed(args.seed)
    names = args.policy or [p for p in POLICIES if p != "vanilla"]
    params = _parse_params(args.param)
    rows = []
    for name in names:
        own = {k: v for k, v in params.items() if PolicyConfig(name).resolved().get(k) is not None}
        cfg = PolicyConfig(name, args.alpha, own)
        rows.append(policy_stats(cfg, args.draws, args.size, seed, args.lam))
    if args.beta_draws:
        for alpha in args.beta_alpha:
            rows.append(beta_moment_row(alpha, args.beta_draws, seed))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STATS_COLUMNS)
    for r in rows:
        writer.writerow([_cell(r.get(c)) for c in STATS_COLUMNS])
    text = buf.getvalue()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# train / bench
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    raw = read_config(args.config)
    cfg = train_config_from(raw)
    report = train(cfg)
    payload = {"config": raw, "config_hash": config_hash(raw), "seed": cfg.seed,
               "metrics": report.metrics()}
    if args.timings:
        payload["wall_seconds"] = report.wall_seconds
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", payload)
    print(f"test top-1 {report.test_top1:.4f}  ECE {report.ece:.4f}  "
          f"({report.wall_seconds:.1f}s) -> {out / 'report.json'}")
    return 0


def cmd_bench(args) -> int:
    raw = read_config(args.config)
    cfgs, trials, aggregate = bench_configs_from(raw)
    table = bench(cfgs, trials=trials, aggregate=aggregate)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.csv").write_text(table.to_csv(args.timings), encoding="utf-8")
    text = table.to_text(args.timings)
    (out / "bench.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixforge", description="Deterministic mixup augmentation toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("mix", help="mix an image pair or dataset samples")
    m.add_argument("--policy", choices=POLICIES)
    m.add_argument("--alpha", type=float, default=1.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--lambda", dest="lam", type=float, help="force the mixing ratio")
    m.add_argument("--param", action="append", metavar="KEY=VALUE")
    m.add_argument("--pair", nargs=2, metavar=("A", "B"), help="two PPM/PGM images")
    m.add_argument("--dataset", help="dataset reference, e.g. synth:n=16")
    m.add_argument("--count", type=int, default=8)
    m.add_argument("--weight-map", help="PGM importance map of B (guidedcut)")
    m.add_argument("--from-sidecar", help="re-run from a mix.json sidecar")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mix)

    g = sub.add_parser("grid", help="one comparison row per policy at a fixed ratio")
    g.add_argument("--lambda", dest="lam", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--pair", nargs=2, metavar=("A", "B"))
    g.add_argument("--size", type=int, default=32)
    g.add_argument("--scale", type=int, default=2)
    g.add_argument("--weight-map")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_grid)

    s = sub.add_parser("stats", help="Monte-Carlo mask statistics as CSV")
    s.add_argument("--policy", action="append", choices=POLICIES)
    s.add_argument("--draws", type=int, default=1000)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--param", action="append", metavar="KEY=VALUE")
    s.add_argument("--beta-draws", type=int, default=0,
                   help="also check Beta moments with this many draws per alpha")
    s.add_argument("--beta-alpha", type=float, nargs="+", default=[0.1, 0.2, 0.5, 1.0, 2.0, 4.0])
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    for name, func, helptext in (("train", cmd_train, "train one configuration"),
                                 ("bench", cmd_bench, "run a policy/alpha sweep")):
        t = sub.add_parser(name, help=helptext)
        t.add_argument("--config", required=True)
        t.add_argument("--out", required=True)
        t.add_argument("--timings", action="store_true", help="include wall-clock seconds")
        t.set_defaults(func=func)
    return p


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mixforge: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParameterError) as exc:
        print(f"mixforge {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        print(f"mixforge {args.command}: I/O error: {where}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    except (MixforgeError, KeyError, json.JSONDecodeError) as exc:
        print(f"mixforge {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())

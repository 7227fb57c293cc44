"""Flat ``key = value`` config files and their FNV-1a hash.

Schema (unknown keys are rejected)::

    dataset      = synth:n=512,k=2 | cifar10:<dir> | cifar100:<dir> | dir:<root>
    policy       = vanilla | mixup | cutmix | ...        (default vanilla)
    alpha        = 1.0
    param.<key>  = policy parameter, e.g. param.decay = 3
    epochs, batch_size, lr, seed, eval_every, hidden, median_last, subset, flip

    # bench only
    policies     = comma list (overrides policy)
    alphas       = comma list, or "grid" for 0.1,0.2,0.5,1,2,4
    seeds        = comma list (overrides seed)
    trials       = seeds per config, mean row appended when > 1
    aggregate    = true | false

Blank lines and lines starting with ``#`` are ignored. The environment
variable ``MIXFORGE_SEED`` replaces ``seed``/``seeds`` when set.
"""

from __future__ import annotations

import os
from itertools import product
from typing import Mapping, Optional

from .errors import ConfigError
from .harness import ALPHA_GRID, TrainConfig
from .policies import PARAM_SCHEMA, PolicyConfig

SEED_ENV = "MIXFORGE_SEED"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

TRAIN_KEYS = {
    "dataset": str, "policy": str, "alpha": float, "epochs": int, "batch_size": int,
    "lr": float, "seed": int, "eval_every": int, "hidden": int, "median_last": int,
    "subset": int, "flip": str,
}
BENCH_KEYS = {"policies": str, "alphas": str, "seeds": str, "trials": int, "aggregate": str}


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path: str | os.PathLike) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def canonical_text(cfg: Mapping[str, object]) -> str:
    return "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))


def config_hash(cfg: Mapping[str, object]) -> str:
    """16 hex digits of FNV-1a over the canonical (sorted ``key=value``) text."""
    return f"{fnv1a64(canonical_text(cfg).encode('utf-8')):016x}"


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _typed(key: str, kind: type, value: str):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None


def env_seed(environ: Optional[Mapping[str, str]] = None) -> Optional[int]:
    environ = os.environ if environ is None else environ
    raw = environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _split_params(cfg: Mapping[str, str]) -> tuple[dict[str, str], dict[str, str], dict[str, str]]:
    base, bench, params = {}, {}, {}
    for k, v in cfg.items():
        if k.startswith("param."):
            params[k[len("param."):]] = v
        elif k in TRAIN_KEYS:
            base[k] = v
        elif k in BENCH_KEYS:
            bench[k] = v
        else:
            raise ConfigError(f"unknown config key {k!r}")
    return base, bench, params


def _train_kwargs(base: Mapping[str, str]) -> dict:
    kw = {}
    for k, v in base.items():
        if k in ("policy", "alpha"):
            continue
        kw[k] = _bool(v) if k == "flip" else _typed(k, TRAIN_KEYS[k], v)
    return kw


def train_config_from(cfg: Mapping[str, str], environ=None) -> TrainConfig:
    base, bench, params = _split_params(cfg)
    if bench:
        raise ConfigError(f"bench-only keys in a train config: {sorted(bench)}")
    policy = PolicyConfig(base.get("policy", "vanilla"),
                          _typed("alpha", float, base.get("alpha", "1.0")), params)
    kw = _train_kwargs(base)
    seed = env_seed(environ)
    if seed is not None:
        kw["seed"] = seed
    return TrainConfig(policy=policy, **kw)


def _list(text: str, kind: type, key: str) -> list:
    return [_typed(key, kind, p.strip()) for p in text.split(",") if p.strip()]


def bench_configs_from(cfg: Mapping[str, str], environ=None) -> tuple[list[TrainConfig], int, Optional[bool]]:
    """Expand a bench config into ``(configs, trials, aggregate)``.

    Configs are the product ``policies x alphas x seeds`` in file order; each
    ``param.*`` entry goes to the policies that accept it.
    """
    base, bench, params = _split_params(cfg)
    policies = _list(bench.get("policies", base.get("policy", "vanilla")), str, "policies")
    alphas_text = bench.get("alphas", base.get("alpha", "1.0"))
    alphas = list(ALPHA_GRID) if alphas_text.strip() == "grid" else _list(alphas_text, float, "alphas")
    kw = _train_kwargs(base)
    seeds = _list(bench["seeds"], int, "seeds") if "seeds" in bench else [kw.pop("seed", 0)]
    kw.pop("seed", None)
    override = env_seed(environ)
    if override is not None:
        seeds = [override]
    trials = _typed("trials", int, bench.get("trials", "1"))
    aggregate = _bool(bench["aggregate"]) if "aggregate" in bench else None
    if not policies or not alphas or not seeds:
        raise ConfigError("bench needs at least one policy, alpha and seed")
    for pol in policies:
        if pol not in PARAM_SCHEMA:
            raise ConfigError(f"unknown policy {pol!r}")
    stray = sorted(k for k in params if not any(k in PARAM_SCHEMA[p] for p in policies))
    if stray:
        raise ConfigError(f"parameters {stray} apply to none of {policies}")
    out = []
    for pol, alpha, seed in product(policies, alphas, seeds):
        # vanilla ignores alpha; keep one row per seed for it
        if pol == "vanilla" and alpha != alphas[0]:
            continue
        own = {k: v for k, v in params.items() if k in PARAM_SCHEMA[pol]}
        out.append(TrainConfig(policy=PolicyConfig(pol, alpha, own), seed=seed, **kw))
    return out, trials, aggregate

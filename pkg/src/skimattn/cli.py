"""Command-line entry point: ``skimattn <command> [--config F] [--seed N] [--out D] [--force]``.

Each command reads a JSON config (optional), applies ``--set key.path=value``
overrides on top of its defaults, writes the resolved config into its output
directory and then its artifacts. Exit codes: 0 success, 1 bad input, 2 runtime
failure.
"""

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import statistics
import sys
import time

import numpy as np

from . import corpus as C
from . import models as M
from . import plotting
from . import skimmask
from . import training as TR
from .attention import compute_ratio, unit_attention
from .errors import CheckpointError, SkimError, ValidationError
from .numerics import checkpoint as ckpt
from .numerics import tensor as T

log = logging.getLogger("skimattn")

MODEL_FILE = "model.ckpt"
MODEL_META = "model.json"
RESOLVED = "resolved_config.json"
SPLITS = ("train", "valid", "test")
BENCH_TIMING_COLUMNS = ("median_time_s", "min_time_s")

DESK_MODEL = {"hidden_size": 32, "num_layers": 2, "num_heads": 2, "max_len": 64}

DEFAULTS = {
    "gen-data": {
        "seed": 0,
        "num_pages": 500,
        "ratios": [0.8, 0.1, 0.1],
        "generator": {},
    },
    "pretrain": {
        "seed": 0,
        "data": None,
        "vocab_size": 512,
        "objective": "mvlm",
        "model": dict(DESK_MODEL, architecture="skimformer", layout_mode="contextualized"),
        "schedule": {"steps": 500, "batch_size": 8, "learning_rate": 3e-3, "warmup_steps": 50, "weight_decay": 0.01},
        "masking": {"mask_rate": 0.15, "replace_mask": 0.8, "replace_random": 0.1, "keep": 0.1},
        "checkpoint_every": 0,
    },
    "finetune": {
        "seed": 0,
        "data": None,
        "init_from": None,
        "skim_from": None,
        "vocab_size": 512,
        "model": {},
        "schedule": {"epochs": 10, "batch_size": 8, "learning_rate": 3e-3, "warmup_steps": 50, "weight_decay": 0.01},
    },
    "eval-ppl": {"seed": 1234, "data": None, "model_dir": None, "split": "valid", "batch_size": 8},
    "eval-la": {"seed": 0, "data": None, "model_dir": None, "split": "test", "batch_size": 8},
    "mask": {"seed": 0, "data": None, "model_dir": None, "split": "test", "k": [4, 8, 16], "limit": None},
    "attmap": {"seed": 0, "data": None, "model_dir": None, "split": "test", "page": 0, "unit": [0], "image_size": [250, 250]},
    "bench": {
        "seed": 0,
        "seq_lens": [8, 32, 128, 512],
        "repeats": 5,
        "warmup": 1,
        "batch_size": 1,
        "vocab_size": 512,
        "model": {"hidden_size": 32, "num_layers": 12, "num_heads": 2},
        "variants": ["skimformer_desk", "skimformer_noctx_desk", "standard_desk"],
    },
}


class ConfigError(ValidationError):
    pass


# ---------------------------------------------------------------- config


def _merge(base, extra, path=""):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key.path=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.setdefault(p, {}), dict):
            raise ConfigError(f"override {key!r} descends into a non-mapping")
        node = node[p]
    node[parts[-1]] = _parse_value(value)
    return cfg


def resolve_config(command, config_path=None, overrides=(), seed=None):
    cfg = copy.deepcopy(DEFAULTS[command])
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        # a shared file may carry one section per command
        if command in loaded and isinstance(loaded[command], dict):
            loaded = loaded[command]
        cfg = _merge(cfg, loaded)
    for o in overrides:
        apply_override(cfg, o)
    if seed is not None:
        cfg["seed"] = seed
    unknown = set(cfg) - set(DEFAULTS[command])
    if unknown:
        raise ConfigError(f"unknown {command} config keys: {sorted(unknown)}")
    return cfg


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path, required=()):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    missing = [k for k in required if k not in obj]
    if missing:
        raise ValidationError(f"{path} lacks keys {missing}")
    return obj


def prepare_out(out, force):
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise ValidationError(f"output directory {out} exists and is not empty; pass --force to overwrite")
    os.makedirs(out, exist_ok=True)
    return out


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------- data and models


def load_split(data_dir, name):
    if not data_dir:
        raise ConfigError("config needs 'data' pointing at a gen-data output directory")
    path = os.path.join(data_dir, f"{name}.jsonl")
    if not os.path.exists(path):
        raise ValidationError(f"missing corpus file {path}")
    pages = list(C.load_jsonl(path))
    manifest_path = os.path.join(data_dir, "manifest.json")
    if os.path.exists(manifest_path):
        manifest = _read_json(manifest_path, ("counts",))
        want = manifest["counts"].get(name)
        if want is not None and want != len(pages):
            raise ValidationError(f"{path} has {len(pages)} pages, manifest says {want}")
    return pages


def save_model(out, model, vocab, losses=None):
    ckpt.save(os.path.join(out, MODEL_FILE), model.arrays())
    _dump_json(os.path.join(out, MODEL_META), {"model": model.config.to_dict(), "vocab": vocab.itos})
    if losses is not None:
        with open(os.path.join(out, "loss.csv"), "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "loss"])
            for i, v in enumerate(losses):
                wr.writerow([i, repr(float(v))])
        plotting.plot_loss_curve(os.path.join(out, "loss.png"), losses)


def load_model_dir(model_dir):
    """(ModelConfig, Vocabulary, arrays) from a pretrain/finetune output directory."""
    if not model_dir:
        raise ConfigError("config needs 'model_dir' pointing at a trained model")
    path = os.path.join(model_dir, MODEL_FILE)
    if not os.path.exists(path):
        raise CheckpointError(f"missing checkpoint {path}")
    meta = _read_json(os.path.join(model_dir, MODEL_META), ("model", "vocab"))
    return M.ModelConfig.from_dict(meta["model"]), C.Vocabulary(meta["vocab"]), ckpt.load(path)


def load_model(model_dir):
    cfg, vocab, arrays = load_model_dir(model_dir)
    params = M.init_params(cfg, 0, arrays)
    M.load_into(params, arrays, strict=True)
    return M.Model(cfg, params), vocab


def _encode(pages, vocab, max_len):
    return [TR.encode_page(p, vocab, max_len) for p in pages]


def _build(factory, d, what):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} config must be a mapping")
    try:
        return factory(**d)
    except TypeError as exc:
        raise ConfigError(f"bad {what} config: {exc}") from exc


def _schedule(d, seed):
    if "seed" in d:
        raise ConfigError("set the schedule seed through the top-level seed")
    return _build(TR.Schedule, dict(d, seed=seed), "schedule")


# ---------------------------------------------------------------- commands


def cmd_gen_data(cfg, out):
    gen = _build(lambda **d: C.GeneratorConfig.from_dict(d), cfg["generator"], "generator")
    if cfg["num_pages"] < 1:
        raise ConfigError("num_pages must be positive")
    pages = list(C.generate_synthetic(gen, cfg["seed"], cfg["num_pages"]))
    parts = C.split(pages, tuple(cfg["ratios"]), seed=cfg["seed"])
    manifest = {"seed": cfg["seed"], "num_pages": len(pages), "counts": {}, "sha256": {}}
    for name, part in zip(SPLITS, parts):
        path = os.path.join(out, f"{name}.jsonl")
        C.write_jsonl(path, part)
        # read back: every written page must validate
        if sum(1 for _ in C.load_jsonl(path)) != len(part):
            raise SkimError(f"{path} did not round-trip")
        manifest["counts"][name] = len(part)
        manifest["sha256"][name] = _sha256(path)
    _dump_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


def cmd_pretrain(cfg, out):
    train_pages = load_split(cfg["data"], "train")
    vocab = C.build_vocab(train_pages, cfg["vocab_size"])
    mc = M.ModelConfig.from_dict(dict(cfg["model"], vocab_size=len(vocab)))
    if mc.architecture in ("skim_embeddings", "skimming_mask"):
        raise ConfigError(f"{mc.architecture} reuses a pretrained skim module; use finetune")
    model = M.Model.create(mc, seed=cfg["seed"])
    sched = _schedule(dict(cfg["schedule"], checkpoint_every=cfg["checkpoint_every"]), cfg["seed"])
    policy = _build(TR.MaskingPolicy, dict(cfg["masking"], seed=cfg["seed"]), "masking")
    objective = cfg["objective"]
    if objective not in ("mvlm", "mlm"):
        raise ConfigError("pretrain objective must be mvlm or mlm")
    res = TR.train(model, _encode(train_pages, vocab, mc.max_len), objective, sched, policy,
                   checkpoint_path=os.path.join(out, MODEL_FILE) if sched.checkpoint_every else None)
    save_model(out, model, vocab, res.losses)
    summary = {"steps": len(res.losses), "initial_loss": res.losses[0], "final_loss": res.losses[-1]}
    _dump_json(os.path.join(out, "train_summary.json"), summary)
    return summary


def cmd_finetune(cfg, out):
    pretrained, vocab, base = {}, None, {}
    if cfg["init_from"]:
        init_cfg, vocab, arrays = load_model_dir(cfg["init_from"])
        base = init_cfg.to_dict()
        pretrained.update(arrays)
    if cfg["skim_from"]:
        skim_cfg, skim_vocab, arrays = load_model_dir(cfg["skim_from"])
        vocab = vocab or skim_vocab
        # only the layout side crosses over
        pretrained.update({k: v for k, v in arrays.items() if k.startswith(("layout.", "skim.", "ctx."))})
        for key in ("layout_hidden", "layout_mode", "contextualizer_layers", "num_heads"):
            base[key] = skim_cfg.to_dict()[key]
    train_pages = load_split(cfg["data"], "train")
    vocab = vocab or C.build_vocab(train_pages, cfg["vocab_size"])
    mc = M.ModelConfig.from_dict(dict(_merge(dict(DESK_MODEL, **base), cfg["model"]), vocab_size=len(vocab)))
    model = M.Model.create(mc, seed=cfg["seed"], pretrained=pretrained or None)
    res = TR.train(model, _encode(train_pages, vocab, mc.max_len), "token_classification",
                   _schedule(cfg["schedule"], cfg["seed"]))
    save_model(out, model, vocab, res.losses)
    summary = {"steps": len(res.losses), "initial_loss": res.losses[0], "final_loss": res.losses[-1]}
    _dump_json(os.path.join(out, "train_summary.json"), summary)
    return summary


def _check_split(name):
    if name not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}")


def cmd_eval_ppl(cfg, out):
    _check_split(cfg["split"])
    model, vocab = load_model(cfg["model_dir"])
    pages = _encode(load_split(cfg["data"], cfg["split"]), vocab, model.config.max_len)
    ppl = TR.perplexity(model, pages, seed=cfg["seed"], batch_size=cfg["batch_size"])
    metrics = {"split": cfg["split"], "pages": len(pages), "perplexity": ppl}
    write_metrics(os.path.join(out, "metrics.json"), metrics)
    return metrics


def cmd_eval_la(cfg, out):
    _check_split(cfg["split"])
    model, vocab = load_model(cfg["model_dir"])
    pages = _encode(load_split(cfg["data"], cfg["split"]), vocab, model.config.max_len)
    report = TR.evaluate_labeling(model, pages, cfg["batch_size"])
    metrics = dict(report.to_dict(), split=cfg["split"], pages=len(pages))
    write_metrics(os.path.join(out, "metrics.json"), metrics)
    return metrics


def validate_metrics(obj):
    if "perplexity" in obj and not (isinstance(obj["perplexity"], float) and obj["perplexity"] > 0):
        raise ValidationError("perplexity must be a positive float")
    if "macro" in obj:
        for key in ("precision", "recall", "f1"):
            v = obj["macro"].get(key)
            if not isinstance(v, float) or not 0.0 <= v <= 1.0:
                raise ValidationError(f"macro {key} must be a float in [0, 1]")
        if set(obj.get("per_label", {})) != set(M.LABELS):
            raise ValidationError("per_label must cover the full label set")
    if "perplexity" not in obj and "macro" not in obj:
        raise ValidationError("metrics report carries neither perplexity nor macro scores")
    return obj


def write_metrics(path, obj):
    _dump_json(path, validate_metrics(obj))


def read_metrics(path):
    return validate_metrics(_read_json(path))


def _skim_model(model_dir):
    model, vocab = load_model(model_dir)
    if not model.config.has_skim_module:
        raise ConfigError(f"{model_dir} holds a {model.config.architecture} model without a skim module")
    return model, vocab


def _page_skim(model, encoded):
    batch = TR.collate([encoded])
    with T.no_grad():
        return M.skim_matrix(batch.boxes, model.config, model.params, batch.valid)


def cmd_mask(cfg, out):
    _check_split(cfg["split"])
    ks = cfg["k"] if isinstance(cfg["k"], list) else [cfg["k"]]
    if not ks or any(not isinstance(k, int) or k < 1 for k in ks):
        raise ConfigError("k must be a positive integer or a list of them")
    model, vocab = _skim_model(cfg["model_dir"])
    pages = load_split(cfg["data"], cfg["split"])
    if cfg["limit"] is not None:
        pages = pages[: cfg["limit"]]
    mdir = os.path.join(out, "masks")
    os.makedirs(mdir, exist_ok=True)
    index = []
    for page, enc in zip(pages, _encode(pages, vocab, model.config.max_len)):
        A = _page_skim(model, enc)
        for k in sorted(ks):
            m = skimmask.build_mask(A, k).validate()
            name = f"{page.doc_id or 'page'}.k{k}.json"
            path = os.path.join(mdir, name)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(skimmask.dumps(m) + "\n")
            with open(path, encoding="utf-8") as fh:
                skimmask.loads(fh.read())
            index.append({"doc_id": page.doc_id, "k": k, "n": m.n, "file": os.path.join("masks", name)})
    _dump_json(os.path.join(out, "masks.json"), {"split": cfg["split"], "k": sorted(ks), "masks": index})
    return {"masks": len(index)}


def _find_page(pages, ref):
    if isinstance(ref, int):
        if not 0 <= ref < len(pages):
            raise ConfigError(f"page index {ref} outside [0, {len(pages)})")
        return pages[ref]
    for p in pages:
        if p.doc_id == ref:
            return p
    raise ConfigError(f"no page with doc_id {ref!r}")


def attention_rows(A, unit):
    """Scores for page tokens given ``unit`` page-token indices (the leading [CLS] is position 0)."""
    return unit_attention(A, [int(i) + 1 for i in unit])


def cmd_attmap(cfg, out):
    _check_split(cfg["split"])
    unit = cfg["unit"] if isinstance(cfg["unit"], list) else [cfg["unit"]]
    if not unit:
        raise ValidationError("attention unit needs at least one token")
    model, vocab = _skim_model(cfg["model_dir"])
    page = _find_page(load_split(cfg["data"], cfg["split"]), cfg["page"])
    enc = TR.encode_page(page, vocab, model.config.max_len)
    if max(unit) >= len(enc.ids) - 1 or min(unit) < 0:
        raise ValidationError(f"unit index outside the page's {len(enc.ids) - 1} kept tokens")
    scores = attention_rows(_page_skim(model, enc), unit)
    tokens = [C.CLS] + list(page.tokens[: len(enc.ids) - 1])
    plotting.write_attention_csv(os.path.join(out, "attmap.csv"), tokens, enc.boxes, scores)
    # the [CLS] box is degenerate; the image covers page tokens only
    img = plotting.raster_scores(enc.boxes[1:], scores[1:], size=tuple(cfg["image_size"]))
    plotting.write_pgm(os.path.join(out, "attmap.pgm"), img)
    plotting.plot_attention_map(os.path.join(out, "attmap.png"), enc.boxes[1:], scores[1:],
                                unit=unit, title=page.doc_id)
    return {"doc_id": page.doc_id, "unit": unit, "tokens": len(tokens)}


BENCH_VARIANTS = {
    "skimformer_desk": dict(architecture="skimformer", layout_mode="contextualized"),
    "skimformer_noctx_desk": dict(architecture="skimformer", layout_mode="true_layout"),
    "standard_desk": dict(architecture="text", attention_kind="standard"),
}
BENCH_BASELINE = "standard_desk"


def _bench_inputs(rng, batch, n, vocab):
    tok = rng.integers(len(C.SPECIALS), vocab, size=(batch, n))
    a = rng.integers(0, 1001, size=(batch, n, 2, 2))
    lo, hi = a.min(axis=2), a.max(axis=2)
    boxes = np.stack([lo[..., 0], lo[..., 1], hi[..., 0], hi[..., 1]], axis=-1)
    tgt = np.where(rng.random((batch, n)) < 0.15, tok, TR.IGNORE)
    tgt[:, 0] = tok[:, 0]
    return tok, boxes, np.ones((batch, n), dtype=bool), tgt


def _bench_config(cfg, variant, n):
    d = dict(cfg["model"], **BENCH_VARIANTS[variant], max_len=n, vocab_size=cfg["vocab_size"])
    return M.ModelConfig.from_dict(d)


def graph_bytes(root):
    """Memory live when backward starts: every array held by the autodiff graph,
    plus one gradient buffer per trainable leaf. Deterministic, unlike sampling
    the allocator."""
    total, seen, stack = 0, set(), [root]
    while stack:
        obj = stack.pop()
        if id(obj) in seen:
            continue
        seen.add(id(obj))
        if isinstance(obj, np.ndarray):
            total += obj.nbytes
            continue
        total += obj.data.nbytes * (2 if obj.requires_grad and not obj._parents else 1)
        seen.add(id(obj.data))
        stack.extend(obj._parents)
        # backward closures also pin inputs that need no gradient
        for cell in getattr(obj._backward, "__closure__", None) or ():
            try:
                held = cell.cell_contents
            except ValueError:
                continue
            if isinstance(held, (T.Tensor, np.ndarray)):
                stack.append(held)
    return total


def _bench_step(model, tok, boxes, valid, tgt):
    for p in model.params.values():
        p.zero_grad()
    loss = T.cross_entropy(model.logits(tok, boxes, valid), tgt, TR.IGNORE)
    live = graph_bytes(loss)
    loss.backward()
    return live


def cmd_bench(cfg, out):
    if cfg["repeats"] < 5:
        raise ConfigError("bench needs at least 5 repeats for a median")
    for v in cfg["variants"]:
        if v not in BENCH_VARIANTS:
            raise ConfigError(f"unknown bench variant {v!r}; choose from {sorted(BENCH_VARIANTS)}")
    rows = []
    for n in cfg["seq_lens"]:
        base_cfg = _bench_config(cfg, BENCH_BASELINE, n)
        baseline = M.compute_budget(base_cfg, n)
        for v in cfg["variants"]:
            mc = _bench_config(cfg, v, n)
            model = M.Model.create(mc, seed=cfg["seed"])
            rng = np.random.default_rng([cfg["seed"], n])
            inputs = _bench_inputs(rng, cfg["batch_size"], n, cfg["vocab_size"])
            for _ in range(cfg["warmup"]):
                _bench_step(model, *inputs)
            times = []
            for _ in range(cfg["repeats"]):
                t0 = time.perf_counter()
                _bench_step(model, *inputs)
                times.append(time.perf_counter() - t0)
            peak = _bench_step(model, *inputs)
            budget = M.compute_budget(mc, n)
            rows.append({
                "variant": v,
                "seq_len": n,
                "num_layers": mc.num_layers,
                "num_skim_attn": budget.num_skim_attn,
                "num_standard_attn": budget.num_standard_attn,
                "compute_ratio_pct": f"{compute_ratio(budget, baseline):.2f}",
                "params": M.parameter_count(mc),
                "median_time_s": statistics.median(times),
                "min_time_s": min(times),
                "peak_mem_mib": round(peak / 2**20, 3),
            })
            log.info("bench %s n=%d median %.4fs", v, n, rows[-1]["median_time_s"])
    columns = list(rows[0])
    with open(os.path.join(out, "bench.csv"), "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=columns)
        wr.writeheader()
        wr.writerows(rows)
    plotting.plot_bench(os.path.join(out, "bench.png"), rows)
    return {"rows": len(rows)}


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval-ppl": cmd_eval_ppl,
    "eval-la": cmd_eval_la,
    "mask": cmd_mask,
    "attmap": cmd_attmap,
    "bench": cmd_bench,
}

HELP = {
    "gen-data": "generate a synthetic labeled corpus and split it",
    "pretrain": "masked visual-language pretraining",
    "finetune": "token-classification fine-tuning for layout analysis",
    "eval-ppl": "masked-token perplexity of a checkpoint",
    "eval-la": "per-label and macro P/R/F1 of a fine-tuned checkpoint",
    "mask": "export top-k skimming masks per page",
    "attmap": "export averaged skim attention for a token unit",
    "bench": "time, memory and compute ratio against sequence length",
}


# ---------------------------------------------------------------- argument parsing


def _global_flags(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=d, help="JSON config file")
    parser.add_argument("--seed", type=int, metavar="INT", default=d, help="override the config seed")
    parser.add_argument("--out", metavar="DIR", default=d, help="output directory")
    parser.add_argument("--force", action="store_true", default=d, help="write into a non-empty output directory")
    parser.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE", default=d,
                        help="override a config entry, e.g. schedule.steps=200 (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d)


def build_parser():
    parser = argparse.ArgumentParser(prog="skimattn", description="Layout-only skim attention toolkit.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        # accept the global flags after the subcommand as well
        _global_flags(sp, suppress=True)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; bad arguments are a validation failure
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args.config, args.overrides or (), args.seed)
        out = prepare_out(args.out or os.path.join("runs", args.command), args.force)
        _dump_json(os.path.join(out, RESOLVED), {"command": args.command, "config": cfg})
        result = COMMANDS[args.command](cfg, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SkimError, OSError, ArithmeticError, MemoryError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "out": out, "result": _jsonable(result)}, sort_keys=True))
    return 0


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Exit status: 0 on success, 1 on I/O failure, 2 on invalid arguments. Every
command writes ``<output>.run.json`` next to its primary output with the
resolved configuration, seed, package version and wall time.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, degradations, evaluation, imaging, procedural, scoring, store
from .alignment import encoder as enc
from .alignment.prompts import random_bank
from .alignment.training import ImageLadders, train
from .config import RunConfig, resolve
from .sampling import generate_corpus, load_corpus, read_manifest

log = logging.getLogger("qalign")


class UsageError(Exception):
    """Bad arguments detected after parsing (exit 2)."""


# ---------------------------------------------------------------- helpers


def _add_config_flags(p, *groups):
    p.add_argument("--config", help="flat key: value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: logical CPU count)")
    if "ladder" in groups:
        p.add_argument("--patch-size", dest="patch_size", type=int)
        p.add_argument("--levels", type=int)
        p.add_argument("--n-distortions", dest="n_distortions", type=int)
        p.add_argument("--min-overlap", dest="min_overlap", type=float)
    if "loss" in groups:
        for name in ("m_cons", "m_rank", "lambda_cons", "lambda_pos", "lambda_neg"):
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
        p.add_argument("--variant", choices=["similarity", "quality"])
    if "loss" in groups or "tau" in groups:
        p.add_argument("--tau", type=float)
    if "optim" in groups:
        p.add_argument("--lr", type=float)
        p.add_argument("--weight-decay", dest="weight_decay", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--dim", type=int)


def _config(args) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "func")}
    try:
        return resolve(flags, args.config)
    except FileNotFoundError as exc:
        raise OSError(f"config file not found: {args.config}") from exc


def _require_file(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return Path(path)


def _write_meta(primary, command, cfg: RunConfig, started, extra=None):
    meta = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "wall_time_s": round(time.perf_counter() - started, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        meta.update(extra)
    path = Path(str(primary) + ".run.json")
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_images(manifest):
    rows = read_manifest(manifest)
    return rows, [imaging.load_image(r.path) for r in rows]


# ---------------------------------------------------------------- commands


def cmd_prompts(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    out = Path(args.out)
    bank = random_bank(args.pairs, args.dim, cfg.seed)
    store.save_bank(out, bank)
    _write_meta(out, "prompts", cfg, started, {"pairs": args.pairs, "dim": args.dim})
    print(f"wrote {len(bank)} prompt pairs (dim {bank.dim}) to {out}")
    return 0


def cmd_degrade(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    if args.kind not in degradations.KINDS:
        raise UsageError(f"unknown kind {args.kind!r}; valid kinds: {', '.join(degradations.KIND_NAMES)}")
    if not 1 <= args.level <= degradations.N_LEVELS:
        raise UsageError(f"level must be in 1..{degradations.N_LEVELS}, got {args.level}")
    img = imaging.load_image(_require_file(args.input, "input"))
    out = degradations.apply_distortion(img, args.kind, args.level, cfg.seed)
    imaging.save_image(args.out, out)
    value = imaging.psnr(img, imaging.quantize8(out))
    _write_meta(args.out, "degrade", cfg, started, {"kind": args.kind, "level": args.level, "psnr": value})
    print(f"psnr {value:.4f}")
    return 0


def cmd_corpus(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    manifest = _require_file(args.manifest, "manifest")
    out = Path(cfg.out or args.out or "corpus")
    summary = generate_corpus(manifest, cfg.ladder(), out, jobs=cfg.workers())
    _write_meta(out, "corpus", cfg, started, {"processed": summary.processed, "failed": summary.failed, "failures": summary.failures})
    print(f"processed {summary.processed}, failed {summary.failed}")
    return 0 if summary.failed == 0 else 1


def _training_data(args, cfg):
    if args.manifest:
        rows, images = _load_images(_require_file(args.manifest, "manifest"))
        return ImageLadders(images, [r.id for r in rows], cfg.ladder())
    corpus = cfg.corpus or args.corpus_dir
    if corpus is None:
        raise UsageError("either --corpus or --manifest is required")
    if not Path(corpus).is_dir():
        raise FileNotFoundError(f"corpus directory not found: {corpus}")
    return load_corpus(corpus)


def cmd_train(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    bank = store.load_bank(_require_file(cfg.prompts, "prompts"))
    if cfg.model is None:
        raise UsageError("--model is required")
    data = _training_data(args, cfg)
    if len(data) == 0:
        raise UsageError("training corpus is empty")
    params = enc.init_params(bank.dim, cfg.seed)

    def progress(epoch, batch, loss):
        log.info("epoch %d batch %d loss %.6f", epoch, batch, loss)

    res = train(data, cfg.loss(), bank, cfg.optimizer(), params=params, progress=progress)
    store.save_params(cfg.model, res.params)
    history = Path(args.history or str(cfg.model) + ".history.csv")
    with open(history, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "batch", "L_cons", "L_pos", "L_neg", "total"])
        for h in res.history:
            w.writerow([h.epoch, h.batch, repr(h.cons), repr(h.pos), repr(h.neg), repr(h.total)])
    _write_meta(cfg.model, "train", cfg, started, {"history": str(history), "steps": len(res.history)})
    final = res.history[-1].total if res.history else float("nan")
    print(f"trained {len(res.history)} steps, final batch loss {final:.6f}")
    return 0


def cmd_score(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    bank = store.load_bank(_require_file(cfg.prompts, "prompts"))
    out = Path(cfg.out or args.out or "scores.csv")
    if args.store:
        source, params = store.store_read(_require_file(args.store, "store")), None
    else:
        source = read_manifest(_require_file(args.manifest, "manifest"))
        params = store.load_params(_require_file(cfg.model, "model"))
    n = scoring.score_corpus(source, bank, cfg.tau, out, params=params)
    _write_meta(out, "score", cfg, started, {"rows": n})
    print(f"wrote {n} scores to {out}")
    return 0


def _read_column(path, column):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", column} <= set(reader.fieldnames):
            raise UsageError(f"{path}: needs columns id and {column}")
        return {r["id"]: float(r[column]) for r in reader if r[column] not in ("", None)}


def cmd_eval(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    pred = _read_column(_require_file(args.scores, "scores"), args.column)
    mos = _read_column(_require_file(args.mos, "mos"), "mos")
    ids = [i for i in pred if i in mos]
    if len(ids) < 3:
        raise UsageError(f"only {len(ids)} ids shared by scores and mos; need at least 3")
    report = evaluation.evaluate([pred[i] for i in ids], [mos[i] for i in ids])
    out = Path(cfg.out or args.out or "eval.json")
    payload = report.to_dict()
    payload["ids"] = ids
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _write_meta(out, "eval", cfg, started)
    print(f"n {report.n} srcc {report.srcc:.4f} plcc {report.plcc:.4f}")
    return 0


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    if args.manifest:
        _, images = _load_images(_require_file(args.manifest, "manifest"))
    else:
        images = procedural.make_images(cfg.seed, args.procedural, args.size)
    kinds = args.kinds.split(",") if args.kinds else None
    for k in kinds or ():
        if k not in degradations.KINDS:
            raise UsageError(f"unknown kind {k!r}; valid kinds: {', '.join(degradations.KIND_NAMES)}")
    if args.oracle:
        scorer, full_ref = evaluation.psnr_oracle, True
    else:
        bank = store.load_bank(_require_file(cfg.prompts, "prompts"))
        params = store.load_params(_require_file(cfg.model, "model"))
        scorer, full_ref = (lambda img: scoring.score_image(params, img, bank, cfg.tau).q), False
    res = evaluation.intensity_sweep(scorer, images, kinds, seed=cfg.seed, full_reference=full_ref)
    out = Path(cfg.out or args.out or "sweep.csv")
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "level", "mean_score"])
        for kind, level, value in res.rows:
            w.writerow([kind, level, repr(value)])
    summary = {"srcc": res.srcc, "degenerate": res.degenerate, "mean_srcc": res.mean_srcc(), "images": len(images)}
    Path(str(out) + ".srcc.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _write_meta(out, "sweep", cfg, started)
    for kind, value in res.srcc.items():
        print(f"{kind:26s} {value:+.3f}")
    print(f"mean {res.mean_srcc():+.4f}")
    return 0


def cmd_gmad(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    d = {s.image_id: s.q for s in scoring.read_scores(_require_file(args.defender, "defender"))}
    a = {s.image_id: s.q for s in scoring.read_scores(_require_file(args.attacker, "attacker"))}
    sel = evaluation.gmad_select(d, a, levels=args.gmad_levels, band_width=args.band_width)
    out = Path(cfg.out or args.out or "gmad.json")
    out.write_text(json.dumps(sel.to_dict(), indent=2) + "\n", encoding="utf-8")
    _write_meta(out, "gmad", cfg, started)
    for e in sel.entries:
        print(f"anchor {e.anchor:.2f}: {e.image_id_low} / {e.image_id_high} gap {e.attacker_gap:.4f} ({e.band_size} in band)")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qalign", description="Quality-aware image-prompt alignment toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prompts", help="write a seeded random prompt bank")
    _add_config_flags(p)
    p.add_argument("--pairs", type=int, default=7)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("degrade", help="apply one distortion to an image")
    _add_config_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("corpus", help="generate degradation ladders from a manifest")
    _add_config_flags(p, "ladder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("train", help="train the toy encoder")
    _add_config_flags(p, "ladder", "loss", "optim")
    p.add_argument("--corpus", dest="corpus_dir", help="corpus directory written by 'corpus'")
    p.add_argument("--manifest", help="pristine images; fresh ladders are drawn every epoch")
    p.add_argument("--prompts")
    p.add_argument("--model")
    p.add_argument("--history", help="loss history CSV (default: <model>.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score images or a precomputed embedding store")
    _add_config_flags(p, "tau")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--store")
    p.add_argument("--prompts")
    p.add_argument("--model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="SRCC and logistic PLCC against MOS")
    _add_config_flags(p)
    p.add_argument("--scores", required=True, help="CSV with id and a score column")
    p.add_argument("--column", default="q")
    p.add_argument("--mos", required=True, help="CSV with id,mos columns (a manifest works)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="mean score per distortion kind and level")
    _add_config_flags(p, "tau")
    p.add_argument("--manifest", help="pristine images (default: procedural set)")
    p.add_argument("--procedural", type=int, default=50, help="number of procedural images")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--kinds", help="comma-separated subset of kinds")
    p.add_argument("--oracle", action="store_true", help="score with PSNR to the pristine image")
    p.add_argument("--prompts")
    p.add_argument("--model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gmad", help="select gMAD pairs from two score files")
    _add_config_flags(p)
    p.add_argument("--defender", required=True)
    p.add_argument("--attacker", required=True)
    p.add_argument("--gmad-levels", dest="gmad_levels", type=int, default=2)
    p.add_argument("--band-width", dest="band_width", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gmad)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    del args.verbose
    try:
        return args.func(args)
    except store.StoreFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

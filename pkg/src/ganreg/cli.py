"""Command-line surface: train, eval, generate, gradcheck, synth-data, baseline.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or numerical
failure.  Diagnostics go to stderr; results go to stdout.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections import OrderedDict

import numpy as np

from . import baseline as BL
from . import checkpoint as CK
from . import data as D
from . import gradsuite
from . import model as M
from . import training as E
from .config import ConfigError, RunConfig, format_config, parse_config
from .data import CorpusFormatError

METRICS_HEADER = "epoch,d_loss,g_loss,train_mae,val_mae,val_rmse"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for runtime
    # failures, so remap.
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ganreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)

    p = sub.add_parser("eval", help="report MAE/RMSE of a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("generate", help="decode sampled sequences from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--corrupt", help=argparse.SUPPRESS)  # harness self-test hook

    p = sub.add_parser("synth-data", help="write the synthetic benchmark corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--labeled", type=int, required=True)
    p.add_argument("--unlabeled", type=int, required=True)
    p.add_argument("--validation", type=int, required=True)
    p.add_argument("--doc-len", type=int, default=12)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("baseline", help="ridge regression over pooled embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--alpha", type=float, default=1e-6)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "generate": cmd_generate,
        "gradcheck": cmd_gradcheck,
        "synth-data": cmd_synth_data,
        "baseline": cmd_baseline,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, CorpusFormatError, CK.CheckpointError, UsageError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (E.TrainingDiverged, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


# -- train -----------------------------------------------------------------------


def _load_labeled(path, what: str) -> list[D.Example]:
    labeled, unlabeled = D.load_corpus(path)
    if unlabeled:
        raise ConfigError(f"{what} corpus {path} contains "
                          f"{len(unlabeled)} unlabeled line(s)")
    if not labeled:
        raise ConfigError(f"{what} corpus {path} is empty")
    return labeled


def _model_config(cfg: RunConfig, vocab_size: int, embed_dim: int) -> M.ModelConfig:
    return M.ModelConfig(
        vocab_size=vocab_size, embed_dim=embed_dim, doc_len=cfg.doc_len,
        gen_hidden=cfg.gen_hidden, noise_dim=cfg.noise_dim, channels=cfg.channels,
        kernel_size=cfg.kernel_size, n_blocks=cfg.n_blocks,
        temperature=cfg.temperature, conditional=cfg.conditional,
    )


def _train_config(cfg: RunConfig) -> E.TrainConfig:
    return E.TrainConfig(
        lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, lambda_reg=cfg.lambda_reg,
        batch_labeled=cfg.batch_labeled, batch_unlabeled=cfg.batch_unlabeled,
        batch_generated=cfg.batch_generated, epochs=cfg.epochs, seed=cfg.seed,
        d_steps=cfg.d_steps, precision=cfg.precision,
        generation_path=cfg.generation_path, train_embeddings=cfg.train_embeddings,
        regress_generated=cfg.regress_generated,
    )


def format_metrics_csv(history: list[E.EpochMetrics]) -> str:
    lines = [METRICS_HEADER]
    for rec in history:
        lines.append(",".join([
            str(rec.epoch), repr(rec.d_loss), repr(rec.g_loss),
            repr(rec.train_mae), repr(rec.val_mae), repr(rec.val_rmse),
        ]))
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    vocab, table = D.load_embeddings(cfg.embeddings_path)
    labeled = _load_labeled(cfg.labeled_path, "labeled")
    validation = _load_labeled(cfg.validation_path, "validation")
    unlabeled: list[D.Example] = []
    if cfg.unlabeled_path:
        lab_part, unlab_part = D.load_corpus(cfg.unlabeled_path)
        # Any labels in the unlabeled pool are ignored by construction.
        unlabeled = unlab_part + [D.Example(tokens=e.tokens) for e in lab_part]

    mcfg = _model_config(cfg, len(vocab), table.dim)
    tcfg = _train_config(cfg)
    if tcfg.precision == "float32":
        table.matrix.data = table.matrix.data.astype(np.float32)

    enc_lab = D.encode_dataset(labeled, vocab, cfg.doc_len, require_labels=True)
    enc_val = D.encode_dataset(validation, vocab, cfg.doc_len, require_labels=True)
    enc_unlab = D.encode_dataset(unlabeled, vocab, cfg.doc_len) if unlabeled else None

    gen, disc = M.build_model(mcfg, tcfg.seed, embedding=table, dtype=tcfg.dtype)
    result = E.train(gen, disc, mcfg, tcfg, enc_lab.ids, enc_lab.labels,
                     enc_unlab.ids if enc_unlab else None, enc_val.ids, enc_val.labels)

    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(format_metrics_csv(result.history))
    with open(os.path.join(cfg.out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))

    final_sections = build_checkpoint(mcfg, gen, disc, vocab, enc_lab.labels,
                                      epoch=len(result.history))
    CK.save_sections(os.path.join(cfg.out_dir, "final.ckpt"), final_sections)
    if result.best_params is not None:
        E.restore_params(gen, disc, result.best_params)
        best_sections = build_checkpoint(mcfg, gen, disc, vocab, enc_lab.labels,
                                         epoch=result.best_epoch)
        CK.save_sections(os.path.join(cfg.out_dir, "best.ckpt"), best_sections)
    return 0


def build_checkpoint(mcfg: M.ModelConfig, gen: M.GeneratorNet, disc: M.DiscriminatorNet,
                     vocab: D.Vocabulary, label_pool: np.ndarray, epoch: int,
                     rng: np.random.Generator | None = None,
                     optimizers: dict[str, E.Adam] | None = None) -> OrderedDict:
    sections: OrderedDict[str, np.ndarray] = OrderedDict()
    sections["config/vocab_size"] = np.asarray([mcfg.vocab_size], dtype=np.float64)
    sections["config/embed_dim"] = np.asarray([mcfg.embed_dim], dtype=np.float64)
    sections["config/doc_len"] = np.asarray([mcfg.doc_len], dtype=np.float64)
    sections["config/gen_hidden"] = np.asarray([mcfg.gen_hidden], dtype=np.float64)
    sections["config/noise_dim"] = np.asarray([mcfg.noise_dim], dtype=np.float64)
    sections["config/channels"] = np.asarray([mcfg.channels], dtype=np.float64)
    sections["config/kernel_size"] = np.asarray([mcfg.kernel_size], dtype=np.float64)
    sections["config/n_blocks"] = np.asarray([mcfg.n_blocks], dtype=np.float64)
    sections["config/temperature"] = np.asarray([mcfg.temperature], dtype=np.float64)
    sections["config/conditional"] = np.asarray([1.0 if mcfg.conditional else 0.0])
    sections["meta/epoch"] = np.asarray([float(epoch)])
    if rng is not None:
        sections["meta/rng_state"] = CK.encode_rng_state(rng)
    sections["meta/label_pool"] = np.asarray(label_pool, dtype=np.float64)
    sections["vocab/utf8"] = CK.encode_text("\n".join(vocab.id_to_token[2:]))
    for name, arr in E.snapshot_params(gen, disc).items():
        sections[f"param/{name}"] = arr
    if optimizers:
        for tag, opt in optimizers.items():
            sections[f"opt/{tag}/t"] = np.asarray([float(opt.t)])
            for pname in opt.params:
                sections[f"opt/{tag}/{pname}/m"] = opt.m[pname]
                sections[f"opt/{tag}/{pname}/v"] = opt.v[pname]
    return sections


def load_model_checkpoint(path):
    """Rebuild (mcfg, gen, disc, vocab, label_pool) from a checkpoint file."""
    sections = CK.load_sections(path)
    try:
        mcfg = M.ModelConfig(
            vocab_size=int(sections["config/vocab_size"][0]),
            embed_dim=int(sections["config/embed_dim"][0]),
            doc_len=int(sections["config/doc_len"][0]),
            gen_hidden=int(sections["config/gen_hidden"][0]),
            noise_dim=int(sections["config/noise_dim"][0]),
            channels=int(sections["config/channels"][0]),
            kernel_size=int(sections["config/kernel_size"][0]),
            n_blocks=int(sections["config/n_blocks"][0]),
            temperature=float(sections["config/temperature"][0]),
            conditional=bool(sections["config/conditional"][0]),
        )
        tokens = CK.decode_text(sections["vocab/utf8"])
        vocab = D.Vocabulary.from_tokens(tokens.split("\n") if tokens else [])
        label_pool = sections["meta/label_pool"]
        params = {name[len("param/"):]: arr for name, arr in sections.items()
                  if name.startswith("param/")}
    except KeyError as exc:
        raise CK.CheckpointError(f"{path}: missing section {exc}") from None
    gen, disc = M.build_model(mcfg, seed=0)
    try:
        E.restore_params(gen, disc, params)
    except (KeyError, ValueError) as exc:
        raise CK.CheckpointError(f"{path}: {exc}") from None
    return mcfg, gen, disc, vocab, label_pool


# -- eval / generate ----------------------------------------------------------------


def cmd_eval(args) -> int:
    mcfg, gen, disc, vocab, _ = load_model_checkpoint(args.checkpoint)
    labeled, unlabeled = D.load_corpus(args.corpus)
    if unlabeled:
        raise UsageError(f"eval corpus {args.corpus} has unlabeled lines; "
                         "evaluation needs labels")
    if not labeled:
        raise UsageError(f"eval corpus {args.corpus} is empty")
    enc = D.encode_dataset(labeled, vocab, mcfg.doc_len, require_labels=True)
    metrics = E.evaluate(disc, gen.embedding, enc.ids, enc.labels)
    print("mae,rmse")
    print(f"{metrics['mae']:.6f},{metrics['rmse']:.6f}")
    return 0


def cmd_generate(args) -> int:
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    mcfg, gen, disc, vocab, label_pool = load_model_checkpoint(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    for _ in range(args.n):
        z = rng.standard_normal(mcfg.noise_dim)
        y_cond = float(rng.choice(label_pool)) if label_pool.size else 0.0
        soft = M.generate(gen, z, y_cond, mcfg)
        tokens = [t for t in M.decode_tokens(soft, vocab) if t]
        print(f"{y_cond:.6f}\t{' '.join(tokens)}")
    return 0


# -- gradcheck ------------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    results = gradsuite.run_gradient_checks(corrupt=args.corrupt)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:28s} max_rel_err={r.max_rel_err:.3e} "
              f"threshold={r.threshold:.0e} {status}")
    if failed:
        print(f"error: gradient check failed for: "
              f"{', '.join(r.name for r in failed)}", file=sys.stderr)
        return 2
    return 0


# -- synthetic data / baseline ---------------------------------------------------------


def cmd_synth_data(args) -> int:
    if min(args.labeled, args.unlabeled, args.validation) < 0:
        raise UsageError("corpus sizes must be >= 0")
    if args.doc_len < 1:
        raise UsageError("--doc-len must be >= 1")
    if args.sigma < 0:
        raise UsageError("--sigma must be >= 0")
    split, vocab, table = D.synth_corpus(args.labeled, args.unlabeled,
                                         args.validation, args.doc_len,
                                         args.sigma, args.seed)
    os.makedirs(args.out, exist_ok=True)
    D.write_corpus(os.path.join(args.out, "labeled.tsv"), split.labeled)
    D.write_corpus(os.path.join(args.out, "unlabeled.tsv"), split.unlabeled)
    D.write_corpus(os.path.join(args.out, "validation.tsv"), split.validation)
    D.write_embeddings(os.path.join(args.out, "embeddings.txt"), vocab, table)
    print(f"wrote {len(split.labeled)} labeled / {len(split.unlabeled)} unlabeled / "
          f"{len(split.validation)} validation examples to {args.out}")
    return 0


def cmd_baseline(args) -> int:
    if args.alpha < 0:
        raise UsageError("--alpha must be >= 0")
    vocab, table = D.load_embeddings(args.embeddings)
    # Unlabeled lines in the training corpus are ignored: the linear
    # baseline has no use for them.
    train_examples, _ = D.load_corpus(args.train)
    if not train_examples:
        raise ConfigError(f"baseline train corpus {args.train} has no labeled lines")
    test_examples = _load_labeled(args.test, "baseline test")
    doc_len = max(len(e.tokens) for e in train_examples + test_examples)
    enc_train = D.encode_dataset(train_examples, vocab, doc_len, require_labels=True)
    enc_test = D.encode_dataset(test_examples, vocab, doc_len, require_labels=True)
    model = BL.ridge_fit(BL.pool_dataset(enc_train, table), enc_train.labels, args.alpha)
    preds = BL.ridge_predict(model, BL.pool_dataset(enc_test, table))
    err = preds - enc_test.labels
    print("mae,rmse")
    print(f"{np.mean(np.abs(err)):.6f},{np.sqrt(np.mean(err * err)):.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

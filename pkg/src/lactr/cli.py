"""Command-line entry point: prep, lda-init, train, eval, predict, simulate,
inspect.

Every command resolves settings in three layers (built-in defaults, then an
optional ``--config`` file, then explicit flags), validates inputs before any
expensive work, and writes a manifest recording the effective configuration,
its hash, and library versions.  Exit codes: 0 ok, 1 usage, 2 data error,
3 numeric error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import replace
from datetime import datetime, timezone

from .config import RunConfig
from .errors import InputError, NumericError

log = logging.getLogger("lactr")


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int,
                   help="cap BLAS/OpenMP thread pools (best effort; set "
                        "before numpy is first imported)")
    p.add_argument("--verbose", action="store_true", help="log progress")


def _add_hyper(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="latent dimensionality")
    p.add_argument("--lambda-u", type=float, dest="lambda_u")
    p.add_argument("--lambda-v", type=float, dest="lambda_v")
    p.add_argument("--lambda-s", type=float, dest="lambda_s")
    p.add_argument("--lambda-phi", type=float, dest="lambda_phi")
    p.add_argument("--a-r", type=float, dest="a_r")
    p.add_argument("--b-r", type=float, dest="b_r")
    p.add_argument("--a-phi", type=float, dest="a_phi")
    p.add_argument("--b-phi", type=float, dest="b_phi")
    p.add_argument("--theta-mode", choices=("optimize", "frozen"),
                   dest="theta_mode")
    p.add_argument("--max-sweeps", type=int, dest="max_sweeps")
    p.add_argument("--tol", type=float)
    p.add_argument("--theta-steps", type=int, dest="theta_steps")


def build_parser() -> _Parser:
    parser = _Parser(prog="lactr",
                     description="social recommendation toolkit: per-follow "
                                 "attention budgets, item topics, implicit "
                                 "votes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="prepare a dataset directory from raw "
                                    "item/vote/edge files")
    _add_common(p)
    p.add_argument("--items", dest="items_file", help="item text file")
    p.add_argument("--votes", dest="votes_file", help="vote log file")
    p.add_argument("--edges", dest="edges_file", help="follower edge file")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--top-m", type=int, dest="top_m")
    p.add_argument("--min-votes", type=int, dest="min_votes")
    p.add_argument("--min-words", type=int, dest="min_words")
    p.add_argument("--neg-samples", type=int, dest="neg_samples")
    p.add_argument("--attribution", choices=("all", "earliest"))
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("lda-init", help="fit the topic warm start")
    _add_common(p)
    p.add_argument("--data", dest="data_dir", help="prepared dataset dir")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--k", type=int)
    p.add_argument("--lda-alpha", type=float, dest="lda_alpha")
    p.add_argument("--lda-eta", type=float, dest="lda_eta")
    p.add_argument("--lda-iters", type=int, dest="lda_iters")
    p.set_defaults(func=cmd_lda_init)

    p = sub.add_parser("train", help="fit the joint model")
    _add_common(p)
    _add_hyper(p)
    p.add_argument("--data", dest="data_dir")
    p.add_argument("--init", dest="init_file",
                   help="topic warm-start bundle (fitted inline when absent)")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--lda-alpha", type=float, dest="lda_alpha")
    p.add_argument("--lda-eta", type=float, dest="lda_eta")
    p.add_argument("--lda-iters", type=int, dest="lda_iters")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="cross-validated model comparison")
    _add_common(p)
    _add_hyper(p)
    p.add_argument("--data", dest="data_dir")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--models", help="comma list: lactr,ctr,popularity,random")
    p.add_argument("--latents", help="comma list: interest,attention")
    p.add_argument("--folds", type=int, dest="n_folds")
    p.add_argument("--mode", choices=("in_matrix", "out_of_matrix"),
                   dest="eval_mode")
    p.add_argument("--x-grid", dest="x_grid",
                   help="cutoffs, e.g. 20:200:20 or 10,50,100")
    p.add_argument("--aggregation", choices=("max", "sum"))
    p.add_argument("--neg-samples", type=int, dest="neg_samples")
    p.add_argument("--attribution", choices=("all", "earliest"))
    p.add_argument("--lda-alpha", type=float, dest="lda_alpha")
    p.add_argument("--lda-eta", type=float, dest="lda_eta")
    p.add_argument("--lda-iters", type=int, dest="lda_iters")
    p.add_argument("--sweep", help="grid over the attention weight, e.g. "
                                   "lambda_phi=0.001,0.01,0.1,1,10")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="rank the catalog for one user")
    _add_common(p)
    p.add_argument("--model", dest="model_file", help="trained model bundle")
    p.add_argument("--user", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--latent", choices=("interest", "attention"),
                   default="attention")
    p.add_argument("--mode", choices=("in_matrix", "out_of_matrix"),
                   default="in_matrix")
    p.add_argument("--aggregation", choices=("max", "sum"))
    p.add_argument("--out", dest="out_file", help="write TSV here as well")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_common(p)
    _add_hyper(p)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--users", type=int, dest="n_users")
    p.add_argument("--items", type=int, dest="n_items")
    p.add_argument("--vocab-size", type=int, dest="vocab_size")
    p.add_argument("--doc-length", type=int, dest="doc_length")
    p.add_argument("--graph", help="erdos_renyi:<p> or preferential:<m>")
    p.add_argument("--adoption", help="threshold:<tau> or top_k:<kappa>")
    p.add_argument("--target-rate", type=float, dest="target_rate",
                   help="calibrate the threshold to this positive pair rate")
    p.add_argument("--theta-alpha", type=float, dest="theta_alpha")
    p.add_argument("--beta-eta", type=float, dest="beta_eta")
    p.add_argument("--neg-samples", type=int, dest="neg_samples")
    p.add_argument("--attribution", choices=("all", "earliest"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect", help="interpretability dump for one user")
    _add_common(p)
    p.add_argument("--model", dest="model_file")
    p.add_argument("--data", dest="data_dir",
                   help="prepared dataset dir (for the vocabulary)")
    p.add_argument("--user", required=True)
    p.add_argument("--n-topics", type=int, default=3)
    p.add_argument("--n-influencers", type=int, default=3)
    p.add_argument("--n-words", type=int, default=10)
    p.set_defaults(func=cmd_inspect)

    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) \
        else RunConfig()
    overrides = {}
    for f in cfg.as_dict():
        val = getattr(args, f, None)
        if val is not None:
            overrides[f] = val
    return cfg.replace(**overrides) if overrides else cfg


def _require(cfg: RunConfig, **paths: str) -> None:
    """Fail fast when an input is unset or missing on disk."""
    for flag, field_name in paths.items():
        value = getattr(cfg, field_name)
        if not value:
            raise InputError(f"missing required --{flag}")
        if field_name != "out_dir" and not os.path.exists(value):
            raise InputError(f"--{flag} path does not exist: {value}")


def _config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(cfg.serialize().encode("utf-8")).hexdigest()


def write_manifest(out_dir: str, command: str, cfg: RunConfig,
                   outputs: dict | None = None) -> None:
    from . import __version__
    import numpy
    payload = {
        "command": command,
        "config": cfg.as_dict(),
        "config_hash": _config_hash(cfg),
        "versions": {"lactr": __version__, "numpy": numpy.__version__,
                     "python": platform.python_version()},
        "created": datetime.now(timezone.utc).isoformat(),
        "outputs": outputs or {},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_prep(args: argparse.Namespace) -> int:
    from . import corpus as corpus_mod
    from . import dataset, social
    cfg = _resolve_config(args)
    _require(cfg, items="items_file", votes="votes_file", edges="edges_file",
             out="out_dir")
    raw_items = corpus_mod.read_items_file(cfg.items_file)
    votes = social.read_votes_file(cfg.votes_file)
    if not len(votes):
        raise InputError("no votes")
    edge_pairs = social.read_edges_file(cfg.edges_file)
    vocab = corpus_mod.build_vocabulary([toks for _, toks in raw_items],
                                        cfg.top_m)
    full = corpus_mod.corpus_from_tokens(raw_items, vocab)
    kept, votes_kept = corpus_mod.filter_activity(full, votes, cfg.min_votes,
                                                  cfg.min_words)
    if not len(votes_kept):
        raise InputError("no votes survive activity filtering")
    users = votes_kept.users()
    graph = social.FollowerGraph.from_pairs(edge_pairs, users)
    edges = social.build_attention_edges(graph, cfg.neg_samples, cfg.seed)
    attr = social.attribute_sources(votes_kept, edges, cfg.attribution)
    stats = dataset.basic_stats(kept, users, votes_kept, graph, edges)
    stats["n_raw_items"] = len(raw_items)
    stats["n_raw_votes"] = len(votes)
    dataset.save_prepared(cfg.out_dir, kept, users, graph, votes_kept, edges,
                          attr, stats)
    write_manifest(cfg.out_dir, "prep", cfg, {"stats": stats})
    print(f"prep: {stats['n_users']} users, {stats['n_items']} items, "
          f"{stats['n_votes']} votes, positive rate "
          f"{stats['positive_rate']:.4%}")
    return 0


def _load_training_inputs(cfg: RunConfig):
    from . import dataset
    corpus = dataset.load_corpus(cfg.data_dir)
    users = dataset.load_users(cfg.data_dir)
    return corpus, users


def _warm_start(cfg: RunConfig, corpus):
    from .store import load_topics
    from .topics import fit_lda
    if cfg.init_file:
        tm, _ = load_topics(cfg.init_file)
        if tm.k != cfg.k or tm.n_items != corpus.n_items \
                or tm.vocab_size != corpus.vocab_size:
            raise InputError(
                f"warm start {cfg.init_file} does not match the dataset "
                f"(k={tm.k}, items={tm.n_items}, vocab={tm.vocab_size})")
        return tm
    log.info("fitting %d-topic warm start inline", cfg.k)
    return fit_lda(corpus, cfg.k, alpha=cfg.lda_alpha, eta=cfg.lda_eta,
                   iters=cfg.lda_iters, seed=cfg.seed)


def cmd_lda_init(args: argparse.Namespace) -> int:
    from . import dataset
    from .store import save_topics
    from .topics import fit_lda, format_topic_dump
    cfg = _resolve_config(args)
    _require(cfg, data="data_dir", out="out_dir")
    corpus = dataset.load_corpus(cfg.data_dir)
    tm = fit_lda(corpus, cfg.k, alpha=cfg.lda_alpha, eta=cfg.lda_eta,
                 iters=cfg.lda_iters, seed=cfg.seed)
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_topics(os.path.join(cfg.out_dir, "topics.npz"), tm,
                {"alpha": cfg.lda_alpha, "eta": cfg.lda_eta,
                 "iters": cfg.lda_iters, "seed": cfg.seed})
    with open(os.path.join(cfg.out_dir, "topics.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(format_topic_dump(tm.beta, corpus.vocabulary))
    write_manifest(cfg.out_dir, "lda-init", cfg,
                   {"topics": "topics.npz", "dump": "topics.txt"})
    print(f"lda-init: {tm.k} topics on {corpus.n_items} items")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from . import dataset, plots
    from .model import RatingView, train
    from .store import save_model
    cfg = _resolve_config(args)
    _require(cfg, data="data_dir", out="out_dir")
    if cfg.init_file and not os.path.exists(cfg.init_file):
        raise InputError(f"--init path does not exist: {cfg.init_file}")
    corpus, users = _load_training_inputs(cfg)
    edges = dataset.load_attention(cfg.data_dir, users)
    attr = dataset.load_attribution(cfg.data_dir, users)
    ratings = RatingView.from_attribution(attr, edges, corpus.item_ids)
    warm = _warm_start(cfg, corpus)
    hp = cfg.hyperparams()

    def progress(sweep, _state, ell):
        log.info("sweep %d: objective %.6f", sweep, ell)

    state, trace = train(warm, corpus, edges, ratings, hp, seed=cfg.seed,
                         theta_steps=cfg.theta_steps, callback=progress)
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_model(os.path.join(cfg.out_dir, "model.npz"), state, hp)
    trace.to_csv(os.path.join(cfg.out_dir, "trace.csv"))
    plots.plot_trace(trace, os.path.join(cfg.out_dir, "trace.png"))
    write_manifest(cfg.out_dir, "train", cfg, {
        "model": "model.npz", "trace": "trace.csv", "figure": "trace.png",
        "sweeps": trace.n_sweeps, "converged": trace.converged,
        "final_objective": trace.final_log_likelihood,
    })
    print(f"train: {trace.n_sweeps} sweeps, final objective "
          f"{trace.final_log_likelihood:.4f}"
          f"{' (converged)' if trace.converged else ''}")
    return 0


def _parse_sweep(spec: str) -> list[float]:
    key, _, body = spec.partition("=")
    if key.strip() != "lambda_phi" or not body:
        raise InputError("--sweep supports lambda_phi=<v1,v2,...> only")
    try:
        values = [float(tok) for tok in body.split(",") if tok.strip()]
    except ValueError:
        raise InputError(f"malformed sweep values {body!r}") from None
    if not values or any(v <= 0 for v in values):
        raise InputError("sweep values must be positive")
    return values


def cmd_eval(args: argparse.Namespace) -> int:
    from . import dataset, plots
    from .evaluate import EvalModel, FoldPlan, run_experiment, \
        write_results_csv
    cfg = _resolve_config(args)
    _require(cfg, data="data_dir", out="out_dir")
    corpus, users = _load_training_inputs(cfg)
    votes = dataset.load_votes(cfg.data_dir)
    graph = dataset.load_graph(cfg.data_dir, users)
    hp = cfg.hyperparams()
    latents = cfg.latent_names()
    sweep_values = _parse_sweep(args.sweep) if args.sweep else None
    models = []
    if sweep_values is None:
        for name in cfg.model_names():
            if name == "lactr":
                models.append(EvalModel(name, "lactr", latents, hp))
            elif name == "ctr":
                models.append(EvalModel(name, "ctr", ("interest",), hp))
            elif name in ("popularity", "random"):
                models.append(EvalModel(name, name, ("none",)))
            else:
                raise InputError(f"unknown model {name!r}")
    else:
        for val in sweep_values:
            models.append(EvalModel(f"lactr@{val:g}", "lactr", latents,
                                    replace(hp, lambda_phi=val)))
    folds = FoldPlan.build(votes, corpus.item_ids, cfg.n_folds,
                           cfg.eval_mode, cfg.seed)
    xs = cfg.x_grid_values()
    result = run_experiment(
        corpus, graph, votes, models, folds, xs,
        neg_samples=cfg.neg_samples, attribution=cfg.attribution,
        aggregation=cfg.aggregation, lda_alpha=cfg.lda_alpha,
        lda_eta=cfg.lda_eta, lda_iters=cfg.lda_iters, seed=cfg.seed,
        theta_steps=cfg.theta_steps, progress=log.info)
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_results_csv(result.rows, os.path.join(cfg.out_dir, "results.csv"))
    plots.plot_recall_curves(result.curves,
                             os.path.join(cfg.out_dir, "recall_curves.png"))
    outputs = {"results": "results.csv", "figure": "recall_curves.png"}
    if sweep_values is not None:
        ref_x = xs[-1] if 100 not in xs else 100
        series: dict[str, list[float]] = {}
        with open(os.path.join(cfg.out_dir, "sweep.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write("lambda_phi,latent,x,mean_recall\n")
            for val in sweep_values:
                for latent in latents:
                    curve = result.curves.get((f"lactr@{val:g}", latent))
                    if curve is None:
                        continue
                    mr = curve.mean_recall[curve.xs.index(ref_x)]
                    fh.write(f"{val!r},{latent},{ref_x},{mr!r}\n")
                    series.setdefault(latent, []).append(mr)
        plots.plot_sweep(sweep_values, series, ref_x,
                         os.path.join(cfg.out_dir, "sweep.png"))
        outputs.update({"sweep": "sweep.csv", "sweep_figure": "sweep.png"})
    write_manifest(cfg.out_dir, "eval", cfg, outputs)
    for (name, latent), curve in sorted(result.curves.items()):
        print(f"eval: {name}/{latent} mean recall@{xs[0]} = "
              f"{curve.mean_recall[0]:.4f} over {curve.n_users} user-folds")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    from .evaluate import predict_scores
    from .store import load_model
    cfg = _resolve_config(args)
    _require(cfg, model="model_file")
    state, _ = load_model(cfg.model_file)
    ranked = predict_scores(state, args.user, state.item_ids,
                            mode=args.mode, latent=args.latent,
                            aggregation=cfg.aggregation)
    top = ranked[:max(args.top, 1)]
    lines = [f"{r.item}\t{r.score!r}\t{r.source or '-'}" for r in top]
    body = "\n".join(lines) + "\n"
    sys.stdout.write(body)
    if args.out_file:
        with open(args.out_file, "w", encoding="utf-8") as fh:
            fh.write(body)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    from . import dataset
    from .corpus import write_items_file
    from .social import attribute_sources, build_attention_edges
    from .store import save_model
    from .synth import generate
    cfg = _resolve_config(args)
    _require(cfg, out="out_dir")
    result = generate(cfg.synth_config())
    if not len(result.votes):
        log.warning("simulate: adoption rule produced no votes")
    edges = build_attention_edges(result.graph, cfg.neg_samples, cfg.seed)
    attr = attribute_sources(result.votes, edges, cfg.attribution) \
        if len(result.votes) else None
    os.makedirs(cfg.out_dir, exist_ok=True)
    tokens = []
    for doc in result.corpus.documents:
        toks: list[str] = []
        for w, c in zip(doc.word_ids, doc.counts):
            toks.extend([result.corpus.vocabulary.words[int(w)]] * int(c))
        tokens.append((doc.item_id, toks))
    write_items_file(tokens, os.path.join(cfg.out_dir, "items.tsv"))
    stats = dict(result.stats)
    stats.update(dataset.basic_stats(result.corpus, result.graph.users,
                                     result.votes, result.graph, edges))
    if attr is not None:
        dataset.save_prepared(cfg.out_dir, result.corpus, result.graph.users,
                              result.graph, result.votes, edges, attr, stats)
    save_model(os.path.join(cfg.out_dir, "ground_truth.npz"), result.truth,
               cfg.hyperparams(), {"role": "ground_truth"})
    with open(os.path.join(cfg.out_dir, "sources.tsv"), "w",
              encoding="utf-8") as fh:
        for (user, item), src in sorted(result.sources.items()):
            fh.write(f"{user}\t{item}\t{src or '-'}\n")
    write_manifest(cfg.out_dir, "simulate", cfg, {"stats": stats})
    print(f"simulate: {stats['n_users']} users, {stats['n_items']} items, "
          f"{stats['n_votes']} votes, positive pair rate "
          f"{stats['positive_pair_rate']:.4%}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    from . import dataset
    from .evaluate import describe_user
    from .store import load_model
    cfg = _resolve_config(args)
    _require(cfg, model="model_file", data="data_dir")
    state, _ = load_model(cfg.model_file)
    corpus = dataset.load_corpus(cfg.data_dir)
    if corpus.vocab_size != state.vocab_size:
        raise InputError("model vocabulary size does not match the dataset")
    sys.stdout.write(describe_user(state, corpus.vocabulary, args.user,
                                   n_topics=args.n_topics,
                                   n_influencers=args.n_influencers,
                                   n_words=args.n_words))
    return 0


def _cap_threads(threads: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s")
    if getattr(args, "threads", None):
        _cap_threads(args.threads)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()

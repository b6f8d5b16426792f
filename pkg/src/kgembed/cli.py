"""Command-line front end.

Subcommands: train, eval, analyze, gradcheck, bench.  Run settings come
from `key = value` config files (# comments allowed) merged with flags,
flags winning; every training run writes its fully resolved config next to
its outputs so it can be replayed verbatim.

Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from kgembed import backend, interactions, models, reshaping, synth
from kgembed.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from kgembed.data import ParseError, load_dataset
from kgembed.encoder import COMPOSITIONS, MODES, GatedDirectedGcn, CompGcnEncoder
from kgembed.data import augment
from kgembed.numerics import ParameterStore, grad_check, named_rng
from kgembed.training import TrainConfig, bce_loss, evaluate_filtered, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3


class UsageError(ValueError):
    pass


# name -> (type, default); the single source of truth for run configs.
RUN_SCHEMA: dict[str, tuple[type, object]] = {
    "data": (str, ""),
    "out": (str, ""),
    "model": (str, "distmult"),
    "dim": (int, 200),
    "comp": (str, "corr"),
    "reduction": (str, "full"),
    "layers": (int, 1),
    "bases": (int, 50),
    "activation": (str, "tanh"),
    "epochs": (int, 200),
    "batch_size": (int, 128),
    "lr": (float, 1e-3),
    "label_smoothing": (float, 0.1),
    "dropout": (float, 0.0),
    "seed": (int, 0),
    "loss": (str, "bce"),
    "margin": (float, 1.0),
    "neg_samples": (int, 10),
    "transe_norm": (int, 1),
    "permutations": (int, 2),
    "kernel_size": (int, 3),
    "filters": (int, 8),
    "reshape": (str, "chequer"),
    "tau": (int, 1),
    "plane_rows": (int, 0),
    "plane_cols": (int, 0),
    "eval_every": (int, 1),
    "patience": (int, 0),
    "category_threshold": (float, 1.5),
}


def parse_config_file(path) -> dict:
    """Parse `key = value` lines; unknown keys are rejected."""
    out: dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in RUN_SCHEMA:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            typ, _ = RUN_SCHEMA[key]
            try:
                out[key] = typ(value)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """File settings (if any) overridden by explicitly passed flags."""
    config = {key: default for key, (_, default) in RUN_SCHEMA.items()}
    if getattr(args, "config", None):
        config.update(parse_config_file(args.config))
    for key in RUN_SCHEMA:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    _validate_config(config)
    return config


def _validate_config(config: dict) -> None:
    if config["model"] not in models.MODEL_TAGS:
        raise UsageError(
            f"unknown model {config['model']!r}; choose from {', '.join(models.MODEL_TAGS)}"
        )
    if config["comp"] not in COMPOSITIONS:
        raise UsageError(f"unknown composition {config['comp']!r}")
    if config["reduction"] not in MODES:
        raise UsageError(f"unknown reduction mode {config['reduction']!r}")
    if config["reshape"] not in reshaping.PATTERNS:
        raise UsageError(f"unknown reshaping {config['reshape']!r}")
    if config["loss"] not in ("bce", "margin"):
        raise UsageError(f"unknown loss {config['loss']!r}")
    if config["transe_norm"] not in (1, 2):
        raise UsageError("transe_norm must be 1 or 2")


def write_config(config: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in RUN_SCHEMA:
            fh.write(f"{key} = {config[key]}\n")


def _build_model(kg, config, graph=None):
    plane = None
    if config["plane_rows"] and config["plane_cols"]:
        plane = (config["plane_rows"], config["plane_cols"])
    return models.build_model(
        kg, config["model"], config["dim"], seed=config["seed"],
        comp=config["comp"], reduction=config["reduction"],
        layers=config["layers"], bases=config["bases"],
        activation=config["activation"], dropout=config["dropout"],
        transe_norm=config["transe_norm"], kernel_size=config["kernel_size"],
        filters=config["filters"], permutations=config["permutations"],
        pattern=config["reshape"], tau=config["tau"], plane=plane, graph=graph,
    )


def _train_config(config: dict) -> TrainConfig:
    return TrainConfig(
        lr=config["lr"], batch_size=config["batch_size"], epochs=config["epochs"],
        label_smoothing=config["label_smoothing"], dropout=config["dropout"],
        seed=config["seed"], loss=config["loss"], margin=config["margin"],
        neg_samples=config["neg_samples"], eval_every=config["eval_every"],
        patience=config["patience"], category_threshold=config["category_threshold"],
    )


def cmd_train(args) -> int:
    config = resolve_config(args)
    if not config["data"] or not config["out"]:
        raise UsageError("train requires --data and --out")
    kg = load_dataset(config["data"])
    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    model = _build_model(kg, config)
    train_cfg = _train_config(config)
    flagged = train_cfg.non_standard_fields()
    write_config(config, out_dir / "run.cfg")
    with open(out_dir / "log.jsonl", "w", encoding="utf-8") as log_stream:
        store, result = train(model, kg, train_cfg, log_stream=log_stream)
    save_checkpoint(out_dir / "checkpoint.kge", result.best_state)
    summary = {
        "model": config["model"],
        "epochs_run": result.epochs_run,
        "final_loss": result.epoch_log[-1]["loss"] if result.epoch_log else None,
        "best_valid_mrr": result.best_valid_mrr,
        "checkpoint": str(out_dir / "checkpoint.kge"),
        "non_standard_fields": flagged,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    checkpoint_path = Path(args.checkpoint)
    config_path = Path(args.config) if args.config else checkpoint_path.parent / "run.cfg"
    if not config_path.exists():
        raise UsageError(f"no config found at {config_path}; pass --config")
    config = {key: default for key, (_, default) in RUN_SCHEMA.items()}
    config.update(parse_config_file(config_path))
    if args.data:
        config["data"] = args.data
    if not config["data"]:
        raise UsageError("eval requires a dataset (config data= or --data)")
    kg = load_dataset(config["data"])
    model = _build_model(kg, config)
    store = ParameterStore()
    model.init_params(store)
    store.load_state_dict(load_checkpoint(checkpoint_path))
    report = evaluate_filtered(
        model, store, kg, split=args.split, side=args.side,
        category_threshold=config["category_threshold"],
    )
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def cmd_analyze(args) -> int:
    sizes = _int_list(args.sizes)
    kernels = _int_list(args.kernels)
    taus = _int_list(args.taus)
    checks: list[dict] = [interactions.check_alternate_vs_stacked(sizes, kernels)]
    for n in sizes:
        if n % 2 != 0:
            continue
        for k in kernels:
            if k > n:
                continue
            checks.append(interactions.check_alternation_monotonic(n, k, taus))
            checks.append(
                interactions.check_chequer_maximal(n, k, args.samples, args.seed)
            )
            pad_check = interactions.check_padding(interactions.chequer_layout(n), k)
            pad_check.update({"n": n})
            checks.append(pad_check)
    passed = all(c["passed"] for c in checks)
    payload = json.dumps({"passed": passed, "checks": checks}, indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return EXIT_OK if passed else EXIT_CHECK


def _gradcheck_cases(dim: int, seed: int):
    """Every scorer and every encoder-layer configuration at small dims."""
    kg = synth.random_kg(n_entities=6, n_relations=2, n_triples=10, seed=seed)
    graph = augment(kg)
    rng = named_rng(seed, "gradcheck-data")
    plane = reshaping.default_plane(dim)

    def model_case(tag, **kw):
        model = models.build_model(kg, tag, dim, seed=seed, graph=graph,
                                   filters=2, permutations=2, bases=2, layers=2, **kw)
        store = ParameterStore()
        model.init_params(store)
        s_ids = rng.integers(0, kg.n_entities, size=3)
        r_ids = rng.integers(0, 2 * kg.n_relations, size=3)
        targets = rng.random((3, kg.n_entities))

        def loss_fn(st, want_grad):
            logits, cache = model.forward_queries(st, s_ids, r_ids, train=False)
            loss, dlogits = bce_loss(logits, targets)
            if want_grad:
                model.backward_queries(st, cache, dlogits)
            return loss

        return store, loss_fn

    cases = []
    for tag, kw in [
        ("transe", {"transe_norm": 1}),
        ("transe", {"transe_norm": 2}),
        ("distmult", {}),
        ("hole", {}),
        ("conve", {}),
        ("interacte", {}),
    ]:
        label = tag if tag != "transe" else f"transe_p{kw['transe_norm']}"
        cases.append((f"scorer:{label}", *model_case(tag, **kw)))
    for comp in COMPOSITIONS:
        cases.append(
            (f"encoder:full:{comp}", *model_case("compgcn+distmult", comp=comp))
        )
    for mode in MODES:
        if mode == "full":
            continue
        cases.append(
            (f"encoder:{mode}", *model_case("compgcn+distmult", reduction=mode))
        )

    # Gated directed variant, checked against a quadratic readout.
    gate = GatedDirectedGcn("gate", dim, dim)
    store = ParameterStore()
    init_rng = named_rng(seed, "init")
    store.add("x", named_rng(seed, "gradcheck-feats").normal(size=(kg.n_entities, dim)))
    gate.init_params(store, init_rng)
    probe = named_rng(seed, "gradcheck-probe").normal(size=(kg.n_entities, dim))

    def gate_loss(st, want_grad):
        h, cache = gate.forward(st, graph, st.value("x"))
        loss = 0.5 * float(((h * probe) ** 2).sum())
        if want_grad:
            dx = gate.backward(st, cache, (h * probe) * probe)
            st.grad("x")[:] += dx
        return loss

    cases.append(("encoder:gated", store, gate_loss))
    return cases


def cmd_gradcheck(args) -> int:
    failures = 0
    for name, store, loss_fn in _gradcheck_cases(args.dim, args.seed):
        report = grad_check(store, loss_fn, h=args.step, tolerance=args.tolerance)
        status = "PASS" if report.passed else "FAIL"
        print(f"{status} {name}: max rel err {report.max_rel_err:.3e} "
              f"(worst: {report.worst_param})")
        if not report.passed:
            failures += 1
    return EXIT_OK if failures == 0 else EXIT_CHECK


def _bench_workloads(rng):
    es = rng.normal(size=(256, 128))
    er = rng.normal(size=(256, 128))
    planes = rng.normal(size=(64, 16, 16))
    filters = rng.normal(size=(8, 5, 5))
    dout = rng.normal(size=(64, 8, 16, 16))
    tags = rng.integers(1, 3, size=(12, 12)).astype(np.int8)
    return [
        ("ccorr_rows 256x128", lambda k: k.ccorr_rows(es, er)),
        ("cconv2d_forward 64x16x16 f8k5", lambda k: k.cconv2d_forward(planes, filters)),
        ("cconv2d_backward_input", lambda k: k.cconv2d_backward_input(dout, filters)),
        ("cconv2d_backward_filters", lambda k: k.cconv2d_backward_filters(dout, planes, 5)),
        ("window_pair_counts 12x12 k3", lambda k: k.window_pair_counts(tags, 3, False)),
    ]


def cmd_bench(args) -> int:
    rng = named_rng(args.seed, "bench")
    names = backend.available_backends()
    if "cython" not in names:
        print("note: compiled backend unavailable; showing python timings only")
    impls = {name: backend.load_backend(name) for name in names}
    print(f"{'kernel':<36}" + "".join(f"{n:>12}" for n in names) +
          ("     speedup" if len(names) == 2 else ""))
    for label, fn in _bench_workloads(rng):
        times = {}
        for name, impl in impls.items():
            fn(impl)  # warm up
            start = time.perf_counter()
            for _ in range(args.repeats):
                fn(impl)
            times[name] = (time.perf_counter() - start) / args.repeats
        row = f"{label:<36}" + "".join(f"{times[n] * 1e3:>10.3f}ms" for n in names)
        if len(names) == 2:
            row += f"{times['python'] / times['cython']:>11.1f}x"
        print(row)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgembed", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="train a model on a dataset directory")
    train_p.add_argument("--config", help="key = value config file")
    for key, (typ, default) in RUN_SCHEMA.items():
        train_p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ,
                             default=None, help=f"default: {default}")
    train_p.set_defaults(func=cmd_train)

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--config", help="run config (default: run.cfg beside checkpoint)")
    eval_p.add_argument("--data", help="override dataset directory")
    eval_p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    eval_p.add_argument("--side", default="both", choices=["head", "tail", "both"])
    eval_p.add_argument("--out", help="write the report JSON here as well")
    eval_p.set_defaults(func=cmd_eval)

    an_p = sub.add_parser("analyze", help="run the interaction-count verifiers")
    an_p.add_argument("--sizes", default="4,6,8,10,12")
    an_p.add_argument("--kernels", default="1,2,3,4,5")
    an_p.add_argument("--taus", default="1,2,3,4,6")
    an_p.add_argument("--samples", type=int, default=200)
    an_p.add_argument("--seed", type=int, default=0)
    an_p.add_argument("--out", help="write the report JSON here as well")
    an_p.set_defaults(func=cmd_analyze)

    gc_p = sub.add_parser("gradcheck", help="finite-difference checks for every model")
    gc_p.add_argument("--dim", type=int, default=6)
    gc_p.add_argument("--step", type=float, default=1e-5)
    gc_p.add_argument("--tolerance", type=float, default=1e-4)
    gc_p.add_argument("--seed", type=int, default=0)
    gc_p.set_defaults(func=cmd_gradcheck)

    bench_p = sub.add_parser("bench", help="compare kernel backends")
    bench_p.add_argument("--repeats", type=int, default=5)
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ParseError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

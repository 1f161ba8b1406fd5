"""Command-line interface: expert-example generation, training, evaluation,
tournaments and file inspection.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Run directories hold the resolved config snapshot (TOML), the metrics CSV,
periodic checkpoints named ``{role}_{iter}.xqnn`` and final models, so a run
is reproducible from its snapshot alone (plus the expert example file it
points at).
"""

from __future__ import annotations

import argparse
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import kernels
from .board import Board, legal_moves
from .evaluation import EvalReport, evaluate, tournament, tournament_matrix_csv
from .nn import NonFiniteGradientError, load_network
from .policies import (
    POLICY_KINDS,
    STOCHASTIC,
    ScriptedPolicy,
    XQEX_MAGIC,
    generate_expert_examples,
    load_expert_examples,
    save_expert_examples,
)
from .qlearning import (
    ALGORITHMS,
    DOUBLE_DUELING,
    EXPERT_Q,
    ExpertBuffer,
    TrainConfig,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a training run needs; persisted verbatim into the run dir."""

    gamma: float = 0.99
    lr: float = 1e-4
    iters: int = 100000
    sync_every: int = 2000
    batch: int = 64
    eps_start: float = 1.0
    eps_end: float = 0.01
    buffer_cap: int = 10000
    seed: int = 0
    algorithm: str = EXPERT_Q
    opponent: str = "random"
    expert_file: str | None = None
    log_every: int = 100
    checkpoint_every: int = 2000
    eval_every: int = 0
    eval_rounds: int = 1
    fc_activation: str = "sigmoid"
    initial_q_reducer: str = "max"
    expert_loss_on_copy: bool = False

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {self.algorithm!r} (choose from {', '.join(ALGORITHMS)})")
        if self.opponent not in POLICY_KINDS:
            raise UsageError(f"unknown opponent {self.opponent!r} (choose from {', '.join(POLICY_KINDS)})")
        if self.algorithm == EXPERT_Q and not self.expert_file:
            raise UsageError("expert examples required: pass --expert-file for algorithm expert-q")
        if self.checkpoint_every <= 0 or self.eval_rounds <= 0:
            raise UsageError("checkpoint_every and eval_rounds must be positive")
        try:
            self.to_train_config().validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma,
            lr=self.lr,
            max_iter=self.iters,
            sync_every=self.sync_every,
            batch=self.batch,
            eps_start=self.eps_start,
            eps_end=self.eps_end,
            buffer_cap=self.buffer_cap,
            seed=self.seed,
            algorithm=self.algorithm,
            log_every=self.log_every,
            fc_activation=self.fc_activation,
            initial_q_reducer=self.initial_q_reducer,
            expert_loss_on_copy=self.expert_loss_on_copy,
        )


def _toml_literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    escaped = str(value).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def write_config_toml(path: Path, cfg: RunConfig) -> None:
    lines = [f"{k} = {_toml_literal(v)}" for k, v in asdict(cfg).items() if v is not None]
    path.write_text("\n".join(lines) + "\n")


def read_config_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def resolve_run_config(args) -> RunConfig:
    values: dict = {}
    if args.config:
        values.update(read_config_toml(Path(args.config)))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def cmd_gen_expert(args) -> int:
    if args.opponent not in POLICY_KINDS:
        raise UsageError(f"unknown opponent {args.opponent!r}")
    if args.keep > args.pool:
        raise UsageError("--keep must not exceed --pool")
    ss = np.random.SeedSequence(args.seed)
    sampler_ss, opp_ss, keep_ss = ss.spawn(3)
    sampler = ScriptedPolicy(STOCHASTIC, sampler_ss)
    opponent = ScriptedPolicy(args.opponent, opp_ss)
    examples = generate_expert_examples(
        sampler, opponent, args.pool, args.keep, np.random.default_rng(keep_ss), args.dead_zone
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_expert_examples(out, examples)
    hist = Counter(ex.label for ex in examples)
    print(f"wrote {len(examples)} expert examples to {out}")
    print(f"label histogram: -1: {hist.get(-1, 0)}  0: {hist.get(0, 0)}  +1: {hist.get(1, 0)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_run_config(args)
    out_dir = Path(args.out_dir)
    if (out_dir / "metrics.csv").exists():
        raise UsageError(f"{out_dir} already holds a run; choose a fresh --out-dir")
    out_dir.mkdir(parents=True, exist_ok=True)

    expert = ExpertBuffer()
    if cfg.algorithm == EXPERT_Q:
        try:
            expert = ExpertBuffer(load_expert_examples(cfg.expert_file))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load expert examples: {exc}") from None
        if not len(expert):
            raise UsageError(f"expert example file {cfg.expert_file} is empty")

    write_config_toml(out_dir / "config.toml", cfg)
    tcfg = cfg.to_train_config()
    opponent = ScriptedPolicy(cfg.opponent)

    roles = ["q_a"] if cfg.algorithm == DOUBLE_DUELING else ["q_a", "e_a"]

    def checkpoint(iteration, nets):
        if (iteration + 1) % cfg.checkpoint_every == 0:
            for role in roles:
                getattr(nets, role).save(out_dir / f"{role}_{iteration + 1}.xqnn")

    eval_hook = None
    if cfg.eval_every:
        eval_opponent = ScriptedPolicy(cfg.opponent)

        def eval_hook(nets):
            report = evaluate(nets, eval_opponent, rounds=cfg.eval_rounds, seed=cfg.seed)
            return report.score

    try:
        nets, log = train(
            tcfg, opponent, expert,
            callback=checkpoint, eval_hook=eval_hook, eval_every=cfg.eval_every,
        )
    except NonFiniteGradientError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    (out_dir / "metrics.csv").write_text(log.to_csv())
    for role in roles:
        getattr(nets, role).save(out_dir / f"{role}_final.xqnn")
    if log.rows:
        last = log.rows[-1]
        print(f"finished {tcfg.max_iter} iterations; last row: iter={last[0]} loss_q={last[2]} initial_q={last[4]}")
    print(f"run directory: {out_dir}")
    return EXIT_OK


def _load_model(path: str):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"model file not found: {p}")
    try:
        return load_network(p)
    except ValueError as exc:
        raise UsageError(f"cannot load model {p}: {exc}") from None


def cmd_eval(args) -> int:
    if args.opponent not in POLICY_KINDS:
        raise UsageError(f"unknown opponent {args.opponent!r}")
    net = _load_model(args.model)
    opponent = ScriptedPolicy(args.opponent)
    report = evaluate(net, opponent, rounds=args.rounds, seed=args.seed)
    print(f"games={report.games} wins={report.wins} draws={report.draws} "
          f"losses={report.losses} score={report.score:.4f}")
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "eval.json").write_text(report.to_json() + "\n")
        csv_path = out_dir / "eval.csv"
        rows = [] if not csv_path.exists() else [csv_path.read_text().rstrip("\n")]
        if not rows:
            rows.append(EvalReport.csv_header())
        rows.append(report.csv_row(Path(args.model).stem, "", args.opponent))
        csv_path.write_text("\n".join(rows) + "\n")
        print(f"wrote {out_dir / 'eval.json'} and {csv_path}")
    return EXIT_OK


def cmd_tournament(args) -> int:
    if len(args.models) < 2:
        raise UsageError("need at least two players")
    nets = [_load_model(m) for m in args.models]
    names = []
    for i, m in enumerate(args.models):
        stem = Path(m).stem
        names.append(stem if stem not in names else f"{stem}#{i}")
    results = tournament(nets, rounds=args.rounds, seed=args.seed, names=names)
    matrix = tournament_matrix_csv(results)
    for res in results:
        print(f"{res.pair[0]} vs {res.pair[1]}: {res.a_wins}-{res.b_wins} "
              f"({res.draws} draws, {res.games} games)")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(matrix)
        print(f"wrote {out}")
    else:
        print(matrix, end="")
    return EXIT_OK


def cmd_show(args) -> int:
    p = Path(args.path)
    if not p.exists():
        raise UsageError(f"no such file: {p}")
    head = p.read_bytes()[:4]
    if head == b"XQNN":
        net = _load_model(p)
        n_params = sum(x.size for x in net.params())
        print(f"{p}: model, {len(net.layers)} layers, {n_params} parameters")
        for spec in net.descriptor()["layers"]:
            kind = spec.pop("kind")
            detail = " ".join(f"{k}={v}" for k, v in spec.items())
            print(f"  {kind} {detail}".rstrip())
        return EXIT_OK
    if head == XQEX_MAGIC:
        examples = load_expert_examples(p)
        hist = Counter(ex.label for ex in examples)
        print(f"{p}: {len(examples)} expert examples")
        print(f"label histogram: -1: {hist.get(-1, 0)}  0: {hist.get(0, 0)}  +1: {hist.get(1, 0)}")
        return EXIT_OK
    try:
        board = Board.from_text(p.read_text())
    except ValueError as exc:
        raise UsageError(f"{p}: not a model, expert example or board file ({exc})")
    print(board.to_text())
    print(f"legal moves: {legal_moves(board)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expertq",
        description="Expert Q-learning and Double-Dueling-Q on Othello "
                    f"(kernels: {kernels.IMPLEMENTATION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-expert", help="generate labeled expert examples")
    gen.add_argument("--pool", type=int, default=100000, help="states to sample before subsetting")
    gen.add_argument("--keep", type=int, default=10000, help="examples kept from the pool")
    gen.add_argument("--opponent", default="random", help="opponent the sampler plays against")
    gen.add_argument("--dead-zone", type=float, default=0.0, help="weighted-diff band labeled 0")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="expert_examples.xqex")
    gen.set_defaults(func=cmd_gen_expert)

    tr = sub.add_parser("train", help="train an agent and write a run directory")
    tr.add_argument("--config", help="TOML config; flags override its values")
    tr.add_argument("--out-dir", default="run", help="run directory to create")
    tr.add_argument("--algo", dest="algorithm", choices=ALGORITHMS, help="training algorithm")
    for name, typ in [
        ("gamma", float), ("lr", float), ("iters", int), ("sync-every", int),
        ("batch", int), ("eps-start", float), ("eps-end", float), ("buffer-cap", int),
        ("seed", int), ("log-every", int), ("checkpoint-every", int),
        ("eval-every", int), ("eval-rounds", int),
    ]:
        tr.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ)
    tr.add_argument("--opponent", choices=POLICY_KINDS)
    tr.add_argument("--expert-file")
    tr.add_argument("--fc-activation", choices=("sigmoid", "relu"))
    tr.add_argument("--initial-q-reducer", choices=("max", "mean"))
    tr.add_argument("--expert-loss-on-copy", action="store_const", const=True, default=None)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a model over the 236 openings")
    ev.add_argument("model", help="XQNN model file (the Q network)")
    ev.add_argument("--opponent", default="random")
    ev.add_argument("--rounds", type=int, default=1)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out-dir", help="write eval.json and append eval.csv here")
    ev.set_defaults(func=cmd_eval)

    to = sub.add_parser("tournament", help="round-robin between trained models")
    to.add_argument("models", nargs="+", help="two or more XQNN model files")
    to.add_argument("--rounds", type=int, default=10)
    to.add_argument("--seed", type=int, default=0)
    to.add_argument("--out", help="matrix CSV path")
    to.set_defaults(func=cmd_tournament)

    sh = sub.add_parser("show", help="pretty-print a model, example or board file")
    sh.add_argument("path")
    sh.set_defaults(func=cmd_show)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

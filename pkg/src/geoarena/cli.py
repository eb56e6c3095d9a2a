"""Operator command line: serve the arena, compute leaderboards offline,
analyze logs, generate synthetic battles, and run judge studies.

Reports go to stdout, diagnostics to stderr. Exit codes: 0 success,
1 usage/config error, 2 data error, 3 provider error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import analysis, judge as judge_mod, rating, simulator
from .config import ArenaConfig, ConfigError, load_config
from .core import BattleLog, ImageStore, ModelId, Outcome
from .providers import MockProvider, HttpProvider, ProviderPool
from .rating import BTConfig, FitError
from .style import FEATURE_NAMES, extract_features, feature_difference

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_log(path: str) -> list:
    log_path = Path(path)
    if not log_path.exists():
        raise CliError(f"battle log not found: {path}", EXIT_USAGE)
    battles = BattleLog(log_path).read()
    if not battles:
        raise CliError("insufficient data: battle log is empty", EXIT_DATA)
    return battles


def _bt_config(args, base: BTConfig | None = None) -> BTConfig:
    base = base or BTConfig()
    anchor = base.anchor_model
    if getattr(args, "anchor", None) is not None:
        anchor = ModelId.parse(args.anchor) if args.anchor else None
    return BTConfig(
        alpha=base.alpha,
        scale=base.scale,
        init_rating=base.init_rating,
        anchor_model=anchor,
        tie_weight=base.tie_weight,
        max_iterations=base.max_iterations,
        tolerance=base.tolerance,
        l2_penalty=base.l2_penalty,
    )


def _build_pool(config: ArenaConfig, mock: bool) -> ProviderPool:
    if mock or config.providers.mock:
        return ProviderPool.mock(config.registry)
    clients = {
        name: HttpProvider(name, endpoint)
        for name, endpoint in config.providers.endpoints.items()
    }
    if not clients:
        raise CliError(
            "no provider endpoints configured; pass --mock for offline use",
            EXIT_USAGE,
        )
    return ProviderPool(
        config.registry, clients=clients, max_concurrency=config.providers.max_concurrency
    )


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ArenaService, create_app

    config = load_config(args.config)
    log_dir = config.storage.battle_log.parent
    if not log_dir.exists():
        if args.create_dirs:
            log_dir.mkdir(parents=True, exist_ok=True)
        else:
            raise CliError(
                f"log directory does not exist: {log_dir} (use --create-dirs)", EXIT_USAGE
            )
    if args.create_dirs:
        config.storage.image_dir.mkdir(parents=True, exist_ok=True)
    pool = _build_pool(config, args.mock)
    service = ArenaService(
        config,
        pool,
        BattleLog(config.storage.battle_log),
        ImageStore(config.storage.image_dir),
    )
    service.start_sweeper()
    app = create_app(service)
    logger.info("serving on %s:%d (mock=%s)", args.host, args.port, args.mock)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_leaderboard(args) -> int:
    battles = _read_log(args.log)
    config = _bt_config(args)
    try:
        ratings = rating.leaderboard(battles, config, rounds=args.rounds, seed=args.seed)
    except FitError as exc:
        raise CliError(f"insufficient data: {exc}", EXIT_DATA)
    beta = None
    if args.style_control:
        features = np.array(
            [
                feature_difference(
                    extract_features(r.response_a), extract_features(r.response_b)
                )
                for r in battles
            ]
        )
        beta = rating.bt_fit_style(battles, features, config).style_coefficients
    if args.format == "json":
        payload: dict = {"leaderboard": rating.leaderboard_to_dicts(ratings)}
        if beta is not None:
            payload["style_coefficients"] = rating.style_coefficients_to_dict(beta)
        print(json.dumps(payload, indent=2))
    else:
        print(rating.leaderboard_table(ratings))
        if beta is not None:
            print()
            print("Style coefficients (natural-log-odds per unit difference):")
            for name, value in rating.style_coefficients_to_dict(beta).items():
                print(f"  {name:<20} {value:+.4f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.composition:
        if not args.annotations:
            raise CliError("--composition requires --annotations FILE", EXIT_USAGE)
        annotations = []
        path = Path(args.annotations)
        if not path.exists():
            raise CliError(f"annotations file not found: {path}", EXIT_USAGE)
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                annotations.append(SimpleNamespace(**json.loads(line)))
        print(json.dumps(analysis.dataset_composition(annotations), indent=2))
        return EXIT_OK

    battles = _read_log(args.log)
    if args.features:
        for record in battles:
            feat_a = extract_features(record.response_a)
            feat_b = extract_features(record.response_b)
            print(
                json.dumps(
                    {
                        "battle_id": record.battle_id,
                        "difference": feature_difference(feat_a, feat_b).tolist(),
                        "features_a": feat_a.__dict__,
                        "features_b": feat_b.__dict__,
                    }
                )
            )
        return EXIT_OK

    matrix = analysis.pairwise_matrix(battles)
    if args.format == "csv":
        print(matrix.win_rate_csv())
        print(matrix.battle_count_csv())
    else:
        print(json.dumps(matrix.to_dict(), indent=2))
    return EXIT_OK


def _load_world(path: str, seed_override: int | None) -> simulator.SyntheticWorld:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"world spec not found: {path}", EXIT_USAGE)
    except json.JSONDecodeError as exc:
        raise CliError(f"world spec is not valid JSON: {exc}", EXIT_USAGE)
    try:
        models = tuple(
            simulator.SimModel(
                model=ModelId.parse(m["model"]),
                true_elo=float(m["true_elo"]),
                style=simulator.StyleProfile(**m.get("style", {})),
            )
            for m in raw["models"]
        )
        bias = raw.get("style_bias", [0.0] * 5)
        if len(bias) != 5:
            raise ValueError("style_bias must have 5 entries")
        return simulator.SyntheticWorld(
            models=models,
            voter_style_bias=tuple(float(b) for b in bias),
            tie_probability=float(raw.get("tie_probability", 0.0)),
            seed=int(seed_override if seed_override is not None else raw.get("seed", 0)),
            alpha=float(raw.get("alpha", 400.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad world spec field: {exc}", EXIT_USAGE)


def cmd_simulate(args) -> int:
    world = _load_world(args.world, args.seed)
    records = simulator.simulate(world, args.battles)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    summary = {
        "battles": len(records),
        "true_elo": {m.model.canonical: m.true_elo for m in world.models},
        "style_bias": list(world.voter_style_bias),
        "tie_probability": world.tie_probability,
        "seed": world.seed,
        "out": str(out),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_judge(args) -> int:
    battles = _read_log(args.log)
    if len(battles) < args.sample:
        raise CliError(
            f"insufficient sample: need {args.sample} battles, have {len(battles)}",
            EXIT_DATA,
        )
    judge_fn = None
    judge_model = None
    if args.mock_judge:
        mode = args.mock_judge
        label_for = {
            "win": judge_mod.JudgeLabel.WIN,
            "loss": judge_mod.JudgeLabel.LOSS,
            "tie": judge_mod.JudgeLabel.TIE,
        }

        def judge_fn(record):
            if mode == "echo":
                label = {
                    Outcome.WIN_A: judge_mod.JudgeLabel.WIN,
                    Outcome.WIN_B: judge_mod.JudgeLabel.LOSS,
                    Outcome.TIE: judge_mod.JudgeLabel.TIE,
                }[record.outcome]
            else:
                label = label_for[mode]
            return judge_mod.JudgeVerdict(record.battle_id, label, label.value)

    else:
        if not args.judge_model:
            raise CliError("--judge-model or --mock-judge is required", EXIT_USAGE)
        judge_model = ModelId.parse(args.judge_model)
    config = load_config(args.config) if args.config else ArenaConfig()
    pool = None
    if judge_fn is None:
        pool = _build_pool(config, mock=False)
    try:
        report = judge_mod.alignment_study(
            battles,
            judge_model=judge_model,
            pool=pool,
            sample_size=args.sample,
            seed=args.seed,
            judge_fn=judge_fn,
        )
    except judge_mod.JudgeError as exc:
        raise CliError(f"judge provider failed: {exc}", EXIT_PROVIDER)
    print(json.dumps(report.to_dict(), indent=2))
    if args.verdicts_out:
        with open(args.verdicts_out, "w", encoding="utf-8") as fh:
            for verdict in report.verdicts:
                fh.write(json.dumps(verdict.to_dict(judge_model)) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoarena",
        description="Pairwise-preference arena for image geolocalization models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the battle service")
    serve.add_argument("--config", default=None, help="JSON config file")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--mock", action="store_true", help="use the offline mock provider")
    serve.add_argument("--create-dirs", action="store_true", help="create missing storage dirs")
    serve.set_defaults(func=cmd_serve)

    lb = sub.add_parser("leaderboard", help="compute the leaderboard from a battle log")
    lb.add_argument("log", help="battle log (JSONL)")
    lb.add_argument("--anchor", default=None, help="anchor model id ('' for mean anchoring)")
    lb.add_argument("--rounds", type=int, default=100, help="bootstrap resamples")
    lb.add_argument("--seed", type=int, default=0)
    lb.add_argument("--style-control", action="store_true", help="also fit style coefficients")
    lb.add_argument("--format", choices=("table", "json"), default="table")
    lb.set_defaults(func=cmd_leaderboard)

    an = sub.add_parser("analyze", help="descriptive statistics over a battle log")
    an.add_argument("log", nargs="?", default=None, help="battle log (JSONL)")
    group = an.add_mutually_exclusive_group(required=True)
    group.add_argument("--pairwise", action="store_true", help="win-rate and count matrices")
    group.add_argument("--composition", action="store_true", help="image attribute breakdown")
    group.add_argument("--features", action="store_true", help="dump per-battle style vectors")
    an.add_argument("--annotations", default=None, help="annotations JSONL for --composition")
    an.add_argument("--format", choices=("json", "csv"), default="json")
    an.set_defaults(func=cmd_analyze)

    sim = sub.add_parser("simulate", help="emit a synthetic battle log with known truth")
    sim.add_argument("world", help="world spec JSON file")
    sim.add_argument("--battles", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    sim.add_argument("--out", required=True, help="output battle log path")
    sim.set_defaults(func=cmd_simulate)

    jd = sub.add_parser("judge", help="model-as-judge agreement study over a log")
    jd.add_argument("log", help="battle log (JSONL)")
    jd.add_argument("--judge-model", default=None, help="judge model id")
    jd.add_argument("--sample", type=int, default=100)
    jd.add_argument("--seed", type=int, default=0)
    jd.add_argument(
        "--mock-judge",
        choices=("echo", "win", "loss", "tie"),
        default=None,
        help="scripted judge for offline runs",
    )
    jd.add_argument("--config", default=None, help="JSON config file (for provider setup)")
    jd.add_argument("--verdicts-out", default=None, help="write verdicts JSONL here")
    jd.set_defaults(func=cmd_judge)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze" and not args.composition and args.log is None:
        parser.error("analyze requires a battle log path")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FitError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

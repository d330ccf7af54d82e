"""Command-line front end: ``select``, ``simulate`` and ``verify``.

Exit codes: 0 ok, 2 parse error, 3 numerical/domain error, 4 configuration
error, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from mdselect import game_core
from mdselect.game_core import GameOracle
from mdselect.linmodel import DataError, PayoffDomainError, PayoffSpec, read_csv
from mdselect.mc_valuation import OrderingSampleConfig
from mdselect.selector import sequential_select
from mdselect.simlab import METHODS, SimConfig, run_study

log = logging.getLogger("mdselect")

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3, 4, 5
VERIFY_TOL = 1e-10
PAYOFFS = ("r2", "ar2", "f", "bic", "rmse")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load_defaults(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in raw.items()}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mdselect", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p.subcommands = {}

    def common(sp):
        sp.add_argument("--payoff", default="ar2", help=f"one of {', '.join(PAYOFFS)}")
        sp.add_argument("--gamma", type=int, default=100)
        sp.add_argument("--alpha", type=float, default=0.05)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", help="output path")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--config", help="TOML file with default flag values (flags win)")

    s = sub.add_parser("select", help="select features from a CSV file")
    s.add_argument("--input", help="CSV with a header row")
    s.add_argument("--target", help="name of the dependent-variable column")
    s.add_argument("--split-fraction", type=float, default=0.8)
    common(s)

    m = sub.add_parser("simulate", help="run a simulation study")
    m.add_argument("--n", type=int, default=20)
    m.add_argument("--true-size", type=int, default=4)
    m.add_argument("--t-obs", type=int, default=100)
    m.add_argument("--trials", type=int, default=200)
    m.add_argument("--method", default="lambda", help=f"one of {', '.join(sorted(METHODS))}")
    m.add_argument("--coef-low", type=float, default=0.5)
    m.add_argument("--coef-high", type=float, default=3.0)
    m.add_argument("--noise-r2", type=float, default=0.7)
    m.add_argument("--p-enter", type=float, default=0.05)
    m.add_argument("--p-remove", type=float, default=0.10)
    common(m)

    v = sub.add_parser("verify", help="check the exact valuation identities on random games")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--games", type=int, default=20, help="random games per feature count")
    v.add_argument("--max-n", type=int, default=None,
                   help="largest n for the matching identity (default 10)")
    v.add_argument("--game-file", help="JSON list with the 2^n values of one game")
    v.add_argument("--out", help="write the residual table as JSON")
    v.add_argument("--threads", type=int, default=1)
    v.add_argument("--corrupt-prior", action="store_true", help=argparse.SUPPRESS)
    v.add_argument("--config", help="TOML file with default flag values (flags win)")
    p.subcommands.update(select=s, simulate=m, verify=v)
    return p


def _apply_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    pre = parser.parse_args(argv)
    defaults = _load_defaults(pre.config)
    if not defaults:
        return pre
    sub = parser.subcommands[pre.command]
    known = {a.dest for a in sub._actions}
    unknown = set(defaults) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _payoff_spec(args) -> PayoffSpec:
    kind = args.payoff.lower()
    if kind not in PAYOFFS:
        raise ConfigError(f"unknown payoff {args.payoff!r}; choose from {', '.join(PAYOFFS)}")
    frac = getattr(args, "split_fraction", 0.8)
    try:
        return PayoffSpec(kind, split_fraction=frac, split_seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _ordering_cfg(args) -> OrderingSampleConfig:
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return OrderingSampleConfig(args.gamma, args.seed, args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write(path: str | None, text: str) -> None:
    if path is None:
        return
    Path(path).write_text(text)


def cmd_select(args) -> int:
    if not args.input or not args.target:
        raise ConfigError("select requires --input and --target")
    spec = _payoff_spec(args)
    cfg = _ordering_cfg(args)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = read_csv(args.input, args.target)
    except KeyError:
        raise ConfigError(f"target column '{args.target}' not found in {args.input}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from exc
    report = sequential_select(data, spec, cfg, threads=args.threads)
    if args.format == "json":
        _write(args.out, report.to_json() + "\n")
    else:
        _write(args.out, _report_csv(report))
    names = report.feature_names
    print(f"accepted: {', '.join(report.accepted_names()) or '(none)'}")
    for r, rnd in enumerate(report.rounds):
        print(f"round {r}  critical {rnd.critical:.6f}")
        print(f"  {'feature':<16}{'lambda':>14}{'sigma':>14}{'z':>10}")
        for pos, i in enumerate(rnd.remaining):
            e = rnd.estimate
            mark = " *" if i in rnd.accepted_batch else ""
            print(f"  {names[i]:<16}{e.lambda_hat[pos]:>14.6g}{e.sigma_hat[pos]:>14.6g}"
                  f"{e.z[pos]:>10.3f}{mark}")
    return EXIT_OK


def _report_csv(report) -> str:
    lines = ["round,feature,name,lambda,sigma,z,accepted"]
    for r, rnd in enumerate(report.rounds):
        e = rnd.estimate
        for pos, i in enumerate(rnd.remaining):
            lines.append(f"{r},{i},{report.feature_names[i]},{float(e.lambda_hat[pos])!r},"
                         f"{float(e.sigma_hat[pos])!r},{float(e.z[pos])!r},{int(i in rnd.accepted_batch)}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    spec = _payoff_spec(args)
    _ordering_cfg(args)
    if args.method not in METHODS:
        raise ConfigError(f"unknown method {args.method!r}; choose from {', '.join(sorted(METHODS))}")
    try:
        cfg = SimConfig(
            n=args.n, true_size=args.true_size, t_obs=args.t_obs, trials=args.trials,
            seed=args.seed, method=args.method, payoff=spec, gamma=args.gamma, alpha=args.alpha,
            coef_low=args.coef_low, coef_high=args.coef_high, noise_r2_target=args.noise_r2,
            p_enter=args.p_enter, p_remove=args.p_remove,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = run_study(cfg, threads=args.threads)
    if args.out:
        out = Path(args.out)
        if args.format == "json":
            out.write_text(result.to_json() + "\n")
            out.with_suffix(".csv").write_text(result.to_csv())
        else:
            out.write_text(result.to_csv())
    t = result.tally
    print(f"method={cfg.method} payoff={spec.kind.value} |S|={cfg.true_size} trials={cfg.trials}")
    print(f"exact={t.exact} under1={t.under1} under2plus={t.under2plus} "
          f"over1={t.over1} over2plus={t.over2plus} failures={t.failures}")
    return EXIT_OK


FIXTURE_GAME = (0.0, 3.0, 1.0, 4.0)


def _random_games(seed: int, n: int, count: int):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
    for _ in range(count):
        yield GameOracle.from_table(rng.uniform(0.0, 1.0, 1 << n))


def cmd_verify(args) -> int:
    if args.games < 1:
        raise ConfigError("--games must be positive")
    max_n = 10 if args.max_n is None else args.max_n
    if max_n > game_core.MAX_EXACT_N or max_n < 2:
        raise ConfigError(f"--max-n must be in 2..{game_core.MAX_EXACT_N}")

    def masses(n):
        w = game_core.lambda_weights(n)
        if args.corrupt_prior:
            w = w.copy()
            w[0] *= 1.1
        return w

    rows = []

    def check(name, n, values):
        worst = max(values)
        rows.append({"identity": name, "n": n, "games": len(values), "max_residual": worst})
        print(f"{name:<22} n={n:<3} games={len(values):<4} max|residual|={worst:.3e}")

    if args.game_file:
        try:
            table = json.loads(Path(args.game_file).read_text())
            games = [GameOracle.from_table(table)]
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load game from {args.game_file}: {exc}") from exc
        n = games[0].n
        check("matching", n, [abs(game_core.verify_matching(games[0], masses=masses(n)))])
        if n <= game_core.MAX_CARRIER_N:
            check("expected_shapley", n, [game_core.verify_expected_shapley(games[0])])
        if n <= game_core.MAX_ORDERING_N:
            check("ordering", n, [game_core.verify_ordering_representation(games[0])])
    else:
        for n in range(2, max_n + 1):
            check("matching", n, [abs(game_core.verify_matching(g, masses=masses(n)))
                                  for g in _random_games(args.seed, n, args.games)])
        for n in range(2, min(max_n, 8) + 1):
            check("expected_shapley", n, [game_core.verify_expected_shapley(g)
                                          for g in _random_games(args.seed, n, args.games)])
        for n in range(2, min(max_n, 7) + 1):
            check("ordering", n, [game_core.verify_ordering_representation(g)
                                  for g in _random_games(args.seed, n, args.games)])

    fixture = GameOracle.from_table(FIXTURE_GAME)
    lams = [game_core.exact_lambda(fixture, i, masses=masses(2)) for i in range(2)]
    print(f"fixture game v = {list(FIXTURE_GAME)}: lambda = ({lams[0]:.6g}, {lams[1]:.6g})")
    ok = all(r["max_residual"] < VERIFY_TOL for r in rows)
    if args.out:
        _write(args.out, json.dumps({"tolerance": VERIFY_TOL, "passed": ok, "rows": rows,
                                     "fixture_lambda": lams}, indent=2) + "\n")
    print("all identities hold" if ok else f"FAILED: residual above {VERIFY_TOL:g}")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"select": cmd_select, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_defaults(parser, argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("parse error: %s", exc)
        return EXIT_PARSE
    except (PayoffDomainError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        log.error("numerical error: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

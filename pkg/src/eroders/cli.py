"""Command-line front end.

Exit codes: 0 success, 1 usage error (bad flags or rule reference),
2 computation error, 3 when a decision comes back unknown.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from .deciders import UNKNOWN, DecideParams, decision_lines
from .forcing import DEFAULT_BUDGET, DEFAULT_K_MAX, minimal_forcing_sets, tau_of
from .noise import (
    PERIODIC, NoiseModel, SimConfig, dump_trajectories, ergodicity_probe, island_survival, load_trajectories,
    simulate,
)
from .polygon import PolygonError, build_level_data, construct_system, dump_system, overlay_points, verify_system
from .rates import RateParams, format_fraction, rate_lines, rate_table
from .render import render
from .rule import Configuration, LocalRule, RuleError, is_monotone, quiescent_states, resolve_rule

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_UNKNOWN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- flag grammars -------------------------------------------------------------------------------

def _int_at_least(low: int):
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if value < low:
            raise argparse.ArgumentTypeError(f"must be at least {low}, got {value}")
        return value
    return parse


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return value


def _int_list(text: str, sep: str = ",") -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(sep))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers separated by {sep!r}, got {text!r}") from None


def _pair(text: str) -> tuple[int, int]:
    values = _int_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected a,b, got {text!r}")
    return values


def _chain(text: str) -> tuple[int, ...]:
    return _int_list(text.replace("<", ","))


def _boundary(text: str):
    if text == PERIODIC:
        return PERIODIC
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'periodic' or a state, got {text!r}") from None


def _noise(text: str) -> tuple[str, object]:
    kind, _, arg = text.partition(":")
    if kind in ("max", "set"):
        if not arg:
            return kind, None
        try:
            return kind, int(arg)
        except ValueError:
            pass
    elif kind == "custom" and arg:
        try:
            return kind, tuple(float(p) for p in arg.split(","))
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"expected max[:a], set[:a] or custom:p0,p1,..., got {text!r}")


def _init(text: str) -> tuple[str, object]:
    kind, _, arg = text.partition(":")
    if kind == "zero" and not arg:
        return "const", 0
    if kind == "const" and arg.isdigit():
        return "const", int(arg)
    if kind == "island":
        state, x, length = arg.partition("x")
        if x and state.isdigit() and length.isdigit() and int(length) > 0:
            return "island", (int(state), int(length))
    if kind == "cells" and arg.isdigit():
        return "cells", tuple(int(c) for c in arg)
    raise argparse.ArgumentTypeError(f"expected zero, const:<s>, island:<s>x<n> or cells:<digits>, got {text!r}")


def make_model(choice: tuple[str, object], eps: float, rule: LocalRule) -> NoiseModel:
    kind, arg = choice
    if kind == "custom":
        return NoiseModel.custom(arg, eps)
    a = rule.m if arg is None else arg
    model = NoiseModel.independent_max(a, eps) if kind == "max" else NoiseModel.independent_set(a, eps)
    model.check(rule)
    return model


def initial_configuration(pattern_flag: tuple[str, object], width: int, boundary) -> Configuration:
    """Window [-(width//2), width - width//2 - 1]; patterns are centred on coordinate 0."""
    lo = -(width // 2)
    kind, arg = pattern_flag
    if kind == "const":
        return Configuration.constant(arg, lo, lo + width - 1)
    pattern = [arg[0]] * arg[1] if kind == "island" else list(arg)
    if len(pattern) > width:
        raise RuleError(f"initial pattern of {len(pattern)} cells does not fit width {width}")
    background = 0 if boundary == PERIODIC else boundary
    cells = [background] * width
    start = -(len(pattern) // 2) - lo
    cells[start:start + len(pattern)] = pattern
    return Configuration.from_cells(cells, lo, background)


# --- parser --------------------------------------------------------------------------------------

def _rule_flag(p):
    p.add_argument("--rule", required=True, metavar="REF",
                   help="builtin:<name>[:<param>] or a rule-file path")


def _rate_flags(p):
    p.add_argument("--T", type=_int_at_least(2), default=RateParams.T_max, dest="T",
                   help="step-evolution horizon for rate certification (default %(default)s)")
    p.add_argument("--denominator-bound", type=_int_at_least(1), default=RateParams.denominator_bound,
                   help="largest rate denominator tried (default %(default)s)")


def _workers_flag(p):
    p.add_argument("--workers", type=_int_at_least(1), default=1, help="worker threads (default 1)")


def _sim_flags(p, *, width, T, eps, trials, boundary=PERIODIC, noise="max"):
    p.add_argument("--width", type=_int_at_least(1), default=width, help="window width (default %(default)s)")
    p.add_argument("--T", type=_int_at_least(1), default=T, dest="T", help="time steps (default %(default)s)")
    p.add_argument("--eps", type=_probability, default=eps, help="error rate (default %(default)s)")
    p.add_argument("--seed", type=_int_at_least(0), default=0, help="generator seed (default 0)")
    p.add_argument("--trials", type=_int_at_least(1), default=trials, help="trials (default %(default)s)")
    p.add_argument("--noise", type=_noise, default=_noise(noise), metavar="MODEL",
                   help=f"max[:a], set[:a] or custom:p0,p1,...; a defaults to the top state (default {noise})")
    p.add_argument("--boundary", type=_boundary, default=boundary,
                   help="'periodic' or a fixed quiescent state (default %(default)s)")


def _out_flag(p):
    p.add_argument("--out", metavar="PATH", help="write the report here instead of standard output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eroders", description="Rates, forcing sets, decisions and noisy simulation "
                                                 "for monotone one-dimensional cellular automata.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("check", help="validate a rule: size, monotonicity, quiescent states")
    _rule_flag(p)
    _out_flag(p)

    p = sub.add_parser("rates", help="rate table for every ordered pair of quiescent states")
    _rule_flag(p)
    _rate_flags(p)
    _workers_flag(p)
    _out_flag(p)

    p = sub.add_parser("forcing", help="minimal forcing sets and hull intersections per level")
    _rule_flag(p)
    p.add_argument("--pair", type=_pair, required=True, metavar="a,b", help="quiescent states a < b")
    p.add_argument("--k-max", type=_int_at_least(1), default=4, help="highest level (default %(default)s)")
    p.add_argument("--budget", type=_int_at_least(1), default=DEFAULT_BUDGET,
                   help="configurations examined per level (default %(default)s)")
    _out_flag(p)

    p = sub.add_parser("decide", help="eroder and stable-eroder decisions (exit 3 on unknown)")
    _rule_flag(p)
    _rate_flags(p)
    p.add_argument("--k-max", type=_int_at_least(1), default=DEFAULT_K_MAX,
                   help="highest forcing level searched (default %(default)s)")
    _workers_flag(p)
    _out_flag(p)

    p = sub.add_parser("simulate", help="noisy trajectories as a trajectory dump")
    _rule_flag(p)
    _sim_flags(p, width=64, T=32, eps=0.05, trials=1)
    p.add_argument("--init", type=_init, default=_init("zero"), metavar="PATTERN",
                   help="zero, const:<s>, island:<s>x<n> or cells:<digits> (default zero)")
    _workers_flag(p)
    _out_flag(p)

    p = sub.add_parser("survival", help="island survival per half-width N")
    _rule_flag(p)
    p.add_argument("--T", type=_int_at_least(1), default=500, dest="T", help="time steps (default %(default)s)")
    p.add_argument("--eps", type=_probability, default=0.05, help="error rate (default %(default)s)")
    p.add_argument("--seed", type=_int_at_least(0), default=0, help="generator seed (default 0)")
    p.add_argument("--trials", type=_int_at_least(1), default=200, help="trials per N (default %(default)s)")
    p.add_argument("--noise", type=_noise, default=_noise("max"), metavar="MODEL",
                   help="max[:a], set[:a] or custom:p0,p1,... (default max)")
    p.add_argument("--omega", type=_int_at_least(1), help="island state (default: the top state)")
    p.add_argument("--N", type=_int_list, default=(4, 16, 64), dest="N", metavar="N1,N2,...",
                   help="island half-widths (default 4,16,64)")
    _workers_flag(p)
    _out_flag(p)

    p = sub.add_parser("probe", help="distance between origin marginals from the bottom and top starts")
    _rule_flag(p)
    _sim_flags(p, width=64, T=200, eps=0.05, trials=500)
    _workers_flag(p)
    _out_flag(p)

    p = sub.add_parser("polygon", help="construct and verify space-time polygon systems")
    _rule_flag(p)
    _sim_flags(p, width=160, T=40, eps=0.1, trials=100, boundary="0")
    p.add_argument("--count", type=_int_at_least(1), default=1, help="systems to build (default 1)")
    p.add_argument("--chain", type=_chain, help="stability chain such as 0<1<2 (default: decided)")
    p.add_argument("--k-max", type=_int_at_least(1), default=DEFAULT_K_MAX,
                   help="highest certificate level (default %(default)s)")
    p.add_argument("--target", type=_pair, metavar="i,t", help="root cell (default: centre of the last row)")
    p.add_argument("--traj", metavar="PATH", help="read trajectories from a dump instead of simulating")
    _workers_flag(p)
    _out_flag(p)

    p = sub.add_parser("render", help="space-time diagram as a plain PGM image")
    _rule_flag(p)
    _sim_flags(p, width=64, T=32, eps=0.0, trials=1)
    p.add_argument("--steps", type=_int_at_least(1), dest="T", default=argparse.SUPPRESS, help="alias of --T")
    p.add_argument("--init", type=_init, default=_init("zero"), metavar="PATTERN",
                   help="zero, const:<s>, island:<s>x<n> or cells:<digits> (default zero)")
    p.add_argument("--trial", type=_int_at_least(0), default=0, help="which trial to draw (default 0)")
    p.add_argument("--traj", metavar="PATH", help="draw a trajectory from a dump instead of simulating")
    p.add_argument("--overlay", action="store_true", help="mark polygon border vertices with 255")
    p.add_argument("--chain", type=_chain, help="stability chain for --overlay (default: decided)")
    _out_flag(p)
    return parser


# --- commands ------------------------------------------------------------------------------------

def _rate_params(args) -> RateParams:
    return RateParams(T_max=args.T, denominator_bound=args.denominator_bound)


def cmd_check(rule, args):
    verdict = is_monotone(rule)
    lines = [f"name\t{rule.name or '-'}", f"states\t{rule.state_count}", f"radius\t{rule.radius}"]
    if verdict:
        lines.append("monotone\tyes")
    else:
        lower, upper = ("".join(map(str, w)) for w in (verdict.lower, verdict.upper))
        lines.append(f"monotone\tno\t{lower}\t{upper}")
    lines.append("quiescent\t" + ",".join(map(str, quiescent_states(rule))))
    return lines, EXIT_OK


def cmd_rates(rule, args):
    return rate_lines(rate_table(rule, _rate_params(args), args.workers)), EXIT_OK


def cmd_forcing(rule, args):
    a, b = args.pair
    lines = []
    for k in range(1, args.k_max + 1):
        fam = minimal_forcing_sets(rule, a, b, k, args.budget)
        lines.extend(fam.lines())
        lines.append(f"tau\t{a}\t{b}\t{k}\t{tau_of(fam).render()}\t{'complete' if fam.complete else 'partial'}")
    return lines, EXIT_OK


def cmd_decide(rule, args):
    params = DecideParams(rates=_rate_params(args), k_max=args.k_max)
    table = rate_table(rule, params.rates, args.workers)
    lines = decision_lines(rule, params, table)
    unknown = any(line.split("\t")[1] == UNKNOWN for line in lines if line.startswith(("eroder", "stable")))
    return lines, EXIT_UNKNOWN if unknown else EXIT_OK


def _sim(args) -> SimConfig:
    return SimConfig(args.width, args.T, args.seed, args.trials, args.boundary)


def _trajectories(rule, args, init):
    sim = _sim(args)
    model = make_model(args.noise, args.eps, rule)
    return simulate(rule, model, sim, initial_configuration(init, args.width, args.boundary), args.workers)


def cmd_simulate(rule, args):
    return dump_trajectories(_trajectories(rule, args, args.init)), EXIT_OK


def cmd_survival(rule, args):
    omega = rule.m if args.omega is None else args.omega
    if any(n < 1 for n in args.N):
        raise RuleError("island half-widths must be positive")
    model = make_model(args.noise, args.eps, rule)
    sim = SimConfig(2 * rule.radius + 1, args.T, args.seed, args.trials)
    results = island_survival(rule, omega, args.N, model, sim, workers=args.workers)
    lines = [f"drift\t{format_fraction(Fraction(results[0].drift))}"]
    lines.extend(f"survival\t{r.row()}\t{r.held.estimate:.6f}" for r in results)
    return lines, EXIT_OK


def cmd_probe(rule, args):
    model = make_model(args.noise, args.eps, rule)
    return ergodicity_probe(rule, model, _sim(args), args.workers).rows(), EXIT_OK


def _load(path: str):
    with open(path, encoding="utf-8") as fh:
        return load_trajectories(fh.read())


def cmd_polygon(rule, args):
    ld = build_level_data(rule, args.chain, args.k_max)
    if args.traj:
        trajs = _load(args.traj)
    else:
        trajs = _trajectories(rule, args, ("const", 0 if args.boundary == PERIODIC else args.boundary))
    lines = ld.lines()
    built = failed = 0
    for traj in trajs:
        target = args.target or (traj.lo + traj.width // 2, traj.T)
        if not (traj.lo <= target[0] < traj.lo + traj.width and 0 <= target[1] <= traj.T):
            raise PolygonError(f"target {target} lies outside the trajectory window")
        if traj.state(*target) == 0:
            continue
        system = construct_system(rule, ld, traj, args.target)
        report = verify_system(system, traj, ld)
        stats = system.stats()
        lines.append(f"system\t{traj.trial}\t" + "\t".join(f"{k}={v}" for k, v in stats.items()))
        lines.extend(dump_system(system).rstrip("\n").split("\n"))
        lines.extend(report.lines())
        built += 1
        failed += not report.ok
        if built >= args.count:
            break
    lines.append(f"systems\t{built}\tfailed\t{failed}")
    if failed:
        print(f"error: {failed} polygon system(s) failed verification", file=sys.stderr)
        return lines, EXIT_COMPUTE
    return lines, EXIT_OK


def cmd_render(rule, args):
    if args.traj:
        trajs = _load(args.traj)
        if args.trial >= len(trajs):
            raise RuleError(f"dump holds {len(trajs)} trajectories, trial {args.trial} requested")
        traj = trajs[args.trial]
    else:
        args.trials = args.trial + 1
        args.workers = 1
        traj = _trajectories(rule, args, args.init)[args.trial]
    marks = ()
    if args.overlay:
        ld = build_level_data(rule, args.chain)
        marks = overlay_points(construct_system(rule, ld, traj))
    return render(traj, rule.m, marks), EXIT_OK


COMMANDS = {
    "check": cmd_check, "rates": cmd_rates, "forcing": cmd_forcing, "decide": cmd_decide,
    "simulate": cmd_simulate, "survival": cmd_survival, "probe": cmd_probe, "polygon": cmd_polygon,
    "render": cmd_render,
}


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        rule = resolve_rule(args.rule)
    except (RuleError, OSError) as exc:
        print(f"eroders: --rule: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out, code = COMMANDS[args.command](rule, args)
    except (RuleError, OSError) as exc:
        print(f"eroders {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    text = out if isinstance(out, str) else "".join(line + "\n" for line in out)
    _emit(text, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())

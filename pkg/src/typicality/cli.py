"""Command-line front end.

Exit status: 0 success, 1 usage error, 2 numeric or validation failure.
Options may also come from ``--config FILE`` (``key = value`` lines using the
long option names); options given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback

from . import __version__
from .errors import NumericError, TypicalityError, UsageError
from .runner import RunConfig, dump_json, read_config_file, run

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("typicality")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pair(text: str) -> tuple[float, float]:
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LO,HI")
    return float(parts[0]), float(parts[1])


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _add_system(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--spins", dest="n_spins", type=int, help="number of spins n (N = 2**n)")
    src.add_argument("--spectrum-file", help="one eigenvalue per line")
    p.add_argument("--frequencies", type=_floats, help="spin frequencies, comma separated")


def _add_output(p):
    p.add_argument("--out-dir", default=".", help="directory for CSV/JSON output")
    p.add_argument("--seed", type=int, default=0)


def _add_sampling(p):
    p.add_argument("--samples", type=int, default=100_000, help="samples kept")
    p.add_argument("--chains", type=int, default=1, help="independent streams run concurrently")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--range", type=_pair, help="entropy histogram range LO,HI")
    p.add_argument("--pop-range", type=_pair, help="population histogram range LO,HI")
    p.add_argument("--populations", type=_ints,
                   help="1-based population indices to histogram (default 1,2,N)")
    p.add_argument("--save-samples", action="store_true",
                   help="also write samples.csv (entropy and selected populations)")
    p.add_argument("--backend", choices=None, help="kernel backend: cython or python")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="typicality", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--config", help="key = value file; flags win")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("spectrum", help="write the energy levels and spectrum constants")
    _add_system(p)
    _add_output(p)

    p = sub.add_parser("sample-rpse", help="sample random pure states")
    _add_system(p)
    _add_sampling(p)
    _add_output(p)

    p = sub.add_parser("sample-feee", help="sample fixed-energy states by Metropolis-Hastings")
    _add_system(p)
    p.add_argument("--eps", type=_floats, help="energy per spin")
    p.add_argument("--burn-in", type=int, help="burn-in steps per chain (default grows with N)")
    p.add_argument("--thinning", type=int, default=10)
    p.add_argument("--proposal-scale", type=float, default=0.5,
                   help="initial proposal scale (adapted during burn-in)")
    _add_sampling(p)
    _add_output(p)

    p = sub.add_parser("approx", help="maximum-entropy predictions over an energy sweep")
    _add_system(p)
    p.add_argument("--eps", type=_floats, help="energies per spin, comma separated")
    _add_output(p)

    p = sub.add_parser("validate", help="run the oracle suite")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--backend")
    _add_output(p)
    return parser


def parse(argv) -> RunConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a command is required: " + ", ".join(
            ("spectrum", "sample-rpse", "sample-feee", "approx", "validate")))
    if args.config:
        # re-parse with file values as defaults so explicit flags still win
        file_values = read_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        converted = {}
        for action in sub._actions:
            if action.dest in file_values:
                raw = file_values.pop(action.dest)
                if action.type is not None:
                    converted[action.dest] = action.type(raw)
                elif action.const is True:
                    converted[action.dest] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    converted[action.dest] = raw
        if file_values:
            raise UsageError(f"config keys not valid for {args.command}: {', '.join(sorted(file_values))}")
        sub.set_defaults(**converted)
        args = parser.parse_args(argv)
    values = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    return RunConfig(**values)


def _where(exc: BaseException) -> str:
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        if "/typicality/" in frame.filename.replace("\\", "/"):
            name = frame.filename.replace("\\", "/").rsplit("/", 1)[-1].removesuffix(".py")
            return f"typicality.{name}"
    return "typicality"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse(argv)
        summary = run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, TypicalityError) as exc:
        print(f"numeric error in {_where(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.command == "validate":
        from .validation import Check

        for c in summary["checks"]:
            print(Check(**c).line())
        print("all checks passed" if summary["passed"] else "some checks FAILED")
        return EXIT_OK if summary["passed"] else EXIT_NUMERIC
    sys.stdout.write(dump_json(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: ``scalarflow run|verify|audit``.

Exit codes
    0  run converged / all checks passed
    1  configuration error or inadmissible upper barrier
    2  run timed out
    3  run broke down (step halving exhausted)
    4  prescribed function not positive on the audit region
    5  monitored invariant violated, or a verify suite failed
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import RunConfig
from .errors import ConfigError, InvalidUpperBarrier, InvariantViolation, PositivityViolation
from .flow import run
from .prescribe import growth_audit
from .surface import write_snapshot_bin, write_snapshot_csv
from .verify import SUITES, run_suites, write_report

EXIT_OK, EXIT_CONFIG, EXIT_TIMEOUT, EXIT_BREAKDOWN, EXIT_POSITIVITY, EXIT_INVARIANT = range(6)
VERDICT_EXIT = {"converged": EXIT_OK, "timeout": EXIT_TIMEOUT, "breakdown": EXIT_BREAKDOWN}


def _err(msg: str) -> None:
    print(f"scalarflow: {msg}", file=sys.stderr)


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    if getattr(args, "out_dir", None) is not None:
        p = Path(args.out_dir)
    elif cfg is not None:
        p = cfg.out_dir
    else:
        p = Path("out")
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_run(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
        metric, f, flow_cfg = cfg.metric(), cfg.f(), cfg.flow_config()
        out = _out_dir(args, cfg)
        audit = growth_audit(f, metric, cfg.audit_spec(), cfg.cutoff())
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except PositivityViolation as exc:
        _err(str(exc))
        return EXIT_POSITIVITY
    (out / "config.yaml").write_text(cfg.dump())
    audit.write_csv(out / "audit.csv")

    try:
        state, trace, report = run(flow_cfg, metric, f)
    except InvalidUpperBarrier as exc:
        _err(f"inadmissible upper barrier: {exc}")
        return EXIT_CONFIG
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except InvariantViolation as exc:
        exc.trace.write_csv(out / "trace.csv")
        (out / "report.txt").write_text(f"verdict = invariant_violation\nmonitor = {exc.monitor}\n"
                                        f"message = {exc}\n")
        write_snapshot_bin(out / "final.snap", exc.state.u)
        _err(f"invariant violated: {exc}")
        return EXIT_INVARIANT

    for row in audit.rows:
        report.extra[f"audit_{row.constant}"] = repr(row.estimate)
    trace.write_csv(out / "trace.csv")
    write_snapshot_bin(out / "final.snap", state.u)
    write_snapshot_csv(out / "final.csv", state.u, state.geometry)
    (out / "report.txt").write_text(report.to_text())
    print(f"verdict={report.verdict} steps={report.steps} t={report.t_final:.6g} "
          f"sup_res={report.sup_res:.3g} output={out}")
    if report.message:
        _err(report.message)
    return VERDICT_EXIT[report.verdict]


def cmd_verify(args) -> int:
    rows = run_suites(args.suite, seed=args.seed, samples=args.samples)
    out = _out_dir(args)
    write_report(rows, out / f"verify_{args.suite}.csv")
    failed = [r for r in rows if not r.passed]
    for r in rows:
        flag = "ok  " if r.passed else "FAIL"
        print(f"{flag} {r.suite:10s} {r.item:40s} n={r.samples:<6d} worst={r.worst_margin:.3g}")
    if failed:
        _err(f"{len(failed)} verify item(s) failed")
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_audit(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
        out = _out_dir(args, cfg)
        rep = growth_audit(cfg.f(), cfg.metric(), cfg.audit_spec(), cfg.cutoff())
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except PositivityViolation as exc:
        _err(str(exc))
        return EXIT_POSITIVITY
    rep.write_csv(out / "audit.csv")
    for row in rep.rows:
        print(f"{row.constant:20s} {row.estimate:.6g}")
    print(f"strong_bound_raw     {rep.strong_bound_raw}")
    if rep.strong_bound_cutoff is not None:
        print(f"strong_bound_cutoff  {rep.strong_bound_cutoff}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # the shared flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="cap on worker threads")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="output directory (overrides the config)")
    p = argparse.ArgumentParser(prog="scalarflow", description=__doc__.splitlines()[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="flow from the upper barrier", parents=[common])
    r.add_argument("config")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run property suites", parents=[common])
    v.add_argument("suite", choices=SUITES + ("all",))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int, default=None)
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("audit", help="growth audit of the configured f", parents=[common])
    a.add_argument("config")
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", None)
    limit = threadpool_limits(limits=threads) if threads else nullcontext()
    with limit:
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

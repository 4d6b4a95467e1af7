"""Command-line entry point: ``lorentzhom <subcommand> --config PATH``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from threadpoolctl import threadpool_limits

from .errors import LorentzHomError
from .pipeline import Study, emit_report, load_config

SUBCOMMANDS = ("cell", "modes", "correctors", "kernel", "macro", "fine", "converge", "check")


def _parser():
    p = argparse.ArgumentParser(prog="lorentzhom", description=__doc__)
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default=None, help="artifact directory (default ./out)")
    p.add_argument("--modes", type=int, default=None, help="number of constrained modes")
    p.add_argument("--eps", default=None, help="comma-separated list of eps values for fine runs")
    p.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    p.add_argument("--seed", type=int, default=0, help="seed of the random probe tests")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _parse_eps(text):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        from .errors import ConfigError
        raise ConfigError(f"--eps must be a comma-separated list of numbers, got {text!r}") from exc


def run(args) -> int:
    cfg = load_config(args.config, modes=args.modes, eps=_parse_eps(args.eps))
    out = args.out or cfg.output or "out"
    study = Study(cfg, out=out, seed=args.seed)
    cmd = args.subcommand
    summary = {"subcommand": cmd, "out": str(study.store.root)}
    if cmd == "cell":
        info = study.cell()
        summary.update(case=info["case"], interface_rank=info["interface_rank"])
    elif cmd == "modes":
        study.cell()
        ms = study.modes(recompute=True)
        summary.update(modes=ms.count, mu_min=float(ms.mu[0]), mu_max=float(ms.mu[-1]))
    elif cmd == "correctors":
        study.cell()
        co = study.coeffs(recompute=True)
        summary.update(Mstar=co.Mstar, mstar=co.mstar)
    elif cmd == "kernel":
        study.cell()
        study.coeffs()
        _, dev = study.kernel(recompute=True)
        summary.update(dual_route_deviation=dev)
    elif cmd == "macro":
        study.cell()
        prob, hist, _ = study.macro()
        summary.update(steps=int(round(hist.t[-1] / prob.dt)), dt=prob.dt)
    elif cmd == "fine":
        study.cell()
        runs = study.fine()
        summary.update(eps=sorted(runs))
    elif cmd == "converge":
        study.cell()
        rows, trend = study.converge()
        summary.update(trend)
    elif cmd == "check":
        rep = study.check()
        failed = [c["name"] for c in rep["checks"] if not c["pass"]]
        summary.update(passed=rep["passed"], failed=failed)
    emit_report(study.store)
    print(json.dumps(summary, default=float))
    if cmd == "check" and summary["failed"]:
        return 8
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None:
            with threadpool_limits(limits=args.threads):
                return run(args)
        return run(args)
    except LorentzHomError as exc:
        err = {"error": exc.kind, "code": exc.exit_code, "message": str(exc)}
        if hasattr(exc, "missing"):
            err["missing"] = exc.missing
        sys.stderr.write(json.dumps(err) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line client for the analysis service.

Thin wrapper: parses arguments and files, calls the same handlers the HTTP
API mounts, and serializes the typed responses.  No network access; exit
codes are 0 = success/pass, 1 = input error, 2 = checks fail,
3 = indeterminate.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from pydantic import ValidationError

from . import service


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _network(path) -> service.NetworkDocument:
    return service.NetworkDocument.model_validate(_load_json(path))


def _disturbance(path) -> service.DisturbanceDocument | None:
    if path is None:
        return None
    return service.DisturbanceDocument.model_validate(_load_json(path))


def _emit(text: str, output=None):
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _render_check_text(resp: service.CheckResponse) -> str:
    r = resp.report
    lines = [f"stability verdict: {r.verdict.upper()}"]
    c1 = r.condition1
    lines.append(f"  condition 1 (consistent dc droop gains): {'pass' if c1.passed else 'FAIL'}")
    for sg in c1.subgrids:
        gains = ", ".join(f"{n}={g}" for n, g in sg.gains.items()) or "no converters"
        lines.append(f"    dc subgrid {sg.subgrid}: {gains} -> {'pass' if sg.passed else 'FAIL'}")
    a1 = r.assumption1
    witness = f" (witness: {a1.witness})" if a1.witness else ""
    lines.append(f"  assumption 1 (damping somewhere): {'pass' if a1.passed else 'FAIL'}{witness}")
    for sg in r.ac_subgrids:
        lines.append(
            f"  ac subgrid {sg.subgrid} [{sg.def1.dominated}-dominated]: "
            f"{sg.verdict}" + (f" via {sg.certified_by}" if sg.certified_by else "")
        )
        lines.append(
            f"    D={{{','.join(sg.def1.D)}}} C={{{','.join(sg.def1.C)}}} F={{{','.join(sg.def1.F)}}}"
        )
        lines.append(f"    reduced edges: {', '.join(sg.reduced_edges) or '(none)'}")
        a = sg.algorithm1
        removed = ", ".join(f"{j}<-{l}" for l, j in a.removal_order) or "-"
        lines.append(f"    node removal: emptied={a.emptied} order=[{removed}] remaining={a.remaining}")
        lines.append(
            f"    cycle criterion: passed={sg.corollary1.passed} "
            f"(all case1={sg.corollary1.case1_all}, all case2={sg.corollary1.case2_all})"
        )
        lines.append(f"    numeric rank: {sg.rank_numeric.verdict}")
    lines.append(f"  energy certificate valid: {r.lasalle_certificate_valid}")
    lines.append(
        f"  eigenvalue oracle: {r.eigen.verdict}, max Re = {r.eigen.max_real_part:.6g} "
        f"on {len(r.eigen.eigenvalues)} reachable modes"
    )
    for note in r.notes:
        lines.append(f"  note: {note}")
    return "\n".join(lines)


def _cmd_check(args) -> int:
    resp = service.run_check(service.CheckRequest(
        network=_network(args.network), tol_rank=args.tol_rank, tol_eig=args.tol_eig,
    ))
    if args.format == "json":
        _emit(resp.model_dump_json(indent=1), args.output)
    else:
        _emit(_render_check_text(resp), args.output)
    return resp.exit_code


def _cmd_eig(args) -> int:
    resp = service.run_eig(service.EigRequest(network=_network(args.network)))
    if args.format == "json":
        _emit(resp.model_dump_json(indent=1), args.output)
    else:
        lines = [f"{'Re':>14} {'Im':>14}"]
        lines += [f"{re:14.6e} {im:14.6e}" for re, im in resp.eigenvalues]
        lines.append(f"max real part: {resp.max_real_part:.6e} ({resp.verdict})")
        _emit("\n".join(lines), args.output)
    return 0


def _cmd_steady_state(args) -> int:
    resp = service.run_steady_state(service.SteadyStateRequest(
        network=_network(args.network), disturbance=_disturbance(args.disturbance),
    ))
    if args.format == "csv":
        rows = [("quantity", "id", "value")]
        rows += [("omega_s", k, v) for k, v in resp.omega_s.items()]
        rows += [("v", k, v) for k, v in resp.v.items()]
        rows += [("P", k, v) for k, v in resp.P.items()]
        rows += [("p_dc", k, v) for k, v in resp.p_dc.items()]
        if args.output:
            with open(args.output, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerows(rows)
        else:
            csv.writer(sys.stdout).writerows(rows)
    elif args.format == "text":
        lines = [f"stability verdict: {resp.stability_verdict}"]
        lines += [f"omega_s[{k}] = {v:.9g}" for k, v in resp.omega_s.items()]
        lines += [f"v[{k}] = {v:.9g}" for k, v in resp.v.items()]
        lines += [f"P[{k}] = {v:.9g}" for k, v in resp.P.items()]
        _emit("\n".join(lines), args.output)
    else:
        _emit(resp.model_dump_json(indent=1), args.output)
    return 0


def _cmd_simulate(args) -> int:
    resp = service.run_simulate(service.SimulateRequest(
        network=_network(args.network),
        disturbance=_disturbance(args.disturbance),
        t_final=args.tfinal,
        dt=args.dt,
        include_samples=args.output is not None,
    ))
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(resp.columns)
            for t, row in zip(resp.times, resp.samples):
                w.writerow([t] + row)
    print(resp.summary.model_dump_json(indent=1))
    return 0


def _cmd_report(args) -> int:
    resp = service.run_report(service.ReportRequest(
        network=_network(args.network),
        disturbance=_disturbance(args.disturbance),
        t_final=args.tfinal,
        dt=args.dt,
    ))
    _emit(resp.model_dump_json(indent=1), args.output)
    return resp.exit_code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="acdcstab",
        description="Stability analysis of hybrid ac/dc grids under dual-port grid-forming control",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt=("text", "json")):
        sp.add_argument("network", help="network JSON file")
        sp.add_argument("--format", choices=fmt, default=fmt[0])
        sp.add_argument("--output", help="write result to this path instead of stdout")

    sp = sub.add_parser("check", help="run the stability certification checks")
    common(sp)
    sp.add_argument("--tol-rank", type=float, default=1e-8)
    sp.add_argument("--tol-eig", type=float, default=1e-9)
    sp.set_defaults(fn=_cmd_check)

    sp = sub.add_parser("eig", help="restricted spectrum of the assembled model")
    common(sp)
    sp.set_defaults(fn=_cmd_eig)

    sp = sub.add_parser("steady-state", help="synchronous steady state under constant loads")
    common(sp, fmt=("text", "json", "csv"))
    sp.add_argument("--disturbance", help="disturbance JSON file")
    sp.set_defaults(fn=_cmd_steady_state)

    sp = sub.add_parser("simulate", help="fixed-step simulation; CSV samples via --output")
    sp.add_argument("network", help="network JSON file")
    sp.add_argument("--disturbance", help="disturbance JSON file")
    sp.add_argument("--tfinal", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--output", help="write trajectory CSV to this path")
    sp.set_defaults(fn=_cmd_simulate)

    sp = sub.add_parser("report", help="all analyses in one JSON bundle")
    sp.add_argument("network", help="network JSON file")
    sp.add_argument("--disturbance", help="disturbance JSON file")
    sp.add_argument("--tfinal", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--output", help="write bundle to this path")
    sp.set_defaults(fn=_cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        return _fail(f"cannot open {exc.filename!r}")
    except json.JSONDecodeError as exc:
        return _fail(f"invalid JSON: {exc}")
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(x) for x in first.get("loc", ()))
        return _fail(f"invalid field {loc!r}: {first.get('msg')}")
    except service.InputError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())

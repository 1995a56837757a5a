"""Report emission as CSV tables, a JSON document and a plain-text summary.

Floats are written with ``repr`` so CSV and JSON keep full precision.
Timings go to their own file so the report body is a pure function of the
config.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

from .experiment import ExperimentReport

PROBABILITY_HEADER = ("T", "p_hat", "p_se", "p_bound", "q_hat", "q_se", "q_bound", "pass")
CERTIFICATE_HEADER = ("T", "gamma3", "gamma4", "C", "n", "min_X", "floor", "tolerance",
                      "failure_prob", "failure_se", "bound", "pass_a", "pass_b")
CASCADE_HEADER = ("T", "status", "alpha", "eps1", "eps2", "eps1_tilde", "eps2_tilde",
                  "gamma3", "gamma4", "C", "T_tilde")
LDP_HEADER = ("T", "n", "p_hat", "log_prob", "upper_bound", "flagged")
HEDGING_HEADER = ("T", "tau", "cost", "s_cutoff", "w_cutoff", "rms_error", "max_shortfall",
                  "tolerance", "min_value", "admissible")


def _plain(obj):
    """Recursively convert dataclasses, tuples and numpy scalars to JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name != "timings"}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def report_to_dict(report: ExperimentReport, include_timings: bool = False) -> dict:
    body = _plain(report)
    body["passed"] = report.passed
    cert = report.arbitrage_certificate
    if cert is not None:
        body["arbitrage_certificate"]["passed"] = cert.passed
        body["arbitrage_certificate"]["failure_nonincreasing"] = cert.failure_nonincreasing
    if include_timings:
        body["timings"] = dict(report.timings)
    return body


def report_to_json(report: ExperimentReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, allow_nan=True) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def probability_csv(report: ExperimentReport) -> str:
    return _csv(PROBABILITY_HEADER, [
        (r.T, r.p_hat, r.p_se, r.p_bound, r.q_hat, r.q_se, r.q_bound, r.passed)
        for r in report.probability_table])


def certificate_csv(report: ExperimentReport) -> str:
    rows = report.arbitrage_certificate.rows if report.arbitrage_certificate else ()
    return _csv(CERTIFICATE_HEADER, [
        (r.T, r.gamma3, r.gamma4, r.C, r.n, r.min_X, r.floor, r.tolerance,
         r.failure_prob, r.failure_se, r.bound, r.pass_a, r.pass_b) for r in rows])


def cascade_csv(report: ExperimentReport) -> str:
    rows = []
    for c in report.cascade_params:
        p = c.params
        values = (p.alpha, p.eps1, p.eps2, p.eps1_tilde, p.eps2_tilde, p.gamma3, p.gamma4, p.C, p.T_tilde) \
            if p else (None,) * 9
        rows.append((c.T, c.status) + values)
    return _csv(CASCADE_HEADER, rows)


def ldp_csv(report: ExperimentReport) -> str:
    e = report.ldp_estimate
    rows = [] if e is None else zip(e.horizons, e.n_samples, e.p_hat, e.log_probs, e.upper_bounds, e.flagged)
    return _csv(LDP_HEADER, rows)


def hedging_csv(report: ExperimentReport) -> str:
    return _csv(HEDGING_HEADER, [
        (h.T, h.tau, h.cost, h.s_cutoff, h.w_cutoff, h.rms_error, h.max_shortfall,
         h.tolerance, h.min_value, h.admissible) for h in report.hedging])


def _fmt(v, width=12):
    if v is None:
        return "-".rjust(width)
    if isinstance(v, bool):
        return ("yes" if v else "no").rjust(width)
    if isinstance(v, float):
        if v != 0 and (abs(v) < 1e-3 or abs(v) >= 1e5) and math.isfinite(v):
            return f"{v:.4e}".rjust(width)
        return f"{v:.6f}".rjust(width)
    return str(v).rjust(width)


def _table(title, header, rows) -> list[str]:
    lines = [title, "".join(h.rjust(12) for h in header)]
    lines += ["".join(_fmt(v) for v in row) for row in rows]
    return lines + [""]


def human_summary(report: ExperimentReport) -> str:
    k = report.bound_constants
    pv = report.provenance
    lines = [
        "aearb experiment report",
        f"config hash  {pv.config_hash}",
        f"seed         {pv.seed}",
        f"version      {pv.code_version}",
        "",
        "bound constants",
        f"  c1 = {k.c1:.6g}   c2 = {k.c2:.6g}   delta = {k.delta:.6g}",
        f"  gamma1 = {k.gamma1:.6f}   gamma2 = {k.gamma2:.6f}   C_tilde = {k.C_tilde:.6f}   T0 = {k.T0}",
        "",
    ]
    e = report.ldp_estimate
    if e is not None:
        rate = "-" if e.rate_estimate is None else f"{e.rate_estimate:.6f}"
        lines += [f"tradeoff tail rate proxy {rate} ({e.status})"]
        lines += _table("", ("T", "n", "p_hat", "log_prob", "bound"),
                        zip(e.horizons, e.n_samples, e.p_hat, e.log_probs, e.upper_bounds))[1:]
    lines += _table("failure set probabilities", ("T", "p_hat", "p_se", "p_bound", "q_hat", "q_se", "q_bound", "pass"),
                    [(r.T, r.p_hat, r.p_se, r.p_bound, r.q_hat, r.q_se, r.q_bound, r.passed)
                     for r in report.probability_table])
    lines.append("cascade")
    for c in report.cascade_params:
        if c.params is None:
            lines.append(f"  T = {c.T}: {c.status}")
        else:
            p = c.params
            lines.append(f"  T = {c.T}: alpha = {p.alpha:.6f}  eps1 = {p.eps1:.4e}  eps2 = {p.eps2:.4e}  "
                         f"T_tilde = {p.T_tilde}")
    lines.append("")
    if report.hedging:
        lines += _table("digital hedge", ("T", "tau", "cost", "rms_error", "shortfall", "tolerance"),
                        [(h.T, h.tau, h.cost, h.rms_error, h.max_shortfall, h.tolerance) for h in report.hedging])
    cert = report.arbitrage_certificate
    if cert is not None:
        lines += _table("arbitrage certificate", ("T", "min_X", "floor", "tolerance", "fail_prob", "bound", "a", "b"),
                        [(r.T, r.min_X, r.floor, r.tolerance, r.failure_prob, r.bound, r.pass_a, r.pass_b)
                         for r in cert.rows])
    lines.append(f"certificate: {report.certificate_status}")
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, formats=("csv", "json", "human"), directory: str | Path = "out") -> list[Path]:
    """Write the requested formats into ``directory`` and return the paths written."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    if "csv" in formats:
        files.update({
            "probabilities.csv": probability_csv(report),
            "certificate.csv": certificate_csv(report),
            "cascade.csv": cascade_csv(report),
            "ldp.csv": ldp_csv(report),
            "hedging.csv": hedging_csv(report),
        })
    if "json" in formats:
        files["report.json"] = report_to_json(report)
        files["timings.json"] = json.dumps(report.timings, indent=2) + "\n"
    if "human" in formats:
        files["summary.txt"] = human_summary(report)
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        written.append(path)
    return written

"""Command implementations shared by the CLI and the HTTP service.

Each command takes a validated RunConfig and returns a JSON-ready
envelope {"command", "seed", "config", "report"}; `write_reports` emits
the envelope (and, when requested, CSV sidecars of the tabular pieces)
under the configured output directory. All randomness flows from the
master seed through namespaced counter streams, so identical
(config, seed) inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import os

from . import criterion as crit
from . import lyapunov as lyap
from . import montecarlo as mc
from .config import RunConfig, canonical_json
from .models import CellDivisionModel
from .spectral import contraction_factor


def _envelope(command: str, cfg: RunConfig, report: dict) -> dict:
    return {
        "command": command,
        "seed": cfg.seed,
        "config": cfg.resolved,
        "report": report,
    }


def run_analyze(cfg: RunConfig) -> dict:
    """Perron eigendata plus the growth-criterion classification."""
    rng = mc.substream(cfg.seed, mc.NS_CRITERION, 0)
    report = crit.build_criterion_report(
        cfg.model, cfg.pd, radii=cfg.criterion.radii, rng=rng,
        sigma2_samples=cfg.criterion.sigma2_samples,
        criticality_tol=cfg.spectral.criticality_tol)
    body = {"perron": cfg.pd.to_dict(), "criterion": report.to_dict()}
    if report.criticality is crit.Criticality.CRITICAL:
        body["contraction_factor"] = contraction_factor(
            cfg.model.mean_matrix(), cfg.pd,
            criticality_tol=cfg.spectral.criticality_tol)
    if isinstance(cfg.model, CellDivisionModel):
        body["cell_division_threshold"] = crit.cell_division_threshold(
            cfg.model.p, cfg.model.p_prime, cfg.model.b1, cfg.model.b2)
        body["c_sum"] = cfg.model.c1 + cfg.model.c2
    return _envelope("analyze", cfg, body)


def run_simulate(cfg: RunConfig) -> dict:
    report, summaries = mc.run_ensemble(cfg.model, cfg.x0, cfg.sim,
                                        pd=cfg.pd, keep_summaries=True)
    body = report.to_dict()
    body["probe"] = mc.probe_from_report(report).to_dict()
    envelope = _envelope("simulate", cfg, body)
    envelope["_trajectories"] = [t.to_dict() for t in summaries]
    return envelope


def run_lyapunov(cfg: RunConfig) -> dict:
    """Supermartingale gaps (scan or fixed k) plus the moment scan."""
    settings = cfg.lyapunov
    phi = lyap.Phi(settings.phi)
    grid = lyap.default_state_grid(cfg.pd, settings.projections,
                                   settings.off_ray)
    rng = mc.substream(cfg.seed, mc.NS_LYAPUNOV, 0)
    body: dict = {"grid": [s.tolist() for s in grid], "phi": phi.value}
    if settings.k is None:
        scan = lyap.scan_k(cfg.model, cfg.pd, phi, grid, settings.k_max,
                           settings.n_samples, rng, band=settings.band)
        body["scan"] = scan.to_dict()
        k = scan.k if scan.k is not None else 1
        if scan.k is None:
            body["notes"] = [f"no k <= {settings.k_max} satisfied the grid; "
                             "moment scan runs at k = 1"]
    else:
        k = settings.k
        records = [lyap.check_supermartingale(
            cfg.model, cfg.pd, phi, x, k, settings.n_samples, rng,
            band=settings.band) for x in grid]
        body["gaps"] = [r.to_dict() for r in records]
    est = crit.estimate_c1_d1(
        cfg.model, cfg.pd, radii=cfg.criterion.radii,
        rng=mc.substream(cfg.seed, mc.NS_CRITERION, 1),
        sigma2_samples=cfg.criterion.sigma2_samples)
    body["k"] = k
    body["moments"] = lyap.moment_scan(
        cfg.model, cfg.pd, grid, k, settings.n_samples,
        est.c1, est.d1, rng).to_dict()
    body["c1d1"] = est.to_dict()
    return _envelope("lyapunov", cfg, body)


def run_audit(cfg: RunConfig) -> dict:
    settings = cfg.lyapunov
    grid = lyap.default_state_grid(cfg.pd, settings.projections,
                                   settings.off_ray)
    rng = mc.substream(cfg.seed, mc.NS_AUDIT, 0)
    audit = lyap.assumption_audit(cfg.model, cfg.pd, grid, rng,
                                  n_samples=settings.audit_samples)
    return _envelope("audit", cfg, audit.to_dict())


COMMANDS = {
    "analyze": run_analyze,
    "simulate": run_simulate,
    "lyapunov": run_lyapunov,
    "audit": run_audit,
}


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _sidecars(command: str, envelope: dict) -> dict:
    """CSV views of the tabular report pieces, keyed by filename."""
    report = envelope["report"]
    out = {}
    if command == "analyze":
        samples = report["criterion"]["ratio_samples"]
        out["ratio_samples.csv"] = _csv_text(("r", "ratio"), samples)
    elif command == "simulate":
        rows = [(t["index"], " ".join(str(c) for c in t["final_state"]),
                 t["final_u"], t["min_u_post"], t["max_u_post"],
                 t["returns_below_s"], t["absorption_time"],
                 t["ceiling_crossed"], t["overflowed"])
                for t in envelope.get("_trajectories", [])]
        out["trajectories.csv"] = _csv_text(
            ("index", "final_state", "final_u", "min_u_post", "max_u_post",
             "returns_below_s", "absorption_time", "ceiling_crossed",
             "overflowed"), rows)
    elif command == "lyapunov":
        gap_rows = []
        if "scan" in report:
            gap_rows = [(" ".join(str(c) for c in r["state"]), r["u_proj"],
                         r["k"], r["gap"], r["se"], r["verdict"],
                         r["absorbed_fraction"])
                        for r in report["scan"]["records"]]
        elif "gaps" in report:
            gap_rows = [(" ".join(str(c) for c in r["state"]), r["u_proj"],
                         r["k"], r["gap"], r["se"], r["verdict"],
                         r["absorbed_fraction"]) for r in report["gaps"]]
        out["gaps.csv"] = _csv_text(
            ("state", "u_proj", "k", "gap", "se", "verdict",
             "absorbed_fraction"), gap_rows)
        moment_rows = [(" ".join(str(c) for c in r["state"]), r["u_proj"],
                        r["mean_delta"], r["ref_mean"], r["mean_delta2"],
                        r["ref_second"], r["resid_mean_norm"],
                        r["resid_second_norm"], r["transverse_norm"])
                       for r in report["moments"]["records"]]
        out["moments.csv"] = _csv_text(
            ("state", "u_proj", "mean_delta", "ref_mean", "mean_delta2",
             "ref_second", "resid_mean_norm", "resid_second_norm",
             "transverse_norm"), moment_rows)
    elif command == "audit":
        rows = []
        for drift, sigma, ratio, incr in zip(
                report["drift_u"]["by_state"], report["sigma2"]["by_state"],
                report["moment_ratio"]["by_state"],
                report["increase_prob"]["by_state"]):
            rows.append((" ".join(str(c) for c in drift["state"]),
                         drift["value"], sigma["value"], ratio["value"],
                         incr["value"]))
        out["audit.csv"] = _csv_text(
            ("state", "drift_u", "sigma2", "moment_ratio", "increase_prob"),
            rows)
    return out


def write_reports(command: str, envelope: dict, out_dir: str,
                  formats: str) -> list:
    """Write the report envelope (and CSV sidecars) to out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    sidecars = _sidecars(command, envelope)
    envelope = {k: v for k, v in envelope.items() if not k.startswith("_")}
    if formats in ("json", "both"):
        path = os.path.join(out_dir, f"report_{command}.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(envelope))
        written.append(path)
    if formats in ("csv", "both"):
        for name, text in sidecars.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
            written.append(path)
    return written


def run_command(command: str, cfg: RunConfig) -> dict:
    """Run one command and return its envelope (without writing files)."""
    envelope = COMMANDS[command](cfg)
    return {k: v for k, v in envelope.items() if not k.startswith("_")}

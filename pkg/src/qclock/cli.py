"""Command-line entry point: ``qclock simulate | analyze | optimize``.

Exit codes: 0 success, 2 invalid spec or usage, 3 certificate check failed in
strict mode, 4 missing or corrupt archive.
"""
from __future__ import annotations

import csv
import io
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .clocksim import RunRecord, compare_protocols, compute_metrics, run_protocol
from .config import ExperimentSpec, SpecError, canonical_json, load_experiment, load_prior, spec_hash
from .gaussian import Gaussian, discretize
from .optimizer import optimize_interrogation
from .quantum import Povm

EXIT_SPEC, EXIT_CERT, EXIT_ARCHIVE = 2, 3, 4
MANIFEST = "manifest.json"


class ArchiveError(RuntimeError):
    pass


def fmt(x) -> str:
    """Shortest round-trip representation; fixed so reruns are byte-identical."""
    return repr(float(x))


def write_table(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ArchiveError(f"{path} is empty")
    return rows[0], rows[1:]


def improvement_rows(improvements) -> list[list]:
    return [[imp.baseline, imp.metric, imp.percent, imp.stderr] for imp in improvements]


def compute_improvements(spec: ExperimentSpec, records: dict) -> list:
    if "adaptive" not in records:
        return []
    out = []
    for base in spec.protocols:
        if base != "adaptive":
            out.extend(compare_protocols(records["adaptive"], records[base], spec.analysis.last_steps,
                                         spec.analysis.bootstrap, spec.seed))
    return out


def write_archive(out: Path, spec: ExperimentSpec, records: dict, started: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for proto, recs in records.items():
        d = out / proto
        d.mkdir(exist_ok=True)
        with (d / "runs.jsonl").open("w") as fh:
            for r in recs:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        m = compute_metrics(recs)
        write_table(d / "metrics.csv", ["step", "sq_freq_error", "phase_sq_error", "phase_variance"],
                    [[i + 1, a, b, c] for i, (a, b, c) in
                     enumerate(zip(m.sq_freq_error, m.phase_sq_error, m.phase_variance))])
        write_table(d / "allan.csv", ["m", "allan_variance", "allan_variance_estimates"],
                    [[i + 1, a, b] for i, (a, b) in enumerate(zip(m.allan, m.allan_estimates))])
    write_table(out / "improvement.csv", ["baseline", "metric", "percent", "stderr"],
                improvement_rows(compute_improvements(spec, records)))
    (out / "spec.json").write_text(canonical_json(spec) + "\n")
    manifest = {
        "spec_hash": spec_hash(spec),
        "code_version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "protocols": list(records),
        "runs": spec.runs,
        "interrogations": spec.interrogations,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_archive(path: Path):
    """Load and integrity-check an archive; returns ``(manifest, spec, records)``."""
    mpath = path / MANIFEST
    if not mpath.is_file():
        raise ArchiveError(f"{path} has no {MANIFEST}")
    try:
        manifest = json.loads(mpath.read_text())
        spec = ExperimentSpec.model_validate_json((path / "spec.json").read_text())
    except (OSError, ValueError) as exc:
        raise ArchiveError(f"unreadable manifest or spec: {exc}") from None
    if spec_hash(spec) != manifest.get("spec_hash"):
        raise ArchiveError("spec hash does not match the manifest")
    records = {}
    for proto in manifest.get("protocols", []):
        f = path / proto / "runs.jsonl"
        try:
            recs = [RunRecord.from_dict(json.loads(line)) for line in f.read_text().splitlines() if line]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ArchiveError(f"corrupt run records for {proto}: {exc}") from None
        if len(recs) != spec.runs or any(r.M != spec.interrogations for r in recs):
            raise ArchiveError(f"{proto}: run records do not match the spec")
        records[proto] = recs
    if not records:
        raise ArchiveError("archive lists no protocols")
    return manifest, spec, records


def analyze_archive(path: Path, out: Path) -> dict:
    """Write plot-data tables; returns the paths written."""
    _, spec, records = read_archive(path)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    T = spec.T
    for proto, recs in records.items():
        m = compute_metrics(recs)
        f = out / f"error_{proto}.csv"
        write_table(f, ["time", "rms_freq_error", "sq_freq_error"],
                    [[(i + 1) * T, float(np.sqrt(v)), v] for i, v in enumerate(m.sq_freq_error)])
        written[f"error_{proto}"] = f
        f = out / f"allan_{proto}.csv"
        write_table(f, ["m", "tau", "allan_deviation", "allan_variance"],
                    [[i + 1, (i + 1) * T, float(np.sqrt(v)), v] for i, v in enumerate(m.allan)])
        written[f"allan_{proto}"] = f
    f = out / "improvement.csv"
    write_table(f, ["baseline", "metric", "percent", "stderr"],
                improvement_rows(compute_improvements(spec, records)))
    written["improvement"] = f
    return written


def _complex_list(a) -> list:
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _from_complex_list(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def optimize_prior(prior_spec) -> dict:
    """Solve one interrogation; returns the JSON-ready dump."""
    if prior_spec.gaussian is not None:
        g = prior_spec.gaussian
        grid = discretize(Gaussian([g.mean], [[g.std**2]]), g.points, g.span)
        omegas, probs = grid.axes[0], grid.probs
    else:
        omegas = np.asarray(prior_spec.grid.omegas, dtype=float)
        probs = np.asarray(prior_spec.grid.probs, dtype=float)
        probs = probs / probs.sum()
    terms = np.broadcast_to(np.asarray(prior_spec.phase_terms, dtype=float), omegas.shape)
    sol = optimize_interrogation(omegas, probs, terms, prior_spec.T, prior_spec.atoms,
                                 prior_spec.optimizer_config(), seed=prior_spec.seed)
    alg = sol.algorithm
    cert = sol.certificate
    ok = cert.ok(prior_spec.certificate_tol)
    return {
        "format": "qclock-algorithm/1",
        "atoms": prior_spec.atoms,
        "basis": "dicke",
        "T": prior_spec.T,
        "state": _complex_list(alg.state.amplitudes),
        "povm": _complex_list(alg.povm.elements),
        "labels": alg.g.tolist(),
        "objective": sol.objective,
        "certificate": cert.as_dict(),
        "certificate_ok": ok,
        "warning": None if ok else f"certificate residual above {prior_spec.certificate_tol:g}",
    }


def validate_dump(dump: dict, tol: float = 1e-6) -> Povm:
    """Re-parse an algorithm dump and check its POVM."""
    povm = Povm(_from_complex_list(dump["povm"]))
    povm.validate(tol)
    psi = _from_complex_list(dump["state"])
    if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
        raise ValueError("state is not normalized")
    if len(dump["labels"]) != len(povm):
        raise ValueError("label count does not match the POVM")
    return povm


# ---------------------------------------------------------------- click wiring

def _fail(msg: str, code: int):
    click.echo(msg, err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__, prog_name="qclock")
def main():
    """Adaptive Bayesian passive atomic clock simulator."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False), help="Experiment YAML.")
@click.option("--out", type=click.Path(file_okay=False), help="Archive directory (overrides spec.output).")
@click.option("--seed", type=int, help="Master seed (overrides spec.seed).")
@click.option("--threads", type=int, default=1, show_default=True, help="Worker processes.")
def simulate(spec_path, out, seed, threads):
    """Run every protocol of an experiment and write a results archive."""
    try:
        spec, _ = load_experiment(spec_path)
    except FileNotFoundError:
        _fail(f"{spec_path}: no such file", EXIT_SPEC)
    except SpecError as exc:
        _fail(str(exc), EXIT_SPEC)
    if seed is not None:
        spec = spec.model_copy(update={"seed": seed})
    target = out or spec.output
    if target is None:
        _fail("no output directory: pass --out or set 'output' in the spec", EXIT_SPEC)
    started = datetime.now(timezone.utc).isoformat()
    records = {}
    for proto in spec.protocols:
        click.echo(f"{proto}: {spec.runs} runs x {spec.interrogations} interrogations", err=True)
        records[proto] = run_protocol(spec.sim_config(proto), threads=threads)
    write_archive(Path(target), spec, records, started)
    click.echo(str(target))


@main.command()
@click.argument("archive", type=click.Path(file_okay=False))
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (default ARCHIVE/analysis).")
def analyze(archive, out):
    """Emit error, Allan and improvement tables from an archive."""
    path = Path(archive)
    try:
        written = analyze_archive(path, Path(out) if out else path / "analysis")
    except ArchiveError as exc:
        _fail(f"{archive}: {exc}", EXIT_ARCHIVE)
    for f in written.values():
        click.echo(str(f))


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False), help="Prior YAML.")
@click.option("--out", type=click.Path(dir_okay=False), help="Output JSON file (default stdout).")
@click.option("--seed", type=int, help="Seed for random seesaw starts.")
@click.option("--strict", is_flag=True, help="Exit nonzero when certificate residuals exceed tolerance.")
def optimize(spec_path, out, seed, strict):
    """Optimize a single interrogation for a one-dimensional prior."""
    try:
        prior = load_prior(spec_path)
    except FileNotFoundError:
        _fail(f"{spec_path}: no such file", EXIT_SPEC)
    except SpecError as exc:
        _fail(str(exc), EXIT_SPEC)
    if seed is not None:
        prior = prior.model_copy(update={"seed": seed})
    dump = optimize_prior(prior)
    text = json.dumps(dump, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)
    if dump["warning"]:
        click.echo(f"warning: {dump['warning']}", err=True)
        if strict:
            sys.exit(EXIT_CERT)


if __name__ == "__main__":  # pragma: no cover
    main()

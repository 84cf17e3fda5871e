"""``lefschetz-lab`` command line.

Every experiment is reachable three ways: ``lefschetz-lab <experiment>``,
``lefschetz-lab run <experiment>`` (optionally from ``--config``), and the
grouped forms ``mis <sub>`` / ``foliation <sub>``.  Reports are JSON with a
top-level ``"schema": 1``; the exit code is 0 iff every embedded check passed.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import click
import numpy as np
import scipy
import sympy

from . import __version__
from .experiments import ACCEPTANCE, REGISTRY, ConfigError, _jsonable

SCHEMA = 1
MAX_SEED = 2 ** 64 - 1


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            if not k:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if k in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {k!r}")
            out[k] = v.strip('"').strip("'")
    return out


def _versions():
    return {"lefschetz_lab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "sympy": sympy.__version__}


def run_experiment(name: str, raw: dict, seed: int = 0) -> dict:
    """Validate, run and wrap one experiment in a report."""
    if name not in REGISTRY:
        raise ConfigError(f"experiment: unknown {name!r}; choose from {sorted(REGISTRY)}")
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {seed}")
    exp = REGISTRY[name]
    params = exp.validate(raw)
    t0 = time.perf_counter()
    out = exp.run(params, seed)
    checks = {k: bool(v) for k, v in out["checks"].items()}
    return {
        "schema": SCHEMA,
        "experiment": name,
        "inputs": _jsonable(dict(params, seed=seed)),
        "results": _jsonable(out["results"]),
        "checks": checks,
        "passed": all(checks.values()),
        "versions": _versions(),
        "timing": {"seconds": round(time.perf_counter() - t0, 3)},
    }


def _criterion_report(args):
    crit, seed = args
    reports, ok = [], True
    for name, params in crit.runs:
        try:
            rep = run_experiment(name, params, seed)
        except Exception as exc:  # a failing experiment marks the criterion failed
            rep = {"schema": SCHEMA, "experiment": name, "error": f"{type(exc).__name__}: {exc}", "passed": False,
                   "checks": {}}
        sel = {k: v for k, v in rep["checks"].items() if not crit.checks or k in crit.checks}
        ok &= rep.get("error") is None and all(sel.values())
        reports.append(rep)
    return {"criterion": crit.number, "title": crit.title, "passed": bool(ok), "reports": reports}


def run_suite(level: str = "smoke", seed: int = 0, jobs: int = 1) -> dict:
    crits = [c for c in ACCEPTANCE if level == "full" or c.smoke]
    t0 = time.perf_counter()
    args = [(c, seed) for c in crits]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_criterion_report, args))
    else:
        results = [_criterion_report(a) for a in args]
    checks = {f"criterion_{r['criterion']}": r["passed"] for r in results}
    return {"schema": SCHEMA, "experiment": f"suite-{level}", "inputs": {"level": level, "seed": seed},
            "results": {"criteria": results}, "checks": checks, "passed": all(checks.values()),
            "versions": _versions(), "timing": {"seconds": round(time.perf_counter() - t0, 3)}}


def _table(report):
    if "criteria" in report.get("results", {}):
        return [{"criterion": r["criterion"], "title": r["title"], "passed": r["passed"]}
                for r in report["results"]["criteria"]]
    return report.get("results", {}).get("table")


def emit(report: dict, out: str | None, csv_path: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=True)
    if out and out != "-":
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)
    if csv_path:
        rows = _table(report)
        if not rows:
            raise click.ClickException(f"experiment {report['experiment']!r} has no table to write as CSV")
        buf = io.StringIO()
        keys = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())


def _finish(report, ctx):
    emit(report, ctx.obj["out"], ctx.obj["csv"])
    ctx.exit(0 if report["passed"] else 1)


def _execute(ctx, name, raw):
    opts = ctx.obj
    merged = dict(read_config(opts["config"])) if opts["config"] else {}
    merged.pop("experiment", None)
    merged.update({k: v for k, v in raw.items() if v is not None})
    try:
        report = run_experiment(name, merged, opts["seed"])
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    except ValueError as exc:  # module errors propagate verbatim
        click.echo(f"error: {exc}", err=True)
        ctx.exit(1)
    _finish(report, ctx)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--out", default=None, help="Report path (default stdout).")
@click.option("--seed", default=0, type=click.IntRange(0, MAX_SEED), show_default=True, help="Sampling seed.")
@click.option("--config", "config", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Flat 'key = value' file; command-line flags override it.")
@click.option("--jobs", default=1, type=click.IntRange(1, 256), show_default=True,
              help="Worker processes for independent experiments.")
@click.option("--csv", "csv_path", default=None, help="Write the experiment's table as CSV.")
@click.version_option(__version__)
@click.pass_context
def main(ctx, out, seed, config, jobs, csv_path):
    """Desk-scale checks for hard Lefschetz with pseudoeffective line bundles.

    The environment variable LEFSCHETZ_LAB_MAX_GRID overrides the 512-point
    quadrature cap of the torus experiments.
    """
    ctx.obj = {"out": out, "seed": seed, "config": config, "jobs": jobs, "csv": csv_path}


_KIND = {"int": int, "float": float, "str": str, "floats": str, "ints": str, "bool": str}


def _make_command(name, cmd_name=None):
    exp = REGISTRY[name]

    @click.pass_context
    def cb(ctx, **kw):
        _execute(ctx, name, {k: v for k, v in kw.items()})

    params = []
    for p in exp.params:
        flag = "--" + p.name.replace("_", "-")
        params.append(click.Option([flag, p.name], type=_KIND[p.kind], default=None,
                                   help=(p.help + " " if p.help else "")
                                   + ("[required]" if p.required else f"[default: {p.default}]")))
    return click.Command(cmd_name or name, callback=cb, params=params, help=exp.help)


for _name in REGISTRY:
    main.add_command(_make_command(_name))


@main.group()
def mis():
    """Multiplier ideals: snc, siu, jump, lower, coherence, consistency, oracle."""


for _sub in ("snc", "siu", "jump", "lower", "consistency", "oracle"):
    mis.add_command(_make_command(f"mis-{_sub}", _sub))
mis.add_command(_make_command("coherence", "coherence"))


@main.group("foliation")
def foliation_group():
    """Foliation example on A x P^1: eta, integrable, iota."""


for _sub in ("eta", "integrable", "iota"):
    foliation_group.add_command(_make_command(f"foliation-{_sub}", _sub))


@main.command("run")
@click.argument("experiment", required=False)
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="Override a parameter.")
@click.pass_context
def run_cmd(ctx, experiment, sets):
    """Run EXPERIMENT (or the 'experiment' key of --config) with overrides."""
    cfg = read_config(ctx.obj["config"]) if ctx.obj["config"] else {}
    name = experiment or cfg.get("experiment")
    if not name:
        raise click.UsageError("missing required field(s) ['experiment']; give it as an argument or a config key")
    raw = {}
    for s in sets:
        if "=" not in s:
            raise click.UsageError(f"--set expects KEY=VALUE, got {s!r}")
        k, v = s.split("=", 1)
        raw[k.strip()] = v.strip()
    _execute(ctx, name, raw)


@main.command("suite")
@click.argument("level", type=click.Choice(["smoke", "full"]), default="smoke")
@click.pass_context
def suite_cmd(ctx, level):
    """Run the acceptance battery (smoke skips the two slowest criteria)."""
    report = run_suite(level, ctx.obj["seed"], ctx.obj["jobs"])
    for r in report["results"]["criteria"]:
        click.echo(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['criterion']:>2}  {r['title']}", err=True)
    _finish(report, ctx)


@main.command("list")
def list_cmd():
    """List experiments and their parameters."""
    for name, exp in sorted(REGISTRY.items()):
        ps = ", ".join(p.name + ("*" if p.required else "") for p in exp.params)
        click.echo(f"{name:<22} {ps}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

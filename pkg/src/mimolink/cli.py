"""Command-line front end: ``mimolink {run,validate,plot,presets}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import datetime
import hashlib
import json
import math
import os
import sys
import warnings

import numpy as np
from scipy.special import j0

from mimolink import __version__, corrchan, phy, seeding
from mimolink.errors import InvalidParameterError
from mimolink.linkctl import LinkConfig
from mimolink.plotscript import gnuplot_script
from mimolink.sweep import (
    DEFAULT_CAPACITY_SAMPLES,
    DEFAULT_SUBFRAMES,
    DEFAULT_TRIALS,
    PRESETS,
    SweepSpec,
    figure_preset,
    format_csv,
    read_csv,
    run_sweep,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SEED_ENV = "MIMOLINK_SEED"

# link keys accepted for documentation only
IGNORED_LINK_KEYS = ("aoa_deg", "angular_spread_deg")
TOP_LEVEL_KEYS = ("preset", "seed", "trials", "subframes", "capacity_samples", "link", "axes")

PRESET_DESCRIPTIONS = {
    "fig2_1": "SM throughput vs SNR, Rayleigh, poor and rich scattering",
    "fig2_2": "SM throughput vs SNR, Rician K=6, poor and rich scattering",
    "fig2_3": "SM throughput vs K, poor scattering, SNR 14 dB",
    "fig2_4": "TD throughput vs SNR, Rayleigh, poor and rich scattering",
    "fig2_5": "TD throughput vs SNR, Rician K=6, poor and rich scattering",
    "fig2_6": "TD throughput vs K, poor scattering, SNR 7 dB",
    "fig3_1": "SM throughput vs SNR at 3/20/40/60 km/h, poor scattering",
    "fig3_2": "TD throughput vs SNR at 3/20/40/60 km/h, poor scattering",
    "fig4_1": "SM ergodic capacity vs SNR, K in {0, 6}, both scenarios",
    "fig4_2": "TD ergodic capacity vs SNR, K in {0, 6}, both scenarios",
}


class ConfigError(Exception):
    """Invalid configuration; reported with exit code 2."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _line_of(text, key):
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return lineno
    return None


def load_config_file(path):
    """Parse a JSON config file; syntax errors carry line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    unknown = [k for k in data if k not in TOP_LEVEL_KEYS]
    if unknown:
        line = _line_of(text, unknown[0])
        raise ConfigError(f"{path}:{line}: unknown key {unknown[0]!r}; valid keys: {', '.join(TOP_LEVEL_KEYS)}")
    data["_text"] = text
    data["_path"] = path
    return data


# flag dest -> LinkConfig field
LINK_FLAGS = {
    "mode": "mode",
    "detector": "detector",
    "snr_db": "snr_db",
    "scenario": "scenario",
    "k": "k_factor",
    "los_mode": "los_mode",
    "speed_kmh": "speed_kmh",
    "carrier_hz": "carrier_hz",
    "csi": "csi",
    "harq": "harq_enabled",
    "max_retx": "max_retransmissions",
    "subcarriers": "n_subcarriers",
    "symbols": "n_symbols",
    "alpha": "alpha",
    "beta": "beta",
    "capacity_method": "capacity_method",
}


def resolve_config(args, environ=None):
    """Merge defaults < config file < command-line flags.

    Returns a plain dict with keys ``preset, seed, trials, subframes,
    capacity_samples, link, axes``.
    """
    environ = os.environ if environ is None else environ
    resolved = {
        "preset": None,
        "seed": 0,
        "trials": DEFAULT_TRIALS,
        "subframes": DEFAULT_SUBFRAMES,
        "capacity_samples": DEFAULT_CAPACITY_SAMPLES,
        "link": {},
        "axes": None,
    }
    if environ.get(SEED_ENV):
        try:
            resolved["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    file_data = load_config_file(args.config) if getattr(args, "config", None) else {}
    text, path = file_data.pop("_text", ""), file_data.pop("_path", None)
    for key in ("preset", "seed", "trials", "subframes", "capacity_samples", "axes"):
        if key in file_data:
            resolved[key] = file_data[key]
    link = dict(file_data.get("link", {}))
    for key in IGNORED_LINK_KEYS:
        if link.pop(key, None) is not None:
            print(f"note: link.{key} is accepted for documentation and ignored", file=sys.stderr)
    for dest, key in LINK_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            link[key] = value
    resolved["link"] = link
    for key in ("preset", "seed", "trials", "subframes", "capacity_samples"):
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    resolved["_source"] = (path, text)
    return resolved


def build_spec(resolved):
    """Turn a resolved config dict into a :class:`SweepSpec`."""
    path, text = resolved.pop("_source", (None, ""))
    link = dict(resolved["link"])
    try:
        seed = int(resolved["seed"])
        trials, subframes = int(resolved["trials"]), int(resolved["subframes"])
        if resolved["preset"]:
            spec = figure_preset(resolved["preset"], seed=seed, trials=trials, subframes=subframes, **link)
        else:
            base = LinkConfig.from_dict({**link, "seed": seed})
            axes = resolved["axes"]
            if axes:
                spec = SweepSpec(base=base, axes=tuple(axes.items()), trials=trials,
                                 subframes=subframes, throughput=True, capacity=True)
            else:
                spec = SweepSpec(base=base, axes=(("snr_db", (base.snr_db,)),), trials=trials,
                                 subframes=subframes, name="single", throughput=True, capacity=True)
        if resolved["axes"] and resolved["preset"]:
            spec = spec.with_(axes=tuple(resolved["axes"].items()))
        spec = spec.with_(capacity_samples=int(resolved["capacity_samples"]))
    except (InvalidParameterError, TypeError, ValueError) as exc:
        where = ""
        if path:
            key = _offending_key(str(exc), link)
            line = _line_of(text, key) if key else None
            where = f"{path}:{line}: " if line else f"{path}: "
        raise ConfigError(f"{where}{exc}") from None
    return spec


def _offending_key(message, link):
    for key in list(link) + ["trials", "subframes", "seed", "preset", "axes", "capacity_samples"]:
        if key in message:
            return key
    return None


def spec_to_dict(spec):
    return {
        "name": spec.name,
        "base": spec.base.to_dict(),
        "axes": [[name, [v.value if hasattr(v, "value") else v for v in values]] for name, values in spec.axes],
        "trials": spec.trials,
        "subframes": spec.subframes,
        "throughput": spec.throughput,
        "capacity": spec.capacity,
        "capacity_samples": spec.capacity_samples,
    }


def spec_from_dict(data):
    return SweepSpec(
        base=LinkConfig.from_dict(data["base"]),
        axes=tuple((name, tuple(values)) for name, values in data["axes"]),
        trials=data["trials"],
        subframes=data["subframes"],
        name=data["name"],
        throughput=data["throughput"],
        capacity=data["capacity"],
        capacity_samples=data["capacity_samples"],
    )


def sha256_text(text):
    return hashlib.sha256(text.encode()).hexdigest()


def make_manifest(spec, outputs):
    return {
        "tool": "mimolink",
        "version": __version__,
        "config": spec_to_dict(spec),
        "seed": spec.seed,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "outputs": outputs,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(args):
    expected = None
    if args.from_manifest:
        try:
            with open(args.from_manifest) as fh:
                manifest = json.load(fh)
            spec = spec_from_dict(manifest["config"])
        except (OSError, json.JSONDecodeError, KeyError, InvalidParameterError) as exc:
            raise ConfigError(f"{args.from_manifest}: cannot load manifest: {exc}") from None
        outputs = manifest.get("outputs", {})
        recorded = next(iter(outputs), None)
        expected = outputs.get(recorded)
        out = args.out or (None if recorded in (None, "-") else recorded)
    else:
        spec = build_spec(resolve_config(args))
        out = args.out

    workers = args.workers if args.workers else (os.cpu_count() or 1)
    rows = run_sweep(spec, workers=workers, progress=not args.quiet)
    text = format_csv(rows)
    digest = sha256_text(text)
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)

    manifest_path = args.manifest or (f"{out}.manifest.json" if out else None)
    if manifest_path and not args.from_manifest:
        manifest = make_manifest(spec, {out or "-": digest})
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if expected is not None:
        if digest != expected:
            print(f"digest mismatch: got {digest}, manifest records {expected}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"reproduced {out or '-'} (sha256 {digest})", file=sys.stderr)
    return EXIT_OK


def run_checks(seed=0, samples=100_000):
    """Statistical self-checks of the channel and noise generators.

    Returns a list of ``(name, measured, target, tolerance, status)`` with
    status PASS, FAIL or WARN (WARN when ``samples`` is below the
    reliability threshold).
    """
    small = samples < corrchan.MIN_STAT_SAMPLES
    results = []

    def record(name, measured, target, tolerance, ok):
        status = "PASS" if ok else ("WARN" if small else "FAIL")
        results.append((name, measured, target, tolerance, status))

    poor = corrchan.scenario_profile("poor")
    fast = corrchan.DopplerSpec.from_kmh(60.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)

        corr = corrchan.CorrelationSpec(0.7, 0.7)
        series = corrchan.generate_channel(poor, corrchan.FadingSpec(), corr, fast, samples, 1e-3,
                                           seeding.derive(seed, 10))
        stats = corrchan.estimate_statistics(series, max_lag=1)
        err = float(np.linalg.norm(stats.correlation - corrchan.kronecker_correlation(corr)))
        record("correlation_frobenius", err, 0.0, 0.05, err <= 0.05)

        rician = corrchan.FadingSpec("rician", 6.0, "normalized")
        series = corrchan.generate_channel(poor, rician, corrchan.CorrelationSpec(), fast, samples, 1e-3,
                                           seeding.derive(seed, 11))
        k = corrchan.estimate_statistics(series, max_lag=1).k_factor
        record("k_factor_recovery", k, 6.0, 1.2, abs(k - 6.0) <= 1.2)

        fd, dt = 100.0, 1e-4
        x = corrchan.fading_process(fd, samples, dt, seeding.derive(seed, 12))
        max_lag = int(round(5.0 / fd / dt))
        ac = np.real(corrchan.autocorrelation(x, max_lag))
        ref = j0(2 * np.pi * fd * np.arange(ac.size) * dt)
        dev = float(np.max(np.abs(ac - ref)))
        record("doppler_autocorrelation", dev, 0.0, 0.05, dev <= 0.05)

        snr_db = 10.0
        n_re = max(samples // 2, 1)
        ident = np.broadcast_to(np.eye(2), (1, n_re, 2, 2))
        tx = np.zeros((2, 1, n_re), dtype=complex)
        rx = phy.apply_channel(tx, ident, snr_db, seeding.derive(seed, 13))
        var = float(np.mean(np.abs(rx.y) ** 2))
        target = phy.noise_variance(snr_db)
        tol = 3 * target / math.sqrt(rx.y.size)
        record("noise_variance", var, target, tol, abs(var - target) <= tol)
    return results


def format_checks(results):
    lines = ["check,measured,target,tolerance,status"]
    for name, measured, target, tolerance, status in results:
        lines.append(f"{name},{measured:.6f},{target:.6f},{tolerance:.6f},{status}")
    return "\n".join(lines) + "\n"


def cmd_validate(args):
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, 0) or 0)
    if args.samples < 2:
        raise ConfigError("--samples must be >= 2")
    results = run_checks(seed, args.samples)
    sys.stdout.write(format_checks(results))
    if any(r[-1] == "WARN" for r in results):
        print(f"warning: fewer than {corrchan.MIN_STAT_SAMPLES} samples; failed checks reported as WARN",
              file=sys.stderr)
    return EXIT_RUNTIME if any(r[-1] == "FAIL" for r in results) else EXIT_OK


def cmd_plot(args):
    try:
        rows = read_csv(args.csv)
        script = gnuplot_script(rows, args.preset)
    except OSError as exc:
        raise ConfigError(f"{args.csv}: {exc.strerror}") from None
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from None
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(script)
    else:
        sys.stdout.write(script)
    return EXIT_OK


def cmd_presets(args):
    for name in PRESETS:
        print(f"{name}\t{PRESET_DESCRIPTIONS[name]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _bool_flag(parser, name, dest, help_text):
    group = parser.add_mutually_exclusive_group()
    group.add_argument(f"--{name}", dest=dest, action="store_const", const=True, help=help_text)
    group.add_argument(f"--no-{name}", dest=dest, action="store_const", const=False)


def build_parser():
    parser = argparse.ArgumentParser(prog="mimolink", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mimolink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a single operating point or a sweep")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--preset", help="figure preset (see `mimolink presets`)")
    run.add_argument("--from-manifest", help="re-run from a manifest and verify the output digest")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--subframes", type=int)
    run.add_argument("--capacity-samples", type=int)
    run.add_argument("--mode", choices=["sm", "td"])
    run.add_argument("--detector", choices=["zf", "mmse"])
    run.add_argument("--snr-db", type=float)
    run.add_argument("--scenario", choices=["poor", "rich"])
    run.add_argument("--k", type=float, help="Rician K-factor (linear, >= 0)")
    run.add_argument("--los-mode", choices=["normalized", "additive"])
    run.add_argument("--speed-kmh", type=float)
    run.add_argument("--carrier-hz", type=float)
    run.add_argument("--csi", choices=["subframe_start", "perfect"])
    _bool_flag(run, "harq", "harq", "enable HARQ retransmissions")
    run.add_argument("--max-retx", type=int)
    run.add_argument("--subcarriers", type=int)
    run.add_argument("--symbols", type=int)
    run.add_argument("--alpha", type=float, help="base-station correlation override")
    run.add_argument("--beta", type=float, help="mobile-station correlation override")
    run.add_argument("--capacity-method", choices=["flat", "subcarrier"])
    run.add_argument("--workers", type=int, help="worker processes (default: logical CPUs)")
    run.add_argument("--out", help="CSV output path (default: stdout)")
    run.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    run.add_argument("--quiet", action="store_true", help="no progress on stderr")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="statistical self-checks of the channel generator")
    val.add_argument("--seed", type=int)
    val.add_argument("--samples", type=int, default=100_000)
    val.set_defaults(func=cmd_validate)

    plot = sub.add_parser("plot", help="emit a gnuplot script for a sweep CSV")
    plot.add_argument("csv")
    plot.add_argument("--preset", choices=PRESETS)
    plot.add_argument("--out")
    plot.set_defaults(func=cmd_plot)

    presets = sub.add_parser("presets", help="list figure presets")
    presets.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

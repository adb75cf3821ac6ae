"""Figure presets, parameter grids, Monte Carlo orchestration and CSV output.

Random streams (see :mod:`mimolink.seeding`):

* channel of trial ``t``: ``(root, CHANNEL, t)``, shared by every grid point,
  so all points of a sweep see the same fading realisations;
* payload and noise of point ``i``, trial ``t``: ``(root, LINK, i, t)``;
* capacity draws: ``(root, CAPACITY)``, shared by every grid point.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import csv
import io
import itertools
import math
import os
import sys

import numpy as np

from mimolink import seeding
from mimolink.capacity import ergodic_capacity
from mimolink.errors import InvalidParameterError, MimolinkError
from mimolink.linkctl import CsiPolicy, LinkConfig, channel_for_window, harq_run

CSV_COLUMNS = (
    "preset", "mode", "detector", "scenario", "snr_db", "k_factor", "los_mode",
    "speed_kmh", "csi", "trials", "subframes", "seed",
    "throughput_fraction", "capacity_mean", "capacity_stderr",
)
AXIS_NAMES = ("snr_db", "k_factor", "speed_kmh", "scenario", "mode", "detector")

DEFAULT_TRIALS = 200
DEFAULT_SUBFRAMES = 50
DEFAULT_CAPACITY_SAMPLES = 10_000


class SweepError(MimolinkError):
    """A grid point failed; ``point`` identifies it."""

    def __init__(self, point, message):
        super().__init__(f"point {point}: {message}")
        self.point = point


@dataclass(frozen=True)
class SweepSpec:
    base: LinkConfig
    axes: tuple  # ((name, (values...)), ...)
    trials: int = DEFAULT_TRIALS
    subframes: int = DEFAULT_SUBFRAMES
    name: str = "custom"
    throughput: bool = True
    capacity: bool = False
    capacity_samples: int = DEFAULT_CAPACITY_SAMPLES
    output: str | None = None

    def __post_init__(self):
        axes = tuple((str(n), tuple(v)) for n, v in self.axes)
        object.__setattr__(self, "axes", axes)
        if not axes:
            raise InvalidParameterError("a sweep needs at least one axis")
        for name, values in axes:
            if name not in AXIS_NAMES:
                raise InvalidParameterError(f"unknown sweep axis {name!r}; valid: {', '.join(AXIS_NAMES)}")
            if not values:
                raise InvalidParameterError(f"axis {name!r} has no values")
        if self.trials < 1 or self.subframes < 1:
            raise InvalidParameterError("trials and subframes must be >= 1")
        if not (self.throughput or self.capacity):
            raise InvalidParameterError("a sweep must compute throughput, capacity or both")
        # every grid point must be a valid config
        for cfg in self.points():
            pass

    @property
    def seed(self):
        return self.base.seed

    def points(self):
        """Configs in row-major axis order (last axis fastest)."""
        names = [n for n, _ in self.axes]
        for combo in itertools.product(*(v for _, v in self.axes)):
            yield self.base.with_(**dict(zip(names, combo)))

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class SweepRow:
    preset: str
    config: LinkConfig
    trials: int
    subframes: int
    seed: int
    throughput_fraction: float = math.nan
    capacity_mean: float = math.nan
    capacity_stderr: float = math.nan

    def as_record(self):
        c = self.config
        return {
            "preset": self.preset,
            "mode": c.mode.value,
            "detector": c.detector.value,
            "scenario": c.scenario.value,
            "snr_db": c.snr_db,
            "k_factor": c.k_factor,
            "los_mode": c.los_mode.value,
            "speed_kmh": c.speed_kmh,
            "csi": c.csi.value,
            "trials": self.trials,
            "subframes": self.subframes,
            "seed": self.seed,
            "throughput_fraction": self.throughput_fraction,
            "capacity_mean": self.capacity_mean,
            "capacity_stderr": self.capacity_stderr,
        }


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _arange(start, stop, step):
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


SNR_TD = _arange(0, 30, 2)
# the uncoded SM link needs more SNR than the TD link to leave the floor
SNR_SM = _arange(0, 44, 2)
K_SWEEP = _arange(0, 6, 0.5)
SPEEDS_KMH = (3.0, 20.0, 40.0, 60.0)
SCENARIOS = ("poor", "rich")

_STATIC = dict(speed_kmh=3.0, csi=CsiPolicy.PERFECT)


def _preset_table():
    return {
        "fig2_1": dict(base=dict(mode="sm", k_factor=0.0, **_STATIC),
                       axes=(("scenario", SCENARIOS), ("snr_db", SNR_SM))),
        "fig2_2": dict(base=dict(mode="sm", k_factor=6.0, **_STATIC),
                       axes=(("scenario", SCENARIOS), ("snr_db", SNR_SM))),
        "fig2_3": dict(base=dict(mode="sm", scenario="poor", snr_db=14.0, **_STATIC),
                       axes=(("k_factor", K_SWEEP),)),
        "fig2_4": dict(base=dict(mode="td", k_factor=0.0, **_STATIC),
                       axes=(("scenario", SCENARIOS), ("snr_db", SNR_TD))),
        "fig2_5": dict(base=dict(mode="td", k_factor=6.0, **_STATIC),
                       axes=(("scenario", SCENARIOS), ("snr_db", SNR_TD))),
        "fig2_6": dict(base=dict(mode="td", scenario="poor", snr_db=7.0, **_STATIC),
                       axes=(("k_factor", K_SWEEP),)),
        "fig3_1": dict(base=dict(mode="sm", scenario="poor", csi=CsiPolicy.SUBFRAME_START),
                       axes=(("speed_kmh", SPEEDS_KMH), ("snr_db", SNR_SM))),
        "fig3_2": dict(base=dict(mode="td", scenario="poor", csi=CsiPolicy.SUBFRAME_START),
                       axes=(("speed_kmh", SPEEDS_KMH), ("snr_db", SNR_TD))),
        "fig4_1": dict(base=dict(mode="sm", **_STATIC),
                       axes=(("scenario", SCENARIOS), ("k_factor", (0.0, 6.0)), ("snr_db", _arange(0, 30, 2))),
                       throughput=False, capacity=True),
        "fig4_2": dict(base=dict(mode="td", **_STATIC),
                       axes=(("scenario", SCENARIOS), ("k_factor", (0.0, 6.0)), ("snr_db", _arange(0, 30, 2))),
                       throughput=False, capacity=True),
    }


PRESETS = tuple(_preset_table())


def figure_preset(name, seed=0, trials=DEFAULT_TRIALS, subframes=DEFAULT_SUBFRAMES, **overrides):
    """:class:`SweepSpec` for a named figure preset.

    ``overrides`` are applied to the base :class:`LinkConfig`.
    """
    table = _preset_table()
    if name not in table:
        raise InvalidParameterError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    entry = dict(table[name])
    base = LinkConfig(**{**entry.pop("base"), **overrides, "seed": seed})
    return SweepSpec(base=base, name=name, trials=trials, subframes=subframes, **entry)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def simulate_throughput(cfg, trials, subframes, point_index=0):
    """Aggregate throughput fraction of ``trials`` independent HARQ windows."""
    delivered = offered = 0
    for t in range(trials):
        channel_rng = seeding.derive(cfg.seed, seeding.CHANNEL, t)
        link_rng = seeding.derive(cfg.seed, seeding.LINK, point_index, t)
        stats, _ = harq_run(cfg, subframes, link_rng, channel_rng=channel_rng)
        delivered += stats.delivered_bits
        offered += stats.offered_bits
    return delivered / offered


def evaluate_point(spec, index, cfg):
    """Compute one :class:`SweepRow`."""
    fraction = mean = stderr = math.nan
    if spec.throughput:
        fraction = simulate_throughput(cfg, spec.trials, spec.subframes, index)
    if spec.capacity:
        rng = seeding.derive(cfg.seed, seeding.CAPACITY)
        mean, stderr = ergodic_capacity(cfg, spec.capacity_samples, rng)
    return SweepRow(
        preset=spec.name,
        config=cfg,
        trials=spec.trials,
        subframes=spec.subframes,
        seed=cfg.seed,
        throughput_fraction=fraction,
        capacity_mean=mean,
        capacity_stderr=stderr,
    )


def _evaluate_task(args):
    spec, index, cfg = args
    try:
        return evaluate_point(spec, index, cfg)
    except Exception as exc:  # surfaced with the point identity
        raise SweepError(index, f"{_describe(spec, cfg)}: {exc}") from exc


def _describe(spec, cfg):
    return ", ".join(f"{n}={getattr(cfg, n).value if hasattr(getattr(cfg, n), 'value') else getattr(cfg, n)}"
                     for n, _ in spec.axes)


def run_sweep(spec, workers=1, progress=True):
    """Evaluate every grid point of ``spec``; rows come back in grid order.

    ``workers > 1`` distributes points over a process pool.  Results do not
    depend on the worker count.
    """
    tasks = [(spec, i, cfg) for i, cfg in enumerate(spec.points())]
    total = len(tasks)
    rows = [None] * total

    def report(done, row):
        if progress:
            print(f"[{spec.name}] {done}/{total} {_describe(spec, row.config)}", file=sys.stderr, flush=True)

    if workers <= 1 or total == 1:
        for done, task in enumerate(tasks, 1):
            rows[task[1]] = _evaluate_task(task)
            report(done, rows[task[1]])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done, (task, row) in enumerate(zip(tasks, pool.map(_evaluate_task, tasks)), 1):
                rows[task[1]] = row
                report(done, row)
    if spec.output:
        write_csv(rows, spec.output)
    return rows


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if value == int(value) and abs(value) < 1e15:
            return f"{value:.1f}"
        return f"{value:.6f}"
    return str(value)


def format_csv(rows):
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        rec = row.as_record()
        buf.write(",".join(_fmt(rec[c]) for c in CSV_COLUMNS) + "\n")
    return buf.getvalue()


def write_csv(rows, path):
    text = format_csv(rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def read_csv(path):
    """Parse a sweep CSV into a list of dicts with numeric fields converted.

    Raises
    ------
    InvalidParameterError
        The header does not match the schema or the file has no rows.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidParameterError(f"{path}: empty CSV") from None
        if tuple(header) != CSV_COLUMNS:
            raise InvalidParameterError(f"{path}: header does not match the sweep schema")
        rows = []
        for lineno, raw in enumerate(reader, 2):
            if not raw:
                continue
            if len(raw) != len(CSV_COLUMNS):
                raise InvalidParameterError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(raw)}")
            rec = dict(zip(CSV_COLUMNS, raw))
            try:
                for key in ("snr_db", "k_factor", "speed_kmh", "throughput_fraction", "capacity_mean", "capacity_stderr"):
                    rec[key] = float(rec[key])
                for key in ("trials", "subframes", "seed"):
                    rec[key] = int(rec[key])
            except ValueError as exc:
                raise InvalidParameterError(f"{path}:{lineno}: {exc}") from None
            rows.append(rec)
    if not rows:
        raise InvalidParameterError(f"{path}: CSV has no data rows")
    return rows

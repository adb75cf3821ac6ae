"""Gnuplot script emitter for sweep CSVs (rendering is left to gnuplot)."""

from mimolink.errors import InvalidParameterError

# preset -> (x column, y column, series columns)
_AXES = {
    "fig2_1": ("snr_db", "throughput_fraction", ("scenario",)),
    "fig2_2": ("snr_db", "throughput_fraction", ("scenario",)),
    "fig2_3": ("k_factor", "throughput_fraction", ("scenario",)),
    "fig2_4": ("snr_db", "throughput_fraction", ("scenario",)),
    "fig2_5": ("snr_db", "throughput_fraction", ("scenario",)),
    "fig2_6": ("k_factor", "throughput_fraction", ("scenario",)),
    "fig3_1": ("snr_db", "throughput_fraction", ("speed_kmh",)),
    "fig3_2": ("snr_db", "throughput_fraction", ("speed_kmh",)),
    "fig4_1": ("snr_db", "capacity_mean", ("scenario", "k_factor")),
    "fig4_2": ("snr_db", "capacity_mean", ("scenario", "k_factor")),
}

_LABELS = {
    "snr_db": "SNR [dB]",
    "k_factor": "Rician K-factor",
    "throughput_fraction": "Throughput fraction",
    "capacity_mean": "Capacity [bit/s/Hz]",
}


def _series_label(cols, key):
    parts = []
    for col, value in zip(cols, key):
        if col == "speed_kmh":
            parts.append(f"{value:g} km/h")
        elif col == "k_factor":
            parts.append(f"K={value:g}")
        else:
            parts.append(str(value))
    return " ".join(parts)


def gnuplot_script(rows, preset=None):
    """Return gnuplot text plotting ``rows`` (as from :func:`mimolink.sweep.read_csv`).

    ``preset`` defaults to the ``preset`` column of the first row.
    """
    if not rows:
        raise InvalidParameterError("no rows to plot")
    preset = preset or rows[0]["preset"]
    if preset not in _AXES:
        raise InvalidParameterError(f"no plot layout for preset {preset!r}; valid: {', '.join(_AXES)}")
    x, y, series_cols = _AXES[preset]
    series = {}
    for row in rows:
        key = tuple(row[c] for c in series_cols)
        series.setdefault(key, []).append((row[x], row[y]))

    lines = [
        f'set title "{preset}"',
        f'set xlabel "{_LABELS[x]}"',
        f'set ylabel "{_LABELS[y]}"',
        "set grid",
        "set key outside right",
    ]
    if y == "throughput_fraction":
        lines.append("set yrange [0:1]")
    plots = []
    for i, (key, points) in enumerate(series.items()):
        lines.append(f"$s{i} << EOD")
        lines.extend(f"{px:g} {py:.6g}" for px, py in sorted(points))
        lines.append("EOD")
        plots.append(f'$s{i} using 1:2 with linespoints title "{_series_label(series_cols, key)}"')
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"

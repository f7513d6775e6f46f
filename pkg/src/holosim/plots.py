"""Figure rendering for scenario outputs.

Each scenario's report path renders one or two PNG files next to its CSV
tables.  Rendering is deterministic (fixed style, fixed dpi), so the
figures participate in the manifest checksums like every other output.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.4,
    "lines.linewidth": 1.4,
    "lines.markersize": 4.5,
    "legend.fontsize": 9,
    "savefig.dpi": 150,
}

_MODEL_LABELS = {
    "holo": "ideal (no efficiency loss)",
    "mdf": "efficiency-bounded",
    "pol": "polarized",
    "measured": "measured",
}


def _grouped(rows, keys):
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row.get(k) for k in keys), []).append(row)
    return groups


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)


def _sweep_figure(rows, x_key, x_label, group_keys, path, log_x=False, invert_x=False):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for group, members in sorted(_grouped(rows, group_keys).items(), key=lambda kv: str(kv[0])):
            members = sorted(members, key=lambda r: r[x_key])
            x = [r[x_key] for r in members]
            y = [r["mean_bits"] for r in members]
            err = [r["ci95_bits"] for r in members]
            label = ", ".join(str(g) for g in group)
            label = _MODEL_LABELS.get(label, label)
            ax.errorbar(x, y, yerr=err, marker="o", capsize=2, label=label)
        if log_x:
            ax.set_xscale("log")
        if invert_x:
            ax.invert_xaxis()
        ax.set_xlabel(x_label)
        ax.set_ylabel("rate [bit/s/Hz]")
        if len(_grouped(rows, group_keys)) > 1:
            ax.legend()
        _save(fig, path)


def _eigen_figure(rows, path):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for (n_receive, compensated), members in sorted(
            _grouped(rows, ["n_receive", "compensated"]).items()
        ):
            members = sorted(members, key=lambda r: r["rank_index"])
            style = "-" if compensated else "--"
            ax.semilogy(
                [r["rank_index"] for r in members],
                [max(r["eigenvalue"], 1e-300) for r in members],
                style,
                marker="o",
                label=f"N_R={n_receive}{' comp.' if compensated else ''}",
            )
        ax.set_xlabel("eigenvalue index")
        ax.set_ylabel("eigenvalue of H H^H")
        ax.legend()
        _save(fig, path)


def _efficiency_figure(rows, path):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        spacings = np.linspace(0.05, 0.9, 200)
        from .efficiency import transmission_efficiency_bound

        ax.plot(
            spacings,
            [100.0 * transmission_efficiency_bound(d, d) for d in spacings],
            label="square grid bound",
        )
        for row in rows:
            ax.plot(
                row["spacing_x_wl"],
                row["chi_ub_percent"],
                "o",
                label=f"dx={row['spacing_x_wl']}, dy={row['spacing_y_wl']}",
            )
        ax.set_xlabel("element spacing [wavelengths]")
        ax.set_ylabel("transmission efficiency bound [%]")
        ax.legend()
        _save(fig, path)


def render_scenario_figures(scenario, rows, extra_tables, out_dir):
    """Render the figures of one scenario; returns (name, path) pairs."""
    produced = []

    def add(name, renderer, *args):
        path = out_dir / name
        renderer(*args, path)
        produced.append((name, path))

    if scenario in ("fig8a_spacing_sweep",):
        add("results.png", _sweep_figure, rows, "spacing_wl", "element spacing [wavelengths]", ["model", "allocation"])
    elif scenario == "fig8b_xpr_sweep":
        pol = [r for r in rows if r["model"] == "pol"]
        add(
            "results.png",
            lambda rs, path: _sweep_figure(rs, "kappa", "cross-polarization ratio kappa", ["model"], path, log_x=True),
            pol,
        )
    elif scenario == "fig11_dipole_arrays":
        add("results.png", _sweep_figure, rows, "spacing_wl", "spacing d_x [wavelengths]", ["efficiency_mode"])
    elif scenario == "fig13_mu_zf_mrt":
        add("results.png", _sweep_figure, rows, "spacing_wl", "element spacing [wavelengths]", ["model", "allocation"])
    elif scenario == "fig14_mu_iwf":
        add("results.png", _sweep_figure, rows, "spacing_wl", "BS spacing d_x [wavelengths]", ["efficiency_mode"])
    elif scenario == "postprocess_pipeline":
        add(
            "results.png",
            lambda rs, path: _sweep_figure(rs, "n_receive", "receive elements", ["compensated", "allocation"], path, log_x=True),
            rows,
        )
        if "eigen_spectra.csv" in extra_tables:
            add("eigen_spectra.png", _eigen_figure, extra_tables["eigen_spectra.csv"][1])
    elif scenario == "efficiency_tables":
        add("results.png", _efficiency_figure, rows)
    return produced

"""
Plot data: gnuplot-readable .dat columns plus an SVG rendering of the same data.

SVGs carry no timestamp and use a fixed hash salt, so identical results give
byte-identical files.
"""

import logging
import os
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from utils.results import format_value

logger = logging.getLogger(__name__)

PLOT_KINDS = ("p12", "tritronquee", "poles", "ladder")
SVG_METADATA = {"Date": None}

plt.rcParams["svg.hashsalt"] = "wavelab"


def write_dat(path: str, header: Sequence[str], columns: Sequence[Sequence[float]], blocks: int = 1) -> str:
    """
    Whitespace separated columns under a '#' header line.

    ``blocks`` > 1 splits the rows into that many equal blocks separated by a
    blank line (gnuplot's grid format for heat maps).
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    rows = list(zip(*columns))
    size = len(rows) // blocks if blocks > 1 else len(rows)
    with open(path, "w", encoding="utf-8") as f:
        f.write("# " + " ".join(header) + "\n")
        for index, row in enumerate(rows):
            if blocks > 1 and index and index % size == 0:
                f.write("\n")
            f.write(" ".join(format_value(float(value)) for value in row) + "\n")
    return path


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def _p12_plots(results: Dict, out_dir: str) -> List[str]:
    files = []
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for profile in results["profiles"]:
        name = f"p12_T{profile.T:+.3f}"
        files.append(write_dat(os.path.join(out_dir, f"{name}.dat"), ["X", "U", "U_X", "U_XX"],
                               [profile.X, profile.Y[0], profile.Y[1], profile.Y[2]]))
        ax.plot(profile.X, profile.Y[0], lw=1.2, label=f"T = {profile.T:g}")
    ax.set_xlabel("X")
    ax.set_ylabel("U(X, T)")
    ax.set_title("P_I^2 profiles")
    ax.legend()
    files.append(_save(fig, os.path.join(out_dir, "p12.svg")))
    return files


def _tritronquee_plots(results: Dict, out_dir: str) -> List[str]:
    profile = results["profile"]
    files = []
    fig, (re_ax, im_ax) = plt.subplots(1, 2, figsize=(10, 4))
    for ray in profile.rays:
        rho = np.abs(ray.Z)
        files.append(write_dat(os.path.join(out_dir, f"tritronquee_ray{ray.angle:+.4f}.dat"),
                               ["rho", "re_W", "im_W", "residual"], [rho, ray.W.real, ray.W.imag, ray.residual]))
        re_ax.plot(rho, ray.W.real, lw=1.0, label=f"arg Z = {ray.angle:.3f}")
        im_ax.plot(rho, ray.W.imag, lw=1.0)
    re_ax.set_title("Re W0")
    im_ax.set_title("Im W0")
    for ax in (re_ax, im_ax):
        ax.set_xlabel("|Z|")
    re_ax.legend(fontsize="small")
    files.append(_save(fig, os.path.join(out_dir, "tritronquee.svg")))
    return files


def _pole_plots(results: Dict, out_dir: str) -> List[str]:
    poles = results["poles"]
    centers = 0.5 * (poles.radii[:-1] + poles.radii[1:])
    angle_grid, radius_grid = np.meshgrid(poles.angles, centers, indexing="ij")
    files = [write_dat(os.path.join(out_dir, "poles.dat"), ["angle", "radius", "hit"],
                       [angle_grid.ravel(), radius_grid.ravel(), poles.hits.astype(float).ravel()],
                       blocks=len(poles.angles))]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    mesh = ax.pcolormesh(centers, poles.angles, poles.hits.astype(float), shading="nearest", cmap="Greys",
                         vmin=0.0, vmax=1.0)
    fig.colorbar(mesh, ax=ax, label="pole event")
    ax.set_xlabel("|Z|")
    ax.set_ylabel("arg Z")
    ax.set_title(poles.verdict, fontsize="small")
    files.append(_save(fig, os.path.join(out_dir, "poles.svg")))
    return files


def _ladder_plots(results: Dict, out_dir: str) -> List[str]:
    ladder = results["ladder"]
    eps = np.array([m.epsilon for m in ladder.members])
    amp = np.array([m.amplitude for m in ladder.members])
    fit = ladder.amplitude_fit
    expected = ladder.expected["amplitude"]
    files = [write_dat(os.path.join(out_dir, "ladder_fit.dat"), ["epsilon", "amplitude"], [eps, amp])]

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(eps, amp, "o", label="runs")
    # both lines pass through the geometric mean of the data
    anchor_e, anchor_a = np.exp(np.mean(np.log(eps))), np.exp(np.mean(np.log(amp)))
    line = np.geomspace(eps.min(), eps.max(), 50)
    ax.loglog(line, anchor_a * (line / anchor_e) ** fit.exponent, "-",
              label=f"fit slope {fit.exponent:.4f} +- {fit.stderr:.4f}")
    ax.loglog(line, anchor_a * (line / anchor_e) ** expected, "--", label=f"reference slope {expected:.4f}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("amplitude")
    ax.legend()
    files.append(_save(fig, os.path.join(out_dir, "ladder_fit.svg")))

    comparisons = ladder.comparisons
    if not comparisons:
        return files
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for comparison in comparisons:
        tag = f"eps{comparison.epsilon:.6g}"
        if comparison.kind == "I":
            coordinate = comparison.coordinate
            columns = [coordinate, comparison.simulated, comparison.predicted]
            header = ["X", "scaled", "profile"]
            ax.plot(coordinate, comparison.simulated, lw=1.0, label=f"eps = {comparison.epsilon:g}")
        else:
            coordinate = np.abs(comparison.coordinate - comparison.coordinate[0])
            columns = [coordinate, comparison.simulated.real, comparison.simulated.imag,
                       comparison.predicted.real, comparison.predicted.imag]
            header = ["arclength", "re_scaled", "im_scaled", "re_W", "im_W"]
            ax.plot(coordinate, comparison.simulated.real, lw=1.0, label=f"Re, eps = {comparison.epsilon:g}")
        files.append(write_dat(os.path.join(out_dir, f"overlay_{tag}.dat"), header, columns))
    last = comparisons[-1]
    if last.kind == "I":
        ax.plot(last.coordinate, last.predicted, "k--", lw=1.5, label="Painleve profile")
    else:
        ax.plot(np.abs(last.coordinate - last.coordinate[0]), last.predicted.real, "k--", lw=1.5,
                label="Re W0")
    ax.set_xlabel("rescaled coordinate")
    ax.legend(fontsize="small")
    files.append(_save(fig, os.path.join(out_dir, "overlay.svg")))
    return files


PLOTTERS = {
    "p12": _p12_plots,
    "tritronquee": _tritronquee_plots,
    "poles": _pole_plots,
    "ladder": _ladder_plots,
}


def emit_plotdata(results: Dict, kind: str, out_dir: str) -> List[str]:
    """
    Write the .dat and .svg files for one result set.

    ``results`` holds 'profiles' (p12), 'profile' (tritronquee), 'poles'
    (poles) or 'ladder' (ladder). Returns the written paths.
    """
    if kind not in PLOTTERS:
        raise ValueError(f"unknown plot kind '{kind}', expected one of {', '.join(PLOT_KINDS)}")
    plot_dir = os.path.join(out_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    files = PLOTTERS[kind](results, plot_dir)
    logger.info(f"📊 wrote {len(files)} plot files for {kind} to {plot_dir}")
    return files

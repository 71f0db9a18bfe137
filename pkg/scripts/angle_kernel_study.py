#!/usr/bin/env python3
"""Sweep the angle-kernel approximation quality over kappa and N.

Writes one CSV of kernel curves per (kappa, N) pair plus a summary table
of sup-norm approximation errors, the data behind the usual
"target vs truncated series" comparison plots.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from covagg import AngleMapConfig, fourier_coeffs, truncated_kernel, vm_kernel


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="kernel_study", help="output directory")
    parser.add_argument("--kappas", type=float, nargs="+", default=[2.0, 8.0, 32.0])
    parser.add_argument("--nfreqs", type=int, nargs="+", default=[1, 3, 10])
    parser.add_argument("--grid", type=int, default=1024)
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    deltas = np.linspace(-np.pi, np.pi, args.grid)

    summary = []
    for kappa in args.kappas:
        target = vm_kernel(deltas, kappa)
        for n_freq in args.nfreqs:
            coeffs = fourier_coeffs(AngleMapConfig(kappa=kappa, n_freq=n_freq))
            approx = truncated_kernel(deltas, coeffs)
            sup_err = float(np.max(np.abs(approx - target)))
            summary.append((kappa, n_freq, sup_err))
            path = out_dir / f"kernel_kappa{kappa:g}_n{n_freq}.csv"
            with open(path, "w", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(("delta", "k_vm", "k_bar"))
                for d, t, a in zip(deltas, target, approx):
                    writer.writerow((f"{d:.8f}", f"{t:.10f}", f"{a:.10f}"))
            print(f"kappa={kappa:<6g} N={n_freq:<3d} sup error {sup_err:.3e} -> {path}")

    with open(out_dir / "summary.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("kappa", "n_freq", "sup_error"))
        writer.writerows(summary)
    print(f"summary -> {out_dir / 'summary.csv'}")


if __name__ == "__main__":
    main()

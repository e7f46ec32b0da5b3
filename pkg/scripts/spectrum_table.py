#!/usr/bin/env python3
"""Closed-form vs discrete spectrum of the linearized operator.

Prints, per harmonic index l, the discrete eigenvalues of L_{l,eta_cr} on
the default grid next to the closed-form lambda_{lk} and the essential
threshold, for a chosen (n, m).

Usage: python scripts/spectrum_table.py [n] [m]
"""

import sys

from fastdiff_lab import closedform, geometry, linop


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    m = float(sys.argv[2]) if len(sys.argv) > 2 else 2.0 / 3.0
    params = closedform.derive_params(n, m)
    grid = geometry.make_grid(12.0, 1200)
    print(f"n={n} m={m}: p={params.p:.6g}, eta_cr={params.eta_cr:.6g}, "
          f"lambda_0^cont={params.lambda_cont:.6g}")
    ell = 0
    while True:
        if params.n == 1 and ell > 1:
            break
        modes = [md for md, _ in closedform.admissible_modes(params.eta_cr, params)
                 if md.ell == ell]
        if not modes:
            break
        op = linop.assemble(ell, params.eta_cr, grid, params)
        rep = linop.top_eigenvalues(op, len(modes) + 2)
        print(f"\nl = {ell} (threshold {rep.threshold:.6g})")
        print(f"  {'discrete':>14} {'closed form':>14} {'error':>11}  mode")
        for e in rep.entries:
            if e.mode is not None:
                print(f"  {e.value:14.8f} {e.closed_form:14.8f} "
                      f"{e.error:11.2e}  ({e.mode.ell},{e.mode.k})")
            else:
                tag = "continuum artifact" if e.continuum_artifact else "unmatched"
                print(f"  {e.value:14.8f} {'-':>14} {'-':>11}  {tag}")
        ell += 1


if __name__ == "__main__":
    main()

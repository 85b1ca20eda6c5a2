#!/usr/bin/env python3
"""Reference external despeckler: boxcar mean of |s|^2, mirror boundary.

Usage: ext_boxcar.py [--size N] INPUT.mcslc OUTPUT.refl
Deliberately independent of the package filters (plain scipy uniform_filter).
"""
import argparse
import sys

import numpy as np
from scipy import ndimage

from muchapro.io import read_mcslc_raw, write_reflectivity


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=5)
    ap.add_argument("input")
    ap.add_argument("output")
    args = ap.parse_args(argv)
    s = read_mcslc_raw(args.input).astype(np.complex128)[0]
    v = ndimage.uniform_filter(np.abs(s) ** 2, args.size, mode="mirror")
    write_reflectivity(args.output, v)
    return 0


if __name__ == "__main__":
    sys.exit(main())
